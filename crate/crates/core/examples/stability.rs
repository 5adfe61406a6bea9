//! Interpolating direct-form rows between frames can leave the stable
//! region; interpolating reflection coefficients cannot. Renders a
//! high-order filter whose frames jump around and compares the two.

use rand::{Rng, SeedableRng};
use tvlp::params::unsquash_reflection;
use tvlp::source::Wavetable;
use tvlp::synth::{render, ContextOptions, FilterRealization, SynthContext, SynthMode, SynthParams};

fn main() -> tvlp::Result<()> {
    let (len, hop, order) = (24000, 240, 22);
    let frames = len / hop;
    let mut g = rand_chacha::ChaCha20Rng::seed_from_u64(3);
    let mut p: SynthParams<f64> = SynthParams::init(vec![140.0; frames], hop, order, SynthMode::SourceFilter, 3);
    for k_max in [0.3, 0.5, 0.7] {
        p.reflection = (0..frames * order)
            .map(|_| unsquash_reflection(g.random_range(-k_max..k_max)))
            .collect();
        let wt = Wavetable::build_default()?;
        let ctx = SynthContext::new(&wt, &p, len, &ContextOptions::default())?;
        let peak = |filter| match render(&p, &ctx, &filter) {
            Ok(y) => y.samples.iter().map(|v| v.abs()).fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        };
        println!(
            "|k| < {k_max}: direct-form peak {:.2e}, reflection peak {:.2e}",
            peak(FilterRealization::SampleWise),
            peak(FilterRealization::SampleWiseReflection)
        );
    }
    Ok(())
}
