//! Renders a short vowel with both synthesizer topologies and saves the
//! parameters in the file format the CLI reads.
//!
//! `cargo run --release --example synth_render -- out_dir`

use std::path::PathBuf;

use tvlp::io::{write_wav, ParamFile, WavFormat};
use tvlp::params::unsquash_reflection;
use tvlp::source::Wavetable;
use tvlp::synth::{render, ContextOptions, FilterRealization, SynthContext, SynthMode, SynthParams};

/// An /a/-like tract: fixed reflection coefficients with a little vibrato
/// on f0.
fn vowel(frames: usize, mode: SynthMode) -> SynthParams<f64> {
    let f0 = (0..frames).map(|f| 120.0 + 4.0 * (f as f64 * 0.3).sin()).collect();
    let mut p = SynthParams::init(f0, 240, 12, mode, 0);
    let k = [-0.6, 0.5, 0.3, -0.2, 0.25, -0.1, 0.1, 0.05, -0.05, 0.05, 0.0, 0.0];
    p.reflection = (0..frames)
        .flat_map(|_| k.iter().map(|&k| unsquash_reflection(k)))
        .collect();
    p
}

fn main() -> tvlp::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    std::fs::create_dir_all(&dir)?;
    let wt = Wavetable::build_default()?;
    let len = 24000;
    for (name, mode) in [("sf", SynthMode::SourceFilter), ("hpn", SynthMode::HarmonicPlusNoise)] {
        let p = vowel(len / 240, mode);
        let ctx = SynthContext::new(&wt, &p, len, &ContextOptions::default())?;
        let y = render(&p, &ctx, &FilterRealization::SampleWise)?;
        let peak = y.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
        write_wav(
            &dir.join(format!("{name}.wav")),
            &y.samples,
            24000.0,
            WavFormat::Float32,
        )?;
        ParamFile::new(p, 24000.0, len, 0).save(&dir.join(format!("{name}.json")))?;
        println!("{name}: peak {peak:.3}");
    }
    println!("wrote renders and parameter files to {}", dir.display());
    Ok(())
}
