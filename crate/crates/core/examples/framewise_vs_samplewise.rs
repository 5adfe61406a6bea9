//! The same parameters rendered with per-sample filters and with
//! overlap-added frame filters. After a frame-wise fit the frame-wise
//! render scores better than the sample-wise one: the fitted parameters
//! have absorbed the overlap-add.

use tvlp::fit::{fit, score, FitConfig, FitMode};
use tvlp::scenario::known_target;
use tvlp::source::Wavetable;
use tvlp::synth::FilterRealization;

fn main() -> tvlp::Result<()> {
    let wt = Wavetable::build_default()?;
    let cfg = FitConfig {
        mode: FitMode::Framewise,
        steps: 200,
        ..FitConfig::default()
    };
    let kt = known_target(&wt, 12000, &cfg, 0.12)?;
    let framewise = cfg.realization()?;
    let sample_wise = FilterRealization::SampleWise;
    println!(
        "before fitting: frame-wise {:.4}, sample-wise {:.4}",
        score(&kt.init, &kt.target, &wt, &cfg, &framewise)?,
        score(&kt.init, &kt.target, &wt, &cfg, &sample_wise)?
    );
    let out = fit(&kt.target, kt.f0.clone(), &wt, &cfg, None, |_, _| {})?;
    println!(
        "after {} frame-wise steps: frame-wise {:.4}, sample-wise {:.4}",
        cfg.steps,
        score(&out.params, &kt.target, &wt, &cfg, &framewise)?,
        score(&out.params, &kt.target, &wt, &cfg, &sample_wise)?
    );
    Ok(())
}
