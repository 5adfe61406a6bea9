//! Analysis by synthesis on a target whose parameters are known: fits from
//! the default start and reports how close the recovered vocal-tract
//! envelope gets to the truth.
//!
//! `cargo run --release --example fit_known_target -- 500`

use tvlp::fit::{fit, FitConfig};
use tvlp::scenario::{envelope_rmse_db, known_target};
use tvlp::source::Wavetable;

fn main() -> tvlp::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let cfg = FitConfig {
        steps,
        seed: 1,
        ..FitConfig::default()
    };
    let wt = Wavetable::build_default()?;
    let kt = known_target(&wt, 24000, &cfg, 0.12)?;
    println!(
        "envelope error at the start: {:.2} dB",
        envelope_rmse_db(&kt.init, &kt.truth, 257)?
    );

    let every = (steps / 10).max(1);
    let out = fit(&kt.target, kt.f0.clone(), &wt, &cfg, None, |step, loss| {
        if step % every == 0 {
            println!("step {step:5}  loss {loss:.4}");
        }
    })?;
    println!(
        "loss {:.4} -> {:.4} in {:.1} s; envelope error {:.2} dB",
        out.initial_loss,
        out.best_loss,
        out.seconds,
        envelope_rmse_db(&out.params, &kt.truth, 257)?
    );
    Ok(())
}
