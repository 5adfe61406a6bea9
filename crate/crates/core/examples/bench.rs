//! Backward-pass timings: analytic adjoints against the unrolled graph and
//! the quadratic impulse sweep, at a length and twice that length.
//!
//! `cargo run --release --example bench -- 24000`

use tvlp::bench::{doubling_ratio, run, speedup, write_csv, BenchConfig, Method};

fn main() -> tvlp::Result<()> {
    let len = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8000);
    let cfg = BenchConfig {
        len,
        repeats: 3,
        ..BenchConfig::default()
    };
    let rows = run(&cfg)?;
    write_csv(&rows, std::io::stdout().lock())?;
    for m in [Method::Analytic, Method::Naive, Method::ImpulseSweep] {
        if let Some(r) = doubling_ratio(&rows, m) {
            println!("{:>13}: time ratio when T doubles {r:.2}", m.name());
        }
    }
    if let Some(s) = speedup(&rows, len, Method::Analytic, Method::Naive) {
        println!("analytic is {s:.0}x faster than the unrolled graph at T={len}");
    }
    Ok(())
}
