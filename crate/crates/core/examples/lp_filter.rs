//! Time-varying all-pole filtering and its analytic adjoints.
//!
//! Runs a coefficient track that glides between two resonances, then pulls
//! an output gradient back with `lp_backward_tv` and compares it with the
//! unrolled per-sample graph.

use tvlp::lpc::{lp_backward_tv, lp_forward_tv};
use tvlp::oracle::naive_backward;
use tvlp::params::reflection_to_lpc;
use tvlp::CoeffTrack;

fn main() -> tvlp::Result<()> {
    let len = 400;
    let start = reflection_to_lpc(&[-0.9, 0.8])?;
    let end = reflection_to_lpc(&[0.2, 0.85])?;
    let rows: Vec<f64> = (0..len)
        .flat_map(|t| {
            let w = t as f64 / (len - 1) as f64;
            start
                .iter()
                .zip(&end)
                .map(move |(a, b)| (1.0 - w) * a + w * b)
                .collect::<Vec<_>>()
        })
        .collect();
    let a = CoeffTrack::new(2, rows)?;

    let mut e = vec![0.0; len];
    for t in (0..len).step_by(80) {
        e[t] = 1.0;
    }
    let s = lp_forward_tv(&e, &a, None)?;
    let peak = s.iter().map(|v| v.abs()).fold(0.0, f64::max);
    println!("impulse train through a gliding resonance: peak output {peak:.3}");

    // gradient of sum(s^2) / 2
    let grad_s = s.clone();
    let (grad_e, grad_a) = lp_backward_tv(&grad_s, &a, &s)?;
    let (naive_e, naive_a) = naive_backward(&e, &a, &grad_s)?;
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    println!("excitation adjoint vs unrolled graph: {:.2e}", diff(&grad_e, &naive_e));
    println!(
        "coefficient adjoint vs unrolled graph: {:.2e}",
        diff(grad_a.as_slice(), naive_a.as_slice())
    );
    Ok(())
}
