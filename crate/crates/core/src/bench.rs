//! Wall-clock comparison of the analytic LP backward pass against the
//! reference implementations.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lpc::{lp_backward_tv, lp_forward_tv, CoeffTrack};
use crate::oracle::{grad_e_by_impulse_sweep, naive_backward};
use crate::verify::random_stable_row;

pub const MIN_BENCH_LEN: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    /// Unrolled scalar graph.
    Naive,
    /// One impulse response per time step, excitation adjoint only.
    ImpulseSweep,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Naive => "naive",
            Method::ImpulseSweep => "impulse_sweep",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub len: usize,
    pub order: usize,
    pub method: Method,
    pub median_seconds: f64,
}

/// A filtering problem of the given size with a fresh stable row every
/// sample and unit-variance excitation and output gradient.
pub struct Problem {
    pub e: Vec<f64>,
    pub a: CoeffTrack<f64>,
    pub s: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Problem {
    pub fn random(len: usize, order: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<f64> = (0..len).flat_map(|_| random_stable_row(&mut rng, order, 0.9)).collect();
        let a = CoeffTrack::new(order, rows)?;
        let e: Vec<f64> = StandardNormal.sample_iter(&mut rng).take(len).collect();
        let grad: Vec<f64> = StandardNormal.sample_iter(&mut rng).take(len).collect();
        let s = lp_forward_tv(&e, &a, None)?;
        Ok(Self { e, a, s, grad })
    }

    pub fn run(&self, method: Method) -> Result<()> {
        match method {
            Method::Analytic => lp_backward_tv(&self.grad, &self.a, &self.s).map(drop),
            Method::Naive => naive_backward(&self.e, &self.a, &self.grad).map(drop),
            Method::ImpulseSweep => grad_e_by_impulse_sweep(&self.grad, &self.a).map(drop),
        }
    }
}

/// Median wall time of `repeats` runs after one warm-up run.
pub fn median_seconds(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub len: usize,
    pub order: usize,
    pub repeats: usize,
    /// The impulse sweep is quadratic in length; it runs at `min(len, cap)`
    /// and twice that.
    pub sweep_len_cap: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            len: 24000,
            order: 22,
            repeats: 5,
            sweep_len_cap: 2048,
            seed: 0,
        }
    }
}

/// Times every method at `len` and `2 len` (the sweep at its capped length
/// and double).
pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.len < MIN_BENCH_LEN {
        return Err(Error::InvalidArgument(format!(
            "bench length must be at least {MIN_BENCH_LEN}, got {}",
            cfg.len
        )));
    }
    if cfg.order == 0 {
        return Err(Error::InvalidArgument("bench order must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let sweep = cfg.len.min(cfg.sweep_len_cap.max(1));
    for (method, base) in [
        (Method::Analytic, cfg.len),
        (Method::Naive, cfg.len),
        (Method::ImpulseSweep, sweep),
    ] {
        for len in [base, 2 * base] {
            let p = Problem::random(len, cfg.order, cfg.seed)?;
            let median_seconds = median_seconds(cfg.repeats, || p.run(method))?;
            log::info!("{} T={len}: {median_seconds:.4} s", method.name());
            rows.push(BenchRow {
                len,
                order: cfg.order,
                method,
                median_seconds,
            });
        }
    }
    Ok(rows)
}

/// Time at `2 len` over time at `len` for one method.
pub fn doubling_ratio(rows: &[BenchRow], method: Method) -> Option<f64> {
    let mut times: Vec<&BenchRow> = rows.iter().filter(|r| r.method == method).collect();
    times.sort_by_key(|r| r.len);
    match times.as_slice() {
        [a, b, ..] if b.len == 2 * a.len => Some(b.median_seconds / a.median_seconds),
        _ => None,
    }
}

/// Median time of `slow` over `fast` at the same length.
pub fn speedup(rows: &[BenchRow], len: usize, fast: Method, slow: Method) -> Option<f64> {
    let find = |m| {
        rows.iter()
            .find(|r| r.method == m && r.len == len)
            .map(|r| r.median_seconds)
    };
    Some(find(slow)? / find(fast)?)
}

pub fn write_csv(rows: &[BenchRow], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["len", "order", "method", "median_seconds", "ratio_to_analytic"])
        .map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        let ratio = speedup(rows, r.len, Method::Analytic, r.method).map_or(String::new(), |x| format!("{x:.3}"));
        out.write_record([
            r.len.to_string(),
            r.order.to_string(),
            r.method.name().to_string(),
            format!("{:.6e}", r.median_seconds),
            ratio,
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_lengths_are_rejected() {
        let cfg = BenchConfig {
            len: 100,
            ..BenchConfig::default()
        };
        assert!(matches!(run(&cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn small_bench_produces_all_rows() {
        let cfg = BenchConfig {
            len: 1024,
            order: 4,
            repeats: 1,
            sweep_len_cap: 256,
            seed: 3,
        };
        let rows = run(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(doubling_ratio(&rows, Method::ImpulseSweep).is_some());
        assert!(speedup(&rows, 1024, Method::Analytic, Method::Naive).is_some());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }
}
