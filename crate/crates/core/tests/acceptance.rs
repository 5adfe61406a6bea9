//! End-to-end acceptance run. Every criterion prints one PASS/FAIL line; the
//! test fails if any of them does. Criteria run one after another so the
//! timing measurements are not disturbed by the others.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use tvlp::bench::{self, BenchConfig, Method};
use tvlp::fit::{fit, score, FitConfig, FitMode};
use tvlp::loss::{mss_loss, MssConfig, Stft};
use tvlp::params::{pole_moduli, unsquash_reflection};
use tvlp::scenario::{envelope_rmse_db, known_target};
use tvlp::source::Wavetable;
use tvlp::synth::{render, ContextOptions, FilterRealization, SynthContext, SynthMode, SynthParams};
use tvlp::verify::{self, random_stable_row, CheckOutcome, Fault};

struct Report {
    lines: Vec<(String, bool)>,
}

impl Report {
    fn record(&mut self, name: &str, passed: bool, detail: String, started: Instant) {
        let line = format!(
            "{} {name}: {detail} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push((line, passed));
    }
}

/// Outcome against a tolerance stated here, not the one the check carries.
fn within(o: &CheckOutcome, tol: f64) -> bool {
    o.max_error < tol
}

fn gaussian(g: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| g.sample(StandardNormal)).collect()
}

fn gradients(r: &mut Report) {
    let t = Instant::now();
    let mut g = ChaCha20Rng::seed_from_u64(101);
    let tv = verify::check_tv_fd(&mut g, 200, 64, 6, Fault::default()).unwrap();
    let ti = verify::check_ti_fd(&mut g, 200, 64, 6, Fault::default()).unwrap();
    r.record(
        "finite-difference gradients",
        within(&tv, 1e-5) && within(&ti, 1e-5),
        format!(
            "time-varying {:.2e}, time-invariant {:.2e} over 200 instances each, limit 1e-5",
            tv.max_error, ti.max_error
        ),
        t,
    );
}

fn naive_equivalence(r: &mut Report) {
    let t = Instant::now();
    let mut g = ChaCha20Rng::seed_from_u64(102);
    let o = verify::check_naive(&mut g, 100, 32, 4, Fault::default()).unwrap();
    r.record(
        "unrolled-graph equivalence",
        within(&o, 1e-12),
        format!("max abs difference {:.2e} over 100 instances, limit 1e-12", o.max_error),
        t,
    );
}

fn expansion(r: &mut Report) {
    let t = Instant::now();
    let mut g = ChaCha20Rng::seed_from_u64(103);
    let taps = verify::check_expansion_taps(&mut g, 100, 16, 6, 8).unwrap();
    let ge = verify::check_grad_e_expansion(&mut g, 100, 16, 6, Fault::default()).unwrap();
    r.record(
        "impulse-response expansion",
        within(&taps, 1e-12) && within(&ge, 1e-10),
        format!(
            "taps {:.2e} (limit 1e-12), excitation adjoint {:.2e} (limit 1e-10)",
            taps.max_error, ge.max_error
        ),
        t,
    );
}

fn single_filter(r: &mut Report) {
    let t = Instant::now();
    let mut g = ChaCha20Rng::seed_from_u64(104);
    let o = verify::check_single_filter(&mut g, 100, 64, 6, Fault::default()).unwrap();
    r.record(
        "time-invariant gradient is the summed time-varying one",
        within(&o, 1e-12),
        format!("max abs difference {:.2e} over 100 instances, limit 1e-12", o.max_error),
        t,
    );
}

/// Slowly drifting reflection tracks bounded by `k_max`, as a vocal tract
/// moves, with random source settings.
fn random_stable_params(frames: usize, order: usize, k_max: f64, seed: u64) -> SynthParams<f64> {
    let mut g = ChaCha20Rng::seed_from_u64(seed);
    let f0 = (0..frames)
        .map(|_| {
            if g.random_bool(0.8) {
                g.random_range(80.0..400.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut p = SynthParams::init(f0, 240, order, SynthMode::SourceFilter, seed);
    let base: Vec<f64> = (0..order).map(|_| g.random_range(-1.0..1.0)).collect();
    let phase: Vec<f64> = (0..order).map(|_| g.random_range(0.0..6.3)).collect();
    let rate = g.random_range(0.01..0.1);
    p.reflection = (0..frames * order)
        .map(|j| {
            let (f, i) = (j / order, j % order);
            let u = 0.7 * base[i] + 0.3 * (rate * f as f64 + phase[i]).sin();
            unsquash_reflection(k_max * u)
        })
        .collect();
    p.table_pos = (0..frames).map(|_| g.random_range(-3.0..3.0)).collect();
    p.voiced_gain = (0..frames).map(|_| g.random_range(-3.0..1.0)).collect();
    p.noise_gain = (0..frames).map(|_| g.random_range(-5.0..0.0)).collect();
    p.input_gain = (0..frames).map(|_| g.random_range(-1.0..1.0)).collect();
    let nf = p.noise_filter.len();
    p.noise_filter = (0..nf).map(|_| g.random_range(-3.0..1.0)).collect();
    p
}

fn stability(r: &mut Report) {
    let t = Instant::now();
    let mut g = ChaCha20Rng::seed_from_u64(105);
    let mut worst_pole = 0.0f64;
    for _ in 0..10_000 {
        let order = g.random_range(1..=22);
        let a = random_stable_row(&mut g, order, 0.99);
        worst_pole = pole_moduli(&a).into_iter().fold(worst_pole, f64::max);
    }
    let wt = Wavetable::build_default().unwrap();
    let len = 240_000;
    let mut finite = true;
    let mut peak = 0.0f64;
    for seed in 0..4 {
        let p = random_stable_params(len / 240, 22, 0.99, seed);
        let opts = ContextOptions {
            seed,
            ..ContextOptions::default()
        };
        let ctx = SynthContext::new(&wt, &p, len, &opts).unwrap();
        for filter in [FilterRealization::SampleWise, FilterRealization::SampleWiseReflection] {
            let y = render(&p, &ctx, &filter).unwrap().samples;
            finite &= y.iter().all(|v| v.is_finite());
            peak = y.iter().fold(peak, |m, v| m.max(v.abs()));
        }
    }
    r.record(
        "stability",
        worst_pole < 1.0 && finite,
        format!(
            "largest pole modulus 1 - {:.1e} over 10^4 rows; 8 renders of 10 s all finite: {finite} (peak {peak:.1})",
            1.0 - worst_pole
        ),
        t,
    );
}

fn performance(r: &mut Report) {
    let t = Instant::now();
    let rows = bench::run(&BenchConfig {
        len: 24000,
        order: 22,
        repeats: 5,
        sweep_len_cap: 2048,
        seed: 0,
    })
    .unwrap();
    let speedup = bench::speedup(&rows, 24000, Method::Analytic, Method::Naive).unwrap();
    let doubling = bench::doubling_ratio(&rows, Method::Analytic).unwrap();
    let naive_doubling = bench::doubling_ratio(&rows, Method::Naive).unwrap();
    let sweep_doubling = bench::doubling_ratio(&rows, Method::ImpulseSweep).unwrap();
    r.record(
        "performance",
        speedup >= 10.0 && (1.6..=2.6).contains(&doubling),
        format!(
            "unrolled graph {speedup:.1}x slower at T=24000 M=22 (need 10x); doubling ratio analytic {doubling:.2}, \
             unrolled {naive_doubling:.2}, impulse sweep {sweep_doubling:.2}"
        ),
        t,
    );
}

fn known_target_fit(r: &mut Report) {
    let t = Instant::now();
    let wt = Wavetable::build_default().unwrap();
    let cfg = FitConfig {
        seed: 1,
        steps: 2000,
        lr: 1e-4,
        clip: 0.5,
        ..FitConfig::default()
    };
    let kt = known_target(&wt, 24000, &cfg, 0.12).unwrap();
    let out = fit(&kt.target, kt.f0.clone(), &wt, &cfg, None, |_, _| {}).unwrap();
    let last = *out.losses.last().unwrap();
    let ratio = last / out.initial_loss;
    let best_ratio = out.best_loss / out.initial_loss;
    let env = envelope_rmse_db(&out.params, &kt.truth, 257).unwrap();
    let start_env = envelope_rmse_db(&kt.init, &kt.truth, 257).unwrap();
    r.record(
        "known-target fit",
        out.aborted.is_none() && ratio <= 0.2 && best_ratio <= 0.2 && env < 3.0,
        format!(
            "loss {:.4} -> {last:.4} (ratio {ratio:.3}, best {best_ratio:.3}, need <= 0.2); \
             envelope RMSE {start_env:.2} -> {env:.2} dB (need < 3)",
            out.initial_loss
        ),
        t,
    );
}

fn mismatch_direction(r: &mut Report) {
    let t = Instant::now();
    let wt = Wavetable::build_default().unwrap();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5 {
        let cfg = FitConfig {
            mode: FitMode::Framewise,
            overlap: 0.75,
            seed,
            steps: 300,
            ..FitConfig::default()
        };
        // the target comes from the frame-wise renderer, standing in for
        // speech that neither realization reproduces exactly
        let kt = known_target(&wt, 12000, &cfg, 0.12).unwrap();
        let out = fit(&kt.target, kt.f0.clone(), &wt, &cfg, None, |_, _| {}).unwrap();
        let fw = score(&out.params, &kt.target, &wt, &cfg, &cfg.realization().unwrap()).unwrap();
        let sw = score(&out.params, &kt.target, &wt, &cfg, &FilterRealization::SampleWise).unwrap();
        if sw > fw {
            wins += 1;
        }
        pairs.push(format!("{fw:.4}/{sw:.4}"));
    }
    r.record(
        "frame-wise fit re-rendered sample-wise scores worse",
        wins >= 4,
        format!("{wins}/5 seeds (frame-wise/sample-wise: {})", pairs.join(", ")),
        t,
    );
}

fn loss_sanity(r: &mut Report) {
    let t = Instant::now();
    let mut g = ChaCha20Rng::seed_from_u64(109);
    let small = MssConfig::with_sizes(&[64, 127, 256]);
    let full = MssConfig::default();

    let mut self_zero = 0.0f64;
    for cfg in [&small, &full] {
        let x = gaussian(&mut g, 4800);
        self_zero = self_zero.max(mss_loss(&x, &x, cfg).unwrap().abs());
    }
    let mut min_pair = f64::INFINITY;
    let mut flip = 0.0f64;
    for i in 0..1000 {
        let len = 256 + i % 300;
        let x = gaussian(&mut g, len);
        let y: Vec<f64> = gaussian(&mut g, len)
            .iter()
            .map(|v| v * (1.0 + (i % 7) as f64))
            .collect();
        let l = mss_loss(&x, &y, &small).unwrap();
        min_pair = min_pair.min(l);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        flip = flip.max((mss_loss(&neg, &y, &small).unwrap() - l).abs() / l);
    }
    let mut parseval = 0.0f64;
    for size in [64, 127, 509, 512] {
        let stft = Stft::<f64>::hann(size).unwrap();
        let x = gaussian(&mut g, 3 * size);
        for (f, spec) in stft.spectra(&x).unwrap().iter().enumerate() {
            let time: f64 = stft.windowed_frame(&x, f).iter().map(|v| v * v).sum();
            let freq: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / size as f64;
            parseval = parseval.max((time - freq).abs() / time);
        }
    }
    r.record(
        "loss sanity",
        self_zero == 0.0 && min_pair >= 0.0 && flip <= 1e-12 && parseval <= 1e-9,
        format!(
            "L(x,x) = {self_zero:e}; min over 1000 pairs {min_pair:.3}; sign flip {flip:.1e}; Parseval {parseval:.1e} (limit 1e-9)"
        ),
        t,
    );
}

#[test]
fn acceptance() {
    let mut r = Report { lines: Vec::new() };
    gradients(&mut r);
    naive_equivalence(&mut r);
    expansion(&mut r);
    single_filter(&mut r);
    stability(&mut r);
    performance(&mut r);
    known_target_fit(&mut r);
    mismatch_direction(&mut r);
    loss_sanity(&mut r);
    let failed: Vec<&str> = r.lines.iter().filter(|(_, ok)| !ok).map(|(l, _)| l.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
