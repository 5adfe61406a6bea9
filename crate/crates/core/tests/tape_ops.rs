mod common;

use std::sync::Arc;

use common::{gaussian, max_grad_error, rng, uniform};
use tvlp::loss::{MssConfig, MssLoss};
use tvlp::params::{frame_count, FramePlan};
use tvlp::source::{build_lf_wavetable, NoiseShaper, Oscillator, Wavetable, NOISE_BINS};
use tvlp::{Tape, Tensor};

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn col(v: Vec<f64>) -> Tensor<f64> {
    Tensor::column(v)
}

fn mat(r: usize, c: usize, v: Vec<f64>) -> Tensor<f64> {
    Tensor::new(r, c, v).unwrap()
}

/// Stable rows built from small reflection coefficients.
fn stable_rows(g: &mut rand_chacha::ChaCha20Rng, rows: usize, m: usize) -> Vec<f64> {
    (0..rows)
        .flat_map(|_| tvlp::params::reflection_to_lpc(&uniform(g, m, -0.7, 0.7)).unwrap())
        .collect()
}

#[test]
fn elementwise_ops() {
    let mut g = rng(1);
    let (a, b) = (gaussian(&mut g, 7), gaussian(&mut g, 7));
    let err = max_grad_error(
        vec![col(a.clone()), col(b.clone())],
        |t, v| t.add(v[0], v[1]).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "add {err}");
    let err = max_grad_error(
        vec![col(a.clone()), col(b.clone())],
        |t, v| t.sub(v[0], v[1]).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "sub {err}");
    let err = max_grad_error(
        vec![col(a.clone()), col(b.clone())],
        |t, v| t.mul(v[0], v[1]).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "mul {err}");
    let err = max_grad_error(vec![col(a.clone())], |t, v| t.scale(v[0], -2.5).unwrap(), H, FLOOR);
    assert!(err < TOL, "scale {err}");
    let err = max_grad_error(
        vec![mat(2, 3, gaussian(&mut g, 6))],
        |t, v| t.sum(v[0]).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "sum {err}");
    let err = max_grad_error(vec![col(a.clone())], |t, v| t.exp(v[0]).unwrap(), H, FLOOR);
    assert!(err < TOL, "exp {err}");
    let err = max_grad_error(
        vec![col(a.clone())],
        |t, v| t.scaled_tanh(v[0], 0.999).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "tanh {err}");
    let err = max_grad_error(vec![col(a)], |t, v| t.scaled_sigmoid(v[0], 99.0).unwrap(), H, FLOOR);
    assert!(err < TOL, "sigmoid {err}");
}

#[test]
fn lp_ops() {
    let mut g = rng(2);
    let (n, m) = (40, 5);
    let e = gaussian(&mut g, n);
    let a = stable_rows(&mut g, n, m);
    let err = max_grad_error(
        vec![col(e.clone()), mat(n, m, a)],
        |t, v| t.lp_tv(v[0], v[1]).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "lp_tv {err}");
    let row = stable_rows(&mut g, 1, m);
    let err = max_grad_error(
        vec![col(e), mat(1, m, row)],
        |t, v| t.lp_ti(v[0], v[1]).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "lp_ti {err}");
}

#[test]
fn parameter_ops() {
    let mut g = rng(3);
    let k = uniform(&mut g, 4 * 6, -0.8, 0.8);
    let err = max_grad_error(vec![mat(4, 6, k)], |t, v| t.reflection_to_lpc(v[0]).unwrap(), H, FLOOR);
    assert!(err < TOL, "step-up {err}");
    let frames = gaussian(&mut g, 5 * 2);
    let err = max_grad_error(
        vec![mat(5, 2, frames)],
        |t, v| t.upsample_linear(v[0], 7, 33).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "upsample {err}");
}

#[test]
fn framewise_lp_op() {
    let mut g = rng(4);
    let (n, hop, m) = (96, 16, 4);
    let rows = frame_count(n, hop);
    let e = gaussian(&mut g, n);
    let a = stable_rows(&mut g, rows, m);
    let plan = FramePlan::hann_overlap(hop, 0.75).unwrap();
    let err = max_grad_error(
        vec![col(e), mat(rows, m, a)],
        move |t, v| t.framewise_lp(v[0], v[1], plan.clone()).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "framewise {err}");
}

#[test]
fn spectral_loss_op() {
    let mut g = rng(5);
    let cfg = MssConfig::with_sizes(&[32, 64]);
    let target = gaussian(&mut g, 160);
    let loss = Arc::new(MssLoss::new(&cfg, &target).unwrap());
    let x = gaussian(&mut g, 160);
    let err = max_grad_error(vec![col(x)], move |t, v| t.mss(v[0], loss.clone()).unwrap(), H, FLOOR);
    assert!(err < 1e-5, "mss {err}");
}

fn small_table() -> Wavetable {
    build_lf_wavetable(&Wavetable::default_grid(12), 256, 50).unwrap()
}

#[test]
fn oscillator_op() {
    let wt = small_table();
    let (len, hop) = (200, 40);
    let frames = frame_count(len, hop);
    let f0: Vec<f64> = (0..frames).map(|f| 180.0 + 10.0 * f as f64).collect();
    let osc = Arc::new(Oscillator::new(&wt, &f0, 8000.0, 2, hop, len).unwrap());
    // positions kept inside one table cell so the bilinear read stays smooth
    let mut g = rng(6);
    let tp = uniform(&mut g, frames, 5.2, 5.8);
    let err = max_grad_error(
        vec![col(tp)],
        move |t, v| t.oscillator(v[0], osc.clone()).unwrap(),
        H,
        FLOOR,
    );
    assert!(err < TOL, "oscillator {err}");
}

#[test]
fn noise_shaper_op() {
    let (len, hop) = (90, 30);
    let frames = frame_count(len, hop);
    let shaper = Arc::new(NoiseShaper::<f64>::new(len, hop, 9).unwrap());
    let mut g = rng(7);
    let lm = uniform(&mut g, frames * NOISE_BINS, -2.0, 1.0);
    let err = max_grad_error(
        vec![mat(frames, NOISE_BINS, lm)],
        move |t, v| t.shape_noise(v[0], shaper.clone()).unwrap(),
        // per-bin gradients are tiny next to the loss, so a small step
        // drowns in round-off; the map is smooth, a large step is exact enough
        1e-3,
        FLOOR,
    );
    assert!(err < TOL, "noise {err}");
}

#[test]
fn fir_op() {
    let mut g = rng(8);
    let x = gaussian(&mut g, 50);
    let h = gaussian(&mut g, 9);
    let err = max_grad_error(vec![col(x), col(h)], |t, v| t.fir(v[0], v[1]).unwrap(), H, FLOOR);
    assert!(err < TOL, "fir {err}");
}

#[test]
fn shared_subexpressions_accumulate() {
    // y = x * x + exp(x) uses x three times
    let mut g = rng(9);
    let x = gaussian(&mut g, 6);
    let err = max_grad_error(
        vec![col(x)],
        |t, v| {
            let sq = t.mul(v[0], v[0]).unwrap();
            let ex = t.exp(v[0]).unwrap();
            t.add(sq, ex).unwrap()
        },
        H,
        FLOOR,
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn backward_twice_needs_zero_grad() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::column(vec![1.0, 2.0]));
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.backward(s).is_err());
    tape.zero_grad();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0]);
}
