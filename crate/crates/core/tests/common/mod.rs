#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use tvlp::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Scalar loss `sum(w * f(inputs))` with a fixed random `w`, recorded fresh
/// for each evaluation.
fn weighted_loss(
    tape: &mut Tape<f64>,
    inputs: &[Tensor<f64>],
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    weights: &mut Option<Tensor<f64>>,
) -> (Vec<Var>, Var) {
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(tape, &vars);
    let (r, c) = tape.value(out).shape();
    let w = weights.get_or_insert_with(|| {
        let mut g = rng(0xBEEF);
        Tensor::new(r, c, gaussian(&mut g, r * c)).unwrap()
    });
    let wv = tape.leaf(w.clone());
    let prod = tape.mul(out, wv).unwrap();
    (vars, tape.sum(prod).unwrap())
}

/// Largest relative error (denominator floored at `floor`) between tape
/// gradients and fourth-order central differences with step `h`.
pub fn max_grad_error(
    inputs: Vec<Tensor<f64>>,
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    h: f64,
    floor: f64,
) -> f64 {
    let mut weights = None;
    let mut tape = Tape::new();
    let (vars, loss) = weighted_loss(&mut tape, &inputs, &build, &mut weights);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad_or_zeros(v).into_data()).collect();

    let eval = |inputs: &[Tensor<f64>], weights: &mut Option<Tensor<f64>>| {
        let mut tape = Tape::new();
        let (_, loss) = weighted_loss(&mut tape, inputs, &build, weights);
        tape.value(loss).item()
    };
    let mut worst = 0.0f64;
    for (i, g) in analytic.iter().enumerate() {
        for j in 0..g.len() {
            let at = |d: f64, weights: &mut Option<Tensor<f64>>| {
                let mut moved = inputs.clone();
                moved[i].data_mut()[j] += d;
                eval(&moved, weights)
            };
            let fd = (8.0 * (at(h, &mut weights) - at(-h, &mut weights))
                - (at(2.0 * h, &mut weights) - at(-2.0 * h, &mut weights)))
                / (12.0 * h);
            let err = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// One-sided power spectrum of `x` under a Blackman-Harris window.
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    use rustfft::num_complex::Complex;
    let n = x.len();
    let w = |i: usize| {
        let p = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        0.35875 - 0.48829 * p.cos() + 0.14128 * (2.0 * p).cos() - 0.01168 * (3.0 * p).cos()
    };
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex::new(v * w(i), 0.0))
        .collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}
