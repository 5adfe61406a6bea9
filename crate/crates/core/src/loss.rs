//! Multi-resolution spectral loss.
//!
//! For every FFT size the signal is framed around centers `0, hop, 2 hop, ...`
//! with reflect padding of half a frame, weighted by a periodic Hann window,
//! and transformed at its exact length (the default sizes are prime). Each
//! resolution contributes a spectral convergence term plus the mean absolute
//! log-magnitude difference, and the resolutions are averaged.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::hann_periodic;
use crate::real::Real;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct MssConfig {
    pub fft_sizes: Vec<usize>,
    /// Added to magnitudes before taking logs.
    pub eps: f64,
}

impl Default for MssConfig {
    fn default() -> Self {
        Self {
            fft_sizes: vec![509, 1021, 2053],
            eps: 1e-8,
        }
    }
}

impl MssConfig {
    pub fn with_sizes(sizes: &[usize]) -> Self {
        Self {
            fft_sizes: sizes.to_vec(),
            ..Self::default()
        }
    }

    /// Hop for one resolution, a quarter of the size rounded up.
    pub fn hop(size: usize) -> usize {
        size.div_ceil(4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_sizes.is_empty() {
            return Err(Error::InvalidArgument("at least one FFT size is required".into()));
        }
        if let Some(&bad) = self.fft_sizes.iter().find(|&&s| s < 16) {
            return Err(Error::InvalidArgument(format!("FFT size {bad} is below 16")));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    /// Shortest signal every resolution accepts.
    pub fn min_len(&self) -> usize {
        self.fft_sizes.iter().copied().max().unwrap_or(0)
    }
}

/// Magnitudes of one resolution, `frames x bins` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub mag: Vec<T>,
}

/// Short-time transform at one resolution with cached FFT plans.
pub struct Stft<T: Real> {
    size: usize,
    hop: usize,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Stft<T> {
    pub fn new(size: usize, hop: usize, window: Vec<T>) -> Result<Self> {
        if size < 2 || hop == 0 || window.len() != size {
            return Err(Error::InvalidArgument(format!(
                "stft needs size >= 2, hop >= 1, window of the frame size (size {size}, hop {hop}, window {})",
                window.len()
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            size,
            hop,
            window,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    /// Periodic Hann window at quarter-frame hop.
    pub fn hann(size: usize) -> Result<Self> {
        Self::new(
            size,
            MssConfig::hop(size),
            hann_periodic(size).into_iter().map(T::lit).collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bins(&self) -> usize {
        self.size / 2 + 1
    }

    fn pad(&self) -> usize {
        self.size / 2
    }

    pub fn frame_count(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.size) / self.hop
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len < self.size {
            return Err(Error::InvalidArgument(format!(
                "signal of {len} samples is shorter than one {}-sample frame",
                self.size
            )));
        }
        Ok(())
    }

    #[inline]
    fn reflect(&self, i: usize, len: usize) -> usize {
        let j = i as i64 - self.pad() as i64;
        let n = len as i64;
        let k = if j < 0 {
            -j
        } else if j >= n {
            2 * (n - 1) - j
        } else {
            j
        };
        k as usize
    }

    /// Full two-sided spectrum of every windowed frame.
    pub fn spectra(&self, x: &[T]) -> Result<Vec<Vec<Complex<T>>>> {
        self.check_len(x.len())?;
        let frames = self.frame_count(x.len());
        Ok((0..frames)
            .map(|f| {
                let mut buf: Vec<Complex<T>> = (0..self.size)
                    .map(|n| Complex::new(self.window[n] * x[self.reflect(f * self.hop + n, x.len())], T::zero()))
                    .collect();
                self.forward.process(&mut buf);
                buf
            })
            .collect())
    }

    /// Windowed frame `f` as it enters the transform.
    pub fn windowed_frame(&self, x: &[T], f: usize) -> Vec<T> {
        (0..self.size)
            .map(|n| self.window[n] * x[self.reflect(f * self.hop + n, x.len())])
            .collect()
    }

    pub fn magnitude(&self, x: &[T]) -> Result<Spectrogram<T>> {
        let spectra = self.spectra(x)?;
        Ok(self.magnitude_of(&spectra))
    }

    fn magnitude_of(&self, spectra: &[Vec<Complex<T>>]) -> Spectrogram<T> {
        let bins = self.bins();
        let mut mag = Vec::with_capacity(spectra.len() * bins);
        for spec in spectra {
            mag.extend(spec[..bins].iter().map(|c| c.norm()));
        }
        Spectrogram {
            frames: spectra.len(),
            bins,
            mag,
        }
    }

    /// Pulls magnitude adjoints back to the signal. Bins with exactly zero
    /// magnitude pass no adjoint.
    fn magnitude_vjp(&self, len: usize, spectra: &[Vec<Complex<T>>], grad_mag: &[T]) -> Vec<T> {
        let bins = self.bins();
        let mut out = vec![T::zero(); len];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.size];
        for (f, spec) in spectra.iter().enumerate() {
            for c in buf.iter_mut() {
                *c = Complex::new(T::zero(), T::zero());
            }
            for k in 0..bins {
                let m = spec[k].norm();
                if m > T::zero() {
                    buf[k] = spec[k] * (grad_mag[f * bins + k] / m);
                }
            }
            // d|X_k|/dx_n = w_n Re(u_k e^{+j 2 pi k n / N}); an unnormalized
            // inverse transform of the one-sided array sums those terms.
            self.inverse.process(&mut buf);
            for n in 0..self.size {
                let idx = self.reflect(f * self.hop + n, len);
                out[idx] += self.window[n] * buf[n].re;
            }
        }
        out
    }
}

/// Magnitude spectrogram of `x` at one resolution.
pub fn stft_mag<T: Real>(x: &[T], size: usize, hop: usize, window: &[T]) -> Result<Spectrogram<T>> {
    Stft::new(size, hop, window.to_vec())?.magnitude(x)
}

struct Resolution<T: Real> {
    stft: Stft<T>,
    target: Spectrogram<T>,
    target_log: Vec<T>,
    target_norm: T,
}

/// The loss against one fixed target, with plans and target spectra cached.
pub struct MssLoss<T: Real> {
    cfg: MssConfig,
    len: usize,
    res: Vec<Resolution<T>>,
}

impl<T: Real> MssLoss<T> {
    pub fn new(cfg: &MssConfig, target: &[T]) -> Result<Self> {
        cfg.validate()?;
        let eps = T::lit(cfg.eps);
        let res = cfg
            .fft_sizes
            .iter()
            .map(|&size| {
                let stft = Stft::hann(size)?;
                let target = stft.magnitude(target)?;
                let target_log = target.mag.iter().map(|&m| (m + eps).ln()).collect();
                let target_norm = target.mag.iter().map(|&m| m * m).sum::<T>().sqrt();
                Ok(Resolution {
                    stft,
                    target,
                    target_log,
                    target_norm,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            len: target.len(),
            res,
        })
    }

    pub fn config(&self) -> &MssConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.len {
            return Err(Error::shape(
                "mss_loss",
                format!("signal has {} samples, target {}", x.len(), self.len),
            ));
        }
        Ok(())
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        Ok(self.evaluate(x, false)?.0)
    }

    pub fn value_and_grad(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        let (v, g) = self.evaluate(x, true)?;
        Ok((v, g.expect("gradient requested")))
    }

    fn evaluate(&self, x: &[T], want_grad: bool) -> Result<(T, Option<Vec<T>>)> {
        self.check(x)?;
        let eps = T::lit(self.cfg.eps);
        let scale = T::one() / T::count(self.res.len());
        let parts: Vec<(T, Option<Vec<T>>)> = self
            .res
            .par_iter()
            .map(|r| {
                let spectra = r.stft.spectra(x)?;
                let mag = r.stft.magnitude_of(&spectra);
                let count = T::count(mag.mag.len());
                let diff_norm = mag
                    .mag
                    .iter()
                    .zip(&r.target.mag)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>()
                    .sqrt();
                let denom = r.target_norm.max(eps);
                let sc = diff_norm / denom;
                let log_l1 = mag
                    .mag
                    .iter()
                    .zip(&r.target_log)
                    .map(|(&a, &lb)| ((a + eps).ln() - lb).abs())
                    .sum::<T>()
                    / count;
                let grad = want_grad.then(|| {
                    let grad_mag: Vec<T> = mag
                        .mag
                        .iter()
                        .zip(r.target.mag.iter().zip(&r.target_log))
                        .map(|(&a, (&b, &lb))| {
                            let g_sc = if diff_norm > T::zero() {
                                (a - b) / (diff_norm * denom)
                            } else {
                                T::zero()
                            };
                            let d = (a + eps).ln() - lb;
                            let sign = if d > T::zero() {
                                T::one()
                            } else if d < T::zero() {
                                -T::one()
                            } else {
                                T::zero()
                            };
                            (g_sc + sign / ((a + eps) * count)) * scale
                        })
                        .collect();
                    r.stft.magnitude_vjp(x.len(), &spectra, &grad_mag)
                });
                Ok(((sc + log_l1) * scale, grad))
            })
            .collect::<Result<_>>()?;
        let mut total = T::zero();
        let mut grad = want_grad.then(|| vec![T::zero(); x.len()]);
        for (v, g) in parts {
            total += v;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        Ok((total, grad))
    }
}

/// Loss between `x` and target `y`.
pub fn mss_loss<T: Real>(x: &[T], y: &[T], cfg: &MssConfig) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::shape("mss_loss", format!("{} vs {} samples", x.len(), y.len())));
    }
    MssLoss::new(cfg, y)?.value(x)
}

/// Tape op: input `x` (`n x 1`), scalar output. The gradient is computed
/// alongside the value and kept for the backward pass.
pub(crate) struct MssOp<T: Real> {
    loss: Arc<MssLoss<T>>,
    grad: Vec<T>,
}

impl<T: Real> Op<T> for MssOp<T> {
    fn name(&self) -> &'static str {
        "mss_loss"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let x = inputs[0];
        if x.cols() != 1 {
            return Err(Error::shape(
                "mss_loss",
                format!("expected a column, got {:?}", x.shape()),
            ));
        }
        let (v, g) = self.loss.value_and_grad(x.data())?;
        self.grad = g;
        Ok(Tensor::scalar(v))
    }

    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g = grad.item();
        vec![Some(Tensor::column(self.grad.iter().map(|&x| x * g).collect()))]
    }
}

impl<T: Real> Tape<T> {
    /// Spectral loss of `x` against the target baked into `loss`.
    pub fn mss(&mut self, x: Var, loss: Arc<MssLoss<T>>) -> Result<Var> {
        self.record(Box::new(MssOp { loss, grad: Vec::new() }), &[x])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn identical_signals_score_zero() {
        let x = noise(4096, 1);
        assert_eq!(mss_loss(&x, &x, &MssConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn sign_flip_invariance() {
        let x = noise(3000, 2);
        let y = noise(3000, 3);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let cfg = MssConfig::default();
        assert_eq!(mss_loss(&neg, &x, &cfg).unwrap(), 0.0);
        assert_eq!(mss_loss(&x, &y, &cfg).unwrap(), mss_loss(&neg, &y, &cfg).unwrap());
    }

    #[test]
    fn zero_signal_has_zero_magnitudes() {
        let s = stft_mag(&[0.0f64; 600], 509, 128, &vec![1.0; 509]).unwrap();
        assert!(s.mag.iter().all(|&m| m == 0.0));
        assert_eq!(s.bins, 255);
    }

    #[test]
    fn cosine_at_bin_center_is_concentrated() {
        let n = 509;
        let k0 = 40.0;
        let x: Vec<f64> = (0..4 * n)
            .map(|t| (2.0 * std::f64::consts::PI * k0 * t as f64 / n as f64).cos())
            .collect();
        let stft = Stft::<f64>::hann(n).unwrap();
        let s = stft.magnitude(&x).unwrap();
        // interior frames only; the reflected edges are not periodic
        for f in 2..s.frames - 2 {
            let row = &s.mag[f * s.bins..(f + 1) * s.bins];
            let (peak_bin, &peak) = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            assert_eq!(peak_bin, 40);
            for (k, &m) in row.iter().enumerate() {
                if k.abs_diff(40) >= 2 {
                    assert!(20.0 * (m / peak).log10() <= -30.0, "bin {k}");
                }
            }
        }
    }

    #[test]
    fn parseval_per_frame() {
        let x = noise(3000, 4);
        for size in [509usize, 1021, 2053] {
            let stft = Stft::<f64>::hann(size).unwrap();
            let spectra = stft.spectra(&x).unwrap();
            for (f, spec) in spectra.iter().enumerate() {
                let lhs: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
                let frame = stft.windowed_frame(&x, f);
                let rhs = size as f64 * frame.iter().map(|v| v * v).sum::<f64>();
                assert!((lhs - rhs).abs() <= 1e-9 * rhs);
            }
        }
    }

    #[test]
    fn too_short_or_mismatched() {
        let cfg = MssConfig::default();
        assert!(mss_loss(&[0.0; 100], &[0.0; 100], &cfg).is_err());
        assert!(matches!(
            mss_loss(&[0.0; 3000], &[0.0; 2999], &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(MssConfig::with_sizes(&[8]).validate().is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = MssConfig::with_sizes(&[64, 127]);
        let x = noise(300, 5);
        let y = noise(300, 6);
        let loss = MssLoss::new(&cfg, &y).unwrap();
        let (_, g) = loss.value_and_grad(&x).unwrap();
        let h = 1e-6;
        for i in (0..300).step_by(7) {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss.value(&xp).unwrap() - loss.value(&xm).unwrap()) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-6);
            assert!((fd - g[i]).abs() / denom < 1e-4, "sample {i}: {fd} vs {}", g[i]);
        }
    }
}
