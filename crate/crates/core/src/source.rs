//! Excitation sources: an LF-model glottal wavetable oscillator, a
//! band-limited pulse train, frame-wise shaped noise, and the trailing FIR.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::params::{frame_count, hann_periodic, upsample_linear};
use crate::real::Real;
use crate::signal::Signal;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

pub const RD_MIN: f64 = 0.3;
pub const RD_MAX: f64 = 2.7;
pub const DEFAULT_TABLES: usize = 100;
pub const DEFAULT_TABLE_LEN: usize = 1024;
/// Highest harmonic kept in each table. At 4x oversampling of 24 kHz, a
/// 500 Hz tone then folds nothing back below the decimator cutoff.
pub const DEFAULT_MAX_HARMONIC: usize = 160;
pub const DEFAULT_OVERSAMPLE: usize = 4;
pub const DECIMATOR_TAPS: usize = 127;
/// Decimator cutoff as a fraction of the output rate.
pub const DECIMATOR_CUTOFF: f64 = 0.45;
pub const NOISE_BINS: usize = 256;
/// Floor applied to noise log-magnitudes before exponentiation.
pub const NOISE_LOG_FLOOR: f64 = -30.0;
pub const FIR_TAPS: usize = 128;

/// `K` single-period glottal flow derivative tables, one per `R_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavetable {
    pub rd_grid: Vec<f64>,
    pub table_len: usize,
    /// `K x L`, row-major.
    pub tables: Vec<f64>,
}

impl Wavetable {
    pub fn count(&self) -> usize {
        self.rd_grid.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.tables[k * self.table_len..(k + 1) * self.table_len]
    }

    /// `K` values evenly spaced over the default `R_d` range.
    pub fn default_grid(k: usize) -> Vec<f64> {
        if k == 1 {
            return vec![(RD_MIN + RD_MAX) / 2.0];
        }
        (0..k)
            .map(|i| RD_MIN + (RD_MAX - RD_MIN) * i as f64 / (k - 1) as f64)
            .collect()
    }

    pub fn build_default() -> Result<Self> {
        build_lf_wavetable(
            &Self::default_grid(DEFAULT_TABLES),
            DEFAULT_TABLE_LEN,
            DEFAULT_MAX_HARMONIC,
        )
    }

    const MAGIC: &'static [u8; 8] = b"TVLPWT01";

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.count() as u32).to_le_bytes())?;
        w.write_all(&(self.table_len as u32).to_le_bytes())?;
        for &rd in &self.rd_grid {
            w.write_all(&rd.to_le_bytes())?;
        }
        for &x in &self.tables {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::format("wavetable", "magic", "not a wavetable cache"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let k = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let l = u32::from_le_bytes(word) as usize;
        if k == 0 || l < 2 || k.saturating_mul(l) > 1 << 28 {
            return Err(Error::format("wavetable", "shape", format!("{k} x {l}")));
        }
        let mut rd_grid = Vec::with_capacity(k);
        let mut dword = [0u8; 8];
        for _ in 0..k {
            r.read_exact(&mut dword)?;
            rd_grid.push(f64::from_le_bytes(dword));
        }
        if rd_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::format("wavetable", "rd_grid", "not strictly ascending"));
        }
        let mut tables = Vec::with_capacity(k * l);
        for _ in 0..k * l {
            r.read_exact(&mut word)?;
            tables.push(f32::from_le_bytes(word) as f64);
        }
        Ok(Self {
            rd_grid,
            table_len: l,
            tables,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Loads `path` when it holds a table of the requested shape, otherwise
    /// builds the default table and writes it there.
    pub fn load_or_build(path: &Path) -> Result<Self> {
        if let Ok(wt) = Self::load(path) {
            if wt.rd_grid == Self::default_grid(DEFAULT_TABLES) && wt.table_len == DEFAULT_TABLE_LEN {
                return Ok(wt);
            }
        }
        let wt = Self::build_default()?;
        wt.save(path)?;
        Ok(wt)
    }
}

/// LF timing for one `R_d`, with the period normalized to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LfShape {
    pub tp: f64,
    pub te: f64,
    pub ta: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl LfShape {
    /// Maps `R_d` to the LF shape through the usual regression for
    /// `R_a`, `R_k`, `R_g`, then solves the return-phase and area balance
    /// conditions for `epsilon` and `alpha`.
    pub fn from_rd(rd: f64) -> Result<Self> {
        let diverged = || Error::SolverDiverged { rd };
        let ra = (-1.0 + 4.8 * rd) / 100.0;
        let rk = (22.4 + 11.8 * rd) / 100.0;
        let rg = rk / (4.0 * (0.11 * rd / (0.5 + 1.2 * rk) - ra));
        let tp = 1.0 / (2.0 * rg);
        let te = tp * (1.0 + rk);
        let ta = ra;
        if !(rg > 0.0 && ta > 0.0 && tp < te && te + ta < 1.0) {
            return Err(diverged());
        }
        let tr = 1.0 - te;
        let epsilon = bisect(|e| e * ta - 1.0 + (-e * tr).exp(), 1e-9 / ta, 4.0 / ta).ok_or_else(diverged)?;
        let decay = (-epsilon * tr).exp();
        let return_area = -((1.0 - decay) / epsilon - tr * decay) / (epsilon * ta);
        let w = std::f64::consts::PI / tp;
        let (s, c) = (w * te).sin_cos();
        let open_area = |a: f64| -(a * s - w * c + w * (-a * te).exp()) / ((a * a + w * w) * s);
        let f = |a: f64| open_area(a) + return_area;
        let (lo, hi);
        let mut tries = 0;
        if f(0.0) > 0.0 {
            let mut top = 1.0;
            while f(top) > 0.0 {
                top *= 2.0;
                tries += 1;
                if tries > 60 {
                    return Err(diverged());
                }
            }
            hi = top;
            lo = if f(top / 2.0) < 0.0 { 0.0 } else { top / 2.0 };
        } else {
            let mut bottom = -1.0;
            while f(bottom) < 0.0 {
                bottom *= 2.0;
                tries += 1;
                if tries > 60 || !f(bottom).is_finite() {
                    return Err(diverged());
                }
            }
            lo = bottom;
            hi = if f(bottom / 2.0) > 0.0 { 0.0 } else { bottom / 2.0 };
        }
        let alpha = bisect(|a| -f(a), lo, hi).ok_or_else(diverged)?;
        Ok(Self {
            tp,
            te,
            ta,
            alpha,
            epsilon,
        })
    }

    /// Flow derivative at normalized time `t` in `[0, 1)`, negative peak
    /// `-1` at `te`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.te {
            let w = std::f64::consts::PI / self.tp;
            -(self.alpha * (t - self.te)).exp() * (w * t).sin() / (w * self.te).sin()
        } else {
            let tr = 1.0 - self.te;
            -((-self.epsilon * (t - self.te)).exp() - (-self.epsilon * tr).exp()) / (self.epsilon * self.ta)
        }
    }
}

/// Root of an increasing function on `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo <= 0.0 && fhi >= 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if !fm.is_finite() {
            return None;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// One table per `R_d`: the LF period sampled at 16x the table length,
/// cut to harmonics `1..=max_harmonic`, resampled to `table_len` and scaled
/// to unit peak magnitude.
pub fn build_lf_wavetable(rd_grid: &[f64], table_len: usize, max_harmonic: usize) -> Result<Wavetable> {
    if rd_grid.is_empty() {
        return Err(Error::InvalidArgument("empty R_d grid".into()));
    }
    if rd_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("R_d grid must be strictly ascending".into()));
    }
    if let Some(&bad) = rd_grid.iter().find(|&&r| !(RD_MIN..=RD_MAX).contains(&r)) {
        return Err(Error::InvalidArgument(format!(
            "R_d {bad} outside [{RD_MIN}, {RD_MAX}]"
        )));
    }
    if table_len < 4 || max_harmonic == 0 || max_harmonic >= table_len / 2 {
        return Err(Error::InvalidArgument(format!(
            "table length {table_len} cannot hold {max_harmonic} harmonics"
        )));
    }
    let fine = 16 * table_len;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fine);
    let inv = planner.plan_fft_inverse(table_len);
    let rows: Vec<Vec<f64>> = rd_grid
        .iter()
        .map(|&rd| {
            let shape = LfShape::from_rd(rd)?;
            let mut buf: Vec<Complex64> = (0..fine)
                .map(|n| Complex64::new(shape.eval(n as f64 / fine as f64), 0.0))
                .collect();
            fwd.process(&mut buf);
            let mut coarse = vec![Complex64::new(0.0, 0.0); table_len];
            for h in 1..=max_harmonic {
                coarse[h] = buf[h];
                coarse[table_len - h] = buf[fine - h];
            }
            inv.process(&mut coarse);
            let row: Vec<f64> = coarse.iter().map(|c| c.re).collect();
            let peak = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !(peak > 0.0) || !peak.is_finite() {
                return Err(Error::SolverDiverged { rd });
            }
            Ok(row.into_iter().map(|x| x / peak).collect())
        })
        .collect::<Result<_>>()?;
    Ok(Wavetable {
        rd_grid: rd_grid.to_vec(),
        table_len,
        tables: rows.concat(),
    })
}

/// Frame-rate source controls.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceControls<T> {
    /// Hz; 0 marks an unvoiced frame.
    pub f0: Vec<f64>,
    /// Fractional table index in `[0, K - 1]`.
    pub table_pos: Vec<T>,
    pub voiced_gain: Vec<T>,
    pub noise_gain: Vec<T>,
}

impl<T: Real> SourceControls<T> {
    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    pub fn validate(&self, tables: usize) -> Result<()> {
        let f = self.f0.len();
        for (name, n) in [
            ("table_pos", self.table_pos.len()),
            ("voiced_gain", self.voiced_gain.len()),
            ("noise_gain", self.noise_gain.len()),
        ] {
            if n != f {
                return Err(Error::shape(
                    "source_controls",
                    format!("{name} has {n} frames, f0 has {f}"),
                ));
            }
        }
        check_f0(&self.f0, f64::INFINITY)?;
        let top = T::count(tables.saturating_sub(1));
        if let Some(i) = self.table_pos.iter().position(|&p| !(p >= T::zero() && p <= top)) {
            return Err(Error::InvalidArgument(format!(
                "table_pos[{i}] = {} outside [0, {top}]",
                self.table_pos[i]
            )));
        }
        Ok(())
    }
}

fn check_f0(f0: &[f64], nyquist: f64) -> Result<()> {
    for (index, &f) in f0.iter().enumerate() {
        if !f.is_finite() || f < 0.0 {
            return Err(Error::InvalidArgument(format!("f0[{index}] = {f} is not a frequency")));
        }
        if f >= nyquist {
            return Err(Error::F0AboveNyquist { f0: f, nyquist });
        }
    }
    Ok(())
}

/// Centered Blackman-windowed sinc with unit DC gain, `cutoff` in cycles
/// per sample.
pub fn windowed_sinc(taps: usize, cutoff: f64) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|j| {
            let x = j as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * x).sin() / (std::f64::consts::PI * x)
            };
            let p = 2.0 * std::f64::consts::PI * j as f64 / (taps - 1) as f64;
            sinc * (0.42 - 0.5 * p.cos() + 0.08 * (2.0 * p).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// A wavetable oscillator bound to one f0 track. The phase is fixed at
/// construction; rendering is differentiable in the table position only.
pub struct Oscillator<T: Real> {
    tables: Vec<T>,
    count: usize,
    table_len: usize,
    /// Table read position in `[0, L)` for every oversampled sample.
    positions: Vec<f64>,
    oversample: usize,
    hop: usize,
    len: usize,
    decimator: Vec<T>,
}

impl<T: Real> Oscillator<T> {
    /// `f0` is frame-rate (frame `f` centered at `f * hop`) and must be
    /// below `fs / 2`. The phase accumulator runs at `fs * oversample`.
    pub fn new(wt: &Wavetable, f0: &[f64], fs: f64, oversample: usize, hop: usize, len: usize) -> Result<Self> {
        if oversample == 0 {
            return Err(Error::InvalidArgument("oversample must be at least 1".into()));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {fs}"
            )));
        }
        check_f0(f0, fs / 2.0)?;
        let rate = fs * oversample as f64;
        let f0_fine = upsample_linear(f0, 1, hop * oversample, len * oversample)?;
        let l = wt.table_len as f64;
        let mut phase = 0.0f64;
        let positions = f0_fine
            .iter()
            .map(|&f| {
                let p = phase * l;
                phase += f / rate;
                phase -= phase.floor();
                p
            })
            .collect();
        let decimator = if oversample == 1 {
            Vec::new()
        } else {
            windowed_sinc(DECIMATOR_TAPS, DECIMATOR_CUTOFF / oversample as f64)
                .into_iter()
                .map(T::lit)
                .collect()
        };
        Ok(Self {
            tables: wt.tables.iter().map(|&x| T::lit(x)).collect(),
            count: wt.count(),
            table_len: wt.table_len,
            positions,
            oversample,
            hop,
            len,
            decimator,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn table_count(&self) -> usize {
        self.count
    }

    /// Output at the final rate for frame-rate table positions.
    pub fn render(&self, table_pos: &[T]) -> Result<Vec<T>> {
        let fine = upsample_linear(table_pos, 1, self.hop * self.oversample, self.len * self.oversample)?;
        let (raw, _) = self.read(&fine)?;
        Ok(self.decimate(&raw))
    }

    #[inline]
    fn lookup(&self, row: usize, i0: usize, i1: usize, u: T) -> T {
        let r = &self.tables[row * self.table_len..(row + 1) * self.table_len];
        r[i0] + u * (r[i1] - r[i0])
    }

    /// Bilinear read; also returns `d out / d table_pos` per sample.
    fn read(&self, pos: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if pos.len() != self.positions.len() {
            return Err(Error::shape(
                "table_read",
                format!("{} positions for {} samples", pos.len(), self.positions.len()),
            ));
        }
        let top = T::count(self.count - 1);
        let mut out = Vec::with_capacity(pos.len());
        let mut slope = Vec::with_capacity(pos.len());
        for (&p, &tp) in self.positions.iter().zip(pos) {
            if !tp.is_finite() {
                return Err(Error::NonFinite {
                    what: "table position",
                    index: out.len(),
                });
            }
            let i0 = (p.floor() as usize).min(self.table_len - 1);
            let i1 = (i0 + 1) % self.table_len;
            let u = T::lit(p - i0 as f64);
            if self.count == 1 {
                out.push(self.lookup(0, i0, i1, u));
                slope.push(T::zero());
                continue;
            }
            let tp = tp.max(T::zero()).min(top);
            let r0 = (tp.floor().to_f64_lossy() as usize).min(self.count - 2);
            let v = tp - T::count(r0);
            let a = self.lookup(r0, i0, i1, u);
            let b = self.lookup(r0 + 1, i0, i1, u);
            out.push(a + v * (b - a));
            slope.push(b - a);
        }
        Ok((out, slope))
    }

    fn decimate(&self, x: &[T]) -> Vec<T> {
        if self.oversample == 1 {
            return x.to_vec();
        }
        let half = (self.decimator.len() / 2) as i64;
        let n = x.len() as i64;
        (0..self.len)
            .map(|t| {
                let c = (t * self.oversample) as i64;
                let mut acc = T::zero();
                for (j, &h) in self.decimator.iter().enumerate() {
                    let i = c + j as i64 - half;
                    if i >= 0 && i < n {
                        acc += h * x[i as usize];
                    }
                }
                acc
            })
            .collect()
    }

    fn decimate_vjp(&self, g: &[T]) -> Vec<T> {
        let n = self.len * self.oversample;
        if self.oversample == 1 {
            return g.to_vec();
        }
        let half = (self.decimator.len() / 2) as i64;
        let mut out = vec![T::zero(); n];
        for (t, &gt) in g.iter().enumerate() {
            let c = (t * self.oversample) as i64;
            for (j, &h) in self.decimator.iter().enumerate() {
                let i = c + j as i64 - half;
                if i >= 0 && (i as usize) < n {
                    out[i as usize] += h * gt;
                }
            }
        }
        out
    }
}

struct TableReadOp<T: Real> {
    osc: Arc<Oscillator<T>>,
    slope: Vec<T>,
}

impl<T: Real> Op<T> for TableReadOp<T> {
    fn name(&self) -> &'static str {
        "table_read"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (out, slope) = self.osc.read(inputs[0].data())?;
        self.slope = slope;
        Ok(Tensor::column(out))
    }

    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g = grad.data().iter().zip(&self.slope).map(|(&g, &s)| g * s).collect();
        vec![Some(Tensor::column(g))]
    }
}

struct DecimateOp<T: Real> {
    osc: Arc<Oscillator<T>>,
}

impl<T: Real> Op<T> for DecimateOp<T> {
    fn name(&self) -> &'static str {
        "decimate"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let x = inputs[0];
        if x.len() != self.osc.len * self.osc.oversample {
            return Err(Error::shape("decimate", format!("{} samples", x.len())));
        }
        Ok(Tensor::column(self.osc.decimate(x.data())))
    }

    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(Tensor::column(self.osc.decimate_vjp(grad.data())))]
    }
}

/// Gain-scaled wavetable oscillator output. Unvoiced frames must already
/// carry a substitute f0.
pub fn wavetable_osc<T: Real>(
    wt: &Wavetable,
    controls: &SourceControls<T>,
    fs: f64,
    oversample: usize,
    hop: usize,
    len: usize,
) -> Result<Signal<T>> {
    controls.validate(wt.count())?;
    let osc = Oscillator::new(wt, &controls.f0, fs, oversample, hop, len)?;
    let x = osc.render(&controls.table_pos)?;
    let gain = upsample_linear(&controls.voiced_gain, 1, hop, len)?;
    Ok(Signal::new(x.iter().zip(&gain).map(|(&x, &g)| x * g).collect(), fs))
}

/// Sum of unit cosines at every harmonic of `f0` up to Nyquist, one phase
/// accumulator for all harmonics. `f0` is given per output sample.
pub fn pulse_train<T: Real>(f0: &[f64], fs: f64) -> Result<Signal<T>> {
    check_f0(f0, fs / 2.0)?;
    let mut phase = 0.0f64;
    let out = f0
        .iter()
        .map(|&f| {
            let v = if f > 0.0 {
                let count = ((fs / 2.0) / f).floor() as usize;
                (1..=count).map(|k| (k as f64 * phase).cos()).sum()
            } else {
                0.0
            };
            phase = (phase + 2.0 * std::f64::consts::PI * f / fs) % (2.0 * std::f64::consts::PI);
            T::lit(v)
        })
        .collect();
    Ok(Signal::new(out, fs))
}

/// `len` samples of unit Gaussian noise from a ChaCha20 stream.
pub fn white_noise<T: Real>(len: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            T::lit(x)
        })
        .collect()
}

/// `F x 256` noise filter log-magnitudes (natural log), bins evenly spaced
/// from DC to Nyquist.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseFilterFrames<T> {
    pub log_mag: Vec<T>,
}

impl<T: Real> NoiseFilterFrames<T> {
    pub fn new(log_mag: Vec<T>) -> Result<Self> {
        if log_mag.is_empty() || log_mag.len() % NOISE_BINS != 0 {
            return Err(Error::shape(
                "noise_filter_frames",
                format!(
                    "{} values is not a whole number of {NOISE_BINS}-bin frames",
                    log_mag.len()
                ),
            ));
        }
        crate::error::ensure_finite("noise log-magnitude", &log_mag)?;
        Ok(Self { log_mag })
    }

    pub fn flat(frames: usize) -> Self {
        Self {
            log_mag: vec![T::zero(); frames * NOISE_BINS],
        }
    }

    pub fn frames(&self) -> usize {
        self.log_mag.len() / NOISE_BINS
    }
}

const NOISE_HALF: usize = NOISE_BINS - 1;

/// Shapes one fixed white-noise sequence with frame-wise linear-phase FIRs.
///
/// Frame `f` windows the noise with a periodic Hann of `2 hop` centered at
/// `f * hop` (the windows sum to one), and filters it with a zero-phase
/// 511-tap FIR sampled from its magnitudes.
pub struct NoiseShaper<T: Real> {
    noise: Vec<T>,
    hop: usize,
    window: Vec<T>,
    /// `basis[k * 256 + n] = c_k cos(pi k n / 255) w(n) / 510`.
    basis: Vec<T>,
}

impl<T: Real> NoiseShaper<T> {
    pub fn new(len: usize, hop: usize, seed: u64) -> Result<Self> {
        Self::with_noise(white_noise(len, seed), hop)
    }

    pub fn with_noise(noise: Vec<T>, hop: usize) -> Result<Self> {
        if hop == 0 || noise.is_empty() {
            return Err(Error::InvalidArgument(
                "noise shaping needs hop >= 1 and a nonempty signal".into(),
            ));
        }
        let span = (2 * NOISE_HALF + 1) as f64;
        let mut basis = vec![T::zero(); NOISE_BINS * NOISE_BINS];
        for k in 0..NOISE_BINS {
            let c = if k == 0 || k == NOISE_HALF { 1.0 } else { 2.0 };
            for n in 0..NOISE_BINS {
                let angle = std::f64::consts::PI * (k * n) as f64 / NOISE_HALF as f64;
                let taper = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * n as f64 / (span + 1.0)).cos());
                basis[k * NOISE_BINS + n] = T::lit(c * angle.cos() * taper / (2 * NOISE_HALF) as f64);
            }
        }
        Ok(Self {
            noise,
            hop,
            window: hann_periodic(2 * hop).into_iter().map(T::lit).collect(),
            basis,
        })
    }

    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn noise(&self) -> &[T] {
        &self.noise
    }

    fn frame_indices(&self) -> usize {
        (self.noise.len() - 1) / self.hop + 2
    }

    fn check(&self, rows: usize) -> Result<()> {
        let expected = frame_count(self.noise.len(), self.hop);
        if rows != expected {
            return Err(Error::shape(
                "shape_noise",
                format!(
                    "{rows} filter frames, {} samples at hop {} need {expected}",
                    self.noise.len(),
                    self.hop
                ),
            ));
        }
        Ok(())
    }

    fn magnitudes(log_mag: &[T]) -> Vec<T> {
        let floor = T::lit(NOISE_LOG_FLOOR);
        log_mag.iter().map(|&l| l.max(floor).exp()).collect()
    }

    /// Half of the symmetric impulse response, `h[0..256]`.
    fn impulse(&self, mags: &[T]) -> Vec<T> {
        let mut h = vec![T::zero(); NOISE_BINS];
        for (k, &m) in mags.iter().enumerate() {
            for (hn, &b) in h.iter_mut().zip(&self.basis[k * NOISE_BINS..(k + 1) * NOISE_BINS]) {
                *hn += m * b;
            }
        }
        h
    }

    /// Windowed noise segment of frame `f` and the sample index it starts at.
    fn segment(&self, f: usize) -> (i64, Vec<T>) {
        let start = (f * self.hop) as i64 - self.hop as i64;
        let n = self.noise.len() as i64;
        let seg = (0..2 * self.hop)
            .map(|j| {
                let t = start + j as i64;
                if t >= 0 && t < n {
                    self.window[j] * self.noise[t as usize]
                } else {
                    T::zero()
                }
            })
            .collect();
        (start, seg)
    }

    pub fn shape(&self, log_mag: &[T]) -> Result<Vec<T>> {
        let frames = NoiseFilterFrames::new(log_mag.to_vec())?;
        self.check(frames.frames())?;
        let rows = frames.frames();
        let n = self.noise.len() as i64;
        let half = NOISE_HALF as i64;
        let parts: Vec<(i64, Vec<T>)> = (0..self.frame_indices())
            .into_par_iter()
            .map(|f| {
                let row = f.min(rows - 1);
                let mags = Self::magnitudes(&log_mag[row * NOISE_BINS..(row + 1) * NOISE_BINS]);
                let h = self.impulse(&mags);
                let (start, seg) = self.segment(f);
                let out_start = start - half;
                let mut y = vec![T::zero(); seg.len() + 2 * NOISE_HALF];
                for (j, &x) in seg.iter().enumerate() {
                    if x == T::zero() {
                        continue;
                    }
                    for (d, &hd) in h.iter().enumerate() {
                        let v = hd * x;
                        y[j + NOISE_HALF + d] += v;
                        if d > 0 {
                            y[j + NOISE_HALF - d] += v;
                        }
                    }
                }
                (out_start, y)
            })
            .collect();
        let mut out = vec![T::zero(); self.noise.len()];
        for (start, y) in parts {
            for (j, v) in y.into_iter().enumerate() {
                let t = start + j as i64;
                if t >= 0 && t < n {
                    out[t as usize] += v;
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`NoiseShaper::shape`] with respect to the log-magnitudes.
    pub fn shape_vjp(&self, log_mag: &[T], grad: &[T]) -> Vec<T> {
        let rows = log_mag.len() / NOISE_BINS;
        let n = self.noise.len() as i64;
        let half = NOISE_HALF as i64;
        let floor = T::lit(NOISE_LOG_FLOOR);
        let parts: Vec<(usize, Vec<T>)> = (0..self.frame_indices())
            .into_par_iter()
            .map(|f| {
                let row = f.min(rows - 1);
                let (start, seg) = self.segment(f);
                // gh[d] = sum_t g(t) (seg(t - d) + seg(t + d)), d > 0
                let mut gh = vec![T::zero(); NOISE_BINS];
                for (j, &x) in seg.iter().enumerate() {
                    if x == T::zero() {
                        continue;
                    }
                    let t0 = start + j as i64;
                    for (d, slot) in gh.iter_mut().enumerate() {
                        let di = d as i64;
                        let mut acc = T::zero();
                        let tp = t0 + di;
                        if tp >= 0 && tp < n {
                            acc += grad[tp as usize];
                        }
                        if d > 0 {
                            let tm = t0 - di;
                            if tm >= 0 && tm < n {
                                acc += grad[tm as usize];
                            }
                        }
                        *slot += acc * x;
                    }
                }
                let _ = half;
                let lm = &log_mag[row * NOISE_BINS..(row + 1) * NOISE_BINS];
                let g_log = (0..NOISE_BINS)
                    .map(|k| {
                        if lm[k] < floor {
                            return T::zero();
                        }
                        let gm: T = self.basis[k * NOISE_BINS..(k + 1) * NOISE_BINS]
                            .iter()
                            .zip(&gh)
                            .map(|(&b, &g)| b * g)
                            .sum();
                        gm * lm[k].exp()
                    })
                    .collect();
                (row, g_log)
            })
            .collect();
        let mut out = vec![T::zero(); log_mag.len()];
        for (row, g) in parts {
            for (slot, v) in out[row * NOISE_BINS..(row + 1) * NOISE_BINS].iter_mut().zip(g) {
                *slot += v;
            }
        }
        out
    }
}

/// Unit Gaussian noise shaped frame-wise by `frames`.
pub fn shape_noise<T: Real>(frames: &NoiseFilterFrames<T>, len: usize, hop: usize, seed: u64) -> Result<Signal<T>> {
    let shaper = NoiseShaper::<T>::new(len, hop, seed)?;
    Ok(Signal::new(shaper.shape(&frames.log_mag)?, f64::NAN))
}

struct ShapeNoiseOp<T: Real> {
    shaper: Arc<NoiseShaper<T>>,
}

impl<T: Real> Op<T> for ShapeNoiseOp<T> {
    fn name(&self) -> &'static str {
        "shape_noise"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let lm = inputs[0];
        if lm.cols() != NOISE_BINS {
            return Err(Error::shape("shape_noise", format!("{:?} log-magnitudes", lm.shape())));
        }
        Ok(Tensor::column(self.shaper.shape(lm.data())?))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let lm = inputs[0];
        let g = self.shaper.shape_vjp(lm.data(), grad.data());
        vec![Some(Tensor::new(lm.rows(), lm.cols(), g).expect("same shape"))]
    }
}

/// Causal FIR, output truncated to the input length.
pub fn apply_global_fir<T: Real>(x: &[T], taps: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (j, &h) in taps.iter().enumerate().take(t + 1) {
            acc += h * x[t - j];
        }
        *o = acc;
    }
    out
}

/// Adjoints of [`apply_global_fir`] for the signal and the taps.
pub fn apply_global_fir_vjp<T: Real>(x: &[T], taps: &[T], grad: &[T]) -> (Vec<T>, Vec<T>) {
    let n = x.len();
    let gx = (0..n)
        .map(|t| taps.iter().enumerate().take(n - t).map(|(j, &h)| h * grad[t + j]).sum())
        .collect();
    let gh = (0..taps.len())
        .map(|j| (j..n).map(|t| grad[t] * x[t - j]).sum())
        .collect();
    (gx, gh)
}

struct FirOp;

impl<T: Real> Op<T> for FirOp {
    fn name(&self) -> &'static str {
        "fir"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (x, h) = (inputs[0], inputs[1]);
        if x.cols() != 1 || h.cols() != 1 {
            return Err(Error::shape(
                "fir",
                format!("signal {:?}, taps {:?}", x.shape(), h.shape()),
            ));
        }
        Ok(Tensor::column(apply_global_fir(x.data(), h.data())))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (gx, gh) = apply_global_fir_vjp(inputs[0].data(), inputs[1].data(), grad.data());
        vec![Some(Tensor::column(gx)), Some(Tensor::column(gh))]
    }
}

impl<T: Real> Tape<T> {
    /// Oscillator output at the final rate for frame-rate table positions
    /// (`F x 1`).
    pub fn oscillator(&mut self, table_pos: Var, osc: Arc<Oscillator<T>>) -> Result<Var> {
        let fine = self.upsample_linear(table_pos, osc.hop * osc.oversample, osc.len * osc.oversample)?;
        let raw = self.record(
            Box::new(TableReadOp {
                osc: osc.clone(),
                slope: Vec::new(),
            }),
            &[fine],
        )?;
        self.record(Box::new(DecimateOp { osc }), &[raw])
    }

    /// Shaped noise from `F x 256` log-magnitudes.
    pub fn shape_noise(&mut self, log_mag: Var, shaper: Arc<NoiseShaper<T>>) -> Result<Var> {
        self.record(Box::new(ShapeNoiseOp { shaper }), &[log_mag])
    }

    /// Causal FIR of column `x` with column `taps`.
    pub fn fir(&mut self, x: Var, taps: Var) -> Result<Var> {
        self.record(Box::new(FirOp), &[x, taps])
    }
}
