//! Differentiable parameterizations feeding the LP kernels: reflection
//! coefficients, frame-to-sample interpolation, the overlap-add frame-wise
//! approximation of the sample-wise filter, and envelope spectra.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lpc::{lp_backward_ti, lp_forward_ti};
use crate::real::Real;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// Reflection coefficients are squashed into `(-REFLECTION_BOUND, REFLECTION_BOUND)`.
pub const REFLECTION_BOUND: f64 = 0.999;

/// `0.999 * tanh(raw)`.
pub fn squash_reflection<T: Real>(raw: T) -> T {
    T::lit(REFLECTION_BOUND) * raw.tanh()
}

/// Inverse of [`squash_reflection`] for `|k| < 0.999`.
pub fn unsquash_reflection<T: Real>(k: T) -> T {
    (k / T::lit(REFLECTION_BOUND)).atanh()
}

/// `F x M` reflection coefficients, each strictly inside `(-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionFrames<T> {
    order: usize,
    k: Vec<T>,
}

impl<T: Real> ReflectionFrames<T> {
    pub fn new(order: usize, k: Vec<T>) -> Result<Self> {
        if order == 0 || k.len() % order != 0 {
            return Err(Error::shape(
                "ReflectionFrames",
                format!("{} values, order {order}", k.len()),
            ));
        }
        if let Some(index) = k.iter().position(|x| !(x.abs() < T::one())) {
            return Err(Error::ReflectionOutOfRange {
                index,
                value: k[index].to_f64_lossy(),
            });
        }
        Ok(Self { order, k })
    }

    /// Squashes unconstrained values into range.
    pub fn from_raw(order: usize, raw: &[T]) -> Result<Self> {
        Self::new(order, raw.iter().map(|&r| squash_reflection(r)).collect())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn frames(&self) -> usize {
        self.k.len() / self.order
    }

    pub fn row(&self, f: usize) -> &[T] {
        &self.k[f * self.order..(f + 1) * self.order]
    }

    /// Direct-form coefficient rows, `F x M` row-major.
    pub fn to_lpc(&self) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.k.len());
        for f in 0..self.frames() {
            out.extend(reflection_to_lpc(self.row(f))?);
        }
        Ok(out)
    }
}

/// Step-up recursion from reflection coefficients to the direct-form
/// denominator `1 + sum_i a_i z^-i`:
///
/// ```text
/// a^(m)_m = k_m,   a^(m)_i = a^(m-1)_i + k_m a^(m-1)_(m-i)
/// ```
///
/// All poles lie strictly inside the unit circle when every `|k_i| < 1`.
pub fn reflection_to_lpc<T: Real>(k: &[T]) -> Result<Vec<T>> {
    if let Some(index) = k.iter().position(|x| !(x.abs() < T::one())) {
        return Err(Error::ReflectionOutOfRange {
            index,
            value: k[index].to_f64_lossy(),
        });
    }
    Ok(step_up(k))
}

fn step_up<T: Real>(k: &[T]) -> Vec<T> {
    let mut a: Vec<T> = Vec::with_capacity(k.len());
    for (m0, &km) in k.iter().enumerate() {
        let prev = a.clone();
        for i in 0..m0 {
            a[i] = prev[i] + km * prev[m0 - 1 - i];
        }
        a.push(km);
    }
    a
}

/// VJP of the step-up recursion for one row.
fn step_up_vjp<T: Real>(k: &[T], grad_a: &[T]) -> Vec<T> {
    let m = k.len();
    // intermediate orders a^(0) .. a^(M-1)
    let mut stages: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut a: Vec<T> = Vec::new();
    for (m0, &km) in k.iter().enumerate() {
        stages.push(a.clone());
        let prev = a.clone();
        for i in 0..m0 {
            a[i] = prev[i] + km * prev[m0 - 1 - i];
        }
        a.push(km);
    }
    let mut g = grad_a.to_vec();
    let mut grad_k = vec![T::zero(); m];
    for m0 in (0..m).rev() {
        let prev = &stages[m0];
        let km = k[m0];
        let mut gk = g[m0];
        for i in 0..m0 {
            gk += g[i] * prev[m0 - 1 - i];
        }
        grad_k[m0] = gk;
        let mut next = vec![T::zero(); m0];
        for j in 0..m0 {
            next[j] = g[j] + km * g[m0 - 1 - j];
        }
        g = next;
    }
    grad_k
}

/// Step-down recursion, the inverse of [`reflection_to_lpc`]. Fails when the
/// filter is not minimum phase.
pub fn lpc_to_reflection(a: &[f64]) -> Result<Vec<f64>> {
    let mut cur = a.to_vec();
    let mut k = vec![0.0; a.len()];
    for m in (1..=a.len()).rev() {
        let km = cur[m - 1];
        if km.abs() >= 1.0 {
            return Err(Error::ReflectionOutOfRange {
                index: m - 1,
                value: km,
            });
        }
        k[m - 1] = km;
        let denom = 1.0 - km * km;
        let prev: Vec<f64> = (0..m - 1).map(|i| (cur[i] - km * cur[m - 2 - i]) / denom).collect();
        cur = prev;
    }
    Ok(k)
}

/// Moduli of the roots of `z^M + a_1 z^(M-1) + ... + a_M`, found with
/// Aberth-Ehrlich iteration.
pub fn pole_moduli(a: &[f64]) -> Vec<f64> {
    let m = a.len();
    if m == 0 {
        return Vec::new();
    }
    // monic coefficients, highest degree first
    let mut poly = Vec::with_capacity(m + 1);
    poly.push(Complex64::new(1.0, 0.0));
    poly.extend(a.iter().map(|&x| Complex64::new(x, 0.0)));
    let eval = |z: Complex64| -> (Complex64, Complex64) {
        let mut p = poly[0];
        let mut dp = Complex64::new(0.0, 0.0);
        for c in &poly[1..] {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    let bound = 1.0 + a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut roots: Vec<Complex64> = (0..m)
        .map(|i| Complex64::from_polar(0.5 * bound, 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / m as f64))
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..m {
            let (p, dp) = eval(roots[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| Complex64::new(1.0, 0.0) / (roots[i] - roots[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                roots[i] -= step;
                max_step = max_step.max(step.norm());
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
    roots.iter().map(|r| r.norm()).collect()
}

/// `F x M` reflection coefficients (already in range) to `F x M` direct-form
/// rows.
pub(crate) struct ReflectionToLpcOp;

impl<T: Real> Op<T> for ReflectionToLpcOp {
    fn name(&self) -> &'static str {
        "reflection_to_lpc"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let k = inputs[0];
        let mut out = Vec::with_capacity(k.len());
        for f in 0..k.rows() {
            out.extend(reflection_to_lpc(k.row_slice(f))?);
        }
        Tensor::new(k.rows(), k.cols(), out)
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let k = inputs[0];
        let mut out = Vec::with_capacity(k.len());
        for f in 0..k.rows() {
            out.extend(step_up_vjp(k.row_slice(f), grad.row_slice(f)));
        }
        vec![Some(Tensor::new(k.rows(), k.cols(), out).expect("same shape"))]
    }
}

/// Number of frames whose centers `0, hop, 2 hop, ...` cover `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop).max(1)
}

fn check_upsample(frames: usize, hop: usize, len: usize) -> Result<()> {
    if frames == 0 || hop == 0 || len == 0 {
        return Err(Error::InvalidArgument(format!(
            "upsample needs frames, hop and length >= 1 (got {frames}, {hop}, {len})"
        )));
    }
    // at most one hop of hold past the last center, and no frame centered
    // more than one hop past the last sample
    if len > frames * hop || (frames - 1) * hop > len - 1 + hop {
        return Err(Error::InvalidArgument(format!(
            "{len} samples are inconsistent with {frames} frames at hop {hop}"
        )));
    }
    Ok(())
}

/// Bracketing frame and weight of the later frame for sample `t`.
#[inline]
fn bracket(t: usize, hop: usize, frames: usize) -> (usize, usize, f64) {
    let f = t / hop;
    if f + 1 >= frames {
        (frames - 1, frames - 1, 0.0)
    } else {
        (f, f + 1, (t % hop) as f64 / hop as f64)
    }
}

/// Piecewise-linear interpolation of `F x D` frame controls (frame `f`
/// centered at sample `f * hop`) to `len x D`, holding the last frame.
pub fn upsample_linear<T: Real>(frames: &[T], dims: usize, hop: usize, len: usize) -> Result<Vec<T>> {
    if dims == 0 || frames.len() % dims != 0 {
        return Err(Error::shape(
            "upsample_linear",
            format!("{} values, {dims} columns", frames.len()),
        ));
    }
    let nf = frames.len() / dims;
    check_upsample(nf, hop, len)?;
    let mut out = vec![T::zero(); len * dims];
    for t in 0..len {
        let (f0, f1, w) = bracket(t, hop, nf);
        let w = T::lit(w);
        let (r0, r1) = (&frames[f0 * dims..(f0 + 1) * dims], &frames[f1 * dims..(f1 + 1) * dims]);
        for d in 0..dims {
            out[t * dims + d] = r0[d] + w * (r1[d] - r0[d]);
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_linear`]: each sample's adjoint goes to its two
/// bracketing frames by interpolation weight.
pub fn upsample_linear_vjp<T: Real>(grad: &[T], frames: usize, dims: usize, hop: usize) -> Vec<T> {
    let len = grad.len() / dims;
    let mut out = vec![T::zero(); frames * dims];
    for t in 0..len {
        let (f0, f1, w) = bracket(t, hop, frames);
        let w = T::lit(w);
        for d in 0..dims {
            let g = grad[t * dims + d];
            out[f0 * dims + d] += (T::one() - w) * g;
            out[f1 * dims + d] += w * g;
        }
    }
    out
}

pub(crate) struct UpsampleOp {
    pub hop: usize,
    pub len: usize,
}

impl<T: Real> Op<T> for UpsampleOp {
    fn name(&self) -> &'static str {
        "upsample_linear"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let x = inputs[0];
        let out = upsample_linear(x.data(), x.cols(), self.hop, self.len)?;
        Tensor::new(self.len, x.cols(), out)
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0];
        let g = upsample_linear_vjp(grad.data(), x.rows(), x.cols(), self.hop);
        vec![Some(Tensor::new(x.rows(), x.cols(), g).expect("same shape"))]
    }
}

/// Where frame `f` starts relative to `f * hop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameAnchor {
    /// Frame `f` spans `[f hop - size/2, f hop + size/2)`.
    Center,
    /// Frame `f` spans `[f hop, f hop + size)`.
    Start,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FramePlan {
    pub frame_size: usize,
    pub hop: usize,
    pub window: Vec<f64>,
    pub anchor: FrameAnchor,
}

/// Periodic raised-cosine (Hann) window.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

impl FramePlan {
    pub fn new(frame_size: usize, hop: usize, window: Vec<f64>, anchor: FrameAnchor) -> Result<Self> {
        if frame_size == 0 || hop == 0 || window.len() != frame_size {
            return Err(Error::InvalidArgument(format!(
                "frame plan needs size >= 1, hop >= 1 and a window of the frame size (size {frame_size}, hop {hop}, window {})",
                window.len()
            )));
        }
        Ok(Self {
            frame_size,
            hop,
            window,
            anchor,
        })
    }

    /// Centered periodic Hann frames at the given overlap ratio; `0.75`
    /// gives frames of four hops.
    pub fn hann_overlap(hop: usize, overlap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidArgument(format!("overlap {overlap} outside [0, 1)")));
        }
        let size = (hop as f64 / (1.0 - overlap)).round() as usize;
        Self::new(size, hop, hann_periodic(size), FrameAnchor::Center)
    }

    /// One rectangular frame spanning the whole signal.
    pub fn single_frame(len: usize) -> Result<Self> {
        Self::new(len, len, vec![1.0; len], FrameAnchor::Start)
    }

    pub fn overlap(&self) -> f64 {
        1.0 - self.hop as f64 / self.frame_size as f64
    }

    /// The constant the shifted windows sum to, or the relative deviation
    /// when they do not sum to a constant.
    pub fn cola_constant(&self) -> Result<f64> {
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| self.window.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        let max_dev = sums.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
        let deviation = if mean > 0.0 { max_dev / mean } else { f64::INFINITY };
        if deviation > 1e-9 {
            return Err(Error::NotCola { deviation });
        }
        Ok(mean)
    }

    fn offset(&self) -> i64 {
        match self.anchor {
            FrameAnchor::Center => (self.frame_size / 2) as i64,
            FrameAnchor::Start => 0,
        }
    }

    /// `(frame index, first sample)` of every frame overlapping `[0, len)`.
    pub fn frames_for(&self, len: usize) -> Vec<(i64, i64)> {
        let (hop, size, off) = (self.hop as i64, self.frame_size as i64, self.offset());
        let mut f = (off - size).div_euclid(hop);
        let mut out = Vec::new();
        loop {
            let start = f * hop - off;
            if start >= len as i64 {
                break;
            }
            if start + size > 0 {
                out.push((f, start));
            }
            f += 1;
        }
        out
    }
}

struct FrameSpan {
    row: usize,
    start: i64,
}

fn frame_spans(plan: &FramePlan, len: usize, rows: usize) -> Vec<FrameSpan> {
    plan.frames_for(len)
        .into_iter()
        .map(|(f, start)| FrameSpan {
            row: f.clamp(0, rows as i64 - 1) as usize,
            start,
        })
        .collect()
}

/// Runs every windowed frame through its own time-invariant filter from zero
/// state and overlap-adds the results, normalized by the overlap-add
/// constant. Frames past the coefficient rows reuse the nearest row.
pub fn framewise_lp<T: Real>(e: &[T], frames: &[T], order: usize, plan: &FramePlan) -> Result<Vec<T>> {
    Ok(framewise_forward(e, frames, order, plan)?.0)
}

#[allow(clippy::type_complexity)]
fn framewise_forward<T: Real>(e: &[T], frames: &[T], order: usize, plan: &FramePlan) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    if order == 0 || frames.is_empty() || frames.len() % order != 0 {
        return Err(Error::shape(
            "framewise_lp",
            format!("{} coefficients, order {order}", frames.len()),
        ));
    }
    let cola = T::lit(plan.cola_constant()?);
    let rows = frames.len() / order;
    let n = e.len();
    let spans = frame_spans(plan, n, rows);
    let window: Vec<T> = plan.window.iter().map(|&w| T::lit(w)).collect();
    let outputs: Vec<Vec<T>> = spans
        .par_iter()
        .map(|span| {
            let seg: Vec<T> = (0..plan.frame_size)
                .map(|j| {
                    let t = span.start + j as i64;
                    if t >= 0 && (t as usize) < n {
                        window[j] * e[t as usize]
                    } else {
                        T::zero()
                    }
                })
                .collect();
            lp_forward_ti(&seg, &frames[span.row * order..(span.row + 1) * order], None)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![T::zero(); n];
    for (span, y) in spans.iter().zip(&outputs) {
        for (j, &v) in y.iter().enumerate() {
            let t = span.start + j as i64;
            if t >= 0 && (t as usize) < n {
                out[t as usize] += v / cola;
            }
        }
    }
    Ok((out, outputs))
}

/// Tape op for [`framewise_lp`]: inputs `e` (`n x 1`) and coefficient rows
/// (`F x M`). Keeps every frame's filter output for the backward pass.
pub(crate) struct FramewiseLpOp<T> {
    pub plan: FramePlan,
    frame_outputs: Vec<Vec<T>>,
}

impl<T: Real> FramewiseLpOp<T> {
    pub fn new(plan: FramePlan) -> Self {
        Self {
            plan,
            frame_outputs: Vec::new(),
        }
    }
}

impl<T: Real> Op<T> for FramewiseLpOp<T> {
    fn name(&self) -> &'static str {
        "framewise_lp"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (e, a) = (inputs[0], inputs[1]);
        if e.cols() != 1 {
            return Err(Error::shape("framewise_lp", format!("excitation {:?}", e.shape())));
        }
        let (out, frames) = framewise_forward(e.data(), a.data(), a.cols(), &self.plan)?;
        self.frame_outputs = frames;
        Ok(Tensor::column(out))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (e, a) = (inputs[0], inputs[1]);
        let order = a.cols();
        let n = e.rows();
        let cola = T::lit(self.plan.cola_constant().expect("validated in forward"));
        let spans = frame_spans(&self.plan, n, a.rows());
        let window: Vec<T> = self.plan.window.iter().map(|&w| T::lit(w)).collect();
        let g = grad.data();
        let per_frame: Vec<(Vec<T>, Vec<T>)> = spans
            .par_iter()
            .zip(self.frame_outputs.par_iter())
            .map(|(span, y)| {
                let gy: Vec<T> = (0..self.plan.frame_size)
                    .map(|j| {
                        let t = span.start + j as i64;
                        if t >= 0 && (t as usize) < n {
                            g[t as usize] / cola
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                lp_backward_ti(&gy, a.row_slice(span.row), y).expect("validated in forward")
            })
            .collect();
        let mut ge = vec![T::zero(); n];
        let mut ga = vec![T::zero(); a.len()];
        for (span, (ge_seg, ga_row)) in spans.iter().zip(per_frame) {
            for (j, &v) in ge_seg.iter().enumerate() {
                let t = span.start + j as i64;
                if t >= 0 && (t as usize) < n {
                    ge[t as usize] += window[j] * v;
                }
            }
            for (slot, v) in ga[span.row * order..(span.row + 1) * order].iter_mut().zip(ga_row) {
                *slot += v;
            }
        }
        vec![
            Some(Tensor::column(ge)),
            Some(Tensor::new(a.rows(), order, ga).expect("same shape")),
        ]
    }
}

/// Magnitude of `1 / |1 + sum_i a_i e^(-j w i)|` at `n_freq` frequencies
/// evenly spaced over `[0, pi]`. A zero on the grid gives infinity.
pub fn lpc_to_spectrum<T: Real>(a: &[T], n_freq: usize) -> Result<Vec<f64>> {
    if n_freq < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_freq must be at least 2, got {n_freq}"
        )));
    }
    Ok((0..n_freq)
        .map(|k| {
            let w = std::f64::consts::PI * k as f64 / (n_freq - 1) as f64;
            let mut acc = Complex64::new(1.0, 0.0);
            for (i, &ai) in a.iter().enumerate() {
                acc += Complex64::from_polar(ai.to_f64_lossy(), -w * (i + 1) as f64);
            }
            let den = acc.norm();
            if den == 0.0 {
                f64::INFINITY
            } else {
                1.0 / den
            }
        })
        .collect())
}

/// [`lpc_to_spectrum`] in dB.
pub fn lpc_to_spectrum_db<T: Real>(a: &[T], n_freq: usize) -> Result<Vec<f64>> {
    Ok(lpc_to_spectrum(a, n_freq)?
        .into_iter()
        .map(|m| 20.0 * m.log10())
        .collect())
}

impl<T: Real> Tape<T> {
    /// Row-wise step-up of reflection coefficients (`F x M`).
    pub fn reflection_to_lpc(&mut self, k: Var) -> Result<Var> {
        self.record(Box::new(ReflectionToLpcOp), &[k])
    }

    /// Linear interpolation of `F x D` frame controls to `len x D`.
    pub fn upsample_linear(&mut self, frames: Var, hop: usize, len: usize) -> Result<Var> {
        self.record(Box::new(UpsampleOp { hop, len }), &[frames])
    }

    /// Frame-wise overlap-add LP of `e` with `F x M` coefficient rows.
    pub fn framewise_lp(&mut self, e: Var, frames: Var, plan: FramePlan) -> Result<Var> {
        self.record(Box::new(FramewiseLpOp::new(plan)), &[e, frames])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpc::lp_forward_tv;
    use crate::CoeffTrack;

    #[test]
    fn step_up_examples() {
        assert_eq!(reflection_to_lpc(&[0.5]).unwrap(), vec![0.5]);
        let a = reflection_to_lpc(&[0.5f64, 0.25]).unwrap();
        assert!((a[0] - 0.625).abs() < 1e-15 && (a[1] - 0.25).abs() < 1e-15);
        assert!(pole_moduli(&a).iter().all(|&r| r < 1.0));
        assert_eq!(reflection_to_lpc(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn step_up_rejects_out_of_range() {
        assert!(matches!(
            reflection_to_lpc(&[0.2, 1.0]),
            Err(Error::ReflectionOutOfRange { index: 1, .. })
        ));
        assert!(reflection_to_lpc(&[-1.5]).is_err());
    }

    #[test]
    fn step_down_inverts_step_up() {
        let k = [0.9, -0.5, 0.3, -0.8, 0.1];
        let a = reflection_to_lpc(&k).unwrap();
        let back = lpc_to_reflection(&a).unwrap();
        for (x, y) in k.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(lpc_to_reflection(&[-2.5, 1.5]).is_err());
    }

    #[test]
    fn pole_moduli_known_roots() {
        // (z - 0.5)(z + 0.8) = z^2 + 0.3 z - 0.4
        let mut r = pole_moduli(&[0.3, -0.4]);
        r.sort_by(f64::total_cmp);
        assert!((r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.8).abs() < 1e-12);
        // z^2 + 0.81 has |z| = 0.9 twice
        assert!(pole_moduli(&[0.0, 0.81]).iter().all(|m| (m - 0.9).abs() < 1e-12));
    }

    #[test]
    fn upsample_examples() {
        assert_eq!(upsample_linear(&[2.0], 1, 4, 3).unwrap(), vec![2.0; 3]);
        assert_eq!(
            upsample_linear(&[0.0, 1.0], 1, 4, 5).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let g = upsample_linear_vjp(&[1.0f64; 5], 2, 1, 4);
        assert_eq!(g, vec![2.5, 2.5]);
    }

    #[test]
    fn upsample_edge_policy() {
        // more than one hop of hold
        assert!(upsample_linear(&[0.0, 1.0], 1, 4, 9).is_err());
        // a frame centered well beyond the signal
        assert!(upsample_linear(&[0.0, 1.0, 2.0, 3.0], 1, 4, 3).is_err());
        // held tail inside one hop
        assert_eq!(upsample_linear(&[0.0, 1.0], 1, 4, 7).unwrap()[6], 1.0);
    }

    #[test]
    fn interpolation_weights_sum_to_one() {
        let frames = 7;
        let hop = 5;
        for t in 0..frames * hop {
            let (_, _, w) = bracket(t, hop, frames);
            assert!((0.0..1.0).contains(&w));
        }
        let ones = upsample_linear(&vec![1.0; frames * 3], 3, hop, frames * hop).unwrap();
        assert!(ones.iter().all(|&x| (x - 1.0f64).abs() < 1e-15));
    }

    #[test]
    fn hann_quarter_hop_is_cola() {
        let plan = FramePlan::hann_overlap(240, 0.75).unwrap();
        assert_eq!(plan.frame_size, 960);
        assert!((plan.cola_constant().unwrap() - 2.0).abs() < 1e-12);
        let bad = FramePlan::new(960, 300, hann_periodic(960), FrameAnchor::Center).unwrap();
        assert!(matches!(bad.cola_constant(), Err(Error::NotCola { .. })));
    }

    #[test]
    fn framewise_single_frame_matches_ti() {
        let e: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let a = [0.4, -0.2, 0.1];
        let plan = FramePlan::single_frame(e.len()).unwrap();
        assert_eq!(
            framewise_lp(&e, &a, 3, &plan).unwrap(),
            lp_forward_ti(&e, &a, None).unwrap()
        );
    }

    #[test]
    fn framewise_identity_reconstructs() {
        let e: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.1).sin()).collect();
        let plan = FramePlan::hann_overlap(40, 0.75).unwrap();
        let out = framewise_lp(&e, &vec![0.0; 25 * 2], 2, &plan).unwrap();
        for (x, y) in out.iter().zip(&e) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn framewise_differs_from_samplewise() {
        let n = 800;
        let e: Vec<f64> = (0..n).map(|i| ((i * 7919) % 23) as f64 / 23.0 - 0.5).collect();
        let row = reflection_to_lpc(&[0.9, -0.6]).unwrap();
        let frames = frame_count(n, 40);
        let coeffs: Vec<f64> = (0..frames).flat_map(|_| row.clone()).collect();
        let fw = framewise_lp(&e, &coeffs, 2, &FramePlan::hann_overlap(40, 0.75).unwrap()).unwrap();
        let sw = lp_forward_tv(&e, &CoeffTrack::constant(&row, n), None).unwrap();
        let diff: f64 = fw.iter().zip(&sw).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff > 1e-3, "frame-wise and sample-wise renders coincide: {diff}");
    }

    #[test]
    fn spectrum_examples() {
        assert!(lpc_to_spectrum(&[0.0f64; 5], 33).unwrap().iter().all(|&m| m == 1.0));
        let s = lpc_to_spectrum(&[-0.5], 9).unwrap();
        assert!((s[0] / s[8] - 3.0).abs() < 1e-12);
        let a = reflection_to_lpc(&[0.95, -0.9, 0.8, 0.99]).unwrap();
        assert!(lpc_to_spectrum(&a, 1024).unwrap().iter().all(|m| m.is_finite()));
        assert!(lpc_to_spectrum(&[-1.0], 3).unwrap()[0].is_infinite());
        assert!(lpc_to_spectrum(&[0.1], 1).is_err());
    }
}
