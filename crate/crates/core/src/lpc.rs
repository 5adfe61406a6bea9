//! All-pole (linear prediction) filtering with time-invariant and
//! sample-wise time-varying coefficients, together with their analytic
//! reverse-mode gradients.
//!
//! The synthesis recursion is
//!
//! ```text
//! s(t) = e(t) - sum_{i=1..M} a_i(t) s(t - i),     s(t < 0) = zi or 0
//! ```
//!
//! Both backward passes reuse the forward kernel. The excitation adjoint is
//! the same recursion run backwards in time over the adjoint of `s`, with the
//! coefficient of lag `i` at time `t` read from `a_i(t + i)` (the shifted
//! track). Coefficient adjoints then follow from a single product with the
//! saved output: `dL/da_i(t) = -dL/de(t) * s(t - i)`.

use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::real::Real;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// Per-sample coefficients stored time-major: row `t` holds
/// `[a_1(t), ..., a_M(t)]` contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTrack<T> {
    order: usize,
    coeffs: Vec<T>,
}

impl<T: Real> CoeffTrack<T> {
    pub fn new(order: usize, coeffs: Vec<T>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("filter order must be at least 1".into()));
        }
        if coeffs.len() % order != 0 {
            return Err(Error::shape(
                "CoeffTrack::new",
                format!("{} values do not divide into rows of order {order}", coeffs.len()),
            ));
        }
        Ok(Self { order, coeffs })
    }

    pub fn zeros(len: usize, order: usize) -> Self {
        assert!(order > 0, "filter order must be at least 1");
        Self {
            order,
            coeffs: vec![T::zero(); len * order],
        }
    }

    /// Repeats one coefficient row `len` times.
    pub fn constant(row: &[T], len: usize) -> Self {
        assert!(!row.is_empty(), "filter order must be at least 1");
        let mut coeffs = Vec::with_capacity(row.len() * len);
        for _ in 0..len {
            coeffs.extend_from_slice(row);
        }
        Self {
            order: row.len(),
            coeffs,
        }
    }

    /// Builds a track from per-lag columns, `columns[i][t] = a_{i+1}(t)`.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let order = columns.len();
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::shape("CoeffTrack::from_columns", "columns differ in length"));
        }
        let mut track = Self::zeros(len, order.max(1));
        for (i, col) in columns.iter().enumerate() {
            for (t, &v) in col.iter().enumerate() {
                track.coeffs[t * order + i] = v;
            }
        }
        Ok(track)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of time steps (rows).
    #[inline]
    pub fn len(&self) -> usize {
        self.coeffs.len() / self.order
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[T] {
        &self.coeffs[t * self.order..(t + 1) * self.order]
    }

    /// Coefficient `a_lag(t)` with `lag` in `1..=M`.
    #[inline]
    pub fn get(&self, t: usize, lag: usize) -> T {
        self.coeffs[t * self.order + lag - 1]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.coeffs
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<T> {
        self.coeffs
    }

    /// Sums every column over time.
    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.order];
        for row in self.coeffs.chunks_exact(self.order) {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }
}

/// Track with entry `(t, i) = a_i(t + i)`, zero where `t + i` runs past the
/// end of the signal.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedCoeffTrack<T>(CoeffTrack<T>);

impl<T: Real> ShiftedCoeffTrack<T> {
    pub fn track(&self) -> &CoeffTrack<T> {
        &self.0
    }

    pub fn into_track(self) -> CoeffTrack<T> {
        self.0
    }
}

pub fn shift_coeffs<T: Real>(a: &CoeffTrack<T>) -> ShiftedCoeffTrack<T> {
    let (n, m) = (a.len(), a.order());
    let mut out = CoeffTrack::zeros(n, m);
    for t in 0..n {
        for lag in 1..=m {
            if t + lag < n {
                out.coeffs[t * m + lag - 1] = a.get(t + lag, lag);
            }
        }
    }
    ShiftedCoeffTrack(out)
}

/// Shared recursion. `stride` is the distance between coefficient rows:
/// `order` for a time-varying track, `0` for one constant row.
fn recursion<T: Real>(e: &[T], coeffs: &[T], order: usize, stride: usize, zi: Option<&[T]>) -> Vec<T> {
    let n = e.len();
    let mut s = vec![T::zero(); n];
    let head = n.min(order);
    for t in 0..head {
        let row = &coeffs[t * stride..t * stride + order];
        let mut acc = e[t];
        for (k, &a) in row.iter().enumerate() {
            let lag = k + 1;
            let past = if lag <= t {
                s[t - lag]
            } else {
                zi.map_or(T::zero(), |z| z[lag - t - 1])
            };
            acc -= a * past;
        }
        s[t] = acc;
    }
    for t in head..n {
        let row = &coeffs[t * stride..t * stride + order];
        let hist = &s[t - order..t];
        let mut acc = e[t];
        for (&a, &past) in row.iter().zip(hist.iter().rev()) {
            acc -= a * past;
        }
        s[t] = acc;
    }
    s
}

fn check_zi<T: Real>(zi: Option<&[T]>, order: usize) -> Result<()> {
    if let Some(z) = zi {
        if z.len() != order {
            return Err(Error::shape(
                "lp initial state",
                format!("expected {order} values, got {}", z.len()),
            ));
        }
        ensure_finite("initial state", z)?;
    }
    Ok(())
}

/// Time-invariant all-pole filter. `zi` holds `[s(-1), ..., s(-M)]`.
///
/// Unstable coefficients are accepted; the output may overflow.
pub fn lp_forward_ti<T: Real>(e: &[T], a: &[T], zi: Option<&[T]>) -> Result<Vec<T>> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("filter order must be at least 1".into()));
    }
    ensure_finite("excitation", e)?;
    ensure_finite("coefficients", a)?;
    check_zi(zi, a.len())?;
    Ok(recursion(e, a, a.len(), 0, zi))
}

/// Sample-wise time-varying all-pole filter; `a` must have one row per sample.
pub fn lp_forward_tv<T: Real>(e: &[T], a: &CoeffTrack<T>, zi: Option<&[T]>) -> Result<Vec<T>> {
    if a.len() != e.len() {
        return Err(Error::shape(
            "lp_forward_tv",
            format!("signal has {} samples, coefficient track has {} rows", e.len(), a.len()),
        ));
    }
    ensure_finite("excitation", e)?;
    ensure_finite("coefficients", a.as_slice())?;
    check_zi(zi, a.order())?;
    Ok(recursion(e, a.as_slice(), a.order(), a.order(), zi))
}

/// Filters a batch of independent signals in parallel.
pub fn lp_forward_tv_batch<T: Real>(items: &[(&[T], &CoeffTrack<T>)]) -> Result<Vec<Vec<T>>> {
    items.par_iter().map(|(e, a)| lp_forward_tv(e, a, None)).collect()
}

fn reversed<T: Copy>(x: &[T]) -> Vec<T> {
    x.iter().rev().copied().collect()
}

/// `-dL/de(t) * s(t - i)` for every `(t, i)`.
fn coeff_grads<T: Real>(grad_e: &[T], s: &[T], order: usize) -> CoeffTrack<T> {
    let n = s.len();
    let mut g = CoeffTrack::zeros(n, order);
    for t in 0..n {
        let ge = grad_e[t];
        let row = &mut g.coeffs[t * order..(t + 1) * order];
        for (k, slot) in row.iter_mut().enumerate() {
            let lag = k + 1;
            if lag <= t {
                *slot = -ge * s[t - lag];
            }
        }
    }
    g
}

/// Backward pass of [`lp_forward_tv`] (zero initial state).
///
/// Returns `(dL/de, dL/dA)` given `dL/ds` and the saved output `s`.
pub fn lp_backward_tv<T: Real>(grad_s: &[T], a: &CoeffTrack<T>, s: &[T]) -> Result<(Vec<T>, CoeffTrack<T>)> {
    let n = grad_s.len();
    if a.len() != n || s.len() != n {
        return Err(Error::shape(
            "lp_backward_tv",
            format!(
                "grad has {n} samples, track {} rows, saved output {} samples",
                a.len(),
                s.len()
            ),
        ));
    }
    let m = a.order();
    let coeffs = a.as_slice();
    // The same recursion run backwards in time with the shifted coefficients
    // a(t + i, i), read in place: row t + i, column i sits at t m + i (m + 1) - 1.
    let mut grad_e = vec![T::zero(); n];
    for t in (0..n).rev() {
        let mut acc = grad_s[t];
        for lag in 1..=m.min(n - 1 - t) {
            acc -= coeffs[t * m + lag * (m + 1) - 1] * grad_e[t + lag];
        }
        grad_e[t] = acc;
    }
    let grad_a = coeff_grads(&grad_e, s, m);
    Ok((grad_e, grad_a))
}

/// Backward pass of [`lp_forward_ti`] (zero initial state). One filter pass
/// gives the excitation adjoint; the coefficient adjoint is its product with
/// the saved output summed over time.
pub fn lp_backward_ti<T: Real>(grad_s: &[T], a: &[T], s: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if s.len() != grad_s.len() {
        return Err(Error::shape(
            "lp_backward_ti",
            format!("grad has {} samples, saved output {}", grad_s.len(), s.len()),
        ));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("filter order must be at least 1".into()));
    }
    let mut grad_e = recursion(&reversed(grad_s), a, a.len(), 0, None);
    grad_e.reverse();
    let mut grad_a = vec![T::zero(); a.len()];
    for (k, g) in grad_a.iter_mut().enumerate() {
        let lag = k + 1;
        let mut acc = T::zero();
        for t in lag..s.len() {
            acc -= grad_e[t] * s[t - lag];
        }
        *g = acc;
    }
    Ok((grad_e, grad_a))
}

/// Tape op for [`lp_forward_tv`]: inputs `e` (`n x 1`) and `A` (`n x M`).
/// Saves the forward output and the coefficients.
pub(crate) struct LpTvOp;

impl<T: Real> Op<T> for LpTvOp {
    fn name(&self) -> &'static str {
        "lp_tv"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (e, a) = (inputs[0], inputs[1]);
        if e.cols() != 1 || a.rows() != e.rows() {
            return Err(Error::shape(
                "lp_tv",
                format!("excitation {:?}, coefficients {:?}", e.shape(), a.shape()),
            ));
        }
        let track = CoeffTrack::new(a.cols(), a.data().to_vec())?;
        Ok(Tensor::column(lp_forward_tv(e.data(), &track, None)?))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let a = inputs[1];
        let track = CoeffTrack::new(a.cols(), a.data().to_vec()).expect("validated in forward");
        let (ge, ga) = lp_backward_tv(grad.data(), &track, output.data()).expect("validated in forward");
        vec![
            Some(Tensor::column(ge)),
            Some(Tensor::new(a.rows(), a.cols(), ga.into_vec()).expect("same shape")),
        ]
    }
}

/// Tape op for [`lp_forward_ti`]: inputs `e` (`n x 1`) and `a` (`1 x M`).
pub(crate) struct LpTiOp;

impl<T: Real> Op<T> for LpTiOp {
    fn name(&self) -> &'static str {
        "lp_ti"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (e, a) = (inputs[0], inputs[1]);
        if e.cols() != 1 || a.rows() != 1 {
            return Err(Error::shape(
                "lp_ti",
                format!("excitation {:?}, coefficients {:?}", e.shape(), a.shape()),
            ));
        }
        Ok(Tensor::column(lp_forward_ti(e.data(), a.data(), None)?))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (ge, ga) = lp_backward_ti(grad.data(), inputs[1].data(), output.data()).expect("validated in forward");
        vec![Some(Tensor::column(ge)), Some(Tensor::row(ga))]
    }
}

impl<T: Real> Tape<T> {
    /// Sample-wise LP filter of `e` (`n x 1`) with coefficient rows `a` (`n x M`).
    pub fn lp_tv(&mut self, e: Var, a: Var) -> Result<Var> {
        self.record(Box::new(LpTvOp), &[e, a])
    }

    /// Time-invariant LP filter of `e` (`n x 1`) with one row `a` (`1 x M`).
    pub fn lp_ti(&mut self, e: Var, a: Var) -> Result<Var> {
        self.record(Box::new(LpTiOp), &[e, a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
        }
    }

    #[test]
    fn ti_single_pole_impulse() {
        let s = lp_forward_ti(&[1.0, 0.0, 0.0, 0.0], &[-0.5], None).unwrap();
        assert_close(&s, &[1.0, 0.5, 0.25, 0.125], 0.0);
    }

    #[test]
    fn ti_zero_coeffs_is_identity() {
        let e = [0.3, -1.0, 2.5, 0.0, 7.0];
        assert_eq!(lp_forward_ti(&e, &[0.0, 0.0, 0.0], None).unwrap(), e.to_vec());
        assert_eq!(lp_forward_ti(&[0.0f64; 6], &[0.4, -0.2], None).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn ti_rejects_non_finite() {
        assert!(matches!(
            lp_forward_ti(&[1.0, f64::NAN], &[0.1], None),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn ti_accepts_unstable_filter() {
        let s = lp_forward_ti(&[1.0, 0.0, 0.0], &[-2.0], None).unwrap();
        assert_eq!(s, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn initial_state_continues_a_split_signal() {
        let a = [0.3, -0.2];
        let e: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let whole = lp_forward_ti(&e, &a, None).unwrap();
        let first = lp_forward_ti(&e[..6], &a, None).unwrap();
        let zi = [first[5], first[4]];
        let second = lp_forward_ti(&e[6..], &a, Some(&zi)).unwrap();
        assert_close(&whole[6..], &second, 1e-15);
    }

    #[test]
    fn tv_worked_example() {
        let a = CoeffTrack::new(1, vec![0.0, -1.0, -0.5]).unwrap();
        let s = lp_forward_tv(&[1.0, 1.0, 1.0], &a, None).unwrap();
        assert_eq!(s, vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn tv_constant_rows_match_ti_bitwise() {
        let row = [0.5, -0.3, 0.1];
        let e: Vec<f64> = (0..50).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let tv = lp_forward_tv(&e, &CoeffTrack::constant(&row, e.len()), None).unwrap();
        let ti = lp_forward_ti(&e, &row, None).unwrap();
        assert_eq!(tv, ti);
    }

    #[test]
    fn tv_length_mismatch() {
        let a = CoeffTrack::<f64>::zeros(3, 2);
        assert!(matches!(
            lp_forward_tv(&[1.0, 2.0], &a, None),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(lp_backward_tv(&[1.0, 2.0], &a, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn shift_examples() {
        let a = CoeffTrack::new(1, vec![0.0, -1.0, -0.5]).unwrap();
        assert_eq!(shift_coeffs(&a).track().as_slice(), &[-1.0, -0.5, 0.0]);

        let c = CoeffTrack::constant(&[1.0, 2.0, 3.0], 5);
        let sh = shift_coeffs(&c);
        for t in 0..5 {
            for lag in 1..=3 {
                let want = if t + lag < 5 { lag as f64 } else { 0.0 };
                assert_eq!(sh.track().get(t, lag), want);
            }
        }

        let short = CoeffTrack::constant(&[1.0, 1.0, 1.0, 1.0], 2);
        let sh = shift_coeffs(&short);
        assert_eq!(sh.track().row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sh.track().row(1), &[0.0; 4]);
    }

    #[test]
    fn tv_backward_worked_example() {
        let a = CoeffTrack::new(1, vec![0.0, -1.0, -0.5]).unwrap();
        let s = lp_forward_tv(&[1.0, 1.0, 1.0], &a, None).unwrap();
        let (ge, ga) = lp_backward_tv(&[0.0, 0.0, 1.0], &a, &s).unwrap();
        assert_close(&ge, &[0.5, 0.5, 1.0], 1e-15);
        assert_close(ga.as_slice(), &[0.0, -0.5, -2.0], 1e-15);
    }

    #[test]
    fn tv_backward_without_recursion() {
        let a = CoeffTrack::<f64>::zeros(4, 2);
        let s = [1.0, 2.0, 3.0, 4.0];
        let gs = [0.5, -1.0, 2.0, 0.25];
        let (ge, ga) = lp_backward_tv(&gs, &a, &s).unwrap();
        assert_eq!(ge, gs.to_vec());
        for t in 0..4 {
            for lag in 1..=2 {
                let want = if lag <= t { -gs[t] * s[t - lag] } else { 0.0 };
                assert_eq!(ga.get(t, lag), want);
            }
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradients() {
        let a = CoeffTrack::constant(&[0.2, -0.1], 5);
        let s = lp_forward_tv(&[1.0, 0.0, 2.0, 0.0, 1.0], &a, None).unwrap();
        let (ge, ga) = lp_backward_tv(&[0.0; 5], &a, &s).unwrap();
        assert!(ge.iter().chain(ga.as_slice()).all(|&x| x == 0.0));
    }

    #[test]
    fn ti_backward_closed_form() {
        // s(2) = a1^2 for an impulse through 1 + a1 z^-1
        let a = [-0.5];
        let s = lp_forward_ti(&[1.0, 0.0, 0.0], &a, None).unwrap();
        let (ge, ga) = lp_backward_ti(&[0.0, 0.0, 1.0], &a, &s).unwrap();
        assert_close(&ga, &[-1.0], 1e-15);
        assert_close(&ge, &[0.25, 0.5, 1.0], 1e-15);
    }

    #[test]
    fn ti_backward_of_terminal_impulse_is_reversed_impulse_response() {
        let a = [0.4, -0.3];
        let n = 8;
        let mut delta = vec![0.0; n];
        delta[0] = 1.0;
        let h = lp_forward_ti(&delta, &a, None).unwrap();
        let mut gs = vec![0.0; n];
        gs[n - 1] = 1.0;
        let s = vec![0.0; n];
        let (ge, _) = lp_backward_ti(&gs, &a, &s).unwrap();
        let want: Vec<f64> = h.iter().rev().copied().collect();
        assert_close(&ge, &want, 1e-15);
        assert_eq!(ge[n - 1], 1.0);
    }

    #[test]
    fn ti_backward_identity_filter() {
        let gs = [1.0, -2.0, 3.0];
        let (ge, _) = lp_backward_ti(&gs, &[0.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(ge, gs.to_vec());
    }

    #[test]
    fn f32_kernels_run() {
        let a = CoeffTrack::new(1, vec![0.0f32, -1.0, -0.5]).unwrap();
        let s = lp_forward_tv(&[1.0f32, 1.0, 1.0], &a, None).unwrap();
        assert_eq!(s, vec![1.0f32, 2.0, 2.0]);
        let (ge, _) = lp_backward_tv(&[0.0f32, 0.0, 1.0], &a, &s).unwrap();
        assert_eq!(ge, vec![0.5f32, 0.5, 1.0]);
    }

    #[test]
    fn batch_matches_single() {
        let a = CoeffTrack::constant(&[0.1, 0.2], 4);
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 2.0, 3.0];
        let out = lp_forward_tv_batch(&[(&e1[..], &a), (&e2[..], &a)]).unwrap();
        assert_eq!(out[0], lp_forward_tv(&e1, &a, None).unwrap());
        assert_eq!(out[1], lp_forward_tv(&e2, &a, None).unwrap());
    }
}
