//! Brute-force references for the LP gradients.
//!
//! None of this is fast. The time-varying filter is expanded into explicit
//! per-sample impulse responses `b_d(t)` (`s(t) = e(t) + sum_d b_d(t) e(t-d)`),
//! once by enumerating coefficient compositions and once by pushing impulses
//! through the recursion, and the adjoints are also computed by unrolling the
//! recursion into a scalar graph. The fast kernels in [`crate::lpc`] are
//! checked against these.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lpc::{lp_forward_ti, lp_forward_tv, CoeffTrack};
use crate::real::Real;

/// Largest delay the composition oracle will expand.
pub const MAX_ORACLE_DELAY: usize = 16;

/// An ordered composition of `d` into parts drawn from `1..=M`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Composition {
    pub parts: Vec<usize>,
}

impl Composition {
    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

type CompositionMemo = Mutex<HashMap<(usize, usize), Arc<Vec<Composition>>>>;

fn memo() -> &'static CompositionMemo {
    static MEMO: OnceLock<CompositionMemo> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// All ordered compositions of `d` with parts at most `max_part`, built by
/// prepending each admissible first part `i` to the compositions of `d - i`.
/// `d = 0` yields the single empty composition.
pub fn enumerate_compositions(d: usize, max_part: usize) -> Result<Arc<Vec<Composition>>> {
    if max_part == 0 {
        return Err(Error::InvalidArgument("part bound must be at least 1".into()));
    }
    if d > MAX_ORACLE_DELAY {
        return Err(Error::InvalidArgument(format!(
            "delay {d} exceeds the oracle cap of {MAX_ORACLE_DELAY}"
        )));
    }
    if let Some(hit) = memo().lock().unwrap().get(&(d, max_part)) {
        return Ok(hit.clone());
    }
    let out = if d == 0 {
        vec![Composition { parts: Vec::new() }]
    } else {
        let mut out = Vec::new();
        for first in 1..=d.min(max_part) {
            for rest in enumerate_compositions(d - first, max_part)?.iter() {
                let mut parts = Vec::with_capacity(rest.parts.len() + 1);
                parts.push(first);
                parts.extend_from_slice(&rest.parts);
                out.push(Composition { parts });
            }
        }
        out
    };
    let out = Arc::new(out);
    memo().lock().unwrap().insert((d, max_part), out.clone());
    Ok(out)
}

/// Per-sample impulse response taps: entry `(t, d) = b_d(t)` for
/// `d in 1..=d_max`, zero whenever `d > t`.
#[derive(Clone, Debug, PartialEq)]
pub struct IirTrack<T> {
    len: usize,
    d_max: usize,
    b: Vec<T>,
}

impl<T: Real> IirTrack<T> {
    fn zeros(len: usize, d_max: usize) -> Self {
        Self {
            len,
            d_max,
            b: vec![T::zero(); len * d_max],
        }
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `b_d(t)`; `d` in `1..=d_max`.
    pub fn get(&self, t: usize, d: usize) -> T {
        self.b[t * self.d_max + d - 1]
    }

    fn set(&mut self, t: usize, d: usize, v: T) {
        self.b[t * self.d_max + d - 1] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.b
    }
}

fn check_d_max(len: usize, d_max: usize) -> Result<()> {
    if d_max > len.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "d_max {d_max} exceeds the last sample index {}",
            len.saturating_sub(1)
        )));
    }
    if d_max > MAX_ORACLE_DELAY {
        return Err(Error::InvalidArgument(format!(
            "d_max {d_max} exceeds the oracle cap of {MAX_ORACLE_DELAY}"
        )));
    }
    Ok(())
}

/// Evaluates `b_d(t)` as a signed sum over compositions `q` of `d`:
/// `(-1)^|q| * prod_j a_{q_j}(t - (q_1 + ... + q_{j-1}))`.
///
/// For `d <= t` every referenced time index is at least `q_last >= 1`, so no
/// coefficient before `t = 0` is ever read.
pub fn b_from_compositions<T: Real>(a: &CoeffTrack<T>, d_max: usize) -> Result<IirTrack<T>> {
    let n = a.len();
    check_d_max(n, d_max)?;
    let mut out = IirTrack::zeros(n, d_max);
    for d in 1..=d_max {
        let comps = enumerate_compositions(d, a.order())?;
        for t in d..n {
            let mut total = T::zero();
            for q in comps.iter() {
                let mut prod = if q.len() % 2 == 0 { T::one() } else { -T::one() };
                let mut offset = 0;
                for &part in &q.parts {
                    prod *= a.get(t - offset, part);
                    offset += part;
                }
                total += prod;
            }
            out.set(t, d, total);
        }
    }
    Ok(out)
}

/// Reads `b_d(tau + d)` off the response to a unit impulse at every `tau`.
/// Also confirms the leading tap: the response at `tau` itself must be 1.
pub fn b_by_impulse<T: Real>(a: &CoeffTrack<T>, d_max: usize) -> Result<IirTrack<T>> {
    let n = a.len();
    check_d_max(n, d_max)?;
    let responses: Vec<(usize, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|tau| {
            let mut delta = vec![T::zero(); n];
            delta[tau] = T::one();
            lp_forward_tv(&delta, a, None).map(|s| (tau, s))
        })
        .collect::<Result<_>>()?;
    let mut out = IirTrack::zeros(n, d_max);
    for (tau, s) in responses {
        if s[tau] != T::one() {
            return Err(Error::Numerical(format!(
                "impulse at {tau} did not pass through unchanged"
            )));
        }
        for d in 1..=d_max {
            if tau + d < n {
                out.set(tau + d, d, s[tau + d]);
            }
        }
    }
    Ok(out)
}

/// Excitation adjoint by explicit anti-causal filtering with the expanded
/// taps: `dL/de(t) = dL/ds(t) + sum_d b_d(t + d) dL/ds(t + d)`.
///
/// Exact only when `b.d_max() >= len - 1`.
pub fn grad_e_via_iir<T: Real>(grad_s: &[T], b: &IirTrack<T>) -> Result<Vec<T>> {
    let n = grad_s.len();
    if b.len() != n {
        return Err(Error::shape(
            "grad_e_via_iir",
            format!("gradient has {n} samples, taps cover {}", b.len()),
        ));
    }
    Ok((0..n)
        .map(|t| {
            let mut acc = grad_s[t];
            for d in 1..=b.d_max().min(n - 1 - t) {
                acc += b.get(t + d, d) * grad_s[t + d];
            }
            acc
        })
        .collect())
}

/// Excitation adjoint computed with full-length impulse responses, one per
/// time step: `O(T^2 M)` time, `O(T)` memory. No delay cap.
pub fn grad_e_by_impulse_sweep<T: Real>(grad_s: &[T], a: &CoeffTrack<T>) -> Result<Vec<T>> {
    let n = grad_s.len();
    if a.len() != n {
        return Err(Error::shape(
            "grad_e_by_impulse_sweep",
            "track and gradient lengths differ",
        ));
    }
    let m = a.order();
    Ok((0..n)
        .into_par_iter()
        .map(|tau| {
            // impulse response of the recursion started at tau
            let mut h = vec![T::zero(); n - tau];
            h[0] = T::one();
            let mut acc = grad_s[tau];
            for k in 1..n - tau {
                let t = tau + k;
                let mut v = T::zero();
                for lag in 1..=m.min(k) {
                    v -= a.get(t, lag) * h[k - lag];
                }
                h[k] = v;
                acc += v * grad_s[t];
            }
            acc
        })
        .collect())
}

/// Unrolled scalar graph of the recursion with `z_i(t) = -a_i(t) s(t - i)`
/// materialized as separate nodes, differentiated node by node.
struct ScalarGraph<T> {
    values: Vec<T>,
    // (parent, local partial)
    parents: Vec<Vec<(usize, T)>>,
}

impl<T: Real> ScalarGraph<T> {
    fn push(&mut self, value: T, parents: Vec<(usize, T)>) -> usize {
        self.values.push(value);
        self.parents.push(parents);
        self.values.len() - 1
    }
}

/// Reverse-mode adjoints of the time-varying filter obtained by unrolling
/// every sample into scalar nodes. Linear in `T * M` but with per-node
/// bookkeeping, which is what makes it slow.
pub fn naive_backward<T: Real>(e: &[T], a: &CoeffTrack<T>, grad_s: &[T]) -> Result<(Vec<T>, CoeffTrack<T>)> {
    let n = e.len();
    let m = a.order();
    if a.len() != n || grad_s.len() != n {
        return Err(Error::shape(
            "naive_backward",
            format!("excitation {n}, track {}, gradient {}", a.len(), grad_s.len()),
        ));
    }
    let mut g = ScalarGraph {
        values: Vec::new(),
        parents: Vec::new(),
    };
    let e_nodes: Vec<usize> = e.iter().map(|&x| g.push(x, Vec::new())).collect();
    let a_nodes: Vec<usize> = a.as_slice().iter().map(|&x| g.push(x, Vec::new())).collect();
    let mut s_nodes: Vec<usize> = Vec::with_capacity(n);
    for t in 0..n {
        let mut sum_parents = vec![(e_nodes[t], T::one())];
        let mut value = e[t];
        for lag in 1..=m.min(t) {
            let a_idx = a_nodes[t * m + lag - 1];
            let s_idx = s_nodes[t - lag];
            let (av, sv) = (g.values[a_idx], g.values[s_idx]);
            let z = g.push(-av * sv, vec![(a_idx, -sv), (s_idx, -av)]);
            value += g.values[z];
            sum_parents.push((z, T::one()));
        }
        s_nodes.push(g.push(value, sum_parents));
    }

    let mut adj = vec![T::zero(); g.values.len()];
    for (t, &idx) in s_nodes.iter().enumerate() {
        adj[idx] = grad_s[t];
    }
    for node in (0..g.values.len()).rev() {
        let w = adj[node];
        if w == T::zero() {
            continue;
        }
        for &(p, partial) in &g.parents[node] {
            adj[p] += partial * w;
        }
    }
    let grad_e = e_nodes.iter().map(|&i| adj[i]).collect();
    let grad_a = CoeffTrack::new(m, a_nodes.iter().map(|&i| adj[i]).collect())?;
    Ok((grad_e, grad_a))
}

/// Coefficient adjoint of the time-invariant filter in its two-filter form:
/// `dL/da_i = sum_t dL/ds(t) * LP_a(-s(t - i))`.
pub fn ti_coeff_grad_two_filter<T: Real>(grad_s: &[T], a: &[T], s: &[T]) -> Result<Vec<T>> {
    let n = s.len();
    if grad_s.len() != n {
        return Err(Error::shape(
            "ti_coeff_grad_two_filter",
            "gradient and output lengths differ",
        ));
    }
    (1..=a.len())
        .map(|lag| {
            let shifted: Vec<T> = (0..n).map(|t| if t >= lag { -s[t - lag] } else { T::zero() }).collect();
            let ds_da = lp_forward_ti(&shifted, a, None)?;
            Ok(ds_da.iter().zip(grad_s).map(|(&x, &g)| x * g).sum())
        })
        .collect()
}
