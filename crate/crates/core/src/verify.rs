//! Randomized cross-checks of the analytic LP adjoints against independent
//! references: finite differences, the unrolled scalar graph, the expanded
//! impulse-response taps, and the two-filter time-invariant form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::lpc::{lp_backward_ti, lp_backward_tv, lp_forward_ti, lp_forward_tv, CoeffTrack};
use crate::oracle::{b_by_impulse, b_from_compositions, grad_e_via_iir, naive_backward, ti_coeff_grad_two_filter};
use crate::params::reflection_to_lpc;

/// Denominator floor when forming relative errors, so entries that are
/// zero up to round-off are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Deliberate corruption of the analytic adjoints, to show the suite notices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Fault {
    /// Flip the sign of the coefficient adjoint.
    pub negate_coeff_grad: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

/// One random filtering problem: excitation, reflection-stabilized
/// coefficients and a loss weight per output sample (`L = sum w s`).
#[derive(Clone, Debug)]
pub struct Instance {
    pub e: Vec<f64>,
    pub a: CoeffTrack<f64>,
    pub w: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A direct-form row from reflection coefficients drawn in `[-k_max, k_max]`.
pub fn random_stable_row(rng: &mut ChaCha20Rng, order: usize, k_max: f64) -> Vec<f64> {
    let k: Vec<f64> = (0..order).map(|_| rng.random_range(-k_max..=k_max)).collect();
    reflection_to_lpc(&k).expect("reflection coefficients in range")
}

impl Instance {
    /// Length in `[min_len, max_len]`, order in `[1, max_order]`; every
    /// sample gets its own stable row when `varying`.
    pub fn random(rng: &mut ChaCha20Rng, min_len: usize, max_len: usize, max_order: usize, varying: bool) -> Self {
        let n = rng.random_range(min_len..=max_len);
        let m = rng.random_range(1..=max_order);
        let rows: Vec<f64> = if varying {
            (0..n).flat_map(|_| random_stable_row(rng, m, 0.9)).collect()
        } else {
            let row = random_stable_row(rng, m, 0.9);
            (0..n).flat_map(|_| row.clone()).collect()
        };
        Self {
            e: gaussian(rng, n),
            a: CoeffTrack::new(m, rows).expect("whole rows"),
            w: gaussian(rng, n),
        }
    }

    pub fn loss(&self, e: &[f64], a: &CoeffTrack<f64>) -> f64 {
        let s = lp_forward_tv(e, a, None).expect("consistent instance");
        s.iter().zip(&self.w).map(|(s, w)| s * w).sum()
    }
}

fn analytic_tv(inst: &Instance, fault: Fault) -> Result<(Vec<f64>, CoeffTrack<f64>)> {
    let s = lp_forward_tv(&inst.e, &inst.a, None)?;
    let (ge, mut ga) = lp_backward_tv(&inst.w, &inst.a, &s)?;
    if fault.negate_coeff_grad {
        ga.as_mut_slice().iter_mut().for_each(|g| *g = -*g);
    }
    Ok((ge, ga))
}

fn analytic_ti(inst: &Instance, fault: Fault) -> Result<(Vec<f64>, Vec<f64>)> {
    let row = inst.a.row(0).to_vec();
    let s = lp_forward_ti(&inst.e, &row, None)?;
    let (ge, mut ga) = lp_backward_ti(&inst.w, &row, &s)?;
    if fault.negate_coeff_grad {
        ga.iter_mut().for_each(|g| *g = -*g);
    }
    Ok((ge, ga))
}

/// Derivative of `f` at 0: the five-point central stencil at `h` and `2h`,
/// combined to cancel its `h^4` error term. Filters with poles near the unit
/// circle have large high derivatives, which the plain stencil leaves as
/// visible truncation error.
pub fn central_difference(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let stencil = |h: f64| (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
    (16.0 * stencil(h) - stencil(2.0 * h)) / 15.0
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| relative_error(x, y)).fold(0.0, f64::max)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).fold(0.0, f64::max)
}

const FD_STEP: f64 = 1e-3;

fn fd_tv(inst: &Instance) -> (Vec<f64>, Vec<f64>) {
    let ge = (0..inst.e.len())
        .map(|t| {
            central_difference(
                |h| {
                    let mut e = inst.e.clone();
                    e[t] += h;
                    inst.loss(&e, &inst.a)
                },
                FD_STEP,
            )
        })
        .collect();
    let ga = (0..inst.a.as_slice().len())
        .map(|j| {
            central_difference(
                |h| {
                    let mut a = inst.a.clone();
                    a.as_mut_slice()[j] += h;
                    inst.loss(&inst.e, &a)
                },
                FD_STEP,
            )
        })
        .collect();
    (ge, ga)
}

/// Analytic time-varying adjoints against finite differences.
pub fn check_tv_fd(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    fault: Fault,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, true);
        let (ge, ga) = analytic_tv(&inst, fault)?;
        let (fe, fa) = fd_tv(&inst);
        worst = worst.max(max_rel(&ge, &fe)).max(max_rel(ga.as_slice(), &fa));
    }
    Ok(CheckOutcome {
        name: "tv_vs_finite_differences",
        instances,
        max_error: worst,
        tolerance: 1e-5,
    })
}

/// Analytic time-invariant adjoints against finite differences, perturbing
/// the shared coefficient row.
pub fn check_ti_fd(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    fault: Fault,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, false);
        let (ge, ga) = analytic_ti(&inst, fault)?;
        let row = inst.a.row(0).to_vec();
        let loss = |e: &[f64], a: &[f64]| -> f64 {
            let s = lp_forward_ti(e, a, None).expect("consistent instance");
            s.iter().zip(&inst.w).map(|(s, w)| s * w).sum()
        };
        let fe: Vec<f64> = (0..inst.e.len())
            .map(|t| {
                central_difference(
                    |h| {
                        let mut e = inst.e.clone();
                        e[t] += h;
                        loss(&e, &row)
                    },
                    FD_STEP,
                )
            })
            .collect();
        let fa: Vec<f64> = (0..row.len())
            .map(|i| {
                central_difference(
                    |h| {
                        let mut a = row.clone();
                        a[i] += h;
                        loss(&inst.e, &a)
                    },
                    FD_STEP,
                )
            })
            .collect();
        worst = worst.max(max_rel(&ge, &fe)).max(max_rel(&ga, &fa));
    }
    Ok(CheckOutcome {
        name: "ti_vs_finite_differences",
        instances,
        max_error: worst,
        tolerance: 1e-5,
    })
}

/// Analytic adjoints against the unrolled scalar graph, elementwise
/// absolute difference.
pub fn check_naive(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    fault: Fault,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, true);
        let (ge, ga) = analytic_tv(&inst, fault)?;
        let (ne, na) = naive_backward(&inst.e, &inst.a, &inst.w)?;
        worst = worst.max(max_abs(&ge, &ne)).max(max_abs(ga.as_slice(), na.as_slice()));
    }
    Ok(CheckOutcome {
        name: "tv_vs_unrolled_graph",
        instances,
        max_error: worst,
        tolerance: 1e-12,
    })
}

/// Expanded taps from composition sums against impulse responses, up to
/// delay `d_max`.
pub fn check_expansion_taps(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    d_max: usize,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, true);
        let d = d_max.min(inst.e.len() - 1);
        let b1 = b_from_compositions(&inst.a, d)?;
        let b2 = b_by_impulse(&inst.a, d)?;
        worst = worst.max(max_abs(b1.as_slice(), b2.as_slice()));
    }
    Ok(CheckOutcome {
        name: "taps_compositions_vs_impulse",
        instances,
        max_error: worst,
        tolerance: 1e-12,
    })
}

/// Excitation adjoint rebuilt from full-length expanded taps against the
/// analytic one.
pub fn check_grad_e_expansion(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    fault: Fault,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, true);
        let b = b_by_impulse(&inst.a, inst.e.len() - 1)?;
        let via_taps = grad_e_via_iir(&inst.w, &b)?;
        let (ge, _) = analytic_tv(&inst, fault)?;
        worst = worst.max(max_abs(&ge, &via_taps));
    }
    Ok(CheckOutcome {
        name: "grad_e_vs_expanded_taps",
        instances,
        max_error: worst,
        tolerance: 1e-10,
    })
}

/// With constant coefficients, the time-invariant coefficient adjoint must
/// equal the time-varying one summed over time.
pub fn check_single_filter(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    fault: Fault,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, false);
        let (_, ga_ti) = analytic_ti(&inst, fault)?;
        let (_, ga_tv) = analytic_tv(&inst, fault)?;
        worst = worst.max(max_abs(&ga_ti, &ga_tv.column_sums()));
    }
    Ok(CheckOutcome {
        name: "ti_vs_summed_tv",
        instances,
        max_error: worst,
        tolerance: 1e-12,
    })
}

/// Single-filter time-invariant coefficient adjoint against one extra
/// filter pass per lag.
pub fn check_two_filter(
    rng: &mut ChaCha20Rng,
    instances: usize,
    max_len: usize,
    max_order: usize,
    fault: Fault,
) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = Instance::random(rng, 1, max_len, max_order, false);
        let row = inst.a.row(0).to_vec();
        let s = lp_forward_ti(&inst.e, &row, None)?;
        let (_, ga) = analytic_ti(&inst, fault)?;
        let two = ti_coeff_grad_two_filter(&inst.w, &row, &s)?;
        let scale = two.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        worst = worst.max(max_abs(&ga, &two) / scale);
    }
    Ok(CheckOutcome {
        name: "ti_vs_two_filter",
        instances,
        max_error: worst,
        tolerance: 1e-12,
    })
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    pub instances: usize,
    pub max_len: usize,
    pub max_order: usize,
    pub fault: Fault,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 50,
            max_len: 48,
            max_order: 6,
            fault: Fault::default(),
        }
    }
}

/// Every check on random instances, then again on single-sample signals.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let (n, t, m, f) = (cfg.instances, cfg.max_len.max(1), cfg.max_order.max(1), cfg.fault);
    let mut out = vec![
        check_tv_fd(&mut rng, n, t, m, f)?,
        check_ti_fd(&mut rng, n, t, m, f)?,
        check_naive(&mut rng, n, t.min(32), m.min(4), f)?,
        check_expansion_taps(&mut rng, n, t.min(16), m, 8)?,
        check_grad_e_expansion(&mut rng, n, t.min(16), m, f)?,
        check_single_filter(&mut rng, n, t, m, f)?,
        check_two_filter(&mut rng, n, t, m, f)?,
    ];
    let mut degenerate = vec![
        check_tv_fd(&mut rng, 4, 1, m, f)?,
        check_ti_fd(&mut rng, 4, 1, m, f)?,
        check_naive(&mut rng, 4, 1, m, f)?,
        check_expansion_taps(&mut rng, 4, 1, m, 8)?,
        check_grad_e_expansion(&mut rng, 4, 1, m, f)?,
        check_single_filter(&mut rng, 4, 1, m, f)?,
    ];
    for c in &mut degenerate {
        c.name = match c.name {
            "tv_vs_finite_differences" => "len1_tv_vs_finite_differences",
            "ti_vs_finite_differences" => "len1_ti_vs_finite_differences",
            "tv_vs_unrolled_graph" => "len1_tv_vs_unrolled_graph",
            "taps_compositions_vs_impulse" => "len1_taps_compositions_vs_impulse",
            "grad_e_vs_expanded_taps" => "len1_grad_e_vs_expanded_taps",
            _ => "len1_ti_vs_summed_tv",
        };
    }
    out.extend(degenerate);
    Ok(out)
}
