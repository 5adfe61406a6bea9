//! Analysis-by-synthesis: fit synthesis parameters to a target recording by
//! Adam on the spectral loss, with global gradient-norm clipping.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{MssConfig, MssLoss};
use crate::optim::{clip_grad_norm, Adam};
use crate::params::{frame_count, FramePlan};
use crate::source::{Wavetable, DEFAULT_OVERSAMPLE};
use crate::synth::{
    build_graph, render, ContextOptions, FilterRealization, SynthContext, SynthMode, SynthParams, UnvoicedPolicy,
    DEFAULT_FS, DEFAULT_HOP, DEFAULT_ORDER,
};
use crate::tape::Tape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Source-filter, sample-wise LP.
    Sf,
    /// Harmonic-plus-noise, sample-wise LP.
    Hpn,
    /// Source-filter with frame-wise overlap-add LP.
    Framewise,
}

/// Which coefficients are interpolated between frames for sample-wise LP.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Direct-form LPC rows.
    #[default]
    Lpc,
    /// Reflection coefficients, stepped up per sample.
    Reflection,
}

impl Interpolation {
    pub fn sample_wise(self) -> FilterRealization {
        match self {
            Interpolation::Lpc => FilterRealization::SampleWise,
            Interpolation::Reflection => FilterRealization::SampleWiseReflection,
        }
    }
}

impl FitMode {
    pub fn synth_mode(self) -> SynthMode {
        match self {
            FitMode::Hpn => SynthMode::HarmonicPlusNoise,
            FitMode::Sf | FitMode::Framewise => SynthMode::SourceFilter,
        }
    }

    pub fn realization(self, hop: usize, overlap: f64, interpolation: Interpolation) -> Result<FilterRealization> {
        Ok(match self {
            FitMode::Framewise => FilterRealization::FrameWise(FramePlan::hann_overlap(hop, overlap)?),
            _ => interpolation.sample_wise(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub mode: FitMode,
    pub steps: usize,
    pub lr: f64,
    pub clip: f64,
    pub order: usize,
    pub hop: usize,
    pub fs: f64,
    pub seed: u64,
    pub unvoiced: UnvoicedPolicy,
    pub oversample: usize,
    pub fft_sizes: Vec<usize>,
    /// Overlap of the frame-wise filter frames.
    pub overlap: f64,
    pub interpolation: Interpolation,
    /// Longer targets are cut to this many seconds.
    pub max_seconds: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: FitMode::Sf,
            steps: 2000,
            lr: 1e-4,
            clip: 0.5,
            order: DEFAULT_ORDER,
            hop: DEFAULT_HOP,
            fs: DEFAULT_FS,
            seed: 0,
            unvoiced: UnvoicedPolicy::default(),
            oversample: DEFAULT_OVERSAMPLE,
            fft_sizes: MssConfig::default().fft_sizes,
            overlap: 0.75,
            interpolation: Interpolation::default(),
            max_seconds: 2.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        for (name, v) in [
            ("lr", self.lr),
            ("clip", self.clip),
            ("fs", self.fs),
            ("max_seconds", self.max_seconds),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.order == 0 || self.hop == 0 || self.oversample == 0 {
            return bad("order, hop and oversample must be at least 1".into());
        }
        if !(self.overlap >= 0.0 && self.overlap < 1.0) {
            return bad(format!("overlap must be in [0, 1), got {}", self.overlap));
        }
        if let UnvoicedPolicy::Uniform { lo, hi } = self.unvoiced {
            if !(lo > 0.0 && lo < hi && hi < self.fs / 2.0) {
                return bad(format!("uniform unvoiced f0 range [{lo}, {hi}) is invalid"));
            }
        }
        self.mss().validate()
    }

    pub fn mss(&self) -> MssConfig {
        MssConfig::with_sizes(&self.fft_sizes)
    }

    pub fn realization(&self) -> Result<FilterRealization> {
        self.mode.realization(self.hop, self.overlap, self.interpolation)
    }

    pub fn context_options(&self, seed: u64) -> ContextOptions {
        ContextOptions {
            fs: self.fs,
            oversample: self.oversample,
            unvoiced: self.unvoiced,
            seed,
        }
    }

    pub fn max_samples(&self) -> usize {
        (self.max_seconds * self.fs).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters with the lowest loss seen.
    pub params: SynthParams<f64>,
    pub best_loss: f64,
    pub best_step: usize,
    pub initial_loss: f64,
    /// Loss of the parameters entering each step.
    pub losses: Vec<f64>,
    /// Gradient norm before clipping, per step.
    pub grad_norms: Vec<f64>,
    pub seconds: f64,
    /// Set when a non-finite loss or gradient stopped the run early.
    pub aborted: Option<String>,
}

/// Spectral loss of `params` rendered against `target`.
pub fn score(
    params: &SynthParams<f64>,
    target: &[f64],
    wt: &Wavetable,
    cfg: &FitConfig,
    filter: &FilterRealization,
) -> Result<f64> {
    let ctx = SynthContext::new(wt, params, target.len(), &cfg.context_options(cfg.seed))?;
    let y = render(params, &ctx, filter)?;
    MssLoss::new(&cfg.mss(), target)?.value(&y.samples)
}

/// Fits parameters for `target` given a frame-rate f0 track. Starts from
/// `init` when given, otherwise from [`SynthParams::init`].
pub fn fit(
    target: &[f64],
    f0: Vec<f64>,
    wt: &Wavetable,
    cfg: &FitConfig,
    init: Option<SynthParams<f64>>,
    mut progress: impl FnMut(usize, f64),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::InvalidArgument("target audio is empty".into()));
    }
    let len = target.len();
    let frames = frame_count(len, cfg.hop);
    if f0.len() != frames {
        return Err(Error::shape(
            "fit",
            format!("{} f0 frames, {len} samples at hop {} need {frames}", f0.len(), cfg.hop),
        ));
    }
    let mss = cfg.mss();
    if len < mss.min_len() {
        return Err(Error::InvalidArgument(format!(
            "target has {len} samples, the loss needs at least {}",
            mss.min_len()
        )));
    }
    let mut params = match init {
        Some(p) => {
            if p.frames() != frames || p.mode != cfg.mode.synth_mode() || p.hop != cfg.hop {
                return Err(Error::InvalidArgument(
                    "initial parameters do not match the target and config".into(),
                ));
            }
            p
        }
        None => SynthParams::init(f0, cfg.hop, cfg.order, cfg.mode.synth_mode(), cfg.seed),
    };
    let filter = cfg.realization()?;
    let loss = Arc::new(MssLoss::new(&mss, target)?);
    let redraw = matches!(cfg.unvoiced, UnvoicedPolicy::Uniform { .. });
    let mut ctx = SynthContext::new(wt, &params, len, &cfg.context_options(cfg.seed))?;
    let mut adam = Adam::new(cfg.lr);
    let start = Instant::now();
    let mut out = FitOutcome {
        params: params.clone(),
        best_loss: f64::INFINITY,
        best_step: 0,
        initial_loss: f64::NAN,
        losses: Vec::with_capacity(cfg.steps),
        grad_norms: Vec::with_capacity(cfg.steps),
        seconds: 0.0,
        aborted: None,
    };
    for step in 0..cfg.steps {
        if redraw && step > 0 {
            let f0 = cfg.unvoiced.resolve(&params.f0, cfg.seed.wrapping_add(step as u64));
            ctx = ctx.rebind_oscillator(wt, &f0, cfg.oversample)?;
        }
        let mut tape = Tape::new();
        let (vars, y) = build_graph(&mut tape, &params, &ctx, &filter)?;
        let l = tape.mss(y, loss.clone())?;
        let value = tape.value(l).item();
        if !value.is_finite() {
            out.aborted = Some(format!("loss became {value} at step {step}"));
            break;
        }
        if step == 0 {
            out.initial_loss = value;
        }
        out.losses.push(value);
        if value < out.best_loss {
            out.best_loss = value;
            out.best_step = step;
            out.params = params.clone();
        }
        progress(step, value);
        tape.backward(l)?;
        let mut grads: Vec<Vec<f64>> = vars.groups.iter().map(|&v| tape.grad_or_zeros(v).into_data()).collect();
        let norm = match clip_grad_norm(&mut grads, cfg.clip) {
            Ok(n) => n,
            Err(e) => {
                out.aborted = Some(format!("step {step}: {e}"));
                break;
            }
        };
        out.grad_norms.push(norm);
        let mut groups = params.to_groups();
        adam.step(&mut groups, &grads)?;
        if let Err(e) = params.set_groups(groups) {
            out.aborted = Some(format!("step {step}: {e}"));
            break;
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}
