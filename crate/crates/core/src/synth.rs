//! The two decoder topologies built from sources and filters.
//!
//! Source-filter (`SourceFilter`):
//! `y = fir(LP(g_in * (g_v * osc + g_n * noise)))`.
//! Harmonic-plus-noise (`HarmonicPlusNoise`):
//! `y = fir(LP(g_in * g_v * osc) + g_n * noise)`.
//!
//! All frame-rate controls are stored unconstrained. Gains are
//! `exp(log_gain)`, reflection coefficients `0.999 tanh(raw)`, and the table
//! position `(K - 1) sigmoid(raw)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{frame_count, FramePlan, ReflectionFrames, REFLECTION_BOUND};
use crate::real::Real;
use crate::signal::Signal;
use crate::source::{NoiseFilterFrames, NoiseShaper, Oscillator, SourceControls, Wavetable, FIR_TAPS, NOISE_BINS};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_FS: f64 = 24000.0;
pub const DEFAULT_HOP: usize = 240;
pub const DEFAULT_ORDER: usize = 22;
/// f0 substituted for unvoiced frames when rendering.
pub const UNVOICED_F0: f64 = 150.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    #[serde(rename = "sf")]
    SourceFilter,
    #[serde(rename = "hpn")]
    HarmonicPlusNoise,
}

/// How the all-pole filter is applied.
#[derive(Clone, Debug, PartialEq)]
pub enum FilterRealization {
    /// Direct-form coefficient rows interpolated to every sample. Rows
    /// between two stable frames are not guaranteed stable.
    SampleWise,
    /// Reflection coefficients interpolated to every sample, then stepped up
    /// per sample, so every row is stable. Costs one step-up per sample.
    SampleWiseReflection,
    /// Overlap-added time-invariant frames.
    FrameWise(FramePlan),
}

pub const GROUP_NAMES: [&str; 7] = [
    "table_pos",
    "voiced_gain",
    "noise_gain",
    "input_gain",
    "reflection",
    "noise_filter",
    "fir",
];

/// Every synthesis parameter in its unconstrained form.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams<T> {
    pub mode: SynthMode,
    pub hop: usize,
    pub order: usize,
    /// Frame-rate f0 in Hz, 0 for unvoiced frames. Not differentiated.
    pub f0: Vec<f64>,
    /// `F`, table position before the sigmoid.
    pub table_pos: Vec<T>,
    /// `F` natural-log gains; `-inf` is an exact zero.
    pub voiced_gain: Vec<T>,
    pub noise_gain: Vec<T>,
    /// Gain in front of the all-pole filter.
    pub input_gain: Vec<T>,
    /// `F x M`, before the tanh.
    pub reflection: Vec<T>,
    /// `F x 256` noise filter log-magnitudes.
    pub noise_filter: Vec<T>,
    pub fir: Vec<T>,
}

impl<T: Real> SynthParams<T> {
    /// Small near-identity start: reflection raw values from `N(0, 0.01^2)`,
    /// every gain at -20 dB, a flat noise filter, a centered table position
    /// and a unit-impulse FIR.
    pub fn init(f0: Vec<f64>, hop: usize, order: usize, mode: SynthMode, seed: u64) -> Self {
        let frames = f0.len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let reflection = (0..frames * order).map(|_| T::lit(normal.sample(&mut rng))).collect();
        let gain = T::lit(0.1f64.ln());
        let mut fir = vec![T::zero(); FIR_TAPS];
        fir[0] = T::one();
        Self {
            mode,
            hop,
            order,
            f0,
            table_pos: vec![T::zero(); frames],
            voiced_gain: vec![gain; frames],
            noise_gain: vec![gain; frames],
            input_gain: vec![gain; frames],
            reflection,
            noise_filter: vec![T::zero(); frames * NOISE_BINS],
            fir,
        }
    }

    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.frames();
        if f == 0 || self.hop == 0 || self.order == 0 {
            return Err(Error::InvalidArgument(format!(
                "parameters need frames, hop and order >= 1 (got {f}, {}, {})",
                self.hop, self.order
            )));
        }
        let expected = [f, f, f, f, f * self.order, f * NOISE_BINS, FIR_TAPS];
        for ((name, values), n) in GROUP_NAMES.iter().zip(self.groups()).zip(expected) {
            if values.len() != n {
                return Err(Error::shape(
                    "synth_params",
                    format!("{name} has {} values, expected {n}", values.len()),
                ));
            }
            let gain = name.ends_with("_gain");
            if let Some(index) = values
                .iter()
                .position(|v| v.is_nan() || (v.is_infinite() && !(gain && *v < T::zero())))
            {
                return Err(Error::NonFinite { what: name, index });
            }
        }
        for (index, &v) in self.f0.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("f0[{index}] = {v} is not a frequency")));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> [&[T]; 7] {
        [
            &self.table_pos,
            &self.voiced_gain,
            &self.noise_gain,
            &self.input_gain,
            &self.reflection,
            &self.noise_filter,
            &self.fir,
        ]
    }

    pub fn to_groups(&self) -> Vec<Vec<T>> {
        self.groups().iter().map(|g| g.to_vec()).collect()
    }

    pub fn set_groups(&mut self, groups: Vec<Vec<T>>) -> Result<()> {
        let [tp, vg, ng, ig, refl, nf, fir]: [Vec<T>; 7] = groups
            .try_into()
            .map_err(|g: Vec<Vec<T>>| Error::shape("synth_params", format!("{} groups, expected 7", g.len())))?;
        let mut next = self.clone();
        next.table_pos = tp;
        next.voiced_gain = vg;
        next.noise_gain = ng;
        next.input_gain = ig;
        next.reflection = refl;
        next.noise_filter = nf;
        next.fir = fir;
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Constrained source controls for a wavetable of `tables` rows.
    pub fn source_controls(&self, tables: usize) -> SourceControls<T> {
        let top = T::count(tables.saturating_sub(1));
        SourceControls {
            f0: self.f0.clone(),
            table_pos: self.table_pos.iter().map(|&r| top * crate::tape::sigmoid(r)).collect(),
            voiced_gain: self.voiced_gain.iter().map(|g| g.exp()).collect(),
            noise_gain: self.noise_gain.iter().map(|g| g.exp()).collect(),
        }
    }

    pub fn reflection_frames(&self) -> Result<ReflectionFrames<T>> {
        ReflectionFrames::from_raw(self.order, &self.reflection)
    }

    /// Direct-form coefficient rows, `F x M`.
    pub fn lpc_frames(&self) -> Result<Vec<T>> {
        self.reflection_frames()?.to_lpc()
    }

    pub fn noise_filter_frames(&self) -> Result<NoiseFilterFrames<T>> {
        NoiseFilterFrames::new(self.noise_filter.clone())
    }

    pub fn cast<U: Real>(&self) -> SynthParams<U> {
        let c = |xs: &[T]| xs.iter().map(|&x| U::lit(x.to_f64_lossy())).collect();
        SynthParams {
            mode: self.mode,
            hop: self.hop,
            order: self.order,
            f0: self.f0.clone(),
            table_pos: c(&self.table_pos),
            voiced_gain: c(&self.voiced_gain),
            noise_gain: c(&self.noise_gain),
            input_gain: c(&self.input_gain),
            reflection: c(&self.reflection),
            noise_filter: c(&self.noise_filter),
            fir: c(&self.fir),
        }
    }

    /// Sets every log gain in `group` to `ln(gain)`; zero gives `-inf`.
    pub fn set_gain(&mut self, group: GainGroup, gain: f64) {
        let v = T::lit(gain.ln());
        let target = match group {
            GainGroup::Voiced => &mut self.voiced_gain,
            GainGroup::Noise => &mut self.noise_gain,
            GainGroup::Input => &mut self.input_gain,
        };
        target.iter_mut().for_each(|g| *g = v);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GainGroup {
    Voiced,
    Noise,
    Input,
}

/// f0 used for unvoiced frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UnvoicedPolicy {
    Fixed { hz: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for UnvoicedPolicy {
    fn default() -> Self {
        Self::Fixed { hz: UNVOICED_F0 }
    }
}

impl UnvoicedPolicy {
    pub fn resolve(&self, f0: &[f64], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5EED_F0F0);
        f0.iter()
            .map(|&f| {
                if f > 0.0 {
                    return f;
                }
                match *self {
                    Self::Fixed { hz } => hz,
                    Self::Uniform { lo, hi } => rng.random_range(lo..hi),
                }
            })
            .collect()
    }
}

/// Everything a render needs besides the parameters: the oscillator bound to
/// the f0 track, and the fixed noise realization.
pub struct SynthContext<T: Real> {
    pub fs: f64,
    pub len: usize,
    pub table_count: usize,
    osc: Arc<Oscillator<T>>,
    shaper: Arc<NoiseShaper<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextOptions {
    pub fs: f64,
    pub oversample: usize,
    pub unvoiced: UnvoicedPolicy,
    pub seed: u64,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            fs: DEFAULT_FS,
            oversample: crate::source::DEFAULT_OVERSAMPLE,
            unvoiced: UnvoicedPolicy::default(),
            seed: 0,
        }
    }
}

impl<T: Real> SynthContext<T> {
    pub fn new(wt: &Wavetable, params: &SynthParams<T>, len: usize, opts: &ContextOptions) -> Result<Self> {
        params.validate()?;
        if len == 0 {
            return Err(Error::InvalidArgument("cannot render zero samples".into()));
        }
        let expected = frame_count(len, params.hop);
        if params.frames() != expected {
            return Err(Error::shape(
                "synth",
                format!(
                    "{} frames, {len} samples at hop {} need {expected}",
                    params.frames(),
                    params.hop
                ),
            ));
        }
        let f0 = opts.unvoiced.resolve(&params.f0, opts.seed);
        Ok(Self {
            fs: opts.fs,
            len,
            table_count: wt.count(),
            osc: Arc::new(Oscillator::new(wt, &f0, opts.fs, opts.oversample, params.hop, len)?),
            shaper: Arc::new(NoiseShaper::new(len, params.hop, opts.seed)?),
        })
    }

    /// Same noise realization with a new oscillator for an already resolved
    /// f0 track.
    pub fn rebind_oscillator(self, wt: &Wavetable, f0: &[f64], oversample: usize) -> Result<Self> {
        let osc = Oscillator::new(wt, f0, self.fs, oversample, self.osc.hop(), self.len)?;
        Ok(Self {
            osc: Arc::new(osc),
            ..self
        })
    }

    pub fn oscillator(&self) -> &Oscillator<T> {
        &self.osc
    }

    pub fn noise(&self) -> &[T] {
        self.shaper.noise()
    }
}

/// Parameter leaves of one recorded graph, in [`GROUP_NAMES`] order.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub groups: [Var; 7],
}

/// Records the synthesizer on `tape` and returns its parameter leaves and
/// output (`len x 1`).
pub fn build_graph<T: Real>(
    tape: &mut Tape<T>,
    params: &SynthParams<T>,
    ctx: &SynthContext<T>,
    filter: &FilterRealization,
) -> Result<(ParamVars, Var)> {
    params.validate()?;
    let f = params.frames();
    let (hop, len, m) = (params.hop, ctx.len, params.order);
    let col = |v: &Vec<T>| Tensor::column(v.clone());
    let groups = [
        tape.leaf(col(&params.table_pos)),
        tape.leaf(col(&params.voiced_gain)),
        tape.leaf(col(&params.noise_gain)),
        tape.leaf(col(&params.input_gain)),
        tape.leaf(Tensor::new(f, m, params.reflection.clone())?),
        tape.leaf(Tensor::new(f, NOISE_BINS, params.noise_filter.clone())?),
        tape.leaf(col(&params.fir)),
    ];
    let [tp_raw, vg_log, ng_log, ig_log, refl_raw, noise_lm, fir] = groups;

    let tp = tape.scaled_sigmoid(tp_raw, T::count(ctx.table_count.saturating_sub(1)))?;
    let osc = tape.oscillator(tp, ctx.osc.clone())?;
    let mut gain = |v: Var| -> Result<Var> {
        let g = tape.exp(v)?;
        tape.upsample_linear(g, hop, len)
    };
    let (vg, ng, ig) = (gain(vg_log)?, gain(ng_log)?, gain(ig_log)?);
    let noise = tape.shape_noise(noise_lm, ctx.shaper.clone())?;
    let voiced = tape.mul(vg, osc)?;
    let unvoiced = tape.mul(ng, noise)?;

    let k = tape.scaled_tanh(refl_raw, T::lit(REFLECTION_BOUND))?;
    let a = tape.reflection_to_lpc(k)?;
    let all_pole = |tape: &mut Tape<T>, e: Var| -> Result<Var> {
        match filter {
            FilterRealization::SampleWise => {
                let track = tape.upsample_linear(a, hop, len)?;
                tape.lp_tv(e, track)
            }
            FilterRealization::SampleWiseReflection => {
                let k_track = tape.upsample_linear(k, hop, len)?;
                let track = tape.reflection_to_lpc(k_track)?;
                tape.lp_tv(e, track)
            }
            FilterRealization::FrameWise(plan) => tape.framewise_lp(e, a, plan.clone()),
        }
    };
    let s = match params.mode {
        SynthMode::SourceFilter => {
            let e = tape.add(voiced, unvoiced)?;
            let e = tape.mul(ig, e)?;
            all_pole(tape, e)?
        }
        SynthMode::HarmonicPlusNoise => {
            let e = tape.mul(ig, voiced)?;
            let h = all_pole(tape, e)?;
            tape.add(h, unvoiced)?
        }
    };
    let y = tape.fir(s, fir)?;
    Ok((ParamVars { groups }, y))
}

/// Renders `params` in their own mode with the given filter realization.
pub fn render<T: Real>(
    params: &SynthParams<T>,
    ctx: &SynthContext<T>,
    filter: &FilterRealization,
) -> Result<Signal<T>> {
    let mut tape = Tape::new();
    let (_, y) = build_graph(&mut tape, params, ctx, filter)?;
    let out = Signal::new(tape.value(y).data().to_vec(), ctx.fs);
    if let Some(index) = out.samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "rendered sample",
            index,
        });
    }
    Ok(out)
}

fn require_mode<T: Real>(params: &SynthParams<T>, mode: SynthMode, op: &str) -> Result<()> {
    if params.mode != mode {
        return Err(Error::InvalidArgument(format!(
            "{op} needs mode {mode:?}, got {:?}",
            params.mode
        )));
    }
    Ok(())
}

/// Source-filter render with sample-wise coefficients.
pub fn sf_synth<T: Real>(params: &SynthParams<T>, ctx: &SynthContext<T>) -> Result<Signal<T>> {
    require_mode(params, SynthMode::SourceFilter, "sf_synth")?;
    render(params, ctx, &FilterRealization::SampleWise)
}

/// Harmonic-plus-noise render: only the voiced part goes through the
/// all-pole filter.
pub fn hpn_synth<T: Real>(params: &SynthParams<T>, ctx: &SynthContext<T>) -> Result<Signal<T>> {
    require_mode(params, SynthMode::HarmonicPlusNoise, "hpn_synth")?;
    render(params, ctx, &FilterRealization::SampleWise)
}

/// Source-filter render with frame-wise overlap-add filtering.
pub fn render_framewise<T: Real>(
    params: &SynthParams<T>,
    ctx: &SynthContext<T>,
    plan: &FramePlan,
) -> Result<Signal<T>> {
    require_mode(params, SynthMode::SourceFilter, "render_framewise")?;
    render(params, ctx, &FilterRealization::FrameWise(plan.clone()))
}

/// Per-frame direct-form coefficients after the reflection squash, for
/// callers that want the envelope without rendering.
pub fn envelope_rows<T: Real>(params: &SynthParams<T>) -> Result<Vec<Vec<T>>> {
    let a = params.lpc_frames()?;
    Ok(a.chunks(params.order).map(|r| r.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::build_lf_wavetable;

    fn table() -> Wavetable {
        build_lf_wavetable(&Wavetable::default_grid(5), 256, 60).unwrap()
    }

    fn setup(mode: SynthMode, len: usize) -> (Wavetable, SynthParams<f64>) {
        let hop = 64;
        let f = frame_count(len, hop);
        let f0 = (0..f)
            .map(|i| if i % 5 == 3 { 0.0 } else { 180.0 + 3.0 * i as f64 })
            .collect();
        (table(), SynthParams::init(f0, hop, 4, mode, 1))
    }

    fn ctx(wt: &Wavetable, p: &SynthParams<f64>, len: usize) -> SynthContext<f64> {
        let opts = ContextOptions {
            seed: 9,
            ..ContextOptions::default()
        };
        SynthContext::new(wt, p, len, &opts).unwrap()
    }

    #[test]
    fn zero_gains_render_silence() {
        let (wt, mut p) = setup(SynthMode::SourceFilter, 600);
        p.set_gain(GainGroup::Voiced, 0.0);
        p.set_gain(GainGroup::Noise, 0.0);
        let c = ctx(&wt, &p, 600);
        assert!(sf_synth(&p, &c).unwrap().samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_filters_leave_the_gained_oscillator() {
        let (wt, mut p) = setup(SynthMode::SourceFilter, 600);
        p.reflection.iter_mut().for_each(|r| *r = 0.0);
        p.set_gain(GainGroup::Noise, 0.0);
        let c = ctx(&wt, &p, 600);
        let y = sf_synth(&p, &c).unwrap();
        let controls = p.source_controls(wt.count());
        let osc = c.oscillator().render(&controls.table_pos).unwrap();
        let gv = crate::params::upsample_linear(&controls.voiced_gain, 1, p.hop, 600).unwrap();
        let gi: Vec<f64> = p.input_gain.iter().map(|g| g.exp()).collect();
        let gi = crate::params::upsample_linear(&gi, 1, p.hop, 600).unwrap();
        for t in 0..600 {
            assert_eq!(y.samples[t], gi[t] * (gv[t] * osc[t]));
        }
    }

    #[test]
    fn topologies_agree_without_noise() {
        let (wt, mut p) = setup(SynthMode::SourceFilter, 600);
        p.set_gain(GainGroup::Noise, 0.0);
        let c = ctx(&wt, &p, 600);
        let sf = sf_synth(&p, &c).unwrap();
        p.mode = SynthMode::HarmonicPlusNoise;
        assert_eq!(hpn_synth(&p, &c).unwrap(), sf);
        assert!(sf_synth(&p, &c).is_err());
    }

    #[test]
    fn set_groups_checks_shapes() {
        let (_, mut p) = setup(SynthMode::SourceFilter, 600);
        let mut g = p.to_groups();
        g[4].pop();
        assert!(p.set_groups(g).is_err());
        let g = p.to_groups();
        p.set_groups(g).unwrap();
    }

    #[test]
    fn unvoiced_policy() {
        let f0 = [0.0, 120.0, 0.0];
        assert_eq!(UnvoicedPolicy::default().resolve(&f0, 1), vec![150.0, 120.0, 150.0]);
        let u = UnvoicedPolicy::Uniform { lo: 50.0, hi: 500.0 }.resolve(&f0, 1);
        assert!(u.iter().all(|&f| (50.0..500.0).contains(&f)));
        assert_eq!(u[1], 120.0);
    }
}
