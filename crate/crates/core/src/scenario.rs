//! Synthetic fitting problems with a known answer.
//!
//! A target is rendered from parameters a fixed offset away from the fit's
//! own starting point. The offset is sized so that Adam at the default
//! learning rate can cover it within a default-length run, which makes the
//! recovered envelope comparable to the truth.

use crate::error::Result;
use crate::fit::FitConfig;
use crate::params::{frame_count, lpc_to_spectrum_db};
use crate::source::Wavetable;
use crate::synth::{render, SynthContext, SynthParams};

/// Frame-rate f0: unvoiced for `edge` frames at each end, a linear glide
/// from `lo` to `hi` Hz in between.
pub fn glide_f0(frames: usize, lo: f64, hi: f64, edge: usize) -> Vec<f64> {
    (0..frames)
        .map(|i| {
            if i < edge || i + edge >= frames {
                0.0
            } else {
                lo + (hi - lo) * i as f64 / frames as f64
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct KnownTarget {
    pub f0: Vec<f64>,
    /// Where the fit starts: `SynthParams::init` with the config seed.
    pub init: SynthParams<f64>,
    pub truth: SynthParams<f64>,
    pub target: Vec<f64>,
}

/// Reflection offset per frame and coefficient: alternating-ish signs with a
/// slow sinusoidal drift over the utterance.
fn reflection_offset(frame: usize, frames: usize, i: usize, scale: f64) -> f64 {
    let sign = if (i * 7 + 3) % 5 < 2 { 1.0 } else { -1.0 };
    let drift = (2.0 * std::f64::consts::PI * frame as f64 / frames as f64).sin();
    scale * sign * (1.0 + 0.2 * drift)
}

/// Builds a target of `len` samples whose generating parameters are known.
/// `scale` sets the size of the raw reflection offset (0.12 is reachable
/// in 2000 steps at lr 1e-4).
pub fn known_target(wt: &Wavetable, len: usize, cfg: &FitConfig, scale: f64) -> Result<KnownTarget> {
    cfg.validate()?;
    let frames = frame_count(len, cfg.hop);
    let f0 = glide_f0(frames, 110.0, 160.0, (frames / 20).max(1));
    let init = SynthParams::init(f0.clone(), cfg.hop, cfg.order, cfg.mode.synth_mode(), cfg.seed);
    let mut truth = init.clone();
    let m = cfg.order;
    for (idx, r) in truth.reflection.iter_mut().enumerate() {
        *r += reflection_offset(idx / m, frames, idx % m, scale);
    }
    truth.voiced_gain.iter_mut().for_each(|g| *g += 0.1);
    truth.noise_gain.iter_mut().for_each(|g| *g -= 0.1);
    truth.table_pos.iter_mut().for_each(|p| *p += 0.1);
    let ctx = SynthContext::new(wt, &truth, len, &cfg.context_options(cfg.seed))?;
    let target = render(&truth, &ctx, &cfg.realization()?)?.samples;
    Ok(KnownTarget {
        f0,
        init,
        truth,
        target,
    })
}

/// RMS difference in dB between the all-pole envelopes of two parameter
/// sets, over voiced frames, sampled at `n_freq` points from DC to Nyquist.
pub fn envelope_rmse_db(a: &SynthParams<f64>, b: &SynthParams<f64>, n_freq: usize) -> Result<f64> {
    let (ea, eb) = (a.lpc_frames()?, b.lpc_frames()?);
    let m = a.order;
    let (mut sum, mut n) = (0.0, 0usize);
    for f in (0..a.frames()).filter(|&f| a.f0[f] > 0.0) {
        let x = lpc_to_spectrum_db(&ea[f * m..(f + 1) * m], n_freq)?;
        let y = lpc_to_spectrum_db(&eb[f * m..(f + 1) * m], n_freq)?;
        for (p, q) in x.iter().zip(&y) {
            sum += (p - q) * (p - q);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}
