mod common;

use common::{db, power_spectrum};
use tvlp::source::{
    apply_global_fir, build_lf_wavetable, pulse_train, shape_noise, wavetable_osc, NoiseFilterFrames, SourceControls,
    Wavetable, NOISE_BINS,
};

const FS: f64 = 24000.0;
const HOP: usize = 240;

fn steady_tone(wt: &Wavetable, f0: f64, table_pos: f64, oversample: usize, len: usize) -> Vec<f64> {
    let frames = len.div_ceil(HOP);
    let controls = SourceControls {
        f0: vec![f0; frames],
        table_pos: vec![table_pos; frames],
        voiced_gain: vec![1.0; frames],
        noise_gain: vec![0.0; frames],
    };
    wavetable_osc(wt, &controls, FS, oversample, HOP, len).unwrap().samples
}

/// Energy above `edge * fs` relative to total, in dB, skipping the start-up.
fn high_band_db(x: &[f64], edge: f64) -> f64 {
    let p = power_spectrum(&x[4800..]);
    let cut = (edge * 2.0 * (p.len() - 1) as f64).round() as usize;
    db(p[cut..].iter().sum::<f64>() / p.iter().sum::<f64>())
}

#[test]
fn oversampling_reduces_aliasing() {
    let wt = Wavetable::build_default().unwrap();
    let x4 = steady_tone(&wt, 200.0, 50.0, 4, 24000);
    let x1 = steady_tone(&wt, 200.0, 50.0, 1, 24000);
    let (a4, a1) = (high_band_db(&x4, 0.45), high_band_db(&x1, 0.45));
    assert!(a4 <= -40.0, "oversample 4: {a4:.1} dB");
    assert!(a1 > a4 + 6.0, "oversample 1: {a1:.1} dB vs {a4:.1} dB");
}

#[test]
fn autocorrelation_peaks_at_the_period() {
    let wt = Wavetable::build_default().unwrap();
    let x = steady_tone(&wt, 300.0, 40.0, 4, 12000);
    let seg = &x[2000..10000];
    let ac = |lag: usize| {
        seg[..seg.len() - lag]
            .iter()
            .zip(&seg[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let best = (40..120).max_by(|&a, &b| ac(a).total_cmp(&ac(b))).unwrap();
    assert_eq!(best, 80);
}

#[test]
fn closure_instants_keep_the_period() {
    // 137 Hz has a non-integer period of 175.18 samples
    let wt = Wavetable::build_default().unwrap();
    let f0 = 137.0;
    let period = FS / f0;
    let x = steady_tone(&wt, f0, 30.0, 4, 24000);
    // deepest sample in each period-long window marks the closure
    let mut minima = Vec::new();
    let mut start = 1000.0;
    while start + period < x.len() as f64 {
        let (a, b) = (start as usize, (start + period) as usize);
        let i = (a..b).min_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap();
        minima.push(i as f64);
        start += period;
    }
    let first = minima[1];
    for (k, &m) in minima.iter().enumerate().skip(2) {
        let drift = m - first - (k - 1) as f64 * period;
        assert!(drift.abs() < 1.0, "period {k}: drift {drift:.2} samples");
    }
}

#[test]
fn relaxed_voice_has_less_high_band_energy() {
    // table Nyquist is harmonic 512; the split sits at a quarter of it
    let grid = Wavetable::default_grid(100);
    let wt = build_lf_wavetable(&grid, 1024, 511).unwrap();
    let ratios: Vec<f64> = (0..wt.count())
        .map(|k| {
            let row = wt.row(k);
            let n = row.len();
            let mut high = 0.0;
            let mut low = 0.0;
            for h in 1..n / 2 {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in row.iter().enumerate() {
                    let p = 2.0 * std::f64::consts::PI * (h * i) as f64 / n as f64;
                    re += v * p.cos();
                    im -= v * p.sin();
                }
                let e = re * re + im * im;
                if h > n / 8 {
                    high += e;
                } else {
                    low += e;
                }
            }
            high / low
        })
        .collect();
    for (k, w) in ratios.windows(2).enumerate() {
        assert!(w[1] < w[0], "ratio rises between R_d {} and {}", grid[k], grid[k + 1]);
    }
}

#[test]
fn pulse_train_is_harmonic() {
    // 250 Hz at 24 kHz: the analysis length holds 100 whole periods
    let x = pulse_train::<f64>(&vec![250.0; 9600], FS).unwrap().samples;
    let p = power_spectrum(&x);
    let spacing = 9600 / 96;
    let peak = p.iter().copied().fold(0.0, f64::max);
    let worst_off = p
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let d = i % spacing;
            d.min(spacing - d) > 4
        })
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    assert!(db(worst_off / peak) <= -40.0, "{:.1} dB", db(worst_off / peak));
}

#[test]
fn zero_f0_pulse_train_is_silent() {
    let x = pulse_train::<f64>(&[0.0; 100], FS).unwrap().samples;
    assert!(x.iter().all(|&v| v == 0.0));
}

#[test]
fn flat_noise_has_unit_variance() {
    let len = 24000;
    let frames = len / HOP;
    let x = shape_noise(&NoiseFilterFrames::<f64>::flat(frames), len, HOP, 4)
        .unwrap()
        .samples;
    let mean = x.iter().sum::<f64>() / len as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn band_stop_pattern_is_suppressed() {
    let len = 24000;
    let frames = len / HOP;
    // stop 3-6 kHz, which is bins 64..128 of 256 spanning DC to Nyquist
    let row: Vec<f64> = (0..NOISE_BINS)
        .map(|k| if (64..128).contains(&k) { -10.0 } else { 0.0 })
        .collect();
    let lm = row.iter().copied().cycle().take(frames * NOISE_BINS).collect();
    let x = shape_noise(&NoiseFilterFrames::new(lm).unwrap(), len, HOP, 5)
        .unwrap()
        .samples;
    // Welch average over 2048-sample segments
    let mut psd = vec![0.0; 1025];
    for seg in x.chunks_exact(2048) {
        for (acc, v) in psd.iter_mut().zip(power_spectrum(seg)) {
            *acc += v;
        }
    }
    let band = |lo: f64, hi: f64| {
        let (a, b) = ((lo / 12000.0 * 1024.0) as usize, (hi / 12000.0 * 1024.0) as usize);
        psd[a..b].iter().sum::<f64>() / (b - a) as f64
    };
    let stop = band(3500.0, 5500.0);
    let pass = (band(500.0, 2500.0) + band(7000.0, 11000.0)) / 2.0;
    assert!(db(pass / stop) >= 30.0, "{:.1} dB", db(pass / stop));
}

#[test]
fn noise_depends_only_on_the_seed() {
    let frames = NoiseFilterFrames::<f64>::flat(5);
    let a = shape_noise(&frames, 1000, HOP, 17).unwrap().samples;
    let b = shape_noise(&frames, 1000, HOP, 17).unwrap().samples;
    let c = shape_noise(&frames, 1000, HOP, 18).unwrap().samples;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn global_fir_delay_and_identity() {
    let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
    let mut taps = vec![0.0; 128];
    taps[0] = 1.0;
    assert_eq!(apply_global_fir(&x, &taps), x);
    taps.swap(0, 3);
    let y = apply_global_fir(&x, &taps);
    assert_eq!(&y[3..], &x[..47]);
    assert!(apply_global_fir(&x, &[0.0; 128]).iter().all(|&v| v == 0.0));
}

#[test]
fn wavetable_cache_round_trips_through_a_file() {
    let wt = build_lf_wavetable(&Wavetable::default_grid(5), 128, 40).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lf.bin");
    let built = Wavetable::load_or_build(&path);
    assert!(built.is_ok());
    wt.save(&path).unwrap();
    let back = Wavetable::load(&path).unwrap();
    assert_eq!(back.table_len, wt.table_len);
    for k in 0..wt.count() {
        let (a, b) = (wt.row(k), back.row(k));
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6));
    }
    std::fs::write(&path, b"not a table").unwrap();
    assert!(Wavetable::load(&path).is_err());
}

#[test]
fn f0_at_nyquist_is_rejected() {
    let wt = build_lf_wavetable(&Wavetable::default_grid(3), 128, 40).unwrap();
    let controls = SourceControls {
        f0: vec![12000.0],
        table_pos: vec![1.0],
        voiced_gain: vec![1.0],
        noise_gain: vec![0.0],
    };
    assert!(wavetable_osc(&wt, &controls, FS, 4, HOP, 100).is_err());
}
