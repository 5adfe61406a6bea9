//! All-pole envelopes built from formant frequencies and bandwidths. The
//! envelope peaks land on the formants, and the equivalent reflection
//! coefficients are all inside the unit interval.

use std::f64::consts::PI;

use tvlp::params::{lpc_to_reflection, lpc_to_spectrum_db};

/// Direct-form coefficients (`s(t) = e(t) - sum a_i s(t-i)`) with a pole
/// pair per `(frequency, bandwidth)`.
fn resonator_lpc(formants: &[(f64, f64)], fs: f64) -> Vec<f64> {
    let mut poly = vec![1.0];
    for &(f, bw) in formants {
        let r = (-PI * bw / fs).exp();
        let section = [1.0, -2.0 * r * (2.0 * PI * f / fs).cos(), r * r];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, p) in poly.iter().enumerate() {
            for (j, s) in section.iter().enumerate() {
                next[i + j] += p * s;
            }
        }
        poly = next;
    }
    poly[1..].to_vec()
}

fn main() -> tvlp::Result<()> {
    let fs = 24000.0;
    let bins = 2401;
    for (name, formants) in [
        (
            "/a/",
            [(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0), (3400.0, 250.0)],
        ),
        (
            "/i/",
            [(270.0, 60.0), (2290.0, 100.0), (3010.0, 200.0), (3700.0, 250.0)],
        ),
    ] {
        let a = resonator_lpc(&formants, fs);
        let k = lpc_to_reflection(&a)?;
        let env = lpc_to_spectrum_db(&a, bins)?;
        let peaks: Vec<String> = (1..bins - 1)
            .filter(|&i| env[i] > env[i - 1] && env[i] > env[i + 1])
            .map(|i| format!("{:.0} Hz", fs / 2.0 * i as f64 / (bins - 1) as f64))
            .collect();
        let k_max = k.iter().map(|v| v.abs()).fold(0.0, f64::max);
        println!("{name}: envelope peaks at {}; largest |k| {k_max:.4}", peaks.join(", "));
    }
    Ok(())
}
