//! Frame-wise spectral shaping of white noise: a band-stop that slides up
//! in frequency over two seconds.
//!
//! `cargo run --release --example noise_shaping -- noise.wav`

use tvlp::io::{write_wav, WavFormat};
use tvlp::source::{shape_noise, NoiseFilterFrames, NOISE_BINS};

fn main() -> tvlp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "noise.wav".into());
    let (fs, hop, len) = (24000.0, 240, 48000);
    let frames = len / hop;
    let mut log_mag = Vec::with_capacity(frames * NOISE_BINS);
    for f in 0..frames {
        let centre = 20 + f * (NOISE_BINS - 60) / frames;
        log_mag.extend((0..NOISE_BINS).map(|k| if k.abs_diff(centre) < 16 { -8.0 } else { 0.0 }));
    }
    let y = shape_noise(&NoiseFilterFrames::new(log_mag)?, len, hop, 7)?;
    let rms = (y.samples.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    println!("shaped noise rms {rms:.3}");
    let scaled: Vec<f64> = y.samples.iter().map(|v| 0.1 * v).collect();
    write_wav(out.as_ref(), &scaled, fs, WavFormat::Float32)?;
    println!("wrote {out}");
    Ok(())
}
