//! Builds the LF glottal wavetable and renders an f0 glide that sweeps the
//! voice quality from tense to breathy.
//!
//! `cargo run --release --example wavetable -- glide.wav`

use tvlp::io::{write_wav, WavFormat};
use tvlp::source::{wavetable_osc, SourceControls, Wavetable, DEFAULT_OVERSAMPLE};

fn main() -> tvlp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "glide.wav".into());
    let (fs, hop, len) = (24000.0, 240, 48000);
    let wt = Wavetable::build_default()?;
    println!("{} tables of {} samples", wt.count(), wt.table_len);

    let frames = len / hop;
    let last = (wt.count() - 1) as f64;
    let controls = SourceControls {
        f0: (0..frames).map(|f| 100.0 + 150.0 * f as f64 / frames as f64).collect(),
        table_pos: (0..frames).map(|f| last * f as f64 / frames as f64).collect(),
        voiced_gain: vec![0.5; frames],
        noise_gain: vec![0.0; frames],
    };
    let y = wavetable_osc(&wt, &controls, fs, DEFAULT_OVERSAMPLE, hop, len)?;
    write_wav(out.as_ref(), &y.samples, fs, WavFormat::Float32)?;
    println!("wrote {out}");
    Ok(())
}
