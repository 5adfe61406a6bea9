//! File formats: mono WAV, f0 tracks as CSV, and the parameter document.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::DEFAULT_OVERSAMPLE;
use crate::synth::{SynthMode, SynthParams, UnvoicedPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

/// Reads a WAV file as mono `f64` in `[-1, 1]`. Multi-channel files are
/// averaged to mono with a warning.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, f64)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    if channels > 1 {
        log::warn!("{}: {channels} channels averaged to mono", path.display());
    }
    let mono = interleaved
        .chunks(channels.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok((mono, spec.sample_rate as f64))
}

/// Reads a WAV file and resamples it to `fs` when its rate differs.
pub fn read_wav_at(path: &Path, fs: f64) -> Result<Vec<f64>> {
    let (x, rate) = read_wav(path)?;
    if (rate - fs).abs() > 1e-9 {
        log::warn!("{}: resampling from {rate} Hz to {fs} Hz", path.display());
        return Ok(resample(&x, rate, fs));
    }
    Ok(x)
}

pub fn write_wav(path: &Path, samples: &[f64], fs: f64, format: WavFormat) -> Result<()> {
    if !(fs >= 1.0 && fs <= u32::MAX as f64) {
        return Err(Error::InvalidArgument(format!("sample rate {fs} cannot be written")));
    }
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, hound::SampleFormat::Int),
        WavFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: fs.round() as u32,
        bits_per_sample: bits,
        sample_format,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &x in samples {
        match format {
            WavFormat::Pcm16 => w.write_sample((x.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
            WavFormat::Float32 => w.write_sample(x as f32)?,
        }
    }
    w.finalize()?;
    Ok(())
}

/// Band-limited interpolation with a Hann-windowed sinc of 32 zero
/// crossings per side, cut off just below the lower Nyquist.
pub fn resample(x: &[f64], from: f64, to: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let ratio = to / from;
    let cutoff = 0.95 * ratio.min(1.0);
    let half = 32.0 / cutoff;
    let out_len = ((x.len() as f64) * ratio).round().max(1.0) as usize;
    (0..out_len)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = (center - half).ceil().max(0.0) as usize;
            let hi = ((center + half).floor() as usize).min(x.len() - 1);
            let mut acc = 0.0;
            for (i, &xi) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let d = i as f64 - center;
                let arg = std::f64::consts::PI * cutoff * d;
                let sinc = if d == 0.0 { 1.0 } else { arg.sin() / arg };
                let w = 0.5 * (1.0 + (std::f64::consts::PI * d / half).cos());
                acc += xi * cutoff * sinc * w;
            }
            acc
        })
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct F0Row {
    time_seconds: f64,
    f0_hz: f64,
}

/// An f0 track as `(time_seconds, f0_hz)` pairs, ascending in time.
#[derive(Clone, Debug, PartialEq)]
pub struct F0Track {
    pub times: Vec<f64>,
    pub hz: Vec<f64>,
}

impl F0Track {
    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut times = Vec::new();
        let mut hz = Vec::new();
        for (i, row) in reader.deserialize::<F0Row>().enumerate() {
            let line = format!("row {}", i + 1);
            let row = row.map_err(|e| Error::format("f0 csv", line.clone(), e.to_string()))?;
            if !row.time_seconds.is_finite() || times.last().is_some_and(|&t| row.time_seconds <= t) {
                return Err(Error::format(
                    "f0 csv",
                    line,
                    "times must be finite and strictly increasing",
                ));
            }
            if !(row.f0_hz >= 0.0 && row.f0_hz.is_finite()) {
                return Err(Error::format(
                    "f0 csv",
                    line,
                    format!("f0 {} is not a frequency", row.f0_hz),
                ));
            }
            times.push(row.time_seconds);
            hz.push(row.f0_hz);
        }
        if times.is_empty() {
            return Err(Error::format("f0 csv", "rows", "no f0 rows"));
        }
        Ok(Self { times, hz })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        for (&time_seconds, &f0_hz) in self.times.iter().zip(&self.hz) {
            w.serialize(F0Row { time_seconds, f0_hz }).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Frame-rate track: frame `f` (at `f * hop / fs` seconds) takes the
    /// value of the nearest row.
    pub fn to_frames(&self, frames: usize, hop: usize, fs: f64) -> Vec<f64> {
        (0..frames)
            .map(|f| {
                let t = (f * hop) as f64 / fs;
                let i = self.times.partition_point(|&x| x < t);
                let nearest = if i == 0 {
                    0
                } else if i == self.times.len() || t - self.times[i - 1] <= self.times[i] - t {
                    i - 1
                } else {
                    i
                };
                self.hz[nearest]
            })
            .collect()
    }

    /// One row per frame.
    pub fn from_frames(f0: &[f64], hop: usize, fs: f64) -> Self {
        Self {
            times: (0..f0.len()).map(|f| (f * hop) as f64 / fs).collect(),
            hz: f0.to_vec(),
        }
    }
}

/// Names the offending key from a serde message, which quotes field names
/// in backticks.
pub(crate) fn serde_error(file: &'static str, detail: String) -> Error {
    let key = detail
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "<document>".into());
    Error::format(file, key, detail)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Synthesis parameters plus what a render needs to be reproduced.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamFile {
    pub params: SynthParams<f64>,
    pub fs: f64,
    pub len: usize,
    pub seed: u64,
    pub oversample: usize,
    pub unvoiced: UnvoicedPolicy,
}

impl ParamFile {
    pub fn new(params: SynthParams<f64>, fs: f64, len: usize, seed: u64) -> Self {
        Self {
            params,
            fs,
            len,
            seed,
            oversample: DEFAULT_OVERSAMPLE,
            unvoiced: UnvoicedPolicy::default(),
        }
    }
}

const FORMAT_TAG: &str = "tvlp-params";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Blob {
    shape: Vec<usize>,
    /// Base64 of little-endian `f64` values.
    data: String,
}

impl Blob {
    fn encode(values: &[f64], shape: Vec<usize>) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape,
            data: B64.encode(bytes),
        }
    }

    fn decode(&self, key: &str, expected: &[usize]) -> Result<Vec<f64>> {
        if self.shape != expected {
            return Err(Error::format(
                "params",
                key,
                format!("shape {:?}, expected {:?}", self.shape, expected),
            ));
        }
        let bytes = B64
            .decode(self.data.as_bytes())
            .map_err(|e| Error::format("params", key, format!("bad base64: {e}")))?;
        let n: usize = expected.iter().product();
        if bytes.len() != 8 * n {
            return Err(Error::format(
                "params",
                key,
                format!("{} bytes for {n} values", bytes.len()),
            ));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDoc {
    format: String,
    version: u32,
    mode: SynthMode,
    fs: f64,
    length: usize,
    seed: u64,
    oversample: usize,
    unvoiced: UnvoicedPolicy,
    hop: usize,
    order: usize,
    frames: usize,
    f0: Blob,
    table_pos: Blob,
    voiced_gain: Blob,
    noise_gain: Blob,
    input_gain: Blob,
    reflection: Blob,
    noise_filter: Blob,
    fir: Blob,
}

impl ParamFile {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let (f, m) = (p.frames(), p.order);
        let doc = ParamDoc {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            mode: p.mode,
            fs: self.fs,
            length: self.len,
            seed: self.seed,
            oversample: self.oversample,
            unvoiced: self.unvoiced,
            hop: p.hop,
            order: m,
            frames: f,
            f0: Blob::encode(&p.f0, vec![f]),
            table_pos: Blob::encode(&p.table_pos, vec![f]),
            voiced_gain: Blob::encode(&p.voiced_gain, vec![f]),
            noise_gain: Blob::encode(&p.noise_gain, vec![f]),
            input_gain: Blob::encode(&p.input_gain, vec![f]),
            reflection: Blob::encode(&p.reflection, vec![f, m]),
            noise_filter: Blob::encode(&p.noise_filter, vec![f, crate::source::NOISE_BINS]),
            fir: Blob::encode(&p.fir, vec![p.fir.len()]),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::format("params", "<document>", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamDoc = serde_json::from_str(text).map_err(|e| serde_error("params", e.to_string()))?;
        if doc.format != FORMAT_TAG {
            return Err(Error::format(
                "params",
                "format",
                format!("expected {FORMAT_TAG:?}, got {:?}", doc.format),
            ));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::format(
                "params",
                "version",
                format!("unsupported version {}", doc.version),
            ));
        }
        let (f, m) = (doc.frames, doc.order);
        let params = SynthParams {
            mode: doc.mode,
            hop: doc.hop,
            order: m,
            f0: doc.f0.decode("f0", &[f])?,
            table_pos: doc.table_pos.decode("table_pos", &[f])?,
            voiced_gain: doc.voiced_gain.decode("voiced_gain", &[f])?,
            noise_gain: doc.noise_gain.decode("noise_gain", &[f])?,
            input_gain: doc.input_gain.decode("input_gain", &[f])?,
            reflection: doc.reflection.decode("reflection", &[f, m])?,
            noise_filter: doc
                .noise_filter
                .decode("noise_filter", &[f, crate::source::NOISE_BINS])?,
            fir: doc.fir.decode("fir", &[crate::source::FIR_TAPS])?,
        };
        params.validate().map_err(|e| {
            let key = match &e {
                Error::NonFinite { what, .. } => (*what).to_string(),
                Error::InvalidArgument(msg) if msg.starts_with("f0") => "f0".into(),
                _ => "<parameters>".into(),
            };
            Error::format("params", key, e.to_string())
        })?;
        let expected = crate::params::frame_count(doc.length, doc.hop);
        if doc.length == 0 || expected != f {
            return Err(Error::format(
                "params",
                "length",
                format!(
                    "{} samples at hop {} need {expected} frames, file has {f}",
                    doc.length, doc.hop
                ),
            ));
        }
        if !(doc.fs > 0.0) {
            return Err(Error::format(
                "params",
                "fs",
                format!("{} is not a sample rate", doc.fs),
            ));
        }
        if doc.oversample == 0 {
            return Err(Error::format("params", "oversample", "must be at least 1"));
        }
        Ok(Self {
            params,
            fs: doc.fs,
            len: doc.length,
            seed: doc.seed,
            oversample: doc.oversample,
            unvoiced: doc.unvoiced,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamFile {
        let f0 = vec![0.0, 120.0, 121.5, 0.0];
        let mut p = SynthParams::<f64>::init(f0, 100, 3, SynthMode::SourceFilter, 4);
        p.voiced_gain[0] = f64::NEG_INFINITY;
        ParamFile::new(p, 24000.0, 350, 11)
    }

    #[test]
    fn params_round_trip_bit_exact() {
        let pf = sample();
        let back = ParamFile::from_json(&pf.to_json().unwrap()).unwrap();
        assert_eq!(back, pf);
    }

    #[test]
    fn diagnostics_name_the_key() {
        let json = sample().to_json().unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["reflection"]["shape"] = serde_json::json!([4, 2]);
        match ParamFile::from_json(&doc.to_string()) {
            Err(Error::Format { key, .. }) => assert_eq!(key, "reflection"),
            other => panic!("{other:?}"),
        }
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc.as_object_mut().unwrap().remove("hop");
        match ParamFile::from_json(&doc.to_string()) {
            Err(Error::Format { key, .. }) => assert_eq!(key, "hop"),
            other => panic!("{other:?}"),
        }
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["fir"]["data"] = serde_json::json!("@@@");
        match ParamFile::from_json(&doc.to_string()) {
            Err(Error::Format { key, .. }) => assert_eq!(key, "fir"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn f0_csv_parsing() {
        let track = F0Track::from_reader("time_seconds,f0_hz\n0.0,0\n0.01,120\n0.02,125.5\n".as_bytes()).unwrap();
        assert_eq!(track.to_frames(4, 240, 24000.0), vec![0.0, 120.0, 125.5, 125.5]);
        assert!(F0Track::from_reader("time_seconds,f0_hz\n0.0,-1\n".as_bytes()).is_err());
        assert!(F0Track::from_reader("time_seconds,f0_hz\n0.1,1\n0.05,1\n".as_bytes()).is_err());
        assert!(F0Track::from_reader("time_seconds,f0_hz\n".as_bytes()).is_err());
    }

    #[test]
    fn resample_keeps_a_low_tone() {
        let x: Vec<f64> = (0..4800)
            .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 48000.0).sin())
            .collect();
        let y = resample(&x, 48000.0, 24000.0);
        assert_eq!(y.len(), 2400);
        for (n, &v) in y.iter().enumerate().skip(200).take(2000) {
            let want = (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 24000.0).sin();
            assert!((v - want).abs() < 2e-3, "{n}: {v} vs {want}");
        }
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = vec![0.0, 0.5, -0.25, 1.0];
        let p = dir.path().join("a.wav");
        write_wav(&p, &x, 24000.0, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), (x.clone(), 24000.0));
        write_wav(&p, &x, 24000.0, WavFormat::Pcm16).unwrap();
        let (y, _) = read_wav(&p).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }
}
