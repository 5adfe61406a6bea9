//! Command-line front end: synthesis, fitting, gradient checks, timing and
//! envelope export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{self, BenchConfig, Method};
use crate::error::{Error, Result};
use crate::fit::{fit, score, FitConfig, FitMode, FitOutcome, Interpolation};
use crate::io::{read_wav_at, serde_error, write_wav, F0Track, ParamFile, WavFormat};
use crate::params::{frame_count, lpc_to_spectrum_db, FramePlan};
use crate::source::Wavetable;
use crate::synth::{render, ContextOptions, FilterRealization, SynthContext, UnvoicedPolicy};
use crate::verify::{run_suite, Fault, SuiteConfig};

pub const EXIT_IO: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_CHECK_FAILED: u8 = 5;

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Wav(_) => EXIT_IO,
        Error::NonFinite { .. } | Error::Numerical(_) | Error::SolverDiverged { .. } => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "tvlp", version, about = "Differentiable time-varying LP vocoder")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a parameter file to WAV.
    Synth(SynthArgs),
    /// Fit parameters to a recording given its f0 track.
    Fit(FitArgs),
    /// Check the analytic LP gradients against reference implementations.
    Gradcheck(GradcheckArgs),
    /// Time the analytic backward pass against the references.
    Bench(BenchArgs),
    /// Dump per-frame LP envelopes in dB as CSV.
    Spectra(SpectraArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub params: PathBuf,
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = WavFormat::Float32)]
    pub format: WavFormat,
    /// Working precision of the render; fitting always runs in f64.
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Overlap-add time-invariant frames instead of per-sample coefficients.
    #[arg(long)]
    pub framewise: bool,
    #[arg(long, default_value_t = 0.75)]
    pub overlap: f64,
    /// Coefficients interpolated between frames for sample-wise rendering.
    #[arg(long, value_enum, default_value_t = Interpolation::Lpc)]
    pub interpolation: Interpolation,
}

/// Every field overrides the config file.
#[derive(Debug, Args)]
pub struct FitArgs {
    pub target: PathBuf,
    pub f0: PathBuf,
    /// TOML file with any subset of the fit settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "fit_out")]
    pub out_dir: PathBuf,
    /// Start from these parameters instead of the default initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<FitMode>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub fs: Option<f64>,
    /// Falls back to the config file, then to TVLP_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `fixed:HZ` or `uniform:LO:HI`.
    #[arg(long, value_parser = parse_unvoiced)]
    pub unvoiced: Option<UnvoicedPolicy>,
    #[arg(long)]
    pub oversample: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub fft_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long, value_enum)]
    pub interpolation: Option<Interpolation>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long, default_value_t = 6)]
    pub max_order: usize,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 24000)]
    pub len: usize,
    #[arg(long, default_value_t = 22)]
    pub order: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Longest signal for the quadratic impulse sweep.
    #[arg(long, default_value_t = 2048)]
    pub sweep_len_cap: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    pub params: PathBuf,
    pub out: PathBuf,
    /// Frequency points from DC to Nyquist.
    #[arg(long, default_value_t = 257)]
    pub bins: usize,
}

pub fn parse_unvoiced(s: &str) -> std::result::Result<UnvoicedPolicy, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    match parts.as_slice() {
        ["fixed", hz] => Ok(UnvoicedPolicy::Fixed { hz: num(hz)? }),
        ["uniform", lo, hi] => Ok(UnvoicedPolicy::Uniform {
            lo: num(lo)?,
            hi: num(hi)?,
        }),
        _ => Err("expected fixed:HZ or uniform:LO:HI".into()),
    }
}

/// What a command produced, for the exit status.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    ChecksFailed,
    /// Fitting stopped on a non-finite value; the checkpoint was written.
    Aborted,
}

pub fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| Status::Ok),
        Command::Fit(a) => cmd_fit(a).map(|r| {
            if r.aborted.is_some() {
                Status::Aborted
            } else {
                Status::Ok
            }
        }),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a).map(|_| Status::Ok),
        Command::Spectra(a) => cmd_spectra(a).map(|_| Status::Ok),
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Ok(Status::Aborted) => ExitCode::from(EXIT_NUMERICAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Renders a parameter file; returns the samples written.
pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<f64>> {
    let pf = ParamFile::load(&args.params)?;
    let filter = if args.framewise {
        FilterRealization::FrameWise(FramePlan::hann_overlap(pf.params.hop, args.overlap)?)
    } else {
        args.interpolation.sample_wise()
    };
    let wt = Wavetable::build_default()?;
    let y = render_file(&pf, &wt, &filter, args.precision)?;
    write_wav(&args.out, &y, pf.fs, args.format)?;
    Ok(y)
}

fn context_options(pf: &ParamFile) -> ContextOptions {
    ContextOptions {
        fs: pf.fs,
        oversample: pf.oversample,
        unvoiced: pf.unvoiced,
        seed: pf.seed,
    }
}

pub fn render_file(
    pf: &ParamFile,
    wt: &Wavetable,
    filter: &FilterRealization,
    precision: Precision,
) -> Result<Vec<f64>> {
    let opts = context_options(pf);
    match precision {
        Precision::F64 => {
            let ctx = SynthContext::new(wt, &pf.params, pf.len, &opts)?;
            Ok(render(&pf.params, &ctx, filter)?.samples)
        }
        Precision::F32 => {
            let p = pf.params.cast::<f32>();
            let ctx = SynthContext::new(wt, &p, pf.len, &opts)?;
            Ok(render(&p, &ctx, filter)?.samples.into_iter().map(f64::from).collect())
        }
    }
}

/// Config file (if any), then flags, then the seed fallback chain.
pub fn resolve_fit_config(args: &FitArgs) -> Result<FitConfig> {
    let (mut cfg, file_has_seed) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let table: toml::Table =
                toml::from_str(&text).map_err(|e| serde_error("fit config", e.message().to_owned()))?;
            let has_seed = table.contains_key("seed");
            let cfg: FitConfig = table
                .try_into()
                .map_err(|e: toml::de::Error| serde_error("fit config", e.message().to_owned()))?;
            (cfg, has_seed)
        }
        None => (FitConfig::default(), false),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = &args.$field { cfg.$field = v.clone(); } )* };
    }
    apply!(
        mode,
        steps,
        lr,
        clip,
        order,
        hop,
        fs,
        unvoiced,
        oversample,
        fft_sizes,
        overlap,
        interpolation,
        max_seconds
    );
    cfg.seed = match (args.seed, file_has_seed) {
        (Some(s), _) => s,
        (None, true) => cfg.seed,
        (None, false) => match std::env::var("TVLP_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("TVLP_SEED={v:?} is not an unsigned integer")))?,
            Err(_) => cfg.seed,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct Environment {
    pub crate_version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub cpus: usize,
    pub rayon_threads: usize,
    pub debug_assertions: bool,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            rayon_threads: rayon::current_num_threads(),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

/// The run summary written next to the fitted parameters.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config: FitConfig,
    pub target_samples: usize,
    pub steps_run: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_step: usize,
    /// Loss of the written parameter file, re-rendered from disk.
    pub rescored_loss: f64,
    pub params_path: PathBuf,
    pub loss_csv_path: PathBuf,
    pub seconds: f64,
    pub seconds_per_step: f64,
    pub aborted: Option<String>,
    pub environment: Environment,
    pub losses: Vec<f64>,
}

/// Rows beyond the last time are held at the final value.
fn load_target(args: &FitArgs, cfg: &FitConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut target = read_wav_at(&args.target, cfg.fs)?;
    if target.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} has no samples",
            args.target.display()
        )));
    }
    let cap = cfg.max_samples();
    if target.len() > cap {
        log::warn!("target cut from {} to {cap} samples", target.len());
        target.truncate(cap);
    }
    let track = F0Track::read_csv(&args.f0)?;
    let f0 = track.to_frames(frame_count(target.len(), cfg.hop), cfg.hop, cfg.fs);
    Ok((target, f0))
}

pub fn cmd_fit(args: &FitArgs) -> Result<RunReport> {
    let cfg = resolve_fit_config(args)?;
    let (target, f0) = load_target(args, &cfg)?;
    let init = match &args.init {
        Some(p) => Some(ParamFile::load(p)?.params),
        None => None,
    };
    let wt = Wavetable::build_default()?;
    let every = (cfg.steps / 20).max(1);
    let out = fit(&target, f0, &wt, &cfg, init, |step, loss| {
        if step % every == 0 {
            log::info!("step {step}: loss {loss:.6}");
        }
    })?;
    write_fit_outputs(args, &cfg, &target, &wt, out)
}

fn write_fit_outputs(
    args: &FitArgs,
    cfg: &FitConfig,
    target: &[f64],
    wt: &Wavetable,
    out: FitOutcome,
) -> Result<RunReport> {
    std::fs::create_dir_all(&args.out_dir)?;
    let params_path = args.out_dir.join("params.json");
    let loss_csv_path = args.out_dir.join("loss.csv");
    let mut pf = ParamFile::new(out.params, cfg.fs, target.len(), cfg.seed);
    pf.oversample = cfg.oversample;
    pf.unvoiced = cfg.unvoiced;
    pf.save(&params_path)?;
    write_loss_csv(&loss_csv_path, &out.losses, &out.grad_norms)?;

    let reloaded = ParamFile::load(&params_path)?;
    let rescored_loss = score(&reloaded.params, target, wt, cfg, &cfg.realization()?)?;
    let report = RunReport {
        config: cfg.clone(),
        target_samples: target.len(),
        steps_run: out.losses.len(),
        initial_loss: out.initial_loss,
        best_loss: out.best_loss,
        best_step: out.best_step,
        rescored_loss,
        params_path,
        loss_csv_path,
        seconds: out.seconds,
        seconds_per_step: out.seconds / out.losses.len().max(1) as f64,
        aborted: out.aborted,
        environment: Environment::current(),
        losses: out.losses,
    };
    let summary = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(args.out_dir.join("summary.json"), summary)?;
    if let Some(why) = &report.aborted {
        log::error!("fit aborted ({why}); best parameters so far written");
    }
    // A redrawn unvoiced f0 during fitting means the fit-time losses were
    // measured on other oscillator inputs than the written file renders.
    let comparable = matches!(cfg.unvoiced, UnvoicedPolicy::Fixed { .. }) && report.best_loss.is_finite();
    if comparable && (rescored_loss - report.best_loss).abs() > 1e-6 * report.best_loss.abs() {
        return Err(Error::Numerical(format!(
            "written parameters score {rescored_loss}, fit reported {}",
            report.best_loss
        )));
    }
    Ok(report)
}

fn write_loss_csv(path: &Path, losses: &[f64], grad_norms: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(["step", "loss", "grad_norm"])
        .map_err(|e| Error::Io(e.into()))?;
    for (step, loss) in losses.iter().enumerate() {
        let norm = grad_norms.get(step).map_or(String::new(), |g| g.to_string());
        w.write_record([step.to_string(), loss.to_string(), norm])
            .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<Status> {
    let outcomes = run_suite(&SuiteConfig {
        seed: args.seed,
        instances: args.instances,
        max_len: args.max_len,
        max_order: args.max_order,
        fault: Fault {
            negate_coeff_grad: args.inject_fault,
        },
    })?;
    println!(
        "{:<36} {:>9} {:>12} {:>10}  result",
        "check", "instances", "max_error", "tolerance"
    );
    for o in &outcomes {
        println!(
            "{:<36} {:>9} {:>12.3e} {:>10.0e}  {}",
            o.name,
            o.instances,
            o.max_error,
            o.tolerance,
            if o.passed() { "PASS" } else { "FAIL" }
        );
    }
    Ok(if outcomes.iter().all(|o| o.passed()) {
        Status::Ok
    } else {
        Status::ChecksFailed
    })
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<bench::BenchRow>> {
    let rows = bench::run(&BenchConfig {
        len: args.len,
        order: args.order,
        repeats: args.repeats,
        sweep_len_cap: args.sweep_len_cap,
        seed: 0,
    })?;
    match &args.out {
        Some(p) => bench::write_csv(&rows, std::fs::File::create(p)?)?,
        None => bench::write_csv(&rows, std::io::stdout().lock())?,
    }
    for m in [Method::Analytic, Method::Naive, Method::ImpulseSweep] {
        if let Some(r) = bench::doubling_ratio(&rows, m) {
            eprintln!("{}: doubling ratio {r:.2}", m.name());
        }
    }
    if let Some(s) = bench::speedup(&rows, args.len, Method::Analytic, Method::Naive) {
        eprintln!("naive / analytic at T={}: {s:.1}x", args.len);
    }
    Ok(rows)
}

/// Envelope rows in dB, one per frame.
pub fn envelope_table(pf: &ParamFile, bins: usize) -> Result<Vec<Vec<f64>>> {
    if bins < 2 {
        return Err(Error::InvalidArgument("need at least 2 frequency points".into()));
    }
    let a = pf.params.lpc_frames()?;
    let m = pf.params.order;
    a.chunks(m).map(|row| lpc_to_spectrum_db(row, bins)).collect()
}

pub fn cmd_spectra(args: &SpectraArgs) -> Result<Vec<Vec<f64>>> {
    let pf = ParamFile::load(&args.params)?;
    let rows = envelope_table(&pf, args.bins)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| Error::Io(e.into()))?;
    let nyquist = pf.fs / 2.0;
    let mut header = vec!["frame".to_string(), "time_seconds".to_string()];
    header.extend((0..args.bins).map(|k| format!("{:.2}", nyquist * k as f64 / (args.bins - 1) as f64)));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for (f, row) in rows.iter().enumerate() {
        let mut rec = vec![f.to_string(), format!("{:.6}", (f * pf.params.hop) as f64 / pf.fs)];
        rec.extend(row.iter().map(|v| format!("{v:.4}")));
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(rows)
}
