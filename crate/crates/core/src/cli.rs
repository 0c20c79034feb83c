//! Command-line front end.
//!
//! Exit codes: 0 success, 1 malformed arguments, 2 I/O failure (including
//! unreadable tag files), 3 invalid configuration.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::binning::Sampling;
use crate::error::Error;
use crate::estimators::{EstimatorKind, HeraldRule};
use crate::io as tagio;
use crate::manifest::RunManifest;
use crate::model::{CensusMode, META_CONFIG_HASH};
use crate::oracle::{exact_expected_g2_with, CountModel, CountModelKind, DEFAULT_CAP};
use crate::pipeline::{reproduce, Figure};
use crate::sim::{config_for_detected_rate, simulate, SourceConfig, PS_PER_S};
use crate::sweep::{
    census_sweep, derive_seed, sweep_anchored, sweep_power, sweep_tau, write_census_csv,
    write_power_csv, write_tau_csv, SweepOptions,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "G2BIN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "g2bin", version, about = "Fixed-bin g2 estimators and SPDC detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a detection record and write it as a tag file.
    Simulate(SimulateArgs),
    /// Estimate g2 on a tag file at one or more bin widths.
    Analyze(AnalyzeArgs),
    /// Count no-, single- and multi-photon bins.
    Census(CensusArgs),
    /// Sweep g2 over evenly spaced bin widths.
    SweepTau(SweepTauArgs),
    /// Simulate many records per source rate and report mean g2 with spread.
    SweepPower(SweepPowerArgs),
    /// Print exact expected g2 under a count model.
    Oracle(OracleArgs),
    /// Run a figure pipeline with its default protocol.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Unheralded,
    Heralded,
}

impl Mode {
    fn kind(self) -> EstimatorKind {
        match self {
            Mode::Unheralded => EstimatorKind::UnheraldedBinned,
            Mode::Heralded => EstimatorKind::HeraldedBinned,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CensusModes {
    Unheralded,
    Heralded,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplingArg {
    Random,
    Consecutive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    /// Any detection on A, B or C makes a heralded bin count.
    Any,
    /// Only bins with a herald count.
    Strict,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig2,
    Fig5,
    Fig6,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Independent,
    Paired,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleMode {
    Unheralded,
    Heralded,
    Both,
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pair_rate: Option<f64>,
    /// Solve pair_rate for this detected A+B rate (Mcps).
    #[arg(long, conflicts_with = "pair_rate")]
    detected_rate_mcps: Option<f64>,
    #[arg(long)]
    eta_a: Option<f64>,
    #[arg(long)]
    eta_b: Option<f64>,
    #[arg(long)]
    eta_c: Option<f64>,
    #[arg(long)]
    dead_time_ns: Option<f64>,
    #[arg(long)]
    dark_rate_a: Option<f64>,
    #[arg(long)]
    dark_rate_b: Option<f64>,
    #[arg(long)]
    dark_rate_c: Option<f64>,
    #[arg(long)]
    jitter_ps: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pair_delay_ps: Option<i64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Output tag file (`.csv` for text, anything else binary).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, value_enum, default_value = "unheralded")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "random")]
    sampling: SamplingArg,
    #[arg(long, value_enum, default_value = "any")]
    herald_rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EstimateArgs {
    fn options(&self) -> SweepOptions {
        SweepOptions {
            sampling: sampling(self.sampling),
            herald_rule: rule(self.herald_rule),
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    input: PathBuf,
    /// Bin widths in ns (comma separated or repeated).
    #[arg(long, value_delimiter = ',', required = true)]
    tau_ns: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[command(flatten)]
    estimate: EstimateArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CensusArgs {
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    tau_ns: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: CensusModes,
    #[arg(long, value_enum, default_value = "random")]
    sampling: SamplingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepTauArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    tau_start_ns: f64,
    /// Defaults to the start width.
    #[arg(long)]
    tau_step_ns: Option<f64>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Grow windows both ways from random anchors instead of sampling
    /// disjoint bins; negative widths in the output are backward windows.
    #[arg(long)]
    anchored: bool,
    #[command(flatten)]
    estimate: EstimateArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepPowerArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Detected A+B rates (Mcps), one record set per rate.
    #[arg(long, value_delimiter = ',')]
    rates_mcps: Vec<f64>,
    /// Pair rates (per second), used instead of --rates-mcps.
    #[arg(long, value_delimiter = ',', conflicts_with = "rates_mcps")]
    pair_rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "30")]
    tau_ns: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long, value_enum, default_value = "unheralded")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "random")]
    sampling: SamplingArg,
    #[arg(long, value_enum, default_value = "any")]
    herald_rule: RuleArg,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, value_enum, default_value = "independent")]
    model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    lambda_a: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_b: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_c: f64,
    #[arg(long, default_value_t = 0.0)]
    mu_pair: f64,
    #[arg(long, default_value_t = 0.5)]
    eta_a: f64,
    #[arg(long, default_value_t = 0.5)]
    eta_b: f64,
    #[arg(long, default_value_t = 1.0)]
    eta_c: f64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: OracleMode,
    #[arg(long, value_enum, default_value = "any")]
    herald_rule: RuleArg,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    figure: FigureArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Defaults to $G2BIN_OUT_DIR, else the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn sampling(arg: SamplingArg) -> Sampling {
    match arg {
        SamplingArg::Random => Sampling::Random,
        SamplingArg::Consecutive => Sampling::Consecutive,
    }
}

fn rule(arg: RuleArg) -> HeraldRule {
    match arg {
        RuleArg::Any => HeraldRule::AnyChannel,
        RuleArg::Strict => HeraldRule::HeraldRequired,
    }
}

fn ns_to_ps(ns: f64) -> Result<u64, Error> {
    let ps = (ns * 1e3).round();
    if !ps.is_finite() || ps < 1.0 {
        return Err(Error::InvalidConfig(format!("bin width {ns} ns must be at least 1 ps")));
    }
    Ok(ps as u64)
}

fn taus_ps(taus_ns: &[f64]) -> Result<Vec<u64>, Error> {
    taus_ns.iter().map(|&t| ns_to_ps(t)).collect()
}

impl SourceArgs {
    fn resolve(&self) -> Result<SourceConfig, Error> {
        let mut config = match &self.config {
            Some(path) => SourceConfig::from_kv_text(&fs::read_to_string(path)?)?,
            None => SourceConfig::default(),
        };
        let set_f = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set_f(&mut config.pair_rate, self.pair_rate);
        set_f(&mut config.eta_a, self.eta_a);
        set_f(&mut config.eta_b, self.eta_b);
        set_f(&mut config.eta_c, self.eta_c);
        set_f(&mut config.dark_rate_a, self.dark_rate_a);
        set_f(&mut config.dark_rate_b, self.dark_rate_b);
        set_f(&mut config.dark_rate_c, self.dark_rate_c);
        set_f(&mut config.jitter_sigma, self.jitter_ps);
        if let Some(ns) = self.dead_time_ns {
            if !(ns >= 0.0 && ns.is_finite()) {
                return Err(Error::InvalidConfig(format!("dead time {ns} ns must be >= 0")));
            }
            config.dead_time = (ns * 1e3).round() as u64;
        }
        if let Some(delay) = self.pair_delay_ps {
            config.pair_delay = delay;
        }
        if let Some(s) = self.duration_s {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("duration {s} s must be >= 0")));
            }
            config.duration = (s * PS_PER_S).round() as u64;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mcps) = self.detected_rate_mcps {
            config = config_for_detected_rate(&config, mcps * 1e6)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Format(_) | Error::InvalidRecord(_) => 2,
        _ => 3,
    }
}

/// Arguments after the subcommand with output destinations removed.
fn manifest_args(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for arg in argv.iter().skip(2) {
        if skip {
            skip = false;
            continue;
        }
        match arg.as_str() {
            "-o" | "--output" | "--out-dir" => skip = true,
            a if a.starts_with("--output=") || a.starts_with("--out-dir=") => {}
            a if a.starts_with("-o") && a.len() > 2 && !a.starts_with("--") => {}
            _ => out.push(arg.clone()),
        }
    }
    out
}

fn default_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Writes a CSV either to `output` (plus manifest) or to stdout.
fn emit_csv(
    output: Option<&Path>,
    mut manifest: RunManifest,
    write: impl FnOnce(&str, &mut dyn Write) -> Result<(), Error>,
) -> Result<(), Error> {
    match output {
        Some(path) => {
            manifest.outputs = vec![path.display().to_string()];
            let mut file = BufWriter::new(File::create(path)?);
            write(&manifest.csv_comment(), &mut file)?;
            file.flush()?;
            manifest.write_next_to(path)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&manifest.csv_comment(), &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run_command(command: Command, base: RunManifest) -> Result<(), Error> {
    match command {
        Command::Simulate(args) => {
            let config = args.source.resolve()?;
            let record = simulate(&config)?;
            let path = args
                .output
                .unwrap_or_else(|| default_dir().join("tags.bg2t"));
            tagio::write_path(&record, &path)?;
            let mut manifest = RunManifest {
                seed: config.seed,
                ..base
            }
            .with_config(config.to_pairs())
            .with_config([(META_CONFIG_HASH, config.hash())]);
            manifest.outputs.push(path.display().to_string());
            manifest.write_next_to(&path)?;
            eprintln!("wrote {} tags to {}", record.len(), path.display());
        }
        Command::Analyze(args) => {
            let record = tagio::read_path(&args.input)?;
            let taus = taus_ps(&args.tau_ns)?;
            let kind = args.estimate.mode.kind();
            let points = sweep_tau(&record, &taus, args.samples, kind, args.estimate.seed, args.estimate.options())?;
            let manifest = analysis_manifest(base, &args.input, args.estimate.seed, kind, &taus, args.samples);
            emit_csv(args.output.as_deref(), manifest, |comment, out| {
                write_tau_csv(&points, Some(comment), out)
            })?;
        }
        Command::Census(args) => {
            let record = tagio::read_path(&args.input)?;
            let taus = taus_ps(&args.tau_ns)?;
            let modes: Vec<CensusMode> = match args.mode {
                CensusModes::Unheralded => vec![CensusMode::Unheralded],
                CensusModes::Heralded => vec![CensusMode::Heralded],
                CensusModes::Both => vec![CensusMode::Unheralded, CensusMode::Heralded],
            };
            let rows = census_sweep(&record, &taus, args.samples, &modes, sampling(args.sampling), args.seed)?;
            if let Some(bad) = rows.iter().find(|c| !c.is_partition()) {
                return Err(Error::Format(format!("census tallies do not partition: {bad:?}")));
            }
            let mut manifest = RunManifest { seed: args.seed, ..base };
            manifest.inputs.push(args.input.display().to_string());
            emit_csv(args.output.as_deref(), manifest, |comment, out| {
                write_census_csv(&rows, Some(comment), out)
            })?;
        }
        Command::SweepTau(args) => {
            let record = tagio::read_path(&args.input)?;
            let start = ns_to_ps(args.tau_start_ns)?;
            let step = ns_to_ps(args.tau_step_ns.unwrap_or(args.tau_start_ns))?;
            let kind = args.estimate.mode.kind();
            let points = if args.anchored {
                if start != step {
                    return Err(Error::InvalidConfig(
                        "anchored sweeps grow in multiples of the start width".into(),
                    ));
                }
                sweep_anchored(&record, start, args.steps, args.samples, kind, args.estimate.seed, rule(args.estimate.herald_rule))?
            } else {
                let taus: Vec<u64> = (0..args.steps as u64).map(|k| start + k * step).collect();
                sweep_tau(&record, &taus, args.samples, kind, args.estimate.seed, args.estimate.options())?
            };
            let taus: Vec<u64> = points.iter().map(|p| p.tau.unsigned_abs()).collect();
            let manifest = analysis_manifest(base, &args.input, args.estimate.seed, kind, &taus, args.samples);
            emit_csv(args.output.as_deref(), manifest, |comment, out| {
                write_tau_csv(&points, Some(comment), out)
            })?;
        }
        Command::SweepPower(args) => {
            let base_config = args.source.resolve()?;
            let taus = taus_ps(&args.tau_ns)?;
            let configs: Vec<SourceConfig> = if !args.pair_rates.is_empty() {
                args.pair_rates
                    .iter()
                    .map(|&rate| SourceConfig {
                        pair_rate: rate,
                        ..base_config.clone()
                    })
                    .collect()
            } else if !args.rates_mcps.is_empty() {
                args.rates_mcps
                    .iter()
                    .map(|&mcps| config_for_detected_rate(&base_config, mcps * 1e6))
                    .collect::<Result<_, _>>()?
            } else {
                vec![base_config.clone()]
            };
            let configs: Vec<SourceConfig> = configs
                .into_iter()
                .enumerate()
                .map(|(i, c)| SourceConfig {
                    seed: derive_seed(base_config.seed, i as u64),
                    ..c
                })
                .collect();
            let options = SweepOptions {
                sampling: sampling(args.sampling),
                herald_rule: rule(args.herald_rule),
            };
            let points = sweep_power(&configs, &taus, args.samples, args.repeats, args.mode.kind(), options)?;
            let mut manifest = RunManifest {
                seed: base_config.seed,
                ..base
            };
            for (i, c) in configs.iter().enumerate() {
                manifest = manifest.with_config(
                    c.to_pairs().into_iter().map(|(k, v)| (format!("source{i}.{k}"), v)),
                );
            }
            emit_csv(args.output.as_deref(), manifest, |comment, out| {
                write_power_csv(&points, Some(comment), out)
            })?;
        }
        Command::Oracle(args) => {
            let model = CountModel {
                kind: match args.model {
                    ModelArg::Independent => CountModelKind::IndependentPoisson,
                    ModelArg::Paired => CountModelKind::PairedPlusPoisson,
                },
                lambda_a: args.lambda_a,
                lambda_b: args.lambda_b,
                lambda_c: args.lambda_c,
                mu_pair: args.mu_pair,
                eta_a: args.eta_a,
                eta_b: args.eta_b,
                eta_c: args.eta_c,
                truncation_cap: args.cap,
            };
            let kinds = match args.mode {
                OracleMode::Unheralded => vec![EstimatorKind::UnheraldedBinned],
                OracleMode::Heralded => vec![EstimatorKind::HeraldedBinned],
                OracleMode::Both => vec![EstimatorKind::UnheraldedBinned, EstimatorKind::HeraldedBinned],
            };
            println!("estimator,expected_g2");
            for kind in kinds {
                let value = exact_expected_g2_with(&model, kind, rule(args.herald_rule))?;
                println!("{kind},{value}");
            }
        }
        Command::Reproduce(args) => {
            let figure = match args.figure {
                FigureArg::Fig2 => Figure::Fig2,
                FigureArg::Fig5 => Figure::Fig5,
                FigureArg::Fig6 => Figure::Fig6,
            };
            let dir = args.out_dir.unwrap_or_else(default_dir);
            let manifest = RunManifest { seed: args.seed, ..base };
            for path in reproduce(figure, args.seed, &dir, manifest)? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn analysis_manifest(
    base: RunManifest,
    input: &Path,
    seed: u64,
    kind: EstimatorKind,
    taus: &[u64],
    samples: usize,
) -> RunManifest {
    let mut manifest = RunManifest { seed, ..base }.with_config([
        ("estimator".to_string(), kind.to_string()),
        (
            "taus_ps".to_string(),
            taus.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        ),
        ("samples".to_string(), samples.to_string()),
    ]);
    manifest.inputs.push(input.display().to_string());
    manifest
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let subcommand = strings.get(1).cloned().unwrap_or_default();
    let mut base = RunManifest::new(subcommand, 0);
    base.args = manifest_args(&strings);
    match run_command(cli.command, base) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
