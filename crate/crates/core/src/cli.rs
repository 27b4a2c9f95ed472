//! Command-line front end.
//!
//! Exit status: 0 when every check passed, 1 when a check failed, 2 for
//! usage and input errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;

use crate::dyadic::{make_grid, TruncatedGrid};
use crate::ensembles::{trial_rng, Ensemble, DEFAULT_DENSITY};
use crate::error::{Error, Result};
use crate::operators::MAX_DENSE_DEPTH;
use crate::report::{write_reports, Format};
use crate::symbols::{synthesize, CoefSequence};
use crate::symfile;
use crate::theorems::{
    two_weight_verify_with, verify_classical, verify_embedding, verify_main_with, Advisory, MainCase, NineCase,
    NineCaseSetup, VerificationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_DEPTH: u32 = 6;
/// Sign samples for the advisory first-moment estimate.
const ADVISORY_SAMPLES: usize = 200;

const LANE_B: u8 = 0;
const LANE_BETA: u8 = 1;
const LANE_ADVISORY: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "paralab", version, about = "Haar paraproduct norm lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check one characterization over ensemble draws.
    Verify(RunArgs),
    /// Two-weight composition with necessity checks.
    TwoWeight(RunArgs),
    /// CSV of lhs/rhs over a depth range.
    Sweep(RunArgs),
    /// Write a symbol file for an ensemble draw.
    GenSymbols(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnsembleArg {
    Gaussian,
    Sparse,
    Chain,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// 10-01, 01-00, 01-00p, 01-01, 01-10, classical, embed, or a nine-case label like 001-010.
    #[arg(long)]
    case: Option<String>,
    /// Grid depth (2^L cells); lower end of the range for sweep.
    #[arg(long = "L")]
    depth: Option<u32>,
    /// Upper depth for sweep.
    #[arg(long = "L-max")]
    depth_max: Option<u32>,
    /// Symbol source; defaults to file when --symbols is given, else gaussian.
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleArg>,
    /// Nonzero probability for the sparse ensemble.
    #[arg(long, default_value_t = DEFAULT_DENSITY)]
    density: f64,
    /// Draws per depth.
    #[arg(long, default_value_t = 50)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to csv for sweep, json otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Symbol file for b.
    #[arg(long)]
    symbols: Option<PathBuf>,
    /// Symbol file for beta; b is reused when absent.
    #[arg(long = "symbols-beta")]
    symbols_beta: Option<PathBuf>,
}

/// What a verify or sweep run checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseSelector {
    Main(MainCase),
    Classical,
    Embedding,
    Nine(NineCase),
}

impl FromStr for CaseSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "embed" => Ok(Self::Embedding),
            _ => s
                .parse()
                .map(Self::Main)
                .or_else(|_| s.parse().map(Self::Nine)),
        }
    }
}

impl CaseSelector {
    pub fn verify(
        self,
        grid: &TruncatedGrid,
        b: &CoefSequence,
        beta: &CoefSequence,
        advisory: Option<Advisory>,
    ) -> Result<VerificationReport> {
        match self {
            Self::Main(c) => verify_main_with(c, b, beta, grid, advisory),
            Self::Classical => verify_classical(b, grid),
            Self::Embedding => verify_embedding(b, grid),
            Self::Nine(c) => {
                let bf = synthesize(grid, b)?;
                let betaf = synthesize(grid, beta)?;
                NineCaseSetup::new(grid, &bf, &betaf)?.verify(c)
            }
        }
    }
}

/// Where the symbols of a run come from.
#[derive(Debug, Clone)]
pub enum Source {
    Random(Ensemble),
    Files { b: CoefSequence, beta: CoefSequence },
}

/// Validated settings shared by every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: Option<String>,
    pub depth: u32,
    pub depth_max: u32,
    pub source: Source,
    pub trials: u64,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

fn check_depth(depth: u32) -> Result<()> {
    if (1..=MAX_DENSE_DEPTH).contains(&depth) {
        Ok(())
    } else {
        Err(Error::Bounds {
            depth,
            min: 1,
            max: MAX_DENSE_DEPTH,
        })
    }
}

impl RunConfig {
    fn from_args(args: RunArgs, default_format: Format) -> Result<Self> {
        if args.trials == 0 {
            return Err(usage("--trials must be at least 1"));
        }
        let ensemble = args.ensemble.unwrap_or(if args.symbols.is_some() {
            EnsembleArg::File
        } else {
            EnsembleArg::Gaussian
        });
        let (source, depth) = match ensemble {
            EnsembleArg::File => {
                let path = args.symbols.as_deref().ok_or_else(|| usage("--ensemble file needs --symbols"))?;
                let b = symfile::read(path)?;
                let beta = match &args.symbols_beta {
                    Some(p) => symfile::read(p)?,
                    None => b.clone(),
                };
                if b.depth() != beta.depth() {
                    return Err(Error::DepthMismatch {
                        left: b.depth(),
                        right: beta.depth(),
                    });
                }
                if let Some(d) = args.depth.filter(|&d| d != b.depth()) {
                    return Err(Error::DepthMismatch { left: d, right: b.depth() });
                }
                let depth = b.depth();
                (Source::Files { b, beta }, depth)
            }
            other => {
                if args.symbols.is_some() || args.symbols_beta.is_some() {
                    return Err(usage("--symbols needs --ensemble file"));
                }
                let e = match other {
                    EnsembleArg::Gaussian => Ensemble::Gaussian,
                    EnsembleArg::Sparse => {
                        if !(0.0..=1.0).contains(&args.density) {
                            return Err(usage("--density must lie in [0, 1]"));
                        }
                        Ensemble::Sparse { density: args.density }
                    }
                    _ => Ensemble::Chain,
                };
                (Source::Random(e), args.depth.unwrap_or(DEFAULT_DEPTH))
            }
        };
        check_depth(depth)?;
        let depth_max = args.depth_max.unwrap_or(depth);
        check_depth(depth_max)?;
        if depth_max < depth {
            return Err(usage("--L-max must not be below --L"));
        }
        Ok(Self {
            case: args.case,
            depth,
            depth_max,
            source,
            trials: args.trials,
            seed: args.seed,
            format: match args.format {
                Some(FormatArg::Json) => Format::Json,
                Some(FormatArg::Csv) => Format::Csv,
                None => default_format,
            },
            out: args.out,
        })
    }

    fn case(&self) -> Result<CaseSelector> {
        self.case.as_deref().ok_or_else(|| usage("--case is required"))?.parse()
    }

    /// Trials actually run: a file source is a single draw.
    fn trial_count(&self) -> u64 {
        match self.source {
            Source::Files { .. } => 1,
            Source::Random(_) => self.trials,
        }
    }

    fn ensemble_name(&self) -> &'static str {
        match &self.source {
            Source::Files { .. } => "file",
            Source::Random(e) => e.name(),
        }
    }

    /// Symbols for one `(depth, trial)` task; independent of scheduling.
    fn symbols(&self, depth: u32, trial: u64) -> Result<(CoefSequence, CoefSequence)> {
        match &self.source {
            Source::Files { b, beta } => Ok((b.clone(), beta.clone())),
            Source::Random(e) => {
                let key = task_key(depth, trial);
                let b = e.draw(depth, &mut trial_rng(self.seed, key, LANE_B))?;
                let beta = e.draw(depth, &mut trial_rng(self.seed, key, LANE_BETA))?;
                Ok((b, beta))
            }
        }
    }

    fn advisory(&self, depth: u32, trial: u64) -> Advisory {
        Advisory {
            samples: ADVISORY_SAMPLES,
            seed: trial_rng(self.seed, task_key(depth, trial), LANE_ADVISORY).random(),
        }
    }
}

fn task_key(depth: u32, trial: u64) -> u64 {
    (u64::from(depth) << 40) | trial
}

fn emit(config: &RunConfig, reports: &[VerificationReport]) -> Result<()> {
    match &config.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_reports(&mut w, reports, config.format)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_reports(&mut lock, reports, config.format)?;
        }
    }
    Ok(())
}

fn status(reports: &[VerificationReport]) -> i32 {
    if reports.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

/// Runs every `(depth, trial)` task in parallel, collected in task order.
fn run_tasks(
    config: &RunConfig,
    depths: std::ops::RangeInclusive<u32>,
    task: impl Fn(&TruncatedGrid, u32, u64) -> Result<VerificationReport> + Sync,
) -> Result<Vec<VerificationReport>> {
    let tasks: Vec<(u32, u64)> = depths
        .flat_map(|d| (0..config.trial_count()).map(move |t| (d, t)))
        .collect();
    tasks
        .into_par_iter()
        .map(|(d, t)| {
            let grid = make_grid(d)?;
            Ok(task(&grid, d, t)?.tagged(config.ensemble_name(), config.seed, t))
        })
        .collect()
}

pub fn cmd_verify(config: &RunConfig) -> Result<i32> {
    let case = config.case()?;
    let reports = run_tasks(config, config.depth..=config.depth, |grid, d, t| {
        let (b, beta) = config.symbols(d, t)?;
        case.verify(grid, &b, &beta, Some(config.advisory(d, t)))
    })?;
    emit(config, &reports)?;
    Ok(status(&reports))
}

pub fn cmd_two_weight(config: &RunConfig) -> Result<i32> {
    let reports = run_tasks(config, config.depth..=config.depth, |grid, d, t| {
        let (b, beta) = config.symbols(d, t)?;
        two_weight_verify_with(&synthesize(grid, &b)?, &synthesize(grid, &beta)?, grid, Some(config.advisory(d, t)))
    })?;
    emit(config, &reports)?;
    Ok(status(&reports))
}

pub fn cmd_sweep(config: &RunConfig) -> Result<i32> {
    if matches!(config.source, Source::Files { .. }) {
        return Err(usage("sweep needs a random ensemble"));
    }
    let case = config.case.as_deref().ok_or_else(|| usage("--case is required"))?;
    let reports = if case == "two-weight" {
        run_tasks(config, config.depth..=config.depth_max, |grid, d, t| {
            let (b, beta) = config.symbols(d, t)?;
            two_weight_verify_with(&synthesize(grid, &b)?, &synthesize(grid, &beta)?, grid, None)
        })?
    } else {
        let case: CaseSelector = case.parse()?;
        run_tasks(config, config.depth..=config.depth_max, |grid, d, t| {
            let (b, beta) = config.symbols(d, t)?;
            case.verify(grid, &b, &beta, None)
        })?
    };
    emit(config, &reports)?;
    Ok(status(&reports))
}

pub fn cmd_gen_symbols(config: &RunConfig) -> Result<i32> {
    let (b, _) = config.symbols(config.depth, 0)?;
    let text = symfile::to_string(&b)?;
    match &config.out {
        Some(path) => write_file(path, &text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses arguments, runs the command, returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Verify(a) => RunConfig::from_args(a, Format::Json).and_then(|c| cmd_verify(&c)),
        Command::TwoWeight(a) => RunConfig::from_args(a, Format::Json).and_then(|c| cmd_two_weight(&c)),
        Command::Sweep(a) => RunConfig::from_args(a, Format::Csv).and_then(|c| cmd_sweep(&c)),
        Command::GenSymbols(a) => RunConfig::from_args(a, Format::Json).and_then(|c| cmd_gen_symbols(&c)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
