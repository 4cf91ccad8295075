//! `crossed`: generate designs, compute sampler rates, run chains, summarise
//! them and time sweeps. Every command writes CSV plus a JSON sidecar that
//! echoes its resolved arguments.

mod bench;
mod config;
mod diag;
mod gen;
mod output;
mod rate;
mod sample;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use crossed::model::{read_csv_path, LevelCoding};
use crossed::{IncidenceTable, Precisions};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "crossed",
    version,
    about = "Gibbs samplers and convergence rates for crossed random effects"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GlobalArgs {
    /// Directory for output files.
    #[arg(long, global = true, env = "CROSSED_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for independent jobs (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// File of `key = value` lines read as flags; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic design.
    Gen(gen::GenArgs),
    /// Numeric and closed-form convergence rates.
    Rate(rate::RateArgs),
    /// Run Gibbs chains.
    Sample(sample::SampleArgs),
    /// Autocorrelation, ESS and cross-correlation of stored chains.
    Diag(diag::DiagArgs),
    /// Time sweeps over a grid of design sizes.
    Bench(bench::BenchArgs),
}

/// Where the data for a command comes from.
#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// CSV with factor columns, the response `y` and optionally weights `w`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// 1-based factor columns to keep, in order (default: all).
    #[arg(long, value_delimiter = ',')]
    pub factors: Vec<usize>,
    /// Factor columns already hold 1-based integer levels.
    #[arg(long)]
    pub dense_levels: bool,
}

impl DataArgs {
    pub fn load(&self) -> Result<IncidenceTable> {
        let path = self.data.as_ref().context("--data is required")?;
        load_table(path, &self.factors, self.dense_levels)
    }
}

pub fn load_table(path: &Path, factors: &[usize], dense: bool) -> Result<IncidenceTable> {
    let coding = if dense {
        LevelCoding::Dense
    } else {
        LevelCoding::Relabel
    };
    let data =
        read_csv_path(path, coding).with_context(|| format!("reading {}", path.display()))?;
    let tbl = data.table()?;
    if factors.is_empty() {
        return Ok(tbl);
    }
    if factors.contains(&0) {
        bail!("factor indices are 1-based");
    }
    let zero_based: Vec<usize> = factors.iter().map(|f| f - 1).collect();
    Ok(tbl.restrict(&zero_based)?)
}

/// One value for every precision, or `tau0,tau1,...,tauK`.
pub fn precisions(values: &[f64], factors: usize) -> Result<Precisions> {
    match values.len() {
        1 => Ok(Precisions::uniform(factors, values[0])?),
        n if n == factors + 1 => Ok(Precisions::new(values.to_vec())?),
        n => bail!("--tau needs 1 or {} values, got {n}", factors + 1),
    }
}

/// Subcommand names from the root down, and the `--config` path wherever it
/// was given.
fn scan(matches: &clap::ArgMatches) -> (Vec<String>, Option<PathBuf>) {
    let mut names = Vec::new();
    let mut config = None;
    let mut m = matches;
    loop {
        if let Ok(Some(p)) = m.try_get_one::<PathBuf>("config") {
            config = Some(p.clone());
        }
        match m.subcommand() {
            Some((name, sub)) => {
                names.push(name.to_string());
                m = sub;
            }
            None => break,
        }
    }
    (names, config)
}

fn parse_cli() -> Result<Cli> {
    let args: Vec<OsString> = std::env::args_os().collect();
    // lenient pass: required flags may still come from the config file
    let loose = Cli::command()
        .ignore_errors(true)
        .try_get_matches_from(&args);
    let args = match loose.as_ref().map(scan) {
        Ok((names, Some(path))) => {
            config::splice(&args, &names, config::to_args(&config::read(&path)?))
        }
        _ => args,
    };
    let matches = Cli::command().get_matches_from(args);
    Ok(Cli::from_arg_matches(&matches)?)
}

fn run() -> Result<()> {
    let cli = parse_cli()?;
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Gen(a) => gen::run(&cli.global, a),
        Command::Rate(a) => rate::run(&cli.global, a),
        Command::Sample(a) => sample::run(&cli.global, a),
        Command::Diag(a) => diag::run(&cli.global, a),
        Command::Bench(a) => bench::run(&cli.global, a),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
