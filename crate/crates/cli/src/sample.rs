use anyhow::{bail, Result};
use clap::Args;
use crossed::samplers::{
    run_chains, ChainSummary, PrecisionPrior, Probe, PxVariant, SamplerConfig,
};
use crossed::{ModelState, Scheme};
use serde::Serialize;

use crate::output::{metadata, Output};
use crate::{precisions, DataArgs, GlobalArgs};

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Schemes: `gs`, `cgs`, `gs+px`, `cgs+px`.
    #[arg(long, value_delimiter = ',', default_value = "cgs")]
    pub scheme: Vec<String>,
    /// Iterations per run, burn-in included.
    #[arg(long = "iters", default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long = "burn", default_value_t = 1_000)]
    pub burn_in: usize,
    /// Run `r` uses `seed + r`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Initial (or fixed) precisions: one value, or `tau0,tau1,...,tauK`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub tau: Vec<f64>,
    /// Sample the factor precisions.
    #[arg(long)]
    pub unknown_precisions: bool,
    /// Sample the global precision.
    #[arg(long)]
    pub update_tau0: bool,
    /// Expansion move for `+PX` schemes: `location` or `scale`.
    #[arg(long)]
    pub px: Option<String>,
    /// `shape,rate` of a Gamma prior on the precisions (default: flat on sigma).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub gamma_prior: Vec<f64>,
    /// Recorded scalars, e.g. `a0,abar1,sigma1,a2[3],da1[1]`.
    #[arg(long, value_delimiter = ',')]
    pub monitor: Vec<String>,
    /// Factor update order, 1-based.
    #[arg(long, value_delimiter = ',')]
    pub order: Vec<usize>,
    /// Skip the per-iteration chain files.
    #[arg(long)]
    pub no_chains: bool,
    /// Output file stem.
    #[arg(long, default_value = "chains")]
    pub name: String,
}

/// ESS and timing averaged over runs.
#[derive(Debug, Serialize)]
struct TableRow {
    scheme: String,
    label: String,
    runs: usize,
    mean: f64,
    ess: f64,
    ess_per_sec: f64,
    sec_per_1000_iter: f64,
}

#[derive(Debug, Serialize)]
struct RunRow {
    scheme: String,
    run: usize,
    seed: u64,
    label: String,
    mean: f64,
    sd: f64,
    ess: Option<f64>,
    ess_per_sec: Option<f64>,
    sec_per_1000_iter: f64,
}

fn config(args: &SampleArgs, scheme: Scheme, factors: usize) -> Result<SamplerConfig> {
    let mut cfg = SamplerConfig::new(scheme, args.iterations, args.burn_in, args.seed);
    cfg.precisions_known = !args.unknown_precisions;
    cfg.update_tau0 = args.update_tau0;
    cfg.px = match args.px.as_deref() {
        None => None,
        Some("location") => Some(PxVariant::Location),
        Some("scale") => Some(PxVariant::Scale),
        Some(other) => bail!("unknown expansion move {other:?} (expected location or scale)"),
    };
    if let [shape, rate] = args.gamma_prior[..] {
        cfg.prior = PrecisionPrior::Gamma { shape, rate };
    }
    cfg.monitor = args
        .monitor
        .iter()
        .map(|m| m.parse::<Probe>())
        .collect::<Result<_, _>>()?;
    if !args.order.is_empty() {
        if args.order.len() != factors || args.order.contains(&0) {
            bail!("--order must list each of the {factors} factors once, 1-based");
        }
        cfg.order = Some(args.order.iter().map(|k| k - 1).collect());
    }
    Ok(cfg)
}

pub fn run(global: &GlobalArgs, args: &SampleArgs) -> Result<()> {
    let tbl = args.data.load()?;
    let tau = precisions(&args.tau, tbl.factors())?;
    let init = ModelState::zeros(&tbl, tau)?;
    let schemes: Vec<Scheme> = args
        .scheme
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let out = Output::new(&global.out_dir, &args.name)?;

    let mut summaries: Vec<ChainSummary> = Vec::new();
    let mut runs = Vec::new();
    let mut table = Vec::new();
    for scheme in schemes {
        let cfg = config(args, scheme, tbl.factors())?;
        let chains = run_chains(&cfg, &tbl, &init, args.runs)?;
        let tag = scheme.label().to_ascii_lowercase().replace('+', "-");
        for (r, chain) in chains.iter().enumerate() {
            if !args.no_chains {
                let (path, file) = out.create(&format!("{tag}_run{}", r + 1), "csv")?;
                chain.write_csv(file)?;
                println!("wrote {}", path.display());
            }
            let s = chain.summary();
            for series in &s.series {
                runs.push(RunRow {
                    scheme: scheme.label().into(),
                    run: r + 1,
                    seed: s.seed,
                    label: series.label.clone(),
                    mean: series.mean,
                    sd: series.sd,
                    ess: series.ess,
                    ess_per_sec: series.ess_per_sec,
                    sec_per_1000_iter: s.wall_time_per_1000_iter,
                });
            }
            summaries.push(s);
        }
        let first = summaries.len() - chains.len();
        let group = &summaries[first..];
        let n = group.len() as f64;
        for (i, label) in chains[0].labels.iter().enumerate() {
            let avg = |f: &dyn Fn(&ChainSummary) -> f64| group.iter().map(f).sum::<f64>() / n;
            table.push(TableRow {
                scheme: scheme.label().into(),
                label: label.clone(),
                runs: group.len(),
                mean: avg(&|s| s.series[i].mean),
                ess: avg(&|s| s.series[i].ess.unwrap_or(0.0)),
                ess_per_sec: avg(&|s| s.series[i].ess_per_sec.unwrap_or(0.0)),
                sec_per_1000_iter: avg(&|s| s.wall_time_per_1000_iter),
            });
        }
    }
    for row in &table {
        println!(
            "{:>7} {:>8}: ESS {:>9.1}  ESS/s {:>10.2}  {:.3}s/1000 it",
            row.scheme, row.label, row.ess, row.ess_per_sec, row.sec_per_1000_iter
        );
    }
    out.rows("summary", &table)?;
    out.rows("runs", &runs)?;
    #[derive(Serialize)]
    struct Results<'a> {
        summary: &'a [TableRow],
        chains: &'a [ChainSummary],
    }
    out.json(
        "",
        &metadata(
            "sample",
            args,
            Results {
                summary: &table,
                chains: &summaries,
            },
        ),
    )?;
    Ok(())
}
