use anyhow::{bail, Result};
use clap::Args;
use crossed::datagen::{gen_mcar, McarOptions};
use crossed::spectral::{numeric_rate, RateMethod, RateOptions, Subspace};
use crossed::{IncidenceTable, SweepKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{metadata, Output};
use crate::{precisions, DataArgs, GlobalArgs};

#[derive(Args, Debug, Clone, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Instead of `--data`, analyse MCAR designs with these `I = I1 = I2`.
    #[arg(long, value_delimiter = ',', conflicts_with = "data")]
    pub mcar_sweep: Vec<usize>,
    /// Cell probability of the MCAR sweep.
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    /// Seed of the MCAR sweep; grid point `i` uses `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// One precision for all, or `tau0,tau1,...,tauK`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub tau: Vec<f64>,
    /// Samplers to analyse: `gs`, `cgs`.
    #[arg(long, value_delimiter = ',', default_value = "gs,cgs")]
    pub schemes: Vec<String>,
    /// `auto`, `dense`, `power` or `krylov`.
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// Measure the rate on the zero-sum residual subspace only.
    #[arg(long)]
    pub residuals: bool,
    /// Convergence tolerance of the iterative eigensolvers.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Cap on operator applications.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output file stem.
    #[arg(long, default_value = "rates")]
    pub name: String,
}

#[derive(Debug, Serialize)]
struct Row {
    design: String,
    levels: String,
    observations: u64,
    params: usize,
    design_class: String,
    scheme: String,
    rho_numeric: f64,
    mixing_numeric: f64,
    rho_theory: Option<f64>,
    mixing_theory: Option<f64>,
    rho_aux: Option<f64>,
    theory_kind: String,
    method: String,
    applications: usize,
}

fn sweep_kind(s: &str) -> Result<SweepKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gs" => Ok(SweepKind::Gibbs),
        "cgs" => Ok(SweepKind::Collapsed),
        other => bail!("unknown sampler {other:?} (expected gs or cgs)"),
    }
}

fn designs(args: &RateArgs) -> Result<Vec<(String, IncidenceTable)>> {
    if args.mcar_sweep.is_empty() {
        let name = args
            .data
            .data
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(name, args.data.load()?)]);
    }
    args.mcar_sweep
        .iter()
        .enumerate()
        .map(|(n, &i)| {
            let tbl = gen_mcar(i, i, args.q, args.seed + n as u64, &McarOptions::default())?;
            Ok((format!("mcar-{i}"), tbl))
        })
        .collect()
}

pub fn run(global: &GlobalArgs, args: &RateArgs) -> Result<()> {
    let kinds: Vec<SweepKind> = args
        .schemes
        .iter()
        .map(|s| sweep_kind(s))
        .collect::<Result<_>>()?;
    let method: RateMethod = args.method.parse()?;
    let mut opts = RateOptions {
        method,
        subspace: if args.residuals {
            Subspace::ZeroSumResiduals
        } else {
            Subspace::Full
        },
        ..RateOptions::default()
    };
    if let Some(t) = args.tol {
        opts.tol = t;
    }
    if let Some(m) = args.max_iters {
        opts.max_iters = m;
    }
    let designs = designs(args)?;
    let jobs: Vec<(usize, SweepKind)> = (0..designs.len())
        .flat_map(|d| kinds.iter().map(move |&k| (d, k)))
        .collect();
    let results: Vec<Result<Row>> = jobs
        .par_iter()
        .map(|&(d, kind)| {
            let (name, tbl) = &designs[d];
            let tau = precisions(&args.tau, tbl.factors())?;
            let rep = numeric_rate(kind, tbl, &tau, &opts)
                .map_err(|e| anyhow::anyhow!("{name} {kind}: {e}"))?;
            Ok(Row {
                design: name.clone(),
                levels: tbl
                    .levels()
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join("x"),
                observations: tbl.total(),
                params: tbl.num_params(),
                design_class: tbl.design().to_string(),
                scheme: kind.label().to_string(),
                rho_numeric: rep.rho_numeric,
                mixing_numeric: rep.mixing_numeric,
                rho_theory: rep.rho_theory,
                mixing_theory: rep.mixing_theory,
                rho_aux: rep.rho_aux,
                theory_kind: rep.theory_kind.to_string(),
                method: format!("{:?}", rep.method),
                applications: rep.iterations_used,
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(row) => {
                println!(
                    "{} {}: mixing {:.4} (theory {})",
                    row.design,
                    row.scheme,
                    row.mixing_numeric,
                    row.mixing_theory
                        .map_or("n/a".into(), |m| format!("{m:.4}"))
                );
                rows.push(row);
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let out = Output::new(&global.out_dir, &args.name)?;
    out.rows("", &rows)?;
    #[derive(Serialize)]
    struct Results<'a> {
        rows: &'a [Row],
        errors: &'a [String],
    }
    out.json(
        "",
        &metadata(
            "rate",
            args,
            Results {
                rows: &rows,
                errors: &errors,
            },
        ),
    )?;
    if !errors.is_empty() {
        bail!(
            "{} of {} rate computations failed:\n{}",
            errors.len(),
            jobs.len(),
            errors.join("\n")
        );
    }
    Ok(())
}
