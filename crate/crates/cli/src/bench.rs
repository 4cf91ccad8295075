use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Result};
use clap::Args;
use crossed::bench::{cost_fit, time_both, BenchOptions, CostFit, SweepTiming};
use crossed::datagen::{gen_balanced_cells, gen_balanced_levels_k2, gen_mcar, McarOptions};
use crossed::IncidenceTable;
use serde::Serialize;

use crate::output::{metadata, Output};
use crate::{load_table, precisions, GlobalArgs};

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchArgs {
    /// `balanced-cells` (`I x second`), `mcar` (`I x I`), `balanced-levels`
    /// (`I x I`, `m` per level) or `data` (the `--data` file, once).
    #[arg(long, default_value = "balanced-cells")]
    pub design: String,
    /// Grid of sizes.
    #[arg(
        long = "I",
        value_delimiter = ',',
        default_value = "1000,3000,10000,30000"
    )]
    pub sizes: Vec<usize>,
    /// Levels of the second factor of balanced-cells designs.
    #[arg(long, default_value_t = 4)]
    pub second: usize,
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    #[arg(long = "m", default_value_t = 5)]
    pub multiplicity: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub factors: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub tau: Vec<f64>,
    /// Milliseconds per timing batch.
    #[arg(long, default_value_t = 100)]
    pub batch_ms: u64,
    #[arg(long, default_value_t = 5)]
    pub batches: usize,
    /// Output file stem.
    #[arg(long, default_value = "bench")]
    pub name: String,
}

fn designs(args: &BenchArgs) -> Result<Vec<(String, IncidenceTable)>> {
    if args.design == "data" {
        let Some(path) = &args.data else {
            bail!("--design data needs --data");
        };
        return Ok(vec![(
            path.display().to_string(),
            load_table(path, &args.factors, false)?,
        )]);
    }
    args.sizes
        .iter()
        .map(|&i| {
            let tbl = match args.design.as_str() {
                "balanced-cells" => gen_balanced_cells(&[i, args.second], 1)?,
                "mcar" => gen_mcar(i, i, args.q, args.seed, &McarOptions::default())?,
                "balanced-levels" => {
                    gen_balanced_levels_k2(i, args.multiplicity.min(i), args.seed, false)?
                }
                other => bail!("unknown design {other:?}"),
            };
            Ok((format!("{}-{i}", args.design), tbl))
        })
        .collect()
}

/// Timings run one at a time: concurrent jobs would distort them.
pub fn run(global: &GlobalArgs, args: &BenchArgs) -> Result<()> {
    let opts = BenchOptions {
        batch_time: Duration::from_millis(args.batch_ms),
        batches: args.batches,
        seed: args.seed,
    };
    let mut rows: Vec<SweepTiming> = Vec::new();
    let mut ratios = Vec::new();
    for (name, tbl) in designs(args)? {
        let tau = precisions(&args.tau, tbl.factors())?;
        let [g, c] = time_both(&name, &tbl, &tau, &opts)?;
        println!(
            "{name}: p = {}, N = {}: GS {:.3e} s, cGS {:.3e} s per sweep",
            g.params, g.observations, g.seconds_per_sweep, c.seconds_per_sweep
        );
        ratios.push(c.seconds_per_sweep / g.seconds_per_sweep);
        rows.push(g);
        rows.push(c);
    }
    let fits: Vec<(String, CostFit)> = if rows.len() >= 4 {
        [0, 1]
            .iter()
            .map(|&s| {
                let sub: Vec<SweepTiming> = rows.iter().skip(s).step_by(2).cloned().collect();
                Ok((sub[0].scheme.label().to_string(), cost_fit(&sub)?))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    for (scheme, f) in &fits {
        println!(
            "{scheme}: slope on p {:.3}, on N {:.3}",
            f.slope_params, f.slope_observations
        );
    }
    let out = Output::new(&global.out_dir, &args.name)?;
    out.rows("", &rows)?;
    #[derive(Serialize)]
    struct Results<'a> {
        timings: &'a [SweepTiming],
        fits: &'a [(String, CostFit)],
        cgs_over_gs: &'a [f64],
    }
    out.json(
        "",
        &metadata(
            "bench",
            args,
            Results {
                timings: &rows,
                fits: &fits,
                cgs_over_gs: &ratios,
            },
        ),
    )?;
    Ok(())
}
