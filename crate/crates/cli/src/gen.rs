use anyhow::Result;
use clap::{Args, Subcommand};
use crossed::datagen::{simulate_response, DesignSpec, EmptyPolicy, McarOptions};
use serde::Serialize;

use crate::output::{metadata, Output};
use crate::{precisions, GlobalArgs};

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenArgs {
    #[command(subcommand)]
    pub design: Design,
    /// Output file stem (default: the generator name).
    #[arg(long, global = true)]
    pub name: Option<String>,
    /// Simulate responses with these precisions (one value, or tau0..tauK);
    /// responses are zero otherwise.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Global mean used when simulating responses.
    #[arg(long, global = true, default_value_t = 0.0)]
    pub a0: f64,
    /// Seed of the simulated responses.
    #[arg(long, global = true, default_value_t = 0)]
    pub response_seed: u64,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Design {
    /// Two factors; every cell observed once with probability q.
    Mcar {
        /// Levels of the first factor.
        #[arg(long = "I")]
        i: usize,
        /// Levels of the second factor (default: same as the first).
        #[arg(long = "I2")]
        i2: Option<usize>,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fail instead of redrawing when no cell is observed.
        #[arg(long)]
        fail_on_empty: bool,
        /// Redraws allowed for empty designs.
        #[arg(long, default_value_t = 100)]
        max_attempts: usize,
    },
    /// Full grid with the same count in every cell.
    BalancedCells {
        /// Levels per factor, e.g. `3,4,5`.
        #[arg(long = "I", value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long = "n", default_value_t = 1)]
        n_per_cell: u64,
    },
    /// Two factors, union of `m` random permutations of `I` levels.
    BalancedLevels {
        #[arg(long = "I")]
        i: usize,
        #[arg(long = "m")]
        multiplicity: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep every cell count at most 1.
        #[arg(long)]
        simple: bool,
    },
    /// Disjoint full `I x I` blocks.
    Disconnected {
        #[arg(long = "I")]
        i: usize,
        #[arg(long = "comms")]
        communities: usize,
    },
}

impl Design {
    fn spec(&self) -> DesignSpec {
        match self {
            Design::Mcar {
                i,
                i2,
                q,
                seed,
                fail_on_empty,
                max_attempts,
            } => DesignSpec::Mcar {
                levels: [*i, i2.unwrap_or(*i)],
                q: *q,
                seed: *seed,
                options: McarOptions {
                    on_empty: if *fail_on_empty {
                        EmptyPolicy::Error
                    } else {
                        EmptyPolicy::Regenerate {
                            max_attempts: *max_attempts,
                        }
                    },
                    ..McarOptions::default()
                },
            },
            Design::BalancedCells { levels, n_per_cell } => DesignSpec::BalancedCells {
                levels: levels.clone(),
                n_per_cell: *n_per_cell,
            },
            Design::BalancedLevels {
                i,
                multiplicity,
                seed,
                simple,
            } => DesignSpec::BalancedLevels {
                levels: *i,
                multiplicity: *multiplicity,
                seed: *seed,
                simple: *simple,
            },
            Design::Disconnected { i, communities } => DesignSpec::Disconnected {
                levels_per_community: *i,
                communities: *communities,
            },
        }
    }

    fn default_name(&self) -> &'static str {
        match self {
            Design::Mcar { .. } => "mcar",
            Design::BalancedCells { .. } => "balanced-cells",
            Design::BalancedLevels { .. } => "balanced-levels",
            Design::Disconnected { .. } => "disconnected",
        }
    }
}

pub fn run(global: &GlobalArgs, args: &GenArgs) -> Result<()> {
    let spec = args.design.spec();
    let mut tbl = spec.generate()?;
    if !args.tau.is_empty() {
        let tau = precisions(&args.tau, tbl.factors())?;
        tbl = simulate_response(&tbl, &tau, args.a0, args.response_seed)?.table;
    }
    let out = Output::new(
        &global.out_dir,
        args.name.as_deref().unwrap_or(args.design.default_name()),
    )?;
    let (path, file) = out.create("", "csv")?;
    tbl.write_csv(file, None)?;
    println!(
        "wrote {} ({} cells, N = {})",
        path.display(),
        tbl.num_cells(),
        tbl.total()
    );
    out.json("", &metadata("gen", args, spec.metadata(&tbl)))?;
    Ok(())
}
