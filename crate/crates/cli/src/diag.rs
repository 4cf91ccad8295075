use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use crossed::diagnostics::{
    cross_correlation, integrated_autocorrelation_time, mean_acf, series_stats,
};
use serde::Serialize;

use crate::output::{metadata, Output};
use crate::GlobalArgs;

#[derive(Args, Debug, Clone, Serialize)]
pub struct DiagArgs {
    /// Chain CSV files written by `sample`; ACFs are averaged across them.
    #[arg(long, num_args = 1.., required = true)]
    pub chain: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_lag: usize,
    /// Columns to analyse (default: all but `iter`).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Extra leading rows to drop from each file.
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    /// Cross-correlations as `a:b` pairs, computed on the first file.
    #[arg(long, value_delimiter = ',')]
    pub cross: Vec<String>,
    /// Output file stem.
    #[arg(long, default_value = "diag")]
    pub name: String,
}

struct ChainFile {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl ChainFile {
    fn read(path: &Path, skip: usize) -> Result<Self> {
        let mut rdr =
            csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let offset = usize::from(header.first().is_some_and(|h| h == "iter"));
        let labels = header[offset..].to_vec();
        let mut columns = vec![Vec::new(); labels.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if row < skip {
                continue;
            }
            for (c, col) in columns.iter_mut().enumerate() {
                let v: f64 = record[c + offset]
                    .parse()
                    .with_context(|| format!("{} row {}: bad value", path.display(), row + 1))?;
                col.push(v);
            }
        }
        Ok(Self { labels, columns })
    }

    fn column(&self, label: &str) -> Result<&[f64]> {
        match self.labels.iter().position(|l| l == label) {
            Some(i) => Ok(&self.columns[i]),
            None => bail!("column {label:?} not found (have {:?})", self.labels),
        }
    }
}

#[derive(Debug, Serialize)]
struct StatsRow {
    file: String,
    label: String,
    n: usize,
    mean: f64,
    sd: f64,
    ess: f64,
    mcse: f64,
    iat: f64,
}

#[derive(Debug, Serialize)]
struct CrossRow {
    pair: String,
    lag: i64,
    value: f64,
}

pub fn run(global: &GlobalArgs, args: &DiagArgs) -> Result<()> {
    let files: Vec<ChainFile> = args
        .chain
        .iter()
        .map(|p| ChainFile::read(p, args.skip))
        .collect::<Result<_>>()?;
    let labels = if args.columns.is_empty() {
        files[0].labels.clone()
    } else {
        args.columns.clone()
    };
    let out = Output::new(&global.out_dir, &args.name)?;

    let mut stats = Vec::new();
    let mut acfs = Vec::new();
    for label in &labels {
        let mut series = Vec::new();
        for (f, path) in files.iter().zip(&args.chain) {
            let x = f.column(label)?;
            let s = series_stats(x).with_context(|| format!("{label} in {}", path.display()))?;
            stats.push(StatsRow {
                file: path.display().to_string(),
                label: label.clone(),
                n: x.len(),
                mean: s.mean,
                sd: s.sd,
                ess: s.ess,
                mcse: s.mcse,
                iat: integrated_autocorrelation_time(x)?,
            });
            series.push(x.to_vec());
        }
        acfs.push(mean_acf(&series, args.max_lag)?);
    }

    let (path, file) = out.create("acf", "csv")?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["lag".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for lag in 0..=args.max_lag {
        let mut rec = vec![lag.to_string()];
        rec.extend(acfs.iter().map(|a| a.values[lag].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("wrote {}", path.display());

    let mut cross = Vec::new();
    for pair in &args.cross {
        let Some((a, b)) = pair.split_once(':') else {
            bail!("--cross expects a:b, got {pair:?}");
        };
        let cc = cross_correlation(files[0].column(a)?, files[0].column(b)?, args.max_lag)?;
        cross.extend(
            cc.lags
                .iter()
                .zip(&cc.values)
                .map(|(&lag, &value)| CrossRow {
                    pair: pair.clone(),
                    lag,
                    value,
                }),
        );
    }
    if !cross.is_empty() {
        out.rows("cross", &cross)?;
    }
    for s in &stats {
        println!(
            "{:>10} ESS {:>10.1}  mean {:.5} +- {:.5}",
            s.label, s.ess, s.mean, s.mcse
        );
    }
    out.rows("stats", &stats)?;
    #[derive(Serialize)]
    struct Results<'a> {
        stats: &'a [StatsRow],
    }
    out.json("", &metadata("diag", args, Results { stats: &stats }))?;
    Ok(())
}
