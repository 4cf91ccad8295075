//! Per-sweep timing and log-log cost fits.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IncidenceTable, Precisions};
use crate::samplers::{Stochastic, SweepKernel, SweepKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    /// Wall time spent per batch; the reported time is the median batch.
    pub batch_time: Duration,
    pub batches: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            batch_time: Duration::from_millis(50),
            batches: 5,
            seed: 1,
        }
    }
}

/// One timing row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTiming {
    pub design: String,
    pub scheme: SweepKind,
    pub params: usize,
    pub observations: u64,
    pub cells: usize,
    /// `sum_k I_k sum_{l != k} I_l`.
    pub cross_work: u128,
    pub sweeps: usize,
    pub seconds_per_sweep: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Timer<'a> {
    kernel: SweepKernel<'a>,
    params: Vec<f64>,
    rng: ChaCha8Rng,
    sweeps: usize,
}

impl<'a> Timer<'a> {
    fn new(tbl: &'a IncidenceTable, tau: &Precisions, seed: u64) -> Result<Self> {
        Ok(Self {
            kernel: SweepKernel::new(tbl, tau)?,
            params: vec![0.0; tbl.num_params()],
            rng: ChaCha8Rng::seed_from_u64(seed),
            sweeps: 0,
        })
    }

    /// Run sweeps for about `budget` and return seconds per sweep.
    fn batch(&mut self, kind: SweepKind, budget: Duration) -> f64 {
        let start = Instant::now();
        let mut n = 0usize;
        let mut chunk = 1usize;
        loop {
            for _ in 0..chunk {
                self.kernel
                    .sweep(kind, &mut self.params, &mut Stochastic(&mut self.rng));
            }
            n += chunk;
            let elapsed = start.elapsed();
            if elapsed >= budget {
                self.sweeps += n;
                return elapsed.as_secs_f64() / n as f64;
            }
            chunk = (chunk * 2).min(1 << 16);
        }
    }
}

fn row(
    design: &str,
    tbl: &IncidenceTable,
    kind: SweepKind,
    sweeps: usize,
    secs: f64,
) -> SweepTiming {
    SweepTiming {
        design: design.to_string(),
        scheme: kind,
        params: tbl.num_params(),
        observations: tbl.total(),
        cells: tbl.num_cells(),
        cross_work: tbl.cross_work(),
        sweeps,
        seconds_per_sweep: secs,
    }
}

/// Median seconds per stochastic sweep of one kind.
pub fn time_sweeps(
    design: &str,
    tbl: &IncidenceTable,
    tau: &Precisions,
    kind: SweepKind,
    opts: &BenchOptions,
) -> Result<SweepTiming> {
    if opts.batches == 0 {
        return Err(Error::InvalidConfig("need at least one batch".into()));
    }
    let mut timer = Timer::new(tbl, tau, opts.seed)?;
    timer.batch(kind, opts.batch_time / 4);
    timer.sweeps = 0;
    let times = (0..opts.batches)
        .map(|_| timer.batch(kind, opts.batch_time))
        .collect();
    Ok(row(design, tbl, kind, timer.sweeps, median(times)))
}

/// Time both sweep kinds with interleaved batches, so that drift in machine
/// load affects both alike.
pub fn time_both(
    design: &str,
    tbl: &IncidenceTable,
    tau: &Precisions,
    opts: &BenchOptions,
) -> Result<[SweepTiming; 2]> {
    if opts.batches == 0 {
        return Err(Error::InvalidConfig("need at least one batch".into()));
    }
    let mut gs = Timer::new(tbl, tau, opts.seed)?;
    let mut cgs = Timer::new(tbl, tau, opts.seed)?;
    gs.batch(SweepKind::Gibbs, opts.batch_time / 4);
    cgs.batch(SweepKind::Collapsed, opts.batch_time / 4);
    gs.sweeps = 0;
    cgs.sweeps = 0;
    let mut tg = Vec::with_capacity(opts.batches);
    let mut tc = Vec::with_capacity(opts.batches);
    for b in 0..opts.batches {
        if b % 2 == 0 {
            tg.push(gs.batch(SweepKind::Gibbs, opts.batch_time));
            tc.push(cgs.batch(SweepKind::Collapsed, opts.batch_time));
        } else {
            tc.push(cgs.batch(SweepKind::Collapsed, opts.batch_time));
            tg.push(gs.batch(SweepKind::Gibbs, opts.batch_time));
        }
    }
    Ok([
        row(design, tbl, SweepKind::Gibbs, gs.sweeps, median(tg)),
        row(design, tbl, SweepKind::Collapsed, cgs.sweeps, median(tc)),
    ])
}

/// Least-squares slope and intercept of `log y` on `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Series("need at least two paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Series(
            "log-log fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Series("all x values are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(loglog_fit(x, y)?.0)
}

/// Slopes of seconds per sweep against `p`, `N` and the cross work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFit {
    pub slope_params: f64,
    pub slope_observations: f64,
    pub slope_cross_work: Option<f64>,
}

pub fn cost_fit(rows: &[SweepTiming]) -> Result<CostFit> {
    let t: Vec<f64> = rows.iter().map(|r| r.seconds_per_sweep).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.params as f64).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.observations as f64).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.cross_work as f64).collect();
    Ok(CostFit {
        slope_params: loglog_slope(&p, &t)?,
        slope_observations: loglog_slope(&n, &t)?,
        slope_cross_work: loglog_slope(&w, &t).ok(),
    })
}
