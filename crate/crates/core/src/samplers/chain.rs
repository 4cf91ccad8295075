//! Chain driver: configuration, monitored scalars and stored trajectories.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::model::IncidenceTable;

use super::precision::{sample_global_precision, update_precisions, PrecisionPrior};
use super::px::{px_transform, PxVariant};
use super::sweep::{Stochastic, SweepKernel};
use super::{ModelState, Scheme};

/// A scalar function of the state recorded at every iteration. Factor and
/// level indices are 0-based; labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Probe {
    GlobalMean,
    FactorMean(usize),
    GlobalSigma,
    FactorSigma(usize),
    Level(usize, usize),
    Increment(usize, usize),
}

impl Probe {
    pub fn label(&self) -> String {
        match *self {
            Probe::GlobalMean => "a0".into(),
            Probe::FactorMean(k) => format!("abar{}", k + 1),
            Probe::GlobalSigma => "sigma0".into(),
            Probe::FactorSigma(k) => format!("sigma{}", k + 1),
            Probe::Level(k, j) => format!("a{}[{}]", k + 1, j + 1),
            Probe::Increment(k, j) => format!("da{}[{}]", k + 1, j + 1),
        }
    }

    pub fn eval(&self, state: &ModelState) -> f64 {
        match *self {
            Probe::GlobalMean => state.a0(),
            Probe::FactorMean(k) => state.factor_mean(k),
            Probe::GlobalSigma => state.tau.global().sqrt().recip(),
            Probe::FactorSigma(k) => state.tau.factor(k).sqrt().recip(),
            Probe::Level(k, j) => state.factor(k)[j],
            Probe::Increment(k, j) => state.increment(k, j),
        }
    }

    fn check(&self, tbl: &IncidenceTable) -> Result<()> {
        let k_max = tbl.factors();
        let ok = match *self {
            Probe::GlobalMean | Probe::GlobalSigma => true,
            Probe::FactorMean(k) | Probe::FactorSigma(k) => k < k_max,
            Probe::Level(k, j) | Probe::Increment(k, j) => k < k_max && j < tbl.levels()[k],
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "probe {} does not exist in this table",
                self.label()
            )))
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Probe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown probe {s:?}"));
        let index = |t: &str| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(bad()),
            }
        };
        let indexed = |rest: &str| -> Result<(usize, usize)> {
            let (k, j) = rest
                .strip_suffix(']')
                .and_then(|r| r.split_once('['))
                .ok_or_else(bad)?;
            Ok((index(k)?, index(j)?))
        };
        let s = s.trim();
        match s {
            "a0" => return Ok(Probe::GlobalMean),
            "sigma0" => return Ok(Probe::GlobalSigma),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("abar") {
            return Ok(Probe::FactorMean(index(rest)?));
        }
        if let Some(rest) = s.strip_prefix("sigma") {
            return Ok(Probe::FactorSigma(index(rest)?));
        }
        if let Some(rest) = s.strip_prefix("da") {
            let (k, j) = indexed(rest)?;
            return Ok(Probe::Increment(k, j));
        }
        if let Some(rest) = s.strip_prefix('a') {
            let (k, j) = indexed(rest)?;
            return Ok(Probe::Level(k, j));
        }
        Err(bad())
    }
}

/// Settings for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Keep the factor precisions fixed at their initial values.
    pub precisions_known: bool,
    pub update_tau0: bool,
    pub prior: PrecisionPrior,
    /// Expansion move for the `+PX` schemes. `None` picks
    /// [`PxVariant::Scale`] when precisions are sampled and
    /// [`PxVariant::Location`] otherwise.
    pub px: Option<PxVariant>,
    /// Recorded scalars; empty means [`SamplerConfig::default_monitor`].
    pub monitor: Vec<Probe>,
    /// Factor update order; ascending when `None`.
    pub order: Option<Vec<usize>>,
}

impl SamplerConfig {
    pub fn new(scheme: Scheme, iterations: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            scheme,
            iterations,
            burn_in,
            seed,
            precisions_known: true,
            update_tau0: false,
            prior: PrecisionPrior::FlatSigma,
            px: None,
            monitor: Vec::new(),
            order: None,
        }
    }

    /// `a0`, every factor average, and every sampled standard deviation.
    pub fn default_monitor(&self, factors: usize) -> Vec<Probe> {
        let mut out = vec![Probe::GlobalMean];
        out.extend((0..factors).map(Probe::FactorMean));
        if self.update_tau0 {
            out.push(Probe::GlobalSigma);
        }
        if !self.precisions_known {
            out.extend((0..factors).map(Probe::FactorSigma));
        }
        out
    }

    /// The expansion move in effect, if any.
    pub fn px_variant(&self) -> Option<PxVariant> {
        if !self.scheme.expanded() {
            return None;
        }
        Some(self.px.unwrap_or(if self.precisions_known {
            PxVariant::Location
        } else {
            PxVariant::Scale
        }))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.px_variant() == Some(PxVariant::Scale) {
            if self.precisions_known {
                return Err(Error::InvalidConfig(
                    "the scale expansion move rescales the precisions, which are fixed".into(),
                ));
            }
            if self.prior != PrecisionPrior::FlatSigma {
                return Err(Error::InvalidConfig(
                    "the scale expansion move requires the flat prior on sigma".into(),
                ));
            }
        }
        if let PrecisionPrior::Gamma { shape, rate } = self.prior {
            if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "gamma prior needs positive finite shape and rate, got ({shape}, {rate})"
                )));
            }
        }
        Ok(())
    }
}

/// Stored trajectories of the monitored scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Row-major, one row per recorded iteration.
    pub samples: Vec<f64>,
    pub labels: Vec<String>,
    /// Seconds per 1000 iterations, burn-in included.
    pub wall_time_per_1000_iter: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Iterations run, burn-in included.
    pub iterations: usize,
}

impl Chain {
    /// Number of recorded iterations.
    pub fn len(&self) -> usize {
        if self.labels.is_empty() {
            0
        } else {
            self.samples.len() / self.labels.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.samples[t * w..(t + 1) * w]
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(idx)
            .step_by(self.width())
            .copied()
            .collect()
    }

    pub fn column_by_label(&self, label: &str) -> Option<Vec<f64>> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.column(i))
    }

    /// Wall time of the whole run in seconds.
    pub fn wall_time(&self) -> f64 {
        self.wall_time_per_1000_iter * self.iterations as f64 / 1000.0
    }

    /// CSV with an `iter` column followed by the monitored scalars.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        let first = self.iterations - self.len();
        for t in 0..self.len() {
            let mut rec = vec![(first + t + 1).to_string()];
            rec.extend(self.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> ChainSummary {
        let seconds = self.wall_time();
        let series = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let x = self.column(i);
                let n = x.len() as f64;
                let mean = x.iter().sum::<f64>() / n;
                let var = if x.len() > 1 {
                    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let ess = diagnostics::ess(&x).ok();
                SeriesSummary {
                    label: label.clone(),
                    mean,
                    sd: var.sqrt(),
                    ess,
                    ess_per_sec: ess.filter(|_| seconds > 0.0).map(|e| e / seconds),
                }
            })
            .collect();
        ChainSummary {
            scheme: self.scheme,
            seed: self.seed,
            iterations: self.iterations,
            recorded: self.len(),
            wall_time_per_1000_iter: self.wall_time_per_1000_iter,
            series,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` when the series is constant.
    pub ess: Option<f64>,
    pub ess_per_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub scheme: Scheme,
    pub seed: u64,
    pub iterations: usize,
    pub recorded: usize,
    pub wall_time_per_1000_iter: f64,
    pub series: Vec<SeriesSummary>,
}

/// Run one chain from `init`.
///
/// Each iteration is a sweep of the scheme's kind, then (if any precision is
/// unknown) a conjugate precision draw, then the expansion move for `+PX`
/// schemes.
pub fn run_chain(cfg: &SamplerConfig, tbl: &IncidenceTable, init: &ModelState) -> Result<Chain> {
    cfg.validate()?;
    init.check(tbl)?;
    if !init.is_finite() {
        return Err(Error::NonFiniteState { iteration: 0 });
    }
    let monitor = if cfg.monitor.is_empty() {
        cfg.default_monitor(tbl.factors())
    } else {
        cfg.monitor.clone()
    };
    for p in &monitor {
        p.check(tbl)?;
    }
    let px = cfg.px_variant();
    let kind = cfg.scheme.kind();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = init.clone();
    let mut kernel = SweepKernel::new(tbl, &state.tau)?;
    if let Some(order) = &cfg.order {
        kernel = kernel.with_order(order.clone())?;
    }
    let recorded = cfg.iterations - cfg.burn_in;
    let mut samples = Vec::with_capacity(recorded * monitor.len());

    let start = Instant::now();
    for it in 0..cfg.iterations {
        kernel.sweep(kind, state.params_mut(), &mut Stochastic(&mut rng));
        let mut refresh = false;
        if !cfg.precisions_known {
            state.tau = update_precisions(&state, tbl, &mut rng, cfg.update_tau0, cfg.prior)?;
            refresh = true;
        } else if cfg.update_tau0 {
            let t0 = sample_global_precision(&state, tbl, &mut rng, cfg.prior)?;
            state.tau.set_global(t0);
            refresh = true;
        }
        if let Some(variant) = px {
            px_transform(&mut state, tbl, &mut rng, variant)?;
            refresh |= variant == PxVariant::Scale;
        }
        if refresh {
            kernel.set_precisions(&state.tau);
        }
        if !state.is_finite() {
            return Err(Error::NonFiniteState { iteration: it + 1 });
        }
        if it >= cfg.burn_in {
            samples.extend(monitor.iter().map(|p| p.eval(&state)));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    Ok(Chain {
        samples,
        labels: monitor.iter().map(Probe::label).collect(),
        wall_time_per_1000_iter: elapsed * 1000.0 / cfg.iterations as f64,
        seed: cfg.seed,
        scheme: cfg.scheme,
        iterations: cfg.iterations,
    })
}

/// Run `runs` independent replicates in parallel; replicate `r` uses seed
/// `cfg.seed + r`.
pub fn run_chains(
    cfg: &SamplerConfig,
    tbl: &IncidenceTable,
    init: &ModelState,
    runs: usize,
) -> Result<Vec<Chain>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(r);
            run_chain(&c, tbl, init)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ingest_observations, Observation, Precisions};

    fn table() -> IncidenceTable {
        let mut rows = Vec::new();
        for i in 1..=4 {
            for j in 1..=3 {
                if (i + j) % 3 != 0 {
                    rows.push(Observation::new(vec![i, j], (i as f64) - 0.3 * j as f64));
                }
            }
        }
        ingest_observations(&rows, &[4, 3]).unwrap()
    }

    #[test]
    fn probe_labels_round_trip() {
        for p in [
            Probe::GlobalMean,
            Probe::FactorMean(2),
            Probe::GlobalSigma,
            Probe::FactorSigma(0),
            Probe::Level(1, 4),
            Probe::Increment(0, 9),
        ] {
            assert_eq!(p.label().parse::<Probe>().unwrap(), p);
        }
        assert!("abar0".parse::<Probe>().is_err());
        assert!("a1[x]".parse::<Probe>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SamplerConfig::new(Scheme::GsPx, 10, 10, 1);
        assert!(cfg.validate().is_err());
        cfg.burn_in = 2;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.px_variant(), Some(PxVariant::Location));
        cfg.px = Some(PxVariant::Scale);
        assert!(cfg.validate().is_err());
        cfg.precisions_known = false;
        assert!(cfg.validate().is_ok());
        cfg.prior = PrecisionPrior::Gamma {
            shape: 1.0,
            rate: 1.0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_monitor_layout() {
        let mut cfg = SamplerConfig::new(Scheme::Cgs, 10, 0, 1);
        cfg.precisions_known = false;
        cfg.update_tau0 = true;
        let labels: Vec<String> = cfg.default_monitor(2).iter().map(Probe::label).collect();
        assert_eq!(
            labels,
            ["a0", "abar1", "abar2", "sigma0", "sigma1", "sigma2"]
        );
    }

    #[test]
    fn same_seed_same_chain() {
        let tbl = table();
        let init = ModelState::zeros(&tbl, Precisions::uniform(2, 1.0).unwrap()).unwrap();
        for scheme in Scheme::ALL {
            let mut cfg = SamplerConfig::new(scheme, 200, 50, 42);
            cfg.precisions_known = false;
            cfg.update_tau0 = true;
            let a = run_chain(&cfg, &tbl, &init).unwrap();
            let b = run_chain(&cfg, &tbl, &init).unwrap();
            assert_eq!(a.samples, b.samples);
            assert_eq!(a.len(), 150);
            assert!(a.samples.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn csv_and_summary() {
        let tbl = table();
        let init = ModelState::zeros(&tbl, Precisions::uniform(2, 1.0).unwrap()).unwrap();
        let cfg = SamplerConfig::new(Scheme::Gs, 30, 10, 3);
        let chain = run_chain(&cfg, &tbl, &init).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,a0,abar1,abar2");
        assert!(lines.next().unwrap().starts_with("11,"));
        assert_eq!(text.lines().count(), 21);
        let s = chain.summary();
        assert_eq!(s.series.len(), 3);
        assert_eq!(s.recorded, 20);
    }

    #[test]
    fn replicates_use_shifted_seeds() {
        let tbl = table();
        let init = ModelState::zeros(&tbl, Precisions::uniform(2, 1.0).unwrap()).unwrap();
        let cfg = SamplerConfig::new(Scheme::Cgs, 20, 0, 7);
        let runs = run_chains(&cfg, &tbl, &init, 3).unwrap();
        let mut single = cfg.clone();
        single.seed = 9;
        assert_eq!(
            runs[2].samples,
            run_chain(&single, &tbl, &init).unwrap().samples
        );
    }
}
