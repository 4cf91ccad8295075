//! Deterministic-scan sweeps over the flat parameter vector.
//!
//! A [`SweepKernel`] precomputes the per-level shrinkage weights for one set
//! of precisions and then runs sweeps in `O(nnz)` of the pairwise tables, or
//! `O(p)` on balanced-cells designs. The same code serves the stochastic
//! sampler ([`Stochastic`]) and the autoregressive mean map ([`MeanOnly`]).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{DesignClass, IncidenceTable, Precisions};

use super::{block_offsets, ModelState, SweepKind};

/// Source of conditional draws.
pub trait Draw {
    fn draw(&mut self, mean: f64, variance: f64) -> f64;
}

/// Replaces every draw by its mean, turning a sweep into the affine map
/// `x -> Bx + b`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanOnly;

impl Draw for MeanOnly {
    #[inline]
    fn draw(&mut self, mean: f64, _variance: f64) -> f64 {
        mean
    }
}

/// Gaussian draws from the wrapped generator.
pub struct Stochastic<'r, R: ?Sized>(pub &'r mut R);

impl<R: Rng + ?Sized> Draw for Stochastic<'_, R> {
    #[inline]
    fn draw(&mut self, mean: f64, variance: f64) -> f64 {
        let z: f64 = self.0.sample(StandardNormal);
        mean + variance.sqrt() * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Path {
    General,
    BalancedLevels,
    BalancedCells,
}

/// Reusable sweep machinery for one table.
#[derive(Debug, Clone)]
pub struct SweepKernel<'a> {
    tbl: &'a IncidenceTable,
    offsets: Vec<usize>,
    tau0: f64,
    tau: Vec<f64>,
    shrink: Vec<Vec<f64>>,
    shrink_total: Vec<f64>,
    level_mean_avg: Vec<f64>,
    order: Vec<usize>,
    path: Path,
    centered: bool,
    cross: Vec<f64>,
    means: Vec<f64>,
    work: u64,
}

impl<'a> SweepKernel<'a> {
    pub fn new(tbl: &'a IncidenceTable, tau: &Precisions) -> Result<Self> {
        if tau.factors() != tbl.factors() {
            return Err(Error::InvalidPrecisions(format!(
                "table has {} factors but {} factor precisions were given",
                tbl.factors(),
                tau.factors()
            )));
        }
        let path = match tbl.design() {
            DesignClass::BalancedCells => Path::BalancedCells,
            DesignClass::BalancedLevels => Path::BalancedLevels,
            DesignClass::Unbalanced => Path::General,
        };
        let k = tbl.factors();
        let level_mean_avg = (0..k)
            .map(|f| {
                let m = tbl.level_means(f);
                m.iter().sum::<f64>() / m.len() as f64
            })
            .collect();
        let mut kernel = Self {
            tbl,
            offsets: block_offsets(tbl.levels()),
            tau0: 0.0,
            tau: Vec::new(),
            shrink: Vec::new(),
            shrink_total: Vec::new(),
            level_mean_avg,
            order: (0..k).collect(),
            path,
            centered: false,
            cross: vec![0.0; tbl.levels().iter().copied().max().unwrap_or(0)],
            means: vec![0.0; k],
            work: 0,
        };
        kernel.set_precisions(tau);
        Ok(kernel)
    }

    /// Update factors in the given order (a permutation of `0..K`).
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        let k = self.tbl.factors();
        let mut seen = vec![false; k];
        if order.len() != k
            || order
                .iter()
                .any(|&f| f >= k || std::mem::replace(&mut seen[f], true))
        {
            return Err(Error::InvalidConfig(format!(
                "update order {order:?} is not a permutation of 0..{k}"
            )));
        }
        self.order = order;
        Ok(self)
    }

    /// Always use the general formulas, ignoring design balance.
    pub fn general_only(mut self) -> Self {
        self.path = Path::General;
        self
    }

    /// Treat the response as identically zero, so the mean map is linear.
    pub fn centered(mut self) -> Self {
        self.centered = true;
        self
    }

    pub fn set_precisions(&mut self, tau: &Precisions) {
        self.tau0 = tau.global();
        self.tau = (0..tau.factors()).map(|k| tau.factor(k)).collect();
        self.shrink = (0..self.tbl.factors())
            .map(|k| super::shrinkage(self.tbl, self.tau0, self.tau[k], k))
            .collect();
        self.shrink_total = self.shrink.iter().map(|s| s.iter().sum()).collect();
    }

    pub fn table(&self) -> &'a IncidenceTable {
        self.tbl
    }

    /// Units of work done so far: sparse entries read plus levels drawn.
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn reset_work(&mut self) {
        self.work = 0;
    }

    /// One sweep of the given kind over `params`.
    pub fn sweep<D: Draw>(&mut self, kind: SweepKind, params: &mut [f64], draw: &mut D) {
        debug_assert_eq!(params.len(), *self.offsets.last().unwrap());
        if self.path != Path::General {
            for k in 0..self.tbl.factors() {
                self.refresh_mean(k, params);
            }
        }
        if kind == SweepKind::Gibbs {
            params[0] = self.draw_global(params, draw);
        }
        for idx in 0..self.order.len() {
            let k = self.order[idx];
            self.factor_block(kind, k, params, draw);
        }
    }

    pub fn gibbs_sweep<D: Draw>(&mut self, params: &mut [f64], draw: &mut D) {
        self.sweep(SweepKind::Gibbs, params, draw)
    }

    pub fn collapsed_sweep<D: Draw>(&mut self, params: &mut [f64], draw: &mut D) {
        self.sweep(SweepKind::Collapsed, params, draw)
    }

    fn ybar(&self) -> f64 {
        if self.centered {
            0.0
        } else {
            self.tbl.grand_mean()
        }
    }

    fn refresh_mean(&mut self, k: usize, params: &[f64]) {
        let block = &params[self.offsets[k]..self.offsets[k + 1]];
        self.means[k] = block.iter().sum::<f64>() / block.len() as f64;
    }

    fn draw_global<D: Draw>(&mut self, params: &[f64], draw: &mut D) -> f64 {
        let n = self.tbl.total() as f64;
        let variance = 1.0 / (n * self.tau0);
        let mean = match self.path {
            Path::General => {
                let mut weighted = 0.0;
                for k in 0..self.tbl.factors() {
                    let block = &params[self.offsets[k]..self.offsets[k + 1]];
                    weighted += block
                        .iter()
                        .zip(self.tbl.level_counts(k))
                        .map(|(a, &c)| a * c as f64)
                        .sum::<f64>();
                }
                self.work += params.len() as u64;
                self.ybar() - weighted / n
            }
            Path::BalancedLevels | Path::BalancedCells => {
                self.work += self.means.len() as u64;
                self.ybar() - self.means.iter().sum::<f64>()
            }
        };
        draw.draw(mean, variance)
    }

    fn factor_block<D: Draw>(
        &mut self,
        kind: SweepKind,
        k: usize,
        params: &mut [f64],
        draw: &mut D,
    ) {
        let levels = self.tbl.levels()[k];
        let tau0 = self.tau0;
        let tau_k = self.tau[k];
        let counts = self.tbl.level_counts(k);
        let level_means = self.tbl.level_means(k);
        let centered = self.centered;
        let ytilde = |j: usize| if centered { 0.0 } else { level_means[j] };

        if self.path == Path::BalancedCells {
            let others: f64 = (0..self.tbl.factors())
                .filter(|&l| l != k)
                .map(|l| self.means[l])
                .sum();
            if kind == SweepKind::Collapsed {
                let avg = if centered {
                    0.0
                } else {
                    self.level_mean_avg[k]
                };
                let total = self.shrink_total[k];
                params[0] = draw.draw(avg - others, 1.0 / (tau_k * total));
            }
            let a0 = params[0];
            let n = counts[0] as f64;
            let variance = 1.0 / (n * tau0 + tau_k);
            let r = self.shrink[k][0];
            let block = &mut params[self.offsets[k]..self.offsets[k + 1]];
            for (j, a) in block.iter_mut().enumerate() {
                *a = draw.draw(r * (ytilde(j) - a0 - others), variance);
            }
            self.work += levels as u64;
            self.refresh_mean(k, params);
            return;
        }

        let cross = &mut self.cross[..levels];
        cross.fill(0.0);
        for l in 0..self.tbl.factors() {
            if l == k {
                continue;
            }
            let pair = self.tbl.pair(k, l);
            pair.accumulate(&params[self.offsets[l]..self.offsets[l + 1]], cross);
            self.work += pair.nnz() as u64;
        }
        let shrink = &self.shrink[k];

        if kind == SweepKind::Collapsed {
            let mut acc = 0.0;
            for j in 0..levels {
                let c = counts[j];
                if c > 0 {
                    acc += shrink[j] * (ytilde(j) - cross[j] / c as f64);
                }
            }
            let total = self.shrink_total[k];
            params[0] = draw.draw(acc / total, 1.0 / (tau_k * total));
            self.work += levels as u64;
        }

        let a0 = params[0];
        let block = &mut params[self.offsets[k]..self.offsets[k + 1]];
        for j in 0..levels {
            let c = counts[j];
            block[j] = if c == 0 {
                draw.draw(0.0, 1.0 / tau_k)
            } else {
                let n = c as f64;
                draw.draw(
                    shrink[j] * (ytilde(j) - a0 - cross[j] / n),
                    1.0 / (n * tau0 + tau_k),
                )
            };
        }
        self.work += levels as u64;
        if self.path != Path::General {
            self.refresh_mean(k, params);
        }
    }
}

/// One Gibbs sweep from `state`, returning the new state.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &ModelState,
    tbl: &IncidenceTable,
    rng: &mut R,
) -> Result<ModelState> {
    state.check(tbl)?;
    let mut next = state.clone();
    let mut kernel = SweepKernel::new(tbl, &state.tau)?;
    kernel.gibbs_sweep(next.params_mut(), &mut Stochastic(rng));
    Ok(next)
}

/// One collapsed Gibbs sweep from `state`, returning the new state.
pub fn collapsed_sweep<R: Rng + ?Sized>(
    state: &ModelState,
    tbl: &IncidenceTable,
    rng: &mut R,
) -> Result<ModelState> {
    state.check(tbl)?;
    let mut next = state.clone();
    let mut kernel = SweepKernel::new(tbl, &state.tau)?;
    kernel.collapsed_sweep(next.params_mut(), &mut Stochastic(rng));
    Ok(next)
}
