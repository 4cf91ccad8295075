//! Conjugate precision updates given the current effects.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IncidenceTable, Precisions};

use super::ModelState;

/// Prior on each precision.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PrecisionPrior {
    /// `p(sigma) ∝ 1` with `sigma = tau^{-1/2}`, i.e. `p(tau) ∝ tau^{-3/2}`.
    #[default]
    FlatSigma,
    /// `tau ~ Gamma(shape, rate)`.
    Gamma { shape: f64, rate: f64 },
}

/// Shape/rate parametrisation of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let dist = Gamma::new(self.shape, 1.0 / self.rate).map_err(|e| {
            Error::InvalidConfig(format!("gamma({}, {}): {e}", self.shape, self.rate))
        })?;
        Ok(dist.sample(rng))
    }
}

fn posterior(prior: PrecisionPrior, count: f64, ss: f64) -> GammaParams {
    match prior {
        PrecisionPrior::FlatSigma => GammaParams {
            shape: (count - 1.0) / 2.0,
            rate: ss / 2.0,
        },
        PrecisionPrior::Gamma { shape, rate } => GammaParams {
            shape: shape + count / 2.0,
            rate: rate + ss / 2.0,
        },
    }
}

/// Conditional of `tau_k` given the levels of factor `k`.
pub fn precision_conditional(
    k: usize,
    state: &ModelState,
    prior: PrecisionPrior,
) -> Result<GammaParams> {
    let levels = state.factor(k);
    let ss: f64 = levels.iter().map(|a| a * a).sum();
    let params = posterior(prior, levels.len() as f64, ss);
    if params.shape <= 0.0 {
        return Err(Error::TooFewLevels { factor: k });
    }
    if params.rate <= 0.0 {
        return Err(Error::DegeneratePrecision { factor: k });
    }
    Ok(params)
}

/// `sum over observations of (y - fitted)^2`, from cell means and the pooled
/// within-cell sum of squares.
pub fn residual_sum_of_squares(state: &ModelState, tbl: &IncidenceTable) -> f64 {
    let a0 = state.a0();
    let between: f64 = tbl
        .cells()
        .map(|(key, c)| {
            let fit = a0
                + key
                    .iter()
                    .enumerate()
                    .map(|(k, &l)| state.factor(k)[l as usize])
                    .sum::<f64>();
            let r = c.mean - fit;
            c.count as f64 * r * r
        })
        .sum();
    between + tbl.within_ss()
}

/// Draw every factor precision from its conditional, and `tau_0` as well
/// when `update_tau0` is set.
pub fn update_precisions<R: Rng + ?Sized>(
    state: &ModelState,
    tbl: &IncidenceTable,
    rng: &mut R,
    update_tau0: bool,
    prior: PrecisionPrior,
) -> Result<Precisions> {
    let mut tau = state.tau.clone();
    for k in 0..tbl.factors() {
        let params = precision_conditional(k, state, prior)?;
        tau.set_factor(k, params.sample(rng)?);
    }
    if update_tau0 {
        tau.set_global(sample_global_precision(state, tbl, rng, prior)?);
    }
    Ok(tau)
}

/// Draw `tau_0` from its conditional given all effects.
pub fn sample_global_precision<R: Rng + ?Sized>(
    state: &ModelState,
    tbl: &IncidenceTable,
    rng: &mut R,
    prior: PrecisionPrior,
) -> Result<f64> {
    let rss = residual_sum_of_squares(state, tbl);
    let params = posterior(prior, tbl.total() as f64, rss);
    if params.shape <= 0.0 || params.rate <= 0.0 {
        return Err(Error::DegenerateResidual);
    }
    params.sample(rng)
}
