//! Full conditionals of single coordinates, evaluated directly from the
//! table margins. The sweep kernel vectorises the same formulas.

use crate::error::{Error, Result};
use crate::model::{DesignClass, IncidenceTable};

use super::{Gaussian, ModelState};

/// `s^(k)_j = n^(k)_j tau_0 / (n^(k)_j tau_0 + tau_k)` for every level of `k`.
pub fn shrinkage(tbl: &IncidenceTable, tau0: f64, tau_k: f64, k: usize) -> Vec<f64> {
    tbl.level_counts(k)
        .iter()
        .map(|&n| {
            let prec = n as f64 * tau0;
            prec / (prec + tau_k)
        })
        .collect()
}

/// `sum_{l != k} sum_i a^(l)_i n^(k,l)_{j,i}`.
fn cross_sum(k: usize, j: usize, state: &ModelState, tbl: &IncidenceTable) -> f64 {
    (0..tbl.factors())
        .filter(|&l| l != k)
        .map(|l| tbl.pair(k, l).row_dot(j, state.factor(l)))
        .sum()
}

/// Full conditional of the global mean.
pub fn cond_global(state: &ModelState, tbl: &IncidenceTable) -> Gaussian {
    let n = tbl.total() as f64;
    let weighted: f64 = (0..tbl.factors())
        .map(|k| {
            state
                .factor(k)
                .iter()
                .zip(tbl.level_counts(k))
                .map(|(a, &c)| a * c as f64)
                .sum::<f64>()
        })
        .sum();
    Gaussian {
        mean: tbl.grand_mean() - weighted / n,
        variance: 1.0 / (n * state.tau.global()),
    }
}

/// Full conditional of the global mean on a balanced-levels design, where
/// the weighted level sums reduce to plain factor averages.
pub fn cond_global_balanced_levels(state: &ModelState, tbl: &IncidenceTable) -> Result<Gaussian> {
    if !tbl.design().is_balanced_levels() {
        return Err(Error::NotBalancedLevels);
    }
    let averages: f64 = (0..tbl.factors()).map(|k| state.factor_mean(k)).sum();
    Ok(Gaussian {
        mean: tbl.grand_mean() - averages,
        variance: 1.0 / (tbl.total() as f64 * state.tau.global()),
    })
}

/// Full conditional of level `j` of factor `k` (both 0-based). Levels with
/// no observations fall back to the prior `N(0, 1/tau_k)`.
pub fn cond_level(k: usize, j: usize, state: &ModelState, tbl: &IncidenceTable) -> Gaussian {
    let tau0 = state.tau.global();
    let tau_k = state.tau.factor(k);
    let count = tbl.level_counts(k)[j];
    if count == 0 {
        return Gaussian {
            mean: 0.0,
            variance: 1.0 / tau_k,
        };
    }
    let n = count as f64;
    let prec = n * tau0 + tau_k;
    let cross = cross_sum(k, j, state, tbl);
    Gaussian {
        mean: n * tau0 / prec * (tbl.level_means(k)[j] - state.a0() - cross / n),
        variance: 1.0 / prec,
    }
}

/// Full conditional of a level on a balanced-cells design: every other
/// factor enters only through its average.
pub fn cond_level_balanced_cells(
    k: usize,
    j: usize,
    state: &ModelState,
    tbl: &IncidenceTable,
) -> Result<Gaussian> {
    if tbl.design() != DesignClass::BalancedCells {
        return Err(Error::InvalidConfig("design is not balanced cells".into()));
    }
    let n = tbl.total() as f64;
    let levels = tbl.levels()[k] as f64;
    let tau0 = state.tau.global();
    let tau_k = state.tau.factor(k);
    let others: f64 = (0..tbl.factors())
        .filter(|&l| l != k)
        .map(|l| state.factor_mean(l))
        .sum();
    let denom = n * tau0 + levels * tau_k;
    Ok(Gaussian {
        mean: n * tau0 / denom * (tbl.level_means(k)[j] - state.a0() - others),
        variance: levels / denom,
    })
}

/// Conditional of the global mean given every factor except `k`, with
/// factor `k` integrated out.
pub fn cond_global_collapsed(
    k: usize,
    state: &ModelState,
    tbl: &IncidenceTable,
) -> Result<Gaussian> {
    let tau0 = state.tau.global();
    let tau_k = state.tau.factor(k);
    let weights = shrinkage(tbl, tau0, tau_k, k);
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateFactor { factor: k });
    }
    let mut acc = 0.0;
    for (j, (&s, &count)) in weights.iter().zip(tbl.level_counts(k)).enumerate() {
        if count == 0 {
            continue;
        }
        let cross = cross_sum(k, j, state, tbl);
        acc += s * (tbl.level_means(k)[j] - cross / count as f64);
    }
    Ok(Gaussian {
        mean: acc / total,
        variance: 1.0 / (tau_k * total),
    })
}
