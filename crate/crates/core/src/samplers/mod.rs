//! Gibbs and collapsed Gibbs samplers for the crossed effects posterior.
//!
//! Both samplers update the factors block by block. The plain Gibbs sampler
//! draws the global mean from its full conditional and then each factor in
//! turn; the collapsed sampler draws, for every factor `k`, the global mean
//! with factor `k` integrated out and then the levels of `k`, which amounts
//! to a joint update of `(a0, a^(k))`.
//!
//! With unknown precisions the sweep alternates with conjugate precision
//! draws and, optionally, a parameter expansion move.

mod chain;
mod conditionals;
mod precision;
mod px;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IncidenceTable, Precisions};

pub use chain::{run_chain, run_chains, Chain, ChainSummary, Probe, SamplerConfig, SeriesSummary};
pub use conditionals::{
    cond_global, cond_global_balanced_levels, cond_global_collapsed, cond_level,
    cond_level_balanced_cells, shrinkage,
};
pub use precision::{
    precision_conditional, residual_sum_of_squares, sample_global_precision, update_precisions,
    GammaParams, PrecisionPrior,
};
pub use px::{px_transform, PxVariant};
pub use sweep::{collapsed_sweep, gibbs_sweep, Draw, MeanOnly, Stochastic, SweepKernel};

/// Mean and variance of a univariate Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub variance: f64,
}

/// Which block structure a sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Global mean, then each factor, from full conditionals.
    Gibbs,
    /// Joint `(a0, a^(k))` update for each factor.
    Collapsed,
}

impl SweepKind {
    pub fn label(self) -> &'static str {
        match self {
            SweepKind::Gibbs => "GS",
            SweepKind::Collapsed => "cGS",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Sampling scheme: sweep kind, optionally followed by a parameter
/// expansion move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "gs")]
    Gs,
    #[serde(rename = "cgs")]
    Cgs,
    #[serde(rename = "gs+px")]
    GsPx,
    #[serde(rename = "cgs+px")]
    CgsPx,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Gs, Scheme::Cgs, Scheme::GsPx, Scheme::CgsPx];

    pub fn kind(self) -> SweepKind {
        match self {
            Scheme::Gs | Scheme::GsPx => SweepKind::Gibbs,
            Scheme::Cgs | Scheme::CgsPx => SweepKind::Collapsed,
        }
    }

    pub fn expanded(self) -> bool {
        matches!(self, Scheme::GsPx | Scheme::CgsPx)
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Gs => "GS",
            Scheme::Cgs => "cGS",
            Scheme::GsPx => "GS+PX",
            Scheme::CgsPx => "cGS+PX",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gs" => Ok(Scheme::Gs),
            "cgs" => Ok(Scheme::Cgs),
            "gs+px" | "gspx" | "gs-px" => Ok(Scheme::GsPx),
            "cgs+px" | "cgspx" | "cgs-px" => Ok(Scheme::CgsPx),
            other => Err(Error::Parse(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Current values of all model parameters.
///
/// Parameters are stored flat as `[a0, a^(1)_1..a^(1)_{I_1}, ..., a^(K)_..]`,
/// the same layout the rate engine uses for its autoregressive vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    params: Vec<f64>,
    offsets: Vec<usize>,
    pub tau: Precisions,
}

/// Start of each factor block in the flat layout, plus the total length.
pub fn block_offsets(levels: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(levels.len() + 1);
    let mut at = 1;
    for &i in levels {
        offsets.push(at);
        at += i;
    }
    offsets.push(at);
    offsets
}

impl ModelState {
    /// All effects at zero.
    pub fn zeros(tbl: &IncidenceTable, tau: Precisions) -> Result<Self> {
        check_tau(tbl, &tau)?;
        let offsets = block_offsets(tbl.levels());
        Ok(Self {
            params: vec![0.0; tbl.num_params()],
            offsets,
            tau,
        })
    }

    pub fn from_parts(a0: f64, factors: Vec<Vec<f64>>, tau: Precisions) -> Result<Self> {
        if factors.len() != tau.factors() {
            return Err(Error::InvalidConfig(format!(
                "{} factor blocks but {} factor precisions",
                factors.len(),
                tau.factors()
            )));
        }
        let levels: Vec<usize> = factors.iter().map(Vec::len).collect();
        let offsets = block_offsets(&levels);
        let mut params = Vec::with_capacity(*offsets.last().unwrap());
        params.push(a0);
        for f in factors {
            params.extend(f);
        }
        Ok(Self {
            params,
            offsets,
            tau,
        })
    }

    /// Check the state against a table's dimensions.
    pub fn check(&self, tbl: &IncidenceTable) -> Result<()> {
        check_tau(tbl, &self.tau)?;
        if self.offsets != block_offsets(tbl.levels()) {
            return Err(Error::InvalidConfig(
                "state dimensions do not match the table".into(),
            ));
        }
        Ok(())
    }

    pub fn factors(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn a0(&self) -> f64 {
        self.params[0]
    }

    pub fn set_a0(&mut self, value: f64) {
        self.params[0] = value;
    }

    pub fn factor(&self, k: usize) -> &[f64] {
        &self.params[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn factor_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.params[self.offsets[k]..self.offsets[k + 1]]
    }

    /// `abar^(k)`, the plain average of the levels of factor `k`.
    pub fn factor_mean(&self, k: usize) -> f64 {
        let f = self.factor(k);
        f.iter().sum::<f64>() / f.len() as f64
    }

    /// `delta a^(k)_j = a^(k)_j - abar^(k)`.
    pub fn increment(&self, k: usize, j: usize) -> f64 {
        self.factor(k)[j] - self.factor_mean(k)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
            && self
                .tau
                .as_slice()
                .iter()
                .all(|t| t.is_finite() && *t > 0.0)
    }
}

fn check_tau(tbl: &IncidenceTable, tau: &Precisions) -> Result<()> {
    if tau.factors() != tbl.factors() {
        return Err(Error::InvalidPrecisions(format!(
            "table has {} factors but {} factor precisions were given",
            tbl.factors(),
            tau.factors()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            let json = serde_json::to_string(&s).unwrap();
            let back: Scheme = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
        }
        assert!("hmc".parse::<Scheme>().is_err());
    }

    #[test]
    fn state_views() {
        let tau = Precisions::uniform(2, 1.0).unwrap();
        let s =
            ModelState::from_parts(0.5, vec![vec![1.0, 3.0], vec![2.0, 2.0, 5.0]], tau).unwrap();
        assert_eq!(s.a0(), 0.5);
        assert_eq!(s.factor(1), &[2.0, 2.0, 5.0]);
        assert_eq!(s.factor_mean(0), 2.0);
        assert_eq!(s.increment(1, 2), 2.0);
        assert_eq!(s.offsets(), &[1, 3, 6]);
    }
}
