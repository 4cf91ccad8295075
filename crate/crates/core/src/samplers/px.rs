//! Parameter expansion moves.
//!
//! Each move applies a group transformation to one factor block and draws
//! the group element from its conditional, which leaves the posterior
//! invariant.
//!
//! - [`PxVariant::Scale`]: `a^(k) -> g a^(k)`, `tau_k -> tau_k / g^2`. Under
//!   the flat prior on `sigma_k` the prior and Jacobian terms cancel against
//!   the Haar measure `dg/|g|`, so `g` is Gaussian with moments given by the
//!   likelihood alone. Requires unknown precisions.
//! - [`PxVariant::Location`]: `a^(k) -> a^(k) - xi`, `a0 -> a0 + xi`. The fit
//!   is unchanged, so `xi ~ N(abar^(k), 1 / (I_k tau_k))` from the prior.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IncidenceTable;

use super::ModelState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PxVariant {
    Scale,
    Location,
}

/// Apply the expansion move to every factor in ascending order.
pub fn px_transform<R: Rng + ?Sized>(
    state: &mut ModelState,
    tbl: &IncidenceTable,
    rng: &mut R,
    variant: PxVariant,
) -> Result<()> {
    state.check(tbl)?;
    for k in 0..tbl.factors() {
        match variant {
            PxVariant::Location => {
                let levels = state.factor(k).len() as f64;
                let sd = (1.0 / (levels * state.tau.factor(k))).sqrt();
                let z: f64 = rng.sample(StandardNormal);
                let xi = state.factor_mean(k) + sd * z;
                for a in state.factor_mut(k) {
                    *a -= xi;
                }
                state.set_a0(state.a0() + xi);
            }
            PxVariant::Scale => {
                let tau0 = state.tau.global();
                let counts = tbl.level_counts(k);
                let means = tbl.level_means(k);
                let mut cross = vec![0.0; counts.len()];
                for l in 0..tbl.factors() {
                    if l != k {
                        tbl.pair(k, l).accumulate(state.factor(l), &mut cross);
                    }
                }
                let a0 = state.a0();
                let mut quad = 0.0;
                let mut lin = 0.0;
                for (j, &u) in state.factor(k).iter().enumerate() {
                    let n = counts[j] as f64;
                    quad += n * u * u;
                    lin += u * (n * means[j] - n * a0 - cross[j]);
                }
                if quad <= 0.0 {
                    continue;
                }
                let precision = tau0 * quad;
                let z: f64 = rng.sample(StandardNormal);
                let g = tau0 * lin / precision + z / precision.sqrt();
                if g == 0.0 || !g.is_finite() {
                    return Err(Error::DegeneratePrecision { factor: k });
                }
                for a in state.factor_mut(k) {
                    *a *= g;
                }
                let tau_k = state.tau.factor(k) / (g * g);
                state.tau.set_factor(k, tau_k);
            }
        }
    }
    Ok(())
}
