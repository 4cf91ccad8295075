//! Convergence rates of the samplers with known precisions.
//!
//! With fixed precisions both samplers are Gaussian autoregressions
//! `x(t+1) = B x(t) + b + noise`, and the rate of convergence is the
//! spectral radius of `B`. The mean map (a sweep with every draw replaced
//! by its conditional mean) applies `x -> Bx + b`; with the response set to
//! zero it applies `B` itself, since rates do not depend on the observed
//! values.
//!
//! Closed-form predictions use `r_k = N tau0 / (N tau0 + I_k tau_k)`:
//! the Gibbs sampler is predicted to mix in `1 + max_k N tau0 / (I_k tau_k)`
//! iterations, and for two factors the collapsed sampler has rate
//! `r_1 r_2 rho_aux`.

mod aux;
pub mod eigen;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DesignClass, IncidenceTable, Precisions};
use crate::samplers::{MeanOnly, SweepKernel, SweepKind};

pub use aux::{aux_rate, is_connected, AuxChain, RowStochastic};
pub use eigen::{EigenEstimate, IterOptions, LinearMap};

/// Numerical method behind a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMethod {
    /// Dense below [`RateOptions::dense_limit`] parameters, Krylov-Schur above.
    Auto,
    /// Assemble `B` and take all eigenvalues.
    DenseEigen,
    /// Block power iteration with Rayleigh-Ritz values.
    PowerIteration,
    /// Restarted Arnoldi (Krylov-Schur).
    KrylovSchur,
}

impl std::str::FromStr for RateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "auto" => Ok(RateMethod::Auto),
            "dense" | "dense-eigen" => Ok(RateMethod::DenseEigen),
            "power" | "power-iteration" => Ok(RateMethod::PowerIteration),
            "krylov" | "krylov-schur" | "arnoldi" => Ok(RateMethod::KrylovSchur),
            other => Err(Error::Parse(format!("unknown rate method {other:?}"))),
        }
    }
}

/// Subspace on which the rate is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subspace {
    /// The whole parameter space.
    Full,
    /// `a0 = 0` and every factor block summing to zero: the residual
    /// (increment) chain. Invariant under `B` on balanced-levels designs.
    ZeroSumResiduals,
}

/// Which result justifies a closed-form prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoryKind {
    /// Exact on balanced-cells designs.
    ExactBalancedCells,
    /// Exact on balanced-levels designs with two factors.
    ExactBalancedLevelsTwoFactors,
    /// Proven lower bound on the mixing time for balanced levels and more
    /// than two factors (conjectured to be exact).
    LowerBoundBalancedLevels,
    /// The balanced-levels formula applied to an unbalanced design with more
    /// than two factors, where it is only conjectured.
    ConjectureManyFactors,
    /// A balanced-levels formula applied to an unbalanced design.
    Extrapolated,
    /// No closed form available.
    None,
}

impl fmt::Display for TheoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TheoryKind::ExactBalancedCells => "exact-balanced-cells",
            TheoryKind::ExactBalancedLevelsTwoFactors => "exact-balanced-levels-two-factors",
            TheoryKind::LowerBoundBalancedLevels => "lower-bound-balanced-levels",
            TheoryKind::ConjectureManyFactors => "conjecture-many-factors",
            TheoryKind::Extrapolated => "extrapolated",
            TheoryKind::None => "none",
        };
        f.write_str(s)
    }
}

/// Options for [`numeric_rate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    pub method: RateMethod,
    pub subspace: Subspace,
    pub tol: f64,
    /// Cap on mean-map applications for the iterative methods.
    pub max_iters: usize,
    pub block: usize,
    pub krylov_dim: usize,
    pub seed: u64,
    /// Factor update order; ascending when `None`.
    pub order: Option<Vec<usize>>,
    /// Largest parameter count solved densely under [`RateMethod::Auto`].
    pub dense_limit: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        let it = IterOptions::default();
        Self {
            method: RateMethod::Auto,
            subspace: Subspace::Full,
            tol: it.tol,
            max_iters: it.max_applications,
            block: it.block,
            krylov_dim: it.krylov_dim,
            seed: it.seed,
            order: None,
            dense_limit: 300,
        }
    }
}

/// Numeric and closed-form rates for one sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scheme: SweepKind,
    pub subspace: Subspace,
    pub rho_numeric: f64,
    pub rho_theory: Option<f64>,
    pub mixing_numeric: f64,
    pub mixing_theory: Option<f64>,
    pub rho_aux: Option<f64>,
    pub theory_kind: TheoryKind,
    pub method: RateMethod,
    /// Mean-map applications.
    pub iterations_used: usize,
    pub residual_tolerance: f64,
}

/// `1 / (1 - rho)`, infinite for `rho >= 1`.
pub fn mixing_time(rho: f64) -> f64 {
    if rho >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - rho)
    }
}

/// `r_k = N tau0 / (N tau0 + I_k tau_k)` for every factor.
pub fn factor_ratios(tbl: &IncidenceTable, tau: &Precisions) -> Vec<f64> {
    let ntau = tbl.total() as f64 * tau.global();
    (0..tbl.factors())
        .map(|k| ntau / (ntau + tbl.levels()[k] as f64 * tau.factor(k)))
        .collect()
}

fn project_zero_sum(offsets: &[usize], x: &mut [f64]) {
    x[0] = 0.0;
    for w in offsets.windows(2) {
        let block = &mut x[w[0]..w[1]];
        let mean = block.iter().sum::<f64>() / block.len() as f64;
        block.iter_mut().for_each(|v| *v -= mean);
    }
}

/// `x -> B x` for one sampler, matrix-free.
#[derive(Debug, Clone)]
pub struct AutoregressiveOperator<'a> {
    kernel: SweepKernel<'a>,
    kind: SweepKind,
    subspace: Subspace,
    offsets: Vec<usize>,
}

impl<'a> AutoregressiveOperator<'a> {
    pub fn new(kind: SweepKind, tbl: &'a IncidenceTable, tau: &Precisions) -> Result<Self> {
        Ok(Self {
            kernel: SweepKernel::new(tbl, tau)?.centered(),
            kind,
            subspace: Subspace::Full,
            offsets: crate::samplers::block_offsets(tbl.levels()),
        })
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        self.kernel = self.kernel.with_order(order)?;
        Ok(self)
    }

    /// Compress to a subspace: `x -> P B P x`.
    pub fn on(mut self, subspace: Subspace) -> Self {
        self.subspace = subspace;
        self
    }

    /// Always use the general sweep formulas.
    pub fn general_only(mut self) -> Self {
        self.kernel = self.kernel.general_only();
        self
    }

    /// Mean-map applications so far, in sweep work units.
    pub fn work(&self) -> u64 {
        self.kernel.work()
    }

    pub fn assemble(&mut self) -> DMatrix<f64> {
        eigen::assemble(self)
    }
}

impl LinearMap for AutoregressiveOperator<'_> {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        if self.subspace == Subspace::ZeroSumResiduals {
            project_zero_sum(&self.offsets, y);
        }
        self.kernel.sweep(self.kind, y, &mut MeanOnly);
        if self.subspace == Subspace::ZeroSumResiduals {
            project_zero_sum(&self.offsets, y);
        }
    }
}

/// `B x`: one mean-mode sweep from `x` minus the mean-mode sweep from zero.
pub fn mean_map(
    kind: SweepKind,
    tbl: &IncidenceTable,
    tau: &Precisions,
    x: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != tbl.num_params() {
        return Err(Error::InvalidConfig(format!(
            "vector has length {} but the model has {} parameters",
            x.len(),
            tbl.num_params()
        )));
    }
    let mut kernel = SweepKernel::new(tbl, tau)?;
    let mut image = x.to_vec();
    kernel.sweep(kind, &mut image, &mut MeanOnly);
    let mut offset = vec![0.0; x.len()];
    kernel.sweep(kind, &mut offset, &mut MeanOnly);
    for (v, b) in image.iter_mut().zip(offset) {
        *v -= b;
    }
    Ok(image)
}

/// Closed-form prediction for one sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theory {
    pub rho: Option<f64>,
    pub mixing: Option<f64>,
    pub rho_aux: Option<f64>,
    pub kind: TheoryKind,
}

/// Closed-form rate of the given sampler, labelled with the regime that
/// justifies it.
pub fn theory_rate(kind: SweepKind, tbl: &IncidenceTable, tau: &Precisions) -> Result<Theory> {
    if tau.factors() != tbl.factors() {
        return Err(Error::InvalidPrecisions(format!(
            "table has {} factors but {} factor precisions were given",
            tbl.factors(),
            tau.factors()
        )));
    }
    let design = tbl.design();
    let k = tbl.factors();
    match kind {
        SweepKind::Gibbs => {
            let r = factor_ratios(tbl, tau);
            let rho = r.iter().copied().fold(0.0, f64::max);
            let ntau = tbl.total() as f64 * tau.global();
            let slowest = (0..k)
                .map(|f| ntau / (tbl.levels()[f] as f64 * tau.factor(f)))
                .fold(0.0, f64::max);
            let label = match design {
                DesignClass::BalancedCells => TheoryKind::ExactBalancedCells,
                DesignClass::BalancedLevels if k == 2 => TheoryKind::ExactBalancedLevelsTwoFactors,
                DesignClass::BalancedLevels => TheoryKind::LowerBoundBalancedLevels,
                DesignClass::Unbalanced if k > 2 => TheoryKind::ConjectureManyFactors,
                DesignClass::Unbalanced => TheoryKind::Extrapolated,
            };
            Ok(Theory {
                rho: Some(rho),
                mixing: Some(1.0 + slowest),
                rho_aux: None,
                kind: label,
            })
        }
        SweepKind::Collapsed => {
            if design == DesignClass::BalancedCells {
                return Ok(Theory {
                    rho: Some(0.0),
                    mixing: Some(1.0),
                    rho_aux: None,
                    kind: TheoryKind::ExactBalancedCells,
                });
            }
            if k == 2 {
                let rho_aux = aux::aux_rate_value(tbl)?;
                let r = factor_ratios(tbl, tau);
                let rho = r[0] * r[1] * rho_aux;
                return Ok(Theory {
                    rho: Some(rho),
                    mixing: Some(mixing_time(rho)),
                    rho_aux: Some(rho_aux),
                    kind: if design.is_balanced_levels() {
                        TheoryKind::ExactBalancedLevelsTwoFactors
                    } else {
                        TheoryKind::Extrapolated
                    },
                });
            }
            Ok(Theory {
                rho: None,
                mixing: None,
                rho_aux: None,
                kind: TheoryKind::None,
            })
        }
    }
}

/// Rate `r_1 r_2 rho_aux` of the residual chain on a balanced-levels
/// two-factor design.
pub fn residual_rate_k2(tbl: &IncidenceTable, tau: &Precisions) -> Result<f64> {
    if tbl.factors() != 2 {
        return Err(Error::UnsupportedFactorCount(tbl.factors()));
    }
    if !tbl.design().is_balanced_levels() {
        return Err(Error::NotBalancedLevels);
    }
    let r = factor_ratios(tbl, tau);
    Ok(r[0] * r[1] * aux::aux_rate_value(tbl)?)
}

/// Autoregressive matrix of the factor averages `(a0, abar_1, ..., abar_K)`
/// under the Gibbs sampler on a balanced-levels design, built from the
/// averaged conditional means.
pub fn averages_autoregression(tbl: &IncidenceTable, tau: &Precisions) -> Result<DMatrix<f64>> {
    if !tbl.design().is_balanced_levels() {
        return Err(Error::NotBalancedLevels);
    }
    let k = tbl.factors();
    let r = factor_ratios(tbl, tau);
    let mut out = DMatrix::zeros(k + 1, k + 1);
    for col in 0..=k {
        let mut x = vec![0.0; k + 1];
        x[col] = 1.0;
        x[0] = -x[1..].iter().sum::<f64>();
        for f in 0..k {
            let others: f64 = (0..k).filter(|&l| l != f).map(|l| x[l + 1]).sum();
            x[f + 1] = -r[f] * (x[0] + others);
        }
        out.set_column(col, &nalgebra::DVector::from_vec(x));
    }
    Ok(out)
}

/// Numeric rate of the given sampler, with the closed-form prediction
/// attached.
pub fn numeric_rate(
    kind: SweepKind,
    tbl: &IncidenceTable,
    tau: &Precisions,
    opts: &RateOptions,
) -> Result<RateReport> {
    let mut op = AutoregressiveOperator::new(kind, tbl, tau)?.on(opts.subspace);
    if let Some(order) = &opts.order {
        op = op.with_order(order.clone())?;
    }
    let p = op.dim();
    let method = match opts.method {
        RateMethod::Auto if p <= opts.dense_limit => RateMethod::DenseEigen,
        RateMethod::Auto => RateMethod::KrylovSchur,
        m => m,
    };
    let iter = IterOptions {
        tol: opts.tol,
        max_applications: opts.max_iters,
        seed: opts.seed,
        block: opts.block,
        krylov_dim: opts.krylov_dim,
    };
    let (rho, iterations_used) = match method {
        RateMethod::DenseEigen => (eigen::dense_spectral_radius(&op.assemble())?, p),
        RateMethod::PowerIteration => {
            let e = eigen::block_power(&mut op, &iter)?;
            (e.modulus, e.applications)
        }
        RateMethod::KrylovSchur | RateMethod::Auto => {
            let e = eigen::krylov_schur(&mut op, &iter)?;
            (e.modulus, e.applications)
        }
    };

    let theory = match opts.subspace {
        Subspace::Full => theory_rate(kind, tbl, tau)?,
        Subspace::ZeroSumResiduals => {
            if tbl.factors() == 2 && tbl.design().is_balanced_levels() {
                let rho_aux = aux::aux_rate_value(tbl)?;
                let r = factor_ratios(tbl, tau);
                let rho = r[0] * r[1] * rho_aux;
                Theory {
                    rho: Some(rho),
                    mixing: Some(mixing_time(rho)),
                    rho_aux: Some(rho_aux),
                    kind: TheoryKind::ExactBalancedLevelsTwoFactors,
                }
            } else {
                Theory {
                    rho: None,
                    mixing: None,
                    rho_aux: None,
                    kind: TheoryKind::None,
                }
            }
        }
    };

    Ok(RateReport {
        scheme: kind,
        subspace: opts.subspace,
        rho_numeric: rho,
        rho_theory: theory.rho,
        mixing_numeric: mixing_time(rho),
        mixing_theory: theory.mixing,
        rho_aux: theory.rho_aux,
        theory_kind: theory.kind,
        method,
        iterations_used,
        residual_tolerance: opts.tol,
    })
}
