//! Independent dense references for the integration tests.
//!
//! Everything here is built from the model density directly (design matrix,
//! precision matrix, Gaussian conditioning) and shares no code with the
//! samplers or the rate engine beyond the table accessors.

#![allow(dead_code)]

use crossed::datagen::simulate_response;
use crossed::model::{CellStats, IncidenceTable, Precisions};
use crossed::SweepKind;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Start of each factor block in `[a0, a^(1), ..., a^(K)]`, plus the length.
pub fn offsets(levels: &[usize]) -> Vec<usize> {
    let mut out = vec![1];
    for &i in levels {
        out.push(out.last().unwrap() + i);
    }
    out
}

/// Indicator row of a cell in the flat parameter layout.
fn indicator(key: &[u32], off: &[usize], p: usize) -> DVector<f64> {
    let mut x = DVector::zeros(p);
    x[0] = 1.0;
    for (k, &l) in key.iter().enumerate() {
        x[off[k] + l as usize] = 1.0;
    }
    x
}

/// Posterior precision `Q` and linear term `b` of the effects given the
/// precisions: `log p = -theta' Q theta / 2 + b' theta + const`.
pub fn precision_system(tbl: &IncidenceTable, tau: &Precisions) -> (DMatrix<f64>, DVector<f64>) {
    let off = offsets(tbl.levels());
    let p = *off.last().unwrap();
    let tau0 = tau.global();
    let mut q = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for (key, c) in tbl.cells() {
        let x = indicator(key, &off, p);
        let w = tau0 * c.count as f64;
        q += &x * x.transpose() * w;
        b += &x * (w * c.mean);
    }
    for k in 0..tbl.factors() {
        for j in off[k]..off[k + 1] {
            q[(j, j)] += tau.factor(k);
        }
    }
    (q, b)
}

/// Exact Gaussian posterior for known precisions.
pub struct Oracle {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub prec: DMatrix<f64>,
    pub offsets: Vec<usize>,
}

pub fn oracle(tbl: &IncidenceTable, tau: &Precisions) -> Oracle {
    let (q, b) = precision_system(tbl, tau);
    let chol = q
        .clone()
        .cholesky()
        .expect("posterior precision is positive definite");
    Oracle {
        mean: chol.solve(&b),
        cov: chol.inverse(),
        prec: q,
        offsets: offsets(tbl.levels()),
    }
}

impl Oracle {
    /// Conditional mean and covariance of the coordinates in `block` given
    /// the others at `x`, by Gaussian conditioning on the precision matrix.
    pub fn conditional(&self, block: &[usize], x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.mean.len();
        let rest: Vec<usize> = (0..p).filter(|i| !block.contains(i)).collect();
        let qss = self.prec.select_rows(block).select_columns(block);
        let qsr = self.prec.select_rows(block).select_columns(&rest);
        let dev = DVector::from_iterator(rest.len(), rest.iter().map(|&i| x[i] - self.mean[i]));
        let inv = qss.try_inverse().unwrap();
        let ms = DVector::from_iterator(block.len(), block.iter().map(|&i| self.mean[i]));
        (ms - &inv * qsr * dev, inv)
    }

    pub fn block(&self, k: usize) -> Vec<usize> {
        (self.offsets[k]..self.offsets[k + 1]).collect()
    }
}

/// The mean map of one sweep as an explicit matrix, composed from the block
/// conditional mean maps `x_S <- -Q_SS^{-1} Q_SR x_R` (zero response). Gibbs
/// updates `{a0}` then each factor; the collapsed sampler updates
/// `{a0} ∪ factor k` jointly for each `k`.
pub fn composed_operator(
    kind: SweepKind,
    tbl: &IncidenceTable,
    tau: &Precisions,
    order: &[usize],
) -> DMatrix<f64> {
    let (q, _) = precision_system(tbl, tau);
    let off = offsets(tbl.levels());
    let p = q.nrows();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    if kind == SweepKind::Gibbs {
        blocks.push(vec![0]);
    }
    for &k in order {
        let mut s: Vec<usize> = (off[k]..off[k + 1]).collect();
        if kind == SweepKind::Collapsed {
            s.insert(0, 0);
        }
        blocks.push(s);
    }
    let mut b = DMatrix::identity(p, p);
    for s in blocks {
        let rest: Vec<usize> = (0..p).filter(|i| !s.contains(i)).collect();
        let qss = q.select_rows(&s).select_columns(&s);
        let qsr = q.select_rows(&s).select_columns(&rest);
        let gain = -qss.try_inverse().unwrap() * qsr;
        let mut m = DMatrix::identity(p, p);
        for (a, &i) in s.iter().enumerate() {
            m[(i, i)] = 0.0;
            for (c, &j) in rest.iter().enumerate() {
                m[(i, j)] = gain[(a, c)];
            }
        }
        b = m * b;
    }
    b
}

/// Random design: each cell of the grid is present with probability
/// `fill` and then holds 1..=max_count observations. Retries until N > 0.
pub fn random_design(
    rng: &mut ChaCha8Rng,
    levels: &[usize],
    fill: f64,
    max_count: u64,
) -> IncidenceTable {
    let total: usize = levels.iter().product();
    loop {
        let mut cells = Vec::new();
        for idx in 0..total {
            if rng.random::<f64>() >= fill {
                continue;
            }
            let mut rem = idx;
            let mut key = vec![0u32; levels.len()];
            for (d, &i) in key.iter_mut().zip(levels).rev() {
                *d = (rem % i) as u32;
                rem /= i;
            }
            let n = rng.random_range(1..=max_count);
            cells.push((key, CellStats::new(n, 0.0, 0.0)));
        }
        if !cells.is_empty() {
            return IncidenceTable::from_cells(levels.to_vec(), cells).unwrap();
        }
    }
}

/// A random design with a response drawn from the model.
pub fn random_instance(
    seed: u64,
    levels: &[usize],
    fill: f64,
    max_count: u64,
    tau: &Precisions,
) -> IncidenceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = random_design(&mut rng, levels, fill, max_count);
    simulate_response(&design, tau, 0.7, seed ^ 0xabc)
        .unwrap()
        .table
}

/// Grid axis over `log sigma`: `(lo, hi, points)`.
pub type Axis = (f64, f64, usize);

/// Posterior for unknown precisions under `p(sigma) ∝ 1`, by tensor-grid
/// trapezoid quadrature over `log sigma` of the closed-form marginal
/// likelihood (effects integrated out). With `tau0 = None` the global
/// precision is unknown too and `axes[0]` is its axis; the remaining axes
/// belong to the factors.
pub struct QuadratureOracle {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Posterior mean and sd of `sigma_0` (if unknown) then each `sigma_k`.
    pub sigma_mean: Vec<f64>,
    pub sigma_sd: Vec<f64>,
}

pub fn quadrature_oracle(
    tbl: &IncidenceTable,
    tau0: Option<f64>,
    axes: &[Axis],
) -> QuadratureOracle {
    let k = tbl.factors();
    let dims = k + usize::from(tau0.is_none());
    assert_eq!(axes.len(), dims);
    let grids: Vec<Vec<f64>> = axes
        .iter()
        .map(|&(lo, hi, n)| {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        })
        .collect();
    let total: usize = axes.iter().map(|a| a.2).product();
    let n_obs = tbl.total() as f64;
    let yy: f64 = tbl.within_ss()
        + tbl
            .cells()
            .map(|(_, c)| c.count as f64 * c.mean * c.mean)
            .sum::<f64>();
    let p = tbl.num_params();
    // running weighted sums, rescaled whenever the top log-weight grows
    let mut top = f64::NEG_INFINITY;
    let mut z = 0.0;
    let mut mean = DVector::zeros(p);
    let mut second = DMatrix::zeros(p, p);
    let mut s1 = vec![0.0; dims];
    let mut s2 = vec![0.0; dims];
    for idx in 0..total {
        let mut rem = idx;
        let mut u = vec![0.0; dims];
        let mut lw = 0.0;
        for (d, uk) in u.iter_mut().enumerate() {
            let n = axes[d].2;
            let i = rem % n;
            rem /= n;
            *uk = grids[d][i];
            if i == 0 || i == n - 1 {
                lw += 0.5f64.ln();
            }
            // flat sigma prior, d sigma = sigma du
            lw += *uk;
        }
        let mut vals: Vec<f64> = u.iter().map(|v| (-2.0 * v).exp()).collect();
        if let Some(t0) = tau0 {
            vals.insert(0, t0);
        }
        let tau = Precisions::new(vals).unwrap();
        let (q, b) = precision_system(tbl, &tau);
        let chol = q.cholesky().unwrap();
        let mu = chol.solve(&b);
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        lw += -0.5 * logdet + 0.5 * b.dot(&mu);
        for f in 0..k {
            lw += 0.5 * tbl.levels()[f] as f64 * tau.factor(f).ln();
        }
        if tau0.is_none() {
            let t0 = tau.global();
            lw += 0.5 * n_obs * t0.ln() - 0.5 * t0 * yy;
        }
        if lw > top {
            let r = (top - lw).exp();
            z *= r;
            mean *= r;
            second *= r;
            s1.iter_mut().chain(s2.iter_mut()).for_each(|v| *v *= r);
            top = lw;
        }
        let wi = (lw - top).exp();
        if wi < 1e-300 {
            continue;
        }
        z += wi;
        second += (chol.inverse() + &mu * mu.transpose()) * wi;
        mean += mu * wi;
        for d in 0..dims {
            let s = u[d].exp();
            s1[d] += wi * s;
            s2[d] += wi * s * s;
        }
    }
    mean /= z;
    second /= z;
    s1.iter_mut().chain(s2.iter_mut()).for_each(|v| *v /= z);
    let cov = second - &mean * mean.transpose();
    let sigma_sd = s1
        .iter()
        .zip(&s2)
        .map(|(m, q)| (q - m * m).max(0.0).sqrt())
        .collect();
    QuadratureOracle {
        mean,
        cov,
        sigma_mean: s1,
        sigma_sd,
    }
}

/// Monte Carlo standard error of the mean of `x` from its effective sample
/// size.
pub fn mcse(x: &[f64]) -> f64 {
    let s = crossed::diagnostics::series_stats(x).unwrap();
    s.mcse
}

/// Largest `|estimate - reference| / mcse` over the means and all pairwise
/// covariances of the columns. Returns the worst z and a description.
pub fn worst_z(
    cols: &[Vec<f64>],
    labels: &[String],
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> (f64, String) {
    let n = cols[0].len() as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut worst = (0.0, String::new());
    let mut note = |z: f64, what: String| {
        if z > worst.0 {
            worst = (z, what);
        }
    };
    for (i, c) in cols.iter().enumerate() {
        let z = (means[i] - mean[i]).abs() / mcse(c);
        note(z, format!("mean {}", labels[i]));
    }
    for i in 0..cols.len() {
        for j in i..cols.len() {
            let prod: Vec<f64> = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .collect();
            let est = prod.iter().sum::<f64>() / n;
            let z = (est - cov[(i, j)]).abs() / mcse(&prod);
            note(z, format!("cov {},{}", labels[i], labels[j]));
        }
    }
    worst
}

/// Gibbs sampler on a standard bivariate Gaussian with correlation `rho`,
/// returning the series `x(t)` and `z(t) = y(t) - rho x(t)`.
pub fn bivariate_gibbs(rho: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (1.0 - rho * rho).sqrt();
    let mut y = 0.0;
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rho * y + s * rng.sample::<f64, _>(StandardNormal);
        y = rho * x + s * rng.sample::<f64, _>(StandardNormal);
        xs.push(x);
        zs.push(y - rho * x);
    }
    (xs, zs)
}

/// Largest absolute cross-correlation at lags `-max_lag..=max_lag` between
/// every averages probe (`a0`, each factor mean) and a few increments per
/// factor, from one chain with known precisions.
pub fn multigrid_cross(
    scheme: crossed::Scheme,
    tbl: &IncidenceTable,
    tau: &Precisions,
    iterations: usize,
    seed: u64,
    max_lag: usize,
    increments_per_factor: usize,
) -> (f64, String) {
    use crossed::samplers::{run_chain, Probe, SamplerConfig};
    let k = tbl.factors();
    let mut averages = vec![Probe::GlobalMean];
    averages.extend((0..k).map(Probe::FactorMean));
    let mut increments = Vec::new();
    for f in 0..k {
        let i = tbl.levels()[f];
        for j in 0..increments_per_factor.min(i) {
            increments.push(Probe::Increment(f, j * i / increments_per_factor.min(i)));
        }
    }
    let mut cfg = SamplerConfig::new(scheme, iterations + 100, 100, seed);
    cfg.monitor = averages.iter().chain(&increments).cloned().collect();
    let init = crossed::ModelState::zeros(tbl, tau.clone()).unwrap();
    let chain = run_chain(&cfg, tbl, &init).unwrap();
    let mut worst = (0.0, String::new());
    for a in 0..averages.len() {
        let sa = chain.column(a);
        for b in 0..increments.len() {
            let sb = chain.column(averages.len() + b);
            let cc = crossed::diagnostics::cross_correlation(&sa, &sb, max_lag).unwrap();
            let m = cc.max_abs();
            if m > worst.0 {
                worst = (
                    m,
                    format!(
                        "{} vs {}",
                        chain.labels[a],
                        chain.labels[averages.len() + b]
                    ),
                );
            }
        }
    }
    worst
}
