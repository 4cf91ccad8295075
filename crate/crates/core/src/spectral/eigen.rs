//! Largest-modulus eigenvalues of real linear operators.
//!
//! Three engines share the [`LinearMap`] interface:
//! - [`dense_eigenvalues`] on an assembled matrix (Schur decomposition);
//! - [`block_power`]: subspace iteration with Rayleigh-Ritz extraction, so a
//!   dominant complex pair is resolved from the small projected matrix;
//! - [`krylov_schur`]: restarted Arnoldi in complex arithmetic, which needs
//!   far fewer operator applications when the top of the spectrum is
//!   clustered.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// A real linear map on `R^dim`.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&mut self, x: &[f64], y: &mut [f64]);
}

/// Result of an iterative eigenvalue computation.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    /// Largest eigenvalue modulus.
    pub modulus: f64,
    /// Eigenvalue attaining it.
    pub value: C64,
    /// Operator applications used.
    pub applications: usize,
    /// Final residual or change, depending on the engine.
    pub residual: f64,
    /// Leading eigenvalue estimates in decreasing modulus.
    pub leading: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    pub tol: f64,
    /// Cap on operator applications.
    pub max_applications: usize,
    pub seed: u64,
    /// Block size for [`block_power`].
    pub block: usize,
    /// Krylov subspace dimension for [`krylov_schur`].
    pub krylov_dim: usize,
}

impl Default for IterOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_applications: 1_000_000,
            seed: 0x5eed,
            block: 8,
            krylov_dim: 40,
        }
    }
}

fn sort_by_modulus(mut v: Vec<C64>) -> Vec<C64> {
    v.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
    v
}

/// All eigenvalues of a dense real matrix, in decreasing modulus.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Eigen("matrix is not square".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    // The shifted QR iteration can stall on the defective zero eigenvalues
    // of autoregressive matrices. Loosening the deflation threshold by a few
    // ulps fixes that; a random orthogonal similarity is the last resort.
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c4e);
    for attempt in 0..6 {
        let a = if attempt < 4 {
            m.clone()
        } else {
            let q = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
                .qr()
                .q();
            q.transpose() * m * &q
        };
        let eps = f64::EPSILON * 4f64.powi(attempt.min(3));
        if let Some(s) = nalgebra::linalg::Schur::try_new(a, eps, 20_000) {
            return Ok(sort_by_modulus(
                s.complex_eigenvalues().iter().copied().collect(),
            ));
        }
    }
    Err(Error::Eigen("Schur iteration did not converge".into()))
}

/// Largest eigenvalue modulus of a dense real matrix.
pub fn dense_spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(dense_eigenvalues(m)?.first().map_or(0.0, |z| z.norm()))
}

/// Assemble the matrix of `op` column by column.
pub fn assemble<M: LinearMap + ?Sized>(op: &mut M) -> DMatrix<f64> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        op.apply(&e, &mut y);
        out.column_mut(i).copy_from_slice(&y);
        e[i] = 0.0;
    }
    out
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Stopping rule on a scalar sequence: the last change is below `tol`, and
/// so is the remaining error extrapolated from the geometric decay of the
/// changes. Must hold on two consecutive steps.
#[derive(Debug, Default)]
struct Stopper {
    prev: Option<f64>,
    prev_delta: Option<f64>,
    streak: usize,
}

impl Stopper {
    fn update(&mut self, est: f64, tol: f64) -> (bool, f64) {
        let delta = self.prev.map_or(f64::INFINITY, |p| (est - p).abs());
        let floor = 64.0 * f64::EPSILON * est.abs().max(1e-300);
        let ok = if delta <= floor {
            true
        } else if delta <= tol {
            let q = match self.prev_delta {
                Some(d) if d > 0.0 && d.is_finite() => (delta / d).min(1.0 - 1e-9),
                _ => 1.0 - 1e-9,
            };
            delta * q / (1.0 - q) <= tol
        } else {
            false
        };
        self.streak = if ok { self.streak + 1 } else { 0 };
        self.prev = Some(est);
        self.prev_delta = Some(delta);
        (self.streak >= 2, delta)
    }
}

/// Orthonormalise the columns of `y` (thin QR). Returns `None` when the
/// block has collapsed to numerical zero.
fn orthonormalise(y: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = y.norm();
    if !(scale > 1e-300) || !scale.is_finite() {
        return None;
    }
    let qr = (y / scale).qr();
    Some(qr.q())
}

/// Subspace iteration with Rayleigh-Ritz: `X <- orth(A X)`, estimating the
/// spectral radius from the eigenvalues of `X^T A X`.
pub fn block_power<M: LinearMap + ?Sized>(op: &mut M, opts: &IterOptions) -> Result<EigenEstimate> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Eigen("empty operator".into()));
    }
    let m = opts.block.max(2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    x = orthonormalise(x).expect("random block is nonzero");
    let mut y = DMatrix::zeros(n, m);
    let mut stop = Stopper::default();
    let mut applications = 0;
    loop {
        for c in 0..m {
            let xc: Vec<f64> = x.column(c).iter().copied().collect();
            let mut yc = vec![0.0; n];
            op.apply(&xc, &mut yc);
            y.column_mut(c).copy_from_slice(&yc);
        }
        applications += m;
        let h = x.transpose() * &y;
        let ritz = dense_eigenvalues(&h)?;
        let top = ritz.first().copied().unwrap_or_default();
        let est = top.norm();
        let (done, delta) = stop.update(est, opts.tol);
        let next = orthonormalise(y.clone());
        if done || next.is_none() {
            let collapsed = next.is_none();
            return Ok(EigenEstimate {
                modulus: if collapsed { 0.0 } else { est },
                value: if collapsed { C64::default() } else { top },
                applications,
                residual: if collapsed { 0.0 } else { delta },
                leading: ritz,
            });
        }
        x = next.unwrap();
        if applications >= opts.max_applications {
            return Err(Error::NonConvergence {
                iterations: applications / m,
                estimate: est,
                residual: delta,
            });
        }
    }
}

fn apply_complex<M: LinearMap + ?Sized>(
    op: &mut M,
    v: &DVector<C64>,
    re: &mut [f64],
    im: &mut [f64],
    out: &mut DVector<C64>,
) {
    let n = v.len();
    let mut xr = vec![0.0; n];
    let mut xi = vec![0.0; n];
    for i in 0..n {
        xr[i] = v[i].re;
        xi[i] = v[i].im;
    }
    op.apply(&xr, re);
    if xi.iter().any(|&t| t != 0.0) {
        op.apply(&xi, im);
    } else {
        im.iter_mut().for_each(|t| *t = 0.0);
    }
    for i in 0..n {
        out[i] = C64::new(re[i], im[i]);
    }
}

/// Swap adjacent diagonal entries `p`, `p+1` of the upper triangular `t`,
/// updating the unitary `q` so that `q t q^H` is unchanged.
fn swap_schur(t: &mut DMatrix<C64>, q: &mut DMatrix<C64>, p: usize) {
    let t11 = t[(p, p)];
    let t22 = t[(p + 1, p + 1)];
    let t12 = t[(p, p + 1)];
    let mut x0 = t12;
    let mut x1 = t22 - t11;
    let norm = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    x0 /= norm;
    x1 /= norm;
    // unitary with first column (x0, x1): an eigenvector for t22
    let g = [[x0, -x1.conj()], [x1, x0.conj()]];
    let n = t.nrows();
    for j in 0..n {
        let a = t[(p, j)];
        let b = t[(p + 1, j)];
        t[(p, j)] = g[0][0].conj() * a + g[1][0].conj() * b;
        t[(p + 1, j)] = g[0][1].conj() * a + g[1][1].conj() * b;
    }
    for i in 0..n {
        let a = t[(i, p)];
        let b = t[(i, p + 1)];
        t[(i, p)] = a * g[0][0] + b * g[1][0];
        t[(i, p + 1)] = a * g[0][1] + b * g[1][1];
    }
    for i in 0..q.nrows() {
        let a = q[(i, p)];
        let b = q[(i, p + 1)];
        q[(i, p)] = a * g[0][0] + b * g[1][0];
        q[(i, p + 1)] = a * g[0][1] + b * g[1][1];
    }
    t[(p + 1, p)] = C64::default();
    t[(p, p)] = t22;
    t[(p + 1, p + 1)] = t11;
}

/// Complex Schur form `s = q t q^H` with diagonal of `t` sorted by
/// decreasing modulus.
fn sorted_schur(s: DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = s.nrows();
    let schur = (0..4)
        .find_map(|i| {
            nalgebra::linalg::Schur::try_new(s.clone(), f64::EPSILON * 4f64.powi(i), 20_000)
        })
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let (mut q, mut t) = schur.unpack();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = C64::default();
        }
    }
    for i in 0..n {
        let mut best = i;
        for j in (i + 1)..n {
            if t[(j, j)].norm() > t[(best, best)].norm() {
                best = j;
            }
        }
        for p in (i..best).rev() {
            swap_schur(&mut t, &mut q, p);
        }
    }
    Ok((q, t))
}

/// Orthogonalise `w` against the first `cols` columns of `v` (two passes of
/// classical Gram-Schmidt), returning the coefficients.
fn orthogonalise(v: &DMatrix<C64>, cols: usize, w: &mut DVector<C64>) -> DVector<C64> {
    let mut h = DVector::zeros(cols);
    for _ in 0..2 {
        let basis = v.columns(0, cols);
        let c = basis.ad_mul(w);
        *w -= basis * &c;
        h += c;
    }
    h
}

/// Krylov-Schur iteration for the largest-modulus eigenvalue.
///
/// Keeps an Arnoldi-like decomposition `A V = V S + v b^T`, restarts by
/// truncating the sorted Schur form of `S` to its leading half, and stops
/// when the top Ritz pair has residual below `tol` and its value has settled.
// `restart` moves `k`, but the Arnoldi loop is left right after.
#[allow(clippy::mut_range_bound)]
pub fn krylov_schur<M: LinearMap + ?Sized>(
    op: &mut M,
    opts: &IterOptions,
) -> Result<EigenEstimate> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Eigen("empty operator".into()));
    }
    let m = opts.krylov_dim.max(4).min(n);
    let keep = (m / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = random_unit(n, &mut rng);

    let mut v: DMatrix<C64> = DMatrix::zeros(n, m + 1);
    for i in 0..n {
        v[(i, 0)] = C64::new(start[i], 0.0);
    }
    let mut s: DMatrix<C64> = DMatrix::zeros(m, m);
    let mut k = 0usize;
    let mut applications = 0usize;
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    let mut w = DVector::zeros(n);
    let mut prev: Option<f64> = None;
    let mut scale = 0.0f64;

    loop {
        // extend the decomposition from k to m columns
        let mut size = m;
        for j in k..m {
            let vj = v.column(j).into_owned();
            apply_complex(op, &vj, &mut re, &mut im, &mut w);
            applications += 1;
            let wnorm = w.norm();
            scale = scale.max(wnorm);
            let h = orthogonalise(&v, j + 1, &mut w);
            for i in 0..=j {
                s[(i, j)] = h[i];
            }
            let beta = w.norm();
            if beta <= 16.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE) || beta == 0.0 {
                // invariant subspace: the projected matrix is exact
                size = j + 1;
                break;
            }
            w /= C64::new(beta, 0.0);
            v.set_column(j + 1, &w);
            if j + 1 < m {
                s[(j + 1, j)] = C64::new(beta, 0.0);
            } else {
                // residual coefficients b = beta e_m
                let mut b = DVector::zeros(m);
                b[m - 1] = C64::new(beta, 0.0);
                let (done, est) =
                    restart(&mut v, &mut s, &b, m, keep, &mut k, &mut prev, opts.tol)?;
                if let Some(est) = est {
                    if done {
                        return Ok(EigenEstimate {
                            applications,
                            ..est
                        });
                    }
                }
                break;
            }
        }
        if size < m {
            let sub = s.view((0, 0), (size, size)).into_owned();
            let (_, t) = sorted_schur(sub)?;
            let leading: Vec<C64> = (0..size).map(|i| t[(i, i)]).collect();
            let top = leading[0];
            return Ok(EigenEstimate {
                modulus: top.norm(),
                value: top,
                applications,
                residual: 0.0,
                leading,
            });
        }
        if applications >= opts.max_applications {
            return Err(Error::NonConvergence {
                iterations: applications,
                estimate: prev.unwrap_or(f64::NAN),
                residual: f64::NAN,
            });
        }
    }
}

/// Truncate the decomposition to the `keep` leading Schur vectors. Returns
/// whether the top Ritz value has converged, with the current estimate.
#[allow(clippy::too_many_arguments)]
fn restart(
    v: &mut DMatrix<C64>,
    s: &mut DMatrix<C64>,
    b: &DVector<C64>,
    m: usize,
    keep: usize,
    k: &mut usize,
    prev: &mut Option<f64>,
    tol: f64,
) -> Result<(bool, Option<EigenEstimate>)> {
    let (q, t) = sorted_schur(s.clone())?;
    // residual row b^T Q
    let bq = q.transpose() * b;
    let top = t[(0, 0)];
    let est = top.norm();
    let res = bq[0].norm();
    let settled = prev.is_some_and(|p| (p - est).abs() <= tol);
    *prev = Some(est);
    let leading: Vec<C64> = (0..m).map(|i| t[(i, i)]).collect();
    let estimate = EigenEstimate {
        modulus: est,
        value: top,
        applications: 0,
        residual: res,
        leading,
    };
    if res <= tol && settled {
        return Ok((true, Some(estimate)));
    }
    // do not split a block of (numerically) equal moduli at the cut
    let mut kk = keep;
    while kk < m - 1
        && (t[(kk, kk)].norm() - t[(kk - 1, kk - 1)].norm()).abs() <= 1e-12 * est.max(1e-300)
    {
        kk += 1;
    }
    let vq = v.columns(0, m) * q.columns(0, kk);
    let resid = v.column(m).into_owned();
    for c in 0..kk {
        v.set_column(c, &vq.column(c));
    }
    v.set_column(kk, &resid);
    s.fill(C64::default());
    for i in 0..kk {
        for j in i..kk {
            s[(i, j)] = t[(i, j)];
        }
    }
    for j in 0..kk {
        s[(kk, j)] = bq[j];
    }
    *k = kk;
    Ok((false, Some(estimate)))
}
