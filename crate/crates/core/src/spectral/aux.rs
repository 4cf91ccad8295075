//! The auxiliary walk on pairs of levels of a two-factor design.
//!
//! The walk alternates `i2 | i1` and `i1 | i2` draws with stationary law
//! `n[i1, i2] / N`. Its second largest eigenvalue modulus `rho_aux` governs
//! the residual chain of both samplers on balanced-levels two-factor designs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{IncidenceTable, SparseCounts};

use super::eigen::{self, IterOptions, LinearMap};

/// Row-stochastic sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowStochastic {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl RowStochastic {
    fn from_counts(counts: &SparseCounts) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..counts.rows() {
            let total: f64 = counts.row(i).map(|(_, v)| v).sum();
            for (j, v) in counts.row(i) {
                indices.push(j);
                values.push(v / total);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: counts.rows(),
            cols: counts.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Row sums; 1 for every level with observations, 0 for empty levels.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Transition kernels of the two half-steps and the stationary law.
///
/// Levels without observations have empty rows and carry no stationary
/// mass; the walk never visits them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxChain {
    /// `I1 x I2`, kernel of `i2 | i1`.
    pub p1: RowStochastic,
    /// `I2 x I1`, kernel of `i1 | i2`.
    pub p2: RowStochastic,
    /// `(i1, i2, n[i1, i2] / N)` over observed cells, 0-based.
    pub stationary: Vec<(usize, usize, f64)>,
}

impl AuxChain {
    pub fn new(tbl: &IncidenceTable) -> Result<Self> {
        if tbl.factors() != 2 {
            return Err(Error::UnsupportedFactorCount(tbl.factors()));
        }
        let n = tbl.total() as f64;
        let stationary = tbl
            .cells()
            .map(|(key, c)| (key[0] as usize, key[1] as usize, c.count as f64 / n))
            .collect();
        Ok(Self {
            p1: RowStochastic::from_counts(tbl.pair(0, 1)),
            p2: RowStochastic::from_counts(tbl.pair(1, 0)),
            stationary,
        })
    }

    /// Dense `P1 P2`, the kernel of one full step of the walk on `i1`.
    pub fn transition_dense(&self) -> DMatrix<f64> {
        self.p1.to_dense() * self.p2.to_dense()
    }
}

/// Whether the bipartite level graph restricted to observed levels is
/// connected.
pub fn is_connected(tbl: &IncidenceTable) -> bool {
    let i1 = tbl.levels()[0];
    let i2 = tbl.levels()[1];
    let mut parent: Vec<usize> = (0..i1 + i2).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (key, _) in tbl.cells() {
        let a = find(&mut parent, key[0] as usize);
        let b = find(&mut parent, i1 + key[1] as usize);
        if a != b {
            parent[a] = b;
        }
    }
    let observed = (0..i1).filter(|&i| tbl.level_counts(0)[i] > 0).chain(
        (0..i2)
            .filter(|&j| tbl.level_counts(1)[j] > 0)
            .map(|j| i1 + j),
    );
    let mut root = None;
    for v in observed {
        let r = find(&mut parent, v);
        match root {
            None => root = Some(r),
            Some(r0) if r0 != r => return false,
            _ => {}
        }
    }
    true
}

/// `D^{-1/2} N_ab D_b^{-1} N_ba D^{-1/2}` on the levels of one factor, with
/// the stationary direction projected out. It is similar to the walk's
/// kernel on that factor, so its spectral radius is `rho_aux`.
struct Deflated<'a> {
    forward: &'a SparseCounts,
    backward: &'a SparseCounts,
    inv_sqrt: Vec<f64>,
    inv_other: Vec<f64>,
    top: Vec<f64>,
    buf: Vec<f64>,
    mid: Vec<f64>,
}

impl<'a> Deflated<'a> {
    fn new(tbl: &'a IncidenceTable, side: usize) -> Self {
        let other = 1 - side;
        let n = tbl.total() as f64;
        let counts = tbl.level_counts(side);
        let inv_sqrt = counts
            .iter()
            .map(|&c| {
                if c > 0 {
                    (c as f64).sqrt().recip()
                } else {
                    0.0
                }
            })
            .collect();
        let inv_other = tbl
            .level_counts(other)
            .iter()
            .map(|&c| if c > 0 { (c as f64).recip() } else { 0.0 })
            .collect();
        let top = counts.iter().map(|&c| (c as f64 / n).sqrt()).collect();
        Self {
            forward: tbl.pair(side, other),
            backward: tbl.pair(other, side),
            inv_sqrt,
            inv_other,
            top,
            buf: vec![0.0; counts.len()],
            mid: vec![0.0; tbl.levels()[other]],
        }
    }
}

impl LinearMap for Deflated<'_> {
    fn dim(&self) -> usize {
        self.inv_sqrt.len()
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        for (b, (xi, s)) in self.buf.iter_mut().zip(x.iter().zip(&self.inv_sqrt)) {
            *b = xi * s;
        }
        self.mid.fill(0.0);
        self.backward.accumulate(&self.buf, &mut self.mid);
        for (m, w) in self.mid.iter_mut().zip(&self.inv_other) {
            *m *= w;
        }
        y.fill(0.0);
        self.forward.accumulate(&self.mid, y);
        let proj: f64 = self.top.iter().zip(x).map(|(u, v)| u * v).sum();
        for ((yi, s), u) in y.iter_mut().zip(&self.inv_sqrt).zip(&self.top) {
            *yi = *yi * s - u * proj;
        }
    }
}

/// Largest size for which the symmetric deflated operator is solved densely.
const DENSE_AUX_LIMIT: usize = 400;

/// `rho_aux` and the walk's kernels. Disconnected designs give exactly 1.
pub fn aux_rate(tbl: &IncidenceTable) -> Result<(f64, AuxChain)> {
    let chain = AuxChain::new(tbl)?;
    Ok((aux_rate_value(tbl)?, chain))
}

pub(crate) fn aux_rate_value(tbl: &IncidenceTable) -> Result<f64> {
    if tbl.factors() != 2 {
        return Err(Error::UnsupportedFactorCount(tbl.factors()));
    }
    if !is_connected(tbl) {
        return Ok(1.0);
    }
    // nonzero spectra of P1 P2 and P2 P1 coincide; use the smaller side
    let side = if tbl.levels()[0] <= tbl.levels()[1] {
        0
    } else {
        1
    };
    let mut op = Deflated::new(tbl, side);
    let rho = if op.dim() <= DENSE_AUX_LIMIT {
        let m = eigen::assemble(&mut op);
        let sym = (&m + m.transpose()) * 0.5;
        SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    } else {
        let opts = IterOptions {
            tol: 1e-13,
            ..IterOptions::default()
        };
        eigen::krylov_schur(&mut op, &opts)?.modulus
    };
    Ok(rho.clamp(0.0, 1.0))
}
