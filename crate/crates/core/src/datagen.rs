//! Synthetic designs: missing-at-random grids, balanced grids, unions of
//! permutations and disconnected communities.
//!
//! Every generator is deterministic given its seed. Designs carry a zero
//! response unless a response is simulated from the model with
//! [`simulate_response`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CellStats, IncidenceTable, Precisions, TableSummary};
use crate::samplers::ModelState;

/// Refuse to materialise grids with more cells than this.
const MAX_CELLS: u128 = 200_000_000;

/// What to do when a random design comes out empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyPolicy {
    Error,
    /// Draw again from the same stream, up to `max_attempts` designs.
    Regenerate {
        max_attempts: usize,
    },
}

impl Default for EmptyPolicy {
    fn default() -> Self {
        EmptyPolicy::Regenerate { max_attempts: 100 }
    }
}

/// Response attached to generated designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Response {
    #[default]
    Zero,
    /// Draw effects and observations from the model with these precisions.
    Simulate { tau: Precisions, a0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct McarOptions {
    pub response: Response,
    pub on_empty: EmptyPolicy,
}

fn check_positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn check_grid(levels: &[usize]) -> Result<()> {
    let cells = levels
        .iter()
        .fold(1u128, |acc, &i| acc.saturating_mul(i as u128));
    if cells > MAX_CELLS {
        return Err(Error::InvalidConfig(format!(
            "grid with {cells} cells is too large to generate"
        )));
    }
    Ok(())
}

fn zero_cell(count: u64) -> CellStats {
    CellStats::new(count, 0.0, 0.0)
}

/// Two-factor design where each of the `i1 x i2` cells holds one observation
/// with probability `q`, independently.
pub fn gen_mcar(
    i1: usize,
    i2: usize,
    q: f64,
    seed: u64,
    opts: &McarOptions,
) -> Result<IncidenceTable> {
    check_positive("I1", i1)?;
    check_positive("I2", i2)?;
    check_grid(&[i1, i2])?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = match opts.on_empty {
        EmptyPolicy::Error => 1,
        EmptyPolicy::Regenerate { max_attempts } => max_attempts.max(1),
    };
    let mut cells = Vec::new();
    for _ in 0..attempts {
        cells.clear();
        for a in 0..i1 as u32 {
            for b in 0..i2 as u32 {
                if q >= 1.0 || rng.random::<f64>() < q {
                    cells.push((vec![a, b], zero_cell(1)));
                }
            }
        }
        if !cells.is_empty() {
            break;
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyData);
    }
    let tbl = IncidenceTable::from_cells(vec![i1, i2], cells)?;
    match &opts.response {
        Response::Zero => Ok(tbl),
        Response::Simulate { tau, a0 } => {
            Ok(simulate_response(&tbl, tau, *a0, seed.wrapping_add(1))?.table)
        }
    }
}

/// Full grid with `n_per_cell` observations in every cell.
pub fn gen_balanced_cells(levels: &[usize], n_per_cell: u64) -> Result<IncidenceTable> {
    if levels.is_empty() {
        return Err(Error::InvalidConfig("need at least one factor".into()));
    }
    for (k, &i) in levels.iter().enumerate() {
        check_positive(&format!("I{}", k + 1), i)?;
    }
    if n_per_cell == 0 {
        return Err(Error::InvalidConfig("n_per_cell must be at least 1".into()));
    }
    check_grid(levels)?;
    let total: usize = levels.iter().product();
    let mut key = vec![0u32; levels.len()];
    let mut cells = Vec::with_capacity(total);
    for _ in 0..total {
        cells.push((key.clone(), zero_cell(n_per_cell)));
        for (d, &i) in key.iter_mut().zip(levels).rev() {
            *d += 1;
            if (*d as usize) < i {
                break;
            }
            *d = 0;
        }
    }
    IncidenceTable::from_cells(levels.to_vec(), cells)
}

/// Number of uniform draws tried before a simple-design permutation falls
/// back to a random perfect matching.
const REJECTION_TRIES: usize = 64;

/// Union of `m` random `i x i` permutation matrices, so every level of both
/// factors has exactly `m` observations.
///
/// Permutations are independent and uniform; overlapping cells accumulate
/// counts. With `simple`, every cell holds at most one observation: each
/// permutation is drawn uniformly among those avoiding the cells already
/// used (by rejection), or, when rejection keeps failing, taken as a random
/// perfect matching of the unused cells, which always exists because they
/// form a regular bipartite graph.
pub fn gen_balanced_levels_k2(
    i: usize,
    m: usize,
    seed: u64,
    simple: bool,
) -> Result<IncidenceTable> {
    check_positive("I", i)?;
    check_positive("m", m)?;
    if m > i {
        return Err(Error::InvalidConfig(format!(
            "multiplicity {m} exceeds the number of levels {i}"
        )));
    }
    check_grid(&[i, i])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = vec![false; if simple { i * i } else { 0 }];
    let mut cells = Vec::with_capacity(i * m);
    let mut perm: Vec<usize> = (0..i).collect();
    for _ in 0..m {
        perm.shuffle(&mut rng);
        if simple {
            let mut ok = (0..i).all(|r| !used[r * i + perm[r]]);
            for _ in 1..REJECTION_TRIES {
                if ok {
                    break;
                }
                perm.shuffle(&mut rng);
                ok = (0..i).all(|r| !used[r * i + perm[r]]);
            }
            if !ok {
                perm = random_matching(i, &used, &mut rng);
            }
            for r in 0..i {
                used[r * i + perm[r]] = true;
            }
        }
        for (r, &c) in perm.iter().enumerate() {
            cells.push((vec![r as u32, c as u32], zero_cell(1)));
        }
    }
    IncidenceTable::from_cells(vec![i, i], cells)
}

/// Perfect matching of rows to columns over the cells not in `used`, found
/// by augmenting paths with randomly ordered rows and adjacency lists.
fn random_matching(n: usize, used: &[bool], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|r| (0..n).filter(|&c| !used[r * n + c]).collect())
        .collect();
    for a in adj.iter_mut() {
        a.shuffle(rng);
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    let mut col_owner = vec![usize::MAX; n];
    let mut visited = vec![0usize; n];
    for (stamp, &r) in rows.iter().enumerate() {
        let found = augment(r, &adj, &mut col_owner, &mut visited, stamp + 1);
        assert!(found, "regular bipartite graph has a perfect matching");
    }
    let mut perm = vec![0; n];
    for (c, &r) in col_owner.iter().enumerate() {
        perm[r] = c;
    }
    perm
}

fn augment(
    start: usize,
    adj: &[Vec<usize>],
    col_owner: &mut [usize],
    visited: &mut [usize],
    stamp: usize,
) -> bool {
    // iterative depth-first search; the stack holds (row, next edge, column taken)
    let mut stack: Vec<(usize, usize, usize)> = vec![(start, 0, usize::MAX)];
    while let Some(&mut (row, ref mut edge, _)) = stack.last_mut() {
        if *edge == adj[row].len() {
            stack.pop();
            continue;
        }
        let c = adj[row][*edge];
        *edge += 1;
        if visited[c] == stamp {
            continue;
        }
        visited[c] = stamp;
        stack.last_mut().unwrap().2 = c;
        let owner = col_owner[c];
        if owner == usize::MAX {
            for &(r, _, col) in stack.iter().rev() {
                col_owner[col] = r;
            }
            return true;
        }
        stack.push((owner, 0, usize::MAX));
    }
    false
}

/// `communities` diagonal blocks, each a full `i x i` grid with one
/// observation per cell.
pub fn gen_disconnected(i: usize, communities: usize) -> Result<IncidenceTable> {
    check_positive("I", i)?;
    check_positive("communities", communities)?;
    let n = i * communities;
    check_grid(&[n, i])?;
    let mut cells = Vec::with_capacity(n * i);
    for c in 0..communities {
        for a in 0..i {
            for b in 0..i {
                cells.push((vec![(c * i + a) as u32, (c * i + b) as u32], zero_cell(1)));
            }
        }
    }
    IncidenceTable::from_cells(vec![n, n], cells)
}

/// Cartesian product of designs: cells are concatenated level tuples with
/// multiplied counts. Products of balanced-levels designs are balanced
/// levels. The response is zero.
pub fn product_design(parts: &[&IncidenceTable]) -> Result<IncidenceTable> {
    if parts.is_empty() {
        return Err(Error::InvalidConfig("need at least one design".into()));
    }
    let size = parts
        .iter()
        .fold(1u128, |acc, t| acc.saturating_mul(t.num_cells() as u128));
    if size > MAX_CELLS {
        return Err(Error::InvalidConfig(format!(
            "product with {size} cells is too large to generate"
        )));
    }
    let levels: Vec<usize> = parts
        .iter()
        .flat_map(|t| t.levels().iter().copied())
        .collect();
    let mut cells: Vec<(Vec<u32>, u64)> = vec![(Vec::new(), 1)];
    for part in parts {
        let mut next = Vec::with_capacity(cells.len() * part.num_cells());
        for (key, count) in &cells {
            for (k2, c) in part.cells() {
                let mut joined = key.clone();
                joined.extend_from_slice(k2);
                next.push((joined, count * c.count));
            }
        }
        cells = next;
    }
    IncidenceTable::from_cells(levels, cells.into_iter().map(|(k, n)| (k, zero_cell(n))))
}

/// A design with a response drawn from the model, and the effects used.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub table: IncidenceTable,
    pub truth: ModelState,
}

/// Draw `a^(k)_j ~ N(0, 1/tau_k)` and, for each cell of `tbl`, sufficient
/// statistics of `n` observations `y ~ N(a0 + sum_k a^(k), 1/tau_0)`.
pub fn simulate_response(
    tbl: &IncidenceTable,
    tau: &Precisions,
    a0: f64,
    seed: u64,
) -> Result<Simulated> {
    if tau.factors() != tbl.factors() {
        return Err(Error::InvalidPrecisions(format!(
            "table has {} factors but {} factor precisions were given",
            tbl.factors(),
            tau.factors()
        )));
    }
    if !a0.is_finite() {
        return Err(Error::InvalidConfig("a0 must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<Vec<f64>> = (0..tbl.factors())
        .map(|k| {
            let sd = tau.factor(k).sqrt().recip();
            (0..tbl.levels()[k])
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let tau0 = tau.global();
    let mut cells = Vec::with_capacity(tbl.num_cells());
    for (key, c) in tbl.cells() {
        let fit = a0
            + key
                .iter()
                .enumerate()
                .map(|(k, &l)| factors[k][l as usize])
                .sum::<f64>();
        let n = c.count as f64;
        let mean = fit + (n * tau0).sqrt().recip() * rng.sample::<f64, _>(StandardNormal);
        let within = if c.count > 1 {
            let g = Gamma::new((n - 1.0) / 2.0, 2.0 / tau0)
                .map_err(|e| Error::InvalidPrecisions(e.to_string()))?;
            rng.sample(g)
        } else {
            0.0
        };
        cells.push((key.to_vec(), CellStats::new(c.count, mean, within)));
    }
    let table = IncidenceTable::from_cells(tbl.levels().to_vec(), cells)?;
    let truth = ModelState::from_parts(a0, factors, tau.clone())?;
    Ok(Simulated { table, truth })
}

/// Generator name and parameters, enough to rebuild the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum DesignSpec {
    Mcar {
        levels: [usize; 2],
        q: f64,
        seed: u64,
        #[serde(default)]
        options: McarOptions,
    },
    BalancedCells {
        levels: Vec<usize>,
        n_per_cell: u64,
    },
    BalancedLevels {
        levels: usize,
        multiplicity: usize,
        seed: u64,
        simple: bool,
    },
    Disconnected {
        levels_per_community: usize,
        communities: usize,
    },
}

impl DesignSpec {
    pub fn generate(&self) -> Result<IncidenceTable> {
        match self {
            DesignSpec::Mcar {
                levels,
                q,
                seed,
                options,
            } => gen_mcar(levels[0], levels[1], *q, *seed, options),
            DesignSpec::BalancedCells { levels, n_per_cell } => {
                gen_balanced_cells(levels, *n_per_cell)
            }
            DesignSpec::BalancedLevels {
                levels,
                multiplicity,
                seed,
                simple,
            } => gen_balanced_levels_k2(*levels, *multiplicity, *seed, *simple),
            DesignSpec::Disconnected {
                levels_per_community,
                communities,
            } => gen_disconnected(*levels_per_community, *communities),
        }
    }

    pub fn metadata(&self, tbl: &IncidenceTable) -> DesignMetadata {
        DesignMetadata {
            spec: self.clone(),
            summary: tbl.summary(),
        }
    }
}

/// JSON sidecar written next to generated CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetadata {
    #[serde(flatten)]
    pub spec: DesignSpec,
    pub summary: TableSummary,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignClass;

    #[test]
    fn mcar_full_probability_is_a_full_grid() {
        let t = gen_mcar(4, 5, 1.0, 3, &McarOptions::default()).unwrap();
        assert_eq!(t.num_cells(), 20);
        assert_eq!(t.design(), DesignClass::BalancedCells);
    }

    #[test]
    fn mcar_is_deterministic_and_binomial() {
        let o = McarOptions::default();
        let a = gen_mcar(50, 50, 0.1, 7, &o).unwrap();
        let b = gen_mcar(50, 50, 0.1, 7, &o).unwrap();
        assert_eq!(a, b);
        let n = a.total() as f64;
        let sd = (2500.0f64 * 0.1 * 0.9).sqrt();
        assert!((n - 250.0).abs() < 4.0 * sd, "{n}");
        assert_ne!(a, gen_mcar(50, 50, 0.1, 8, &o).unwrap());
    }

    #[test]
    fn mcar_empty_policy() {
        let strict = McarOptions {
            on_empty: EmptyPolicy::Error,
            ..McarOptions::default()
        };
        assert!(matches!(
            gen_mcar(1, 1, 1e-12, 0, &strict),
            Err(Error::EmptyData)
        ));
        assert!(gen_mcar(2, 2, 0.0, 0, &strict).is_err());
        let t = gen_mcar(3, 3, 0.05, 1, &McarOptions::default()).unwrap();
        assert!(t.total() > 0);
    }

    #[test]
    fn balanced_cells_counts() {
        let t = gen_balanced_cells(&[3, 4, 2], 2).unwrap();
        assert_eq!(t.total(), 48);
        assert_eq!(t.design(), DesignClass::BalancedCells);
        for k in 0..3 {
            let want = 48 / t.levels()[k] as u64;
            assert!(t.level_counts(k).iter().all(|&c| c == want));
        }
        assert_eq!(gen_balanced_cells(&[2, 2], 1).unwrap().total(), 4);
        assert!(gen_balanced_cells(&[2, 2], 0).is_err());
    }

    #[test]
    fn permutation_unions_have_balanced_levels() {
        for simple in [false, true] {
            for (i, m) in [(6, 2), (10, 3), (30, 20), (7, 7)] {
                let t = gen_balanced_levels_k2(i, m, 11, simple).unwrap();
                assert_eq!(t.total(), (i * m) as u64);
                for k in 0..2 {
                    assert!(t.level_counts(k).iter().all(|&c| c == m as u64));
                }
                if simple {
                    assert!(t.cells().all(|(_, c)| c.count == 1));
                    assert_eq!(t.num_cells(), i * m);
                }
            }
        }
        let full = gen_balanced_levels_k2(5, 5, 2, true).unwrap();
        assert_eq!(full.design(), DesignClass::BalancedCells);
        assert_eq!(
            gen_balanced_levels_k2(6, 2, 4, true).unwrap().design(),
            DesignClass::BalancedLevels
        );
        assert!(gen_balanced_levels_k2(4, 5, 0, false).is_err());
    }

    #[test]
    fn matching_avoids_used_cells() {
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut used = vec![false; n * n];
        for r in 0..n {
            for d in 0..5 {
                used[r * n + (r + d) % n] = true;
            }
        }
        let perm = random_matching(n, &used, &mut rng);
        let mut seen = vec![false; n];
        for (r, &c) in perm.iter().enumerate() {
            assert!(!used[r * n + c]);
            assert!(!std::mem::replace(&mut seen[c], true));
        }
    }

    #[test]
    fn disconnected_blocks() {
        let t = gen_disconnected(3, 2).unwrap();
        assert_eq!(t.total(), 18);
        assert_eq!(t.levels(), &[6, 6]);
        assert_eq!(t.cell_count(&[0, 3]), 0);
        assert_eq!(
            gen_disconnected(3, 1).unwrap().design(),
            DesignClass::BalancedCells
        );
    }

    #[test]
    fn products_keep_balanced_levels() {
        let a = gen_balanced_levels_k2(6, 2, 1, true).unwrap();
        let b = gen_balanced_cells(&[3], 2).unwrap();
        let p = product_design(&[&a, &b]).unwrap();
        assert_eq!(p.levels(), &[6, 6, 3]);
        assert_eq!(p.total(), 12 * 6);
        assert_eq!(p.design(), DesignClass::BalancedLevels);
    }

    #[test]
    fn simulated_response_is_reproducible() {
        let t = gen_balanced_cells(&[3, 3], 4).unwrap();
        let tau = Precisions::new(vec![2.0, 1.0, 0.5]).unwrap();
        let a = simulate_response(&t, &tau, 1.5, 9).unwrap();
        let b = simulate_response(&t, &tau, 1.5, 9).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.truth.a0(), 1.5);
        assert!(a.table.within_ss() > 0.0);
        assert_eq!(a.table.total(), t.total());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = DesignSpec::BalancedLevels {
            levels: 6,
            multiplicity: 2,
            seed: 3,
            simple: true,
        };
        let tbl = spec.generate().unwrap();
        let json = serde_json::to_string(&spec.metadata(&tbl)).unwrap();
        let back: DesignMetadata = serde_json::from_str(&json).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(back.spec.generate().unwrap(), tbl);
    }
}
