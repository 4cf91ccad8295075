//! Observations, the sparse incidence table and its sufficient statistics.
//!
//! Factors are indexed `0..K` in the API and levels `0..I_k` internally;
//! [`Observation`] and the CSV format use 1-based levels. The table keeps
//! only what the samplers and the rate engine read: cell counts and means,
//! one-way margins `n^(k)`, two-way margins `n^(k,l)` and the weighted level
//! averages of the response.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of data: a level for every factor, a response and a replicate
/// count. A row with weight `w` stands for `w` observations with mean `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// 1-based level per factor.
    pub levels: Vec<usize>,
    pub y: f64,
    pub weight: u64,
}

impl Observation {
    pub fn new(levels: Vec<usize>, y: f64) -> Self {
        Self {
            levels,
            y,
            weight: 1,
        }
    }

    pub fn weighted(levels: Vec<usize>, y: f64, weight: u64) -> Self {
        Self { levels, y, weight }
    }
}

/// Aggregated responses in one cell of the contingency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations of the cell's responses from `mean`.
    pub within_ss: f64,
}

impl CellStats {
    pub fn new(count: u64, mean: f64, within_ss: f64) -> Self {
        Self {
            count,
            mean,
            within_ss,
        }
    }

    /// Pooled mean and sum of squares of two groups.
    pub fn merge(&mut self, other: &CellStats) {
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.within_ss += other.within_ss + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }
}

/// Compressed sparse row matrix of integer counts, stored as `f64` so that
/// products with parameter vectors need no conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCounts {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    counts: Vec<f64>,
}

impl SparseCounts {
    fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(u32, u32, u64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut counts: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, n) in triplets {
            if last == Some((i, j)) {
                *counts.last_mut().unwrap() += n as f64;
                continue;
            }
            last = Some((i, j));
            row_ptr[i as usize + 1] += 1;
            col_idx.push(j);
            counts.push(n as f64);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            counts,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.counts[span])
            .map(|(&j, &n)| (j as usize, n))
    }

    /// Count at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.counts[span.start + pos] as u64,
            Err(_) => 0,
        }
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.counts[span])
            .map(|(&j, &n)| n * x[j as usize])
            .sum()
    }

    /// `out[i] += sum_j n[i, j] * x[j]`.
    pub fn accumulate(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.row_dot(i, x);
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(_, n)| n).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (&j, &n) in self.col_idx.iter().zip(&self.counts) {
            out[j as usize] += n;
        }
        out
    }

    fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (j, n) in self.row(i) {
                triplets.push((j as u32, i as u32, n as u64));
            }
        }
        Self::from_triplets(self.cols, self.rows, triplets)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PairTable {
    /// Rows are levels of the lower-indexed factor.
    forward: SparseCounts,
    backward: SparseCounts,
}

/// Balance class of a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignClass {
    /// Every cell of the full grid carries the same count.
    BalancedCells,
    /// Every level of factor `k` carries `N / I_k` observations.
    BalancedLevels,
    Unbalanced,
}

impl DesignClass {
    pub fn is_balanced_levels(self) -> bool {
        matches!(
            self,
            DesignClass::BalancedCells | DesignClass::BalancedLevels
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DesignClass::BalancedCells => "balanced-cells",
            DesignClass::BalancedLevels => "balanced-levels",
            DesignClass::Unbalanced => "unbalanced",
        }
    }
}

impl std::fmt::Display for DesignClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Precisions `(tau_0, tau_1, ..., tau_K)`: `tau_0` scales the observation
/// noise, `tau_k` is the prior precision of the levels of factor `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precisions(Vec<f64>);

impl Precisions {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidPrecisions(format!(
                "need tau_0 and at least one factor precision, got {} values",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidPrecisions(format!(
                "precisions must be finite and positive, got {bad}"
            )));
        }
        Ok(Self(values))
    }

    /// All `K + 1` precisions equal to `value`.
    pub fn uniform(factors: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; factors + 1])
    }

    pub fn global(&self) -> f64 {
        self.0[0]
    }

    /// Precision of factor `k` (0-based factor index).
    pub fn factor(&self, k: usize) -> f64 {
        self.0[k + 1]
    }

    pub fn set_global(&mut self, tau: f64) {
        self.0[0] = tau;
    }

    pub fn set_factor(&mut self, k: usize, tau: f64) {
        self.0[k + 1] = tau;
    }

    pub fn factors(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Sparse incidence table with precomputed margins and weighted response
/// averages. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceTable {
    levels: Vec<usize>,
    total: u64,
    cell_levels: Vec<u32>,
    cells: Vec<CellStats>,
    level_counts: Vec<Vec<u64>>,
    level_means: Vec<Vec<f64>>,
    grand_mean: f64,
    within_ss: f64,
    pairs: Vec<PairTable>,
    design: DesignClass,
}

/// Aggregate raw rows into an [`IncidenceTable`].
///
/// `levels` gives `I_k` for each factor; every row must carry `K` levels in
/// `1..=I_k`. Rows sharing a level tuple are pooled into one cell.
pub fn ingest_observations(rows: &[Observation], levels: &[usize]) -> Result<IncidenceTable> {
    check_levels(levels)?;
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let k = levels.len();
    let mut cells: HashMap<Vec<u32>, CellStats> = HashMap::new();
    for (row, obs) in rows.iter().enumerate() {
        if obs.levels.len() != k {
            return Err(Error::FactorCount {
                row,
                expected: k,
                found: obs.levels.len(),
            });
        }
        if obs.weight == 0 {
            return Err(Error::InvalidWeight { row });
        }
        if !obs.y.is_finite() {
            return Err(Error::NonFiniteResponse { row });
        }
        let mut key = Vec::with_capacity(k);
        for (factor, (&level, &count)) in obs.levels.iter().zip(levels).enumerate() {
            if level == 0 || level > count {
                return Err(Error::LevelOutOfRange {
                    row,
                    factor,
                    level,
                    levels: count,
                });
            }
            key.push((level - 1) as u32);
        }
        let stats = CellStats::new(obs.weight, obs.y, 0.0);
        cells
            .entry(key)
            .and_modify(|c| c.merge(&stats))
            .or_insert(stats);
    }
    IncidenceTable::build(levels.to_vec(), cells.into_iter().collect())
}

fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one factor is required".into(),
        ));
    }
    if let Some(k) = levels.iter().position(|&i| i == 0 || i > u32::MAX as usize) {
        return Err(Error::InvalidConfig(format!(
            "factor {k} must have between 1 and 2^32-1 levels"
        )));
    }
    Ok(())
}

/// Exact classification of the design from integer counts.
pub fn classify_design(tbl: &IncidenceTable) -> DesignClass {
    classify(&tbl.levels, tbl.total, &tbl.cells, &tbl.level_counts)
}

fn classify(
    levels: &[usize],
    total: u64,
    cells: &[CellStats],
    level_counts: &[Vec<u64>],
) -> DesignClass {
    let grid = levels
        .iter()
        .try_fold(1u128, |acc, &i| acc.checked_mul(i as u128));
    if grid == Some(cells.len() as u128) && cells.windows(2).all(|w| w[0].count == w[1].count) {
        return DesignClass::BalancedCells;
    }
    let balanced_levels = levels
        .iter()
        .zip(level_counts)
        .all(|(&i, counts)| total.is_multiple_of(i as u64) && counts.iter().all(|&c| c == total / i as u64));
    if balanced_levels {
        DesignClass::BalancedLevels
    } else {
        DesignClass::Unbalanced
    }
}

impl IncidenceTable {
    /// Build from pre-aggregated cells (0-based level tuples). Tuples that
    /// repeat are pooled.
    pub fn from_cells(
        levels: Vec<usize>,
        cells: impl IntoIterator<Item = (Vec<u32>, CellStats)>,
    ) -> Result<Self> {
        check_levels(&levels)?;
        let mut pooled: HashMap<Vec<u32>, CellStats> = HashMap::new();
        for (row, (key, stats)) in cells.into_iter().enumerate() {
            if key.len() != levels.len() {
                return Err(Error::FactorCount {
                    row,
                    expected: levels.len(),
                    found: key.len(),
                });
            }
            for (factor, (&l, &i)) in key.iter().zip(&levels).enumerate() {
                if l as usize >= i {
                    return Err(Error::LevelOutOfRange {
                        row,
                        factor,
                        level: l as usize + 1,
                        levels: i,
                    });
                }
            }
            if stats.count == 0 {
                return Err(Error::InvalidWeight { row });
            }
            pooled
                .entry(key)
                .and_modify(|c| c.merge(&stats))
                .or_insert(stats);
        }
        if pooled.is_empty() {
            return Err(Error::EmptyData);
        }
        Self::build(levels, pooled.into_iter().collect())
    }

    fn build(levels: Vec<usize>, mut cells: Vec<(Vec<u32>, CellStats)>) -> Result<Self> {
        cells.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let k = levels.len();
        let mut cell_levels = Vec::with_capacity(cells.len() * k);
        let mut stats = Vec::with_capacity(cells.len());
        for (key, c) in cells {
            cell_levels.extend_from_slice(&key);
            stats.push(c);
        }

        let mut level_counts: Vec<Vec<u64>> = levels.iter().map(|&i| vec![0; i]).collect();
        let mut level_sums: Vec<Vec<f64>> = levels.iter().map(|&i| vec![0.0; i]).collect();
        let mut total = 0u64;
        let mut sum = 0.0;
        let mut within_ss = 0.0;
        for (key, c) in cell_levels.chunks_exact(k).zip(&stats) {
            total += c.count;
            sum += c.count as f64 * c.mean;
            within_ss += c.within_ss;
            for (f, &l) in key.iter().enumerate() {
                level_counts[f][l as usize] += c.count;
                level_sums[f][l as usize] += c.count as f64 * c.mean;
            }
        }
        let level_means = level_sums
            .into_iter()
            .zip(&level_counts)
            .map(|(sums, counts)| {
                sums.into_iter()
                    .zip(counts)
                    .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
                    .collect()
            })
            .collect();

        let mut pairs = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for a in 0..k {
            for b in a + 1..k {
                let triplets = cell_levels
                    .chunks_exact(k)
                    .zip(&stats)
                    .map(|(key, c)| (key[a], key[b], c.count))
                    .collect();
                let forward = SparseCounts::from_triplets(levels[a], levels[b], triplets);
                let backward = forward.transpose();
                pairs.push(PairTable { forward, backward });
            }
        }

        let design = classify(&levels, total, &stats, &level_counts);
        Ok(Self {
            levels,
            total,
            cell_levels,
            cells: stats,
            level_counts,
            level_means,
            grand_mean: sum / total as f64,
            within_ss,
            pairs,
            design,
        })
    }

    /// Number of factors `K`.
    pub fn factors(&self) -> usize {
        self.levels.len()
    }

    /// Level counts `(I_1, ..., I_K)`.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Total observation count `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `p = 1 + sum_k I_k`, the length of the parameter vector.
    pub fn num_params(&self) -> usize {
        1 + self.levels.iter().sum::<usize>()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cell `c` as (0-based level tuple, statistics), in lexicographic order.
    pub fn cell(&self, c: usize) -> (&[u32], &CellStats) {
        let k = self.factors();
        (&self.cell_levels[c * k..(c + 1) * k], &self.cells[c])
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[u32], &CellStats)> + '_ {
        self.cell_levels
            .chunks_exact(self.factors())
            .zip(self.cells.iter())
    }

    /// Count of the cell with the given 0-based tuple.
    pub fn cell_count(&self, key: &[u32]) -> u64 {
        let k = self.factors();
        let n = self.cells.len();
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.cell_levels[mid * k..(mid + 1) * k].cmp(key) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return self.cells[mid].count,
            }
        }
        0
    }

    /// `n^(k)`: observations per level of factor `k`.
    pub fn level_counts(&self, k: usize) -> &[u64] {
        &self.level_counts[k]
    }

    /// Weighted response average per level of factor `k` (0 for empty levels).
    pub fn level_means(&self, k: usize) -> &[f64] {
        &self.level_means[k]
    }

    /// Weighted response average over all observations.
    pub fn grand_mean(&self) -> f64 {
        self.grand_mean
    }

    /// Pooled within-cell sum of squares.
    pub fn within_ss(&self) -> f64 {
        self.within_ss
    }

    /// `n^(k,l)` oriented with rows indexed by levels of `k`.
    ///
    /// Panics if `k == l`.
    pub fn pair(&self, k: usize, l: usize) -> &SparseCounts {
        assert_ne!(k, l, "pair table needs two distinct factors");
        let (a, b) = if k < l { (k, l) } else { (l, k) };
        let idx = a * self.factors() - a * (a + 1) / 2 + (b - a - 1);
        if k < l {
            &self.pairs[idx].forward
        } else {
            &self.pairs[idx].backward
        }
    }

    pub fn design(&self) -> DesignClass {
        self.design
    }

    /// `sum_k I_k sum_{l != k} I_l`, the worst-case work of one sweep.
    pub fn cross_work(&self) -> u128 {
        let total: u128 = self.levels.iter().map(|&i| i as u128).sum();
        self.levels
            .iter()
            .map(|&i| i as u128 * (total - i as u128))
            .sum()
    }

    /// Total nonzeros over all pairwise tables, both orientations.
    pub fn pair_nnz(&self) -> usize {
        self.pairs.iter().map(|p| 2 * p.forward.nnz()).sum()
    }

    /// Marginal table over a subset of factors (0-based indices, in the
    /// order given). Cells that collapse together are pooled.
    pub fn restrict(&self, factors: &[usize]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidConfig("no factors selected".into()));
        }
        let k = self.factors();
        for (pos, &f) in factors.iter().enumerate() {
            if f >= k {
                return Err(Error::InvalidConfig(format!(
                    "factor {} does not exist (table has {k})",
                    f + 1
                )));
            }
            if factors[..pos].contains(&f) {
                return Err(Error::InvalidConfig(format!(
                    "factor {} selected twice",
                    f + 1
                )));
            }
        }
        let levels = factors.iter().map(|&f| self.levels[f]).collect();
        let cells = self
            .cells()
            .map(|(key, c)| (factors.iter().map(|&f| key[f]).collect(), *c));
        Self::from_cells(levels, cells)
    }

    pub fn summary(&self) -> TableSummary {
        TableSummary {
            factors: self.factors(),
            levels: self.levels.clone(),
            observations: self.total,
            cells: self.num_cells(),
            params: self.num_params(),
            design: self.design,
        }
    }

    /// One CSV row per cell: levels (1-based), cell mean, cell count.
    pub fn write_csv<W: Write>(&self, writer: W, factor_names: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = match factor_names {
            Some(names) if names.len() == self.factors() => names.to_vec(),
            _ => (1..=self.factors()).map(|k| format!("f{k}")).collect(),
        };
        header.push("y".into());
        header.push("w".into());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (key, c) in self.cells() {
            record.clear();
            record.extend(key.iter().map(|&l| (l + 1).to_string()));
            record.push(format!("{}", c.mean));
            record.push(c.count.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compact description of a table for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub factors: usize,
    pub levels: Vec<usize>,
    pub observations: u64,
    pub cells: usize,
    pub params: usize,
    pub design: DesignClass,
}

/// How factor columns of a CSV file map to level indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelCoding {
    /// Columns already hold 1-based dense indices; `I_k` is the maximum seen.
    Dense,
    /// Arbitrary labels are sorted (numerically when all parse as integers)
    /// and numbered `1..=I_k`.
    Relabel,
}

/// Parsed CSV data with the level mapping used.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub factor_names: Vec<String>,
    pub levels: Vec<usize>,
    pub observations: Vec<Observation>,
    /// For [`LevelCoding::Relabel`], the original label of each dense level.
    pub labels: Option<Vec<Vec<String>>>,
}

impl CsvData {
    pub fn table(&self) -> Result<IncidenceTable> {
        ingest_observations(&self.observations, &self.levels)
    }
}

/// Read `f1,...,fK,y[,w]` CSV. A trailing column named `w` holds weights.
pub fn read_csv<R: Read>(reader: R, coding: LevelCoding) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let weighted = header.last().is_some_and(|h| h.eq_ignore_ascii_case("w"));
    let value_cols = if weighted { 2 } else { 1 };
    if header.len() < value_cols + 1 {
        return Err(Error::Parse(format!(
            "header must list at least one factor and the response, got {header:?}"
        )));
    }
    let k = header.len() - value_cols;
    let factor_names = header[..k].to_vec();

    let mut raw_levels: Vec<Vec<String>> = Vec::new();
    let mut ys = Vec::new();
    let mut weights = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {row}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        raw_levels.push(record.iter().take(k).map(str::to_string).collect());
        let y: f64 = record[k]
            .parse()
            .map_err(|_| Error::Parse(format!("row {row}: bad response {:?}", &record[k])))?;
        ys.push(y);
        let w: u64 = if weighted {
            record[k + 1]
                .parse()
                .map_err(|_| Error::InvalidWeight { row })?
        } else {
            1
        };
        weights.push(w);
    }
    if raw_levels.is_empty() {
        return Err(Error::EmptyData);
    }

    let (levels, coded, labels) = match coding {
        LevelCoding::Dense => {
            let mut levels = vec![0usize; k];
            let mut coded = Vec::with_capacity(raw_levels.len());
            for (row, fields) in raw_levels.iter().enumerate() {
                let mut idx = Vec::with_capacity(k);
                for (factor, field) in fields.iter().enumerate() {
                    let level: usize = field.parse().map_err(|_| {
                        Error::Parse(format!(
                            "row {row}: factor {} level {field:?} is not a positive integer \
                             (use relabelling for arbitrary labels)",
                            factor + 1
                        ))
                    })?;
                    if level == 0 {
                        return Err(Error::LevelOutOfRange {
                            row,
                            factor,
                            level,
                            levels: levels[factor],
                        });
                    }
                    levels[factor] = levels[factor].max(level);
                    idx.push(level);
                }
                coded.push(idx);
            }
            (levels, coded, None)
        }
        LevelCoding::Relabel => {
            let mut labels = Vec::with_capacity(k);
            let mut maps: Vec<HashMap<&str, usize>> = Vec::with_capacity(k);
            for factor in 0..k {
                let mut distinct: Vec<&str> =
                    raw_levels.iter().map(|r| r[factor].as_str()).collect();
                distinct.sort_unstable();
                distinct.dedup();
                let numeric: Option<Vec<i64>> =
                    distinct.iter().map(|s| s.parse::<i64>().ok()).collect();
                if let Some(nums) = numeric {
                    let mut order: Vec<usize> = (0..distinct.len()).collect();
                    order.sort_by_key(|&i| nums[i]);
                    distinct = order.into_iter().map(|i| distinct[i]).collect();
                }
                maps.push(
                    distinct
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| (s, i + 1))
                        .collect(),
                );
                labels.push(distinct.iter().map(|s| s.to_string()).collect::<Vec<_>>());
            }
            let coded = raw_levels
                .iter()
                .map(|fields| {
                    fields
                        .iter()
                        .zip(&maps)
                        .map(|(f, m)| m[f.as_str()])
                        .collect()
                })
                .collect();
            let levels = labels.iter().map(Vec::len).collect();
            (levels, coded, Some(labels))
        }
    };

    let observations = coded
        .into_iter()
        .zip(ys)
        .zip(weights)
        .map(|((levels, y), weight)| Observation { levels, y, weight })
        .collect();
    Ok(CsvData {
        factor_names,
        levels,
        observations,
        labels,
    })
}

pub fn read_csv_path(path: impl AsRef<Path>, coding: LevelCoding) -> Result<CsvData> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), coding)
}

/// Labels of the dense levels keyed by factor name, for emitting next to
/// relabelled data.
pub fn label_map(data: &CsvData) -> Option<BTreeMap<String, Vec<String>>> {
    data.labels.as_ref().map(|labels| {
        data.factor_names
            .iter()
            .cloned()
            .zip(labels.iter().cloned())
            .collect()
    })
}
