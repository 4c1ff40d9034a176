//! Local models on a uniform grid.
//!
//! Each source sends one of `k` equally likely symbols, so a strategy is
//! three `k x k` tables and the distribution is a count over the `k^3`
//! cells of the cube `(alpha, beta, gamma)`. Everything here is exact
//! integer arithmetic; floats appear only in reported summaries.
//!
//! The searches corroborate the no-go result for Finner-saturating OPI
//! models at fixed grid sizes. They are finite checks, not a proof.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::opi::TriangleDistribution;

/// Largest grid for which a strategy index fits in a `u128`.
pub const MAX_INDEXED_K: usize = 4;
/// Default number of strategies a search may evaluate.
pub const DEFAULT_BUDGET: u64 = 1 << 32;
const CHUNK: u128 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("grid size must be at least 1, got {0}")]
    EmptyGrid(usize),
    #[error("table {table} has {len} entries, expected {expected}")]
    TableShape { table: usize, len: usize, expected: usize },
    #[error("table {table} holds output {value}, outputs are 0..=3")]
    InvalidOutput { table: usize, value: u8 },
    #[error("exhaustive enumeration needs k <= {MAX_INDEXED_K}, got {0}")]
    TooLarge(usize),
    #[error("search budget exhausted after {} strategies", .0.next_index)]
    BudgetExceeded(Box<SearchCheckpoint>),
}

/// Three lookup tables: `s_A` indexed by `(beta, gamma)`, `s_B` by
/// `(alpha, gamma)`, `s_C` by `(alpha, beta)`, each row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridStrategy {
    pub k: usize,
    pub tables: [Vec<u8>; 3],
}

impl GridStrategy {
    pub fn new(k: usize, tables: [Vec<u8>; 3]) -> Result<Self, LocalError> {
        if k == 0 {
            return Err(LocalError::EmptyGrid(k));
        }
        for (table, t) in tables.iter().enumerate() {
            if t.len() != k * k {
                return Err(LocalError::TableShape { table, len: t.len(), expected: k * k });
            }
            if let Some(&value) = t.iter().find(|&&v| v > 3) {
                return Err(LocalError::InvalidOutput { table, value });
            }
        }
        Ok(Self { k, tables })
    }

    pub fn constant(k: usize, output: u8) -> Result<Self, LocalError> {
        Self::new(k, [vec![output; k * k], vec![output; k * k], vec![output; k * k]])
    }

    /// `a = 2 beta + gamma`, `b = 2 gamma + alpha`, `c = 2 alpha + beta` on a
    /// two-symbol grid: uniform marginals and `p_000 = p_333 = 1/8`, so it
    /// saturates Finner without being OPI.
    pub fn saturating_witness() -> Self {
        let t = vec![0, 1, 2, 3];
        // s_B(alpha, gamma) = 2 gamma + alpha
        let b = vec![0, 2, 1, 3];
        Self { k: 2, tables: [t.clone(), b, t] }
    }

    /// Strategy number `index` in the enumeration order: two bits per cell,
    /// `s_A` cells first, least significant first.
    pub fn from_index(k: usize, index: u128) -> Self {
        let cells = k * k;
        let mut tables = [vec![0u8; cells], vec![0u8; cells], vec![0u8; cells]];
        let mut rest = index;
        for t in tables.iter_mut() {
            for v in t.iter_mut() {
                *v = (rest & 3) as u8;
                rest >>= 2;
            }
        }
        Self { k, tables }
    }

    /// Outputs of the three parties in cell `(alpha, beta, gamma)`.
    pub fn outputs(&self, alpha: usize, beta: usize, gamma: usize) -> [u8; 3] {
        let k = self.k;
        [self.tables[0][beta * k + gamma], self.tables[1][alpha * k + gamma], self.tables[2][alpha * k + beta]]
    }

    /// Applies `perm` to every output of every table.
    pub fn relabel_outputs(&self, perm: [u8; 4]) -> Self {
        let tables = self.tables.clone().map(|t| t.into_iter().map(|v| perm[v as usize]).collect());
        Self { k: self.k, tables }
    }

    /// Renames the symbols of source `axis` (0 = alpha, 1 = beta,
    /// 2 = gamma) by `perm`.
    pub fn relabel_source(&self, axis: usize, perm: &[usize]) -> Self {
        let k = self.k;
        let mut out = self.clone();
        // (table, whether the axis is that table's row index)
        let uses: [(usize, bool); 2] = match axis {
            0 => [(1, true), (2, true)],
            1 => [(0, true), (2, false)],
            _ => [(0, false), (1, false)],
        };
        for (t, row) in uses {
            for i in 0..k {
                for j in 0..k {
                    let (ni, nj) = if row { (perm[i], j) } else { (i, perm[j]) };
                    out.tables[t][ni * k + nj] = self.tables[t][i * k + j];
                }
            }
        }
        out
    }

    /// Short stable identifier: the first 16 hex digits of a SHA-256 over
    /// `k` and the tables.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        for t in &self.tables {
            h.update(t);
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for GridStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row =
            |t: &Vec<u8>| t.chunks(self.k).map(|r| r.iter().map(u8::to_string).collect::<String>()).collect::<Vec<_>>().join("/");
        write!(f, "k={} A={} B={} C={}", self.k, row(&self.tables[0]), row(&self.tables[1]), row(&self.tables[2]))
    }
}

/// Cell counts of every outcome; `p_abc = counts[a][b][c] / k^3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridDistribution {
    pub k: usize,
    pub counts: [[[u32; 4]; 4]; 4],
}

/// Equality pattern of an outcome: all equal, exactly two equal, distinct.
fn outcome_class(a: usize, b: usize, c: usize) -> usize {
    if a == b && b == c {
        0
    } else if a == b || b == c || a == c {
        1
    } else {
        2
    }
}

const CLASS_SIZE: [u64; 3] = [4, 36, 24];

impl GridDistribution {
    pub fn cells(&self) -> u64 {
        (self.k as u64).pow(3)
    }

    /// Per-party output counts `[A, B, C][output]`.
    pub fn marginal_counts(&self) -> [[u64; 4]; 3] {
        let mut m = [[0u64; 4]; 3];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let v = u64::from(self.counts[a][b][c]);
                    m[0][a] += v;
                    m[1][b] += v;
                    m[2][c] += v;
                }
            }
        }
        m
    }

    pub fn has_uniform_marginals(&self) -> bool {
        let quarter = self.cells();
        self.marginal_counts().iter().flatten().all(|&m| 4 * m == quarter)
    }

    /// `p_abc <= sqrt(p(a) p(b) p(c))` for every outcome, checked exactly as
    /// `n_abc^2 k^3 <= m_a m_b m_c`.
    pub fn finner_holds(&self) -> bool {
        let m = self.marginal_counts();
        let cube = u128::from(self.cells());
        (0..64).all(|x| {
            let (a, b, c) = (x >> 4, (x >> 2) & 3, x & 3);
            let n = u128::from(self.counts[a][b][c]);
            n * n * cube <= u128::from(m[0][a]) * u128::from(m[1][b]) * u128::from(m[2][c])
        })
    }

    /// Smallest `sqrt(p(a) p(b) p(c)) - p_abc`.
    pub fn finner_margin(&self) -> f64 {
        let m = self.marginal_counts();
        let cube = self.cells() as f64;
        let mut margin = f64::INFINITY;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let root = ((m[0][a] * m[1][b] * m[2][c]) as f64).sqrt() / cube.powf(1.5);
                    margin = margin.min(root - f64::from(self.counts[a][b][c]) / cube);
                }
            }
        }
        margin
    }

    /// Uniform marginals and some outcome at exactly `1/8`, the value
    /// `sqrt(1/4^3)` that meets the Finner bound.
    pub fn saturates_finner(&self) -> bool {
        let eighth = self.cells();
        self.has_uniform_marginals() && self.counts.iter().flatten().flatten().any(|&n| 8 * u64::from(n) == eighth)
    }

    /// Class totals `[all equal, two equal, distinct]`.
    fn class_totals(&self) -> [u64; 3] {
        let mut t = [0u64; 3];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    t[outcome_class(a, b, c)] += u64::from(self.counts[a][b][c]);
                }
            }
        }
        t
    }

    /// Invariance under party exchange and output relabeling, exactly.
    pub fn is_opi(&self) -> bool {
        let t = self.class_totals();
        (0..64).all(|x| {
            let (a, b, c) = (x >> 4, (x >> 2) & 3, x & 3);
            let cl = outcome_class(a, b, c);
            u64::from(self.counts[a][b][c]) * CLASS_SIZE[cl] == t[cl]
        })
    }

    pub fn to_triangle(&self) -> TriangleDistribution {
        let cube = self.cells() as f64;
        let p = self.counts.map(|pa| pa.map(|pab| pab.map(|n| f64::from(n) / cube)));
        TriangleDistribution::new(p).expect("cell counts sum to k^3")
    }
}

pub fn eval_strategy(s: &GridStrategy) -> GridDistribution {
    let k = s.k;
    let mut counts = [[[0u32; 4]; 4]; 4];
    for alpha in 0..k {
        for beta in 0..k {
            for gamma in 0..k {
                let [a, b, c] = s.outputs(alpha, beta, gamma);
                counts[a as usize][b as usize][c as usize] += 1;
            }
        }
    }
    GridDistribution { k, counts }
}

/// Largest `|p_abc - pbar_abc|` where `pbar` averages over party exchange
/// and simultaneous output relabeling. That group is transitive on each
/// equality pattern, so `pbar` is the pattern total over the pattern size.
pub fn opi_deviation(t: &TriangleDistribution) -> f64 {
    let mut totals = [0.0; 3];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                totals[outcome_class(a, b, c)] += t.get(a, b, c);
            }
        }
    }
    let mut dev: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                let cl = outcome_class(a, b, c);
                dev = dev.max((t.get(a, b, c) - totals[cl] / CLASS_SIZE[cl] as f64).abs());
            }
        }
    }
    dev
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRecord {
    pub k: usize,
    pub strategy_hash: String,
    pub e2_avg: f64,
    pub e3_avg: f64,
    pub opi_dev: f64,
    pub finner_margin: f64,
    /// Set when the deviation from OPI is at most `1e-9`.
    pub opi: bool,
}

impl ScanRecord {
    pub fn of(s: &GridStrategy) -> Self {
        let d = eval_strategy(s);
        let t = d.to_triangle();
        let opi_dev = opi_deviation(&t);
        Self {
            k: s.k,
            strategy_hash: s.hash(),
            e2_avg: t.mean_pair_correlator(),
            e3_avg: t.mean_loop_correlator(),
            opi_dev,
            finner_margin: d.finner_margin(),
            opi: opi_dev <= 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Every strategy on the grid.
    Exhaustive,
    /// `count` strategies with independent uniform table entries.
    Random { seed: u64, count: u64 },
}

/// Number of strategies on a `k`-grid, when it fits in a `u128`.
pub fn strategy_count(k: usize) -> Option<u128> {
    1u128.checked_shl(2 * 3 * (k * k) as u32)
}

fn random_strategy(k: usize, seed: u64, i: u64) -> GridStrategy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let mut t = || (0..k * k).map(|_| rng.gen_range(0..4u8)).collect::<Vec<u8>>();
    let tables = [t(), t(), t()];
    GridStrategy { k, tables }
}

/// Strategies of a scan in emission order (by index, or by sample number).
fn sampled(k: usize, sampling: Sampling) -> Result<Box<dyn Fn(u128) -> GridStrategy + Sync>, LocalError> {
    match sampling {
        Sampling::Exhaustive => {
            if k > MAX_INDEXED_K {
                return Err(LocalError::TooLarge(k));
            }
            Ok(Box::new(move |i| GridStrategy::from_index(k, i)))
        }
        Sampling::Random { seed, .. } => Ok(Box::new(move |i| random_strategy(k, seed, i as u64))),
    }
}

fn sample_count(k: usize, sampling: Sampling) -> Result<u128, LocalError> {
    match sampling {
        Sampling::Exhaustive => strategy_count(k).filter(|_| k <= MAX_INDEXED_K).ok_or(LocalError::TooLarge(k)),
        Sampling::Random { count, .. } => Ok(u128::from(count)),
    }
}

/// Streams one record per strategy to `sink`, in a fixed order regardless
/// of thread count. Records are evaluated in parallel chunks.
pub fn scan_local(k: usize, sampling: Sampling, mut sink: impl FnMut(ScanRecord)) -> Result<(), LocalError> {
    if k == 0 {
        return Err(LocalError::EmptyGrid(k));
    }
    let total = sample_count(k, sampling)?;
    let make = sampled(k, sampling)?;
    let mut start = 0u128;
    while start < total {
        let end = (start + CHUNK).min(total);
        let chunk: Vec<ScanRecord> =
            (start as u64..end as u64).into_par_iter().map(|i| ScanRecord::of(&make(u128::from(i)))).collect();
        chunk.into_iter().for_each(&mut sink);
        start = end;
    }
    Ok(())
}

/// Aggregate of a scan without materializing records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanSummary {
    pub strategies: u64,
    /// Strategies violating Finner in exact arithmetic.
    pub finner_violations: u64,
    pub min_finner_margin: f64,
    pub opi: u64,
    pub saturating: u64,
}

pub fn scan_summary(k: usize, sampling: Sampling) -> Result<ScanSummary, LocalError> {
    if k == 0 {
        return Err(LocalError::EmptyGrid(k));
    }
    let total = sample_count(k, sampling)?;
    if total > u128::from(u64::MAX) {
        return Err(LocalError::TooLarge(k));
    }
    let make = sampled(k, sampling)?;
    let empty = ScanSummary { strategies: 0, finner_violations: 0, min_finner_margin: f64::INFINITY, opi: 0, saturating: 0 };
    let merge = |a: ScanSummary, b: ScanSummary| ScanSummary {
        strategies: a.strategies + b.strategies,
        finner_violations: a.finner_violations + b.finner_violations,
        min_finner_margin: a.min_finner_margin.min(b.min_finner_margin),
        opi: a.opi + b.opi,
        saturating: a.saturating + b.saturating,
    };
    Ok((0..total as u64)
        .into_par_iter()
        .map(|i| {
            let d = eval_strategy(&make(u128::from(i)));
            ScanSummary {
                strategies: 1,
                finner_violations: u64::from(!d.finner_holds()),
                min_finner_margin: d.finner_margin(),
                opi: u64::from(d.is_opi()),
                saturating: u64::from(d.saturates_finner()),
            }
        })
        .reduce(|| empty, merge))
}

/// Resumable state of an exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchCheckpoint {
    pub k: usize,
    pub require_opi: bool,
    /// First strategy index not yet examined.
    pub next_index: u128,
    pub found: Vec<GridStrategy>,
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    /// Strategies to evaluate before giving up; [`DEFAULT_BUDGET`] if unset.
    pub budget: Option<u64>,
    pub resume: Option<SearchCheckpoint>,
}

/// Every Finner-saturating strategy on the grid (OPI ones only when
/// `require_opi`).
///
/// Grids with `k <= 2` are searched exhaustively. For larger grids with
/// `require_opi`, OPI plus saturation forces `p_xxx = 1/8` for every `x`,
/// and the search runs over per-output cell sets instead, see
/// [`opi_saturating_cover`]. Larger grids without `require_opi` fall back to
/// the exhaustive enumeration, which stops with a checkpoint once the
/// budget is spent.
pub fn search_finner_saturating(k: usize, require_opi: bool, opts: &SearchOptions) -> Result<Vec<GridStrategy>, LocalError> {
    if k == 0 {
        return Err(LocalError::EmptyGrid(k));
    }
    if k > 2 && require_opi {
        return Ok(opi_saturating_cover(k).into_iter().filter(|s| eval_strategy(s).is_opi()).collect());
    }
    let total = strategy_count(k).filter(|_| k <= MAX_INDEXED_K).ok_or(LocalError::TooLarge(k))?;
    let budget = u128::from(opts.budget.unwrap_or(DEFAULT_BUDGET));
    let (mut next, mut found) = match &opts.resume {
        Some(c) if c.k == k && c.require_opi == require_opi => (c.next_index, c.found.clone()),
        _ => (0, Vec::new()),
    };
    let mut spent = 0u128;
    while next < total {
        if spent >= budget {
            return Err(LocalError::BudgetExceeded(Box::new(SearchCheckpoint { k, require_opi, next_index: next, found })));
        }
        let end = (next + CHUNK.min(budget - spent)).min(total);
        let mut hits: Vec<GridStrategy> = (next as u64..end as u64)
            .into_par_iter()
            .filter_map(|i| {
                let s = GridStrategy::from_index(k, u128::from(i));
                let d = eval_strategy(&s);
                (d.saturates_finner() && (!require_opi || d.is_opi())).then_some(s)
            })
            .collect();
        found.append(&mut hits);
        spent += end - next;
        next = end;
    }
    Ok(found)
}

/// `(A, B, C)` cell sets of one output, as bitmasks over `k x k` grids.
type CellSets = [u64; 3];

/// All strategies with uniform marginals and `p_xxx = 1/8` for every `x`.
///
/// The cells where all three parties output `x` depend only on the cells
/// `A_x`, `B_x`, `C_x` where each table shows `x`. So the search first lists
/// every triple of `k^2/4`-cell sets with exactly `k^3/8` common cells,
/// then picks one triple per output so that each table is covered exactly
/// once. Both stages are complete.
pub fn opi_saturating_cover(k: usize) -> Vec<GridStrategy> {
    if !k.is_multiple_of(2) || k > 8 {
        return Vec::new();
    }
    let cells = k * k;
    let quarter = cells / 4;
    let target = (k * k * k / 8) as u32;
    let subsets = combinations(cells, quarter);
    let row = |mask: u64, i: usize| (mask >> (i * k)) & ((1u64 << k) - 1);

    let triples: Vec<CellSets> = subsets
        .par_iter()
        .flat_map_iter(|&a| {
            let subsets = &subsets;
            subsets.iter().flat_map(move |&b| {
                // weight of C cell (alpha, beta): gammas shared by A's row beta and B's row alpha
                let w: Vec<u32> = (0..cells).map(|cell| (row(a, cell % k) & row(b, cell / k)).count_ones()).collect();
                let mut top = w.clone();
                top.sort_unstable_by(|x, y| y.cmp(x));
                let reachable = top[..quarter].iter().sum::<u32>() >= target;
                let ws = w.clone();
                subsets
                    .iter()
                    .filter(move |_| reachable)
                    .filter(move |&&c| (0..cells).filter(|&i| c >> i & 1 == 1).map(|i| ws[i]).sum::<u32>() == target)
                    .map(move |&c| [a, b, c])
            })
        })
        .collect();

    let full = if cells == 64 { u64::MAX } else { (1u64 << cells) - 1 };
    let mut out = Vec::new();
    let mut chosen: Vec<CellSets> = Vec::with_capacity(4);
    fn cover(triples: &[CellSets], used: CellSets, full: u64, chosen: &mut Vec<CellSets>, out: &mut Vec<Vec<CellSets>>) {
        if chosen.len() == 4 {
            if used.iter().all(|&u| u == full) {
                out.push(chosen.clone());
            }
            return;
        }
        for t in triples {
            if (0..3).all(|i| used[i] & t[i] == 0) {
                chosen.push(*t);
                cover(triples, [used[0] | t[0], used[1] | t[1], used[2] | t[2]], full, chosen, out);
                chosen.pop();
            }
        }
    }
    let mut covers = Vec::new();
    cover(&triples, [0; 3], full, &mut chosen, &mut covers);
    for c in covers {
        let mut tables = [vec![0u8; cells], vec![0u8; cells], vec![0u8; cells]];
        for (x, sets) in c.iter().enumerate() {
            for (t, &mask) in sets.iter().enumerate() {
                for (i, v) in tables[t].iter_mut().enumerate() {
                    if mask >> i & 1 == 1 {
                        *v = x as u8;
                    }
                }
            }
        }
        out.push(GridStrategy { k, tables });
    }
    out
}

/// All `r`-element subsets of `0..n` as bitmasks.
fn combinations(n: usize, r: usize) -> Vec<u64> {
    fn go(start: usize, n: usize, r: usize, acc: u64, out: &mut Vec<u64>) {
        if r == 0 {
            out.push(acc);
            return;
        }
        for i in start..=n - r {
            go(i + 1, n, r - 1, acc | 1 << i, out);
        }
    }
    let mut out = Vec::new();
    if r <= n {
        go(0, n, r, 0, &mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cube,
    Box,
    Other,
}

/// Whether the cells where every party outputs `x` form a box once each
/// axis's symbols are reordered independently; sides are in symbols.
pub fn box_shape_check(s: &GridStrategy, x: u8) -> (Shape, Option<[usize; 3]>) {
    let k = s.k;
    let mut axes = [vec![false; k], vec![false; k], vec![false; k]];
    let mut size = 0;
    for alpha in 0..k {
        for beta in 0..k {
            for gamma in 0..k {
                if s.outputs(alpha, beta, gamma) == [x; 3] {
                    size += 1;
                    axes[0][alpha] = true;
                    axes[1][beta] = true;
                    axes[2][gamma] = true;
                }
            }
        }
    }
    let sides = axes.map(|a| a.iter().filter(|&&v| v).count());
    if size == 0 || size != sides.iter().product::<usize>() {
        return (Shape::Other, None);
    }
    let shape = if sides[0] == sides[1] && sides[1] == sides[2] { Shape::Cube } else { Shape::Box };
    (shape, Some(sides))
}
