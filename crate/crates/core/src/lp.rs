//! Dense two-phase simplex over any [`Scalar`].
//!
//! Used for exact rational programs and small floating ones, where a dense
//! tableau is adequate. Pricing is Dantzig's rule,
//! switching to Bland's rule after a run of degenerate pivots, so results
//! are deterministic for a fixed input order. In floating mode the final
//! basis is re-solved against the original rows to shed accumulated
//! round-off.

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex stopped after {0} pivots")]
    PivotLimit(usize),
    #[error("solver failure: {0}")]
    Backend(String),
    #[error("malformed problem: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `optimize objective . x` subject to the equality rows, the `<=`
/// inequality rows, `x >= 0` and optional upper bounds.
#[derive(Debug, Clone)]
pub struct LpProblem<T> {
    pub num_vars: usize,
    pub sense: Sense,
    pub objective: Vec<T>,
    pub equalities: Vec<(Vec<T>, T)>,
    pub inequalities: Vec<(Vec<T>, T)>,
    pub upper: Vec<Option<T>>,
}

impl<T: Scalar> LpProblem<T> {
    pub fn new(num_vars: usize, sense: Sense, objective: Vec<T>) -> Self {
        Self { num_vars, sense, objective, equalities: Vec::new(), inequalities: Vec::new(), upper: vec![None; num_vars] }
    }

    pub fn equal(&mut self, row: Vec<T>, rhs: T) {
        self.equalities.push((row, rhs));
    }

    pub fn at_most(&mut self, row: Vec<T>, rhs: T) {
        self.inequalities.push((row, rhs));
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        let bad = self.objective.len() != n
            || self.upper.len() != n
            || self.equalities.iter().chain(&self.inequalities).any(|(r, _)| r.len() != n);
        if bad {
            Err(LpError::Dimension(format!("rows must have {n} coefficients")))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub value: T,
    pub x: Vec<T>,
    /// Indices of inequality rows that hold with equality.
    pub active: Vec<usize>,
    pub pivots: usize,
}

/// Rows below this many tableau entries are updated sequentially.
const PARALLEL_THRESHOLD: usize = 200_000;
const DEGENERATE_STREAK: usize = 40;

trait Tol: Scalar {
    /// Magnitude below which a tableau entry is treated as zero.
    fn drop_tol() -> Self;
    fn pivot_tol() -> Self;
}

impl<T: Scalar> Tol for T {
    fn drop_tol() -> Self {
        if T::EXACT {
            T::zero()
        } else {
            T::ratio(1, 10_000_000_000_000)
        }
    }

    fn pivot_tol() -> Self {
        if T::EXACT {
            T::zero()
        } else {
            T::ratio(1, 10_000_000)
        }
    }
}

struct Tableau<T> {
    /// Each row holds `ncols` coefficients followed by the right-hand side.
    rows: Vec<Vec<T>>,
    /// Basic column of each row, `None` for an artificial.
    basis: Vec<Option<usize>>,
    /// Reduced costs followed by minus the objective value.
    cost: Vec<T>,
    ncols: usize,
    pivots: usize,
}

impl<T: Scalar> Tableau<T> {
    fn rhs(&self, i: usize) -> &T {
        &self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.ncols + 1;
        let piv = self.rows[r][c].clone();
        let prow: Vec<T> = self.rows[r].iter().map(|v| v.clone() / piv.clone()).collect();
        let nz: Vec<usize> = (0..width).filter(|&j| !prow[j].is_zero()).collect();
        let drop = T::drop_tol();
        let update = |row: &mut Vec<T>| {
            let f = row[c].clone();
            if f.is_zero() {
                return;
            }
            for &j in &nz {
                let v = row[j].clone() - f.clone() * prow[j].clone();
                row[j] = if v.abs() <= drop { T::zero() } else { v };
            }
            row[c] = T::zero();
        };
        if self.rows.len() * nz.len() >= PARALLEL_THRESHOLD {
            self.rows.par_iter_mut().enumerate().filter(|(i, _)| *i != r).for_each(|(_, row)| update(row));
        } else {
            self.rows.iter_mut().enumerate().filter(|(i, _)| *i != r).for_each(|(_, row)| update(row));
        }
        update(&mut self.cost);
        self.rows[r] = prow;
        self.rows[r][c] = T::one();
        self.basis[r] = Some(c);
        self.pivots += 1;
    }

    /// Runs the simplex on the current cost row until optimal.
    fn optimize(&mut self, max_pivots: usize) -> Result<(), LpError> {
        let tol = T::tolerance();
        let ptol = T::pivot_tol();
        let mut is_basic = vec![false; self.ncols];
        for c in self.basis.iter().flatten() {
            is_basic[*c] = true;
        }
        let mut degenerate = 0usize;
        loop {
            if self.pivots >= max_pivots {
                return Err(LpError::PivotLimit(self.pivots));
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut entering: Option<usize> = None;
            for j in 0..self.ncols {
                if is_basic[j] || self.cost[j] >= -tol.clone() {
                    continue;
                }
                match entering {
                    None => entering = Some(j),
                    Some(e) if !bland && self.cost[j] < self.cost[e] => entering = Some(j),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some(c) = entering else { return Ok(()) };

            // Harris ratio test: bound the step with slightly relaxed
            // right-hand sides, then take the best pivot within that step.
            let delta = if T::EXACT { T::zero() } else { T::ratio(1, 1_000_000_000) };
            let mut theta: Option<T> = None;
            for row in &self.rows {
                let a = &row[c];
                if *a > ptol {
                    let rhs = if row[self.ncols].is_negative() { T::zero() } else { row[self.ncols].clone() };
                    let r = (rhs + delta.clone()) / a.clone();
                    if theta.as_ref().is_none_or(|t| r < *t) {
                        theta = Some(r);
                    }
                }
            }
            let Some(theta) = theta else { return Err(LpError::Unbounded) };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if *a <= ptol {
                    continue;
                }
                let rhs = if self.rhs(i).is_negative() { T::zero() } else { self.rhs(i).clone() };
                let ratio = rhs / a.clone();
                if ratio > theta {
                    continue;
                }
                let better = match &leave {
                    None => true,
                    Some((l, best)) => {
                        let (bi, bl) = (self.basis[i], self.basis[*l]);
                        match (bi, bl) {
                            // artificials leave first and never return
                            (None, Some(_)) => true,
                            (Some(_), None) => false,
                            _ if T::EXACT || bland => ratio < *best || (ratio == *best && bi < bl),
                            _ => a.abs() > self.rows[*l][c].abs(),
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, ratio)) = leave else { return Err(LpError::Unbounded) };
            if ratio.is_negligible() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            if let Some(old) = self.basis[r] {
                is_basic[old] = false;
            }
            is_basic[c] = true;
            self.pivot(r, c);
        }
    }
}

pub fn solve_lp<T: Scalar>(p: &LpProblem<T>) -> Result<LpSolution<T>, LpError> {
    p.check()?;
    let nv = p.num_vars;
    let uppers: Vec<(usize, T)> = p.upper.iter().enumerate().filter_map(|(j, u)| u.clone().map(|u| (j, u))).collect();
    let n_ineq = p.inequalities.len() + uppers.len();
    let ncols = nv + n_ineq;

    // standard form rows with nonnegative right-hand sides
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(p.equalities.len() + n_ineq);
    let mut basis: Vec<Option<usize>> = Vec::with_capacity(rows.capacity());
    let mut push = |coef: &[T], slack: Option<usize>, rhs: &T| {
        let mut row: Vec<T> = Vec::with_capacity(ncols + 1);
        row.extend(coef.iter().cloned());
        row.resize(ncols + 1, T::zero());
        if let Some(s) = slack {
            row[s] = T::one();
        }
        row[ncols] = rhs.clone();
        let flip = rhs.is_negative();
        if flip {
            row.iter_mut().for_each(|v| *v = -v.clone());
        }
        let start = match slack {
            Some(s) if !flip => Some(s),
            _ => None,
        };
        rows.push(row);
        basis.push(start);
    };
    for (row, rhs) in &p.equalities {
        push(row, None, rhs);
    }
    for (k, (row, rhs)) in p.inequalities.iter().enumerate() {
        push(row, Some(nv + k), rhs);
    }
    for (k, (j, u)) in uppers.iter().enumerate() {
        let mut row = vec![T::zero(); nv];
        row[*j] = T::one();
        push(&row, Some(nv + p.inequalities.len() + k), u);
    }
    let original = rows.clone();

    let mut cost = vec![T::zero(); ncols + 1];
    for (row, b) in rows.iter().zip(&basis) {
        if b.is_none() {
            for (c, v) in cost.iter_mut().zip(row) {
                *c = c.clone() - v.clone();
            }
        }
    }
    let m = rows.len();
    let mut t = Tableau { rows, basis, cost, ncols, pivots: 0 };
    let max_pivots = 50 * (m + ncols) + 1000;

    // phase one
    if t.basis.iter().any(Option::is_none) {
        t.optimize(max_pivots)?;
        let infeas = -t.cost[ncols].clone();
        let scale = if T::EXACT { T::zero() } else { T::ratio(1, 10_000_000) };
        if infeas > scale {
            return Err(LpError::Infeasible);
        }
        // drive remaining artificials out, dropping redundant rows
        let mut keep = vec![true; m];
        for r in 0..m {
            if t.basis[r].is_some() {
                continue;
            }
            let mut basic = vec![false; ncols];
            for c in t.basis.iter().flatten() {
                basic[*c] = true;
            }
            let best = (0..ncols)
                .filter(|&j| !basic[j] && t.rows[r][j].abs() > T::pivot_tol())
                .max_by(|&a, &b| t.rows[r][a].abs().partial_cmp(&t.rows[r][b].abs()).unwrap_or(std::cmp::Ordering::Equal));
            match best {
                Some(c) => t.pivot(r, c),
                None => keep[r] = false,
            }
        }
        if keep.iter().any(|k| !k) {
            let mut i = 0;
            t.rows.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            let mut i = 0;
            t.basis.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        let mut i = 0;
        let original_kept: Vec<Vec<T>> = original
            .into_iter()
            .filter(|_| {
                i += 1;
                keep[i - 1]
            })
            .collect();
        return finish(p, t, original_kept, max_pivots);
    }
    finish(p, t, original, max_pivots)
}

fn finish<T: Scalar>(
    p: &LpProblem<T>,
    mut t: Tableau<T>,
    original: Vec<Vec<T>>,
    max_pivots: usize,
) -> Result<LpSolution<T>, LpError> {
    let nv = p.num_vars;
    let ncols = t.ncols;
    let mut c = vec![T::zero(); ncols];
    for (j, v) in p.objective.iter().enumerate() {
        c[j] = match p.sense {
            Sense::Minimize => v.clone(),
            Sense::Maximize => -v.clone(),
        };
    }
    let mut cost: Vec<T> = c.iter().cloned().chain(std::iter::once(T::zero())).collect();
    for (row, b) in t.rows.iter().zip(&t.basis) {
        let cb = b.map_or_else(T::zero, |j| c[j].clone());
        if cb.is_zero() {
            continue;
        }
        for (k, v) in cost.iter_mut().zip(row) {
            *k = k.clone() - cb.clone() * v.clone();
        }
    }
    t.cost = cost;
    t.optimize(max_pivots)?;

    let mut xs = vec![T::zero(); ncols];
    for (i, b) in t.basis.iter().enumerate() {
        if let Some(j) = b {
            xs[*j] = t.rhs(i).clone();
        }
    }
    if !T::EXACT {
        if let Some(refined) = resolve_basis(&original, &t.basis, ncols) {
            xs = refined;
        }
        for v in xs.iter_mut() {
            if v.is_negative() {
                *v = T::zero();
            }
        }
    }
    let x: Vec<T> = xs[..nv].to_vec();
    let value = p.objective.iter().zip(&x).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
    let tol = if T::EXACT { T::zero() } else { T::ratio(1, 1_000_000_000) };
    let active = p
        .inequalities
        .iter()
        .enumerate()
        .filter(|(_, (row, rhs))| {
            let lhs = row.iter().zip(&x).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
            (rhs.clone() - lhs).abs() <= tol
        })
        .map(|(k, _)| k)
        .collect();
    Ok(LpSolution { value, x, active, pivots: t.pivots })
}

/// Solves `B x_B = b` on the original rows with partial pivoting.
fn resolve_basis<T: Scalar>(rows: &[Vec<T>], basis: &[Option<usize>], ncols: usize) -> Option<Vec<T>> {
    let cols: Vec<usize> = basis.iter().map(|b| b.ok_or(())).collect::<Result<_, _>>().ok()?;
    let m = rows.len();
    if cols.len() != m {
        return None;
    }
    let mut a: Vec<Vec<T>> =
        rows.iter().map(|r| cols.iter().map(|&j| r[j].clone()).chain(std::iter::once(r[ncols].clone())).collect()).collect();
    for k in 0..m {
        let p = (k..m).max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[p][k].abs() < T::ratio(1, 1_000_000_000_000) {
            return None;
        }
        a.swap(k, p);
        let (head, tail) = a.split_at_mut(k + 1);
        let pr = &head[k];
        let piv = pr[k].clone();
        tail.par_iter_mut().for_each(|row| {
            let f = row[k].clone() / piv.clone();
            if f.is_zero() {
                return;
            }
            for j in k..=m {
                if !pr[j].is_zero() {
                    row[j] = row[j].clone() - f.clone() * pr[j].clone();
                }
            }
        });
    }
    let mut sol = vec![T::zero(); m];
    for k in (0..m).rev() {
        let mut s = a[k][m].clone();
        for j in k + 1..m {
            s = s - a[k][j].clone() * sol[j].clone();
        }
        sol[k] = s / a[k][k].clone();
    }
    if sol.iter().any(|v| v.to_f64() < -1e-7 || !v.to_f64().is_finite()) {
        return None;
    }
    let mut xs = vec![T::zero(); ncols];
    for (k, &j) in cols.iter().enumerate() {
        xs[j] = sol[k].clone();
    }
    Some(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};

    #[test]
    fn small_maximization() {
        // max x + y, x + 2y <= 4, 3x + y <= 6
        let mut p = LpProblem::new(2, Sense::Maximize, vec![1.0, 1.0]);
        p.at_most(vec![1.0, 2.0], 4.0);
        p.at_most(vec![3.0, 1.0], 6.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 2.8).abs() < 1e-12);
        assert_eq!(s.active, vec![0, 1]);
    }

    #[test]
    fn exact_mode_with_equalities() {
        let mut p = LpProblem::new(3, Sense::Minimize, vec![rat(1, 1), rat(2, 1), rat(3, 1)]);
        p.equal(vec![rat(1, 1), rat(1, 1), rat(1, 1)], rat(1, 1));
        p.equal(vec![rat(1, 1), rat(-1, 1), rat(0, 1)], rat(-1, 3));
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.value, rat(5, 3));
        assert_eq!(s.x, vec![rat(1, 3), rat(2, 3), Rational::from_integer(0.into())]);
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let mut p = LpProblem::new(2, Sense::Maximize, vec![1.0, 0.0]);
        p.equal(vec![1.0, 1.0], 1.0);
        p.equal(vec![2.0, 2.0], 2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = LpProblem::new(1, Sense::Maximize, vec![1.0]);
        p.equal(vec![1.0], -1.0);
        assert_eq!(solve_lp(&p).unwrap_err(), LpError::Infeasible);
        let p = LpProblem::new(1, Sense::Maximize, vec![1.0]);
        assert_eq!(solve_lp(&p).unwrap_err(), LpError::Unbounded);
        let mut p = LpProblem::new(1, Sense::Maximize, vec![1.0]);
        p.upper[0] = Some(2.5);
        assert!((solve_lp(&p).unwrap().value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn triangle_positivity_maximum() {
        // variables: masses of the three outcome classes
        let mut p = LpProblem::new(3, Sense::Maximize, vec![rat(1, 1), rat(1, 9), rat(-1, 3)]);
        p.equal(vec![rat(1, 1); 3], rat(1, 1));
        assert_eq!(solve_lp(&p).unwrap().value, rat(1, 1));
    }
}
