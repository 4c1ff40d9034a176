//! Bounds on the pair correlator by successive linear programming.
//!
//! The linear programs live in correlator space (see [`CorrelatorModel`]).
//! Each quadratic `w = u v` is replaced by its tangent plane at the current
//! estimates `(u0, v0)`, `w = u0 v + v0 u - u0 v0`. For the square of the
//! objective this is `w = E0^2 + eps` with `E = E0 (1 + eps / (2 E0^2))`, so
//! maximizing the pair correlator maximizes `eps` and the reported bound
//! carries the same slight upward bias. Estimates are refreshed from each
//! solution until they stop moving.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ConstraintError, ConstraintSet, Counts, LinearConstraint, Mode, Residuals};
use crate::lp::{solve_lp, LpError, LpProblem, Sense};
use crate::scalar::{Rational, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("exponential fit failed: {0}")]
    FitFailed(String),
    #[error("exact solve needs a system without quadratic constraints")]
    NotLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    fn sense(self) -> Sense {
        match self {
            Direction::Max => Sense::Maximize,
            Direction::Min => Sense::Minimize,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Max => "max",
            Direction::Min => "min",
        })
    }
}

/// Snapshot of the linearization; enough to resume an interrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationState {
    /// Current estimate of the objective correlator.
    pub ebar: f64,
    /// `(variable, estimate)` for every quadratic factor.
    pub estimates: Vec<(usize, f64)>,
    /// Largest offset `|w - u0 v0|` of a linearized product at the last
    /// solution; for the objective square this is the `eps` above.
    pub epsilon: f64,
    pub iteration: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct SlpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting estimate of the objective; the relaxed optimum when absent.
    pub ebar: Option<f64>,
    pub time_limit: Option<Duration>,
    pub resume: Option<LinearizationState>,
    pub damping: f64,
}

impl Default for SlpOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, ebar: None, time_limit: None, resume: None, damping: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundResult {
    pub polygon: usize,
    pub mode: Mode,
    pub direction: Direction,
    pub bound: f64,
    pub iterations: usize,
    pub epsilon: f64,
    pub residual: f64,
    pub status: Status,
    pub wall_time_s: f64,
    pub constraint_counts: Counts,
    /// Correlator value of every variable at the returned point.
    #[serde(skip)]
    pub point: Vec<f64>,
    #[serde(skip)]
    pub state: LinearizationState,
}

/// The constraint set as a linear program over correlators.
///
/// Linear constraints are eliminated by substitution: forced zeros drop
/// out, equal variables share one column. Every correlator is free, so it
/// is split into a positive and a negative part. Positivity of outcome
/// orbit `o` of an `n`-gon reads `1 + r_o . E >= 0`; at the noisy point all
/// these rows are slack, which gives the simplex a non-degenerate start.
pub struct CorrelatorModel<'a> {
    pub cs: &'a ConstraintSet,
    /// Reduced column of every variable, `None` when forced to zero.
    pub reduced: Vec<Option<usize>>,
    pub width: usize,
    /// `(slot, orbit, coefficients over reduced columns)`.
    pub positivity: Vec<(usize, usize, Vec<i64>)>,
}

impl<'a> CorrelatorModel<'a> {
    pub fn new(cs: &'a ConstraintSet) -> Self {
        let nv = cs.variables.len();
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut zero = vec![false; nv];
        for c in &cs.linear {
            match *c {
                LinearConstraint::Zero(a) => zero[a] = true,
                LinearConstraint::Equal(a, b) => {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        for v in 0..nv {
            if zero[v] {
                let r = find(&mut parent, v);
                zero[r] = true;
            }
        }
        let mut column = vec![None; nv];
        let mut width = 0;
        let mut reduced = vec![None; nv];
        for v in 0..nv {
            let r = find(&mut parent, v);
            if zero[r] {
                continue;
            }
            if column[r].is_none() {
                column[r] = Some(width);
                width += 1;
            }
            reduced[v] = column[r];
        }

        let mut positivity = Vec::new();
        for (slot, p) in cs.polygons.iter().enumerate() {
            for (o, row) in p.matrix.positivity_rows().into_iter().enumerate() {
                let mut coef = vec![0i64; width];
                for (w, r) in row.into_iter().enumerate() {
                    if let Some(c) = reduced[cs.var_of[slot][w]] {
                        coef[c] += r;
                    }
                }
                positivity.push((slot, o, coef));
            }
        }
        Self { cs, reduced, width, positivity }
    }

    /// Coefficients of variable `v` over reduced columns.
    pub fn unit(&self, v: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.width];
        if let Some(c) = self.reduced[v] {
            row[c] = 1.0;
        }
        row
    }

    /// Linear program in the split columns: column `2c` is the positive and
    /// `2c + 1` the negative part of reduced column `c`.
    pub fn program<T: Scalar>(&self, sense: Sense, objective: &[T], equalities: &[(Vec<T>, T)]) -> LpProblem<T> {
        let split = |row: &[T]| -> Vec<T> { row.iter().flat_map(|v| [v.clone(), -v.clone()]).collect() };
        let mut lp = LpProblem::new(2 * self.width, sense, split(objective));
        for (_, _, coef) in &self.positivity {
            // unit max-norm rows keep the tableau well scaled
            let scale = coef.iter().map(|c| c.abs()).max().unwrap_or(0).max(1);
            let row: Vec<T> = coef.iter().map(|&c| T::ratio(-c, scale)).collect();
            lp.at_most(split(&row), T::ratio(1, scale));
        }
        for (row, rhs) in equalities {
            lp.equal(split(row), rhs.clone());
        }
        lp
    }

    /// Reduced column values from a split solution.
    pub fn columns<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        (0..self.width).map(|c| x[2 * c].clone() - x[2 * c + 1].clone()).collect()
    }

    /// Value of every variable.
    pub fn point(&self, columns: &[f64]) -> Vec<f64> {
        self.reduced.iter().map(|r| r.map_or(0.0, |c| columns[c])).collect()
    }

    /// Floating-point solve through a factorized revised simplex; the dense
    /// tableau in [`crate::lp`] loses accuracy on these degenerate programs.
    fn solve(&self, dir: Direction, equalities: &[(Vec<f64>, f64)]) -> Result<Vec<f64>, LpError> {
        self.optimize(dir, &self.unit(self.cs.objective), equalities)
    }

    /// Tangent planes of every quadratic at the values given by `at`.
    pub fn tangent_rows(&self, at: impl Fn(usize) -> f64) -> Vec<(Vec<f64>, f64)> {
        self.cs
            .quadratic
            .iter()
            .map(|q| {
                let (u0, v0) = (at(q.left), at(q.right));
                let mut row = self.unit(q.target);
                axpy(&mut row, -u0, &self.unit(q.right));
                axpy(&mut row, -v0, &self.unit(q.left));
                (row, -u0 * v0)
            })
            .collect()
    }

    /// Optimizes `objective` over reduced columns subject to positivity and
    /// the given equalities, returning the reduced column values.
    pub fn optimize(&self, dir: Direction, objective: &[f64], equalities: &[(Vec<f64>, f64)]) -> Result<Vec<f64>, LpError> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};
        let sense = match dir {
            Direction::Max => OptimizationDirection::Maximize,
            Direction::Min => OptimizationDirection::Minimize,
        };
        let mut lp = Problem::new(sense);
        let vars: Vec<_> = objective.iter().map(|&c| lp.add_var(c, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        let expr = |row: &[f64]| -> Vec<_> {
            row.iter().zip(&vars).filter(|(c, _)| **c != 0.0).map(|(&c, &v)| (v, c)).collect::<Vec<_>>()
        };
        for (_, _, coef) in &self.positivity {
            let scale = coef.iter().map(|c| c.abs()).max().unwrap_or(0).max(1) as f64;
            let row: Vec<f64> = coef.iter().map(|&c| c as f64 / scale).collect();
            lp.add_constraint(expr(&row), ComparisonOp::Ge, -1.0 / scale);
        }
        for (row, rhs) in equalities {
            lp.add_constraint(expr(row), ComparisonOp::Eq, *rhs);
        }
        let outcome = lp.solve().map_err(|e| match e {
            microlp::Error::Infeasible => LpError::Infeasible,
            microlp::Error::Unbounded => LpError::Unbounded,
            other => LpError::Backend(other.to_string()),
        })?;
        let solution = outcome.into_solution().map_err(|_| LpError::Backend("solve interrupted".into()))?;
        Ok(vars.iter().map(|&v| solution.var_value(v)).collect())
    }
}

fn axpy(acc: &mut [f64], k: f64, x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += k * b;
    }
}

/// Largest violation of positivity, linear and exact quadratic constraints.
pub fn verify_solution(point: &[f64], cs: &ConstraintSet) -> Residuals {
    cs.residuals(point)
}

pub fn slp_bound(cs: &ConstraintSet, direction: Direction, opts: &SlpOptions) -> Result<BoundResult, BoundError> {
    slp_bound_with(cs, direction, opts, |_| {})
}

/// As [`slp_bound`], calling `on_iteration` with the state after every
/// linearized solve (for checkpointing).
pub fn slp_bound_with(
    cs: &ConstraintSet,
    direction: Direction,
    opts: &SlpOptions,
    mut on_iteration: impl FnMut(&LinearizationState),
) -> Result<BoundResult, BoundError> {
    let start = Instant::now();
    let model = CorrelatorModel::new(cs);
    let factors = cs.factor_variables();
    let slot_of = |v: usize| factors.binary_search(&v).expect("factor variable");

    let finish = |columns: Vec<f64>, state: LinearizationState, delta: f64, timed_out: bool| {
        let point = model.point(&columns);
        let residual = verify_solution(&point, cs).max();
        let converged = !timed_out && delta < opts.tol && residual < 1e-7;
        BoundResult {
            polygon: cs.n,
            mode: cs.mode,
            direction,
            bound: point[cs.objective],
            iterations: state.iteration,
            epsilon: state.epsilon,
            residual,
            status: if converged { Status::Converged } else { Status::NotConverged },
            wall_time_s: start.elapsed().as_secs_f64(),
            constraint_counts: cs.counts(),
            point,
            state,
        }
    };

    if cs.quadratic.is_empty() {
        let columns = model.solve(direction, &[])?;
        let state = LinearizationState { ebar: 0.0, estimates: Vec::new(), epsilon: 0.0, iteration: 1, tol: opts.tol };
        let mut r = finish(columns, state, 0.0, false);
        r.state.ebar = r.bound;
        on_iteration(&r.state);
        return Ok(r);
    }

    let (mut est, mut iteration) = match &opts.resume {
        Some(s) => {
            let mut est = vec![0.0; factors.len()];
            for &(v, x) in &s.estimates {
                if let Ok(k) = factors.binary_search(&v) {
                    est[k] = x;
                }
            }
            (est, s.iteration)
        }
        None => {
            let point = model.point(&model.solve(direction, &[])?);
            (factors.iter().map(|&v| point[v]).collect::<Vec<f64>>(), 0)
        }
    };
    let relaxed_est = est.clone();
    if opts.resume.is_none() {
        if let (Some(e), Ok(k)) = (opts.ebar, factors.binary_search(&cs.objective)) {
            est[k] = e;
        }
    }

    let mut prev_step = vec![0.0; factors.len()];
    let mut retried = false;
    loop {
        let rows = model.tangent_rows(|v| est[slot_of(v)]);
        let columns = match model.solve(direction, &rows) {
            Ok(c) => c,
            Err(LpError::Infeasible) if iteration == 0 && !retried && opts.ebar.is_some() => {
                // the requested starting point cuts off everything; fall back
                // to the relaxed optimum
                retried = true;
                est = relaxed_est.clone();
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        iteration += 1;
        let point = model.point(&columns);
        let new: Vec<f64> = factors.iter().map(|&v| point[v]).collect();
        let epsilon = cs
            .quadratic
            .iter()
            .map(|q| (point[q.target] - est[slot_of(q.left)] * est[slot_of(q.right)]).abs())
            .fold(0.0, f64::max);
        let delta = new.iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for k in 0..est.len() {
            let step = new[k] - est[k];
            let oscillating = step * prev_step[k] < 0.0;
            let applied = if oscillating { opts.damping * step } else { step };
            est[k] += applied;
            prev_step[k] = applied;
        }
        let ebar = factors.binary_search(&cs.objective).map_or(point[cs.objective], |k| est[k]);
        let state = LinearizationState {
            ebar,
            estimates: factors.iter().copied().zip(est.iter().copied()).collect(),
            epsilon,
            iteration,
            tol: opts.tol,
        };
        on_iteration(&state);
        let timed_out = opts.time_limit.is_some_and(|t| start.elapsed() >= t);
        if delta < opts.tol || iteration >= opts.max_iter || timed_out {
            return Ok(finish(columns, state, delta, timed_out));
        }
    }
}

/// Exact optimum of a system without quadratic constraints, in rationals.
pub fn exact_linear_bound(cs: &ConstraintSet, direction: Direction) -> Result<Rational, BoundError> {
    if !cs.quadratic.is_empty() {
        return Err(BoundError::NotLinear);
    }
    let model = CorrelatorModel::new(cs);
    let objective: Vec<Rational> = model.unit(cs.objective).iter().map(|&v| Rational::from_int(v as i64)).collect();
    Ok(solve_lp(&model.program(direction.sense(), &objective, &[]))?.value)
}

/// Bounds for every polygon size in `sizes`, each run seeded with the
/// previous bound.
pub fn bound_curve(
    sizes: impl IntoIterator<Item = usize>,
    mode: Mode,
    direction: Direction,
    opts: &SlpOptions,
) -> Result<Vec<BoundResult>, BoundError> {
    let mut out: Vec<BoundResult> = Vec::new();
    for n in sizes {
        let cs = crate::constraint::build_constraints(n, mode)?;
        let mut o = opts.clone();
        if let Some(prev) = out.last() {
            o.ebar = Some(prev.bound);
        }
        out.push(slp_bound(&cs, direction, &o)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFit {
    /// Limit `a` of `a + b exp(-c n)`.
    pub limit: f64,
    pub amplitude: f64,
    pub rate: f64,
    pub rms: f64,
}

impl ExpFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.limit + self.amplitude * (-self.rate * n).exp()
    }
}

/// Least-squares fit of `a + b exp(-c n)` to `(n, value)` points. For fixed
/// `c` the fit is linear in `(a, b)`; `c` is found by a log-spaced scan
/// followed by golden-section refinement.
pub fn fit_extrapolate(series: &[(f64, f64)]) -> Result<ExpFit, BoundError> {
    if series.len() < 4 {
        return Err(BoundError::FitFailed(format!("need at least 4 points, got {}", series.len())));
    }
    if series.iter().any(|(n, v)| !n.is_finite() || !v.is_finite()) {
        return Err(BoundError::FitFailed("non-finite point".into()));
    }
    let k = series.len() as f64;
    let mean = series.iter().map(|p| p.1).sum::<f64>() / k;
    if series.iter().all(|p| (p.1 - mean).abs() < 1e-15) {
        return Ok(ExpFit { limit: mean, amplitude: 0.0, rate: 0.0, rms: 0.0 });
    }
    let linear = |c: f64| -> Option<(f64, f64, f64)> {
        let xs: Vec<f64> = series.iter().map(|(n, _)| (-c * n).exp()).collect();
        let sx = xs.iter().sum::<f64>();
        let sxx = xs.iter().map(|x| x * x).sum::<f64>();
        let sy = series.iter().map(|p| p.1).sum::<f64>();
        let sxy = xs.iter().zip(series).map(|(x, p)| x * p.1).sum::<f64>();
        let det = k * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return None;
        }
        let b = (k * sxy - sx * sy) / det;
        let a = (sy - b * sx) / k;
        let sse = xs.iter().zip(series).map(|(x, p)| (a + b * x - p.1).powi(2)).sum::<f64>();
        Some((a, b, sse))
    };
    let sse = |c: f64| linear(c).map_or(f64::INFINITY, |t| t.2);
    let grid: Vec<f64> = (0..=2000).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 2000.0)).collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, sse(c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| BoundError::FitFailed("empty grid".into()))?;
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if sse(m1) < sse(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let c = 0.5 * (lo + hi);
    let (a, b, s) = linear(c).ok_or_else(|| BoundError::FitFailed("singular normal equations".into()))?;
    if !a.is_finite() {
        return Err(BoundError::FitFailed("non-finite limit".into()));
    }
    Ok(ExpFit { limit: a, amplitude: b, rate: c, rms: (s / k).sqrt() })
}
