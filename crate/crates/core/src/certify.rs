//! Exact algebraic bounds from the zero pattern of an optimal point.
//!
//! At an optimum some outcome probabilities vanish. A rational combination
//! `sum_j q_j p_j` of those rows that cancels every correlator except the
//! constant, the objective `E` and its square leaves `c0 + c1 E + c2 E^2 = 0`,
//! which pins the optimum exactly. Floating-point solutions only choose the
//! rows; all algebra is in rationals.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::bound::{slp_bound, BoundError, CorrelatorModel, Direction, SlpOptions};
use crate::constraint::{build_constraints, ConstraintError, ConstraintSet, Mode};
use crate::scalar::{format_rational, Rational, Scalar};

/// Probabilities below this count as zero when picking candidate rows.
pub const ACTIVE_TOL: f64 = 1e-7;
/// Looser threshold tried when the first active set gives no certificate.
pub const RETRY_TOL: f64 = 1e-5;
/// Largest probability an orbit may reach on the optimal face and still be
/// treated as identically zero there.
const FACE_TOL: f64 = 1e-9;
/// A root is accepted if it lies this close to the numerical bound.
pub const ROOT_TOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("active rows admit no combination that isolates the objective")]
    NoCertificate,
    #[error("residual polynomial has no real root")]
    NoRealRoot,
    #[error("both roots lie within {ROOT_TOL} of the numerical bound {0}")]
    AmbiguousRoot(f64),
    #[error("no root lies within {ROOT_TOL} of the numerical bound {0}")]
    RootMismatch(f64),
}

/// A number `rational + coefficient * sqrt(radicand)` with a square-free
/// radicand; rational when the coefficient is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Surd {
    pub rational: Rational,
    pub coefficient: Rational,
    pub radicand: BigInt,
}

impl Surd {
    pub fn from_rational(r: Rational) -> Self {
        Self { rational: r, coefficient: Rational::zero(), radicand: BigInt::one() }
    }

    pub fn is_rational(&self) -> bool {
        self.coefficient.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        let root = self.radicand.to_string().parse::<f64>().unwrap_or(f64::NAN).sqrt();
        self.rational.to_f64() + self.coefficient.to_f64() * root
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            return f.write_str(&format_rational(&self.rational));
        }
        let c = &self.coefficient;
        let root = format!("sqrt({})", self.radicand);
        let lead = if c.is_one() {
            root
        } else if *c == -Rational::one() {
            format!("-{root}")
        } else {
            format!("{}*{root}", format_rational(c))
        };
        f.write_str(&lead)?;
        let r = &self.rational;
        if r.is_positive() {
            write!(f, "+{}", format_rational(r))
        } else if r.is_negative() {
            write!(f, "-{}", format_rational(&-r.clone()))
        } else {
            Ok(())
        }
    }
}

/// Splits `m > 0` as `s^2 * f` with `f` square-free (trial division, then a
/// perfect-square check on what remains).
fn square_split(m: &BigInt) -> (BigInt, BigInt) {
    let mut rest = m.clone();
    let mut s = BigInt::one();
    let mut p = BigInt::from(2);
    let limit = BigInt::from(1_000_000);
    while &p * &p <= rest && p < limit {
        let pp = &p * &p;
        while (&rest % &pp).is_zero() {
            rest /= &pp;
            s *= &p;
        }
        p += 1;
    }
    let r = rest.sqrt();
    if &r * &r == rest {
        (s * r, BigInt::one())
    } else {
        (s, rest)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub polygon: usize,
    /// Numerical optimum the certificate was built from.
    pub bound: f64,
    /// Outcome orbits whose probability vanishes on the optimal face.
    pub active: Vec<String>,
    /// Weight of each active orbit in the combination.
    pub q: Vec<Rational>,
    /// `"1"`, the objective word and, when present, its square.
    pub targets: Vec<String>,
    /// `(c0, c1, c2)` of `c0 + c1 E + c2 E^2 = 0`.
    pub coefficients: [Rational; 3],
    /// Number of correlator columns the combination cancels.
    pub cancelled: usize,
    pub root: Surd,
}

impl Certificate {
    /// Plain-text rendering listing every weight and the residual polynomial.
    pub fn to_text(&self) -> String {
        let mut s = format!("polygon {}\nnumerical bound {:.12}\n", self.polygon, self.bound);
        s.push_str(&format!("targets {}\ncancelled {}\nactive {}\n", self.targets.join(" "), self.cancelled, self.active.len()));
        for (o, q) in self.active.iter().zip(&self.q) {
            s.push_str(&format!("  q[{o}] = {}\n", format_rational(q)));
        }
        let [c0, c1, c2] = &self.coefficients;
        s.push_str(&format!(
            "residual ({}) + ({})*E + ({})*E^2 = 0\nroot {} = {:.12}\n",
            format_rational(c0),
            format_rational(c1),
            format_rational(c2),
            self.root,
            self.root.to_f64()
        ));
        s
    }
}

/// Outcome orbits of the largest polygon whose probability at `point` is
/// below `tol`.
pub fn active_outcomes(cs: &ConstraintSet, point: &[f64], tol: f64) -> Vec<usize> {
    cs.outcome_probabilities(0, point).iter().enumerate().filter(|(_, &p)| p < tol).map(|(o, _)| o).collect()
}

/// Keeps the candidates whose probability cannot be raised while the
/// objective stays at `bound` and the products keep their tangent planes at
/// `point`: those vanish on the whole optimal face.
pub fn face_zeros(model: &CorrelatorModel, point: &[f64], bound: f64, candidates: &[usize]) -> Result<Vec<usize>, CertifyError> {
    let cs = model.cs;
    let mut eqs = model.tangent_rows(|v| point[v]);
    eqs.push((model.unit(cs.objective), bound));
    let scale = 4f64.powi(cs.polygons[0].n as i32);
    let keep: Vec<Option<usize>> = candidates
        .par_iter()
        .map(|&o| {
            let objective: Vec<f64> = model.positivity[o].2.iter().map(|&c| c as f64).collect();
            let cols = model.optimize(Direction::Max, &objective, &eqs)?;
            let s: f64 = objective.iter().zip(&cols).map(|(a, b)| a * b).sum();
            Ok(((1.0 + s) / scale < FACE_TOL).then_some(o))
        })
        .collect::<Result<_, BoundError>>()?;
    Ok(keep.into_iter().flatten().collect())
}

/// Exact rows of the given orbits over `[constant, reduced columns...]`,
/// scaled to probabilities.
pub fn active_rows(model: &CorrelatorModel, active: &[usize]) -> Vec<Vec<Rational>> {
    let n = model.cs.polygons[0].n as u32;
    let scale = Rational::from_integer(BigInt::from(4).pow(n));
    active
        .iter()
        .map(|&o| {
            std::iter::once(Rational::one())
                .chain(model.positivity[o].2.iter().map(|&c| Rational::from_int(c)))
                .map(|v| v / scale.clone())
                .collect()
        })
        .collect()
}

/// `sum_k q_k rows[k]`.
pub fn combine(rows: &[Vec<Rational>], q: &[Rational]) -> Vec<Rational> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|c| rows.iter().zip(q).fold(Rational::zero(), |acc, (r, w)| acc + r[c].clone() * w.clone())).collect()
}

/// Reduced row echelon form in place; returns the pivot column of each
/// nonzero row.
fn rref(m: &mut [Vec<Rational>]) -> Vec<usize> {
    let cols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        let inv = Rational::one() / m[r][c].clone();
        m[r].iter_mut().for_each(|v| *v = v.clone() * inv.clone());
        for i in 0..m.len() {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let d = f.clone() * m[r][j].clone();
                    m[i][j] = m[i][j].clone() - d;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == m.len() {
            break;
        }
    }
    pivots
}

/// Null-space search: weights `q` over `rows` whose combination vanishes on
/// every column outside `targets` but not on all targets. Takes the first
/// basis vector (free variables in order, set to one) that qualifies.
pub fn certificate_search(rows: &[Vec<Rational>], targets: &[usize]) -> Result<Vec<Rational>, CertifyError> {
    let k = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let mut m: Vec<Vec<Rational>> =
        (0..width).filter(|c| !targets.contains(c)).map(|c| rows.iter().map(|r| r[c].clone()).collect()).collect();
    let pivots = rref(&mut m);
    for free in (0..k).filter(|j| !pivots.contains(j)) {
        let mut q = vec![Rational::zero(); k];
        q[free] = Rational::one();
        for (r, &p) in pivots.iter().enumerate() {
            q[p] = -m[r][free].clone();
        }
        let combo = combine(rows, &q);
        if targets.iter().any(|&t| !combo[t].is_zero()) {
            return Ok(q);
        }
    }
    Err(CertifyError::NoCertificate)
}

/// Root of `c0 + c1 E + c2 E^2 = 0` closest to the numerical bound.
pub fn algebraic_bound(coefficients: &[Rational; 3], numeric: f64) -> Result<Surd, CertifyError> {
    let [c0, c1, c2] = coefficients;
    if c2.is_zero() {
        if c1.is_zero() {
            return Err(CertifyError::NoRealRoot);
        }
        let root = Surd::from_rational(-c0.clone() / c1.clone());
        return if (root.to_f64() - numeric).abs() <= ROOT_TOL { Ok(root) } else { Err(CertifyError::RootMismatch(numeric)) };
    }
    let disc = c1.clone() * c1.clone() - Rational::from_int(4) * c0.clone() * c2.clone();
    if disc.is_negative() {
        return Err(CertifyError::NoRealRoot);
    }
    let two_a = Rational::from_int(2) * c2.clone();
    let centre = -c1.clone() / two_a.clone();
    let (s, f) = square_split(&(disc.numer() * disc.denom()));
    let half_width = Rational::new(s, disc.denom().clone()) / two_a;
    let roots: Vec<Surd> = if half_width.is_zero() {
        vec![Surd::from_rational(centre)]
    } else if f.is_one() {
        vec![Surd::from_rational(centre.clone() + half_width.clone()), Surd::from_rational(centre - half_width)]
    } else {
        [half_width.clone(), -half_width]
            .into_iter()
            .map(|c| Surd { rational: centre.clone(), coefficient: c, radicand: f.clone() })
            .collect()
    };
    let mut close = roots.into_iter().filter(|r| (r.to_f64() - numeric).abs() <= ROOT_TOL);
    match (close.next(), close.next()) {
        (Some(r), None) => Ok(r),
        (Some(_), Some(_)) => Err(CertifyError::AmbiguousRoot(numeric)),
        _ => Err(CertifyError::RootMismatch(numeric)),
    }
}

/// Maximizes the pair correlator of an `n`-gon numerically and turns the
/// optimal zero pattern into an exact value.
pub fn certify(n: usize) -> Result<Certificate, CertifyError> {
    let cs = build_constraints(n, Mode::Single)?;
    let result = slp_bound(&cs, Direction::Max, &SlpOptions::default())?;
    let model = CorrelatorModel::new(&cs);
    let objective = model.reduced[cs.objective].ok_or(CertifyError::NoCertificate)?;
    let square =
        cs.quadratic.iter().find(|q| q.left == cs.objective && q.right == cs.objective).and_then(|q| model.reduced[q.target]);
    // column 0 of an active row is the constant, reduced column c sits at c + 1
    let mut targets = vec![0, objective + 1];
    targets.extend(square.map(|c| c + 1));

    let mut last = CertifyError::NoCertificate;
    for tol in [ACTIVE_TOL, RETRY_TOL] {
        let candidates = active_outcomes(&cs, &result.point, tol);
        let active = face_zeros(&model, &result.point, result.bound, &candidates)?;
        let rows = active_rows(&model, &active);
        let q = match certificate_search(&rows, &targets) {
            Ok(q) => q,
            Err(e) => {
                last = e;
                continue;
            }
        };
        let combo = combine(&rows, &q);
        let coefficients =
            [combo[0].clone(), combo[objective + 1].clone(), square.map_or_else(Rational::zero, |c| combo[c + 1].clone())];
        let root = algebraic_bound(&coefficients, result.bound)?;
        let polygon = &cs.polygons[0];
        let label = |c: usize| {
            let v = (0..cs.variables.len()).find(|&v| model.reduced[v] == Some(c)).expect("column has a variable");
            cs.variables[v].label.clone()
        };
        let mut target_labels = vec!["1".to_string(), label(objective)];
        target_labels.extend(square.map(label));
        return Ok(Certificate {
            polygon: n,
            bound: result.bound,
            active: active.iter().map(|&o| polygon.matrix.outcomes[o].display()).collect(),
            q,
            targets: target_labels,
            coefficients,
            cancelled: model.width + 1 - targets.len(),
            root,
        });
    }
    Err(last)
}
