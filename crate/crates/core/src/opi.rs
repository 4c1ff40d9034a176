//! Coordinates of the output-permutation-invariant (OPI) subspace of the
//! four-output triangle and the Finner inequality on it.
//!
//! An OPI distribution is fixed by three probabilities: `p111` (one specific
//! all-equal outcome), `p112` (one specific outcome with exactly two equal
//! outputs) and `p123` (one specific all-distinct outcome). Equivalently it
//! is fixed by the pair correlator `E2` and the loop correlator `E3o`:
//!
//! ```text
//! [1  ]   [4  36  24] [p111]
//! [E2 ] = [4   4  -8] [p112]
//! [E3o]   [4 -12   8] [p123]
//! ```
//!
//! Every function is generic over [`Scalar`], so it runs both on `f64` and
//! on exact rationals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Sign of bit `label` (0, 1 or 2) for `output` (0..4).
///
/// Output `x` is written as two bits `(x >> 1, x & 1)`; bit 0 is the sign of
/// the high bit, bit 1 of the low bit and bit 2 is their product, so outputs
/// map to `(+,+,+)`, `(+,-,-)`, `(-,+,-)`, `(-,-,+)`.
pub const OUTPUT_SIGNS: [[i8; 3]; 4] = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]];

/// Multiplicities of the three OPI outcome classes among the 64 outcomes.
pub const CLASS_SIZES: [i64; 3] = [4, 36, 24];

/// The matrix mapping `(p111, p112, p123)` to `(1, E2, E3o)`.
pub const PROBS_TO_CORRELATORS: [[i64; 3]; 3] = [[4, 36, 24], [4, 4, -8], [4, -12, 8]];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpiError {
    #[error("normalization row evaluates to {value}, expected 1")]
    NormalizationViolated { value: f64 },
    #[error("negative probability {value} at outcome {outcome:?}")]
    NegativeProbability { outcome: [usize; 3], value: f64 },
    #[error("triangle distribution sums to {total}, expected 1")]
    NotNormalized { total: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpiDistribution<T> {
    pub p111: T,
    pub p112: T,
    pub p123: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpiCorrelators<T> {
    pub e2: T,
    pub e3o: T,
}

impl<T: Scalar> OpiDistribution<T> {
    pub fn new(p111: T, p112: T, p123: T) -> Self {
        Self { p111, p112, p123 }
    }

    /// `4 p111 + 36 p112 + 24 p123`.
    pub fn total(&self) -> T {
        T::from_int(4) * self.p111.clone() + T::from_int(36) * self.p112.clone() + T::from_int(24) * self.p123.clone()
    }

    /// All three probabilities are non-negative (up to the mode tolerance).
    pub fn is_nonnegative(&self) -> bool {
        let tol = T::tolerance();
        [&self.p111, &self.p112, &self.p123].iter().all(|p| **p >= -tol.clone())
    }

    pub fn to_f64(&self) -> OpiDistribution<f64> {
        OpiDistribution::new(self.p111.to_f64(), self.p112.to_f64(), self.p123.to_f64())
    }
}

impl<T: Scalar> OpiCorrelators<T> {
    pub fn new(e2: T, e3o: T) -> Self {
        Self { e2, e3o }
    }

    /// Whether the point lies in the positivity triangle.
    pub fn is_valid(&self) -> bool {
        correlators_to_probs(self).is_nonnegative()
    }

    pub fn to_f64(&self) -> OpiCorrelators<f64> {
        OpiCorrelators::new(self.e2.to_f64(), self.e3o.to_f64())
    }
}

fn normalization_tolerance<T: Scalar>() -> T {
    if T::EXACT {
        T::tolerance()
    } else {
        T::ratio(1, 1_000_000_000_000)
    }
}

/// Applies the probability-to-correlator matrix. Fails when the first row
/// (the normalization) does not evaluate to one.
pub fn probs_to_correlators<T: Scalar>(d: &OpiDistribution<T>) -> Result<OpiCorrelators<T>, OpiError> {
    let total = d.total();
    if (total.clone() - T::one()).abs() > normalization_tolerance::<T>() {
        return Err(OpiError::NormalizationViolated { value: total.to_f64() });
    }
    let row = |r: usize| {
        let [a, b, c] = PROBS_TO_CORRELATORS[r];
        T::from_int(a) * d.p111.clone() + T::from_int(b) * d.p112.clone() + T::from_int(c) * d.p123.clone()
    };
    Ok(OpiCorrelators::new(row(1), row(2)))
}

/// Inverse of [`probs_to_correlators`]. Points outside the positivity
/// triangle are returned as-is; check [`OpiDistribution::is_nonnegative`].
pub fn correlators_to_probs<T: Scalar>(c: &OpiCorrelators<T>) -> OpiDistribution<T> {
    let one = T::one();
    let sixty_four = T::from_int(64);
    let e2 = c.e2.clone();
    let e3 = c.e3o.clone();
    let two = T::from_int(2);
    let p111 = (one.clone() + T::from_int(9) * e2.clone() + T::from_int(6) * e3.clone()) / sixty_four.clone();
    let p112 = (one.clone() + e2.clone() - two.clone() * e3.clone()) / sixty_four.clone();
    let p123 = (one - T::from_int(3) * e2 + two * e3) / sixty_four;
    OpiDistribution::new(p111, p112, p123)
}

/// Signed distance to the Finner bound on an OPI point: `1/8 - p111`.
///
/// All one-party marginals are `1/4` on the OPI subspace, so the bound
/// `sqrt(p(a) p(b) p(c))` is `1/8` and only the all-equal outcomes can
/// saturate it. Positive means satisfied, zero saturated, negative violated.
pub fn finner_margin_opi<T: Scalar>(d: &OpiDistribution<T>) -> T {
    T::ratio(1, 8) - d.p111.clone()
}

/// The Finner line `1 + 9 E2 + 6 E3o = 8` as `(constant, e2, e3o, rhs)`.
pub const FINNER_LINE: (i64, i64, i64, i64) = (1, 9, 6, 8);

/// Landmarks of the OPI plane in correlator coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct SpecialPoints<T> {
    /// `p112 = p123 = 0`.
    pub vertex_all_equal: OpiCorrelators<T>,
    /// `p111 = p112 = 0`.
    pub vertex_all_distinct: OpiCorrelators<T>,
    /// `p111 = p123 = 0`.
    pub vertex_two_equal: OpiCorrelators<T>,
    pub noisy: OpiCorrelators<T>,
    /// Ends of the Finner segment inside the positivity triangle.
    pub finner_segment: [OpiCorrelators<T>; 2],
    /// Finner line meets the `p112 = 0` edge.
    pub special: OpiCorrelators<T>,
}

impl<T: Scalar> SpecialPoints<T> {
    pub fn named(&self) -> Vec<(&'static str, OpiCorrelators<T>)> {
        vec![
            ("vertex_all_equal", self.vertex_all_equal.clone()),
            ("vertex_all_distinct", self.vertex_all_distinct.clone()),
            ("vertex_two_equal", self.vertex_two_equal.clone()),
            ("noisy", self.noisy.clone()),
            ("finner_p112_edge", self.finner_segment[0].clone()),
            ("finner_p123_edge", self.finner_segment[1].clone()),
            ("special", self.special.clone()),
        ]
    }
}

pub fn special_points<T: Scalar>() -> SpecialPoints<T> {
    let pt = |a: (i64, i64), b: (i64, i64)| OpiCorrelators::new(T::ratio(a.0, a.1), T::ratio(b.0, b.1));
    let vertex = |p: OpiDistribution<T>| probs_to_correlators(&p).expect("simplex vertex is normalized");
    SpecialPoints {
        vertex_all_equal: vertex(OpiDistribution::new(T::ratio(1, 4), T::zero(), T::zero())),
        vertex_all_distinct: vertex(OpiDistribution::new(T::zero(), T::zero(), T::ratio(1, 24))),
        vertex_two_equal: vertex(OpiDistribution::new(T::zero(), T::ratio(1, 36), T::zero())),
        noisy: pt((0, 1), (0, 1)),
        finner_segment: [pt((1, 3), (2, 3)), pt((5, 9), (1, 3))],
        special: pt((1, 3), (2, 3)),
    }
}

/// A general distribution `p[a][b][c]` of the four-output triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleDistribution {
    p: [[[f64; 4]; 4]; 4],
}

impl TriangleDistribution {
    pub fn new(p: [[[f64; 4]; 4]; 4]) -> Result<Self, OpiError> {
        let mut total = 0.0;
        for (a, pa) in p.iter().enumerate() {
            for (b, pab) in pa.iter().enumerate() {
                for (c, &v) in pab.iter().enumerate() {
                    if v < -1e-12 {
                        return Err(OpiError::NegativeProbability { outcome: [a, b, c], value: v });
                    }
                    total += v;
                }
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(OpiError::NotNormalized { total });
        }
        Ok(Self { p })
    }

    pub fn uniform() -> Self {
        Self { p: [[[1.0 / 64.0; 4]; 4]; 4] }
    }

    pub fn deterministic(a: usize, b: usize, c: usize) -> Self {
        let mut p = [[[0.0; 4]; 4]; 4];
        p[a][b][c] = 1.0;
        Self { p }
    }

    /// Expands an OPI point into the full 64-outcome table.
    pub fn from_opi(d: &OpiDistribution<f64>) -> Self {
        let mut p = [[[0.0; 4]; 4]; 4];
        for (a, pa) in p.iter_mut().enumerate() {
            for (b, pab) in pa.iter_mut().enumerate() {
                for (c, v) in pab.iter_mut().enumerate() {
                    *v = if a == b && b == c {
                        d.p111
                    } else if a == b || b == c || a == c {
                        d.p112
                    } else {
                        d.p123
                    };
                }
            }
        }
        Self { p }
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.p[a][b][c]
    }

    pub fn table(&self) -> &[[[f64; 4]; 4]; 4] {
        &self.p
    }

    /// One-party marginals `[p(a), p(b), p(c)]`.
    pub fn marginals(&self) -> [[f64; 4]; 3] {
        let mut m = [[0.0; 4]; 3];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let v = self.p[a][b][c];
                    m[0][a] += v;
                    m[1][b] += v;
                    m[2][c] += v;
                }
            }
        }
        m
    }

    /// `<x_j y_j>` averaged over the three party pairs and three bits.
    pub fn mean_pair_correlator(&self) -> f64 {
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let v = self.p[a][b][c];
                    if v == 0.0 {
                        continue;
                    }
                    let mut s = 0i32;
                    for j in 0..3 {
                        let (sa, sb, sc) = (OUTPUT_SIGNS[a][j], OUTPUT_SIGNS[b][j], OUTPUT_SIGNS[c][j]);
                        s += i32::from(sa * sb) + i32::from(sa * sc) + i32::from(sb * sc);
                    }
                    acc += v * f64::from(s);
                }
            }
        }
        acc / 9.0
    }

    /// `<a_j b_k c_l>` averaged over the six assignments of distinct bits.
    pub fn mean_loop_correlator(&self) -> f64 {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let v = self.p[a][b][c];
                    if v == 0.0 {
                        continue;
                    }
                    let s: i32 = PERMS
                        .iter()
                        .map(|&[j, k, l]| i32::from(OUTPUT_SIGNS[a][j] * OUTPUT_SIGNS[b][k] * OUTPUT_SIGNS[c][l]))
                        .sum();
                    acc += v * f64::from(s);
                }
            }
        }
        acc / 6.0
    }
}

/// `min over (a,b,c)` of `sqrt(p(a) p(b) p(c)) - p_abc`.
pub fn finner_margin_general(t: &TriangleDistribution) -> f64 {
    let [ma, mb, mc] = t.marginals();
    let mut margin = f64::INFINITY;
    for a in 0..4 {
        for b in 0..4 {
            let ab = ma[a] * mb[b];
            for c in 0..4 {
                margin = margin.min((ab * mc[c]).sqrt() - t.p[a][b][c]);
            }
        }
    }
    margin
}
