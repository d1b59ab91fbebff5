//! Truncated power series over binary64, specialised to probability
//! generating functions.
//!
//! A [`TruncSeries`] keeps the coefficients `c_0..=c_K` together with a bound
//! on the mass that was cut off above order `K`. In PGF mode every coefficient
//! is nonnegative, so the retained coefficients evaluated at any `x` in `[0,1]`
//! give a lower bound and adding the tail bound gives an upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::numerics::{sum_with, SumMode};

/// Default truncation order.
pub const DEFAULT_ORDER: usize = 512;

/// Default mass-conservation tolerance for PGF-mode series.
pub const DEFAULT_MASS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesMode {
    /// Nonnegative coefficients; `sum + tail_mass` bounds the total mass from above.
    Pgf,
    /// Arbitrary real coefficients; `tail_mass` bounds the absolute tail sum.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncSeries {
    coeffs: Vec<f64>,
    tail_mass: f64,
    mode: SeriesMode,
    /// Whether the retained coefficients are the true ones (up to rounding)
    /// rather than lower bounds.
    exact: bool,
}

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

impl TruncSeries {
    /// A PGF-mode series with exact coefficients and the given tail bound.
    pub fn pgf(coeffs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(GwError::InvalidOrder { order: 0, min: 1 });
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, c)| !(**c >= 0.0)) {
            return Err(GwError::InvalidFamily { index, value });
        }
        if !(tail_mass >= 0.0) {
            return Err(GwError::Domain {
                what: "tail mass",
                value: tail_mass,
            });
        }
        Ok(Self {
            coeffs,
            tail_mass,
            mode: SeriesMode::Pgf,
            exact: true,
        })
    }

    /// A signed series; `tail_bound` bounds `sum_{k>K} |c_k|` (use infinity if unknown).
    pub fn signed(coeffs: Vec<f64>, tail_bound: f64) -> Self {
        assert!(!coeffs.is_empty(), "series needs at least a constant term");
        Self {
            coeffs,
            tail_mass: tail_bound,
            mode: SeriesMode::Signed,
            exact: true,
        }
    }

    /// The series `s` truncated at `order`.
    pub fn identity(order: usize) -> Self {
        let mut coeffs = vec![0.0; order.max(1) + 1];
        coeffs[1] = 1.0;
        Self {
            coeffs,
            tail_mass: 0.0,
            mode: SeriesMode::Pgf,
            exact: true,
        }
    }

    pub(crate) fn from_parts(coeffs: Vec<f64>, tail_mass: f64, mode: SeriesMode, exact: bool) -> Self {
        Self {
            coeffs,
            tail_mass,
            mode,
            exact,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn mode(&self) -> SeriesMode {
        self.mode
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn is_tail_bounded(&self) -> bool {
        self.tail_mass.is_finite()
    }

    pub fn sign(&self, k: usize) -> i8 {
        let c = self.coeff(k);
        if c > 0.0 {
            1
        } else if c < 0.0 {
            -1
        } else {
            0
        }
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.coeff(k).abs()
    }

    /// Sum of the retained coefficients.
    pub fn mass(&self, mode: SumMode) -> f64 {
        sum_with(mode, &self.coeffs)
    }

    /// Check the PGF invariants against a known total mass.
    pub fn check_pgf(&self, total: f64, eps: f64) -> bool {
        if self.mode != SeriesMode::Pgf || self.coeffs.iter().any(|&c| !(c >= 0.0)) {
            return false;
        }
        let m = self.mass(SumMode::Compensated);
        m <= total + eps && (m + self.tail_mass - total).abs() <= eps
    }

    /// Keep coefficients up to `order`, moving the rest into the tail.
    pub fn truncate(&self, order: usize) -> Self {
        if order >= self.order() {
            return self.clone();
        }
        let dropped: f64 = self.coeffs[order + 1..].iter().map(|c| c.abs()).sum();
        Self {
            coeffs: self.coeffs[..=order].to_vec(),
            tail_mass: self.tail_mass + dropped,
            mode: self.mode,
            exact: self.exact,
        }
    }

    /// Evaluate at `x` in `[0,1]`, returning an enclosure of the true value.
    pub fn eval(&self, x: f64) -> Result<Interval> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GwError::Domain {
                what: "series evaluation",
                value: x,
            });
        }
        let mut acc = 0.0f64;
        let mut abs_acc = 0.0f64;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
            abs_acc = abs_acc * x + c.abs();
        }
        let k = self.coeffs.len() as f64;
        let slack = 2.0 * (k + 1.0) * f64::EPSILON * abs_acc;
        let tail = if self.exact {
            self.tail_mass * x.powi(self.coeffs.len() as i32)
        } else {
            self.tail_mass
        };
        let interval = match self.mode {
            SeriesMode::Pgf => Interval {
                lower: (acc - slack).max(0.0),
                upper: acc + tail + slack,
            },
            SeriesMode::Signed => Interval {
                lower: acc - tail - slack,
                upper: acc + tail + slack,
            },
        };
        Ok(interval)
    }

    /// `self ∘ inner`, truncated at the smaller of the two orders.
    ///
    /// Both series must be in PGF mode. The retained coefficients are lower
    /// bounds of the true composition coefficients; the cut-off mass goes
    /// into the tail so that `sum + tail` still bounds the total from above.
    pub fn compose(&self, inner: &TruncSeries) -> Result<TruncSeries> {
        if self.mode != SeriesMode::Pgf || inner.mode != SeriesMode::Pgf {
            return Err(GwError::Domain {
                what: "composition (PGF mode required)",
                value: f64::NAN,
            });
        }
        let g0 = inner.coeffs[0];
        if !(g0 < 1.0) {
            return Err(GwError::Domain {
                what: "composition inner constant term",
                value: g0,
            });
        }
        let order = self.order().min(inner.order());
        let g = &inner.coeffs[..=order];
        let mut acc = vec![0.0; order + 1];
        let mut next = vec![0.0; order + 1];
        for &c in self.coeffs.iter().rev() {
            mul_into(&acc, g, &mut next);
            next[0] += c;
            std::mem::swap(&mut acc, &mut next);
        }
        let outer_total = self.mass(SumMode::Compensated) + self.tail_mass;
        let kept = sum_with(SumMode::Compensated, &acc);
        let exact = self.exact && inner.exact && self.tail_mass == 0.0 && inner.tail_mass == 0.0 && order == inner.order();
        Ok(TruncSeries {
            coeffs: acc,
            tail_mass: (outer_total - kept).max(0.0),
            mode: SeriesMode::Pgf,
            exact,
        })
    }

    /// Termwise derivative. Without a tail model the tail bound is unknown
    /// and reported as infinite.
    pub fn derivative(&self) -> TruncSeries {
        let coeffs = if self.coeffs.len() <= 1 {
            vec![0.0]
        } else {
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect()
        };
        let tail_mass = if self.tail_mass == 0.0 { 0.0 } else { f64::INFINITY };
        TruncSeries {
            coeffs,
            tail_mass,
            mode: self.mode,
            exact: self.exact,
        }
    }
}

/// `out = a * b` truncated to `out.len()` coefficients.
pub(crate) fn mul_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..=k.min(a.len().saturating_sub(1)) {
            let j = k - i;
            if j < b.len() {
                s += a[i] * b[j];
            }
        }
        *o = s;
    }
    debug_assert_eq!(out.len(), n);
}

/// Truncated product of two coefficient vectors, keeping `len` terms.
pub fn mul_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    mul_into(a, b, &mut out);
    out
}

/// Signed coefficients of `(1 - s)^beta`, indices `0..len`.
pub fn binomial_coefficients(beta: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut c = 1.0f64;
    for k in 0..len {
        if k > 0 {
            c *= (k as f64 - 1.0 - beta) / k as f64;
        }
        out.push(c);
    }
    out
}

/// Series of `(1 - s)^beta` up to `order`, in signed mode.
///
/// The tail bound uses the fact that the coefficients sum to zero at `s = 1`
/// and have constant sign past index `beta`.
pub fn binomial_expand(beta: f64, order: usize) -> Result<TruncSeries> {
    if order < 2 {
        return Err(GwError::InvalidOrder { order, min: 2 });
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(GwError::Domain {
            what: "binomial exponent",
            value: beta,
        });
    }
    let last = order.max(beta.ceil() as usize + 1);
    let all = binomial_coefficients(beta, last + 1);
    let partial: f64 = crate::numerics::neumaier_sum(all.iter().copied());
    let between: f64 = all[order + 1..].iter().map(|c| c.abs()).sum();
    let integer = beta.fract() == 0.0 && beta as usize <= order;
    let tail = if integer { 0.0 } else { between + partial.abs() };
    Ok(TruncSeries::signed(all[..=order].to_vec(), tail))
}

/// Coefficients `W_0..W_K` of `W = (1 - g)^beta - 1 + beta g` for a series
/// `g` with zero constant term, computed with the power recurrence for
/// `(1 - g)^beta` with the linear term split off.
pub fn binomial_remainder(g: &[f64], beta: f64) -> Vec<f64> {
    let len = g.len();
    let mut w = vec![0.0; len];
    // p[m] = (1 - g)^beta coefficient m for m >= 1
    let mut p = vec![0.0; len];
    for k in 1..len {
        let kf = k as f64;
        let mut acc = 0.0;
        for j in 1..k {
            let weight = (beta + 1.0) * j as f64 - kf;
            acc += weight * (-g[j]) * p[k - j];
        }
        w[k] = acc / kf;
        p[k] = w[k] - beta * g[k];
    }
    w
}

/// Reciprocal of a series with nonzero constant term, first `len` terms.
pub fn reciprocal(a: &[f64], len: usize) -> Result<Vec<f64>> {
    let a0 = a.first().copied().unwrap_or(0.0);
    if a0 == 0.0 {
        return Err(GwError::Domain {
            what: "series reciprocal constant term",
            value: a0,
        });
    }
    let mut out = vec![0.0; len];
    out[0] = 1.0 / a0;
    for k in 1..len {
        let mut s = 0.0;
        for j in 1..=k.min(a.len() - 1) {
            s += a[j] * out[k - j];
        }
        out[k] = -s / a0;
    }
    Ok(out)
}
