//! The explicit candidate `U(s) = V(s) - V(0)` for the invariant-measure
//! generating function, its coefficients, and the residual diagnostics that
//! measure how well it actually conjugates `f` to a unit shift.

use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::iteration::{SeriesIteration, Trajectory};
use crate::numerics::adaptive_simpson;
use crate::offspring::OffspringFamily;
use crate::series::{binomial_coefficients, mul_truncated, reciprocal};

/// Default index range for stationarity residuals.
pub const STATIONARITY_JMAX: usize = 16;

/// Default truncation of the stationarity sum.
pub const STATIONARITY_TRUNCATION: usize = 256;

/// `U(s) = V(s) - V(0)`.
pub fn u_of(fam: &OffspringFamily, s: f64) -> Result<f64> {
    Ok(fam.v(s)? - fam.v_complement(1.0))
}

/// `U'(s) = J(s) V(s) / (1 - s)`.
pub fn u_prime_of(fam: &OffspringFamily, s: f64) -> Result<f64> {
    let v = fam.v(s)?;
    Ok(fam.j(s)? * v / (1.0 - s))
}

/// `u_1 = (1 - p_0 - p_1) / (ν p_0^2)`.
pub fn u1_of(fam: &OffspringFamily) -> f64 {
    let p0 = fam.p0();
    (1.0 - p0 - fam.p1()) / (fam.nu() * p0 * p0)
}

/// Where a coefficient value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffSource {
    AnalyticFromV,
    EmpiricalLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UCoefficient {
    pub j: usize,
    pub value: f64,
    pub source: CoeffSource,
}

/// Taylor coefficients `u_0..u_J` of `V(s) - V(0)` around `s = 0`, computed
/// from the series of `Λ(1 - s)` at order `order`. `u_0 = 0`.
pub fn u_coeffs_analytic(fam: &OffspringFamily, jmax: usize, order: usize) -> Result<Vec<f64>> {
    if jmax > order {
        return Err(GwError::InvalidParameters {
            reason: format!("coefficient index {jmax} exceeds series order {order}"),
        });
    }
    let len = order + 1;
    let mut lam = vec![0.0; len];
    for atom in fam.atoms() {
        for (l, b) in lam.iter_mut().zip(binomial_coefficients(atom.exponent - 1.0, len)) {
            *l += atom.weight * b;
        }
    }
    let mut v = reciprocal(&lam, len)?;
    for x in v.iter_mut() {
        *x /= fam.nu();
    }
    v[0] = 0.0;
    v.truncate(jmax + 1);
    Ok(v)
}

/// `u_j(n) = p_j(n) / (f_{n+1}(0) - f_n(0))` along an `n` grid, with a
/// two-point Richardson extrapolation in `1/n` from the top of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCoeffs {
    pub order: usize,
    pub grid: Vec<usize>,
    /// `rows[i][j - 1] = u_j(grid[i])`.
    pub rows: Vec<Vec<f64>>,
    #[serde(with = "crate::serde_float::vec")]
    pub extrapolated: Vec<f64>,
    /// Change of the extrapolant when the top grid point is dropped.
    #[serde(with = "crate::serde_float::vec")]
    pub error_bar: Vec<f64>,
}

impl EmpiricalCoeffs {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j - 1]).collect()
    }
}

fn richardson(n0: usize, v0: f64, n1: usize, v1: f64) -> f64 {
    let r = n1 as f64 / n0 as f64;
    (r * v1 - v0) / (r - 1.0)
}

fn extrapolate(grid: &[usize], rows: &[Vec<f64>], jmax: usize) -> (Vec<f64>, Vec<f64>) {
    let m = grid.len();
    let mut ext = vec![f64::NAN; jmax];
    let mut err = vec![f64::NAN; jmax];
    for j in 0..jmax {
        if m >= 2 {
            ext[j] = richardson(grid[m - 2], rows[m - 2][j], grid[m - 1], rows[m - 1][j]);
        } else if m == 1 {
            ext[j] = rows[0][j];
        }
        if m >= 3 {
            let prev = richardson(grid[m - 3], rows[m - 3][j], grid[m - 2], rows[m - 2][j]);
            err[j] = (ext[j] - prev).abs();
        }
    }
    (ext, err)
}

fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GwError::InvalidParameters {
            reason: "n grid must be nonempty, positive and strictly increasing".into(),
        });
    }
    Ok(())
}

/// Empirical `u_1..u_J` from series iteration up to the top of `grid`.
pub fn u_coeffs_empirical(fam: &OffspringFamily, jmax: usize, grid: &[usize], order: usize) -> Result<EmpiricalCoeffs> {
    check_grid(grid)?;
    if jmax == 0 || jmax > order {
        return Err(GwError::InvalidParameters {
            reason: format!("need 1 <= jmax <= order, got jmax={jmax}, order={order}"),
        });
    }
    let top = *grid.last().expect("nonempty");
    crate::iteration::check_series_budget(top, order, crate::iteration::DEFAULT_SERIES_BUDGET)?;
    let mut it = SeriesIteration::new(fam, order)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        while it.n() < n {
            it.step();
        }
        let q = it.q0();
        let inc = q * fam.lambda_raw(q);
        if inc < crate::iteration::MIN_INCREMENT {
            return Err(GwError::PrecisionExhausted { n, max_usable: n - 1 });
        }
        rows.push((1..=jmax).map(|j| it.coeff(j) / inc).collect());
    }
    let (extrapolated, error_bar) = extrapolate(grid, &rows, jmax);
    Ok(EmpiricalCoeffs {
        order,
        grid: grid.to_vec(),
        rows,
        extrapolated,
        error_bar,
    })
}

/// Empirical `u_1(n)` from the scalar trajectory, cheap to large `n`.
pub fn u1_empirical(fam: &OffspringFamily, grid: &[usize]) -> Result<EmpiricalCoeffs> {
    check_grid(grid)?;
    let mut traj = Trajectory::new(fam, 0.0, true)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        let p = traj.advance_to(n)?;
        let inc = traj.increment();
        if inc < crate::iteration::MIN_INCREMENT {
            return Err(GwError::PrecisionExhausted { n, max_usable: n - 1 });
        }
        rows.push(vec![p.derivative.expect("tracked") / inc]);
    }
    let (extrapolated, error_bar) = extrapolate(grid, &rows, 1);
    Ok(EmpiricalCoeffs {
        order: 1,
        grid: grid.to_vec(),
        rows,
        extrapolated,
        error_bar,
    })
}

/// Abel-equation residual at one `(s, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbelResidual {
    pub n: usize,
    pub s: f64,
    /// `1/Λ(R_n(s)) - 1/Λ(1-s)`.
    pub raw: f64,
    /// `A_n(s) = U(f_n(s)) - U(s) - n = (raw - νn)/ν`.
    pub gf_form: f64,
    /// `A_n(s) / ln n`; absent for `n <= 1`.
    pub per_ln_n: Option<f64>,
    /// `(raw - νn) / ln(Λ(1-s) ν n + 1)`, whose candidate limit is `(1+ν)/2`.
    pub log_ratio: Option<f64>,
}

fn abel_point(fam: &OffspringFamily, s: f64, y0: f64, n: usize, r: f64) -> AbelResidual {
    let nu = fam.nu();
    let lam0 = fam.lambda_raw(y0);
    let raw = 1.0 / fam.lambda_raw(r) - 1.0 / lam0;
    let excess = raw - nu * n as f64;
    let gf_form = excess / nu;
    let ln_n = (n as f64).ln();
    let ln_arg = (lam0 * nu * n as f64).ln_1p();
    AbelResidual {
        n,
        s,
        raw: if n == 0 { 0.0 } else { raw },
        gf_form: if n == 0 { 0.0 } else { gf_form },
        per_ln_n: (n > 1).then(|| gf_form / ln_n),
        log_ratio: (n > 0).then(|| excess / ln_arg),
    }
}

/// `A_n(s)` and its normalisations.
pub fn abel_residual(fam: &OffspringFamily, s: f64, n: usize) -> Result<AbelResidual> {
    let mut traj = Trajectory::new(fam, s, false)?;
    let p = traj.advance_to(n)?;
    Ok(abel_point(fam, s, 1.0 - s, n, p.complement))
}

/// `A_n(s)` on an increasing `n` grid from one trajectory.
pub fn abel_residual_table(fam: &OffspringFamily, s: f64, grid: &[usize]) -> Result<Vec<AbelResidual>> {
    let mut traj = Trajectory::new(fam, s, false)?;
    let mut out = Vec::with_capacity(grid.len());
    for &n in grid {
        let p = traj.advance_to(n)?;
        out.push(abel_point(fam, s, 1.0 - s, n, p.complement));
    }
    Ok(out)
}

/// Cross-check of `U(s)` against `∫_0^s ψ(y) / ((1-y) Λ(1-y)) dy` with
/// `ψ = J/ν`, plus a pointwise scan of `f'(y) <= ψ(y) <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralCheck {
    pub s: f64,
    pub integral: f64,
    pub closed_form: f64,
    pub difference: f64,
    pub samples: usize,
    /// Sample points where the bracket fails.
    pub bracket_violations: Vec<f64>,
}

pub fn integral_form_check(fam: &OffspringFamily, s: f64, samples: usize, tol: f64) -> Result<IntegralCheck> {
    let closed_form = u_of(fam, s)?;
    let nu = fam.nu();
    let psi = |y: f64| fam.j_complement(1.0 - y) / nu;
    let integrand = |y: f64| {
        let c = 1.0 - y;
        psi(y) / (c * fam.lambda_raw(c))
    };
    let integral = adaptive_simpson(integrand, 0.0, s, tol, 50)?;
    let mut bracket_violations = Vec::new();
    for i in 0..samples {
        let y = if samples == 1 { 0.0 } else { s * i as f64 / (samples - 1) as f64 };
        let p = psi(y);
        let lower = fam.f_prime_complement(1.0 - y);
        if p < lower || p > 1.0 + 1e-12 {
            bracket_violations.push(y);
        }
    }
    Ok(IntegralCheck {
        s,
        integral,
        closed_form,
        difference: (integral - closed_form).abs(),
        samples,
        bracket_violations,
    })
}

/// `r_j = u_j - sum_{k <= J} u_k P_kj(1)` for `j = 1..=jmax`, where
/// `P_kj(1) = [s^j] f(s)^k`.
pub fn stationarity_residuals(fam: &OffspringFamily, u: &[f64], jmax: usize) -> Result<Vec<f64>> {
    let big_j = u.len().saturating_sub(1);
    if jmax > big_j {
        return Err(GwError::InvalidParameters {
            reason: format!("need jmax <= truncation, got {jmax} > {big_j}"),
        });
    }
    let len = jmax + 1;
    let f = fam.coefficients(len);
    let mut power = f.clone();
    let mut acc = vec![0.0; len];
    for k in 1..=big_j {
        if k > 1 {
            power = mul_truncated(&power, &f, len);
        }
        for j in 1..len {
            acc[j] += u[k] * power[j];
        }
    }
    Ok((1..len).map(|j| u[j] - acc[j]).collect())
}

/// Partial sums `sum_{k <= J} u_k p_0^k` at several truncations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTrace {
    pub truncations: Vec<usize>,
    pub sums: Vec<f64>,
    /// `U(p_0)`, the value the full series converges to.
    pub series_limit: f64,
}

impl NormalizationTrace {
    pub fn value(&self) -> f64 {
        *self.sums.last().expect("nonempty")
    }

    /// Successive differences shrink and the last one is below `tol`.
    pub fn converged(&self, tol: f64) -> bool {
        let d: Vec<f64> = self.sums.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        d.last().is_some_and(|&x| x <= tol) && d.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

pub fn normalization_trace(fam: &OffspringFamily, truncations: &[usize]) -> Result<NormalizationTrace> {
    let top = *truncations.iter().max().ok_or_else(|| GwError::InvalidParameters {
        reason: "empty truncation list".into(),
    })?;
    let u = u_coeffs_analytic(fam, top, top)?;
    let p0 = fam.p0();
    let sums = truncations
        .iter()
        .map(|&jj| {
            let mut x = 1.0;
            let mut s = 0.0;
            for uk in &u[1..=jj] {
                x *= p0;
                s += uk * x;
            }
            s
        })
        .collect();
    Ok(NormalizationTrace {
        truncations: truncations.to_vec(),
        sums,
        series_limit: u_of(fam, p0)?,
    })
}

/// `U` together with a table of its coefficients.
#[derive(Debug, Clone)]
pub struct InvariantMeasure<'a> {
    fam: &'a OffspringFamily,
    coeffs: Vec<UCoefficient>,
}

impl<'a> InvariantMeasure<'a> {
    pub fn analytic(fam: &'a OffspringFamily, jmax: usize, order: usize) -> Result<Self> {
        let u = u_coeffs_analytic(fam, jmax, order)?;
        let coeffs = u
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, &value)| UCoefficient {
                j,
                value,
                source: CoeffSource::AnalyticFromV,
            })
            .collect();
        Ok(Self { fam, coeffs })
    }

    /// Replace `u_1..` with the extrapolated empirical limits.
    pub fn with_empirical(mut self, emp: &EmpiricalCoeffs) -> Self {
        for (i, &v) in emp.extrapolated.iter().enumerate() {
            if let Some(c) = self.coeffs.get_mut(i) {
                c.value = v;
                c.source = CoeffSource::EmpiricalLimit;
            }
        }
        self
    }

    pub fn family(&self) -> &OffspringFamily {
        self.fam
    }

    pub fn u(&self, s: f64) -> Result<f64> {
        u_of(self.fam, s)
    }

    pub fn u_prime(&self, s: f64) -> Result<f64> {
        u_prime_of(self.fam, s)
    }

    pub fn coeffs(&self) -> &[UCoefficient] {
        &self.coeffs
    }
}

/// The `invariant` object of a campaign report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub family: String,
    pub u1_analytic: f64,
    pub u_coeffs: Vec<UCoefficient>,
    pub stationarity_residuals: Vec<f64>,
    /// Same residuals at doubled truncation.
    pub stationarity_residuals_doubled: Vec<f64>,
    pub normalization_sum: f64,
    pub normalization: NormalizationTrace,
    pub abel_residual_table: Vec<AbelResidual>,
    pub u1_empirical: EmpiricalCoeffs,
}

impl InvariantReport {
    pub fn build(fam: &OffspringFamily, jmax: usize, truncation: usize, abel_grid: &[usize]) -> Result<Self> {
        let measure = InvariantMeasure::analytic(fam, jmax, truncation.max(jmax))?;
        let u = u_coeffs_analytic(fam, truncation, truncation)?;
        let u2 = u_coeffs_analytic(fam, 2 * truncation, 2 * truncation)?;
        let normalization = normalization_trace(fam, &[truncation / 4, truncation / 2, truncation, 2 * truncation])?;
        Ok(Self {
            family: fam.label(),
            u1_analytic: u1_of(fam),
            u_coeffs: measure.coeffs().to_vec(),
            stationarity_residuals: stationarity_residuals(fam, &u, STATIONARITY_JMAX.min(truncation))?,
            stationarity_residuals_doubled: stationarity_residuals(fam, &u2, STATIONARITY_JMAX.min(truncation))?,
            normalization_sum: normalization.value(),
            normalization,
            abel_residual_table: abel_residual_table(fam, 0.0, abel_grid)?,
            u1_empirical: u1_empirical(fam, abel_grid)?,
        })
    }

    /// `|r_j(2J) - r_j(J)| <= 0.1 |r_j(J)| + 1e-9` for every reported `j`.
    pub fn stationarity_stable(&self) -> bool {
        self.stationarity_residuals
            .iter()
            .zip(&self.stationarity_residuals_doubled)
            .all(|(a, b)| (b - a).abs() <= 0.1 * a.abs() + 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam_a() -> OffspringFamily {
        OffspringFamily::stable(0.5, 0.5).unwrap()
    }

    fn fam_b() -> OffspringFamily {
        OffspringFamily::perturbed(0.5, 0.4, 0.2).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn closed_forms() {
        let a = fam_a();
        assert_eq!(u_of(&a, 0.0).unwrap(), 0.0);
        assert!((u_of(&a, 0.5).unwrap() - (4.0 / 0.5f64.sqrt() - 4.0)).abs() < 1e-13);
        assert!((u_prime_of(&a, 0.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((u_prime_of(&a, 0.5).unwrap() - 2.0 * 0.5f64.powf(-1.5)).abs() < 1e-12);
        let b = fam_b();
        let lam = 0.4 * 0.5f64.sqrt() + 0.08 * 0.5;
        let want = 1.0 / (0.5 * lam) - 1.0 / (0.5 * 0.48);
        assert!((u_of(&b, 0.5).unwrap() - want).abs() < 1e-12);
        assert!((u_of(&b, 0.5).unwrap() - 2.0283005).abs() < 1e-6);
        assert!((u_prime_of(&b, 0.0).unwrap() - 2.4305556).abs() < 1e-7);
        assert!(matches!(u_of(&a, 1.0), Err(GwError::Pole { .. })));
    }

    #[test]
    fn u1_matches_derivative_at_zero() {
        for fam in [fam_a(), fam_b()] {
            assert!((u1_of(&fam) - u_prime_of(&fam, 0.0).unwrap()).abs() < 1e-12);
        }
        assert!((u1_of(&fam_a()) - 2.0).abs() < 1e-14);
        assert!((u1_of(&fam_b()) - 0.28 / (0.5 * 0.2304)).abs() < 1e-12);
    }

    #[test]
    fn derivative_by_finite_difference() {
        for fam in [fam_a(), fam_b()] {
            for i in 1..10 {
                let s = i as f64 / 10.0;
                let h = 1e-5;
                let fd = (u_of(&fam, s + h).unwrap() - u_of(&fam, s - h).unwrap()) / (2.0 * h);
                assert!(rel(fd, u_prime_of(&fam, s).unwrap()) < 1e-6, "s={s}");
            }
        }
    }

    #[test]
    fn analytic_coefficients_family_a() {
        // 4 (1-s)^{-1/2} - 4, coefficients 4 prod_{i<k}(1/2 + i)/k!
        let u = u_coeffs_analytic(&fam_a(), 20, 64).unwrap();
        let mut c = 4.0;
        for (k, &uk) in u.iter().enumerate().skip(1) {
            c *= (k as f64 - 0.5) / k as f64;
            assert!(rel(uk, c) < 1e-13, "k={k}");
            assert!(uk > 0.0);
        }
        assert!((u[1] - 2.0).abs() < 1e-12);
        assert!((u[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn analytic_first_coefficient_family_b() {
        let b = fam_b();
        let u = u_coeffs_analytic(&b, 4, 16).unwrap();
        assert!((u[1] - u1_of(&b)).abs() < 1e-10);
        assert!(u_coeffs_analytic(&b, 17, 16).is_err());
    }

    #[test]
    fn empirical_first_step() {
        let e = u_coeffs_empirical(&fam_a(), 3, &[1, 2, 4], 32).unwrap();
        assert!((e.rows[0][0] - 0.25 / 0.1767767).abs() < 1e-6);
        assert!((e.rows[0][0] - 2f64.sqrt()).abs() < 1e-12);
        assert!(e.rows.iter().flatten().all(|&x| x >= 0.0));
        let s = u1_empirical(&fam_a(), &[1, 2, 4]).unwrap();
        for (a, b) in s.column(1).iter().zip(e.column(1)) {
            assert!(rel(*a, b) < 1e-12);
        }
    }

    #[test]
    fn abel_small_n() {
        let a = fam_a();
        let r0 = abel_residual(&a, 0.3, 0).unwrap();
        assert_eq!((r0.raw, r0.gf_form), (0.0, 0.0));
        let r1 = abel_residual(&a, 0.0, 1).unwrap();
        assert!((r1.raw - (1.0 / (0.5 * 0.5f64.sqrt()) - 2.0)).abs() < 1e-12);
        assert!((r1.raw - 0.8284271).abs() < 1e-7);
        assert!((r1.gf_form - 0.3284271 / 0.5).abs() < 1e-6);
        assert!(r1.per_ln_n.is_none());
    }

    #[test]
    fn abel_identity_for_differences_at_p0() {
        // U_n(p_0) = 1 exactly, so A_n(p_0) = A_{n+1}(0) - A_1(0)
        let a = fam_a();
        let p0 = a.p0();
        let lhs = abel_residual(&a, p0, 50).unwrap().gf_form;
        let rhs = abel_residual(&a, 0.0, 51).unwrap().gf_form - abel_residual(&a, 0.0, 1).unwrap().gf_form;
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn integral_form() {
        let a = fam_a();
        let z = integral_form_check(&a, 0.0, 5, 1e-12).unwrap();
        assert_eq!(z.difference, 0.0);
        let c = integral_form_check(&a, 0.5, 33, 1e-12).unwrap();
        assert!(c.difference <= 1e-8);
        assert!(c.bracket_violations.is_empty());
        // J(0) > ν for family B: ψ(0) > 1
        let b = integral_form_check(&fam_b(), 0.5, 33, 1e-12).unwrap();
        assert!(b.difference <= 1e-8);
        assert!(b.bracket_violations.contains(&0.0));
    }

    #[test]
    fn stationarity_stable_under_doubling() {
        for fam in [fam_a(), fam_b()] {
            let u = u_coeffs_analytic(&fam, 256, 256).unwrap();
            let u2 = u_coeffs_analytic(&fam, 512, 512).unwrap();
            let r = stationarity_residuals(&fam, &u, 16).unwrap();
            let r2 = stationarity_residuals(&fam, &u2, 16).unwrap();
            assert_eq!(r.len(), 16);
            for (a, b) in r.iter().zip(&r2) {
                assert!((b - a).abs() <= 0.1 * a.abs() + 1e-9);
            }
        }
    }

    #[test]
    fn normalization_converges_to_u_at_p0() {
        let t = normalization_trace(&fam_a(), &[16, 32, 64, 128, 256]).unwrap();
        assert!(t.converged(1e-6));
        assert!((t.value() - t.series_limit).abs() < 1e-9);
    }
}
