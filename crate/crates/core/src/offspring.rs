//! Critical offspring laws with infinite variance.
//!
//! Every family here has a generating function of the form
//!
//! ```text
//! f(s) = s + sum_i a_i (1 - s)^{beta_i},   1 < beta_1 < beta_2 < ...
//! ```
//!
//! so that `f(s) - s = (1 - s) Λ(1 - s)` with `Λ(y) = sum_i a_i y^{beta_i - 1}`,
//! and `Λ(y) = y^ν L(1/y)` for a slowly varying `L`. The two built-in
//! choices are a constant `L` and `L(x) = c (1 + d x^{-ν})`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::numerics::{neumaier_sum, two_sum};

/// Depth to which coefficient nonnegativity is certified at construction.
pub const CERTIFY_DEPTH: usize = 10_000;

/// Coefficients below this are treated as negative by validation.
pub const NEGATIVE_TOLERANCE: f64 = -1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SlowVariation {
    /// `L(x) = c`.
    #[serde(rename = "stable")]
    Constant { c: f64 },
    /// `L(x) = c + c d x^{-ν}`.
    #[serde(rename = "perturbed")]
    Perturbed { c: f64, d: f64 },
}

/// One term `weight * (1 - s)^exponent` of `f(s) - s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub exponent: f64,
}

/// The slowly varying part `L(x) = sum_i a_i x^{ν - (beta_i - 1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvFunction {
    nu: f64,
    atoms: Vec<Atom>,
}

impl SvFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * x.powf(self.nu - (a.exponent - 1.0)))
            .sum()
    }

    /// `L(∞-)`; finite for both built-in families.
    pub fn limit(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.exponent - 1.0 - self.nu).abs() < 1e-15)
            .map(|a| a.weight)
            .sum()
    }

    /// Decay exponent of `L(x) - C_L`.
    pub fn remainder_exponent(&self) -> f64 {
        self.nu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringFamily {
    nu: f64,
    sv: SlowVariation,
    #[serde(skip)]
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub depth: usize,
    pub coefficients: Vec<f64>,
    pub min_coefficient: f64,
    pub min_index: usize,
    pub truncated_mass: f64,
    /// Bound on `sum_{k >= depth} |p_k|`.
    pub tail_bound: f64,
    /// `f'(1-) = 1`, which holds analytically since every exponent exceeds one.
    pub mean_is_one: bool,
    /// `sum_{k < depth} k p_k`, which converges slowly to one.
    pub partial_mean: f64,
    pub critical: bool,
    /// The dominant term controls the sign of every coefficient past `depth`.
    pub tail_sign_ok: bool,
}

impl ValidationReport {
    /// `|1 - truncated_mass| <= tail_bound + eps`, with no excess mass.
    pub fn brackets_unit_mass(&self, eps: f64) -> bool {
        self.truncated_mass <= 1.0 + eps && (1.0 - self.truncated_mass).abs() <= self.tail_bound + eps
    }
}

impl OffspringFamily {
    /// Build and certify a family: parameters in range and coefficients
    /// nonnegative to [`CERTIFY_DEPTH`] with a controlled tail.
    pub fn new(nu: f64, sv: SlowVariation) -> Result<Self> {
        let fam = Self::unchecked(nu, sv)?;
        let report = fam.validate(CERTIFY_DEPTH)?;
        if !report.tail_sign_ok {
            return Err(GwError::InvalidParameters {
                reason: format!("coefficient signs past index {CERTIFY_DEPTH} are not controlled"),
            });
        }
        Ok(fam)
    }

    pub fn stable(nu: f64, c: f64) -> Result<Self> {
        Self::new(nu, SlowVariation::Constant { c })
    }

    pub fn perturbed(nu: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(nu, SlowVariation::Perturbed { c, d })
    }

    /// Range checks only; coefficient signs are not certified.
    pub fn unchecked(nu: f64, sv: SlowVariation) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(GwError::InvalidParameters {
                reason: format!("nu = {nu} must lie in (0, 1)"),
            });
        }
        let atoms = match sv {
            SlowVariation::Constant { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(GwError::InvalidParameters {
                        reason: format!("c = {c} must be positive"),
                    });
                }
                vec![Atom {
                    weight: c,
                    exponent: 1.0 + nu,
                }]
            }
            SlowVariation::Perturbed { c, d } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(GwError::InvalidParameters {
                        reason: format!("c = {c} must be positive"),
                    });
                }
                if !(d > -1.0 && d.is_finite()) {
                    return Err(GwError::InvalidParameters {
                        reason: format!("d = {d} must exceed -1"),
                    });
                }
                vec![
                    Atom {
                        weight: c,
                        exponent: 1.0 + nu,
                    },
                    Atom {
                        weight: c * d,
                        exponent: 1.0 + 2.0 * nu,
                    },
                ]
            }
        };
        Ok(Self { nu, sv, atoms })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn slow_variation(&self) -> SlowVariation {
        self.sv
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn sv(&self) -> SvFunction {
        SvFunction {
            nu: self.nu,
            atoms: self.atoms.clone(),
        }
    }

    /// `L(x)`.
    pub fn l(&self, x: f64) -> f64 {
        self.sv().eval(x)
    }

    /// `C_L = L(∞-)`.
    pub fn c_l(&self) -> f64 {
        match self.sv {
            SlowVariation::Constant { c } | SlowVariation::Perturbed { c, .. } => c,
        }
    }

    pub fn label(&self) -> String {
        match self.sv {
            SlowVariation::Constant { c } => format!("stable(nu={},c={})", self.nu, c),
            SlowVariation::Perturbed { c, d } => format!("perturbed(nu={},c={},d={})", self.nu, c, d),
        }
    }

    pub fn p0(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn p1(&self) -> f64 {
        1.0 - self.atoms.iter().map(|a| a.weight * a.exponent).sum::<f64>()
    }

    /// Iterator over `p_0, p_1, p_2, ...`.
    pub fn coefficient_stream(&self) -> CoefficientStream {
        CoefficientStream::new(&self.atoms)
    }

    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        self.coefficient_stream().take(len).collect()
    }

    /// Iterator over the survival function `P(X > k)`, `k = 0, 1, ...`.
    pub fn survival_stream(&self) -> SurvivalStream {
        SurvivalStream(AtomStream::new(&self.atoms, 1.0))
    }

    fn check_unit(what: &'static str, s: f64) -> Result<()> {
        if (0.0..=1.0).contains(&s) {
            Ok(())
        } else {
            Err(GwError::Domain { what, value: s })
        }
    }

    /// `f(s)`.
    pub fn f(&self, s: f64) -> Result<f64> {
        Self::check_unit("f", s)?;
        Ok(self.f_raw(s))
    }

    pub(crate) fn f_raw(&self, s: f64) -> f64 {
        let y = 1.0 - s;
        s + self.atoms.iter().map(|a| a.weight * y.powf(a.exponent)).sum::<f64>()
    }

    /// `f(s) - s` evaluated through a compensated sum, so that the rounding of
    /// `f(s)` itself does not dominate near `s = 1`.
    pub fn f_excess(&self, s: f64) -> Result<f64> {
        Self::check_unit("f", s)?;
        let y = 1.0 - s;
        let excess: f64 = self.atoms.iter().map(|a| a.weight * y.powf(a.exponent)).sum();
        let (hi, lo) = two_sum(s, excess);
        Ok((hi - s) + lo)
    }

    /// `f'(s)`.
    pub fn f_prime(&self, s: f64) -> Result<f64> {
        Self::check_unit("f'", s)?;
        Ok(self.f_prime_complement(1.0 - s))
    }

    /// `f'(1 - y)`.
    pub fn f_prime_complement(&self, y: f64) -> f64 {
        1.0 - self.one_minus_f_prime_complement(y)
    }

    /// `1 - f'(1 - y) = sum_i a_i beta_i y^{beta_i - 1}`.
    pub fn one_minus_f_prime_complement(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * a.exponent * y.powf(a.exponent - 1.0))
            .sum()
    }

    /// `1 - f(1 - r) = r (1 - Λ(r))`: one generation in complement form.
    pub fn complement_step(&self, r: f64) -> f64 {
        r - r * self.lambda_raw(r)
    }

    /// `Λ(y) = (f(1-y) - (1-y)) / y`.
    pub fn lambda(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(GwError::Domain { what: "Λ", value: y });
        }
        Ok(self.lambda_raw(y))
    }

    pub(crate) fn lambda_raw(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * y.powf(a.exponent - 1.0))
            .sum()
    }

    /// `J(s) = (1 - f'(s)) / Λ(1 - s) - 1`.
    pub fn j(&self, s: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&s) {
            return Err(GwError::Domain { what: "J", value: s });
        }
        Ok(self.j_complement(1.0 - s))
    }

    /// `J(1 - y)`.
    pub fn j_complement(&self, y: f64) -> f64 {
        self.one_minus_f_prime_complement(y) / self.lambda_raw(y) - 1.0
    }

    /// `V(s) = 1 / (ν Λ(1 - s))`.
    pub fn v(&self, s: f64) -> Result<f64> {
        if s == 1.0 {
            return Err(GwError::Pole { what: "V" });
        }
        if !(0.0..1.0).contains(&s) {
            return Err(GwError::Domain { what: "V", value: s });
        }
        Ok(self.v_complement(1.0 - s))
    }

    pub fn v_complement(&self, y: f64) -> f64 {
        1.0 / (self.nu * self.lambda_raw(y))
    }

    /// `ρ(s) = |ν - J(s)|`.
    pub fn rho(&self, s: f64) -> Result<f64> {
        Ok((self.nu - self.j(s)?).abs())
    }

    pub fn rho_complement(&self, y: f64) -> f64 {
        (self.nu - self.j_complement(y)).abs()
    }

    /// `δ(y)` defined by `y Λ'(y) / (ν Λ(y)) = 1 + δ(y)`. Since
    /// `1 - f'(1-y) = Λ(y) + y Λ'(y)`, this is `J(1-y)/ν - 1`.
    pub fn delta(&self, y: f64) -> f64 {
        self.j_complement(y) / self.nu - 1.0
    }

    /// `α_λ(x) = L(λx) / L(x) - 1`.
    pub fn alpha_lambda(&self, lam: f64, x: f64) -> Result<f64> {
        if !(lam > 0.0) {
            return Err(GwError::Domain { what: "α_λ scale", value: lam });
        }
        if !(x >= 1.0) {
            return Err(GwError::Domain { what: "α_λ argument", value: x });
        }
        Ok(match self.sv {
            SlowVariation::Constant { .. } => 0.0,
            SlowVariation::Perturbed { d, .. } => {
                let t = d * x.powf(-self.nu);
                t * (lam.powf(-self.nu) - 1.0) / (1.0 + t)
            }
        })
    }

    /// Coefficient report to `depth` terms with an analytic tail bound.
    pub fn validate(&self, depth: usize) -> Result<ValidationReport> {
        if depth < 2 {
            return Err(GwError::InvalidOrder { order: depth, min: 2 });
        }
        let coefficients = self.coefficients(depth);
        let (min_index, &min_coefficient) = coefficients
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("depth >= 2");
        if let Some((index, &value)) = coefficients.iter().enumerate().find(|(_, &p)| p < NEGATIVE_TOLERANCE) {
            return Err(GwError::InvalidFamily { index, value });
        }
        let truncated_mass = neumaier_sum(coefficients.iter().copied());
        let partial_mean = neumaier_sum(coefficients.iter().enumerate().map(|(k, p)| k as f64 * p));

        // |b_{k+1}/b_k| = (k - beta)/(k + 1) <= (k/(k+1))^{beta+1}, hence
        // sum_{k > D} |b_k| <= |b_D| D / beta for D > beta.
        let last = depth - 1;
        let mut tail_bound = 0.0;
        let mut last_terms = Vec::with_capacity(self.atoms.len());
        for atom in &self.atoms {
            let b = crate::series::binomial_coefficients(atom.exponent, depth);
            let b_last = b[last].abs();
            last_terms.push(atom.weight.abs() * b_last);
            tail_bound += if (last as f64) > atom.exponent {
                atom.weight.abs() * b_last * last as f64 / atom.exponent
            } else {
                f64::INFINITY
            };
        }
        let tail_sign_ok = match last_terms.as_slice() {
            [_] => (last as f64) > self.atoms[0].exponent,
            [lead, rest @ ..] => {
                let max_exp = self.atoms.iter().map(|a| a.exponent).fold(0.0, f64::max);
                (last as f64) > max_exp && rest.iter().sum::<f64>() < *lead
            }
            [] => false,
        };
        Ok(ValidationReport {
            depth,
            coefficients,
            min_coefficient,
            min_index,
            truncated_mass,
            tail_bound,
            mean_is_one: self.atoms.iter().all(|a| a.exponent > 1.0),
            partial_mean,
            critical: (self.f_prime_complement(0.0) - 1.0).abs() == 0.0,
            tail_sign_ok,
        })
    }
}

/// Running sums `sum_i a_i [s^k] (1-s)^{beta_i - shift}` for `k = 0, 1, ...`,
/// by the ratio recurrence of the binomial coefficients.
#[derive(Debug, Clone)]
struct AtomStream {
    k: usize,
    weights: Vec<f64>,
    exponents: Vec<f64>,
    current: Vec<f64>,
}

impl AtomStream {
    fn new(atoms: &[Atom], shift: f64) -> Self {
        Self {
            k: 0,
            weights: atoms.iter().map(|a| a.weight).collect(),
            exponents: atoms.iter().map(|a| a.exponent - shift).collect(),
            current: vec![1.0; atoms.len()],
        }
    }

    fn next_value(&mut self) -> (usize, f64) {
        let k = self.k;
        if k > 0 {
            let kf = k as f64;
            for (b, beta) in self.current.iter_mut().zip(&self.exponents) {
                *b *= (kf - 1.0 - beta) / kf;
            }
        }
        self.k += 1;
        (k, self.weights.iter().zip(&self.current).map(|(w, b)| w * b).sum())
    }
}

/// Offspring probabilities `p_0, p_1, ...`.
#[derive(Debug, Clone)]
pub struct CoefficientStream(AtomStream);

impl CoefficientStream {
    fn new(atoms: &[Atom]) -> Self {
        Self(AtomStream::new(atoms, 0.0))
    }
}

impl Iterator for CoefficientStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let (k, v) = self.0.next_value();
        Some(if k == 1 { v + 1.0 } else { v })
    }
}

/// `P(X > k)` for `k = 0, 1, ...`. The partial sums of `(1-s)^beta` are the
/// coefficients of `(1-s)^{beta-1}`, so tail probabilities come out of a
/// recurrence with full relative precision instead of `1 - cdf`.
#[derive(Debug, Clone)]
pub struct SurvivalStream(AtomStream);

impl Iterator for SurvivalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let (k, v) = self.0.next_value();
        Some(if k == 0 { 1.0 - v } else { -v })
    }
}

/// Family grammar: `family=stable nu=<f> c=<f>` or
/// `family=perturbed nu=<f> c=<f> d=<f>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub nu: f64,
    pub sv: SlowVariation,
}

impl FamilySpec {
    pub fn build(&self) -> Result<OffspringFamily> {
        OffspringFamily::new(self.nu, self.sv)
    }

    pub fn from_parts(kind: &str, nu: f64, c: f64, d: Option<f64>) -> Result<Self> {
        let sv = match (kind, d) {
            ("stable", None) => SlowVariation::Constant { c },
            ("stable", Some(_)) => return Err(GwError::Parse("family=stable takes no d parameter".into())),
            ("perturbed", Some(d)) => SlowVariation::Perturbed { c, d },
            ("perturbed", None) => return Err(GwError::Parse("family=perturbed needs d=<float>".into())),
            (other, _) => return Err(GwError::Parse(format!("unknown family '{other}'"))),
        };
        Ok(Self { nu, sv })
    }
}

impl FromStr for FamilySpec {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        let mut kind = None;
        let mut nu = None;
        let mut c = None;
        let mut d = None;
        for token in s.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| GwError::Parse(format!("expected key=value, got '{token}'")))?;
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| GwError::Parse(format!("'{value}' is not a number for {key}")))
            };
            match key {
                "family" => kind = Some(value.to_string()),
                "nu" => nu = Some(num()?),
                "c" => c = Some(num()?),
                "d" => d = Some(num()?),
                other => return Err(GwError::Parse(format!("unknown key '{other}'"))),
            }
        }
        let kind = kind.ok_or_else(|| GwError::Parse("missing family=".into()))?;
        let nu = nu.ok_or_else(|| GwError::Parse("missing nu=".into()))?;
        let c = c.ok_or_else(|| GwError::Parse("missing c=".into()))?;
        Self::from_parts(&kind, nu, c, d)
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sv {
            SlowVariation::Constant { c } => write!(f, "family=stable nu={} c={}", self.nu, c),
            SlowVariation::Perturbed { c, d } => write!(f, "family=perturbed nu={} c={} d={}", self.nu, c, d),
        }
    }
}

impl From<&OffspringFamily> for FamilySpec {
    fn from(f: &OffspringFamily) -> Self {
        Self { nu: f.nu, sv: f.sv }
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

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn f_examples() {
        assert_eq!(fam_a().f(0.0).unwrap(), 0.5);
        assert!(close(fam_a().f(0.5).unwrap(), 0.5 + 0.5 * 0.5f64.powf(1.5), 1e-16));
        assert!(close(fam_a().f(0.5).unwrap(), 0.6767767, 5e-8));
        assert!(close(fam_b().f(0.0).unwrap(), 0.48, 1e-16));
        assert_eq!(fam_a().f(1.0).unwrap(), 1.0);
        assert!(fam_a().f(1.1).is_err());
    }

    #[test]
    fn f_bounds_and_monotone() {
        for fam in [fam_a(), fam_b()] {
            let mut prev = fam.f(0.0).unwrap();
            for i in 1..=100 {
                let s = i as f64 / 100.0;
                let v = fam.f(s).unwrap();
                assert!(v >= s && v <= 1.0);
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(fam_a().lambda(1.0).unwrap(), 0.5);
        assert_eq!(fam_a().lambda(1.0).unwrap(), fam_a().p0());
        assert!(close(fam_a().lambda(0.5).unwrap(), 0.5 * 0.5f64.sqrt(), 1e-16));
        assert!(close(fam_a().lambda(0.5).unwrap(), 0.3535534, 5e-8));
        assert!(close(fam_b().lambda(1.0).unwrap(), 0.48, 1e-16));
        assert!(fam_a().lambda(0.0).is_err());
        assert!(fam_a().lambda(-1.0).is_err());
    }

    #[test]
    fn j_examples() {
        for i in 0..100 {
            let s = i as f64 / 100.0;
            assert!(close(fam_a().j(s).unwrap(), 0.5, 1e-15));
        }
        assert!(close(fam_b().j(0.0).unwrap(), (0.6 + 0.16) / (0.4 + 0.08) - 1.0, 1e-15));
        assert!(close(fam_b().j(0.0).unwrap(), 0.5833333, 5e-8));
        assert!(close(fam_b().j_complement(1e-10), 0.5, 1e-6));
    }

    #[test]
    fn v_examples() {
        assert!(close(fam_a().v(0.0).unwrap(), 4.0, 1e-15));
        assert!(close(fam_a().v(0.5).unwrap(), 4.0 / 0.5f64.sqrt(), 1e-14));
        assert!(close(fam_a().v(0.5).unwrap(), 5.6568542, 5e-8));
        assert!(close(fam_b().v(0.0).unwrap(), 1.0 / (0.5 * 0.48), 1e-14));
        assert!(matches!(fam_a().v(1.0), Err(GwError::Pole { .. })));
        let mut prev = 0.0;
        for i in 0..100 {
            let v = fam_b().v(i as f64 / 100.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(fam_a().v_complement(1e-12) > 1e6);
    }

    #[test]
    fn rho_examples() {
        assert_eq!(fam_a().rho(0.9).unwrap(), 0.0);
        assert!(close(fam_b().rho(0.0).unwrap(), (0.5 - 0.5833333333333333f64).abs(), 1e-15));
        let y: f64 = 1e-6;
        let ratio = fam_b().rho_complement(y) / y.powf(0.5);
        // analytic limit 0.04/0.4
        assert!((ratio - 0.1).abs() <= 0.005, "{ratio}");
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(fam_a().alpha_lambda(2.0, 100.0).unwrap(), 0.0);
        assert_eq!(fam_a().alpha_lambda(0.3, 1e6).unwrap(), 0.0);
        let direct = 0.2 * 0.1 * (2f64.powf(-0.5) - 1.0) / 1.02;
        let v = fam_b().alpha_lambda(2.0, 100.0).unwrap();
        assert!(close(v, direct, 1e-16));
        assert!(close(v, -0.0057430, 5e-8));
        // bounded after scaling by x^ν
        let mut sup = 0.0f64;
        for e in 2..=8 {
            let x = 10f64.powi(e);
            sup = sup.max(fam_b().alpha_lambda(2.0, x).unwrap().abs() * x.sqrt());
        }
        assert!(sup < 0.2 * (1.0 - 2f64.powf(-0.5)) + 1e-12);
        // matches the direct ratio of L values
        let l = fam_b().sv();
        let via_l = l.eval(200.0) / l.eval(100.0) - 1.0;
        assert!(close(v, via_l, 1e-15));
    }

    #[test]
    fn validate_examples() {
        let r = fam_a().validate(4).unwrap();
        assert_eq!(r.coefficients.len(), 4);
        for (got, want) in r.coefficients.iter().zip([0.5, 0.25, 0.1875, 0.03125]) {
            assert!(close(*got, want, 1e-16));
        }
        let r = fam_b().validate(3).unwrap();
        for (got, want) in r.coefficients.iter().zip([0.48, 0.24, 0.23]) {
            assert!(close(*got, want, 1e-15));
        }
        let bad = OffspringFamily::unchecked(0.5, SlowVariation::Constant { c: 0.8 }).unwrap();
        match bad.validate(10) {
            Err(GwError::InvalidFamily { index, value }) => {
                assert_eq!(index, 1);
                assert!(close(value, -0.2, 1e-15));
            }
            other => panic!("expected invalid family, got {other:?}"),
        }
        assert!(OffspringFamily::stable(0.5, 0.8).is_err());
        assert!(fam_a().validate(1).is_err());
    }

    #[test]
    fn coefficients_match_binomial_oracle() {
        let p = fam_a().coefficients(30);
        let mut b = 1.0f64;
        for k in 0..30 {
            if k > 0 {
                b *= (1.5 - (k - 1) as f64) / k as f64;
            }
            let want = if k == 1 { 1.0 - 0.75 } else { 0.5 * b.abs() };
            assert!(close(p[k], want, 1e-16), "k={k}");
        }
    }

    #[test]
    fn report_fields() {
        let r = fam_a().validate(10_000).unwrap();
        assert!(r.mean_is_one && r.critical && r.tail_sign_ok);
        assert!(r.brackets_unit_mass(1e-10));
        assert!(r.partial_mean < 1.0 && r.partial_mean > 0.9);
        assert!(r.min_coefficient > 0.0);
    }

    #[test]
    fn sv_limit_and_remainder() {
        assert_eq!(fam_a().sv().limit(), 0.5);
        assert_eq!(fam_b().sv().limit(), 0.4);
        assert_eq!(fam_b().c_l(), 0.4);
        let l = fam_b().sv();
        let mut sup = 0.0f64;
        let mut x = 10.0;
        while x <= 1e8 {
            sup = sup.max((l.eval(x) - 0.4).abs() * x.powf(0.5));
            x *= 1.5;
        }
        assert!(sup <= 0.08 + 1e-12);
        for lam in [0.5, 2.0, 10.0] {
            assert!((l.eval(lam * 1e12) / l.eval(1e12) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn survival_stream_matches_coefficient_sums() {
        for fam in [fam_a(), fam_b()] {
            let p = fam.coefficients(200);
            let s: Vec<f64> = fam.survival_stream().take(200).collect();
            let mut cdf = 0.0;
            for k in 0..200 {
                cdf += p[k];
                assert!(close(s[k], 1.0 - cdf, 1e-14), "k={k} {} {}", s[k], 1.0 - cdf);
                assert!(s[k] > 0.0);
            }
        }
    }

    #[test]
    fn delta_vanishes_at_zero() {
        assert!(fam_a().delta(0.3).abs() < 1e-15);
        let d = fam_b().delta(1e-8);
        assert!(d.abs() < 1e-4);
    }

    #[test]
    fn spec_grammar_roundtrip() {
        let s: FamilySpec = "family=perturbed nu=0.5 c=0.4 d=0.2".parse().unwrap();
        assert_eq!(s.sv, SlowVariation::Perturbed { c: 0.4, d: 0.2 });
        let back: FamilySpec = s.to_string().parse().unwrap();
        assert_eq!(back, s);
        assert!("family=stable nu=0.5".parse::<FamilySpec>().is_err());
        assert!("family=odd nu=0.5 c=0.1".parse::<FamilySpec>().is_err());
        assert!("family=stable nu=0.5 c=0.5 d=1".parse::<FamilySpec>().is_err());
        assert!("family=stable nu=x c=0.5".parse::<FamilySpec>().is_err());
    }

    #[test]
    fn parameter_ranges() {
        assert!(OffspringFamily::stable(1.0, 0.5).is_err());
        assert!(OffspringFamily::stable(0.0, 0.5).is_err());
        assert!(OffspringFamily::stable(0.5, 0.0).is_err());
        assert!(OffspringFamily::perturbed(0.5, 0.4, -1.0).is_err());
        // p_3 = -0.00231 for this choice
        assert!(matches!(
            OffspringFamily::perturbed(0.7, 0.3, 0.3),
            Err(GwError::InvalidFamily { index: 3, .. })
        ));
        assert!(OffspringFamily::perturbed(0.7, 0.3, 0.05).is_ok());
    }
}
