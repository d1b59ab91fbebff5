//! Iterates of the offspring generating function.
//!
//! Scalar trajectories are carried in complement form `R_n(s) = 1 - f_n(s)`,
//! using `R_{n+1} = R_n (1 - Λ(R_n))`. This keeps full relative precision in
//! the survival probability `Q_n = R_n(0)` long after `f_n(0)` itself has
//! become indistinguishable from one in binary64.

use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::numerics::neumaier_sum;
use crate::offspring::OffspringFamily;
use crate::series::{binomial_remainder, SeriesMode, TruncSeries};

/// Trajectories stop once `Λ(R_n)` drops below this many ulps: the update
/// `R_n Λ(R_n)` no longer changes `R_n`.
pub const SIGNIFICANCE_ULPS: f64 = 1e3;

/// Smallest usable increment `f_{n+1}(0) - f_n(0)`.
pub const MIN_INCREMENT: f64 = 1e-300;

/// Default cap on `n * K^2` for series iteration.
pub const DEFAULT_SERIES_BUDGET: f64 = 2e10;

/// State of `f_n(s)` after `n` generations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: usize,
    /// `R_n(s) = 1 - f_n(s)`.
    pub complement: f64,
    /// `f'_n(s)`, when tracked.
    pub derivative: Option<f64>,
}

impl TrajectoryPoint {
    pub fn value(&self) -> f64 {
        1.0 - self.complement
    }
}

/// Lazy trajectory `n ↦ f_n(s)` starting at `n = 0`.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    fam: &'a OffspringFamily,
    n: usize,
    complement: f64,
    derivative: Option<f64>,
    exhausted: bool,
}

impl<'a> Trajectory<'a> {
    pub fn new(fam: &'a OffspringFamily, s: f64, track_derivative: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&s) {
            return Err(GwError::Domain {
                what: "iteration start",
                value: s,
            });
        }
        Ok(Self::from_complement(fam, 1.0 - s, track_derivative))
    }

    /// Start from `R_0 = y`, i.e. `s = 1 - y`, without forming `1 - y`.
    pub fn from_complement(fam: &'a OffspringFamily, y: f64, track_derivative: bool) -> Self {
        Self {
            fam,
            n: 0,
            complement: y,
            derivative: track_derivative.then_some(1.0),
            exhausted: false,
        }
    }

    pub fn current(&self) -> TrajectoryPoint {
        TrajectoryPoint {
            n: self.n,
            complement: self.complement,
            derivative: self.derivative,
        }
    }

    /// `f_{n+1}(s) - f_n(s) = R_n Λ(R_n)`.
    pub fn increment(&self) -> f64 {
        self.complement * self.fam.lambda_raw(self.complement)
    }

    /// True once the recursion has lost significance.
    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Advance one generation. Returns `None` when the next point would carry
    /// no information.
    pub fn step(&mut self) -> Option<TrajectoryPoint> {
        if self.exhausted {
            return None;
        }
        let r = self.complement;
        let lam = self.fam.lambda_raw(r);
        if lam < SIGNIFICANCE_ULPS * f64::EPSILON || r * lam < MIN_INCREMENT {
            self.exhausted = true;
            return None;
        }
        if let Some(d) = self.derivative.as_mut() {
            *d *= self.fam.f_prime_complement(r);
        }
        self.complement = r - r * lam;
        self.n += 1;
        Some(self.current())
    }

    /// Advance to generation `n` (no-op if already there).
    pub fn advance_to(&mut self, n: usize) -> Result<TrajectoryPoint> {
        while self.n < n {
            if self.step().is_none() {
                return Err(GwError::PrecisionExhausted {
                    n,
                    max_usable: self.n,
                });
            }
        }
        Ok(self.current())
    }
}

impl Iterator for Trajectory<'_> {
    type Item = TrajectoryPoint;

    fn next(&mut self) -> Option<TrajectoryPoint> {
        self.step()
    }
}

/// Result of [`iterate_scalar`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrace {
    pub s: f64,
    pub points: Vec<TrajectoryPoint>,
    /// Generation at which the trajectory lost significance, if it did.
    pub truncated_at: Option<usize>,
}

/// `f_k(s)` for `k = 1..=n_max`.
pub fn iterate_scalar(fam: &OffspringFamily, s: f64, n_max: usize, track_derivative: bool) -> Result<ScalarTrace> {
    let mut traj = Trajectory::new(fam, s, track_derivative)?;
    let mut points = Vec::with_capacity(n_max);
    while points.len() < n_max {
        match traj.step() {
            Some(p) => points.push(p),
            None => break,
        }
    }
    let truncated_at = (points.len() < n_max).then_some(points.len());
    Ok(ScalarTrace { s, points, truncated_at })
}

/// One row of the trace file: `n, fn0, Qn, p1n[, fn_s, dfn_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub n: usize,
    pub fn0: f64,
    #[serde(rename = "Qn")]
    pub qn: f64,
    pub p1n: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fn_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dfn_s: Option<f64>,
}

/// Joint trace at `s = 0` (with `p_1(n)`) and optionally at a tracked `s`.
pub fn iteration_trace(fam: &OffspringFamily, n_max: usize, tracked: Option<f64>) -> Result<Vec<IterationTrace>> {
    let mut zero = Trajectory::new(fam, 0.0, true)?;
    let mut other = tracked.map(|s| Trajectory::new(fam, s, true)).transpose()?;
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let Some(p) = zero.step() else { break };
        let q = match other.as_mut() {
            Some(t) => match t.step() {
                Some(q) => Some(q),
                None => break,
            },
            None => None,
        };
        out.push(IterationTrace {
            n: p.n,
            fn0: p.value(),
            qn: p.complement,
            p1n: p.derivative.unwrap_or(f64::NAN),
            fn_s: q.map(|q| q.value()),
            dfn_s: q.and_then(|q| q.derivative),
        });
    }
    Ok(out)
}

/// Normalised objects at one `(s, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub n: usize,
    pub s: f64,
    /// `R_n(s)`.
    pub r_s: f64,
    /// `Q_n = R_n(0)`.
    pub q: f64,
    /// `f'_n(s)`.
    pub df_s: f64,
    /// `(f_n(s) - f_n(0)) / (f_{n+1}(0) - f_n(0))`.
    pub u_n: f64,
    /// `(f_n(s) - f_n(0)) / (f_n(0) - f_{n-1}(0))`.
    pub ubar_n: f64,
    /// `ψ_n(s) = -R'_n(s) (1-s) Λ(1-s) / (R_n(s) Λ(R_n(s)))`.
    pub psi: f64,
    /// `f'(s) / f'(f_n(s))`.
    pub psi_lower: f64,
    /// `1 - Λ(R_n(s)) / Λ(Q_n)`.
    pub m_n: f64,
    /// `J(s) / J(f_n(s))`.
    pub j_ratio: f64,
}

impl NormalizedPoint {
    /// `ψ_n(s) - J(s)/J(f_n(s))`.
    pub fn psi_ratio_residual(&self) -> f64 {
        self.psi - self.j_ratio
    }

    pub fn bracket_holds(&self, slack: f64) -> bool {
        self.psi_lower <= self.psi && self.psi <= 1.0 + slack
    }
}

/// Joint sweep over `n = 1, 2, ...` of the normalised objects at `s`.
#[derive(Debug, Clone)]
pub struct NormalizedSweep<'a> {
    fam: &'a OffspringFamily,
    s: f64,
    y0: f64,
    zero: Trajectory<'a>,
    at_s: Trajectory<'a>,
    prev_increment: f64,
}

impl<'a> NormalizedSweep<'a> {
    pub fn new(fam: &'a OffspringFamily, s: f64) -> Result<Self> {
        let zero = Trajectory::new(fam, 0.0, false)?;
        let at_s = Trajectory::new(fam, s, true)?;
        Ok(Self {
            fam,
            s,
            y0: 1.0 - s,
            prev_increment: zero.increment(),
            zero,
            at_s,
        })
    }

    fn point(&self) -> NormalizedPoint {
        let fam = self.fam;
        let z = self.zero.current();
        let p = self.at_s.current();
        let q = z.complement;
        let r = p.complement;
        let df = p.derivative.expect("tracked");
        let numerator = q - r;
        let inc_next = self.zero.increment();
        let lam_r = fam.lambda_raw(r);
        let y0 = self.y0;
        NormalizedPoint {
            n: p.n,
            s: self.s,
            r_s: r,
            q,
            df_s: df,
            u_n: numerator / inc_next,
            ubar_n: numerator / self.prev_increment,
            psi: df * y0 * fam.lambda_raw(y0) / (r * lam_r),
            psi_lower: fam.f_prime_complement(y0) / fam.f_prime_complement(r),
            m_n: 1.0 - lam_r / fam.lambda_raw(q),
            j_ratio: fam.j_complement(y0) / fam.j_complement(r),
        }
    }
}

impl Iterator for NormalizedSweep<'_> {
    type Item = Result<NormalizedPoint>;

    fn next(&mut self) -> Option<Result<NormalizedPoint>> {
        let n = self.zero.current().n + 1;
        self.prev_increment = self.zero.increment();
        if self.zero.step().is_none() || self.at_s.step().is_none() {
            return Some(Err(GwError::PrecisionExhausted {
                n,
                max_usable: n - 1,
            }));
        }
        if self.zero.increment() < MIN_INCREMENT || self.prev_increment < MIN_INCREMENT {
            return Some(Err(GwError::PrecisionExhausted { n, max_usable: n - 1 }));
        }
        Some(Ok(self.point()))
    }
}

/// All normalised objects at a single `(s, n)`.
pub fn normalized_at(fam: &OffspringFamily, s: f64, n: usize) -> Result<NormalizedPoint> {
    if n == 0 {
        return Err(GwError::Domain {
            what: "generation index (need n >= 1)",
            value: 0.0,
        });
    }
    let mut sweep = NormalizedSweep::new(fam, s)?;
    let mut last = None;
    for _ in 0..n {
        last = Some(sweep.next().expect("infinite iterator")?);
    }
    Ok(last.expect("n >= 1"))
}

/// `U_n(s) = (f_n(s) - f_n(0)) / (f_{n+1}(0) - f_n(0))`.
pub fn u_n(fam: &OffspringFamily, s: f64, n: usize) -> Result<f64> {
    Ok(normalized_at(fam, s, n)?.u_n)
}

/// `Ū_n(s) = (f_n(s) - f_n(0)) / (f_n(0) - f_{n-1}(0))`.
pub fn ubar_n(fam: &OffspringFamily, s: f64, n: usize) -> Result<f64> {
    Ok(normalized_at(fam, s, n)?.ubar_n)
}

/// Empirical `ψ_n(s)` from the product form of `f'_n(s)`.
pub fn psi_n_empirical(fam: &OffspringFamily, s: f64, n: usize) -> Result<f64> {
    Ok(normalized_at(fam, s, n)?.psi)
}

/// `M_n(s) = 1 - Λ(R_n(s)) / Λ(Q_n)`.
pub fn m_n(fam: &OffspringFamily, s: f64, n: usize) -> Result<f64> {
    Ok(normalized_at(fam, s, n)?.m_n)
}

/// Truncated series of `f_n`, with the constant term's complement `Q_n`
/// kept separately at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesIterate {
    pub n: usize,
    /// `1 - f_n(0)`.
    pub q0: f64,
    pub series: TruncSeries,
    /// Number of coefficients clamped from a rounding-negative value to zero.
    pub clamped: usize,
    /// Largest magnitude clamped.
    pub max_clamp: f64,
}

/// Steps `f_n ↦ f_{n+1} = f ∘ f_n` in the truncated ring.
///
/// The outer `f` is applied through its closed form
/// `f(g) = g + sum_i a_i (1-g)^{beta_i}`, so no outer truncation enters and
/// every retained coefficient is exact up to rounding. Writing
/// `1 - g = Q (1 - h)` with `h = (g - g_0)/Q`,
///
/// ```text
/// [f(g)]_j = g_j f'(g_0) + sum_i a_i Q^{beta_i} W_i[h]_j,
/// W_i[h] = (1-h)^{beta_i} - 1 + beta_i h,
/// ```
///
/// and both terms are nonnegative for the leading atom.
#[derive(Debug, Clone)]
pub struct SeriesIteration<'a> {
    fam: &'a OffspringFamily,
    n: usize,
    q0: f64,
    /// `g_0` slot unused; `g[j]` for `1 <= j <= K`.
    g: Vec<f64>,
    clamped: usize,
    max_clamp: f64,
}

impl<'a> SeriesIteration<'a> {
    pub fn new(fam: &'a OffspringFamily, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(GwError::InvalidOrder { order, min: 2 });
        }
        let mut g = vec![0.0; order + 1];
        g[1] = 1.0;
        Ok(Self {
            fam,
            n: 0,
            q0: 1.0,
            g,
            clamped: 0,
            max_clamp: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.g.len() - 1
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// `p_j(n)` for `1 <= j <= K`; `j = 0` gives `f_n(0)`.
    pub fn coeff(&self, j: usize) -> f64 {
        if j == 0 {
            1.0 - self.q0
        } else {
            self.g[j]
        }
    }

    pub fn step(&mut self) {
        let q = self.q0;
        let len = self.g.len();
        let h: Vec<f64> = self.g.iter().enumerate().map(|(j, &gj)| if j == 0 { 0.0 } else { gj / q }).collect();
        let slope = self.fam.f_prime_complement(q);
        let mut next: Vec<f64> = self.g.iter().map(|&gj| gj * slope).collect();
        next[0] = 0.0;
        for atom in self.fam.atoms() {
            let w = binomial_remainder(&h, atom.exponent);
            let scale = atom.weight * q.powf(atom.exponent);
            for j in 2..len {
                next[j] += scale * w[j];
            }
        }
        for v in next.iter_mut().skip(1) {
            if *v < 0.0 {
                self.clamped += 1;
                self.max_clamp = self.max_clamp.max(-*v);
                *v = 0.0;
            }
        }
        self.g = next;
        self.q0 = self.fam.complement_step(q);
        self.n += 1;
    }

    pub fn snapshot(&self) -> SeriesIterate {
        let mut coeffs = self.g.clone();
        coeffs[0] = 1.0 - self.q0;
        let upper = neumaier_sum(self.g[1..].iter().copied());
        let tail = (self.q0 - upper).max(0.0);
        SeriesIterate {
            n: self.n,
            q0: self.q0,
            series: TruncSeries::from_parts(coeffs, tail, SeriesMode::Pgf, true),
            clamped: self.clamped,
            max_clamp: self.max_clamp,
        }
    }
}

/// Truncated series of `f_n` with `p_j(n)` for `j <= K`.
pub fn iterate_series(fam: &OffspringFamily, n: usize, order: usize) -> Result<SeriesIterate> {
    iterate_series_with_budget(fam, n, order, DEFAULT_SERIES_BUDGET)
}

pub fn iterate_series_with_budget(fam: &OffspringFamily, n: usize, order: usize, budget: f64) -> Result<SeriesIterate> {
    if n < 1 {
        return Err(GwError::Domain {
            what: "generation index (need n >= 1)",
            value: n as f64,
        });
    }
    check_series_budget(n, order, budget)?;
    let mut it = SeriesIteration::new(fam, order)?;
    for _ in 0..n {
        it.step();
    }
    Ok(it.snapshot())
}

pub fn check_series_budget(n: usize, order: usize, budget: f64) -> Result<()> {
    let work = n as f64 * (order as f64) * (order as f64);
    if work > budget {
        return Err(GwError::Budget {
            requested: work,
            budget,
        });
    }
    Ok(())
}
