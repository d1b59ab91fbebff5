//! Direct simulation of `Z_{n+1} = ξ_{n1} + ... + ξ_{nZ_n}` from `Z_0 = 1`.
//!
//! Every replicate draws from its own ChaCha8 stream, selected by the
//! replicate index under a common master seed, and tallies are integer
//! counts, so results do not depend on how replicates are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GwError, Result};
use crate::iteration::iterate_series;
use crate::offspring::{FamilySpec, OffspringFamily, SurvivalStream};
use crate::series::binomial_coefficients;

pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;
pub const DEFAULT_SUPPORT_CAP: u64 = 1 << 32;

/// Entries of the survival table kept in memory per sampler; larger draws
/// continue the recurrence without storing it.
pub const TABLE_LIMIT: usize = 1 << 20;

/// Replicates handed to one task.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub family: FamilySpec,
    /// Horizon in generations.
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Occupancy is tallied for `Z_g = j`, `j <= jmax`.
    pub jmax: usize,
    pub population_cap: u64,
    pub support_cap: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn new(family: FamilySpec, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            reps,
            seed,
            jmax: 8,
            population_cap: DEFAULT_POPULATION_CAP,
            support_cap: DEFAULT_SUPPORT_CAP,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.n == 0 || self.population_cap == 0 || self.support_cap == 0 {
            return Err(GwError::InvalidParameters {
                reason: "simulation needs reps >= 1, n >= 1 and positive caps".into(),
            });
        }
        if self.workers == Some(0) {
            return Err(GwError::InvalidParameters {
                reason: "worker count must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Draw exceeded the support cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportCapped;

/// Inverse-CDF sampler over `P(X > k)`, with the table grown on demand.
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    /// `survival[k] = P(X > k)`.
    survival: Vec<f64>,
    stream: SurvivalStream,
    support_cap: u64,
}

impl OffspringSampler {
    pub fn new(fam: &OffspringFamily, support_cap: u64) -> Self {
        let mut stream = fam.survival_stream();
        let survival = stream.by_ref().take(64).collect();
        Self {
            survival,
            stream,
            support_cap,
        }
    }

    pub fn table_len(&self) -> usize {
        self.survival.len()
    }

    /// `min { k : P(X <= k) > u }` for `u ∈ [0, 1)`.
    pub fn quantile(&mut self, u: f64) -> std::result::Result<u64, SupportCapped> {
        self.quantile_upper(1.0 - u)
    }

    /// `min { k : P(X > k) < v }` for `v ∈ (0, 1]`.
    pub fn quantile_upper(&mut self, v: f64) -> std::result::Result<u64, SupportCapped> {
        // Short linear scan: nearly all draws are tiny.
        for (k, &s) in self.survival.iter().take(8).enumerate() {
            if s < v {
                return Ok(k as u64);
            }
        }
        loop {
            let last = *self.survival.last().expect("nonempty");
            if last < v {
                let k = self.survival.partition_point(|&s| s >= v);
                return Ok(k as u64);
            }
            if self.survival.len() >= TABLE_LIMIT {
                return self.stream_beyond(v);
            }
            let grow = self.survival.len();
            self.survival.extend(self.stream.by_ref().take(grow.min(TABLE_LIMIT - grow)));
        }
    }

    fn stream_beyond(&mut self, v: f64) -> std::result::Result<u64, SupportCapped> {
        let mut stream = self.stream.clone();
        let mut k = self.survival.len() as u64;
        loop {
            if k >= self.support_cap {
                return Err(SupportCapped);
            }
            let s = stream.next().expect("infinite stream");
            if s < v {
                return Ok(k);
            }
            k += 1;
        }
    }

    /// One draw from `rng`.
    pub fn sample<R: RngCore>(&mut self, rng: &mut R) -> std::result::Result<u64, SupportCapped> {
        // v uniform on (0, 1] at 53-bit resolution
        let v = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        self.quantile_upper(v)
    }
}

/// Upper bound on `P(X > cap)` from the monotone ratio of binomial
/// coefficients past the end of an explicitly computed prefix.
pub fn support_tail_bound(fam: &OffspringFamily, cap: u64) -> f64 {
    let k0 = 4096usize.min(cap as usize);
    let mut bound = 0.0;
    for atom in fam.atoms() {
        let b = binomial_coefficients(atom.exponent - 1.0, k0 + 1)[k0];
        if b == 0.0 {
            continue;
        }
        let ratio = (k0 as f64 + 1.0) / (cap as f64 + 1.0);
        bound += atom.weight * b.abs() * ratio.powf(atom.exponent);
    }
    bound
}

/// Integer tallies over replicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    /// `survivors[g] = #{Z_g > 0}` for `g = 0..=n`.
    pub survivors: Vec<u64>,
    /// `occupancy[g][j] = #{Z_g = j}`.
    pub occupancy: Vec<Vec<u64>>,
    pub capped: u64,
    pub completed: u64,
}

impl Tally {
    fn zero(n: usize, jmax: usize) -> Self {
        Self {
            survivors: vec![0; n + 1],
            occupancy: vec![vec![0; jmax + 1]; n + 1],
            capped: 0,
            completed: 0,
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.survivors.iter_mut().zip(other.survivors) {
            *a += b;
        }
        for (ra, rb) in self.occupancy.iter_mut().zip(other.occupancy) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        self.capped += other.capped;
        self.completed += other.completed;
        self
    }
}

/// Result with binomial standard errors. Capped replicates are excluded
/// from all estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config_echo: SimConfig,
    pub tally: Tally,
    /// `q_hat[g]` estimates `Q_g`, `g = 0..=n`.
    pub q_hat: Vec<f64>,
    pub q_stderr: Vec<f64>,
    /// `p_hat[g][j]` estimates `p_j(g)`.
    pub p_hat: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub capped: u64,
    /// Upper bound on the per-draw probability of hitting the support cap.
    pub support_tail_bound: f64,
}

fn binomial_se(p: f64, m: f64) -> f64 {
    (p * (1.0 - p) / m).sqrt()
}

impl SimResult {
    fn from_tally(cfg: SimConfig, tally: Tally, tail: f64) -> Self {
        let m = tally.completed.max(1) as f64;
        let q_hat: Vec<f64> = tally.survivors.iter().map(|&c| c as f64 / m).collect();
        let q_stderr = q_hat.iter().map(|&p| binomial_se(p, m)).collect();
        let p_hat: Vec<Vec<f64>> = tally
            .occupancy
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / m).collect())
            .collect();
        let stderr = p_hat
            .iter()
            .map(|row| row.iter().map(|&p| binomial_se(p, m)).collect())
            .collect();
        Self {
            config_echo: cfg,
            capped: tally.capped,
            tally,
            q_hat,
            q_stderr,
            p_hat,
            stderr,
            support_tail_bound: tail,
        }
    }

    /// Fraction of replicates flagged by a cap.
    pub fn capped_fraction(&self) -> f64 {
        self.capped as f64 / self.config_echo.reps as f64
    }
}

enum Outcome {
    Done,
    Capped,
}

fn run_replicate(
    sampler: &mut OffspringSampler,
    rng: &mut ChaCha8Rng,
    cfg: &SimConfig,
    path: &mut Vec<u64>,
) -> Outcome {
    path.clear();
    let mut z: u64 = 1;
    path.push(z);
    for _ in 0..cfg.n {
        if z > 0 {
            let mut next: u64 = 0;
            for _ in 0..z {
                match sampler.sample(rng) {
                    Ok(x) => next += x,
                    Err(SupportCapped) => return Outcome::Capped,
                }
                if next > cfg.population_cap {
                    return Outcome::Capped;
                }
            }
            z = next;
        }
        path.push(z);
    }
    Outcome::Done
}

fn run_chunk(fam: &OffspringFamily, cfg: &SimConfig, base: &ChaCha8Rng, lo: usize, hi: usize) -> Tally {
    let mut tally = Tally::zero(cfg.n, cfg.jmax);
    let mut sampler = OffspringSampler::new(fam, cfg.support_cap);
    let mut path = Vec::with_capacity(cfg.n + 1);
    for rep in lo..hi {
        let mut rng = base.clone();
        rng.set_stream(rep as u64);
        match run_replicate(&mut sampler, &mut rng, cfg, &mut path) {
            Outcome::Capped => tally.capped += 1,
            Outcome::Done => {
                tally.completed += 1;
                for (g, &z) in path.iter().enumerate() {
                    if z > 0 {
                        tally.survivors[g] += 1;
                    }
                    if z as usize <= cfg.jmax {
                        tally.occupancy[g][z as usize] += 1;
                    }
                }
            }
        }
    }
    tally
}

/// Run `cfg.reps` replicates.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let fam = cfg.family.build()?;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chunks: Vec<(usize, usize)> = (0..cfg.reps)
        .step_by(CHUNK)
        .map(|lo| (lo, (lo + CHUNK).min(cfg.reps)))
        .collect();
    let work = || {
        chunks
            .par_iter()
            .map(|&(lo, hi)| run_chunk(&fam, cfg, &base, lo, hi))
            .reduce(|| Tally::zero(cfg.n, cfg.jmax), Tally::merge)
    };
    let tally = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| GwError::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let tail = support_tail_bound(&fam, cfg.support_cap);
    Ok(SimResult::from_tally(cfg.clone(), tally, tail))
}

/// One `(n, j)` comparison against the exact `p_j(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCell {
    pub n: usize,
    pub j: usize,
    pub exact: f64,
    pub estimate: f64,
    /// Binomial standard error at the exact probability.
    pub stderr: f64,
    pub z: f64,
    pub pass: bool,
}

/// Compare occupancy estimates with series iteration, `|p̂ - p| <= k·SE`.
pub fn oracle_cells(res: &SimResult, gens: &[usize], jmax: usize, k_sigma: f64) -> Result<Vec<OracleCell>> {
    let fam = res.config_echo.family.build()?;
    let m = res.tally.completed.max(1) as f64;
    let order = jmax.max(2);
    let mut out = Vec::with_capacity(gens.len() * (jmax + 1));
    for &n in gens {
        if n > res.config_echo.n || jmax > res.config_echo.jmax {
            return Err(GwError::InvalidParameters {
                reason: format!("cell (n={n}, j<={jmax}) outside the simulated range"),
            });
        }
        let s = iterate_series(&fam, n, order)?;
        for j in 0..=jmax {
            let exact = if j == 0 { 1.0 - s.q0 } else { s.series.coeff(j) };
            let estimate = res.p_hat[n][j];
            let stderr = binomial_se(exact, m);
            let z = (estimate - exact) / stderr;
            out.push(OracleCell {
                n,
                j,
                exact,
                estimate,
                stderr,
                z,
                pass: z.abs() <= k_sigma,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_a() -> FamilySpec {
        "family=stable nu=0.5 c=0.5".parse().unwrap()
    }

    #[test]
    fn quantile_convention() {
        let fam = spec_a().build().unwrap();
        let mut s = OffspringSampler::new(&fam, DEFAULT_SUPPORT_CAP);
        assert_eq!(s.quantile(0.3), Ok(0));
        assert_eq!(s.quantile(0.6), Ok(1));
        assert_eq!(s.quantile(0.5), Ok(1));
        assert_eq!(s.quantile(0.0), Ok(0));
    }

    #[test]
    fn quantile_deep_tail_grows_table() {
        let fam = spec_a().build().unwrap();
        let mut s = OffspringSampler::new(&fam, DEFAULT_SUPPORT_CAP);
        let surv: Vec<f64> = fam.survival_stream().take(5001).collect();
        let v = 0.5 * (surv[4999] + surv[5000]);
        assert_eq!(s.quantile_upper(v), Ok(5000));
        assert!(s.table_len() > 5000);
    }

    #[test]
    fn stream_beyond_table_and_cap() {
        let fam = spec_a().build().unwrap();
        let mut s = OffspringSampler::new(&fam, 2 * TABLE_LIMIT as u64);
        let k = TABLE_LIMIT + 10;
        let surv: Vec<f64> = fam.survival_stream().take(k + 1).collect();
        let v = 0.5 * (surv[k - 1] + surv[k]);
        assert_eq!(s.quantile_upper(v), Ok(k as u64));
        let mut small = OffspringSampler::new(&fam, 100);
        assert_eq!(small.quantile_upper(1e-300), Err(SupportCapped));
    }

    #[test]
    fn tail_bound_dominates_exact_tail() {
        let fam = spec_a().build().unwrap();
        let cap = 20_000u64;
        let exact = fam.survival_stream().nth(cap as usize).unwrap();
        let bound = support_tail_bound(&fam, cap);
        assert!(bound >= exact && bound < 1.1 * exact, "{bound} vs {exact}");
    }

    #[test]
    fn per_bin_frequencies() {
        let fam = spec_a().build().unwrap();
        let mut s = OffspringSampler::new(&fam, DEFAULT_SUPPORT_CAP);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let mut counts = [0u64; 6];
        for _ in 0..draws {
            let x = s.sample(&mut rng).unwrap();
            if x < 6 {
                counts[x as usize] += 1;
            }
        }
        let p = fam.coefficients(6);
        for k in 0..6 {
            let se = (p[k] * (1.0 - p[k]) / draws as f64).sqrt();
            assert!((counts[k] as f64 / draws as f64 - p[k]).abs() <= 4.0 * se, "k={k}");
        }
    }

    #[test]
    fn deterministic_across_workers() {
        let mut cfg = SimConfig::new(spec_a(), 6, 10_000, 42);
        cfg.workers = Some(1);
        let a = simulate(&cfg).unwrap();
        cfg.workers = Some(4);
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.tally, b.tally);
        assert_eq!(a.q_hat[0], 1.0);
        let counted: u64 = a.tally.occupancy[6].iter().sum::<u64>();
        assert!(counted <= a.tally.completed);
        assert_eq!(a.tally.completed + a.tally.capped, 10_000);
    }

    #[test]
    fn single_replicate_reproducible() {
        let cfg = SimConfig::new(spec_a(), 10, 1, 7);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }

    #[test]
    fn survival_matches_exact() {
        let cfg = SimConfig::new(spec_a(), 2, 200_000, 3);
        let r = simulate(&cfg).unwrap();
        for (n, q) in [(1, 0.5), (2, 0.3232233)] {
            assert!((r.q_hat[n] - q).abs() <= 4.0 * r.q_stderr[n].max(1e-12), "n={n}");
        }
        let cells = oracle_cells(&r, &[1, 2], 3, 4.0).unwrap();
        assert!(cells.iter().filter(|c| !c.pass).count() <= 1);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SimConfig::new(spec_a(), 2, 0, 3);
        assert!(simulate(&cfg).is_err());
        cfg.reps = 5;
        cfg.workers = Some(0);
        assert!(simulate(&cfg).is_err());
    }
}
