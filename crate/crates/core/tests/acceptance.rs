//! Acceptance criteria 1 to 10, each recomputed against oracles written
//! here from the closed forms of the two reference families.
//!
//! Family A: f(s) = s + 0.5 y^{3/2}, family B: f(s) = s + 0.4 y^{3/2} + 0.08 y^2,
//! with y = 1 - s throughout.
//!
//! Every test prints the library's verdict line. A green criterion must stay
//! green. A red verdict is accepted only when the oracle in the same test
//! shows the stated target is inconsistent with the exact iteration; set
//! `GWCRIT_STRICT=1` to turn every red verdict into a test failure.

use std::io::Write;

use gwcrit::campaign::{self, Campaign, Check};
use gwcrit::criteria::{self, CriteriaConfig, CriterionResult};
use gwcrit::montecarlo::{simulate, SimConfig};
use gwcrit::FamilySpec;

const A: (f64, f64) = (0.5, 0.0);
const B: (f64, f64) = (0.4, 0.08);

/// `Λ(y) = a y^{1/2} + b y`.
fn lam((a, b): (f64, f64), y: f64) -> f64 {
    a * y.sqrt() + b * y
}

/// `f'(1 - y)`.
fn fprime((a, b): (f64, f64), y: f64) -> f64 {
    1.0 - 1.5 * a * y.sqrt() - 2.0 * b * y
}

/// `R_n(s)` and `f'_n(s)`, starting from `y = 1 - s`.
fn iterate(fam: (f64, f64), y: f64, n: usize) -> (f64, f64) {
    let (mut r, mut d) = (y, 1.0);
    for _ in 0..n {
        d *= fprime(fam, r);
        r -= r * lam(fam, r);
    }
    (r, d)
}

fn strict() -> bool {
    std::env::var("GWCRIT_STRICT").is_ok_and(|v| v == "1")
}

/// Uncaptured, so the verdicts appear in plain `cargo test` output.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

/// Print the verdict; a red one needs `explained` from the caller's oracle.
fn verdict(r: &CriterionResult, explained: Option<&str>) {
    say(&r.line());
    if r.pass {
        return;
    }
    if strict() {
        panic!("criterion {} failed under GWCRIT_STRICT", r.id);
    }
    match explained {
        Some(why) => say(&format!("criterion {:>2} red, explained: {why}", r.id)),
        None => panic!("criterion {} failed without an oracle explanation: {}", r.id, r.detail),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Binomial series coefficients of `(1 - s)^β`.
fn binom(beta: f64, len: usize) -> Vec<f64> {
    let mut b = vec![1.0; len];
    for k in 1..len {
        b[k] = b[k - 1] * (k as f64 - 1.0 - beta) / k as f64;
    }
    b
}

/// Lower-order terms of `lim V(f_n(s)) - V(f_n(0))`, the exact Abel function
/// normalised to vanish at 0, from two large `n`.
fn abel_limit(fam: (f64, f64), s: f64, n: usize) -> f64 {
    let v = |y: f64| 1.0 / (0.5 * lam(fam, y));
    let at = |n: usize| v(iterate(fam, 1.0 - s, n).0) - v(iterate(fam, 1.0, n).0);
    // the error behaves like ln n / n
    let (a, b) = (at(n), at(4 * n));
    let w = |m: usize| (m as f64).ln() / m as f64;
    b + (b - a) * w(4 * n) / (w(n) - w(4 * n))
}

#[test]
fn criterion_01_family_validity() {
    let r = criteria::criterion_1().unwrap();
    for (fam, lib) in [(A, criteria::family_a()), (B, criteria::family_b())] {
        let got = lib.coefficients(10_001);
        let b15 = binom(1.5, 10_001);
        let b20 = binom(2.0, 10_001);
        let mut want: Vec<f64> = (0..10_001).map(|k| fam.0 * b15[k] + fam.1 * b20[k]).collect();
        want[1] += 1.0;
        let mut mass = 0.0;
        for k in 0..=10_000 {
            assert!(want[k] >= 0.0, "oracle p_{k} < 0");
            assert!((got[k] - want[k]).abs() <= 1e-11 * want[k], "p_{k}");
            mass += want[k];
        }
        assert!(mass < 1.0 && 1.0 - mass < 1e-5);
        for i in 1..100 {
            let s = i as f64 / 100.0;
            let y = 1.0 - s;
            let direct = fam.0 * y.powf(1.5) + fam.1 * y * y;
            assert!(rel(lib.f_excess(s).unwrap(), direct) <= 1e-13);
        }
    }
    assert!(r.measured["max_identity_rel_error"] <= 1e-13);
    verdict(&r, None);
}

#[test]
fn criterion_02_basic_lemma() {
    let r = criteria::criterion_2().unwrap();
    // N_ν = c^{-1/ν} = 4 for family A
    let n = 1_000_000;
    let q = iterate(A, 1.0, n).0;
    let ratio = q * (0.5 * n as f64).powi(2) / 4.0;
    assert!(rel(r.measured["ratio_at_1e6"], ratio) <= 1e-9, "{} vs {ratio}", r.measured["ratio_at_1e6"]);
    assert!((0.99..=1.01).contains(&ratio));
    verdict(&r, None);
}

#[test]
fn criterion_03_lemma3_log_term() {
    let r = criteria::criterion_3().unwrap();
    let rho = |n: usize| {
        let nf = n as f64;
        let q = iterate(A, 1.0, n).0;
        1.0 / lam(A, q) - 1.0 / lam(A, 1.0) - 0.5 * nf - 0.75 * (lam(A, 1.0) * 0.5 * nf + 1.0).ln()
    };
    let top = rho(1_000_000) / (1e6f64).ln();
    assert!((r.measured["rho_over_ln_n"] - top).abs() <= 1e-6, "{} vs {top}", r.measured["rho_over_ln_n"]);
    let sup = [100, 1000, 10_000, 100_000, 1_000_000].iter().map(|&n| rho(n).abs()).fold(0.0, f64::max);
    assert!(sup <= r.measured["sigma_sup_fine"] + 1e-9);
    verdict(&r, None);
}

#[test]
fn criterion_04_explicit_invariant_measure() {
    let r = criteria::criterion_4().unwrap();
    // closed forms: U'(0) = J(0) V(0) with V = 1/(νΛ)
    let u1 = |fam: (f64, f64)| {
        let j0 = (1.0 - fprime(fam, 1.0)) / lam(fam, 1.0) - 1.0;
        j0 / (0.5 * lam(fam, 1.0))
    };
    assert!((r.measured["u1_a"] - u1(A)).abs() <= 1e-12);
    assert!((r.measured["u1_b"] - u1(B)).abs() <= 1e-12);
    let u_half = 4.0 / 0.5f64.sqrt() - 4.0;
    assert!((r.measured["u_at_half"] - u_half).abs() <= 1e-12);
    // n M_n(s) = n (1 - Λ(R_n(s)) / Λ(Q_n)) by direct iteration
    let n = 10_000;
    let m = n as f64 * (1.0 - lam(A, iterate(A, 0.5, n).0) / lam(A, iterate(A, 1.0, n).0));
    assert!(rel(r.measured["n_m_n_at_1e4"], m) <= 1e-9);
    // f(0) = 1/2, so an Abel solution vanishing at 0 takes the value 1 at 1/2
    let limit = abel_limit(A, 0.5, 250_000);
    assert!((limit - 1.0).abs() < 1e-3, "{limit}");
    let explained = (m / limit - 1.0).abs() < 0.01 && (u_half - 1.0).abs() > 0.5;
    let why = format!(
        "n M_n(0.5) tends to {limit:.6}; since f(0) = 1/2 the Abel equation forces U(1/2) = 1, \
         while V(1/2) - V(0) = {u_half:.7}"
    );
    verdict(&r, explained.then_some(why.as_str()));
}

#[test]
fn criterion_05_theorem3_rate() {
    let r = criteria::criterion_5().unwrap();
    let mut explained = true;
    let mut parts = Vec::new();
    for s in [0.0, 0.5] {
        let target = 4.0 * 0.5 / (1.0f64 - s).powf(1.5);
        assert!((r.measured[&format!("u_prime_s{s}")] - target).abs() <= 1e-12);
        // U'_n(s) = f'_n(s) / (f_{n+1}(0) - f_n(0))
        let up = |n: usize| {
            let d = iterate(A, 1.0 - s, n).1;
            let q = iterate(A, 1.0, n).0;
            d / (q * lam(A, q))
        };
        let v = up(10_000);
        assert!(rel(r.measured[&format!("u_prime_n_1e4_s{s}")], v) <= 1e-9);
        // n (U'_n / U' - 1) grows linearly when U'_n has a different limit
        let e = |n: usize| n as f64 * (up(n) / target - 1.0);
        let trend = (e(10_000).abs() / e(1000).abs()).log10();
        explained &= (v / target - 1.0).abs() > 0.1 && trend > 0.9;
        parts.push(format!("s={s}: U'_n -> {v:.4} vs U' = {target:.4}, trend {trend:.3}"));
    }
    let why = format!("{}; the target derivative comes from V - V(0), not the exact invariant measure", parts.join(", "));
    verdict(&r, explained.then_some(why.as_str()));
}

#[test]
fn criterion_06_theorem4_local_limit() {
    let r = criteria::criterion_6().unwrap();
    // P_ν(n) / (N_ν u_1) - 1 with p_1(n) = f'_n(0), N_ν = 4, u_1 = 2
    let y = |n: usize| (0.5 * n as f64).powi(3) * iterate(A, 1.0, n).1 / 8.0 - 1.0;
    let pts: Vec<(f64, f64)> = (0..=40)
        .map(|k| {
            let n = 10f64.powf(4.0 + k as f64 / 20.0).round() as usize;
            ((n as f64).ln() / n as f64, y(n))
        })
        .collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    assert!(rel(r.measured["slope"], slope) <= 0.02, "{} vs {slope}", r.measured["slope"]);
    assert!((r.measured["intercept"] - intercept).abs() <= 1e-3);
    // the ratio tends to a constant below 1, so the ln n / n coefficient is not the one claimed
    let explained = intercept < -0.1 && (slope / -4.5 - 1.0).abs() > 0.15;
    let why = format!(
        "P_ν(n)/(N_ν u_1) tends to {:.5}, not 1, because the exact u_1 is {:.5} rather than 2",
        1.0 + intercept,
        2.0 * (1.0 + intercept)
    );
    verdict(&r, explained.then_some(why.as_str()));
}

#[test]
fn criterion_07_lemma4_rho_rate() {
    let r = criteria::criterion_7().unwrap();
    // 1 - f'(1 - y) = 1.5 a y^{1/2} + 2 b y, kept free of cancellation
    let rho = |(a, b): (f64, f64), y: f64| {
        let j = (1.5 * a * y.sqrt() + 2.0 * b * y) / lam((a, b), y) - 1.0;
        (0.5 - j).abs()
    };
    let lib_a = criteria::family_a();
    let lib_b = criteria::family_b();
    let mut sup = 0.0f64;
    for i in 0..=400 {
        let y = 10f64.powf(-10.0 + 9.0 * i as f64 / 400.0);
        assert!(rho(A, y) <= 1e-14);
        let closed = 0.04 * y / lam(B, y);
        assert!((rho(B, y) - closed).abs() <= 1e-13);
        assert!((lib_b.rho(1.0 - y).unwrap() - closed).abs() <= 1e-12);
        assert!(lib_a.rho(1.0 - y).unwrap() <= 1e-14);
        sup = sup.max(closed / y.sqrt());
    }
    assert!(rel(sup, 0.1) <= 0.1);
    assert!(rel(r.measured["b_sup_ratio"], sup) <= 1e-6);
    verdict(&r, None);
}

/// `p_0 .. p_3` of `f_n` for family A by exact order-3 Taylor composition.
fn low_coeffs(n: usize) -> Vec<[f64; 4]> {
    let mut g: [f64; 4] = [0.0, 1.0, 0.0, 0.0];
    let mut out = vec![g];
    for _ in 0..n {
        let y = 1.0 - g[0];
        let d = [
            g[0] + 0.5 * y.powf(1.5),
            1.0 - 0.75 * y.sqrt(),
            0.375 / y.sqrt(),
            0.1875 / y.powf(1.5),
        ];
        let h = [0.0, g[1], g[2], g[3]];
        let h2 = [0.0, 0.0, h[1] * h[1], 2.0 * h[1] * h[2]];
        let h3 = [0.0, 0.0, 0.0, h[1] * h[1] * h[1]];
        let mut next = [d[0], 0.0, 0.0, 0.0];
        for k in 1..4 {
            next[k] = d[1] * h[k] + d[2] / 2.0 * h2[k] + d[3] / 6.0 * h3[k];
        }
        g = next;
        out.push(g);
    }
    out
}

#[test]
fn criterion_08_monte_carlo() {
    let cfg = CriteriaConfig::default();
    let r = criteria::criterion_8(cfg).unwrap();
    let mut sc = SimConfig::new(FamilySpec::from(&criteria::family_a()), 20, cfg.reps, cfg.seed);
    sc.jmax = 3;
    let res = simulate(&sc).unwrap();
    let exact = low_coeffs(20);
    let lib = gwcrit::iteration::iterate_series(&criteria::family_a(), 20, 64).unwrap();
    for j in 0..4 {
        assert!((lib.series.coeff(j) - exact[20][j]).abs() <= 1e-13);
    }
    let reps = res.tally.completed as f64;
    let mut within = 0;
    for n in [1, 2, 5, 10, 20] {
        for j in 0..4 {
            let p = exact[n][j];
            let se = (p * (1.0 - p) / reps).sqrt();
            if (res.p_hat[n][j] - p).abs() <= 4.0 * se {
                within += 1;
            }
        }
    }
    assert_eq!(within as f64, r.measured["cells_passed"]);
    assert!(within >= 19);
    verdict(&r, None);
}

#[test]
fn criterion_09_lemma2_bracket() {
    let r = criteria::criterion_9().unwrap();
    for fam in [A, B] {
        for i in 0..10 {
            let y0 = 1.0 - i as f64 / 10.0;
            for n in 1..=100 {
                let (rn, d) = iterate(fam, y0, n);
                let psi = d * y0 * lam(fam, y0) / (rn * lam(fam, rn));
                let lower = fprime(fam, y0) / fprime(fam, rn);
                assert!(lower <= psi * (1.0 + 1e-12) && psi <= 1.0 + 1e-12, "s={} n={n}", 1.0 - y0);
            }
        }
    }
    // ψ_1(0) = f'(0) Λ(1) / (Q_1 Λ(Q_1)) = 1/√2
    let (q, d) = iterate(A, 1.0, 1);
    let psi1 = d * lam(A, 1.0) / (q * lam(A, q));
    assert!((psi1 - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-15);
    assert!((r.measured["psi_1_0"] - psi1).abs() <= 1e-12);
    verdict(&r, None);
}

#[test]
fn criterion_10_diagnostics_completeness() {
    let dir = tempfile::tempdir().unwrap();
    let c = Campaign::full(FamilySpec::from(&criteria::family_a()), dir.path().to_path_buf());
    let summary = campaign::run(&c).unwrap();
    assert!(summary.artifacts.iter().all(|a| a.round_trip && a.path.exists()));
    let r = summary.criteria.iter().find(|r| r.id == 10).expect("criterion 10 in a full report").clone();
    assert_eq!(summary.criteria.len(), 10);

    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap()
    };
    let inv = &read("invariant.json")["invariant"];
    for key in ["u_coeffs", "stationarity_residuals", "normalization_sum", "abel_residual_table"] {
        assert!(inv.get(key).is_some(), "invariant.json lacks {key}");
    }
    let diag = read("diagnostics.json");
    assert!(!diag["psi_ratio_residual"].as_array().unwrap().is_empty());
    for s in ["0", "0.5"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("psi_ratio_stable_nu_0.5_c_0.5_s{s}.csv"))).unwrap();
        assert!(csv.lines().count() > 2);
    }
    let summary_file = read("summary.json");
    assert_eq!(summary_file["criteria"].as_array().unwrap().len(), 10);

    // Σ u_k p_0^k = U(p_0) = V(1/2) - V(0) for family A
    let norm = inv["normalization_sum"].as_f64().unwrap();
    assert!((norm - (4.0 * 2f64.sqrt() - 4.0)).abs() <= 1e-6);
    assert!((r.measured["normalization_sum"] - norm).abs() <= 1e-15);

    // family A: J ≡ ν, so the residual is ψ_n(0) - 1 = f'_n(0) / Q_n^{3/2} - 1
    let (q, d) = iterate(A, 1.0, 10_000);
    let residual = d / q.powf(1.5) - 1.0;
    assert!((r.measured["psi_ratio_residual_1e4"] - residual).abs() <= 1e-9);
    // ψ_n(0) tends to p_0 u_1 for the exact u_1, which is well below 2
    let explained = residual < -0.5 && r.measured["present"] == 1.0 && r.measured["round_trip"] == 1.0;
    let why = format!(
        "all diagnostics present and round-tripping; ψ_n(0) = {:.6} tends to p_0 u_1 with the exact u_1, so ψ_n - J/J(f_n) does not vanish",
        residual + 1.0
    );
    verdict(&r, explained.then_some(why.as_str()));
    assert!(summary.checks.iter().any(|o| o.check == Check::Criteria));
}
