//! Campaigns: a family, a list of checks, grids and an output directory.
//! Parsed from flat `key=value` configuration; each check writes its own
//! files atomically, and a summary records pass/fail.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, AsymReport, AsymSummary};
use crate::criteria::{self, CriteriaConfig, CriterionResult};
use crate::error::{GwError, Result};
use crate::invariant::{integral_form_check, InvariantReport};
use crate::iteration::{iterate_series, iteration_trace};
use crate::montecarlo::{simulate, SimConfig};
use crate::numerics::geometric_grid;
use crate::offspring::{FamilySpec, OffspringFamily};
use crate::report::{
    asym_csv, coeff_csv, parse_asym_csv, parse_coeff_csv, parse_trace_csv, to_json, trace_csv, write_atomic,
    write_json,
};
use crate::series::DEFAULT_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Family,
    Iterate,
    Coeffs,
    Invariant,
    Basic,
    ScriptU,
    Lemma2,
    Lemma3,
    Lemma4,
    Qn,
    Thm3,
    Thm4,
    Nnu,
    Mn,
    PsiRatio,
    Proposition,
    Simulate,
    Criteria,
}

impl Check {
    pub const ALL: [Check; 18] = [
        Check::Family,
        Check::Iterate,
        Check::Coeffs,
        Check::Invariant,
        Check::Basic,
        Check::ScriptU,
        Check::Lemma2,
        Check::Lemma3,
        Check::Lemma4,
        Check::Qn,
        Check::Thm3,
        Check::Thm4,
        Check::Nnu,
        Check::Mn,
        Check::PsiRatio,
        Check::Proposition,
        Check::Simulate,
        Check::Criteria,
    ];

    /// The `asym <check>` subcommands.
    pub const ASYM: [Check; 11] = [
        Check::Basic,
        Check::ScriptU,
        Check::Lemma2,
        Check::Lemma3,
        Check::Lemma4,
        Check::Qn,
        Check::Thm3,
        Check::Thm4,
        Check::Nnu,
        Check::Mn,
        Check::PsiRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Family => "family",
            Check::Iterate => "iterate",
            Check::Coeffs => "coeffs",
            Check::Invariant => "invariant",
            Check::Basic => "basic",
            Check::ScriptU => "scriptu",
            Check::Lemma2 => "lemma2",
            Check::Lemma3 => "lemma3",
            Check::Lemma4 => "lemma4",
            Check::Qn => "qn",
            Check::Thm3 => "thm3",
            Check::Thm4 => "thm4",
            Check::Nnu => "nnu",
            Check::Mn => "mn",
            Check::PsiRatio => "psiratio",
            Check::Proposition => "proposition",
            Check::Simulate => "simulate",
            Check::Criteria => "criteria",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| GwError::Config(format!("unknown check {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = GwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(GwError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Flat configuration map: `key=value` lines, `#` comments.
pub type ConfigMap = BTreeMap<String, String>;

pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| GwError::Config(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub const CONFIG_KEYS: [&str; 17] = [
    "family", "nu", "c", "d", "checks", "n", "nmax", "s", "order", "jmax", "reps", "seed", "out", "format", "depth",
    "workers", "nmin",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub family: FamilySpec,
    pub checks: Vec<Check>,
    /// Single generation index (coeffs, simulate horizon).
    pub n: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub s_grid: Vec<f64>,
    pub order: usize,
    pub jmax: usize,
    pub reps: usize,
    pub seed: u64,
    pub depth: usize,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            family: FamilySpec::from(&criteria::family_a()),
            checks: Vec::new(),
            n: 20,
            n_min: 10,
            n_max: 10_000,
            s_grid: vec![0.0, 0.5],
            order: DEFAULT_ORDER,
            jmax: 8,
            reps: 100_000,
            seed: 42,
            depth: 10_000,
            workers: None,
            out_dir: PathBuf::from("gwcrit-out"),
            format: Format::Csv,
        }
    }
}

fn get<T: FromStr>(map: &ConfigMap, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| GwError::Config(format!("{key}={v}: {e}"))))
        .transpose()
}

impl Campaign {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(GwError::Config(format!("unknown key {k:?}")));
        }
        let mut c = Campaign::default();
        if let Some(kind) = map.get("family") {
            let nu = get(map, "nu")?.ok_or_else(|| GwError::Config("family needs nu".into()))?;
            let cc = get(map, "c")?.ok_or_else(|| GwError::Config("family needs c".into()))?;
            c.family = FamilySpec::from_parts(kind, nu, cc, get(map, "d")?).map_err(|e| GwError::Config(e.to_string()))?;
        } else if map.contains_key("nu") || map.contains_key("c") {
            return Err(GwError::Config("nu/c given without family".into()));
        }
        if let Some(list) = map.get("checks") {
            c.checks = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?;
        }
        if let Some(s) = map.get("s") {
            c.s_grid = s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| GwError::Config(format!("s={s}: {e}"))))
                .collect::<Result<_>>()?;
        }
        c.n = get(map, "n")?.unwrap_or(c.n);
        c.n_min = get(map, "nmin")?.unwrap_or(c.n_min);
        c.n_max = get(map, "nmax")?.unwrap_or(c.n_max);
        c.order = get(map, "order")?.unwrap_or(c.order);
        c.jmax = get(map, "jmax")?.unwrap_or(c.jmax);
        c.reps = get(map, "reps")?.unwrap_or(c.reps);
        c.seed = get(map, "seed")?.unwrap_or(c.seed);
        c.depth = get(map, "depth")?.unwrap_or(c.depth);
        c.workers = get(map, "workers")?.or(c.workers);
        c.out_dir = get(map, "out")?.unwrap_or(c.out_dir);
        c.format = get(map, "format")?.unwrap_or(c.format);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GwError::Config(m.into()));
        if self.checks.is_empty() {
            return bad("no checks requested");
        }
        if self.s_grid.is_empty() || self.s_grid.iter().any(|s| !(0.0..1.0).contains(s)) {
            return bad("s grid must be nonempty with values in [0, 1)");
        }
        if self.n == 0 || self.n_min == 0 || self.n_max < self.n_min {
            return bad("need n >= 1 and 1 <= nmin <= nmax");
        }
        if self.order < 2 || self.reps == 0 || self.depth < 2 {
            return bad("need order >= 2, reps >= 1, depth >= 2");
        }
        Ok(())
    }

    /// Every check, as run by `gwcrit report`.
    pub fn full(family: FamilySpec, out_dir: PathBuf) -> Self {
        Self {
            family,
            checks: Check::ALL.to_vec(),
            n_max: 1_000_000,
            reps: 1_000_000,
            out_dir,
            ..Self::default()
        }
    }
}

/// One file written by a campaign, and whether it re-parsed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub check: Check,
    pub path: PathBuf,
    pub round_trip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    /// False if a hard assertion of the check failed.
    pub pass: bool,
    pub summaries: Vec<AsymSummary>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub family: String,
    pub checks: Vec<CheckOutcome>,
    pub criteria: Vec<CriterionResult>,
    pub artifacts: Vec<Artifact>,
    pub all_pass: bool,
}

impl CampaignSummary {
    /// Names of failed checks and criteria.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.checks.iter().filter(|c| !c.pass).map(|c| format!("check {}", c.check)).collect();
        out.extend(self.criteria.iter().filter(|c| !c.pass).map(|c| format!("criterion {} ({})", c.id, c.name)));
        out
    }

    /// 0 if everything passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }
}

struct Output {
    outcome: CheckOutcome,
    artifacts: Vec<Artifact>,
    criteria: Vec<CriterionResult>,
}

fn file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn emit_asym(dir: &Path, fmt: Format, check: Check, rep: &AsymReport) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    let mut stem = format!("{}_{}", rep.quantity, sanitize(&rep.family));
    if let Some(sv) = rep.diagnostic("s") {
        stem.push_str(&format!("_s{sv}"));
    }
    match fmt {
        Format::Csv => {
            let p = file(dir, &format!("{stem}.csv"));
            let text = asym_csv(&rep.records)?;
            write_atomic(&p, text.as_bytes())?;
            let back = parse_asym_csv(&std::fs::read_to_string(&p)?)?;
            out.push(Artifact {
                check,
                round_trip: same_records(&back, &rep.records),
                path: p,
            });
        }
        Format::Json => {
            let p = file(dir, &format!("{stem}.report.json"));
            write_json(&p, rep)?;
            let back: AsymReport = serde_json::from_str(&std::fs::read_to_string(&p)?).map_err(|e| GwError::Parse(e.to_string()))?;
            out.push(Artifact {
                check,
                round_trip: same_records(&back.records, &rep.records),
                path: p,
            });
        }
    }
    let p = file(dir, &format!("{stem}.json"));
    #[derive(Serialize)]
    struct SummaryOut<'a> {
        #[serde(flatten)]
        summary: AsymSummary,
        diagnostics: &'a BTreeMap<String, f64>,
    }
    write_json(
        &p,
        &SummaryOut {
            summary: rep.summary(),
            diagnostics: &rep.diagnostics,
        },
    )?;
    out.push(Artifact {
        check,
        path: p,
        round_trip: true,
    });
    Ok(out)
}

/// Bitwise record equality, with NaN equal to NaN.
fn same_records(a: &[asymptotics::AsymRecord], b: &[asymptotics::AsymRecord]) -> bool {
    let eq = |x: f64, y: f64| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan());
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.n == y.n
                && eq(x.lhs, y.lhs)
                && eq(x.rhs_main, y.rhs_main)
                && eq(x.rhs_correction, y.rhs_correction)
                && eq(x.residual, y.residual)
                && eq(x.normalized, y.normalized)
        })
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

fn asym_outcome(check: Check, reps: &[AsymReport], note: String) -> CheckOutcome {
    CheckOutcome {
        check,
        pass: reps.iter().all(|r| r.pass),
        summaries: reps.iter().map(AsymReport::summary).collect(),
        note,
    }
}

fn run_check(c: &Campaign, fam: &OffspringFamily, check: Check) -> Result<Output> {
    let dir = &c.out_dir;
    let grid = geometric_grid(c.n_min, c.n_max, 4);
    let mut artifacts = Vec::new();
    let mut criteria_out = Vec::new();
    let asym = |reps: Vec<AsymReport>, note: String| -> Result<Output> {
        let mut arts = Vec::new();
        for r in &reps {
            arts.extend(emit_asym(dir, c.format, check, r)?);
        }
        Ok(Output {
            outcome: asym_outcome(check, &reps, note),
            artifacts: arts,
            criteria: Vec::new(),
        })
    };
    let outcome = match check {
        Check::Family => {
            let v = fam.validate(c.depth)?;
            let p = file(dir, "family.json");
            write_json(&p, &v)?;
            artifacts.push(Artifact {
                check,
                path: p,
                round_trip: true,
            });
            CheckOutcome {
                check,
                pass: v.min_coefficient >= 0.0 && v.brackets_unit_mass(1e-10) && v.tail_sign_ok,
                summaries: Vec::new(),
                note: format!(
                    "depth {}: min p_k = {:.3e} at k = {}, mass {:.15} + tail {:.3e}",
                    v.depth, v.min_coefficient, v.min_index, v.truncated_mass, v.tail_bound
                ),
            }
        }
        Check::Iterate => {
            let s = c.s_grid.iter().copied().find(|&s| s > 0.0);
            let rows = iteration_trace(fam, c.n_max, s)?;
            let p = file(dir, "trace.csv");
            let text = trace_csv(&rows)?;
            write_atomic(&p, text.as_bytes())?;
            let back = parse_trace_csv(&std::fs::read_to_string(&p)?)?;
            artifacts.push(Artifact {
                check,
                path: p,
                round_trip: back == rows,
            });
            let monotone = rows.windows(2).all(|w| w[1].fn0 > w[0].fn0 || w[1].qn < w[0].qn);
            CheckOutcome {
                check,
                pass: monotone && rows.len() == c.n_max,
                summaries: Vec::new(),
                note: format!("{} generations, Q_n = {:.6e} at the end", rows.len(), rows.last().map_or(f64::NAN, |r| r.qn)),
            }
        }
        Check::Coeffs => {
            let it = iterate_series(fam, c.n, c.order)?;
            let p = file(dir, "coeffs.csv");
            let text = coeff_csv(it.series.coeffs())?;
            write_atomic(&p, text.as_bytes())?;
            let back = parse_coeff_csv(&std::fs::read_to_string(&p)?)?;
            artifacts.push(Artifact {
                check,
                path: p,
                round_trip: back.iter().zip(it.series.coeffs()).all(|(a, b)| a.to_bits() == b.to_bits()),
            });
            CheckOutcome {
                check,
                pass: it.series.check_pgf(1.0, 1e-10),
                summaries: Vec::new(),
                note: format!("p_j({}) for j <= {}, tail {:.3e}, clamped {}", c.n, c.order, it.series.tail_mass(), it.clamped),
            }
        }
        Check::Invariant => {
            let abel_grid = geometric_grid(c.n_min, c.n_max.min(1_000_000), 2);
            let inv = InvariantReport::build(fam, c.jmax.max(2), 256, &abel_grid)?;
            let integral: Vec<_> = c
                .s_grid
                .iter()
                .map(|&s| integral_form_check(fam, s, 33, 1e-12))
                .collect::<Result<_>>()?;
            #[derive(Serialize, Deserialize, PartialEq)]
            struct InvariantFile {
                invariant: InvariantReport,
                integral_form: Vec<crate::invariant::IntegralCheck>,
            }
            let out = InvariantFile {
                invariant: inv,
                integral_form: integral,
            };
            let p = file(dir, "invariant.json");
            write_json(&p, &out)?;
            let back: InvariantFile =
                serde_json::from_str(&std::fs::read_to_string(&p)?).map_err(|e| GwError::Parse(e.to_string()))?;
            artifacts.push(Artifact {
                check,
                path: p,
                round_trip: to_json(&back)? == to_json(&out)?,
            });
            let diff = out.integral_form.iter().map(|i| i.difference).fold(0.0, f64::max);
            CheckOutcome {
                check,
                pass: out.invariant.normalization.converged(1e-6) && out.invariant.stationarity_stable() && diff <= 1e-8,
                summaries: Vec::new(),
                note: format!(
                    "u1 = {}, normalization sum = {:.9}, integral form max diff {diff:.2e}",
                    out.invariant.u1_analytic, out.invariant.normalization_sum
                ),
            }
        }
        Check::Basic => return asym(vec![asymptotics::basic_lemma_check(fam, &grid)?], String::new()),
        Check::ScriptU => {
            let reps = c
                .s_grid
                .iter()
                .map(|&s| asymptotics::script_u_check(fam, s, &grid, 0.02))
                .collect::<Result<Vec<_>>>()?;
            return asym(reps, "script U_n(s) against U(s) at 2% (diagnostic)".into());
        }
        Check::Lemma2 => {
            let g: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
            return asym(vec![asymptotics::lemma2_bracket_check(fam, &g, 100, 1e-12)?], String::new());
        }
        Check::Lemma3 => {
            let reps = c
                .s_grid
                .iter()
                .map(|&s| asymptotics::lemma3_check(fam, s, c.n_min.max(100), c.n_max))
                .collect::<Result<Vec<_>>>()?;
            return asym(reps, String::new());
        }
        Check::Lemma4 => return asym(vec![asymptotics::lemma4_check(fam, 1e-10, 0.1, 400)?], String::new()),
        Check::Qn => {
            return asym(
                vec![asymptotics::qn_refined_check(fam, &grid)?],
                "refined Q_n correction (diagnostic)".into(),
            )
        }
        Check::Thm3 => {
            let reps = c
                .s_grid
                .iter()
                .map(|&s| asymptotics::thm3_rate_check(fam, s, c.n_min, c.n_max.min(10_000)))
                .collect::<Result<Vec<_>>>()?;
            return asym(reps, String::new());
        }
        Check::Thm4 => {
            let lo = (c.n_max / 100).max(c.n_min);
            return asym(vec![asymptotics::thm4_local_limit(fam, lo, c.n_max)?], format!("fit over [{lo}, {}]", c.n_max));
        }
        Check::Nnu => return asym(vec![asymptotics::n_nu_check(fam, &grid)?], String::new()),
        Check::Mn => {
            let reps = c
                .s_grid
                .iter()
                .map(|&s| asymptotics::m_n_check(fam, s, &geometric_grid(c.n_min, c.n_max.min(10_000), 4), 0.01))
                .collect::<Result<Vec<_>>>()?;
            return asym(reps, String::new());
        }
        Check::PsiRatio => {
            let reps = c
                .s_grid
                .iter()
                .map(|&s| asymptotics::psi_ratio_check(fam, s, &geometric_grid(c.n_min, c.n_max.min(10_000), 4), 1e-3))
                .collect::<Result<Vec<_>>>()?;
            return asym(reps, String::new());
        }
        Check::Proposition => {
            let top = 2000usize.min(c.n_max.max(c.n_min));
            let g = geometric_grid(c.n_min.min(top), top, 4);
            let reps = asymptotics::proposition_diagnostic(fam, c.jmax.clamp(2, 8), &g, c.order.max(c.jmax))?;
            return asym(reps, "general-j ratios (diagnostic)".into());
        }
        Check::Simulate => {
            let mut sc = SimConfig::new(c.family, c.n, c.reps, c.seed);
            sc.jmax = c.jmax;
            sc.workers = c.workers;
            let res = simulate(&sc)?;
            let p = file(dir, "simulate.json");
            write_json(&p, &res)?;
            let back: crate::montecarlo::SimResult =
                serde_json::from_str(&std::fs::read_to_string(&p)?).map_err(|e| GwError::Parse(e.to_string()))?;
            artifacts.push(Artifact {
                check,
                path: p,
                round_trip: back.tally == res.tally,
            });
            CheckOutcome {
                check,
                pass: res.capped_fraction() <= 1e-3,
                summaries: Vec::new(),
                note: format!("{} replicates, capped {}", c.reps, res.capped),
            }
        }
        Check::Criteria => {
            let cfg = CriteriaConfig {
                reps: c.reps,
                seed: c.seed,
                workers: c.workers,
            };
            criteria_out = run_criteria(cfg, dir, &mut artifacts)?;
            CheckOutcome {
                check,
                pass: criteria_out.iter().all(|r| r.pass),
                summaries: Vec::new(),
                note: criteria_out.iter().map(CriterionResult::line).collect::<Vec<_>>().join("\n"),
            }
        }
    };
    Ok(Output {
        outcome,
        artifacts,
        criteria: criteria_out,
    })
}

/// Evaluate criteria 1 to 10. Criterion 10 additionally writes the
/// diagnostics it inspects and verifies that they re-parse exactly.
pub fn run_criteria(cfg: CriteriaConfig, dir: &Path, artifacts: &mut Vec<Artifact>) -> Result<Vec<CriterionResult>> {
    let mut out = vec![
        criteria::criterion_1()?,
        criteria::criterion_2()?,
        criteria::criterion_3()?,
        criteria::criterion_4()?,
        criteria::criterion_5()?,
        criteria::criterion_6()?,
        criteria::criterion_7()?,
        criteria::criterion_8(cfg)?,
        criteria::criterion_9()?,
    ];
    let t = std::time::Instant::now();
    let (inv, psi_ratio) = criteria::criterion_10_inputs()?;
    let mut c10 = criteria::criterion_10_convergence(&inv, psi_ratio.diagnostic("residual_at_top").unwrap_or(f64::NAN))?;
    let p = file(dir, "diagnostics.json");
    #[derive(Serialize, Deserialize, PartialEq)]
    struct Diagnostics {
        invariant: InvariantReport,
        psi_ratio_residual: Vec<asymptotics::AsymRecord>,
    }
    let d = Diagnostics {
        invariant: inv,
        psi_ratio_residual: psi_ratio.records.clone(),
    };
    write_json(&p, &d)?;
    let text = std::fs::read_to_string(&p)?;
    let back: Diagnostics = serde_json::from_str(&text).map_err(|e| GwError::Parse(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| GwError::Parse(e.to_string()))?;
    let present = ["u1_analytic", "u_coeffs", "stationarity_residuals", "normalization_sum", "abel_residual_table"]
        .iter()
        .all(|k| value["invariant"].get(k).is_some())
        && value.get("psi_ratio_residual").is_some_and(|v| v.as_array().is_some_and(|a| !a.is_empty()));
    let round_trip = to_json(&back)? == to_json(&d)?;
    artifacts.push(Artifact {
        check: Check::Criteria,
        path: p,
        round_trip,
    });
    c10.put("present", present as u8 as f64);
    c10.put("round_trip", round_trip as u8 as f64);
    c10.pass &= present && round_trip;
    c10.detail = format!("present {present}, round trip {round_trip}; {}", c10.detail);
    c10.seconds = t.elapsed().as_secs_f64();
    out.push(c10);
    Ok(out)
}

/// Run every check in `campaign`. Checks run in parallel; outputs are
/// ordered as requested.
pub fn run(campaign: &Campaign) -> Result<CampaignSummary> {
    campaign.validate()?;
    let fam = campaign.family.build()?;
    std::fs::create_dir_all(&campaign.out_dir)?;
    let mut checks = campaign.checks.clone();
    checks.dedup();
    let outputs: Vec<Result<Output>> = checks.par_iter().map(|&ch| run_check(campaign, &fam, ch)).collect();
    let mut summary = CampaignSummary {
        family: fam.label(),
        checks: Vec::new(),
        criteria: Vec::new(),
        artifacts: Vec::new(),
        all_pass: true,
    };
    for o in outputs {
        let o = o?;
        summary.checks.push(o.outcome);
        summary.artifacts.extend(o.artifacts);
        summary.criteria.extend(o.criteria);
    }
    summary.all_pass = summary.checks.iter().all(|c| c.pass)
        && summary.criteria.iter().all(|c| c.pass)
        && summary.artifacts.iter().all(|a| a.round_trip);
    let p = campaign.out_dir.join("summary.json");
    write_json(&p, &summary)?;
    Ok(summary)
}
