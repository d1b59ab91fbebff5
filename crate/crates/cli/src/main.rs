use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gwcrit::campaign::{self, parse_config, Campaign, Check, ConfigMap};
use gwcrit::montecarlo::{simulate, SimConfig};
use gwcrit::report::write_json;
use gwcrit::GwError;

/// Explicit generating-function theory of critical Galton-Watson processes
/// with infinite offspring variance, checked numerically.
#[derive(Parser)]
#[command(name = "gwcrit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offspring family operations.
    Family {
        #[command(subcommand)]
        action: FamilyAction,
    },
    /// Scalar trace of f_n(0), Q_n and p_1(n) up to --nmax.
    Iterate(Opts),
    /// Coefficients p_j(n) of f_n at order --order.
    Coeffs(Opts),
    /// Invariant measure coefficients, stationarity, normalization and Abel residuals.
    Invariant(Opts),
    /// One asymptotic check: basic, scriptu, lemma2, lemma3, lemma4, qn, thm3, thm4, nnu, mn, psi_ratio, proposition.
    Asym {
        check: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// Monte Carlo estimates of Q_g and p_j(g) for g <= --n.
    Simulate(Opts),
    /// Every check plus the acceptance criteria.
    Report(Opts),
}

#[derive(Subcommand)]
enum FamilyAction {
    /// Coefficient signs and mass to --depth.
    Validate(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// stable or perturbed.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, value_parser = count)]
    n: Option<u64>,
    #[arg(long, value_parser = count)]
    nmin: Option<u64>,
    #[arg(long, value_parser = count)]
    nmax: Option<u64>,
    /// Comma-separated s values in [0, 1).
    #[arg(long)]
    s: Option<String>,
    #[arg(long, value_parser = count)]
    order: Option<u64>,
    #[arg(long, value_parser = count)]
    jmax: Option<u64>,
    #[arg(long, value_parser = count)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = count)]
    depth: Option<u64>,
    #[arg(long, value_parser = count)]
    workers: Option<u64>,
    /// Output directory; for `simulate`, the JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

/// Counts may be written as 1000000 or 1e6.
fn count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 => Ok(x as u64),
        _ => Err(format!("{s:?} is not a nonnegative integer")),
    }
}

impl Opts {
    fn map(&self) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_config(&text)?
            }
            None => ConfigMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        set("family", self.family.clone());
        set("nu", self.nu.map(|x| x.to_string()));
        set("c", self.c.map(|x| x.to_string()));
        set("d", self.d.map(|x| x.to_string()));
        set("n", self.n.map(|x| x.to_string()));
        set("nmin", self.nmin.map(|x| x.to_string()));
        set("nmax", self.nmax.map(|x| x.to_string()));
        set("s", self.s.clone());
        set("order", self.order.map(|x| x.to_string()));
        set("jmax", self.jmax.map(|x| x.to_string()));
        set("reps", self.reps.map(|x| x.to_string()));
        set("seed", self.seed.map(|x| x.to_string()));
        set("depth", self.depth.map(|x| x.to_string()));
        set("workers", self.workers.map(|x| x.to_string()));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("format", self.format.clone());
        Ok(map)
    }

    fn campaign(&self, checks: &[Check]) -> Result<Campaign> {
        let mut map = self.map()?;
        let names: Vec<&str> = checks.iter().map(|c| c.name()).collect();
        map.insert("checks".into(), names.join(","));
        Ok(Campaign::from_map(&map)?)
    }
}

fn run_campaign(c: &Campaign) -> Result<i32> {
    let summary = campaign::run(c)?;
    for o in &summary.checks {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("check {} [{tag}] {}", o.check, o.note);
        for s in &o.summaries {
            let tag = if s.pass { "PASS" } else { "FAIL" };
            let mut line = format!("  {} {} [{tag}]", s.quantity, s.family);
            if let Some(v) = s.fitted_slope {
                line.push_str(&format!(" slope {v:.6}"));
            }
            if let Some(v) = s.target_slope {
                line.push_str(&format!(" target {v:.6}"));
            }
            println!("{line}");
        }
    }
    for a in &summary.artifacts {
        println!("wrote {}", a.path.display());
    }
    let failures = summary.failures();
    if !failures.is_empty() {
        eprintln!("failed: {}", failures.join("; "));
    }
    Ok(summary.exit_code())
}

fn run_simulate(opts: &Opts) -> Result<i32> {
    let c = opts.campaign(&[Check::Simulate])?;
    let mut cfg = SimConfig::new(c.family, c.n, c.reps, c.seed);
    cfg.jmax = c.jmax;
    cfg.workers = c.workers;
    let res = simulate(&cfg)?;
    match &opts.out {
        Some(p) => {
            write_json(p, &res)?;
            println!("wrote {}", p.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&res)?),
    }
    let g = c.n.min(res.q_hat.len().saturating_sub(1));
    eprintln!(
        "{} replicates to generation {}: Q_hat = {:.7} +- {:.7}, capped {}",
        c.reps, c.n, res.q_hat[g], res.q_stderr[g], res.capped
    );
    Ok(if res.capped_fraction() <= 1e-3 { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Family {
            action: FamilyAction::Validate(o),
        } => run_campaign(&o.campaign(&[Check::Family])?),
        Command::Iterate(o) => run_campaign(&o.campaign(&[Check::Iterate])?),
        Command::Coeffs(o) => run_campaign(&o.campaign(&[Check::Coeffs])?),
        Command::Invariant(o) => run_campaign(&o.campaign(&[Check::Invariant])?),
        Command::Asym { check, opts } => {
            let ch: Check = check.parse()?;
            if !Check::ASYM.contains(&ch) {
                return Err(GwError::Config(format!("{check} is not an asymptotic check")).into());
            }
            run_campaign(&opts.campaign(&[ch])?)
        }
        Command::Simulate(o) => run_simulate(&o),
        Command::Report(o) => {
            let base = o.campaign(&[Check::Criteria])?;
            let mut c = Campaign::full(base.family, base.out_dir.clone());
            if o.reps.is_some() {
                c.reps = base.reps;
            }
            if o.nmax.is_some() {
                c.n_max = base.n_max;
            }
            c.seed = base.seed;
            c.format = base.format;
            c.workers = base.workers;
            run_campaign(&c)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<GwError>(), Some(GwError::Config(_) | GwError::Parse(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
