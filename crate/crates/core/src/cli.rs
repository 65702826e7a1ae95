//! Command-line front end: `price`, `bounds`, `check`, `penalty` and the
//! hidden `oracle` command.
//!
//! Exit codes: 0 ok, 1 input error, 2 unbounded risk reduction or a broken
//! modelling assumption, 3 a selected check failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_claims, parse_json, read_text, RiskConfig};
use crate::error::{Error, Result};
use crate::good_deal::{
    check_sandwich, check_theorem_ab, martingale_measure, ngd_lower, ngd_upper, DeltaSchedule, DeltaScheduleJson,
};
use crate::indifference::{check_price_operator, check_recursive, price, StrategySpace, StrategySpaceJson};
use crate::report::{config_hash, to_csv, Report};
use crate::risk::{
    check_axioms, check_domination_sensitivity, check_strong_tc, check_tc_decomposition, minimal_penalty, RiskFamily,
};
use crate::space::generate::random_variable;
use crate::space::{DensityChange, DensityChangeJson, NodeVariable, ScenarioTree};
use crate::worked::worked_examples;

#[derive(Debug, Parser)]
#[command(name = "dynrisk", version, about = "Dynamic risk measures, indifference prices and no-good-deal bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seller's risk-indifference prices of the claims.
    Price(RunArgs),
    /// No-good-deal bounds m and M of the claims.
    Bounds(RunArgs),
    /// Run checker suites on seeded random claims.
    Check(RunArgs),
    /// Minimal penalty of a measure.
    Penalty(RunArgs),
    /// Reproduce the worked examples with the brute-force oracles.
    #[command(hide = true)]
    Oracle(RunArgs),
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Scenario tree (JSON).
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Risk family (JSON).
    #[arg(long)]
    risk: Option<PathBuf>,
    /// Strategy space (JSON); no trading when omitted.
    #[arg(long)]
    strategies: Option<PathBuf>,
    /// No-good-deal schedule (JSON).
    #[arg(long)]
    delta: Option<PathBuf>,
    /// One claim or a list of claims (JSON).
    #[arg(long)]
    claims: Option<PathBuf>,
    /// Measure for `penalty`, or an extra probe for `check` (JSON).
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the main table as CSV instead of the JSON report.
    #[arg(long)]
    csv: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated suites for `check`.
    #[arg(long, value_delimiter = ',')]
    checks: Vec<String>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// Number of random claims for `check`.
    #[arg(long, default_value_t = 8)]
    samples: usize,
}

/// Everything a command needs, loaded and validated.
pub struct RunConfig {
    pub command: String,
    pub tree: Option<Arc<ScenarioTree>>,
    pub risk: Option<RiskConfig>,
    pub space: StrategySpace,
    pub schedule: Option<DeltaSchedule>,
    pub claims: Vec<NodeVariable>,
    pub measure: Option<DensityChange>,
    pub r: usize,
    pub s: usize,
    pub t: usize,
    pub seed: u64,
    pub samples: usize,
    pub checks: Vec<String>,
    pub config_hash: String,
}

const ALL_SUITES: [&str; 8] = [
    "axioms",
    "strong_tc",
    "tc",
    "domination",
    "price",
    "recursive",
    "sandwich",
    "theorem_ab",
];

impl RunConfig {
    fn load(command: &str, a: &RunArgs) -> Result<Self> {
        let mut parts: Vec<(String, String)> = vec![("command".into(), command.into())];
        let mut read = |label: &str, path: &Option<PathBuf>| -> Result<Option<(PathBuf, String)>> {
            match path {
                Some(p) => {
                    let text = read_text(p)?;
                    parts.push((label.into(), text.clone()));
                    Ok(Some((p.clone(), text)))
                }
                None => Ok(None),
            }
        };
        let tree_text = read("tree", &a.tree)?;
        let risk_text = read("risk", &a.risk)?;
        let space_text = read("strategies", &a.strategies)?;
        let delta_text = read("delta", &a.delta)?;
        let claims_text = read("claims", &a.claims)?;
        let measure_text = read("measure", &a.measure)?;

        let tree = match &tree_text {
            Some((_, text)) => Some(Arc::new(ScenarioTree::from_json(text)?)),
            None => None,
        };
        let horizon = tree.as_ref().map_or(0, |t| t.horizon());
        let t = a.t.unwrap_or(horizon);
        let s = a.s.unwrap_or(if command == "check" { t.min(1) } else { 0 });
        let r = a.r.unwrap_or(0);
        if let Some(tree) = &tree {
            tree.check_levels(r, s)?;
            tree.check_levels(s, t)?;
        }
        let with_tree = |what: &str| -> Result<&Arc<ScenarioTree>> {
            tree.as_ref().ok_or_else(|| Error::Config(format!("--tree is required with --{what}")))
        };
        let risk = match &risk_text {
            Some((p, text)) => Some(parse_json::<RiskConfig>(p, text)?),
            None => None,
        };
        let space = match &space_text {
            Some((p, text)) => StrategySpace::from_json(with_tree("strategies")?, &parse_json::<StrategySpaceJson>(p, text)?)?,
            None => StrategySpace::Zero,
        };
        let schedule = match &delta_text {
            Some((p, text)) => Some(DeltaSchedule::from_json(&parse_json::<DeltaScheduleJson>(p, text)?, horizon)?),
            None => None,
        };
        let claims = match &claims_text {
            Some((_, text)) => {
                let tree = with_tree("claims")?;
                let claims = parse_claims(tree, text)?;
                for c in &claims {
                    if c.level < s || c.level > t {
                        return Err(Error::InvalidLevels { s, t: c.level, levels: tree.levels() });
                    }
                }
                claims.iter().map(|c| c.lift(tree, t)).collect()
            }
            None => Vec::new(),
        };
        let measure = match &measure_text {
            Some((p, text)) => Some(DensityChange::from_json(with_tree("measure")?, &parse_json::<DensityChangeJson>(p, text)?)?),
            None => None,
        };
        let checks = if a.checks.is_empty() {
            let mut d = vec!["axioms", "strong_tc", "tc", "price", "recursive"];
            if schedule.is_some() {
                d.extend(["sandwich", "theorem_ab"]);
            }
            d.into_iter().map(String::from).collect()
        } else {
            for c in &a.checks {
                if !ALL_SUITES.contains(&c.as_str()) {
                    return Err(Error::Config(format!("unknown check {c:?}; known: {}", ALL_SUITES.join(","))));
                }
            }
            a.checks.clone()
        };
        let levels = format!("r={r} s={s} t={t} samples={} checks={}", a.samples, checks.join(","));
        parts.push(("levels".into(), levels));
        parts.push(("seed".into(), a.seed.to_string()));
        let config_hash = config_hash(parts.iter().map(|(a, b)| (a.as_str(), b.as_str())));
        Ok(Self {
            command: command.into(),
            tree,
            risk,
            space,
            schedule,
            claims,
            measure,
            r,
            s,
            t,
            seed: a.seed,
            samples: a.samples,
            checks,
            config_hash,
        })
    }

    fn tree(&self) -> Result<&Arc<ScenarioTree>> {
        self.tree.as_ref().ok_or_else(|| Error::Config("--tree is required".into()))
    }

    fn family(&self) -> Result<RiskFamily> {
        let risk = self.risk.as_ref().ok_or_else(|| Error::Config("--risk is required".into()))?;
        risk.build(self.tree()?.clone())
    }

    fn schedule(&self) -> Result<&DeltaSchedule> {
        self.schedule.as_ref().ok_or_else(|| Error::Config("--delta is required".into()))
    }

    fn claims(&self) -> Result<&[NodeVariable]> {
        if self.claims.is_empty() {
            return Err(Error::Config("--claims is required".into()));
        }
        Ok(&self.claims)
    }
}

/// What a command produces: the JSON result, an optional CSV table, and
/// whether the selected checks passed.
struct Output {
    result: Value,
    csv: Option<String>,
    pass: bool,
}

#[derive(Serialize)]
struct PriceRow {
    claim: usize,
    node: usize,
    x: f64,
}

fn cmd_price(cfg: &RunConfig) -> Result<Output> {
    let family = cfg.family()?;
    let tree = cfg.tree()?;
    let mut claims = Vec::new();
    let mut rows = Vec::new();
    for (i, x) in cfg.claims()?.iter().enumerate() {
        let res = price(&family, &cfg.space, cfg.s, cfg.t, x)?;
        let nodes: Vec<Value> = tree
            .nodes_at(cfg.s)
            .iter()
            .enumerate()
            .map(|(pos, &n)| {
                rows.push(PriceRow { claim: i, node: n, x: res.value.values[pos] });
                json!({
                    "node": n,
                    "x": res.value.values[pos],
                    "inf_with_claim": res.inf_with_claim.values[pos],
                    "inf_without_claim": res.inf_without_claim.values[pos],
                    "diagnostics": res.nodes[pos],
                })
            })
            .collect();
        claims.push(json!({
            "claim": i,
            "nodes": nodes,
            "iterations": res.iterations,
            "final_gradient_norm": res.final_gradient_norm,
            "theta_hat": res.theta_hat.to_json(tree),
        }));
    }
    Ok(Output {
        result: json!({"s": cfg.s, "t": cfg.t, "strategies": cfg.space.to_json(), "claims": claims}),
        csv: Some(to_csv(&rows)?),
        pass: true,
    })
}

#[derive(Serialize)]
struct BoundsRow {
    claim: usize,
    node: usize,
    m: f64,
    #[serde(rename = "M")]
    upper: f64,
}

fn cmd_bounds(cfg: &RunConfig) -> Result<Output> {
    let tree = cfg.tree()?;
    let schedule = cfg.schedule()?;
    let mut claims = Vec::new();
    let mut rows = Vec::new();
    for (i, x) in cfg.claims()?.iter().enumerate() {
        let up = ngd_upper(tree, x, cfg.s, schedule)?;
        let lo = ngd_lower(tree, x, cfg.s, schedule)?;
        let nodes: Vec<Value> = tree
            .nodes_at(cfg.s)
            .iter()
            .enumerate()
            .map(|(pos, &n)| {
                let (m, big) = (lo.value.values[pos], up.value.values[pos]);
                rows.push(BoundsRow { claim: i, node: n, m, upper: big });
                json!({
                    "node": n,
                    "m": m,
                    "M": big,
                    "binding_lower": lo.binding[pos],
                    "binding_upper": up.binding[pos],
                })
            })
            .collect();
        claims.push(json!({"claim": i, "nodes": nodes}));
    }
    Ok(Output {
        result: json!({"s": cfg.s, "t": cfg.t, "delta": schedule.delta(cfg.s, cfg.t), "claims": claims}),
        csv: Some(to_csv(&rows)?),
        pass: true,
    })
}

#[derive(Serialize)]
struct SuiteRow {
    suite: String,
    pass: bool,
}

fn cmd_check(cfg: &RunConfig) -> Result<Output> {
    let family = cfg.family()?;
    let tree = cfg.tree()?.clone();
    let (r, s, t) = (cfg.r, cfg.s, cfg.t);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples: Vec<NodeVariable> = (0..cfg.samples).map(|_| random_variable(&mut rng, &tree, t, 1.0)).collect();
    samples.extend(cfg.claims.iter().cloned());
    if samples.is_empty() {
        return Err(Error::Config("check needs --samples > 0 or --claims".into()));
    }
    let mut suites = Vec::new();
    let mut rows = Vec::new();
    for name in &cfg.checks {
        let (pass, report) = match name.as_str() {
            "axioms" => {
                let out = check_axioms(&family, s, t, &samples, 1e-7)?;
                (out.iter().all(|o| o.pass), serde_json::to_value(out)?)
            }
            "strong_tc" => {
                let out = check_strong_tc(&family, r, s, t, &samples, 1e-9)?;
                (out.pass, serde_json::to_value(out)?)
            }
            "tc" => {
                let out = check_tc_decomposition(&family, r, s, t, &samples, 1e-9)?;
                (out.tc.pass && out.equivalence_consistent, serde_json::to_value(out)?)
            }
            "domination" => {
                let out = check_domination_sensitivity(&family)?;
                (out.sensitive, serde_json::to_value(out)?)
            }
            "price" => {
                let out = check_price_operator(&family, &cfg.space, s, t, &samples, 1e-6)?;
                (out.iter().all(|o| o.pass), serde_json::to_value(out)?)
            }
            "recursive" => {
                let out = check_recursive(&family, &cfg.space, r, s, t, &samples, 1e-6)?;
                (out.recursive.pass, serde_json::to_value(out)?)
            }
            "sandwich" => {
                let out = check_sandwich(&family, &cfg.space, s, t, cfg.schedule()?, &samples, 1e-7)?;
                (out.pass, serde_json::to_value(out)?)
            }
            "theorem_ab" => {
                let mut probes = vec![DensityChange::reference(&tree, s, t)];
                probes.extend(martingale_measure(&tree, s, t)?);
                probes.extend(cfg.measure.iter().cloned());
                let out = check_theorem_ab(&family, &cfg.space, s, t, cfg.schedule()?, &samples, &probes, 1e-7)?;
                (out.agree, serde_json::to_value(out)?)
            }
            other => return Err(Error::Config(format!("unknown check {other:?}"))),
        };
        rows.push(SuiteRow { suite: name.clone(), pass });
        suites.push(json!({"suite": name, "pass": pass, "report": report}));
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(Output {
        result: json!({
            "r": r, "s": s, "t": t,
            "samples": samples.len(),
            "strategies": cfg.space.to_json(),
            "pass": pass,
            "suites": suites,
        }),
        csv: Some(to_csv(&rows)?),
        pass,
    })
}

#[derive(Serialize)]
struct PenaltyRow {
    node: usize,
    penalty: f64,
    infinite: bool,
}

fn cmd_penalty(cfg: &RunConfig) -> Result<Output> {
    let family = cfg.family()?;
    let tree = cfg.tree()?;
    let q = cfg.measure.as_ref().ok_or_else(|| Error::Config("--measure is required".into()))?;
    let pen = minimal_penalty(&family, cfg.s, cfg.t, q)?;
    let rows: Vec<PenaltyRow> = tree
        .nodes_at(cfg.s)
        .iter()
        .enumerate()
        .map(|(pos, &n)| PenaltyRow { node: n, penalty: pen.values[pos], infinite: pen.infinite[pos] })
        .collect();
    Ok(Output {
        result: json!({"s": cfg.s, "t": cfg.t, "method": pen.method, "iterations": pen.iterations, "nodes": rows}),
        csv: Some(to_csv(&rows)?),
        pass: true,
    })
}

fn cmd_oracle(_cfg: &RunConfig) -> Result<Output> {
    let rows = worked_examples()?;
    let pass = rows.iter().all(|r| r.agree);
    Ok(Output {
        result: json!({"pass": pass, "examples": rows}),
        csv: Some(to_csv(&rows)?),
        pass,
    })
}

/// Exit code of an error: 2 for unbounded risk reduction or a broken
/// modelling assumption, 1 for input errors.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnboundedRiskReduction { .. } | Error::NonMonotoneDriver { .. } | Error::InfeasibleClaim(_) => 2,
        _ => 1,
    }
}

fn error_body(e: &Error) -> String {
    let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
    format!("{}\n", serde_json::to_string_pretty(&body).expect("json"))
}

fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn execute(command: &str, args: &RunArgs) -> Result<(String, bool)> {
    let cfg = RunConfig::load(command, args)?;
    let out = match command {
        "price" => cmd_price(&cfg)?,
        "bounds" => cmd_bounds(&cfg)?,
        "check" => cmd_check(&cfg)?,
        "penalty" => cmd_penalty(&cfg)?,
        _ => cmd_oracle(&cfg)?,
    };
    let text = match (args.csv, out.csv) {
        (true, Some(csv)) => csv,
        _ => Report::new(command, cfg.config_hash.clone(), cfg.seed, out.result).to_json()?,
    };
    Ok((text, out.pass))
}

/// Parse arguments, run, write the report, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, args) = match &cli.command {
        Command::Price(a) => ("price", a),
        Command::Bounds(a) => ("bounds", a),
        Command::Check(a) => ("check", a),
        Command::Penalty(a) => ("penalty", a),
        Command::Oracle(a) => ("oracle", a),
    };
    let (text, code) = match execute(name, args) {
        Ok((text, pass)) => (text, if pass { 0 } else { 3 }),
        Err(e) => (error_body(&e), exit_code(&e)),
    };
    if let Err(e) = emit(args.out.as_deref(), &text) {
        eprintln!("cannot write report: {e}");
        return 1;
    }
    code
}
