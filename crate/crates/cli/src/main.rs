//! `da-engine`: configure decentralized annuity plans, simulate them, audit
//! the rationality axioms, estimate fairness and solve transfer systems.

mod config;
mod report;

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use da_core::fairness::{
    classify, equitability_fit_from, fairness_table, instantaneous_fairness, lifetime_fairness, periodic_fairness,
    rationality_table, FairnessReport, McOptions, PlanVariant,
};
use da_core::ledger::BalancePolicy;
use da_core::montecarlo::{compare_da_dc, run, uniform_grid, write_stats_csv, Execution, Metric, SimulationConfig};
use da_core::transfers::{feasibility, solve_alpha};
use serde::Deserialize;
use serde_json::{json, Value};

use config::{Format, RunConfig};
use report::{to_json, ScenarioReport};

#[derive(Parser, Debug)]
#[command(name = "da-engine", version, about = "Decentralized annuity plan engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Directory for output artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Standard output format; json by default, markdown tables for
    /// `classify` unless json is requested.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// `strict` rejects negative balances, `permit` records them.
    #[arg(long, global = true, value_enum)]
    audit: Option<AuditMode>,
    /// Worker threads for path simulation.
    #[arg(long, global = true, env = "DA_ENGINE_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AuditMode {
    Strict,
    Permit,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a plan and write path statistics, a summary and an event log.
    Simulate { config: PathBuf },
    /// Count rationality axiom failures over simulated paths.
    Audit {
        config: PathBuf,
        /// Axioms to report, e.g. `1,3`.
        #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3])]
        axioms: Vec<u8>,
    },
    /// Estimate fairness of a plan.
    Fairness {
        config: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [NotionArg::Lifetime])]
        notion: Vec<NotionArg>,
        /// Period checked for periodic fairness.
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Bin width for instantaneous fairness.
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        /// Replay horizon; unbounded by default, the configured horizon for
        /// instantaneous fairness.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Print the classification of a plan variant, or `tables` for both tables.
    Classify { variant: String },
    /// Solve the transfer system for `{"weights": [..]}` given inline, as a
    /// file path, or `-` for standard input.
    SolveTransfers { input: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NotionArg {
    Lifetime,
    Equitability,
    Periodic,
    Instantaneous,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<da_core::Error>() {
        Some(da_core::Error::Infeasible(_) | da_core::Error::NegativeBalance { .. }) => 2,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Simulate { config } => simulate(cli, config),
        Command::Audit { config, axioms } => audit(cli, config, axioms),
        Command::Fairness { config, notion, period, step, horizon } => {
            fairness(cli, config, notion, *period, *step, *horizon)
        }
        Command::Classify { variant } => classify_cmd(cli, variant),
        Command::SolveTransfers { input } => solve_transfers(input),
    }
}

impl Cli {
    fn execution(&self) -> Execution {
        match self.threads {
            Some(threads) => Execution::ParallelWith { threads },
            None => Execution::default(),
        }
    }

    fn policy(&self) -> Option<BalancePolicy> {
        self.audit.map(|a| match a {
            AuditMode::Strict => BalancePolicy::Reject,
            AuditMode::Permit => BalancePolicy::Permit,
        })
    }

    /// Loads the config and applies the command-line overrides, so that the
    /// result fully determines the run.
    fn load(&self, path: &Path) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(n) = self.paths {
            cfg.simulation.n_paths = n;
        }
        if let Some(p) = self.policy() {
            cfg.scheme.params.balance_policy = Some(p);
        }
        if let Some(d) = &self.out {
            cfg.output.dir = Some(d.clone());
        }
        Ok(cfg)
    }
}

fn print_json(v: &Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn write_json_file(path: &Path, v: &Value) -> anyhow::Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    Ok(())
}

fn simulation_config(cli: &Cli, cfg: &RunConfig, plan: da_core::schemes::Plan) -> SimulationConfig {
    let s = &cfg.simulation;
    let tracked = cfg.tracked(plan.pool.size());
    SimulationConfig::new(plan, cfg.economics.gamma, s.horizon, s.n_paths, s.seed)
        .with_tracked(tracked)
        .with_grid(uniform_grid(s.horizon, s.grid_step))
        .with_execution(cli.execution())
        .with_audit(true)
        .with_lump_sum_drawdown(s.lump_sum_drawdown)
}

const SUMMARY_METRICS: [Metric; 4] = [Metric::Payments, Metric::Utility, Metric::DcPayments, Metric::DcUtility];

fn simulate(cli: &Cli, path: &Path) -> anyhow::Result<ExitCode> {
    let cfg = cli.load(path)?;
    let plan = cfg.plan(None)?;
    let inception = report::inception(&plan)?;
    let scenario = cfg.scenario.as_ref().map(|sc| report::scenario(&plan, sc, cfg.simulation.horizon)).transpose()?;
    let sim = simulation_config(cli, &cfg, plan.clone());
    let stats = if cfg.simulation.n_paths > 0 { Some(run(&sim)?) } else { None };
    let dominance = if cfg.simulation.compare_dc && cfg.simulation.n_paths > 0 { Some(compare_da_dc(&sim)?) } else { None };

    let last = sim.grid.last().copied().unwrap_or(0.0);
    let final_rows: Vec<_> = stats
        .iter()
        .flat_map(|s| s.rows.iter())
        .filter(|r| (r.t - last).abs() < 1e-9 && SUMMARY_METRICS.contains(&r.metric))
        .collect();
    let summary = json!({
        "name": cfg.name,
        "family": plan.scheme.family.name(),
        "dissolution": plan.scheme.dissolution,
        "balance_policy": plan.scheme.balance_policy,
        "seed": cfg.simulation.seed,
        "n_paths": cfg.simulation.n_paths,
        "horizon": cfg.simulation.horizon,
        "participants": plan.pool.size(),
        "tracked": sim.tracked,
        "inception": to_json(&inception)?,
        "counters": stats.as_ref().map(|s| s.counters),
        "final": to_json(&final_rows)?,
        "dominance": to_json(&dominance)?,
        "scenario": to_json(&scenario.as_ref().map(|s| &s.0))?,
        "config": serde_json::to_value(&cfg)?,
    });

    let events = match &scenario {
        Some((_, ev)) => ev.clone(),
        None => report::sample_events(&plan, cfg.simulation.seed, cfg.simulation.horizon)?,
    };
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        if let Some(s) = &stats {
            if cfg.output.formats.contains(&Format::Csv) {
                write_stats_csv(s, BufWriter::new(File::create(dir.join("stats.csv"))?))?;
            }
            if cfg.output.formats.contains(&Format::Json) {
                write_json_file(&dir.join("stats.json"), &to_json(s)?)?;
            }
        }
        write_json_file(&dir.join("summary.json"), &summary)?;
        let mut f = BufWriter::new(File::create(dir.join("events.jsonl"))?);
        for e in &events {
            serde_json::to_writer(&mut f, &to_json(e)?)?;
            writeln!(f)?;
        }
        write_json_file(&dir.join("config.json"), &serde_json::to_value(&cfg)?)?;
    }
    match (cli.format.unwrap_or(Format::Json), &stats) {
        (Format::Csv, Some(s)) => write_stats_csv(s, std::io::stdout().lock())?,
        (Format::Csv, None) => bail!(da_core::Error::Validation("no paths simulated; nothing to write as csv".into())),
        (Format::Json, _) => print_json(&summary)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn audit(cli: &Cli, path: &Path, axioms: &[u8]) -> anyhow::Result<ExitCode> {
    if let Some(a) = axioms.iter().find(|a| !(1..=3).contains(*a)) {
        bail!(da_core::Error::Validation(format!("unknown axiom {a}; choose from 1, 2, 3")));
    }
    let cfg = cli.load(path)?;
    let plan = cfg.plan(None)?;
    let scenario: Option<ScenarioReport> =
        cfg.scenario.as_ref().map(|sc| report::scenario(&plan, sc, cfg.simulation.horizon)).transpose()?.map(|s| s.0);
    let h = cfg.simulation.horizon;
    let sim = simulation_config(cli, &cfg, plan.clone()).with_tracked(vec![0]).with_grid(vec![h]);
    let c = run(&sim)?.counters;
    let failures = [c.axiom1_failures, c.axiom2_failures, c.axiom3_failures];
    let mut per_axiom = serde_json::Map::new();
    for &a in axioms {
        let f = failures[a as usize - 1];
        per_axiom.insert(format!("axiom{a}"), json!({ "failures": f, "pass": f == 0 }));
    }
    let out = json!({
        "family": plan.scheme.family.name(),
        "seed": cfg.simulation.seed,
        "paths": c.paths,
        "aborted": c.aborted,
        "audited": c.audited,
        "axioms": per_axiom,
        "implication_counterexamples": c.implication_counterexamples,
        "scenario": to_json(&scenario.map(|s| s.audit))?,
    });
    print_json(&out)?;
    Ok(ExitCode::SUCCESS)
}

fn fairness(
    cli: &Cli,
    path: &Path,
    notions: &[NotionArg],
    period: usize,
    step: f64,
    horizon: Option<f64>,
) -> anyhow::Result<ExitCode> {
    if cli.format == Some(Format::Csv) {
        bail!(da_core::Error::Validation("fairness reports are written as json".into()));
    }
    let cfg = cli.load(path)?;
    let plan = cfg.plan(None)?;
    let wants = |n: NotionArg| notions.contains(&n) || notions.contains(&NotionArg::All);
    let mut opts = McOptions::new(cfg.simulation.n_paths, cfg.simulation.seed).with_execution(cli.execution());
    if let Some(h) = horizon {
        opts = opts.with_horizon(h);
    }
    let mut r = FairnessReport { family: plan.scheme.family.name().to_string(), ..Default::default() };
    if wants(NotionArg::Lifetime) || wants(NotionArg::Equitability) {
        let l = lifetime_fairness(&plan, &opts)?;
        if wants(NotionArg::Equitability) {
            r.equitability = Some(equitability_fit_from(&l));
        }
        if wants(NotionArg::Lifetime) {
            r.lifetime = Some(l);
        }
    }
    if wants(NotionArg::Periodic) {
        r.periodic = Some(periodic_fairness(&plan, period, &opts)?);
    }
    if wants(NotionArg::Instantaneous) {
        let h = horizon.unwrap_or(cfg.simulation.horizon);
        r.instantaneous = Some(instantaneous_fairness(&plan, step, h, &opts)?);
    }
    let mut v = to_json(&r)?;
    v["seed"] = json!(cfg.simulation.seed);
    v["n_paths"] = json!(cfg.simulation.n_paths);
    v["chain_consistent"] = json!(r.chain_consistent());
    print_json(&v)?;
    Ok(ExitCode::SUCCESS)
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "×"
    }
}

fn classify_cmd(cli: &Cli, variant: &str) -> anyhow::Result<ExitCode> {
    if variant == "tables" {
        if cli.format == Some(Format::Json) {
            let all: Vec<_> = PlanVariant::ALL.iter().map(|&v| classify(v)).collect();
            print_json(&serde_json::to_value(all)?)?;
        } else {
            print!("{}\n{}", rationality_table(), fairness_table());
        }
        return Ok(ExitCode::SUCCESS);
    }
    let c = classify(PlanVariant::parse(variant)?);
    if cli.format == Some(Format::Json) {
        print_json(&serde_json::to_value(&c)?)?;
    } else {
        println!("| | Axiom 1 | Axiom 2 | Axiom 3 | Equitability | Lifetime fairness | Periodic fairness | Instantaneous fairness |");
        println!("|---|---|---|---|---|---|---|---|");
        let cells: Vec<&str> = c.axioms.iter().chain(&c.fairness).map(|&b| mark(b)).collect();
        println!("| {} | {} |", c.label, cells.join(" | "));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsInput {
    weights: Vec<f64>,
}

fn solve_transfers(input: &str) -> anyhow::Result<ExitCode> {
    let text = if input.trim_start().starts_with('{') {
        input.to_string()
    } else if input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(input).with_context(|| format!("reading {input}"))?
    };
    let w: WeightsInput = serde_json::from_str(&text).context("expected {\"weights\": [..]}")
        .map_err(|e| anyhow::Error::new(da_core::Error::Input(format!("{e:#}"))))?;
    let f = feasibility(&w.weights)?;
    let alpha = if f.pass { Some(solve_alpha(&w.weights)?.rows()) } else { None };
    print_json(&report::rounded(json!({
        "weights": w.weights,
        "feasible": f.pass,
        "slack": f.slack,
        "violating": f.violating,
        "alpha": alpha,
    })))?;
    f.into_result(&w.weights)?;
    Ok(ExitCode::SUCCESS)
}
