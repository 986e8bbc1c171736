//! JSON report sections shared by the subcommands.

use da_core::ledger::{
    audit_axiom1, audit_axiom2, audit_axiom3, check_implication, Axiom1Report, Axiom2Report, Axiom3Report,
    ImplicationCheck, LedgerEvent, PoolState, Recording,
};
use da_core::montecarlo::round12;
use da_core::schemes::{Family, InfeasiblePolicy, PathRunner, Plan, RunOptions};
use da_core::transfers::{feasibility, solve_alpha, Feasibility};
use serde::Serialize;
use serde_json::Value;

use crate::config::Scenario;

/// Rounds every float in `v` to 12 significant digits.
pub fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().unwrap_or(f64::NAN));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(x: &T) -> anyhow::Result<Value> {
    Ok(rounded(serde_json::to_value(x)?))
}

/// Weights and coefficients a death at inception would be settled with.
#[derive(Debug, Serialize)]
pub struct Inception {
    /// One weight per cohort account.
    pub weights: Vec<f64>,
    pub feasible: bool,
    /// `sum_{j != i} w_j - w_i` per participant.
    pub slack: Vec<f64>,
    pub violating: Option<usize>,
    /// `alpha[recipient][deceased]` over participants; small pools only.
    pub alpha: Option<Vec<Vec<f64>>>,
}

const ALPHA_LIMIT: usize = 10;

fn pools_by_weight(family: &Family) -> bool {
    !matches!(family, Family::EquitableTontine { .. } | Family::Gsa { .. } | Family::DcDrawdown { .. })
}

/// `None` for plans that do not share by fairness weights or have a single
/// member. An infeasible system is an error unless the plan dissolves.
pub fn inception(plan: &Plan) -> anyhow::Result<Option<Inception>> {
    if !pools_by_weight(&plan.scheme.family) || plan.pool.size() < 2 {
        return Ok(None);
    }
    let mut runner = PathRunner::new(plan);
    runner.set_deaths(&[])?;
    let out = runner.run(&RunOptions { horizon: 0.0, ..RunOptions::default() }, &mut ())?;
    let weights = runner.fairness_weights(&out.state)?;
    let expanded: Vec<f64> = plan
        .pool
        .cohorts
        .iter()
        .zip(&weights)
        .flat_map(|(c, &w)| std::iter::repeat(w).take(c.members))
        .collect();
    let Feasibility { pass, slack, violating } = feasibility(&expanded)?;
    if !pass && plan.scheme.infeasible == InfeasiblePolicy::Abort {
        feasibility(&expanded)?.into_result(&expanded)?;
    }
    let alpha = (pass && expanded.len() <= ALPHA_LIMIT).then(|| solve_alpha(&expanded)).transpose()?.map(|m| m.rows());
    Ok(Some(Inception { weights, feasible: pass, slack, violating, alpha }))
}

#[derive(Debug, Serialize)]
pub struct AccountSnapshot {
    pub account: usize,
    pub alive_members: usize,
    /// Per-member cash value.
    pub balance: f64,
    /// Per-member payout rate; absent once the account is closed out.
    pub rate: Option<f64>,
    pub discounted_paid: f64,
}

#[derive(Debug, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub accounts: Vec<AccountSnapshot>,
}

#[derive(Debug, Serialize)]
pub struct DeathRecord {
    pub t: f64,
    pub account: usize,
    pub pre_death_balance: f64,
    /// `(recipient account, credit per member)`.
    pub transfers: Vec<(usize, f64)>,
    pub balances_after: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Axiom1Section {
    pub pass: Option<bool>,
    /// `lifetime payments < deposit` for each failing survivor.
    pub witness: Vec<String>,
    pub report: Option<Axiom1Report>,
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AxiomAudit {
    pub axiom1: Axiom1Section,
    pub axiom2: Axiom2Report,
    pub axiom3: Axiom3Report,
    pub implication: ImplicationCheck,
}

pub fn audit_state(state: &PoolState) -> AxiomAudit {
    let axiom1 = match audit_axiom1(state) {
        Ok(r) => Axiom1Section {
            pass: Some(r.pass),
            witness: r
                .entries
                .iter()
                .filter(|e| !e.pass)
                .map(|e| format!("{} < {}", round12(e.lifetime_payments), round12(e.deposit)))
                .collect(),
            report: Some(r),
            note: None,
        },
        Err(e) => Axiom1Section { pass: None, witness: Vec::new(), report: None, note: Some(e.to_string()) },
    };
    AxiomAudit { axiom1, axiom2: audit_axiom2(state), axiom3: audit_axiom3(state), implication: check_implication(state) }
}

#[derive(Debug, Serialize)]
pub struct ScenarioReport {
    pub horizon: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub deaths: Vec<DeathRecord>,
    pub truncated: bool,
    pub pooling_ended: Option<f64>,
    pub infeasible: Option<String>,
    pub audit: AxiomAudit,
}

fn snapshot(state: &PoolState, t: f64) -> Checkpoint {
    let accounts = state
        .accounts()
        .iter()
        .enumerate()
        .map(|(i, a)| AccountSnapshot {
            account: i,
            alive_members: a.alive_members(),
            balance: a.cash_value(),
            rate: (a.is_alive() && !state.is_closed()).then(|| state.rate(i, t)),
            discounted_paid: a.discounted_paid(),
        })
        .collect();
    Checkpoint { t, accounts }
}

/// Replays the scripted deaths, returning the report and the event log.
pub fn scenario(plan: &Plan, sc: &Scenario, default_horizon: f64) -> anyhow::Result<(ScenarioReport, Vec<LedgerEvent>)> {
    let horizon = sc.horizon.unwrap_or(default_horizon);
    let mut runner = PathRunner::new(plan);
    runner.set_deaths(&sc.deaths)?;
    let checkpoints = sc
        .checkpoints
        .iter()
        .map(|&t| Ok(snapshot(&runner.run(&RunOptions { horizon: t, ..RunOptions::default() }, &mut ())?.state, t)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let full = RunOptions { horizon, recording: Recording { deaths: true, events: true }, max_deaths: None };
    let out = runner.run(&full, &mut ())?;
    if let Some(e) = &out.infeasible {
        if plan.scheme.infeasible == InfeasiblePolicy::Abort {
            return Err(e.clone().into());
        }
    }
    let mut deaths = Vec::new();
    for (k, d) in out.state.deaths().unwrap_or_default().iter().enumerate() {
        let upto = RunOptions { horizon: d.time, max_deaths: Some(k + 1), ..RunOptions::default() };
        let after = runner.run(&upto, &mut ())?.state.cash_values();
        deaths.push(DeathRecord {
            t: d.time,
            account: d.deceased,
            pre_death_balance: d.pre_death_balance,
            transfers: d.transfers.clone(),
            balances_after: after,
        });
    }
    let report = ScenarioReport {
        horizon,
        checkpoints,
        deaths,
        truncated: out.truncated,
        pooling_ended: out.pooling_ended,
        infeasible: out.infeasible.as_ref().map(|e| e.to_string()),
        audit: audit_state(&out.state),
    };
    Ok((report, out.state.events().unwrap_or_default().to_vec()))
}

/// Event log of the first sampled path.
pub fn sample_events(plan: &Plan, seed: u64, horizon: f64) -> anyhow::Result<Vec<LedgerEvent>> {
    let mut runner = PathRunner::new(plan);
    runner.sample_deaths(seed, 0);
    let opts = RunOptions { horizon, recording: Recording { deaths: false, events: true }, max_deaths: None };
    Ok(runner.run(&opts, &mut ())?.state.events().unwrap_or_default().to_vec())
}
