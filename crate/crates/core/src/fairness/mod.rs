//! Fairness evaluation: lifetime fairness and equitability from simulated
//! lifetime payments, periodic fairness by restarting from a period-start
//! state, instantaneous fairness on a binned time grid, and the static
//! classification of the plan variants.
//!
//! Monte Carlo verdicts pass when `|residual| < tolerance + 3 s.e.`.

mod classify;
mod instantaneous;
mod periodic;

use serde::Serialize;

pub use classify::{classify, fairness_table, rationality_table, Classification, PlanVariant};
pub use instantaneous::{instantaneous_fairness, InstantaneousCurve, InstantaneousReport};
pub use periodic::{periodic_fairness, PeriodicEntry, PeriodicReport};

use crate::error::{validation, Result};
use crate::ledger::PoolState;
use crate::montecarlo::{map_batches, Execution, BATCH};
use crate::schemes::{Observer, PathRunner, Plan, RunOptions};

/// Sampling controls shared by the estimators.
#[derive(Clone, Copy, Debug)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub execution: Execution,
    pub batch: usize,
    /// Replays stop here; lifetime payments of members still alive are
    /// counted up to this time.
    pub horizon: f64,
    /// Absolute verdict tolerance; defaults to 1% of the mean deposit.
    pub tolerance: Option<f64>,
}

impl McOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McOptions { n_paths, seed, execution: Execution::default(), batch: BATCH, horizon: f64::INFINITY, tolerance: None }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn tolerance_for(&self, plan: &Plan) -> f64 {
        self.tolerance.unwrap_or(1e-2 * plan.pool.total_deposit() / plan.pool.size() as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(validation("need at least two paths for a standard error"));
        }
        if !(self.horizon > 0.0) {
            return Err(validation("horizon must be positive"));
        }
        Ok(())
    }
}

/// Running sums of a per-path quantity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Moments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let var = ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

pub(crate) fn passes(residual: f64, std_error: f64, tolerance: f64) -> bool {
    residual.abs() < tolerance + 3.0 * std_error
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LifetimeEntry {
    pub account: usize,
    pub deposit: f64,
    /// Mean discounted lifetime payments per member.
    pub mean: f64,
    pub std_error: f64,
    pub residual: f64,
    pub relative: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LifetimeReport {
    pub paths: u64,
    pub aborted: u64,
    pub tolerance: f64,
    pub entries: Vec<LifetimeEntry>,
    pub pass: bool,
}

struct LifetimeObserver {
    totals: Vec<f64>,
}

impl Observer for LifetimeObserver {
    fn before_death(&mut self, state: &PoolState, account: usize, _participant: usize) {
        self.totals[account] += state.account(account).discounted_paid();
    }
}

/// Estimates each account's expected discounted lifetime payments per
/// member, terminal lump sums included, against its deposit.
pub fn lifetime_fairness(plan: &Plan, opts: &McOptions) -> Result<LifetimeReport> {
    opts.validate()?;
    let n = plan.accounts();
    let members: Vec<f64> = plan.pool.cohorts.iter().map(|c| c.members as f64).collect();
    let batches = map_batches(opts.n_paths, opts.batch, opts.execution, |range| {
        let mut runner = PathRunner::new(plan);
        let run_opts = RunOptions { horizon: opts.horizon, ..RunOptions::default() };
        let mut obs = LifetimeObserver { totals: vec![0.0; n] };
        let mut moments = vec![Moments::default(); n];
        let mut aborted = 0u64;
        for path in range {
            runner.sample_deaths(opts.seed, path);
            obs.totals.iter_mut().for_each(|t| *t = 0.0);
            let out = runner.run(&run_opts, &mut obs)?;
            if out.infeasible.is_some() {
                aborted += 1;
                continue;
            }
            for a in 0..n {
                let acct = out.state.account(a);
                let total = obs.totals[a] + acct.alive_members() as f64 * acct.discounted_paid();
                moments[a].push(total / members[a]);
            }
        }
        Ok((moments, aborted))
    })?;
    let mut moments = vec![Moments::default(); n];
    let mut aborted = 0;
    for (m, a) in batches {
        moments.iter_mut().zip(&m).for_each(|(x, y)| x.merge(y));
        aborted += a;
    }
    let tolerance = opts.tolerance_for(plan);
    let entries: Vec<LifetimeEntry> = moments
        .iter()
        .enumerate()
        .map(|(a, m)| {
            let deposit = plan.pool.cohorts[a].deposit;
            let (mean, se) = if m.n == 0 { (f64::NAN, f64::NAN) } else { (m.mean(), m.std_error()) };
            let residual = mean - deposit;
            LifetimeEntry {
                account: a,
                deposit,
                mean,
                std_error: se,
                residual,
                relative: residual / deposit,
                pass: passes(residual, se, tolerance),
            }
        })
        .collect();
    Ok(LifetimeReport {
        paths: opts.n_paths as u64,
        aborted,
        tolerance,
        pass: entries.iter().all(|e| e.pass),
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquitabilityFit {
    /// Common retained fraction is `1 - epsilon`.
    pub epsilon: f64,
    /// `max_i |E[lifetime payments_i] - (1 - epsilon) s_i|`.
    pub max_dev: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub equitable: bool,
}

/// Chebyshev fit of a single retained fraction to the lifetime means.
pub fn equitability_fit_from(report: &LifetimeReport) -> EquitabilityFit {
    let pts: Vec<(f64, f64)> = report.entries.iter().map(|e| (e.deposit, e.mean)).collect();
    let dev = |x: f64| pts.iter().map(|(s, m)| (m - x * s).abs()).fold(0.0, f64::max);
    // The objective is convex and piecewise linear in x; its minimum sits
    // where two of the lines cross or where one vanishes.
    let mut candidates: Vec<f64> = pts.iter().map(|(s, m)| m / s).collect();
    for (i, (si, mi)) in pts.iter().enumerate() {
        for (sj, mj) in &pts[i + 1..] {
            candidates.push((mi + mj) / (si + sj));
            if (si - sj).abs() > 1e-12 {
                candidates.push((mi - mj) / (si - sj));
            }
        }
    }
    let best = candidates
        .into_iter()
        .filter(|x| x.is_finite())
        .map(|x| (x, dev(x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((f64::NAN, f64::NAN));
    let std_error = report.entries.iter().map(|e| e.std_error).fold(0.0, f64::max);
    EquitabilityFit {
        epsilon: 1.0 - best.0,
        max_dev: best.1,
        std_error,
        tolerance: report.tolerance,
        equitable: passes(best.1, std_error, report.tolerance),
    }
}

pub fn equitability_fit(plan: &Plan, opts: &McOptions) -> Result<EquitabilityFit> {
    Ok(equitability_fit_from(&lifetime_fairness(plan, opts)?))
}

/// Which notions a combined report evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Notion {
    Lifetime,
    Equitability,
    Periodic,
    Instantaneous,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FairnessReport {
    pub family: String,
    pub lifetime: Option<LifetimeReport>,
    pub equitability: Option<EquitabilityFit>,
    pub periodic: Option<PeriodicReport>,
    pub instantaneous: Option<InstantaneousReport>,
}

impl FairnessReport {
    /// Evaluates the requested notions; periodic fairness is checked on the
    /// first period and instantaneous fairness on bins of width `step`.
    pub fn evaluate(plan: &Plan, notions: &[Notion], opts: &McOptions, step: f64) -> Result<Self> {
        let mut r = FairnessReport { family: plan.scheme.family.name().to_string(), ..Default::default() };
        if notions.iter().any(|n| matches!(n, Notion::Lifetime | Notion::Equitability)) {
            let l = lifetime_fairness(plan, opts)?;
            if notions.contains(&Notion::Equitability) {
                r.equitability = Some(equitability_fit_from(&l));
            }
            if notions.contains(&Notion::Lifetime) {
                r.lifetime = Some(l);
            }
        }
        if notions.contains(&Notion::Periodic) {
            r.periodic = Some(periodic_fairness(plan, 1, opts)?);
        }
        if notions.contains(&Notion::Instantaneous) {
            let horizon = if opts.horizon.is_finite() { opts.horizon } else { 30.0 };
            r.instantaneous = Some(instantaneous_fairness(plan, step, horizon, opts)?);
        }
        Ok(r)
    }

    /// Instantaneous implies periodic implies lifetime implies equitable,
    /// among the notions present.
    pub fn chain_consistent(&self) -> bool {
        let verdicts = [
            self.instantaneous.as_ref().map(|r| r.pass),
            self.periodic.as_ref().map(|r| r.pass),
            self.lifetime.as_ref().map(|r| r.pass),
            self.equitability.as_ref().map(|r| r.equitable),
        ];
        let present: Vec<bool> = verdicts.iter().flatten().copied().collect();
        present.windows(2).all(|w| !w[0] || w[1])
    }
}
