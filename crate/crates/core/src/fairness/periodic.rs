use serde::Serialize;

use crate::error::{validation, Result};
use crate::ledger::PoolState;
use crate::montecarlo::map_batches;
use crate::schemes::{Family, Observer, PathRunner, Plan, RunOptions};

use super::{passes, McOptions, Moments};

/// Stream used to draw the reference history up to the period start.
const REFERENCE_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicEntry {
    pub account: usize,
    pub alive_at_start: usize,
    /// `E[s(T_k-) e^{-delta T_k}]` per member.
    pub before: f64,
    /// `E[s(T_k) e^{-delta T_k} 1{alive at T_k}]` per member.
    pub after: f64,
    pub residual: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicReport {
    pub period: usize,
    pub start_time: f64,
    pub paths: u64,
    pub aborted: u64,
    pub tolerance: f64,
    pub entries: Vec<PeriodicEntry>,
    pub pass: bool,
}

struct Snapshot {
    /// Deceased balances go to the estate rather than the pool.
    bequest: bool,
    before: Vec<f64>,
    after: Vec<f64>,
    seen: bool,
}

impl Observer for Snapshot {
    fn before_death(&mut self, state: &PoolState, _account: usize, _participant: usize) {
        let disc = state.discount(state.time());
        for (a, acct) in state.accounts().iter().enumerate() {
            self.before[a] = acct.cash_value() * disc;
        }
    }

    fn after_death(&mut self, state: &PoolState, account: usize, _participant: usize) {
        let disc = state.discount(state.time());
        for (a, acct) in state.accounts().iter().enumerate() {
            // Scaled later by the number of period-start members.
            self.after[a] = acct.cash_value() * disc * acct.alive_members() as f64;
        }
        if self.bequest {
            self.after[account] += self.before[account];
        }
        self.seen = true;
    }
}

/// Compares each account's expected discounted balance just before and just
/// after the `period`-th death, conditional on a fixed history up to the
/// period start. Period 1 starts at inception; later periods start from a
/// reference history drawn from `opts.seed`.
pub fn periodic_fairness(plan: &Plan, period: usize, opts: &McOptions) -> Result<PeriodicReport> {
    opts.validate()?;
    if period == 0 {
        return Err(validation("periods are numbered from 1"));
    }
    let start = period_start(plan, period, opts.seed)?;
    let n = plan.accounts();
    let alive: Vec<usize> = (0..n).map(|a| start.account(a).alive_members()).collect();
    let batches = map_batches(opts.n_paths, opts.batch, opts.execution, |range| {
        let mut runner = PathRunner::new(plan);
        let run_opts = RunOptions { horizon: opts.horizon, max_deaths: Some(period), ..RunOptions::default() };
        let bequest = matches!(plan.scheme.family, Family::DcDrawdown { .. });
        let mut snap = Snapshot { bequest, before: vec![0.0; n], after: vec![0.0; n], seen: false };
        let mut before = vec![Moments::default(); n];
        let mut after = vec![Moments::default(); n];
        let mut diff = vec![Moments::default(); n];
        let mut aborted = 0u64;
        for path in range {
            runner.sample_deaths_from(&start, opts.seed, path);
            snap.before.iter_mut().for_each(|v| *v = 0.0);
            snap.after.iter_mut().for_each(|v| *v = 0.0);
            snap.seen = false;
            let out = runner.run_from(start.clone(), &run_opts, &mut snap)?;
            if out.infeasible.is_some() {
                aborted += 1;
                continue;
            }
            for a in (0..n).filter(|&a| alive[a] > 0) {
                // A period cut off by the horizon contributes nothing to either side.
                let (b, f) = if snap.seen { (snap.before[a], snap.after[a] / alive[a] as f64) } else { (0.0, 0.0) };
                before[a].push(b);
                after[a].push(f);
                diff[a].push(b - f);
            }
        }
        Ok((before, after, diff, aborted))
    })?;
    let mut before = vec![Moments::default(); n];
    let mut after = vec![Moments::default(); n];
    let mut diff = vec![Moments::default(); n];
    let mut aborted = 0;
    for (b, f, d, x) in batches {
        for a in 0..n {
            before[a].merge(&b[a]);
            after[a].merge(&f[a]);
            diff[a].merge(&d[a]);
        }
        aborted += x;
    }
    let tolerance = opts.tolerance_for(plan);
    let entries: Vec<PeriodicEntry> = (0..n)
        .filter(|&a| alive[a] > 0 && diff[a].n > 0)
        .map(|a| {
            let residual = diff[a].mean();
            let se = diff[a].std_error();
            PeriodicEntry {
                account: a,
                alive_at_start: alive[a],
                before: before[a].mean(),
                after: after[a].mean(),
                residual,
                std_error: se,
                pass: passes(residual, se, tolerance),
            }
        })
        .collect();
    Ok(PeriodicReport {
        period,
        start_time: start.time(),
        paths: opts.n_paths as u64,
        aborted,
        tolerance,
        pass: entries.iter().all(|e| e.pass),
        entries,
    })
}

fn period_start(plan: &Plan, period: usize, seed: u64) -> Result<PoolState> {
    let mut runner = PathRunner::new(plan);
    if period == 1 {
        runner.set_deaths(&[])?;
    } else {
        runner.sample_deaths(seed, REFERENCE_STREAM);
    }
    let out = runner.run(&RunOptions { max_deaths: Some(period - 1), ..RunOptions::default() }, &mut ())?;
    if out.infeasible.is_some() || out.state.is_closed() || out.state.death_count() + 1 != period {
        return Err(validation(format!("period {period} never starts: the pool has stopped pooling")));
    }
    Ok(out.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mortality::HazardModel;
    use crate::schemes::{dc_drawdown, Dissolution, Pool, SchemeSpec};

    #[test]
    fn bequest_scheme_has_zero_residual() {
        let pool = Pool::singles(
            vec![(300.0, HazardModel::constant(0.03).unwrap()), (200.0, HazardModel::constant(0.06).unwrap())],
            0.04,
        )
        .unwrap();
        let drawdowns =
            pool.cohorts.iter().map(|c| dc_drawdown(c.deposit, c.model.clone(), 2.0, 0.04).unwrap()).collect();
        let plan =
            Plan::new(pool, SchemeSpec::new(Family::DcDrawdown { drawdowns }, Dissolution::Perpetual)).unwrap();
        let r = periodic_fairness(&plan, 1, &McOptions::new(2000, 3)).unwrap();
        for e in &r.entries {
            assert!(e.residual.abs() < 1e-9, "{e:?}");
        }
        assert_eq!(r.start_time, 0.0);
    }

    #[test]
    fn later_periods_start_after_the_reference_deaths() {
        let pool = Pool::singles((0..5).map(|_| (100.0, HazardModel::constant(0.05).unwrap())).collect(), 0.03).unwrap();
        let plan = Plan::new(pool, crate::schemes::ftp_plan(Dissolution::DissolveAtTwoSurvivors)).unwrap();
        let r = periodic_fairness(&plan, 2, &McOptions::new(4000, 9)).unwrap();
        assert!(r.start_time > 0.0);
        assert_eq!(r.entries.len(), 4);
        assert!(r.pass, "{r:?}");
    }
}
