use serde::Serialize;

use crate::error::{validation, Result};
use crate::ledger::PoolState;
use crate::montecarlo::map_batches;
use crate::schemes::{Observer, PathRunner, PaymentKind, Plan, RunOptions};

use super::{passes, McOptions, Moments};

/// Both sides of the instantaneous condition for one account, per member and
/// per unit time, on bins `[t, t + step)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstantaneousCurve {
    pub account: usize,
    pub t: Vec<f64>,
    /// Expected discounted payment rate.
    pub gain: Vec<f64>,
    /// Expected discounted balance forfeited at death, per unit time.
    pub loss: Vec<f64>,
    pub residual: Vec<f64>,
    pub std_error: Vec<f64>,
    pub sup_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstantaneousReport {
    pub step: f64,
    pub horizon: f64,
    pub paths: u64,
    pub aborted: u64,
    pub tolerance: f64,
    pub curves: Vec<InstantaneousCurve>,
    pub sup_residual: f64,
    pub pass: bool,
}

struct Bins {
    step: f64,
    n_bins: usize,
    /// Account-major, `n_bins` per account.
    gain: Vec<f64>,
    loss: Vec<f64>,
}

impl Bins {
    fn bin(&self, t: f64) -> Option<usize> {
        let b = (t / self.step).floor();
        (b >= 0.0 && (b as usize) < self.n_bins).then_some(b as usize)
    }

    fn clear(&mut self) {
        self.gain.iter_mut().for_each(|v| *v = 0.0);
        self.loss.iter_mut().for_each(|v| *v = 0.0);
    }
}

impl Observer for Bins {
    fn on_flow(&mut self, state: &PoolState, to: f64) -> Result<()> {
        let from = state.time();
        let delta = state.delta();
        let end = to.min(self.n_bins as f64 * self.step);
        if end <= from {
            return Ok(());
        }
        for (a, acct) in state.accounts().iter().enumerate() {
            if !acct.is_alive() {
                continue;
            }
            let k = acct.alive_members() as f64;
            let rule = acct.rule();
            let mut b = self.bin(from).unwrap_or(self.n_bins);
            while b < self.n_bins {
                let lo = (b as f64 * self.step).max(from);
                let hi = ((b + 1) as f64 * self.step).min(end);
                if hi <= lo {
                    break;
                }
                self.gain[a * self.n_bins + b] += k * rule.discounted_payment(lo, hi, delta)?;
                b += 1;
            }
        }
        Ok(())
    }

    fn before_death(&mut self, state: &PoolState, account: usize, _participant: usize) {
        if let Some(b) = self.bin(state.time()) {
            let disc = state.discount(state.time());
            self.loss[account * self.n_bins + b] += state.account(account).cash_value() * disc;
        }
    }

    fn on_payment(&mut self, state: &PoolState, account: usize, amount: f64, kind: PaymentKind) {
        // Terminal lump sums end pooling and are not gains of the period.
        if kind == PaymentKind::Dissolution {
            return;
        }
        if let Some(b) = self.bin(state.time()) {
            let k = state.account(account).alive_members() as f64;
            self.gain[account * self.n_bins + b] += k * amount * state.discount(state.time());
        }
    }
}

/// Estimates, per account and bin, the expected discounted payment rate and
/// the expected discounted balance forfeited at death per unit time, while
/// the pool is pooling. Verdicts are taken bin by bin.
pub fn instantaneous_fairness(plan: &Plan, step: f64, horizon: f64, opts: &McOptions) -> Result<InstantaneousReport> {
    opts.validate()?;
    if !(step > 0.0 && horizon >= step) {
        return Err(validation("need 0 < step <= horizon"));
    }
    let n = plan.accounts();
    let n_bins = (horizon / step + 1e-9).floor() as usize;
    let members: Vec<f64> = plan.pool.cohorts.iter().map(|c| c.members as f64).collect();
    let batches = map_batches(opts.n_paths, opts.batch, opts.execution, |range| {
        let mut runner = PathRunner::new(plan);
        let run_opts = RunOptions { horizon: n_bins as f64 * step, ..RunOptions::default() };
        let mut bins = Bins { step, n_bins, gain: vec![0.0; n * n_bins], loss: vec![0.0; n * n_bins] };
        let mut gain = vec![Moments::default(); n * n_bins];
        let mut loss = vec![Moments::default(); n * n_bins];
        let mut diff = vec![Moments::default(); n * n_bins];
        let mut aborted = 0u64;
        for path in range {
            runner.sample_deaths(opts.seed, path);
            bins.clear();
            let out = runner.run(&run_opts, &mut bins)?;
            if out.infeasible.is_some() {
                aborted += 1;
                continue;
            }
            for a in 0..n {
                let scale = 1.0 / (members[a] * step);
                for b in 0..n_bins {
                    let i = a * n_bins + b;
                    let (g, l) = (bins.gain[i] * scale, bins.loss[i] * scale);
                    gain[i].push(g);
                    loss[i].push(l);
                    diff[i].push(g - l);
                }
            }
        }
        Ok((gain, loss, diff, aborted))
    })?;
    let mut gain = vec![Moments::default(); n * n_bins];
    let mut loss = vec![Moments::default(); n * n_bins];
    let mut diff = vec![Moments::default(); n * n_bins];
    let mut aborted = 0;
    for (g, l, d, x) in batches {
        for i in 0..n * n_bins {
            gain[i].merge(&g[i]);
            loss[i].merge(&l[i]);
            diff[i].merge(&d[i]);
        }
        aborted += x;
    }
    let tolerance = opts.tolerance_for(plan);
    let curves: Vec<InstantaneousCurve> = (0..n)
        .map(|a| {
            let r = a * n_bins..(a + 1) * n_bins;
            let residual: Vec<f64> = diff[r.clone()].iter().map(Moments::mean).collect();
            let std_error: Vec<f64> = diff[r.clone()].iter().map(Moments::std_error).collect();
            let pass = residual.iter().zip(&std_error).all(|(x, s)| passes(*x, *s, tolerance));
            InstantaneousCurve {
                account: a,
                t: (0..n_bins).map(|b| b as f64 * step).collect(),
                gain: gain[r.clone()].iter().map(Moments::mean).collect(),
                loss: loss[r].iter().map(Moments::mean).collect(),
                sup_residual: residual.iter().fold(0.0, |m, x| m.max(x.abs())),
                residual,
                std_error,
                pass,
            }
        })
        .collect();
    Ok(InstantaneousReport {
        step,
        horizon: n_bins as f64 * step,
        paths: opts.n_paths as u64,
        aborted,
        tolerance,
        sup_residual: curves.iter().map(|c| c.sup_residual).fold(0.0, f64::max),
        pass: curves.iter().all(|c| c.pass),
        curves,
    })
}
