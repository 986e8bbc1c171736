//! Per-path observer filling the tracked participants' grid values.

use crate::error::Result;
use crate::ledger::{ActiveRule, PoolState};
use crate::schemes::{dc_drawdown, Drawdown, Observer, PathOutcome, PathRunner, PaymentKind};

use super::SimulationConfig;

pub(super) struct Target {
    pub participant: usize,
    pub account: usize,
    pub dc: Drawdown,
    pub dc_rule: ActiveRule,
}

pub(super) struct PathTracker<'c> {
    config: &'c SimulationConfig,
    targets: &'c [Target],
    check_rates: bool,
    next: Vec<usize>,
    dead: Vec<bool>,
    /// Utility accumulated up to the ledger's current time.
    utility: Vec<f64>,
    lump: Vec<Option<f64>>,
    pay: Vec<f64>,
    util: Vec<f64>,
    rate_checks: u64,
    rate_violations: u64,
}

impl<'c> PathTracker<'c> {
    pub fn new(config: &'c SimulationConfig, targets: &'c [Target], check_rates: bool) -> Self {
        let n = targets.len();
        let g = config.grid.len();
        PathTracker {
            config,
            targets,
            check_rates,
            next: vec![0; n],
            dead: vec![false; n],
            utility: vec![0.0; n],
            lump: vec![None; n],
            pay: vec![0.0; n * g],
            util: vec![0.0; n * g],
            rate_checks: 0,
            rate_violations: 0,
        }
    }

    pub fn reset(&mut self) {
        self.next.iter_mut().for_each(|v| *v = 0);
        self.dead.iter_mut().for_each(|v| *v = false);
        self.utility.iter_mut().for_each(|v| *v = 0.0);
        self.lump.iter_mut().for_each(|v| *v = None);
        self.rate_checks = 0;
        self.rate_violations = 0;
    }

    pub fn row(&self, k: usize) -> (&[f64], &[f64]) {
        let g = self.config.grid.len();
        (&self.pay[k * g..(k + 1) * g], &self.util[k * g..(k + 1) * g])
    }

    pub fn rate_counts(&self) -> (u64, u64) {
        (self.rate_checks, self.rate_violations)
    }

    fn fill(&mut self, k: usize, pay: f64, util: f64) {
        let g = self.config.grid.len();
        for j in self.next[k]..g {
            self.pay[k * g + j] = pay;
            self.util[k * g + j] = util;
        }
        self.next[k] = g;
    }

    /// Fills the grid points the replay did not reach.
    pub fn finish(&mut self, runner: &PathRunner<'_>, outcome: &PathOutcome) -> Result<()> {
        let state = &outcome.state;
        let (delta, gamma) = (self.config.plan.pool.delta, self.config.gamma);
        let n_grid = self.config.grid.len();
        for (k, t) in self.targets.iter().enumerate() {
            if self.next[k] >= n_grid {
                continue;
            }
            let paid = state.account(t.account).discounted_paid();
            let util = self.utility[k];
            let drawdown = match (self.lump[k], state.closing()) {
                (Some(lump), Some(c)) if self.config.lump_sum_drawdown && !self.dead[k] && lump > 0.0 => {
                    let model = self.config.plan.pool.cohorts[t.account].model.clone();
                    let d = dc_drawdown(lump, model, gamma, delta)?;
                    Some(ActiveRule { rule: d.rule_from(c.time)?, start: c.time, base: lump })
                }
                _ => None,
            };
            match drawdown {
                None => self.fill(k, paid, util),
                Some(rule) => {
                    let tau = runner.death_time(t.participant).unwrap_or(f64::INFINITY);
                    for j in self.next[k]..n_grid {
                        let g = self.config.grid[j];
                        let extra = rule.utility(rule.start, g.min(tau), delta, gamma)?;
                        self.pay[k * n_grid + j] = paid;
                        self.util[k * n_grid + j] = util + extra;
                    }
                    self.next[k] = n_grid;
                }
            }
        }
        Ok(())
    }
}

impl Observer for PathTracker<'_> {
    fn on_flow(&mut self, state: &PoolState, to: f64) -> Result<()> {
        let from = state.time();
        let (delta, gamma) = (self.config.plan.pool.delta, self.config.gamma);
        let n_grid = self.config.grid.len();
        for (k, t) in self.targets.iter().enumerate() {
            if self.dead[k] {
                continue;
            }
            let account = state.account(t.account);
            let rule = account.rule();
            let paid = account.discounted_paid();
            while self.next[k] < n_grid && self.config.grid[self.next[k]] <= to {
                let j = self.next[k];
                let g = self.config.grid[j].max(from);
                self.pay[k * n_grid + j] = paid + rule.discounted_payment(from, g, delta)?;
                self.util[k * n_grid + j] = self.utility[k] + rule.utility(from, g, delta, gamma)?;
                if self.check_rates {
                    self.rate_checks += 1;
                    let dc = t.dc.rate(g);
                    if state.rate(t.account, g) < dc - 1e-9 * dc.max(1.0) {
                        self.rate_violations += 1;
                    }
                }
                self.next[k] += 1;
            }
            self.utility[k] += rule.utility(from, to, delta, gamma)?;
        }
        Ok(())
    }

    fn before_death(&mut self, state: &PoolState, _account: usize, participant: usize) {
        if let Some(k) = self.targets.iter().position(|t| t.participant == participant) {
            self.dead[k] = true;
            let paid = state.account(self.targets[k].account).discounted_paid();
            let util = self.utility[k];
            self.fill(k, paid, util);
        }
    }

    fn on_payment(&mut self, _state: &PoolState, account: usize, amount: f64, kind: PaymentKind) {
        if kind == PaymentKind::Dissolution {
            for (k, t) in self.targets.iter().enumerate() {
                if t.account == account {
                    self.lump[k] = Some(amount);
                }
            }
        }
    }
}
