//! Event-driven replay of one path: jump from death to death, accruing payouts
//! in closed form where possible, settling credit transfers and applying the
//! dissolution policy.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ledger::{PayoutRule, PoolState, Recording};
use crate::mortality::{sort_deaths, HazardModel};
use crate::rng::{open_unit, path_rng};
use crate::transfers::{class_shares, solve_alpha};

use super::optimal::{optimal_da_payout_numeric, OptimalPayout};
use super::period::{exponential_weight, general_weight, PeriodSurvival};
use super::{tontine_rebalance, Dissolution, Family, InfeasiblePolicy, Plan};

/// Why a payment left an account outside the continuous payout stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaymentKind {
    /// Immediate refund of the balance at the start of a period.
    Refund,
    /// Scheduled discrete payment.
    Installment,
    /// Credit transfer paid straight out.
    Transfer,
    /// Terminal lump sum when pooling ends.
    Dissolution,
}

/// Hooks into a path replay. Amounts are per member and undiscounted.
pub trait Observer {
    /// Called before the ledger runs its payouts forward to `to`.
    fn on_flow(&mut self, _state: &PoolState, _to: f64) -> Result<()> {
        Ok(())
    }
    /// Called with the ledger accrued to the death time.
    fn before_death(&mut self, _state: &PoolState, _account: usize, _participant: usize) {}
    /// Called after the credit transfers of a death, before any payment.
    fn after_death(&mut self, _state: &PoolState, _account: usize, _participant: usize) {}
    fn on_payment(&mut self, _state: &PoolState, _account: usize, _amount: f64, _kind: PaymentKind) {}
}

impl Observer for () {}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Stop the replay at this time.
    pub horizon: f64,
    pub recording: Recording,
    /// Stop once the ledger has recorded this many deaths.
    pub max_deaths: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { horizon: f64::INFINITY, recording: Recording::default(), max_deaths: None }
    }
}

#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub state: PoolState,
    /// Set when a death had no proper fair transfers and the path was abandoned.
    pub infeasible: Option<Error>,
    /// The horizon was reached with members still alive.
    pub truncated: bool,
    /// Time at which pooling ended, if it did.
    pub pooling_ended: Option<f64>,
}

/// Replays a plan along sampled or scripted death times. Holds scratch
/// buffers so one runner can be reused across many paths.
pub struct PathRunner<'a> {
    plan: &'a Plan,
    deaths: Vec<(usize, f64)>,
    weights: Vec<f64>,
    counts: Vec<usize>,
    shares: Vec<f64>,
    transfers: Vec<(usize, f64)>,
    first_participant: Vec<usize>,
}

impl<'a> PathRunner<'a> {
    pub fn new(plan: &'a Plan) -> Self {
        let n = plan.accounts();
        let mut first_participant = Vec::with_capacity(n);
        let mut next = 0;
        for c in &plan.pool.cohorts {
            first_participant.push(next);
            next += c.members;
        }
        PathRunner {
            plan,
            deaths: Vec::with_capacity(plan.pool.size()),
            weights: vec![0.0; n],
            counts: vec![0; n],
            shares: vec![0.0; n],
            transfers: Vec::with_capacity(n),
            first_participant,
        }
    }

    pub fn plan(&self) -> &Plan {
        self.plan
    }

    /// Sorted `(participant, time)` pairs of the current path.
    pub fn deaths(&self) -> &[(usize, f64)] {
        &self.deaths
    }

    pub fn death_time(&self, participant: usize) -> Option<f64> {
        self.deaths.iter().find(|d| d.0 == participant).map(|d| d.1)
    }

    /// Draws every participant's death time from stream `path` of `seed`.
    pub fn sample_deaths(&mut self, seed: u64, path: u64) {
        let mut rng = path_rng(seed, path);
        self.deaths.clear();
        let mut p = 0;
        for c in &self.plan.pool.cohorts {
            for _ in 0..c.members {
                self.deaths.push((p, c.model.sample_given(0.0, open_unit(&mut rng))));
                p += 1;
            }
        }
        sort_deaths(&mut self.deaths);
    }

    /// Draws death times of the members alive in `state`, conditional on
    /// survival to `state.time()`. Members of a cohort are exchangeable, so
    /// the survivors take the highest participant indices of their cohort.
    pub fn sample_deaths_from(&mut self, state: &PoolState, seed: u64, path: u64) {
        let mut rng = path_rng(seed, path);
        let asof = state.time();
        self.deaths.clear();
        for (a, c) in self.plan.pool.cohorts.iter().enumerate() {
            let alive = state.account(a).alive_members();
            let first = self.first_participant[a] + c.members - alive;
            for k in 0..alive {
                self.deaths.push((first + k, c.model.sample_given(asof, open_unit(&mut rng))));
            }
        }
        sort_deaths(&mut self.deaths);
    }

    /// Uses the given `(participant, time)` deaths; unlisted participants
    /// outlive the replay.
    pub fn set_deaths(&mut self, deaths: &[(usize, f64)]) -> Result<()> {
        let n = self.plan.pool.size();
        if let Some(d) = deaths.iter().find(|d| d.0 >= n || !(d.1 >= 0.0)) {
            return Err(crate::error::validation(format!("invalid scripted death {d:?}")));
        }
        self.deaths.clear();
        self.deaths.extend_from_slice(deaths);
        sort_deaths(&mut self.deaths);
        Ok(())
    }

    /// Per-account fairness weights a death at the state's time would be
    /// settled with; zero for families that share balances by other rules.
    pub fn fairness_weights(&mut self, state: &PoolState) -> Result<Vec<f64>> {
        match self.plan.scheme.family {
            Family::InstantaneousFairDa | Family::Ftp => self.instantaneous_weights(state),
            _ => self.compute_weights(state)?,
        }
        Ok(self.weights.clone())
    }

    fn account_of(&self, participant: usize) -> usize {
        self.plan.account_of[participant]
    }

    /// Replays the current deaths from inception.
    pub fn run<O: Observer + ?Sized>(&mut self, opts: &RunOptions, obs: &mut O) -> Result<PathOutcome> {
        let pool = &self.plan.pool;
        let spec: Vec<(f64, usize)> = pool.cohorts.iter().map(|c| (c.deposit, c.members)).collect();
        let state = PoolState::with_members(&spec, pool.delta, self.plan.scheme.balance_policy)?.record(opts.recording);
        let mut out = PathOutcome { state, infeasible: None, truncated: false, pooling_ended: None };
        self.initialize(&mut out, obs)?;
        self.replay(out, opts, obs)
    }

    /// Continues from a period-start `state` produced by an earlier replay.
    pub fn run_from<O: Observer + ?Sized>(&mut self, state: PoolState, opts: &RunOptions, obs: &mut O) -> Result<PathOutcome> {
        let out = PathOutcome { state, infeasible: None, truncated: false, pooling_ended: None };
        if !out.state.is_closed() {
            self.compute_weights(&out.state)?;
        }
        self.replay(out, opts, obs)
    }

    fn replay<O: Observer + ?Sized>(&mut self, mut out: PathOutcome, opts: &RunOptions, obs: &mut O) -> Result<PathOutcome> {
        let mut next = self.deaths.partition_point(|d| d.1 < out.state.time());
        while next < self.deaths.len() && !out.state.is_closed() {
            if opts.max_deaths.is_some_and(|m| out.state.death_count() >= m) {
                return Ok(out);
            }
            let (participant, time) = self.deaths[next];
            next += 1;
            let account = self.account_of(participant);
            if out.state.account(account).alive_members() == 0 {
                continue;
            }
            if time > opts.horizon {
                break;
            }
            obs.on_flow(&out.state, time)?;
            out.state.accrue(time)?;
            obs.before_death(&out.state, account, participant);
            if let Err(e) = self.settle(&mut out, account, participant, obs) {
                if e.is_infeasible() && self.plan.scheme.infeasible == InfeasiblePolicy::Abort {
                    out.infeasible = Some(e);
                    return Ok(out);
                }
                return Err(e);
            }
        }
        if !out.state.is_closed() {
            if out.state.survivors() == 0 {
                out.state.close();
                out.pooling_ended = Some(out.state.time());
            } else if opts.horizon.is_finite() && opts.horizon > out.state.time() {
                obs.on_flow(&out.state, opts.horizon)?;
                out.state.accrue(opts.horizon)?;
                out.truncated = true;
            } else {
                out.truncated = true;
            }
        }
        Ok(out)
    }

    fn initialize<O: Observer + ?Sized>(&mut self, out: &mut PathOutcome, obs: &mut O) -> Result<()> {
        let plan = self.plan;
        let n = plan.pool.size();
        if let Family::EquitableTontine { weights, rebalance: true, .. } = &plan.scheme.family {
            out.state.apply_initial_transfers(&tontine_rebalance(&plan.pool, weights))?;
        }
        let pools = !matches!(plan.scheme.family, Family::DcDrawdown { .. });
        let early = match plan.scheme.dissolution {
            Dissolution::DissolveAtTwoSurvivors => n <= 2,
            Dissolution::LastSurvivorLumpSum | Dissolution::DissolveAtFirstDeath => n == 1,
            Dissolution::Perpetual => false,
        };
        if pools && early {
            self.dissolve(out, obs);
            return Ok(());
        }
        match &plan.scheme.family {
            Family::OptimalDa { gamma } if *gamma == 0.0 => {
                for a in 0..plan.accounts() {
                    let amount = out.state.pay_lump_sum(a);
                    obs.on_payment(&out.state, a, amount, PaymentKind::Refund);
                }
                out.state.close();
                out.pooling_ended = Some(0.0);
                return Ok(());
            }
            Family::Gsa { r0 } => {
                for a in 0..plan.accounts() {
                    out.state.pay_amount(a, *r0);
                    obs.on_payment(&out.state, a, *r0, PaymentKind::Installment);
                }
            }
            _ => {}
        }
        self.begin_period(out, obs)
    }

    /// Sets each live account's payout rule for the period starting now and
    /// the fairness weights that go with it.
    fn begin_period<O: Observer + ?Sized>(&mut self, out: &mut PathOutcome, obs: &mut O) -> Result<()> {
        let plan = self.plan;
        let state = &mut out.state;
        let t = state.time();
        let cohorts = &plan.pool.cohorts;
        let live: Vec<usize> = (0..plan.accounts()).filter(|&a| state.account(a).is_alive()).collect();
        match &plan.scheme.family {
            Family::OptimalDa { gamma } => {
                let survivors: Vec<(HazardModel, usize)> =
                    live.iter().map(|&a| (cohorts[a].model.clone(), state.account(a).alive_members())).collect();
                let rule = if plan.pool.all_constant() {
                    let total: f64 = survivors.iter().map(|(m, k)| m.hazard(t) * *k as f64).sum();
                    let theta = if gamma.is_infinite() { plan.pool.delta } else { plan.pool.delta + total / gamma };
                    PayoutRule::Exponential { theta }
                } else {
                    let payout = optimal_da_payout_numeric(&survivors, *gamma, plan.pool.delta, t)?;
                    profile_rule(payout, t, plan.breaks.clone())
                };
                for &a in &live {
                    state.set_rule(a, rule.clone());
                }
            }
            Family::PeriodicFairDa { thetas } => {
                let mut thetas = thetas.clone();
                if state.survivors() == 2 && live.len() == 2 {
                    let (a, b) = (live[0], live[1]);
                    let l = [cohorts[a].model.hazard(t), cohorts[b].model.hazard(t)];
                    let base = [state.account(a).cash_value(), state.account(b).cash_value()];
                    let total = l[0] + l[1];
                    let ls = [
                        exponential_weight(l[0], base[0], thetas[a], total),
                        exponential_weight(l[1], base[1], thetas[b], total),
                    ];
                    let rho = ls[0].min(ls[1]);
                    for (k, &acct) in [a, b].iter().enumerate() {
                        if rho > 0.0 {
                            if ls[k] > rho {
                                thetas[acct] = l[k] * base[k] / rho - total;
                            }
                        } else if base[k] > 0.0 {
                            let amount = state.pay_lump_sum(acct);
                            obs.on_payment(state, acct, amount, PaymentKind::Refund);
                        }
                    }
                }
                for &a in &live {
                    state.set_rule(a, PayoutRule::Exponential { theta: thetas[a] });
                }
            }
            Family::TwoPeerDa { thetas, .. } => {
                for &a in &live {
                    if thetas[a].is_infinite() {
                        let amount = state.pay_lump_sum(a);
                        obs.on_payment(state, a, amount, PaymentKind::Refund);
                    } else {
                        state.set_rule(a, PayoutRule::Exponential { theta: thetas[a] });
                    }
                }
            }
            Family::DaDominatingDc { drawdowns } => {
                for &a in &live {
                    state.set_rule(a, drawdowns[a].rule_from(t)?);
                }
            }
            Family::DcDrawdown { drawdowns } => {
                if state.death_count() == 0 {
                    for &a in &live {
                        state.set_rule(a, drawdowns[a].rule_from(0.0)?);
                    }
                }
            }
            Family::InstantaneousFairDa => {
                for &a in &live {
                    state.set_rule(a, PayoutRule::DensityProportional { model: cohorts[a].model.clone() });
                }
            }
            Family::Ftp => {}
            Family::EquitableTontine { weights, schedule, .. } => {
                let norm: f64 =
                    live.iter().map(|&a| weights[a] * cohorts[a].deposit * state.account(a).alive_members() as f64).sum();
                let pool = plan.pool.total_deposit();
                for &a in &live {
                    let share = weights[a] * cohorts[a].deposit / norm;
                    state.set_rule(a, PayoutRule::EquitableShare { share, pool, schedule: schedule.clone() });
                }
            }
            Family::Gsa { r0 } => {
                let unit = r0 * plan.pool.size() as f64 / state.survivors() as f64;
                for &a in &live {
                    state.set_rule(a, PayoutRule::Installments { unit, model: cohorts[a].model.clone() });
                }
            }
        }
        self.compute_weights(&out.state)
    }

    /// Per-member period weights `p_i [s_i - ER_i]` from the rules in force.
    fn compute_weights(&mut self, state: &PoolState) -> Result<()> {
        let plan = self.plan;
        let cohorts = &plan.pool.cohorts;
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        let periodic = matches!(
            plan.scheme.family,
            Family::OptimalDa { .. } | Family::PeriodicFairDa { .. } | Family::TwoPeerDa { .. } | Family::DaDominatingDc { .. }
        );
        if !periodic || state.survivors() < 3 {
            return Ok(());
        }
        let t = state.time();
        if plan.pool.all_constant() {
            let total: f64 =
                (0..plan.accounts()).map(|a| cohorts[a].model.hazard(t) * state.account(a).alive_members() as f64).sum();
            for a in 0..plan.accounts() {
                let acct = state.account(a);
                if let (true, PayoutRule::Exponential { theta }) = (acct.is_alive(), &acct.rule().rule) {
                    self.weights[a] = exponential_weight(cohorts[a].model.hazard(t), acct.rule().base, *theta, total);
                }
            }
            return Ok(());
        }
        let survival = PeriodSurvival::new(
            (0..plan.accounts()).map(|a| (cohorts[a].model.clone(), state.account(a).alive_members())).collect(),
            t,
        );
        let breaks = survival.breaks(&plan.breaks);
        let delta = plan.pool.delta;
        for a in 0..plan.accounts() {
            let acct = state.account(a);
            if !acct.is_alive() || acct.rule().base == 0.0 {
                continue;
            }
            let mut unit = acct.rule().clone();
            unit.base = 1.0;
            unit.start = t;
            let scale = (delta * t).exp();
            let remaining = move |u: f64| -> Result<f64> {
                Ok(match &unit.rule {
                    PayoutRule::Exponential { theta } => (-theta * u).exp(),
                    _ => (1.0 - scale * unit.discounted_payment(t, t + u, delta)?).max(0.0),
                })
            };
            self.weights[a] = general_weight(&cohorts[a].model, acct.rule().base, &survival, &remaining, &breaks)?;
        }
        Ok(())
    }

    fn instantaneous_weights(&mut self, state: &PoolState) {
        let t = state.time();
        for (a, c) in self.plan.pool.cohorts.iter().enumerate() {
            let acct = state.account(a);
            self.weights[a] = if acct.is_alive() { c.model.hazard(t) * acct.cash_value().max(0.0) } else { 0.0 };
        }
    }

    /// Per-member shares of the deceased's balance for every account.
    fn fair_shares(&mut self, state: &PoolState, deceased: usize) -> Result<()> {
        for (a, c) in self.counts.iter_mut().enumerate() {
            *c = state.account(a).alive_members();
        }
        if class_shares(&self.weights, &self.counts, deceased, &mut self.shares)? {
            return Ok(());
        }
        let mut w = Vec::new();
        let mut owner = Vec::new();
        for (a, &k) in self.counts.iter().enumerate() {
            for _ in 0..k {
                w.push(self.weights[a]);
                owner.push(a);
            }
        }
        let column = owner.iter().position(|&a| a == deceased).expect("deceased account is alive");
        let alpha = solve_alpha(&w)?;
        self.shares.iter_mut().for_each(|s| *s = 0.0);
        for (i, &a) in owner.iter().enumerate() {
            if i != column {
                self.shares[a] += alpha.get(i, column);
            }
        }
        for (a, s) in self.shares.iter_mut().enumerate() {
            let remaining = self.counts[a] - usize::from(a == deceased);
            if remaining > 0 {
                *s /= remaining as f64;
            }
        }
        Ok(())
    }

    /// Shares in proportion to the weights, for a dissolving pool.
    fn proportional_shares(&mut self, state: &PoolState, deceased: usize) {
        let remaining = |a: usize| state.account(a).alive_members() - usize::from(a == deceased);
        let total: f64 = (0..self.shares.len()).map(|a| self.weights[a] * remaining(a) as f64).sum();
        let heads: usize = (0..self.shares.len()).map(remaining).sum();
        for a in 0..self.shares.len() {
            self.shares[a] = if remaining(a) == 0 {
                0.0
            } else if total > 0.0 {
                self.weights[a] / total
            } else {
                1.0 / heads as f64
            };
        }
    }

    fn settle<O: Observer + ?Sized>(
        &mut self,
        out: &mut PathOutcome,
        deceased: usize,
        participant: usize,
        obs: &mut O,
    ) -> Result<()> {
        let plan = self.plan;
        let time = out.state.time();
        let before = out.state.survivors();
        let pre = out.state.account(deceased).cash_value();
        let mut dissolve = false;
        self.transfers.clear();
        match &plan.scheme.family {
            Family::DcDrawdown { .. } => out.state.apply_bequest_death(time, deceased)?,
            _ if before == 1 => out.state.apply_forfeit_death(time, deceased)?,
            Family::EquitableTontine { weights, .. } => {
                let cohorts = &plan.pool.cohorts;
                let fund: f64 = (0..plan.accounts())
                    .map(|a| out.state.account(a).alive_members() as f64 * out.state.account(a).cash_value())
                    .sum();
                let after = |a: usize| out.state.account(a).alive_members() - usize::from(a == deceased);
                let norm: f64 = (0..plan.accounts()).map(|a| weights[a] * cohorts[a].deposit * after(a) as f64).sum();
                for a in (0..plan.accounts()).filter(|&a| after(a) > 0) {
                    let target = weights[a] * cohorts[a].deposit / norm * fund;
                    self.transfers.push((a, target - out.state.account(a).cash_value()));
                }
                out.state.apply_death(time, deceased, &self.transfers)?;
            }
            Family::Gsa { .. } => {
                let share = pre / (before - 1) as f64;
                for a in (0..plan.accounts()).filter(|&a| out.state.account(a).alive_members() > usize::from(a == deceased)) {
                    self.transfers.push((a, share));
                }
                out.state.apply_death(time, deceased, &self.transfers)?;
            }
            family => {
                if matches!(family, Family::InstantaneousFairDa | Family::Ftp) {
                    self.instantaneous_weights(&out.state);
                }
                if before == 2 {
                    self.shares.iter_mut().for_each(|s| *s = 0.0);
                    for a in 0..plan.accounts() {
                        if out.state.account(a).alive_members() > usize::from(a == deceased) {
                            self.shares[a] = 1.0;
                        }
                    }
                } else if let Err(e) = self.fair_shares(&out.state, deceased) {
                    if !(e.is_infeasible() && plan.scheme.infeasible == InfeasiblePolicy::Dissolve) {
                        return Err(e);
                    }
                    self.proportional_shares(&out.state, deceased);
                    dissolve = true;
                }
                for a in 0..plan.accounts() {
                    if out.state.account(a).alive_members() > usize::from(a == deceased) {
                        self.transfers.push((a, self.shares[a] * pre));
                    }
                }
                out.state.apply_death(time, deceased, &self.transfers)?;
            }
        }
        obs.after_death(&out.state, deceased, participant);
        if matches!(plan.scheme.family, Family::Ftp) {
            for &(a, e) in &self.transfers {
                out.state.pay_amount(a, e);
                obs.on_payment(&out.state, a, e, PaymentKind::Transfer);
            }
        }
        let left = out.state.survivors();
        if left == 0 {
            out.state.close();
            out.pooling_ended = Some(time);
            return Ok(());
        }
        let pools = !matches!(plan.scheme.family, Family::DcDrawdown { .. });
        dissolve |= pools
            && match plan.scheme.dissolution {
                Dissolution::DissolveAtFirstDeath => true,
                Dissolution::DissolveAtTwoSurvivors => left <= 2,
                Dissolution::LastSurvivorLumpSum => left == 1,
                Dissolution::Perpetual => false,
            };
        if dissolve {
            self.dissolve(out, obs);
            return Ok(());
        }
        self.begin_period(out, obs)
    }

    fn dissolve<O: Observer + ?Sized>(&mut self, out: &mut PathOutcome, obs: &mut O) {
        for a in 0..self.plan.accounts() {
            if out.state.account(a).is_alive() {
                let amount = out.state.pay_lump_sum(a);
                obs.on_payment(&out.state, a, amount, PaymentKind::Dissolution);
            }
        }
        out.state.close();
        out.pooling_ended = Some(out.state.time());
    }
}

fn profile_rule(payout: OptimalPayout, t0: f64, breaks: Arc<[f64]>) -> PayoutRule {
    PayoutRule::Profile { shape: Arc::new(move |t: f64| payout.rate(t - t0)), breaks }
}
