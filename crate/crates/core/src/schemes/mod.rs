//! Plan families: payout rules, transfer rules and dissolution policies, plus
//! the event-driven engine that runs them along a sampled path.

mod drawdown;
mod engine;
mod optimal;
mod period;
mod two_peer;

use std::sync::Arc;

use serde::Serialize;

pub use drawdown::{dc_drawdown, Drawdown};
pub use engine::{Observer, PathOutcome, PathRunner, PaymentKind, RunOptions};
pub use period::PeriodSurvival;
pub use optimal::{optimal_da_payout, optimal_da_payout_numeric, optimal_da_properness, optimal_q, OptimalPayout};
pub use two_peer::{two_peer_bounds, two_peer_periodic, TwoPeerCalibration};

use crate::error::{validation, Error, Result};
use crate::ledger::{BalancePolicy, PayoutSchedule};
use crate::mortality::{GroupMortality, HazardModel};

/// Participants sharing deposit and mortality law. A cohort with `members > 1`
/// is run as one pooled ledger account.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub deposit: f64,
    pub model: HazardModel,
    pub members: usize,
}

impl Cohort {
    pub fn single(deposit: f64, model: HazardModel) -> Self {
        Cohort { deposit, model, members: 1 }
    }
}

/// The participants of a pool and the force of interest.
#[derive(Clone, Debug, PartialEq)]
pub struct Pool {
    pub cohorts: Vec<Cohort>,
    pub delta: f64,
}

impl Pool {
    pub fn new(cohorts: Vec<Cohort>, delta: f64) -> Result<Self> {
        if cohorts.is_empty() || cohorts.iter().all(|c| c.members == 0) {
            return Err(validation("pool has no participants"));
        }
        if cohorts.iter().any(|c| c.members == 0 || !(c.deposit.is_finite() && c.deposit >= 0.0)) {
            return Err(validation("cohorts need at least one member and a non-negative deposit"));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(validation(format!("force of interest must be non-negative, got {delta}")));
        }
        Ok(Pool { cohorts, delta })
    }

    /// One singleton cohort per `(deposit, model)`.
    pub fn singles(members: Vec<(f64, HazardModel)>, delta: f64) -> Result<Self> {
        Pool::new(members.into_iter().map(|(d, m)| Cohort::single(d, m)).collect(), delta)
    }

    pub fn size(&self) -> usize {
        self.cohorts.iter().map(|c| c.members).sum()
    }

    pub fn deposits(&self) -> Vec<f64> {
        self.cohorts.iter().map(|c| c.deposit).collect()
    }

    pub fn total_deposit(&self) -> f64 {
        self.cohorts.iter().map(|c| c.deposit * c.members as f64).sum()
    }

    /// Account index of each participant, cohort by cohort.
    pub fn account_of_participant(&self) -> Vec<usize> {
        self.cohorts.iter().enumerate().flat_map(|(a, c)| std::iter::repeat(a).take(c.members)).collect()
    }

    /// Mortality of every participant, expanded.
    pub fn group(&self) -> GroupMortality {
        GroupMortality::new(
            self.cohorts.iter().flat_map(|c| std::iter::repeat(c.model.clone()).take(c.members)).collect(),
        )
    }

    pub(crate) fn all_constant(&self) -> bool {
        self.cohorts.iter().all(|c| c.model.constant_rate().is_some())
    }

    pub(crate) fn breakpoints(&self) -> Arc<[f64]> {
        let mut b: Vec<f64> = self.cohorts.iter().flat_map(|c| c.model.breakpoints().iter().copied()).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b.into()
    }
}

/// When pooling stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dissolution {
    /// Continue until one member remains; that member takes the balance.
    LastSurvivorLumpSum,
    /// Pay out all balances when two members remain.
    DissolveAtTwoSurvivors,
    /// Pay out all balances at the first death.
    DissolveAtFirstDeath,
    /// Never pay a terminal lump sum; the last member keeps drawing and any
    /// balance left at the final death stays in the fund as residue.
    Perpetual,
}

/// Response to a death whose fair transfers do not exist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasiblePolicy {
    /// Abandon the path with an infeasibility error.
    #[default]
    Abort,
    /// Share the balance in proportion to the fairness weights and dissolve.
    Dissolve,
}

/// Family-specific parameters.
#[derive(Clone, Debug)]
pub enum Family {
    /// Utility-optimal periodic-fair payouts.
    OptimalDa { gamma: f64 },
    /// Exponential payouts with fixed intensities per account and periodic-fair
    /// transfers; two final survivors are recalibrated to an equal risk share.
    PeriodicFairDa { thetas: Vec<f64> },
    /// Payout rate equal to the balance-scaled conditional death density.
    InstantaneousFairDa,
    /// Two peers with calibrated exponential payouts; infinite intensities
    /// mean an immediate refund.
    TwoPeerDa { thetas: [f64; 2], risk_share: f64 },
    /// Payouts proportional to each participant's DC drawdown, periodic-fair
    /// transfers on top.
    DaDominatingDc { drawdowns: Vec<Drawdown> },
    /// Individual drawdown accounts; balances are bequeathed.
    DcDrawdown { drawdowns: Vec<Drawdown> },
    /// Survivors share `d(t) S` in proportion to `pi_i s_i`.
    EquitableTontine { weights: Vec<f64>, schedule: Arc<PayoutSchedule>, rebalance: bool },
    /// Discrete survivor-adjusted annual payments of a homogeneous cohort.
    Gsa { r0: f64 },
    /// Payments only as transfers at deaths; balances grow at interest.
    Ftp,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::OptimalDa { .. } => "optimal-da",
            Family::PeriodicFairDa { .. } => "periodic-fair-da",
            Family::InstantaneousFairDa => "instantaneous-fair-da",
            Family::TwoPeerDa { .. } => "two-peer-da",
            Family::DaDominatingDc { .. } => "da-dominating-dc",
            Family::DcDrawdown { .. } => "dc-drawdown",
            Family::EquitableTontine { .. } => "equitable-tontine",
            Family::Gsa { .. } => "gsa",
            Family::Ftp => "ftp",
        }
    }
}

/// A complete plan definition.
#[derive(Clone, Debug)]
pub struct SchemeSpec {
    pub family: Family,
    pub dissolution: Dissolution,
    pub balance_policy: BalancePolicy,
    pub infeasible: InfeasiblePolicy,
}

impl SchemeSpec {
    pub fn new(family: Family, dissolution: Dissolution) -> Self {
        SchemeSpec { family, dissolution, balance_policy: BalancePolicy::Reject, infeasible: InfeasiblePolicy::Abort }
    }

    pub fn with_balance_policy(mut self, policy: BalancePolicy) -> Self {
        self.balance_policy = policy;
        self
    }

    pub fn with_infeasible(mut self, policy: InfeasiblePolicy) -> Self {
        self.infeasible = policy;
        self
    }
}

/// A validated scheme bound to its pool.
#[derive(Clone, Debug)]
pub struct Plan {
    pub pool: Pool,
    pub scheme: SchemeSpec,
    pub(crate) account_of: Vec<usize>,
    pub(crate) breaks: Arc<[f64]>,
}

impl Plan {
    pub fn new(pool: Pool, scheme: SchemeSpec) -> Result<Self> {
        validate(&pool, &scheme)?;
        let account_of = pool.account_of_participant();
        let breaks = pool.breakpoints();
        Ok(Plan { pool, scheme, account_of, breaks })
    }

    pub fn accounts(&self) -> usize {
        self.pool.cohorts.len()
    }
}

fn validate(pool: &Pool, scheme: &SchemeSpec) -> Result<()> {
    let n = pool.cohorts.len();
    let per_account = |len: usize, what: &str| {
        if len != n {
            Err(validation(format!("{what}: expected {n} entries, one per cohort, got {len}")))
        } else {
            Ok(())
        }
    };
    match &scheme.family {
        Family::OptimalDa { gamma } => {
            if gamma.is_nan() || *gamma < 0.0 {
                return Err(validation(format!("risk aversion must be non-negative, got {gamma}")));
            }
        }
        Family::PeriodicFairDa { thetas } => {
            per_account(thetas.len(), "payout intensities")?;
            if thetas.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(validation("payout intensities must be finite and non-negative"));
            }
            if !pool.all_constant() {
                return Err(Error::Unsupported("fixed exponential intensities need constant forces of mortality".into()));
            }
        }
        Family::InstantaneousFairDa | Family::Ftp => {}
        Family::TwoPeerDa { .. } => {
            if pool.size() != 2 || n != 2 {
                return Err(validation("the two-peer scheme needs exactly two single participants"));
            }
        }
        Family::DaDominatingDc { drawdowns } | Family::DcDrawdown { drawdowns } => {
            per_account(drawdowns.len(), "drawdowns")?;
            for (c, d) in pool.cohorts.iter().zip(drawdowns) {
                if c.model != d.model || (c.deposit - d.deposit).abs() > 1e-12 * c.deposit.max(1.0) || d.delta != pool.delta {
                    return Err(validation("each drawdown must match its cohort's deposit, mortality and interest"));
                }
            }
        }
        Family::EquitableTontine { weights, schedule, .. } => {
            per_account(weights.len(), "tontine weights")?;
            if weights.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(validation("tontine weights must be positive"));
            }
            schedule.check_normalized(pool.delta)?;
        }
        Family::Gsa { r0 } => {
            if n != 1 {
                return Err(Error::Unsupported("group self-annuitization is defined for a homogeneous cohort only".into()));
            }
            if !(r0.is_finite() && *r0 >= 0.0) {
                return Err(validation("GSA base payment must be non-negative"));
            }
        }
    }
    if matches!(scheme.family, Family::DcDrawdown { .. }) && scheme.dissolution != Dissolution::Perpetual {
        return Err(validation("DC drawdown accounts do not pool; use the perpetual policy"));
    }
    Ok(())
}

/// Periodic-fair DA with intensities `theta_i` (constant forces only).
pub fn periodic_fair_da(thetas: Vec<f64>, dissolution: Dissolution) -> SchemeSpec {
    SchemeSpec::new(Family::PeriodicFairDa { thetas }, dissolution)
}

/// Scheme whose payouts are each participant's DC drawdown scaled by the
/// current balance, so that any non-negative transfer lifts payouts above
/// the drawdown.
pub fn da_dominating_dc(drawdowns: Vec<Drawdown>, dissolution: Dissolution) -> Result<SchemeSpec> {
    for d in &drawdowns {
        let budget = d.discounted_budget()?;
        if budget > d.deposit * (1.0 + 1e-8) {
            return Err(validation(format!("drawdown overspends its budget: {budget} > {}", d.deposit)));
        }
    }
    Ok(SchemeSpec::new(Family::DaDominatingDc { drawdowns }, dissolution))
}

/// Payout equal to the balance-scaled conditional death density; dissolves
/// when two survivors remain.
pub fn instantaneous_fair_payout() -> SchemeSpec {
    SchemeSpec::new(Family::InstantaneousFairDa, Dissolution::DissolveAtTwoSurvivors)
}

/// Equitable tontine on `pool` with weights `pi` and schedule `d`.
pub fn equitable_tontine(
    pool: &Pool,
    weights: Vec<f64>,
    schedule: PayoutSchedule,
    rebalance: bool,
    dissolution: Dissolution,
) -> Result<SchemeSpec> {
    schedule.check_normalized(pool.delta)?;
    if weights.len() != pool.cohorts.len() {
        return Err(validation("one tontine weight per cohort"));
    }
    let policy = if rebalance { BalancePolicy::Permit } else { BalancePolicy::Reject };
    Ok(SchemeSpec::new(Family::EquitableTontine { weights, schedule: Arc::new(schedule), rebalance }, dissolution)
        .with_balance_policy(policy))
}

/// Inception transfers `e_i^0 = Pi_i^0 S - s_i` that align balances with the
/// tontine shares.
pub fn tontine_rebalance(pool: &Pool, weights: &[f64]) -> Vec<f64> {
    let total = pool.total_deposit();
    let norm: f64 = pool.cohorts.iter().zip(weights).map(|(c, p)| p * c.deposit * c.members as f64).sum();
    pool.cohorts.iter().zip(weights).map(|(c, p)| p * c.deposit / norm * total - c.deposit).collect()
}

/// Group self-annuitization for `n` identical members with deposit `s0`.
/// The base payment is `R_0 = s0 / sum_{t >= 0} S(t) e^{-delta t}`.
pub fn gsa_plan(n: usize, s0: f64, model: HazardModel, delta: f64) -> Result<(Pool, SchemeSpec)> {
    let r0 = gsa_base_payment(s0, &model, delta)?;
    let pool = Pool::new(vec![Cohort { deposit: s0, model, members: n }], delta)?;
    Ok((pool, SchemeSpec::new(Family::Gsa { r0 }, Dissolution::LastSurvivorLumpSum)))
}

pub fn gsa_base_payment(s0: f64, model: &HazardModel, delta: f64) -> Result<f64> {
    if let Some(l) = model.constant_rate() {
        return Ok(s0 * -(-(l + delta)).exp_m1());
    }
    let mut sum = 0.0;
    for t in 0..100_000 {
        let term = model.survival_unchecked(t as f64) * (-delta * t as f64).exp();
        sum += term;
        if term < 1e-17 * sum {
            return Ok(s0 / sum);
        }
    }
    Err(validation("annuity factor does not converge; need mortality or interest"))
}

/// Heterogeneous GSA requests are rejected.
pub fn gsa_plan_for(pool: &Pool) -> Result<SchemeSpec> {
    if pool.cohorts.len() != 1 {
        return Err(Error::Unsupported("group self-annuitization is defined for a homogeneous cohort only".into()));
    }
    let c = &pool.cohorts[0];
    Ok(SchemeSpec::new(Family::Gsa { r0: gsa_base_payment(c.deposit, &c.model, pool.delta)? }, Dissolution::LastSurvivorLumpSum))
}

/// Fair transfer plan.
pub fn ftp_plan(dissolution: Dissolution) -> SchemeSpec {
    SchemeSpec::new(Family::Ftp, dissolution).with_infeasible(InfeasiblePolicy::Dissolve)
}
