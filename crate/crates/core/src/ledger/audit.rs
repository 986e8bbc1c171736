//! Rationality audits: no loss for the last survivor, non-negative balances,
//! non-negative credit transfers.

use serde::Serialize;

use super::{PoolState, AUDIT_TOL};
use crate::error::{validation, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axiom1Entry {
    pub account: usize,
    pub deposit: f64,
    pub lifetime_payments: f64,
    pub surplus: f64,
    /// `e^0 + sum_k e^{(k)} e^{-delta T_k}`; non-negative iff the survivor
    /// recovers the deposit when the whole balance is paid at closing.
    pub transfer_total: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axiom1Report {
    pub pass: bool,
    pub closing_time: f64,
    pub entries: Vec<Axiom1Entry>,
}

/// Lifetime discounted payments of the survivors at closing against their
/// deposits. Fails with a validation error when pooling has not ended.
pub fn audit_axiom1(state: &PoolState) -> Result<Axiom1Report> {
    let closing = state.closing().ok_or_else(|| validation("run has not reached dissolution or its last survivor"))?;
    let entries: Vec<Axiom1Entry> = closing
        .survivors
        .iter()
        .zip(&closing.payments)
        .zip(&closing.transfer_totals)
        .map(|((&i, &paid), &transfer_total)| {
            let deposit = state.account(i).deposit;
            let surplus = paid - deposit;
            Axiom1Entry {
                account: i,
                deposit,
                lifetime_payments: paid,
                surplus,
                transfer_total,
                pass: surplus >= -AUDIT_TOL * deposit.max(f64::MIN_POSITIVE),
            }
        })
        .collect();
    Ok(Axiom1Report { pass: entries.iter().all(|e| e.pass), closing_time: closing.time, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axiom2Report {
    pub pass: bool,
    pub min_balance: f64,
    /// `(account, time)` of the lowest balance seen at any checkpoint.
    pub worst: Option<(usize, f64)>,
}

pub fn audit_axiom2(state: &PoolState) -> Axiom2Report {
    let mut min_balance = f64::INFINITY;
    let mut worst = None;
    for (i, a) in state.accounts().iter().enumerate() {
        let (v, t) = a.min_cash_value();
        if v < min_balance {
            min_balance = v;
            worst = Some((i, t));
        }
    }
    Axiom2Report { pass: min_balance >= -state.tolerance(), min_balance, worst }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axiom3Report {
    pub pass: bool,
    pub min_transfer: Option<f64>,
    /// `(death index, recipient account)` of the most negative credit.
    pub worst: Option<(usize, usize)>,
    pub max_initial_transfer: f64,
}

pub fn audit_axiom3(state: &PoolState) -> Axiom3Report {
    let tol = state.tolerance();
    let (min, at) = state.min_transfer();
    let max_initial = state.accounts().iter().map(|a| a.initial_transfer().abs()).fold(0.0, f64::max);
    let transfers_ok = !(min < -tol);
    Axiom3Report {
        pass: transfers_ok && max_initial <= tol,
        min_transfer: min.is_finite().then_some(min),
        worst: at,
        max_initial_transfer: max_initial,
    }
}

pub fn is_proper(state: &PoolState) -> bool {
    audit_axiom3(state).pass
}

/// Outcome of the check that Axiom 3 implies Axioms 1 and 2 on a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImplicationCheck {
    pub axiom1: Option<bool>,
    pub axiom2: bool,
    pub axiom3: bool,
    pub holds: bool,
}

pub fn check_implication(state: &PoolState) -> ImplicationCheck {
    let axiom1 = audit_axiom1(state).ok().map(|r| r.pass);
    let axiom2 = audit_axiom2(state).pass;
    let axiom3 = audit_axiom3(state).pass;
    ImplicationCheck { axiom1, axiom2, axiom3, holds: !axiom3 || (axiom1.unwrap_or(true) && axiom2) }
}
