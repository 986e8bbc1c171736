use std::sync::Arc;

use crate::error::{domain, Result};
use crate::ledger::{ActiveRule, PayoutRule};
use crate::mortality::HazardModel;
use crate::quadrature::{integrate_to_infinity_with_breaks, integrate_with_breaks, DEFAULT_TOL};

/// Utility-optimal DC drawdown `c(t) = kappa S(t)^{1/gamma} s` with `kappa`
/// chosen to exhaust the discounted budget.
#[derive(Clone, Debug, PartialEq)]
pub struct Drawdown {
    pub deposit: f64,
    pub model: HazardModel,
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
}

pub fn dc_drawdown(deposit: f64, model: HazardModel, gamma: f64, delta: f64) -> Result<Drawdown> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(domain(format!("drawdown needs positive risk aversion, got {gamma}")));
    }
    let kappa = if gamma.is_infinite() {
        if delta <= 0.0 {
            return Err(domain("living off interest needs a positive force of interest"));
        }
        delta
    } else if let Some(l) = model.constant_rate() {
        delta + l / gamma
    } else {
        let power = 1.0 / gamma;
        let f = integrate_to_infinity_with_breaks(
            |u| (-delta * u).exp() * model.survival_unchecked(u).powf(power),
            0.0,
            model.breakpoints(),
            DEFAULT_TOL * 1e-2,
        )?;
        1.0 / f
    };
    Ok(Drawdown { deposit, model, gamma, delta, kappa })
}

impl Drawdown {
    fn power(&self) -> f64 {
        if self.gamma.is_infinite() {
            0.0
        } else {
            1.0 / self.gamma
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.kappa * self.model.survival_unchecked(t).powf(self.power()) * self.deposit
    }

    /// `int_0^inf e^{-delta t} c(t) dt` by quadrature.
    pub fn discounted_budget(&self) -> Result<f64> {
        integrate_to_infinity_with_breaks(|t| (-self.delta * t).exp() * self.rate(t), 0.0, self.model.breakpoints(), DEFAULT_TOL)
    }

    /// The drawdown as a ledger rule on the account's own balance, started
    /// at `t0`.
    pub fn rule_from(&self, t0: f64) -> Result<PayoutRule> {
        if self.model.constant_rate().is_some() || self.gamma.is_infinite() {
            return Ok(PayoutRule::Exponential { theta: self.kappa });
        }
        let power = self.power();
        let delta = self.delta;
        let model = self.model.clone();
        let norm = integrate_to_infinity_with_breaks(
            |u| (-delta * u).exp() * model.conditional_survival(t0, t0 + u).powf(power),
            0.0,
            &model.breakpoints().iter().filter(|&&b| b > t0).map(|b| b - t0).collect::<Vec<_>>(),
            DEFAULT_TOL * 1e-2,
        )?;
        let shape = move |t: f64| model.conditional_survival(t0, t).powf(power) / norm;
        Ok(PayoutRule::Profile { shape: Arc::new(shape), breaks: self.model.breakpoints().into() })
    }

    /// The drawdown from inception as an active rule.
    pub fn active_rule(&self) -> Result<ActiveRule> {
        Ok(ActiveRule { rule: self.rule_from(0.0)?, start: 0.0, base: self.deposit })
    }

    /// Discounted drawdowns over `[0, t]`.
    pub fn cumulative_discounted(&self, t: f64) -> Result<f64> {
        if self.model.constant_rate().is_some() || self.gamma.is_infinite() {
            return Ok(-self.deposit * (-self.kappa * t).exp_m1());
        }
        integrate_with_breaks(|u| (-self.delta * u).exp() * self.rate(u), 0.0, t, self.model.breakpoints(), DEFAULT_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_initial_rate_and_budget() {
        let d = dc_drawdown(300.0, HazardModel::constant(0.03).unwrap(), 2.0 / 3.0, 0.06).unwrap();
        assert!((d.rate(0.0) - 31.5).abs() < 1e-12);
        assert!((d.discounted_budget().unwrap() - 300.0).abs() < 1e-8);
        assert!((d.cumulative_discounted(1e4).unwrap() - 300.0).abs() < 1e-9);
    }

    #[test]
    fn interest_only_limit() {
        let d = dc_drawdown(300.0, HazardModel::constant(0.03).unwrap(), f64::INFINITY, 0.06).unwrap();
        assert!((d.rate(0.0) - 18.0).abs() < 1e-12 && (d.rate(50.0) - 18.0).abs() < 1e-12);
        let big = dc_drawdown(300.0, HazardModel::constant(0.03).unwrap(), 1e9, 0.06).unwrap();
        assert!((big.rate(40.0) - 18.0).abs() < 1e-6);
    }

    #[test]
    fn general_mortality_budget_is_exhausted() {
        let m = HazardModel::piecewise(vec![0.0, 10.0, 20.0], vec![0.01, 0.03, 0.08]).unwrap();
        let d = dc_drawdown(300.0, m, 2.0 / 3.0, 0.06).unwrap();
        assert!((d.discounted_budget().unwrap() - 300.0).abs() < 1e-8);
        let rule = ActiveRule { rule: d.rule_from(0.0).unwrap(), start: 0.0, base: 300.0 };
        assert!((rule.rate(7.0, 0.06) - d.rate(7.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_risk_aversion_rejected() {
        assert!(dc_drawdown(1.0, HazardModel::constant(0.03).unwrap(), 0.0, 0.06).is_err());
    }
}
