//! Payout rules: the deterministic rate a live account draws between deaths.

use std::fmt;
use std::sync::Arc;

use crate::error::{validation, Result};
use crate::mortality::HazardModel;
use crate::quadrature::{integrate_with_breaks, DEFAULT_TOL};

/// Total payout schedule `d(t)` of an equitable tontine, per unit of pool.
#[derive(Clone, Debug, PartialEq)]
pub enum PayoutSchedule {
    /// `d(t) = rate` on `[0, horizon)`, zero afterwards.
    Constant { rate: f64, horizon: f64 },
    /// Linear interpolation between nodes, zero after the last node.
    Tabulated { times: Vec<f64>, rates: Vec<f64>, delta: f64, tails: Vec<f64> },
}

impl PayoutSchedule {
    pub fn constant(rate: f64, horizon: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite() && horizon > 0.0) {
            return Err(validation("schedule rate must be non-negative and the horizon positive"));
        }
        Ok(PayoutSchedule::Constant { rate, horizon })
    }

    /// Tabulated schedule; its discounted integral is taken by the trapezoid
    /// rule under force of interest `delta`.
    pub fn tabulated(times: Vec<f64>, rates: Vec<f64>, delta: f64) -> Result<Self> {
        if times.len() < 2 || times.len() != rates.len() || times[0] != 0.0 {
            return Err(validation("tabulated schedule needs at least two nodes starting at t = 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(validation("tabulated schedule needs increasing times and non-negative rates"));
        }
        let g: Vec<f64> = times.iter().zip(&rates).map(|(t, r)| (-delta * t).exp() * r).collect();
        let mut tails = vec![0.0; times.len()];
        for k in (0..times.len() - 1).rev() {
            tails[k] = tails[k + 1] + 0.5 * (g[k] + g[k + 1]) * (times[k + 1] - times[k]);
        }
        Ok(PayoutSchedule::Tabulated { times, rates, delta, tails })
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            PayoutSchedule::Constant { rate, horizon } => {
                if t >= 0.0 && t < *horizon {
                    *rate
                } else {
                    0.0
                }
            }
            PayoutSchedule::Tabulated { times, rates, .. } => {
                let last = times.len() - 1;
                if t < 0.0 || t > times[last] {
                    return 0.0;
                }
                let k = times.partition_point(|&x| x <= t).saturating_sub(1).min(last - 1);
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                rates[k] + w * (rates[k + 1] - rates[k])
            }
        }
    }

    /// `D(t) = int_t^inf e^{-delta u} d(u) du`.
    pub fn discounted_tail(&self, t: f64, delta: f64) -> f64 {
        match self {
            PayoutSchedule::Constant { rate, horizon } => {
                let a = t.max(0.0);
                if a >= *horizon {
                    0.0
                } else {
                    rate * exp_integral(delta, a, *horizon)
                }
            }
            PayoutSchedule::Tabulated { times, tails, delta: d, .. } => {
                let last = times.len() - 1;
                if t >= times[last] {
                    return 0.0;
                }
                let a = t.max(0.0);
                let k = times.partition_point(|&x| x <= a).saturating_sub(1).min(last - 1);
                let ga = (-d * a).exp() * self.rate(a);
                let gk1 = (-d * times[k + 1]).exp() * self.rate(times[k + 1]);
                tails[k + 1] + 0.5 * (ga + gk1) * (times[k + 1] - a)
            }
        }
    }

    /// Checks `D(0) = 1` within `1e-8`.
    pub fn check_normalized(&self, delta: f64) -> Result<()> {
        if let PayoutSchedule::Tabulated { delta: d, .. } = self {
            if (d - delta).abs() > 1e-15 {
                return Err(validation("tabulated schedule was built for a different force of interest"));
            }
        }
        let total = self.discounted_tail(0.0, delta);
        if (total - 1.0).abs() > 1e-8 {
            return Err(validation(format!("payout schedule must integrate to 1 after discounting, got {total}")));
        }
        Ok(())
    }
}

/// `int_a^b e^{-rho v} dv`, stable as `rho -> 0`.
#[inline]
pub fn exp_integral(rho: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let x = rho * (b - a);
    if x.abs() < 1e-12 {
        return (b - a) * (-rho * a).exp();
    }
    -(-rho * a).exp() * (-x).exp_m1() / rho
}

/// CRRA felicity; `ln` at `gamma = 1`. Non-positive consumption maps to the
/// limit at zero.
#[inline]
pub fn crra(c: f64, gamma: f64) -> f64 {
    let c = c.max(0.0);
    if (gamma - 1.0).abs() < 1e-12 {
        c.ln()
    } else {
        c.powf(1.0 - gamma) / (1.0 - gamma)
    }
}

/// Shape of a general payout rate, per unit of period-start balance, at
/// absolute time `t`.
pub type RateShape = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Payout family of a live account for the current period.
#[derive(Clone, Default)]
pub enum PayoutRule {
    #[default]
    None,
    /// Discounted payout density `theta e^{-theta u}` on the period-start balance.
    Exponential { theta: f64 },
    /// Rate `s(T) f(t | T) e^{delta (t - T)}`: pays out the balance in step with
    /// the participant's conditional death density.
    DensityProportional { model: HazardModel },
    /// Equitable tontine: `share * pool * d(t)`.
    EquitableShare { share: f64, pool: f64, schedule: Arc<PayoutSchedule> },
    /// General rate `base * shape(t)`, integrated numerically.
    Profile { shape: RateShape, breaks: Arc<[f64]> },
    /// Discrete payments `unit * S(m)` at integer times `m`.
    Installments { unit: f64, model: HazardModel },
}

impl fmt::Debug for PayoutRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoutRule::None => write!(f, "None"),
            PayoutRule::Exponential { theta } => write!(f, "Exponential {{ theta: {theta} }}"),
            PayoutRule::DensityProportional { model } => write!(f, "DensityProportional {{ {model:?} }}"),
            PayoutRule::EquitableShare { share, pool, .. } => write!(f, "EquitableShare {{ share: {share}, pool: {pool} }}"),
            PayoutRule::Profile { .. } => write!(f, "Profile"),
            PayoutRule::Installments { unit, .. } => write!(f, "Installments {{ unit: {unit} }}"),
        }
    }
}

/// A rule bound to its period: start time and per-member starting balance.
#[derive(Clone, Debug, Default)]
pub struct ActiveRule {
    pub rule: PayoutRule,
    pub start: f64,
    pub base: f64,
}

impl ActiveRule {
    /// Undiscounted payout rate at `t` per member.
    pub fn rate(&self, t: f64, delta: f64) -> f64 {
        let (s, b) = (self.start, self.base);
        match &self.rule {
            PayoutRule::None | PayoutRule::Installments { .. } => 0.0,
            PayoutRule::Exponential { theta } => b * theta * (-(theta - delta) * (t - s)).exp(),
            PayoutRule::DensityProportional { model } => {
                b * model.hazard(t) * model.conditional_survival(s, t) * (delta * (t - s)).exp()
            }
            PayoutRule::EquitableShare { share, pool, schedule } => share * pool * schedule.rate(t),
            PayoutRule::Profile { shape, .. } => b * shape(t),
        }
    }

    /// Discounted continuous payments over `(t1, t2]` per member.
    pub fn discounted_payment(&self, t1: f64, t2: f64, delta: f64) -> Result<f64> {
        if t2 <= t1 {
            return Ok(0.0);
        }
        let (s, b) = (self.start, self.base);
        Ok(match &self.rule {
            PayoutRule::None => 0.0,
            PayoutRule::Exponential { theta } => {
                b * (-delta * s).exp() * (-theta * (t1 - s)).exp() * -(-theta * (t2 - t1)).exp_m1()
            }
            PayoutRule::DensityProportional { model } => {
                let st1 = model.conditional_survival(s, t1);
                let st2 = model.conditional_survival(s, t2);
                b * (-delta * s).exp() * (st1 - st2)
            }
            PayoutRule::EquitableShare { share, pool, schedule } => {
                share * pool * (schedule.discounted_tail(t1, delta) - schedule.discounted_tail(t2, delta))
            }
            PayoutRule::Profile { shape, breaks } => {
                b * integrate_with_breaks(|u| (-delta * u).exp() * shape(u), t1, t2, breaks, DEFAULT_TOL)?
            }
            PayoutRule::Installments { unit, model } => {
                let mut sum = 0.0;
                let mut m = (t1.floor() + 1.0).max(0.0);
                while m <= t2 {
                    sum += unit * model.survival_unchecked(m) * (-delta * m).exp();
                    m += 1.0;
                }
                sum
            }
        })
    }

    /// Discounted CRRA utility of the continuous stream over `(a, b]`.
    /// Discrete installments carry no flow utility.
    pub fn utility(&self, a: f64, b: f64, delta: f64, gamma: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        match &self.rule {
            PayoutRule::None | PayoutRule::Installments { .. } => Ok(0.0),
            PayoutRule::Exponential { theta } if self.base > 0.0 => {
                let s = self.start;
                let kappa = theta - delta;
                let (a1, b1) = (a - s, b - s);
                let disc = (-delta * s).exp();
                let level = self.base * theta;
                if (gamma - 1.0).abs() < 1e-12 {
                    let l = level.ln();
                    Ok(disc * (l * exp_integral(delta, a1, b1) - kappa * linear_exp_integral(delta, a1, b1)))
                } else {
                    let c = level.powf(1.0 - gamma) / (1.0 - gamma);
                    Ok(disc * c * exp_integral(delta + (1.0 - gamma) * kappa, a1, b1))
                }
            }
            _ => {
                let breaks: &[f64] = match &self.rule {
                    PayoutRule::Profile { breaks, .. } => breaks,
                    PayoutRule::DensityProportional { model } => model.breakpoints(),
                    _ => &[],
                };
                integrate_with_breaks(|u| (-delta * u).exp() * crra(self.rate(u, delta), gamma), a, b, breaks, DEFAULT_TOL)
            }
        }
    }
}

/// `int_a^b v e^{-rho v} dv`.
fn linear_exp_integral(rho: f64, a: f64, b: f64) -> f64 {
    if rho.abs() < 1e-12 {
        return 0.5 * (b * b - a * a);
    }
    let anti = |v: f64| -(v / rho + 1.0 / (rho * rho)) * (-rho * v).exp();
    anti(b) - anti(a)
}
