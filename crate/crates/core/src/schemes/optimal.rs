use crate::error::{domain, Result};
use crate::mortality::HazardModel;
use crate::quadrature::{integrate_to_infinity_with_breaks, DEFAULT_TOL};
use crate::transfers::{feasibility, Feasibility};

use super::period::PeriodSurvival;

/// Utility-optimal payout per unit of period-start balance,
/// `r(u) = nu G(u)^{1/gamma}` with `G` the survival of the next death time.
#[derive(Clone)]
pub enum OptimalPayout {
    /// Risk neutrality: the whole balance is refunded at once.
    Refund,
    /// Constant forces: `r(u) = theta e^{-(theta - delta) u}`,
    /// `theta = delta + Lambda / gamma`.
    Exponential { theta: f64, delta: f64 },
    /// Any mortality: `nu` from quadrature.
    General { nu: f64, power: f64, survival: PeriodSurvival, breaks: Vec<f64>, delta: f64 },
}

impl std::fmt::Debug for OptimalPayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimalPayout::Refund => write!(f, "Refund"),
            OptimalPayout::Exponential { theta, .. } => write!(f, "Exponential {{ theta: {theta} }}"),
            OptimalPayout::General { nu, power, .. } => write!(f, "General {{ nu: {nu}, power: {power} }}"),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(domain(format!("risk aversion must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// Optimal payout for the survivors `(model, members)` from `asof`, in
/// closed form when every force of mortality is constant.
pub fn optimal_da_payout(survivors: &[(HazardModel, usize)], gamma: f64, delta: f64, asof: f64) -> Result<OptimalPayout> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(OptimalPayout::Refund);
    }
    let rates: Option<Vec<f64>> =
        survivors.iter().map(|(m, k)| m.constant_rate().map(|l| l * *k as f64)).collect();
    match rates {
        Some(r) => {
            let total: f64 = r.iter().sum();
            let theta = if gamma.is_infinite() { delta } else { delta + total / gamma };
            Ok(OptimalPayout::Exponential { theta, delta })
        }
        None => optimal_da_payout_numeric(survivors, gamma, delta, asof),
    }
}

/// The same payout with `nu` computed by quadrature for any mortality.
pub fn optimal_da_payout_numeric(
    survivors: &[(HazardModel, usize)],
    gamma: f64,
    delta: f64,
    asof: f64,
) -> Result<OptimalPayout> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(OptimalPayout::Refund);
    }
    let power = if gamma.is_infinite() { 0.0 } else { 1.0 / gamma };
    let survival = PeriodSurvival::new(survivors.to_vec(), asof);
    let mut absolute: Vec<f64> = survivors.iter().flat_map(|(m, _)| m.breakpoints().iter().copied()).collect();
    absolute.sort_by(f64::total_cmp);
    let breaks = survival.breaks(&absolute);
    let integral = integrate_to_infinity_with_breaks(
        |u| (-delta * u).exp() * survival.at(u).powf(power),
        0.0,
        &breaks,
        DEFAULT_TOL * 1e-2,
    )?;
    Ok(OptimalPayout::General { nu: 1.0 / integral, power, survival, breaks, delta })
}

impl OptimalPayout {
    /// Undiscounted payout rate per unit of period-start balance at elapsed
    /// time `u`.
    pub fn rate(&self, u: f64) -> f64 {
        match self {
            OptimalPayout::Refund => 0.0,
            OptimalPayout::Exponential { theta, delta } => theta * (-(theta - delta) * u).exp(),
            OptimalPayout::General { nu, power, survival, .. } => nu * survival.at(u).powf(*power),
        }
    }

    /// `int_0^inf e^{-delta u} r(u) du`, by quadrature.
    pub fn normalization(&self) -> Result<f64> {
        match self {
            OptimalPayout::Refund => Ok(1.0),
            OptimalPayout::Exponential { delta, .. } => {
                integrate_to_infinity_with_breaks(|u| (-delta * u).exp() * self.rate(u), 0.0, &[], DEFAULT_TOL)
            }
            OptimalPayout::General { breaks, delta, .. } => {
                integrate_to_infinity_with_breaks(|u| (-delta * u).exp() * self.rate(u), 0.0, breaks, DEFAULT_TOL)
            }
        }
    }
}

/// Expected discounted share of the period-start balance still unpaid at the
/// next death, `q = Lambda / (delta + (1 + 1/gamma) Lambda)` under constant
/// forces.
pub fn optimal_q(survivors: &[(HazardModel, usize)], gamma: f64, delta: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let total: f64 = survivors
        .iter()
        .map(|(m, k)| m.constant_rate().map(|l| l * *k as f64).ok_or_else(|| domain("q needs constant forces")))
        .sum::<Result<f64>>()?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let theta = if gamma.is_infinite() { delta } else { delta + total / gamma };
    Ok(total / (theta + total))
}

/// Properness of the optimal DA: `lambda_i s_i <= sum_{j != i} lambda_j s_j`.
pub fn optimal_da_properness(lambdas: &[f64], balances: &[f64]) -> Result<Feasibility> {
    let w: Vec<f64> = lambdas.iter().zip(balances).map(|(l, s)| l * s).collect();
    feasibility(&w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_peer() -> Vec<(HazardModel, usize)> {
        [0.03, 0.04, 0.05].iter().map(|&l| (HazardModel::constant(l).unwrap(), 1)).collect()
    }

    #[test]
    fn initial_rate_and_q() {
        let p = optimal_da_payout(&three_peer(), 2.0 / 3.0, 0.06, 0.0).unwrap();
        assert!((p.rate(0.0) * 300.0 - 72.0).abs() < 1e-12);
        let q = optimal_q(&three_peer(), 2.0 / 3.0, 0.06).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-15);
        assert!(optimal_da_properness(&[0.03, 0.04, 0.05], &[300.0, 270.0, 255.0]).unwrap().pass);
    }

    #[test]
    fn numeric_matches_closed_form() {
        let closed = optimal_da_payout(&three_peer(), 2.0, 0.06, 3.0).unwrap();
        let numeric = optimal_da_payout_numeric(&three_peer(), 2.0, 0.06, 3.0).unwrap();
        for u in [0.0, 1.0, 10.0, 40.0] {
            assert!((closed.rate(u) - numeric.rate(u)).abs() < 1e-8);
        }
        assert!((numeric.normalization().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn limits() {
        assert!(matches!(optimal_da_payout(&three_peer(), 0.0, 0.06, 0.0).unwrap(), OptimalPayout::Refund));
        let p = optimal_da_payout(&three_peer(), f64::INFINITY, 0.06, 0.0).unwrap();
        assert!((p.rate(25.0) - 0.06).abs() < 1e-15);
    }
}
