use crate::error::{domain, Result};
use crate::mortality::HazardModel;
use crate::quadrature::{integrate_to_infinity_with_breaks, DEFAULT_TOL};

use super::period::{exponential_weight, general_weight, PeriodSurvival};
use super::{Dissolution, Family, SchemeSpec};

/// Calibrated two-peer scheme with exponential payouts `s_i theta_i e^{-theta_i u}`
/// (discounted). An infinite intensity refunds the deposit at inception.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPeerCalibration {
    pub thetas: [f64; 2],
    pub risk_share: f64,
    /// `s_i P{i dies first}`; the risk share may not exceed the smaller one.
    pub max_risk_share: f64,
    pub first_death_probs: [f64; 2],
}

fn first_death_prob(models: &[HazardModel; 2], i: usize) -> Result<f64> {
    if let (Some(a), Some(b)) = (models[0].constant_rate(), models[1].constant_rate()) {
        let l = [a, b];
        return Ok(if a + b == 0.0 { 0.5 } else { l[i] / (a + b) });
    }
    let (me, other) = (&models[i], &models[1 - i]);
    let mut breaks: Vec<f64> = me.breakpoints().iter().chain(other.breakpoints()).copied().collect();
    breaks.sort_by(f64::total_cmp);
    integrate_to_infinity_with_breaks(
        |u| me.hazard(u) * (-(me.cumulative_hazard(u) + other.cumulative_hazard(u))).exp(),
        0.0,
        &breaks,
        DEFAULT_TOL * 1e-2,
    )
}

/// The admissible risk-share interval `[0, s_1 P{tau_1 < tau_2} ∧ s_2 P{tau_2 < tau_1}]`.
pub fn two_peer_bounds(deposits: [f64; 2], models: &[HazardModel; 2]) -> Result<(f64, f64)> {
    let p = [first_death_prob(models, 0)?, first_death_prob(models, 1)?];
    Ok((0.0, (deposits[0] * p[0]).min(deposits[1] * p[1])))
}

/// Expected discounted balance forfeited by peer `i` if it dies first, for
/// intensity `theta`.
fn forfeit(deposits: [f64; 2], models: &[HazardModel; 2], i: usize, theta: f64) -> Result<f64> {
    if theta.is_infinite() {
        return Ok(0.0);
    }
    if let (Some(a), Some(b)) = (models[0].constant_rate(), models[1].constant_rate()) {
        return Ok(exponential_weight([a, b][i], deposits[i], theta, a + b));
    }
    let g = PeriodSurvival::new(vec![(models[0].clone(), 1), (models[1].clone(), 1)], 0.0);
    let mut breaks: Vec<f64> = models.iter().flat_map(|m| m.breakpoints().iter().copied()).collect();
    breaks.sort_by(f64::total_cmp);
    general_weight(&models[i], deposits[i], &g, &|u| Ok((-theta * u).exp()), &breaks)
}

/// Calibrates `theta_1, theta_2` so that each peer's expected forfeiture
/// equals `risk_share`, which makes the two-peer scheme periodically fair.
/// A zero risk share refunds both deposits; the maximum stops consumption
/// for at least one peer.
pub fn two_peer_periodic(
    deposits: [f64; 2],
    models: [HazardModel; 2],
    risk_share: f64,
) -> Result<(TwoPeerCalibration, SchemeSpec)> {
    let (lo, hi) = two_peer_bounds(deposits, &models)?;
    let slack = 1e-12 * deposits[0].max(deposits[1]).max(1.0);
    if !(risk_share >= lo - slack && risk_share <= hi + slack) {
        return Err(domain(format!("risk share {risk_share} outside the proper range [{lo}, {hi}]")));
    }
    let risk_share = risk_share.clamp(lo, hi);
    let mut thetas = [f64::INFINITY; 2];
    if risk_share > 0.0 {
        for (i, theta) in thetas.iter_mut().enumerate() {
            *theta = solve_theta(deposits, &models, i, risk_share)?;
        }
    }
    let p = [first_death_prob(&models, 0)?, first_death_prob(&models, 1)?];
    let calibration = TwoPeerCalibration { thetas, risk_share, max_risk_share: hi, first_death_probs: p };
    let spec = SchemeSpec::new(Family::TwoPeerDa { thetas, risk_share }, Dissolution::LastSurvivorLumpSum);
    Ok((calibration, spec))
}

fn solve_theta(deposits: [f64; 2], models: &[HazardModel; 2], i: usize, target: f64) -> Result<f64> {
    if let (Some(a), Some(b)) = (models[0].constant_rate(), models[1].constant_rate()) {
        let theta = [a, b][i] * deposits[i] / target - (a + b);
        return Ok(theta.max(0.0));
    }
    // forfeiture decreases in theta from its maximum at theta = 0
    if forfeit(deposits, models, i, 0.0)? <= target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while forfeit(deposits, models, i, hi)? > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(crate::Error::Convergence("two-peer intensity bracket diverged".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if forfeit(deposits, models, i, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(l: f64) -> HazardModel {
        HazardModel::constant(l).unwrap()
    }

    #[test]
    fn fairness_ratio_holds() {
        let (s, l) = ([300.0, 200.0], [0.03, 0.05]);
        let (_, hi) = two_peer_bounds(s, &[constant(l[0]), constant(l[1])]).unwrap();
        let (cal, _) = two_peer_periodic(s, [constant(l[0]), constant(l[1])], 0.5 * hi).unwrap();
        let [t1, t2] = cal.thetas;
        let ratio = (l[1] / l[0]) * (t1 + l[0] + l[1]) / (t2 + l[0] + l[1]);
        assert!((s[0] / s[1] - ratio).abs() < 1e-12);
    }

    #[test]
    fn boundaries() {
        let m = [constant(0.03), constant(0.05)];
        let (cal, _) = two_peer_periodic([300.0, 200.0], m.clone(), 0.0).unwrap();
        assert!(cal.thetas.iter().all(|t| t.is_infinite()));
        let (_, hi) = two_peer_bounds([300.0, 200.0], &m).unwrap();
        let (cal, _) = two_peer_periodic([300.0, 200.0], m.clone(), hi).unwrap();
        assert!(cal.thetas.contains(&0.0));
        assert!(two_peer_periodic([300.0, 200.0], m, hi * 1.01).is_err());
    }

    #[test]
    fn symmetric_peers_share_intensity() {
        let (cal, _) = two_peer_periodic([100.0, 100.0], [constant(0.04), constant(0.04)], 20.0).unwrap();
        assert_eq!(cal.thetas[0], cal.thetas[1]);
    }

    #[test]
    fn numeric_calibration_matches_closed_form() {
        let pw = |l: f64| HazardModel::piecewise(vec![0.0, 10.0], vec![l, l]).unwrap();
        let (closed, _) = two_peer_periodic([300.0, 200.0], [constant(0.03), constant(0.05)], 30.0).unwrap();
        let (numeric, _) = two_peer_periodic([300.0, 200.0], [pw(0.03), pw(0.05)], 30.0).unwrap();
        for i in 0..2 {
            assert!((closed.thetas[i] - numeric.thetas[i]).abs() < 1e-7, "{closed:?} {numeric:?}");
        }
    }
}
