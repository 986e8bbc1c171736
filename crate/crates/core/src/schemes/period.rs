//! Period-level quantities: survival of the next death time and the
//! periodic-fairness weights `p_i [s_i - ER_i]`.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::Result;
use crate::mortality::HazardModel;
use crate::quadrature::integrate_to_infinity_with_breaks;

/// Weight-integral tolerance relative to the period-start balance.
const WEIGHT_TOL: f64 = 1e-11;

/// Survival of the next death time after `t0`:
/// `G(u) = prod_a S_a(t0 + u | t0)^{m_a}`.
#[derive(Clone)]
pub struct PeriodSurvival {
    models: Arc<[(HazardModel, f64)]>,
    t0: f64,
}

impl PeriodSurvival {
    pub fn new(models: Vec<(HazardModel, usize)>, t0: f64) -> Self {
        let models: Vec<(HazardModel, f64)> =
            models.into_iter().filter(|(_, m)| *m > 0).map(|(h, m)| (h, m as f64)).collect();
        PeriodSurvival { models: models.into(), t0 }
    }

    #[inline]
    pub fn at(&self, u: f64) -> f64 {
        let t = self.t0 + u;
        let log: f64 = self
            .models
            .iter()
            .map(|(h, m)| m * (h.cumulative_hazard(self.t0) - h.cumulative_hazard(t)))
            .sum();
        log.exp()
    }

    /// Breakpoints in elapsed time.
    pub fn breaks(&self, absolute: &[f64]) -> Vec<f64> {
        absolute.iter().filter(|&&b| b > self.t0).map(|b| b - self.t0).collect()
    }
}

/// `B int_0^inf h(t0 + u) G(u) F(u) du`: the discounted balance expected to
/// be forfeited if this member dies first, where `F(u)` is the fraction of
/// the period-start balance (discounted to `t0`) still unpaid at `u`.
pub(crate) fn general_weight(
    model: &HazardModel,
    base: f64,
    survival: &PeriodSurvival,
    remaining: &dyn Fn(f64) -> Result<f64>,
    breaks: &[f64],
) -> Result<f64> {
    if base == 0.0 {
        return Ok(0.0);
    }
    let t0 = survival.t0;
    let err = RefCell::new(None);
    let v = integrate_to_infinity_with_breaks(
        |u| {
            let f = match remaining(u) {
                Ok(f) => f,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            };
            model.hazard(t0 + u) * survival.at(u) * f
        },
        0.0,
        breaks,
        WEIGHT_TOL,
    )?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(base * v)
}

/// Weight `lambda B / (theta + Lambda)` for exponential payouts under
/// constant forces.
#[inline]
pub(crate) fn exponential_weight(lambda: f64, base: f64, theta: f64, total_hazard: f64) -> f64 {
    lambda * base / (theta + total_hazard)
}
