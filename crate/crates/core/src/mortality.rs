//! Mortality laws: survival, hazard, conditional densities and inverse-CDF
//! sampling of death times. Lifetimes of different participants are taken to
//! be independent.

use std::io::Read;
use std::sync::Arc;

use rand::Rng;

use crate::error::{domain, validation, Error, Result};
use crate::rng::{open_unit, path_rng};

/// Piecewise-constant force of mortality. `starts[0] == 0`; the last rate
/// extends to infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseHazard {
    starts: Arc<[f64]>,
    rates: Arc<[f64]>,
    cumulative: Arc<[f64]>,
}

impl PiecewiseHazard {
    pub fn new(starts: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if starts.is_empty() || starts.len() != rates.len() {
            return Err(validation("piecewise hazard needs matching, non-empty breakpoints and rates"));
        }
        if starts[0] != 0.0 {
            return Err(validation("piecewise hazard must start at t = 0"));
        }
        if starts.windows(2).any(|w| !(w[1] > w[0])) || starts.iter().any(|s| !s.is_finite()) {
            return Err(validation("piecewise breakpoints must be finite and strictly increasing"));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(validation("hazard rates must be finite and non-negative"));
        }
        let mut cumulative = Vec::with_capacity(starts.len());
        let mut acc = 0.0;
        for k in 0..starts.len() {
            cumulative.push(acc);
            if k + 1 < starts.len() {
                acc += rates[k] * (starts[k + 1] - starts[k]);
            }
        }
        Ok(PiecewiseHazard { starts: starts.into(), rates: rates.into(), cumulative: cumulative.into() })
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    #[inline]
    fn segment(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn hazard(&self, t: f64) -> f64 {
        self.rates[self.segment(t)]
    }

    fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let rate = self.rates[k];
        if rate == 0.0 {
            self.cumulative[k]
        } else {
            self.cumulative[k] + rate * (t - self.starts[k])
        }
    }

    /// Smallest `t` with cumulative hazard `x`; infinite if never reached.
    fn inverse(&self, x: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c <= x).saturating_sub(1);
        let rate = self.rates[k];
        if rate == 0.0 {
            // a zero-rate segment can only be crossed if a later one has mass
            return if k + 1 < self.starts.len() { self.starts[k + 1] } else { f64::INFINITY };
        }
        let t = self.starts[k] + (x - self.cumulative[k]) / rate;
        if k + 1 < self.starts.len() {
            t.min(self.starts[k + 1])
        } else {
            t
        }
    }
}

/// Annual death probabilities by integer age.
#[derive(Clone, Debug, PartialEq)]
pub struct LifeTable {
    pub start_age: u32,
    pub qx: Vec<f64>,
}

#[derive(Debug, serde::Deserialize)]
struct LifeTableRow {
    age: u32,
    qx: f64,
}

impl LifeTable {
    pub fn new(start_age: u32, qx: Vec<f64>) -> Result<Self> {
        if qx.is_empty() {
            return Err(validation("life table is empty"));
        }
        if let Some(q) = qx.iter().find(|q| !(q.is_finite() && **q >= 0.0 && **q < 1.0)) {
            return Err(validation(format!("qx must lie in [0, 1), found {q}")));
        }
        Ok(LifeTable { start_age, qx })
    }

    /// Parses a CSV with header `age, qx` and consecutive integer ages.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Input(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "age" || &headers[1] != "qx" {
            return Err(Error::Input(format!("life table header must be `age, qx`, got {headers:?}")));
        }
        let mut start = None;
        let mut qx = Vec::new();
        for row in rdr.deserialize::<LifeTableRow>() {
            let row = row.map_err(|e| Error::Input(e.to_string()))?;
            let first = *start.get_or_insert(row.age);
            if row.age as usize != first as usize + qx.len() {
                return Err(Error::Input(format!("life table ages must be consecutive, found {}", row.age)));
            }
            qx.push(row.qx);
        }
        LifeTable::new(start.ok_or_else(|| Error::Input("life table has no rows".into()))?, qx)
    }

    /// Hazard model for a life entering at `entry_age`, with time measured
    /// from entry. Hazard is constant within each year of age.
    pub fn hazard_from_age(&self, entry_age: f64) -> Result<HazardModel> {
        let end = self.start_age as f64 + self.qx.len() as f64;
        if !(entry_age >= self.start_age as f64 && entry_age < end) {
            return Err(domain(format!("entry age {entry_age} outside table range [{}, {end})", self.start_age)));
        }
        let mut starts = vec![0.0];
        let first = (entry_age - self.start_age as f64).floor() as usize;
        let mut rates = vec![-(1.0 - self.qx[first]).ln()];
        for (k, q) in self.qx.iter().enumerate().skip(first + 1) {
            starts.push(self.start_age as f64 + k as f64 - entry_age);
            rates.push(-(1.0 - q).ln());
        }
        Ok(HazardModel::Tabular { table: Arc::new(self.clone()), entry_age, hazard: PiecewiseHazard::new(starts, rates)? })
    }
}

/// A participant's mortality law.
#[derive(Clone, Debug, PartialEq)]
pub enum HazardModel {
    Constant { rate: f64 },
    Piecewise(PiecewiseHazard),
    Tabular { table: Arc<LifeTable>, entry_age: f64, hazard: PiecewiseHazard },
}

impl HazardModel {
    pub fn constant(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(validation(format!("constant force must be positive, got {rate}")));
        }
        Ok(HazardModel::Constant { rate })
    }

    pub fn piecewise(starts: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        Ok(HazardModel::Piecewise(PiecewiseHazard::new(starts, rates)?))
    }

    /// Constant force, if the model has one.
    pub fn constant_rate(&self) -> Option<f64> {
        match self {
            HazardModel::Constant { rate } => Some(*rate),
            _ => None,
        }
    }

    /// Interior points where the hazard jumps.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            HazardModel::Constant { .. } => &[],
            HazardModel::Piecewise(p) | HazardModel::Tabular { hazard: p, .. } => &p.starts()[1..],
        }
    }

    #[inline]
    pub fn hazard(&self, t: f64) -> f64 {
        match self {
            HazardModel::Constant { rate } => *rate,
            HazardModel::Piecewise(p) | HazardModel::Tabular { hazard: p, .. } => p.hazard(t),
        }
    }

    #[inline]
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        match self {
            HazardModel::Constant { rate } => rate * t,
            HazardModel::Piecewise(p) | HazardModel::Tabular { hazard: p, .. } => p.cumulative_hazard(t),
        }
    }

    /// `P{tau > t}`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.survival_unchecked(t))
    }

    #[inline]
    pub(crate) fn survival_unchecked(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// `P{tau > t | tau > asof}`.
    #[inline]
    pub fn conditional_survival(&self, asof: f64, t: f64) -> f64 {
        if t <= asof {
            return 1.0;
        }
        (self.cumulative_hazard(asof) - self.cumulative_hazard(t)).exp()
    }

    /// Density of `tau` at `t` given survival to `asof`.
    pub fn conditional_density(&self, asof: f64, t: f64) -> Result<f64> {
        check_time(asof)?;
        if t < asof {
            return Err(domain(format!("density requested at t={t} before the conditioning time {asof}")));
        }
        if self.survival_unchecked(asof) == 0.0 {
            return Err(domain(format!("participant cannot be alive at {asof}")));
        }
        Ok(self.hazard(t) * self.conditional_survival(asof, t))
    }

    /// Inverse-CDF draw of the death time given survival to `asof`, from a
    /// uniform `u` in (0, 1]. `u = 1` maps to `asof`.
    #[inline]
    pub fn sample_given(&self, asof: f64, u: f64) -> f64 {
        match self {
            HazardModel::Constant { rate } => asof - u.ln() / rate,
            HazardModel::Piecewise(p) | HazardModel::Tabular { hazard: p, .. } => {
                p.inverse(p.cumulative_hazard(asof) - u.ln()).max(asof)
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(domain(format!("time must be non-negative, got {t}")));
    }
    Ok(())
}

/// Independent lifetimes of an ordered list of participants.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMortality {
    pub members: Vec<HazardModel>,
}

impl GroupMortality {
    pub fn new(members: Vec<HazardModel>) -> Self {
        GroupMortality { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Sum of the hazards of members flagged alive.
    pub fn aggregate_hazard(&self, t: f64, alive: &[bool]) -> f64 {
        self.members.iter().zip(alive).filter(|(_, a)| **a).map(|(m, _)| m.hazard(t)).sum()
    }

    /// One death time per member from the seeded stream, sorted ascending
    /// with ties resolved by the lower participant index.
    pub fn sample_death_times(&self, seed: u64) -> Vec<(usize, f64)> {
        let mut rng = path_rng(seed, 0);
        let mut out = Vec::with_capacity(self.len());
        self.sample_into(&mut rng, 0.0, &mut out);
        out
    }

    /// Fills `out` with sorted death times conditional on survival to `asof`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, asof: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        for (i, m) in self.members.iter().enumerate() {
            out.push((i, m.sample_given(asof, open_unit(rng))));
        }
        sort_deaths(out);
    }
}

/// Ascending by time, ties by index.
pub fn sort_deaths(deaths: &mut [(usize, f64)]) {
    deaths.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}
