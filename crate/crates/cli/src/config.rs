//! Run configuration: parsing, validation and plan construction.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use da_core::ledger::{BalancePolicy, PayoutSchedule};
use da_core::mortality::{HazardModel, LifeTable};
use da_core::schemes::{
    da_dominating_dc, dc_drawdown, equitable_tontine, ftp_plan, gsa_plan_for, instantaneous_fair_payout,
    periodic_fair_da, two_peer_periodic, Cohort, Dissolution, Family, InfeasiblePolicy, Plan, Pool, SchemeSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub group: GroupConfig,
    pub scheme: SchemeConfig,
    pub economics: Economics,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub cohorts: Vec<CohortConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    #[serde(default = "one")]
    pub count: usize,
    pub deposit: f64,
    pub hazard: Hazard,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Hazard {
    Constant(f64),
    Piecewise { starts: Vec<f64>, rates: Vec<f64> },
    LifeTable { path: PathBuf, entry_age: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    OptimalDa,
    PeriodicFairDa,
    InstantaneousFairDa,
    TwoPeerDa,
    DaDominatingDc,
    DcDrawdown,
    EquitableTontine,
    Gsa,
    Ftp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissolution: Option<Dissolution>,
    #[serde(default)]
    pub params: SchemeParams,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeParams {
    /// Payout intensities of the periodic-fair DA, one per cohort.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    /// Tontine weights, one per cohort.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Level tontine payout rate; defaults to the normalized level rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payout_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payout_years: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rebalance: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_share: Option<f64>,
    /// Risk aversion of the optimal DA; defaults to the economics value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_policy: Option<BalancePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_infeasible: Option<InfeasiblePolicy>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Economics {
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    2.0 / 3.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub grid_step: f64,
    /// Participants whose paths are summarized; all of a small pool by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracked: Option<Vec<usize>>,
    /// Also run the pathwise DA against DC comparison.
    pub compare_dc: bool,
    /// Pay the DC account's closing balance as a lump sum.
    pub lump_sum_drawdown: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            n_paths: 100_000,
            seed: 0,
            horizon: 60.0,
            grid_step: da_core::montecarlo::GRID_STEP,
            tracked: None,
            compare_dc: false,
            lump_sum_drawdown: false,
        }
    }
}

/// A scripted replay with fixed death times.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// `[participant, time]` pairs; unlisted participants outlive the replay.
    #[serde(default)]
    pub deaths: Vec<(usize, f64)>,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: None, formats: vec![Format::Csv, Format::Json] }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative life table
    /// paths are resolved against the config's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut cfg.group.cohorts {
            if let Hazard::LifeTable { path, .. } = &mut c.hazard {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn pool(&self) -> anyhow::Result<Pool> {
        let cohorts = self
            .group
            .cohorts
            .iter()
            .map(|c| Ok(Cohort { deposit: c.deposit, model: c.hazard.model()?, members: c.count }))
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(Pool::new(cohorts, self.economics.delta)?)
    }

    /// Builds the plan; `policy` overrides the configured balance policy.
    pub fn plan(&self, policy: Option<BalancePolicy>) -> anyhow::Result<Plan> {
        let pool = self.pool()?;
        let p = &self.scheme.params;
        let delta = self.economics.delta;
        let gamma = self.economics.gamma;
        let diss = self.scheme.dissolution;
        let drawdowns = || -> anyhow::Result<Vec<_>> {
            pool.cohorts.iter().map(|c| Ok(dc_drawdown(c.deposit, c.model.clone(), gamma, delta)?)).collect()
        };
        let mut spec = match self.scheme.family {
            FamilyName::OptimalDa => SchemeSpec::new(
                Family::OptimalDa { gamma: p.gamma.unwrap_or(gamma) },
                diss.unwrap_or(Dissolution::LastSurvivorLumpSum),
            ),
            FamilyName::PeriodicFairDa => {
                let thetas = match &p.thetas {
                    Some(t) => t.clone(),
                    None => pool
                        .cohorts
                        .iter()
                        .map(|c| {
                            let l = c.model.constant_rate().ok_or_else(|| {
                                da_core::Error::Validation("default thetas need constant forces of mortality".into())
                            })?;
                            Ok(delta + l / gamma)
                        })
                        .collect::<anyhow::Result<_>>()?,
                };
                periodic_fair_da(thetas, diss.unwrap_or(Dissolution::LastSurvivorLumpSum))
            }
            FamilyName::InstantaneousFairDa => {
                let s = instantaneous_fair_payout();
                let d = diss.unwrap_or(s.dissolution);
                SchemeSpec { dissolution: d, ..s }
            }
            FamilyName::TwoPeerDa => {
                if pool.size() != 2 || pool.cohorts.len() != 2 {
                    bail!(da_core::Error::Validation("the two-peer scheme needs exactly two single members".into()));
                }
                let risk_share = p
                    .risk_share
                    .ok_or_else(|| da_core::Error::Validation("two-peer-da needs params.risk_share".into()))?;
                let c = &pool.cohorts;
                let (_, s) =
                    two_peer_periodic([c[0].deposit, c[1].deposit], [c[0].model.clone(), c[1].model.clone()], risk_share)?;
                match diss {
                    Some(d) => SchemeSpec { dissolution: d, ..s },
                    None => s,
                }
            }
            FamilyName::DaDominatingDc => {
                da_dominating_dc(drawdowns()?, diss.unwrap_or(Dissolution::LastSurvivorLumpSum))?
            }
            FamilyName::DcDrawdown => {
                SchemeSpec::new(Family::DcDrawdown { drawdowns: drawdowns()? }, diss.unwrap_or(Dissolution::Perpetual))
            }
            FamilyName::EquitableTontine => {
                let weights = p.weights.clone().unwrap_or_else(|| vec![1.0; pool.cohorts.len()]);
                let years = p
                    .payout_years
                    .ok_or_else(|| da_core::Error::Validation("equitable-tontine needs params.payout_years".into()))?;
                let rate = p.payout_rate.unwrap_or(if delta == 0.0 { 1.0 / years } else { delta / -(-delta * years).exp_m1() });
                let schedule = PayoutSchedule::constant(rate, years)?;
                equitable_tontine(
                    &pool,
                    weights,
                    schedule,
                    p.rebalance.unwrap_or(false),
                    diss.unwrap_or(Dissolution::Perpetual),
                )?
            }
            FamilyName::Gsa => {
                let s = gsa_plan_for(&pool)?;
                match diss {
                    Some(d) => SchemeSpec { dissolution: d, ..s },
                    None => s,
                }
            }
            FamilyName::Ftp => ftp_plan(diss.unwrap_or(Dissolution::DissolveAtTwoSurvivors)),
        };
        if let Some(b) = policy.or(p.balance_policy) {
            spec = spec.with_balance_policy(b);
        }
        if let Some(i) = p.on_infeasible {
            spec = spec.with_infeasible(i);
        }
        Ok(Plan::new(pool, spec)?)
    }

    /// Tracked participants: as configured, else everyone in a pool of at
    /// most ten and participant 0 otherwise.
    pub fn tracked(&self, size: usize) -> Vec<usize> {
        match &self.simulation.tracked {
            Some(t) => t.clone(),
            None if size <= 10 => (0..size).collect(),
            None => vec![0],
        }
    }
}

impl Hazard {
    fn model(&self) -> anyhow::Result<HazardModel> {
        Ok(match self {
            Hazard::Constant(l) => HazardModel::constant(*l)?,
            Hazard::Piecewise { starts, rates } => HazardModel::piecewise(starts.clone(), rates.clone())?,
            Hazard::LifeTable { path, entry_age } => {
                let f = std::fs::File::open(path).with_context(|| format!("opening life table {}", path.display()))?;
                LifeTable::from_csv(f)?.hazard_from_age(*entry_age)?
            }
        })
    }
}
