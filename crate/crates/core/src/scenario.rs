//! Scenario files: a TOML description of catalog, demand, cost, evaluation
//! engine, shaping parameters and seed.
//!
//! ```toml
//! seed = 7
//! alpha = 0.2                 # or one value per user
//!
//! [catalog]
//! sizes = [3.0, 2.0, 4.0]     # or: uniform = { count = 50, low = 10.0, high = 30.0 }
//!
//! [demand]
//! # profile[n][t][m]; or: zipf = { users = 200, power = 4.0, silence = [0.9, 0.4] }
//! profile = [
//!   [[0.08, 0.01, 0.01], [0.72, 0.09, 0.09]],
//!   [[0.03, 0.01, 0.06], [0.27, 0.09, 0.54]],
//! ]
//!
//! [cost]
//! kind = "quadratic"          # or "outage" with mu, or "polynomial" with coeffs
//!
//! [eval]
//! engine = "enumerate"        # or "analytic_quadratic", or "monte_carlo" with samples
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::ItemCatalog;
use crate::cost::{CostKind, CostModel};
use crate::cube::Cube;
use crate::demand::{zipf_profile, DemandProfile};
use crate::error::{Error, Result};
use crate::eval::{Engine, EvalConfig};
use crate::instance::Instance;

pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alpha: Option<AlphaSpec>,
    pub catalog: CatalogSpec,
    pub demand: DemandSpec,
    pub cost: CostKind,
    #[serde(default)]
    pub eval: Option<EvalSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Shared(f64),
    PerUser(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    #[serde(default)]
    pub sizes: Option<Vec<f64>>,
    #[serde(default)]
    pub uniform: Option<UniformSizes>,
}

/// Sizes drawn uniformly from `[low, high)` with the scenario seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformSizes {
    pub count: usize,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    /// `profile[n][t][m]`.
    #[serde(default)]
    pub profile: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub zipf: Option<ZipfDemand>,
}

/// Identical users with Zipf item popularity and per-slot silence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipfDemand {
    pub users: usize,
    pub power: f64,
    /// Silence probability of every user in each slot; its length is the cycle length.
    pub silence: Vec<f64>,
}

/// Evaluation table; kept flat so that unknown keys are still rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub engine: EngineName,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineName {
    Enumerate,
    AnalyticQuadratic,
    MonteCarlo,
}

impl std::str::FromStr for EngineName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enumerate" => Ok(EngineName::Enumerate),
            "analytic_quadratic" | "analytic" => Ok(EngineName::AnalyticQuadratic),
            "monte_carlo" | "mc" => Ok(EngineName::MonteCarlo),
            other => Err(Error::Scenario(format!(
                "unknown engine `{other}` (expected enumerate, analytic_quadratic or monte_carlo)"
            ))),
        }
    }
}

impl EvalSpec {
    pub fn to_config(&self, scenario_seed: u64) -> Result<EvalConfig> {
        let engine = match (self.engine, self.samples) {
            (EngineName::Enumerate, None) => Engine::Enumerate,
            (EngineName::AnalyticQuadratic, None) => Engine::AnalyticQuadratic,
            (EngineName::MonteCarlo, Some(samples)) => Engine::MonteCarlo { samples },
            (EngineName::MonteCarlo, None) => {
                return Err(Error::Scenario("eval.samples is required for monte_carlo".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Scenario("eval.samples only applies to monte_carlo".into()))
            }
        };
        Ok(EvalConfig {
            engine,
            seed: self.seed.unwrap_or(scenario_seed),
        })
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub instance: Instance,
    pub eval: EvalConfig,
    pub alpha: Vec<f64>,
    /// Hex SHA-256 of the canonical scenario text.
    pub hash: String,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Builds and cross-checks the instance described by `spec`.
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self> {
        let catalog = match (&spec.catalog.sizes, &spec.catalog.uniform) {
            (Some(sizes), None) => ItemCatalog::new(sizes.clone())?,
            (None, Some(u)) => ItemCatalog::uniform(u.count, u.low, u.high, spec.seed)?,
            _ => {
                return Err(Error::Scenario(
                    "catalog needs exactly one of `sizes` or `uniform`".into(),
                ))
            }
        };
        let profile = match (&spec.demand.profile, &spec.demand.zipf) {
            (Some(rows), None) => explicit_profile(rows, catalog.len())?,
            (None, Some(z)) => zipf_demand(z, catalog.len())?,
            _ => {
                return Err(Error::Scenario(
                    "demand needs exactly one of `profile` or `zipf`".into(),
                ))
            }
        };
        let cost = CostModel::new(spec.cost.clone())?;
        let eval = match &spec.eval {
            Some(e) => e.to_config(spec.seed)?,
            None => EvalConfig {
                engine: Engine::Enumerate,
                seed: spec.seed,
            },
        };
        let instance = Instance::new(catalog, profile, cost)?;
        let alpha = match &spec.alpha {
            None => vec![DEFAULT_ALPHA; instance.users()],
            Some(AlphaSpec::Shared(a)) => vec![*a; instance.users()],
            Some(AlphaSpec::PerUser(v)) if v.len() == instance.users() => v.clone(),
            Some(AlphaSpec::PerUser(v)) => {
                return Err(Error::Scenario(format!(
                    "alpha has {} entries for {} users",
                    v.len(),
                    instance.users()
                )))
            }
        };
        if let Some(a) = alpha.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::Scenario(format!("alpha must be finite and nonnegative, got {a}")));
        }
        let hash = spec_hash(&spec)?;
        Ok(Self {
            spec,
            instance,
            eval,
            alpha,
            hash,
        })
    }

    /// Rebuilds with a different seed (generators and Monte Carlo streams).
    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.seed = seed;
        if let Some(e) = spec.eval.as_mut() {
            e.seed = None;
        }
        Self::from_spec(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.spec).map_err(|e| Error::Scenario(e.to_string()))
    }
}

fn spec_hash(spec: &ScenarioSpec) -> Result<String> {
    let canonical = serde_json::to_vec(spec)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

fn explicit_profile(rows: &[Vec<Vec<f64>>], items: usize) -> Result<DemandProfile> {
    let users = rows.len();
    let slots = rows.first().map_or(0, Vec::len);
    let mut probs = Cube::zeros(users, slots, items);
    for (n, user) in rows.iter().enumerate() {
        if user.len() != slots {
            return Err(Error::Scenario(format!(
                "demand.profile[{n}] has {} slots, expected {slots}",
                user.len()
            )));
        }
        for (t, row) in user.iter().enumerate() {
            if row.len() != items {
                return Err(Error::Scenario(format!(
                    "demand.profile[{n}][{t}] has {} items, the catalog has {items}",
                    row.len()
                )));
            }
            probs.row_mut(n, t).copy_from_slice(row);
        }
    }
    if slots == 0 {
        return Err(Error::Scenario("demand.profile needs at least one user and one slot".into()));
    }
    DemandProfile::from_probs(probs)
}

fn zipf_demand(z: &ZipfDemand, items: usize) -> Result<DemandProfile> {
    if z.silence.is_empty() {
        return Err(Error::Scenario("demand.zipf.silence needs one entry per slot".into()));
    }
    let rows = z
        .silence
        .iter()
        .map(|q| {
            if !(0.0..=1.0).contains(q) {
                return Err(Error::Scenario(format!("silence {q} outside [0, 1]")));
            }
            zipf_profile(items, z.power, 1.0 - q)
        })
        .collect::<Result<Vec<_>>>()?;
    DemandProfile::homogeneous(z.users, &rows)
}
