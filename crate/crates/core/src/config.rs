//! Scenario document schema (TOML).
//!
//! Units: MW for power, per-unit for reactance, currency/MWh for costs.
//! See `docs/scenario-schema.md` for a field-by-field description.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    #[serde(default)]
    pub name: Option<String>,
    /// Bus id of the angle reference. Defaults to the bus of the
    /// generator with the lowest id.
    #[serde(default)]
    pub slack_bus: Option<u32>,
    pub buses: Vec<BusDoc>,
    pub lines: Vec<LineDoc>,
    pub generators: Vec<GeneratorDoc>,
    pub loads: Vec<LoadDoc>,
    /// Monitored FTR paths. Empty means every line.
    #[serde(default)]
    pub paths: Vec<PathDoc>,
    /// Bidding players. Empty means one player per generator.
    #[serde(default)]
    pub players: Vec<PlayerDoc>,
    #[serde(default)]
    pub risk: RiskOptions,
    #[serde(default)]
    pub auction: AuctionOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusDoc {
    pub id: u32,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub reactance: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDoc {
    pub id: u32,
    pub bus: u32,
    /// Marginal cost, currency/MWh.
    pub cost: f64,
    #[serde(default)]
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    pub id: u32,
    pub bus: u32,
    pub demand: f64,
    /// Deviation as a fraction of `demand`; overrides `risk.deviation`.
    #[serde(default)]
    pub deviation: Option<f64>,
    /// Probability of an increment; the decrement gets `1 - omega_up`.
    #[serde(default)]
    pub omega_up: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDoc {
    pub line: u32,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerDoc {
    pub name: String,
    pub generator: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskOptions {
    /// Load deviation as a fraction of nominal demand.
    pub deviation: f64,
    pub omega_up: f64,
}

impl Default for RiskOptions {
    fn default() -> Self {
        RiskOptions {
            deviation: 0.10,
            omega_up: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuctionOptions {
    /// Floor of every bid band (the obligation base price).
    pub reserve_price: f64,
}

impl Default for AuctionOptions {
    fn default() -> Self {
        AuctionOptions { reserve_price: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Round-robin: each player responds to the latest bids of the others.
    Sequential,
    /// All players respond to a frozen snapshot, committed together.
    Simultaneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Points per dimension in best-response and deviation grids.
    pub grid_points: usize,
    /// Largest unilateral gain (currency) tolerated by the Nash certificate.
    pub nash_tolerance: f64,
    /// Largest bid/quantity change treated as "no change".
    pub change_tolerance: f64,
    pub max_rounds: usize,
    pub update_rule: UpdateRule,
    /// Complementarity relaxation schedule for the joint KKT solve.
    pub tau_start: f64,
    pub tau_end: f64,
    pub tau_factor: f64,
    /// Run the joint single-level KKT solve next to the best-response search.
    pub joint_kkt: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grid_points: 10,
            nash_tolerance: 1e-3,
            change_tolerance: 1e-6,
            max_rounds: 50,
            update_rule: UpdateRule::Sequential,
            tau_start: 1e-1,
            tau_end: 1e-8,
            tau_factor: 0.1,
            joint_kkt: true,
        }
    }
}

impl ScenarioDocument {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }
}
