//! Scenario files: TOML describing one platform run.
//!
//! ```toml
//! duration = 6.0
//! dt = 0.002
//!
//! [plant]
//! uncertainty = [1.0, 1.1]
//!
//! [selector]
//! horizon = 0.5
//!
//! [controllers]
//! enabled = [0, 1, 2, 3]
//!
//! [disturbance]
//! kind = "canonical"
//! seed = 2021
//!
//! [[faults]]
//! start = 0.7
//! end = 0.8
//! ```
//!
//! Every field has the canonical default, so an empty file describes the
//! canonical run.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::controllers::{ControlError, ControllerId, DEFAULT_REFERENCE};
use crate::plant::{ActuatorUncertainty, ControlInput, DisturbanceProfile, OperatingPoint, PlantError, PlantState};
use crate::platform::{FaultInterval, IndexKind, PlatformError, PlatformSetup, SelectorConfig};

pub const DEFAULT_SEED: u64 = 2021;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Output directory, relative to the scenario file.
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub selector: SelectorSection,
    #[serde(default)]
    pub controllers: ControllerSection,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    #[serde(default)]
    pub faults: Vec<FaultSection>,
}

fn default_duration() -> f64 {
    6.0
}

fn default_dt() -> f64 {
    0.002
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    /// Initial `[v, ρ]`.
    pub initial_state: [f64; 2],
    /// Input applied before the first sample, `[q_i, q_w]`.
    pub initial_input: [f64; 2],
    pub q_o: f64,
    /// Gain multipliers on `[q_i, q_w]`.
    pub uncertainty: [f64; 2],
    /// Set points `[v, ρ]`.
    pub reference: [f64; 2],
}

impl Default for PlantSection {
    fn default() -> Self {
        let op = OperatingPoint::canonical();
        Self {
            initial_state: [op.state.v, op.state.rho],
            initial_input: [op.input.q_i, op.input.q_w],
            q_o: op.q_o,
            uncertainty: [1.0, 1.1],
            reference: [DEFAULT_REFERENCE.v, DEFAULT_REFERENCE.rho],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexSetting {
    ErrorOnly,
    ErrorPlusMove,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorSection {
    pub horizon: f64,
    pub w_e: [f64; 2],
    pub w_u: [f64; 2],
    pub index: IndexSetting,
    pub bandwidth: f64,
}

impl Default for SelectorSection {
    fn default() -> Self {
        let d = SelectorConfig::default();
        Self {
            horizon: d.horizon,
            w_e: d.w_e,
            w_u: d.w_u,
            index: IndexSetting::ErrorOnly,
            bandwidth: d.bandwidth,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub enabled: Vec<u8>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            enabled: ControllerId::ALL.iter().map(|c| c.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceSection {
    /// Generated step profile; the seed may be overridden from the command line.
    Canonical { seed: Option<u64> },
    Constant { rho_i: f64 },
    Step { before: f64, after: f64, t_step: f64 },
    /// `time_hours,rho_i` CSV, relative to the scenario file.
    File { path: PathBuf },
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self::Canonical { seed: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    pub start: f64,
    pub end: f64,
}

/// A parsed scenario together with the directory its relative paths
/// resolve against.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

impl LoadedScenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let scenario = Scenario::parse(&text, path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { scenario, base_dir })
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.scenario.output_dir.as_ref().map(|p| self.base_dir.join(p))
    }

    /// Build and validate the run; `seed` overrides a canonical profile's seed.
    pub fn setup(&self, seed: Option<u64>) -> Result<PlatformSetup, ScenarioError> {
        let s = &self.scenario;
        let duration = s.duration;
        let disturbance = match &s.disturbance {
            DisturbanceSection::Canonical { seed: file_seed } => {
                let profile = DisturbanceProfile::canonical(seed.or(*file_seed).unwrap_or(DEFAULT_SEED));
                if profile.duration() + 1e-9 < duration {
                    return Err(ScenarioError::Invalid(format!(
                        "the canonical profile covers {} h, the scenario asks for {duration} h",
                        profile.duration()
                    )));
                }
                profile
            }
            DisturbanceSection::Constant { rho_i } => DisturbanceProfile::constant(*rho_i, duration)?,
            DisturbanceSection::Step { before, after, t_step } => {
                DisturbanceProfile::step(*before, *after, *t_step, duration)?
            }
            DisturbanceSection::File { path } => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|source| ScenarioError::Io { path: full, source })?;
                DisturbanceProfile::from_csv(&text, duration)?
            }
        };
        let mut controllers = Vec::new();
        for &id in &s.controllers.enabled {
            let id = ControllerId::new(id)?;
            if controllers.contains(&id) {
                return Err(ScenarioError::Invalid(format!("controller {id} is listed twice")));
            }
            controllers.push(id);
        }
        let p = &s.plant;
        let setup = PlatformSetup {
            duration,
            selector: SelectorConfig {
                horizon: s.selector.horizon,
                w_e: s.selector.w_e,
                w_u: s.selector.w_u,
                index: match s.selector.index {
                    IndexSetting::ErrorOnly => IndexKind::ErrorOnly,
                    IndexSetting::ErrorPlusMove => IndexKind::ErrorPlusMove,
                },
                dt: s.dt,
                bandwidth: s.selector.bandwidth,
            },
            reference: PlantState::new(p.reference[0], p.reference[1]),
            initial_state: PlantState::new(p.initial_state[0], p.initial_state[1]),
            initial_input: ControlInput::new(p.initial_input[0], p.initial_input[1]),
            q_o: p.q_o,
            uncertainty: ActuatorUncertainty::new(p.uncertainty[0], p.uncertainty[1])?,
            disturbance,
            controllers,
            faults: s.faults.iter().map(|f| FaultInterval { start: f.start, end: f.end }).collect(),
        };
        if !(setup.initial_state.v > 0.0 && setup.initial_state.rho > 0.0) {
            return Err(ScenarioError::Invalid("initial state must have positive volume and density".into()));
        }
        setup.validate()?;
        Ok(setup)
    }
}
