//! The competing controllers behind one interface: the decoupled PI loop
//! kept as the local fallback, the modified inverse controller, and linear
//! and nonlinear MPC.

mod linear;
mod mpc;
mod qp;

use std::fmt;

use nalgebra::Vector2;
use thiserror::Error;

use crate::numerics::NumericsError;
use crate::plant::{ControlInput, OperatingPoint, PlantError, PlantState};
use crate::rational::RationalError;

pub use linear::{
    derive_inverse_controller, local_pi_controller, modified_inverse_controller, modified_inverse_gains,
    pi_from_rules, process_model_of, LinearFeedbackController, PiParameters, ProcessModel, SaturationRule,
    CLOSED_LOOP_TIME_CONSTANT, INVERSE_ADDED_ZEROS, INVERSE_GAIN,
};
pub use mpc::{
    mpc_objective, mpc_solve, DisturbanceObserver, MpcConfig, MpcController, MpcSolution, ObserverState, PredictionModel,
    OBSERVER_QW, OBSERVER_RN,
};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("tuning rule needs a nonzero process gain")]
    ZeroProcessGain,
    #[error("closed-loop time constant must be positive, got {0}")]
    NonPositiveTimeConstant(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("input box is empty for move {index}: lower {lower:?} above upper {upper:?}")]
    InfeasibleBox {
        index: usize,
        lower: [f64; 2],
        upper: [f64; 2],
    },
    #[error("MPC optimizer did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("controller was built for dt = {expected} h but was stepped with dt = {got} h")]
    SampleTimeMismatch { expected: f64, got: f64 },
    #[error("unknown controller id {0}")]
    UnknownController(u8),
    #[error(transparent)]
    Rational(#[from] RationalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Registry key for a controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ControllerId(pub u8);

impl ControllerId {
    pub const LOCAL_PI: Self = Self(0);
    pub const INVERSE: Self = Self(1);
    pub const LINEAR_MPC: Self = Self(2);
    pub const NONLINEAR_MPC: Self = Self(3);
    pub const ALL: [Self; 4] = [Self::LOCAL_PI, Self::INVERSE, Self::LINEAR_MPC, Self::NONLINEAR_MPC];

    pub fn new(id: u8) -> Result<Self, ControlError> {
        if (id as usize) < Self::ALL.len() {
            Ok(Self(id))
        } else {
            Err(ControlError::UnknownController(id))
        }
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "local PI",
            1 => "modified inverse",
            2 => "linear MPC",
            3 => "nonlinear MPC",
            _ => "unknown",
        }
    }
}

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set points held for the whole run unless a scenario overrides them.
pub const DEFAULT_REFERENCE: PlantState = PlantState { v: 10.0, rho: 1.4 };

/// Everything a controller sees at one sample. The feed density is
/// deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerIo {
    pub r: PlantState,
    pub y: PlantState,
    pub u_applied_prev: ControlInput,
    pub dt: f64,
}

impl ControllerIo {
    /// `e = r − y`.
    pub fn error(&self) -> Vector2<f64> {
        self.r.to_vector() - self.y.to_vector()
    }
}

pub trait Controller: Send {
    fn id(&self) -> ControllerId;

    /// Compute the input to apply at this sample.
    fn step(&mut self, io: &ControllerIo) -> Result<ControlInput, ControlError>;

    /// Follow the loop without acting on it, so a later activation starts
    /// from a converged estimate.
    fn observe(&mut self, _io: &ControllerIo) -> Result<(), ControlError> {
        Ok(())
    }

    /// Align internal state with the input currently applied to the plant.
    fn back_initialize(&mut self, io: &ControllerIo);

    fn reset(&mut self);
}

/// Build a controller from the registry.
pub fn build_controller(id: ControllerId, dt: f64) -> Result<Box<dyn Controller>, ControlError> {
    let op = OperatingPoint::canonical();
    Ok(match id {
        ControllerId::LOCAL_PI => Box::new(local_pi_controller(dt)?),
        ControllerId::INVERSE => Box::new(modified_inverse_controller(dt)?),
        ControllerId::LINEAR_MPC => Box::new(MpcController::new(
            id,
            MpcConfig::default_for(PredictionModel::Linear, dt),
            op,
        )?),
        ControllerId::NONLINEAR_MPC => Box::new(MpcController::new(
            id,
            MpcConfig::default_for(PredictionModel::Nonlinear, dt),
            op,
        )?),
        ControllerId(other) => return Err(ControlError::UnknownController(other)),
    })
}

/// One competitor as deployed: an instance wired to the real plant and a
/// twin driven by the selector's simulation. Both keep their own estimates
/// every sample.
pub struct DualController {
    plant: Box<dyn Controller>,
    sim: Box<dyn Controller>,
}

impl DualController {
    pub fn new(plant: Box<dyn Controller>, sim: Box<dyn Controller>) -> Self {
        Self { plant, sim }
    }

    pub fn from_registry(id: ControllerId, dt: f64) -> Result<Self, ControlError> {
        Ok(Self::new(build_controller(id, dt)?, build_controller(id, dt)?))
    }

    pub fn id(&self) -> ControllerId {
        self.plant.id()
    }

    /// Plant-side sample: acts when `active`, otherwise only observes.
    pub fn plant_sample(&mut self, io: &ControllerIo, active: bool) -> Result<Option<ControlInput>, ControlError> {
        if active {
            self.plant.step(io).map(Some)
        } else {
            self.plant.observe(io).map(|_| None)
        }
    }

    pub fn sim_sample(&mut self, io: &ControllerIo) -> Result<ControlInput, ControlError> {
        self.sim.step(io)
    }

    /// Update both sides and return the control from the plant-fed side
    /// when active, from the simulation-fed side otherwise.
    pub fn step(
        &mut self,
        plant_feed: &ControllerIo,
        sim_feed: &ControllerIo,
        active: bool,
    ) -> Result<ControlInput, ControlError> {
        if active {
            self.sim.observe(sim_feed)?;
            self.plant.step(plant_feed)
        } else {
            self.plant.observe(plant_feed)?;
            self.sim.step(sim_feed)
        }
    }

    pub fn activate(&mut self, io: &ControllerIo) {
        self.plant.back_initialize(io);
    }

    pub fn plant_side(&self) -> &dyn Controller {
        self.plant.as_ref()
    }

    pub fn plant_side_mut(&mut self) -> &mut dyn Controller {
        self.plant.as_mut()
    }

    pub fn sim_side_mut(&mut self) -> &mut dyn Controller {
        self.sim.as_mut()
    }
}
