//! Surge-tank plant: nonlinear mass-balance model, linearization about an
//! operating point, actuator gain uncertainty and feed-density profiles.
//!
//! States are tank volume `v` (m³) and tank density `rho` (t/m³). Inputs are
//! product inflow `q_i` and water inflow `q_w` (m³/h); the outflow `q_o` is
//! held constant. The disturbance is the feed density `rho_i`. Time is in
//! hours throughout.

use std::fmt::Write as _;

use nalgebra::{dmatrix, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::{self, Matrix, NumericsError};

/// Volume bounds (m³).
pub const V_BOUNDS: (f64, f64) = (3.0, 20.0);
/// Density bounds (t/m³).
pub const RHO_BOUNDS: (f64, f64) = (1.0, 1.5);
/// Product inflow bounds (m³/h).
pub const QI_BOUNDS: (f64, f64) = (300.0, 1200.0);
/// Water inflow bounds (m³/h).
pub const QW_BOUNDS: (f64, f64) = (0.0, 750.0);
/// Feed density bounds (t/m³).
pub const RHO_I_BOUNDS: (f64, f64) = (1.0, 2.0);
/// Largest input change per sample, per channel (m³/h).
pub const RATE_LIMIT: f64 = 100.0;
/// Outflow used by every scenario unless overridden (m³/h).
pub const NOMINAL_Q_O: f64 = 750.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("tank volume must be positive for the density dynamics, got {0}")]
    SingularDynamics(f64),
    #[error("operating point is not an equilibrium (residual {dv:e}, {drho:e})")]
    NotEquilibrium { dv: f64, drho: f64 },
    #[error("sample period must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("time {t} h is outside the profile duration [0, {duration}]")]
    OutsideProfile { t: f64, duration: f64 },
    #[error("invalid disturbance profile: {0}")]
    InvalidProfile(String),
    #[error("actuator gain multipliers must be positive, got ({0}, {1})")]
    InvalidUncertainty(f64, f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub v: f64,
    pub rho: f64,
}

impl PlantState {
    pub fn new(v: f64, rho: f64) -> Self {
        Self { v, rho }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.v, self.rho)
    }

    pub fn from_vector(x: &Vector2<f64>) -> Self {
        Self { v: x[0], rho: x[1] }
    }

    /// True when the state lies outside the volume or density bounds.
    pub fn out_of_bounds(&self) -> bool {
        self.v < V_BOUNDS.0 || self.v > V_BOUNDS.1 || self.rho < RHO_BOUNDS.0 || self.rho > RHO_BOUNDS.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub q_i: f64,
    pub q_w: f64,
}

impl ControlInput {
    pub fn new(q_i: f64, q_w: f64) -> Self {
        Self { q_i, q_w }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.q_i, self.q_w)
    }

    pub fn from_vector(u: &Vector2<f64>) -> Self {
        Self { q_i: u[0], q_w: u[1] }
    }

    pub fn within_box(&self) -> bool {
        (QI_BOUNDS.0..=QI_BOUNDS.1).contains(&self.q_i) && (QW_BOUNDS.0..=QW_BOUNDS.1).contains(&self.q_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub rho_i: f64,
}

impl Disturbance {
    pub fn new(rho_i: f64) -> Self {
        Self { rho_i }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub state: PlantState,
    pub input: ControlInput,
    pub q_o: f64,
    pub disturbance: Disturbance,
}

impl OperatingPoint {
    /// `v = 10`, `rho = 1.4`, `q_i = 600`, `q_w = 150`, `q_o = 750`, `rho_i = 1.5`.
    pub fn canonical() -> Self {
        Self {
            state: PlantState::new(10.0, 1.4),
            input: ControlInput::new(600.0, 150.0),
            q_o: NOMINAL_Q_O,
            disturbance: Disturbance::new(1.5),
        }
    }
}

/// Multiplicative gain error on each input channel, seen by the plant only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorUncertainty {
    pub q_i: f64,
    pub q_w: f64,
}

impl ActuatorUncertainty {
    pub fn new(q_i: f64, q_w: f64) -> Result<Self, PlantError> {
        if !(q_i > 0.0 && q_w > 0.0) {
            return Err(PlantError::InvalidUncertainty(q_i, q_w));
        }
        Ok(Self { q_i, q_w })
    }

    pub fn identity() -> Self {
        Self { q_i: 1.0, q_w: 1.0 }
    }

    pub fn apply(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(u.q_i * self.q_i, u.q_w * self.q_w)
    }
}

impl Default for ActuatorUncertainty {
    fn default() -> Self {
        Self::identity()
    }
}

fn raw_dynamics(x: &Vector2<f64>, u: ControlInput, q_o: f64, rho_i: f64) -> Vector2<f64> {
    let inflow = u.q_i + u.q_w;
    Vector2::new(
        inflow - q_o,
        (rho_i * u.q_i + u.q_w - x[1] * inflow) / x[0],
    )
}

/// Time derivative `(dv/dt, drho/dt)` of the nonlinear tank model.
pub fn dynamics(x: PlantState, u: ControlInput, q_o: f64, d: Disturbance) -> Result<Vector2<f64>, PlantError> {
    if !(x.v > 0.0) {
        return Err(PlantError::SingularDynamics(x.v));
    }
    Ok(raw_dynamics(&x.to_vector(), u, q_o, d.rho_i))
}

pub fn equilibrium_residual(op: &OperatingPoint) -> Vector2<f64> {
    raw_dynamics(&op.state.to_vector(), op.input, op.q_o, op.disturbance.rho_i)
}

/// Continuous LTI model in deviation variables:
/// `x' = A x + B u + Gd d`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix,
    pub b: Matrix,
    pub gd: Matrix,
    pub c: Matrix,
}

/// Zero-order-hold equivalent of a [`LinearModel`] for one sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub phi: Matrix,
    pub gamma: Matrix,
    pub c: Matrix,
    pub dt: f64,
}

impl LinearModel {
    /// The linearized surge tank at the canonical operating point.
    pub fn canonical() -> Self {
        linearize(&OperatingPoint::canonical()).expect("canonical point is an equilibrium")
    }

    pub fn discretize(&self, dt: f64) -> Result<DiscreteModel, PlantError> {
        let (phi, gamma) = numerics::discretize_zoh(&self.a, &self.b, dt)?;
        Ok(DiscreteModel {
            phi,
            gamma,
            c: self.c.clone(),
            dt,
        })
    }
}

const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;

/// First-order Taylor expansion of the tank model about `op`. The outflow
/// channel is dropped since `q_o` is held constant.
pub fn linearize(op: &OperatingPoint) -> Result<LinearModel, PlantError> {
    let res = equilibrium_residual(op);
    if res.norm() >= EQUILIBRIUM_TOLERANCE {
        return Err(PlantError::NotEquilibrium { dv: res[0], drho: res[1] });
    }
    let PlantState { v, rho } = op.state;
    let ControlInput { q_i, q_w } = op.input;
    let rho_i = op.disturbance.rho_i;
    let inflow = q_i + q_w;
    let mixing = rho_i * q_i + q_w - rho * inflow;
    Ok(LinearModel {
        a: dmatrix![0.0, 0.0; -mixing / (v * v), -inflow / v],
        b: dmatrix![1.0, 1.0; (rho_i - rho) / v, (1.0 - rho) / v],
        gd: dmatrix![0.0; q_i / v],
        c: Matrix::identity(2, 2),
    })
}

/// Advance the nonlinear plant one sample. The actuator gain error is
/// applied to the commanded inputs before integration.
pub fn step_plant(
    x: PlantState,
    u_commanded: ControlInput,
    q_o: f64,
    d: Disturbance,
    uncertainty: &ActuatorUncertainty,
    dt: f64,
) -> Result<PlantState, PlantError> {
    if !(dt > 0.0) {
        return Err(PlantError::NonPositiveStep(dt));
    }
    if !(x.v > 0.0) {
        return Err(PlantError::SingularDynamics(x.v));
    }
    let u = uncertainty.apply(u_commanded);
    let next = numerics::rk4_step(|s| raw_dynamics(s, u, q_o, d.rho_i), &x.to_vector(), dt)?;
    if !(next[0] > 0.0) {
        return Err(PlantError::SingularDynamics(next[0]));
    }
    Ok(PlantState::from_vector(&next))
}

/// Piecewise-constant feed density, held between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceProfile {
    knots: Vec<(f64, f64)>,
    duration: f64,
}

impl DisturbanceProfile {
    /// Knots must start at `t = 0`, be strictly increasing in time, lie
    /// within the duration and carry values inside the feed density bounds.
    pub fn new(knots: Vec<(f64, f64)>, duration: f64) -> Result<Self, PlantError> {
        if !(duration > 0.0) {
            return Err(PlantError::InvalidProfile(format!("duration must be positive, got {duration}")));
        }
        let first = knots
            .first()
            .ok_or_else(|| PlantError::InvalidProfile("no knots".into()))?;
        if first.0 != 0.0 {
            return Err(PlantError::InvalidProfile(format!("first knot must be at t = 0, got {}", first.0)));
        }
        for pair in knots.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(PlantError::InvalidProfile(format!(
                    "knot times must increase strictly ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for &(t, value) in &knots {
            if !(RHO_I_BOUNDS.0..=RHO_I_BOUNDS.1).contains(&value) {
                return Err(PlantError::InvalidProfile(format!("rho_i = {value} at t = {t} is outside [1, 2]")));
            }
            if t > duration {
                return Err(PlantError::InvalidProfile(format!("knot at t = {t} is past the duration {duration}")));
            }
        }
        Ok(Self { knots, duration })
    }

    pub fn constant(rho_i: f64, duration: f64) -> Result<Self, PlantError> {
        Self::new(vec![(0.0, rho_i)], duration)
    }

    /// Constant `before`, switching to `after` at `t_step`.
    pub fn step(before: f64, after: f64, t_step: f64, duration: f64) -> Result<Self, PlantError> {
        if t_step <= 0.0 {
            return Self::constant(after, duration);
        }
        Self::new(vec![(0.0, before), (t_step, after)], duration)
    }

    /// Six-hour reference profile: step changes every 0.2–0.5 h drawn from
    /// `seed`, peak 1.74, and a dip below 1.4 (down to 1.35) over
    /// [2.6, 3.2) h. Outside the dip every value is at least 1.42.
    pub fn canonical(seed: u64) -> Self {
        const DIP: (f64, f64) = (2.6, 3.2);
        const DURATION: f64 = 6.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut knots = Vec::new();
        let mut segment = |t0: f64, t1: f64, knots: &mut Vec<(f64, f64)>| {
            let mut t = t0;
            loop {
                knots.push((round_time(t), round_value(rng.random_range(1.42..1.72))));
                let remaining = t1 - t;
                if remaining <= 0.5 + 1e-9 {
                    break;
                }
                t += rng.random_range(0.2..(0.5f64).min(remaining - 0.2));
            }
        };
        segment(0.0, DIP.0, &mut knots);
        let peak_search_end = knots.len();
        knots.push((DIP.0, 1.35));
        knots.push((2.9, 1.38));
        segment(DIP.1, DURATION, &mut knots);

        // the tallest knot outside the dip is raised to the peak value
        let peak = knots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < peak_search_end || *i >= peak_search_end + 2)
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
            .expect("non-empty profile");
        knots[peak].1 = 1.74;
        Self::new(knots, DURATION).expect("generated profile is valid")
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Parse `time_hours,rho_i` rows (a header line is optional).
    pub fn from_csv(text: &str, duration: f64) -> Result<Self, PlantError> {
        let mut knots = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 0 && line.starts_with("time_hours") {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |field: Option<&str>| -> Result<f64, PlantError> {
                field
                    .map(str::trim)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| PlantError::InvalidProfile(format!("line {}: expected `time_hours,rho_i`", lineno + 1)))
            };
            let t = parse(fields.next())?;
            let value = parse(fields.next())?;
            if fields.next().is_some() {
                return Err(PlantError::InvalidProfile(format!("line {}: too many fields", lineno + 1)));
            }
            knots.push((t, value));
        }
        Self::new(knots, duration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_hours,rho_i\n");
        for &(t, v) in &self.knots {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }
}

fn round_time(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

fn round_value(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Zero-order-hold lookup of the feed density at time `t`.
pub fn sample_disturbance(profile: &DisturbanceProfile, t: f64) -> Result<Disturbance, PlantError> {
    if !(0.0..=profile.duration).contains(&t) {
        return Err(PlantError::OutsideProfile {
            t,
            duration: profile.duration,
        });
    }
    let idx = profile.knots.partition_point(|&(tk, _)| tk <= t);
    Ok(Disturbance::new(profile.knots[idx.saturating_sub(1)].1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn op() -> OperatingPoint {
        OperatingPoint::canonical()
    }

    #[test]
    fn equilibrium_and_substitution() {
        let o = op();
        assert_eq!(dynamics(o.state, o.input, o.q_o, o.disturbance).unwrap(), Vector2::zeros());
        let d = dynamics(o.state, o.input, 750.0, Disturbance::new(1.6)).unwrap();
        assert_relative_eq!(d[0], 0.0);
        assert_relative_eq!(d[1], 6.0, epsilon = 1e-12);
        let none = dynamics(PlantState::new(4.0, 1.2), ControlInput::new(0.0, 0.0), 0.0, Disturbance::new(1.8)).unwrap();
        assert_eq!(none, Vector2::zeros());
    }

    #[test]
    fn dynamics_rejects_empty_tank() {
        let o = op();
        assert!(matches!(
            dynamics(PlantState::new(0.0, 1.4), o.input, o.q_o, o.disturbance),
            Err(PlantError::SingularDynamics(_))
        ));
    }

    #[test]
    fn residuals_off_equilibrium() {
        let mut o = op();
        assert_eq!(equilibrium_residual(&o), Vector2::zeros());
        o.input.q_w = 0.0;
        // dv = 600 - 750; drho = (1.5*600 - 1.4*600) / 10
        let r = equilibrium_residual(&o);
        assert_relative_eq!(r[0], -150.0);
        assert_relative_eq!(r[1], 6.0, epsilon = 1e-12);
        let mut o = op();
        o.disturbance.rho_i = 1.4;
        let r = equilibrium_residual(&o);
        assert_relative_eq!(r[1], -6.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_linearization() {
        let m = linearize(&op()).unwrap();
        assert_relative_eq!(m.a, dmatrix![0.0, 0.0; 0.0, -75.0], epsilon = 1e-12);
        assert_relative_eq!(m.b, dmatrix![1.0, 1.0; 0.01, -0.04], epsilon = 1e-12);
        assert_relative_eq!(m.gd, dmatrix![0.0; 60.0], epsilon = 1e-12);
        assert_eq!(m.c, Matrix::identity(2, 2));
    }

    #[test]
    fn linearization_matches_central_differences() {
        let o = op();
        let m = linearize(&o).unwrap();
        let h = 1e-6;
        let f = |x: Vector2<f64>, u: Vector2<f64>, d: f64| {
            dynamics(PlantState::from_vector(&x), ControlInput::from_vector(&u), o.q_o, Disturbance::new(d)).unwrap()
        };
        let x0 = o.state.to_vector();
        let u0 = o.input.to_vector();
        let d0 = o.disturbance.rho_i;
        for j in 0..2 {
            let mut e = Vector2::zeros();
            e[j] = h;
            let col_a = (f(x0 + e, u0, d0) - f(x0 - e, u0, d0)) / (2.0 * h);
            let col_b = (f(x0, u0 + e, d0) - f(x0, u0 - e, d0)) / (2.0 * h);
            for i in 0..2 {
                assert!((col_a[i] - m.a[(i, j)]).abs() < 1e-4);
                assert!((col_b[i] - m.b[(i, j)]).abs() < 1e-4);
            }
        }
        let col_d = (f(x0, u0, d0 + h) - f(x0, u0, d0 - h)) / (2.0 * h);
        assert!((col_d[1] - m.gd[(1, 0)]).abs() < 1e-4);
    }

    #[test]
    fn linearization_at_larger_volume() {
        let mut o = op();
        o.state.v = 20.0;
        let m = linearize(&o).unwrap();
        assert_relative_eq!(m.a[(1, 1)], -(600.0 + 150.0) / 20.0);
        o.q_o = 1500.0;
        o.input = ControlInput::new(1200.0, 300.0);
        let m = linearize(&o).unwrap();
        assert_relative_eq!(m.a[(1, 1)], -1500.0 / 20.0);
    }

    #[test]
    fn linearization_requires_equilibrium() {
        let mut o = op();
        o.input.q_w = 0.0;
        match linearize(&o) {
            Err(PlantError::NotEquilibrium { dv, .. }) => assert_relative_eq!(dv, -150.0),
            other => panic!("expected NotEquilibrium, got {other:?}"),
        }
    }

    #[test]
    fn uncertainty_scales_water_flow() {
        let g = ActuatorUncertainty::new(1.0, 1.1).unwrap();
        let applied = g.apply(ControlInput::new(600.0, 150.0));
        assert_relative_eq!(applied.q_w, 165.0, epsilon = 1e-12);
        assert_eq!(applied.q_i, 600.0);
        assert!(ActuatorUncertainty::new(0.0, 1.0).is_err());
    }

    #[test]
    fn step_at_equilibrium_is_stationary() {
        let o = op();
        let next = step_plant(o.state, o.input, o.q_o, o.disturbance, &ActuatorUncertainty::identity(), 0.002).unwrap();
        assert!((next.v - 10.0).abs() < 1e-12);
        assert!((next.rho - 1.4).abs() < 1e-12);
    }

    #[test]
    fn step_after_feed_density_rise() {
        let o = op();
        let d = Disturbance::new(1.6);
        let g = ActuatorUncertainty::identity();
        let next = step_plant(o.state, o.input, o.q_o, d, &g, 0.002).unwrap();
        assert!(next.rho > 1.4);
        assert!((next.v - 10.0).abs() < 1e-12);
        // fine-step reference
        let mut fine = o.state;
        for _ in 0..100 {
            fine = step_plant(fine, o.input, o.q_o, d, &g, 0.002 / 100.0).unwrap();
        }
        assert!((fine.rho - next.rho).abs() < 1e-7);
        // closed form: rho -> rho_eq with rate inflow / v
        let rho_eq = (1.6 * 600.0 + 150.0) / 750.0;
        let exact = rho_eq + (1.4 - rho_eq) * (-75.0 * 0.002f64).exp();
        assert!((next.rho - exact).abs() < 1e-7);
    }

    #[test]
    fn profile_lookup() {
        let p = DisturbanceProfile::constant(1.5, 6.0).unwrap();
        for t in [0.0, 1.0, 3.3, 6.0] {
            assert_eq!(sample_disturbance(&p, t).unwrap().rho_i, 1.5);
        }
        assert!(matches!(sample_disturbance(&p, 6.1), Err(PlantError::OutsideProfile { .. })));
        assert!(matches!(sample_disturbance(&p, -0.1), Err(PlantError::OutsideProfile { .. })));

        let s = DisturbanceProfile::step(1.5, 1.6, 0.1, 1.0).unwrap();
        assert_eq!(sample_disturbance(&s, 0.0999).unwrap().rho_i, 1.5);
        assert_eq!(sample_disturbance(&s, 0.1).unwrap().rho_i, 1.6);
    }

    #[test]
    fn profile_validation() {
        assert!(DisturbanceProfile::new(vec![], 1.0).is_err());
        assert!(DisturbanceProfile::new(vec![(0.1, 1.5)], 1.0).is_err());
        assert!(DisturbanceProfile::new(vec![(0.0, 1.5), (0.0, 1.6)], 1.0).is_err());
        assert!(DisturbanceProfile::new(vec![(0.0, 2.5)], 1.0).is_err());
        assert!(DisturbanceProfile::new(vec![(0.0, 1.5), (2.0, 1.6)], 1.0).is_err());
    }

    #[test]
    fn canonical_profile_shape() {
        let p = DisturbanceProfile::canonical(2021);
        assert_eq!(p.duration(), 6.0);
        let values: Vec<f64> = p.knots().iter().map(|k| k.1).collect();
        assert_eq!(values.iter().cloned().fold(f64::MIN, f64::max), 1.74);
        assert_eq!(values.iter().cloned().fold(f64::MAX, f64::min), 1.35);
        for &(t, v) in p.knots() {
            let in_dip = (2.6..3.2).contains(&t);
            assert_eq!(v < 1.4, in_dip, "knot ({t}, {v})");
        }
        for pair in p.knots().windows(2) {
            let gap = pair[1].0 - pair[0].0;
            assert!((0.2 - 1e-9..=0.5 + 1e-9).contains(&gap), "gap {gap}");
        }
        assert_eq!(sample_disturbance(&p, 2.61).unwrap().rho_i, 1.35);
        assert!(sample_disturbance(&p, 3.0).unwrap().rho_i < 1.4);
        assert!(sample_disturbance(&p, 3.2).unwrap().rho_i >= 1.4);
        assert_eq!(p, DisturbanceProfile::canonical(2021));
        assert_ne!(p, DisturbanceProfile::canonical(7));
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = DisturbanceProfile::canonical(11);
        let back = DisturbanceProfile::from_csv(&p.to_csv(), p.duration()).unwrap();
        assert_eq!(back, p);
        assert!(DisturbanceProfile::from_csv("time_hours,rho_i\n0.0,abc\n", 1.0).is_err());
    }
}
