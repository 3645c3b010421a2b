use nalgebra::{DVector, Vector2, Vector4};

use super::qp::solve_box_qp;
use super::{ControlError, Controller, ControllerId, ControllerIo};
use crate::numerics::{self, Matrix};
use crate::plant::{
    linearize, ControlInput, DiscreteModel, OperatingPoint, PlantState, QI_BOUNDS, QW_BOUNDS, RATE_LIMIT,
    RHO_BOUNDS, V_BOUNDS,
};

/// Process-noise covariance on the input-disturbance states.
pub const OBSERVER_QW: f64 = 1.0;
/// Measurement-noise covariance.
pub const OBSERVER_RN: f64 = 1e-5;

/// Volume used in the density equation of the nonlinear prediction model
/// once the predicted volume drops below it. Keeps rollouts through
/// infeasible regions finite; such rollouts are heavily penalized anyway.
const PREDICTION_VOLUME_FLOOR: f64 = V_BOUNDS.0;

const RELATIVE_FD_STEP: f64 = 1e-6;
const LINE_SEARCH_ARMIJO: f64 = 1e-4;
const COST_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionModel {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Prediction horizon, samples.
    pub np: usize,
    /// Number of free moves.
    pub nc: usize,
    /// Samples each move is held for.
    pub nb: usize,
    /// Diagonal of the output weight.
    pub q: [f64; 2],
    /// Diagonal of the move weight.
    pub r: [f64; 2],
    /// Diagonal of the slack weight.
    pub psi: [f64; 2],
    pub u_min: ControlInput,
    pub u_max: ControlInput,
    /// Largest change of each input per sample.
    pub rate_limit: Option<f64>,
    pub y_min: PlantState,
    pub y_max: PlantState,
    pub model: PredictionModel,
    pub dt: f64,
    pub max_iterations: usize,
}

impl MpcConfig {
    pub fn default_for(model: PredictionModel, dt: f64) -> Self {
        Self {
            np: 50,
            nc: 5,
            nb: 1,
            q: [1e-3, 1.0],
            r: [0.5e-7, 0.5e-7],
            psi: [1e7, 1e7],
            u_min: ControlInput::new(QI_BOUNDS.0, QW_BOUNDS.0),
            u_max: ControlInput::new(QI_BOUNDS.1, QW_BOUNDS.1),
            rate_limit: Some(RATE_LIMIT),
            y_min: PlantState::new(V_BOUNDS.0, RHO_BOUNDS.0),
            y_max: PlantState::new(V_BOUNDS.1, RHO_BOUNDS.1),
            model,
            dt,
            max_iterations: 100,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let fail = |m: String| Err(ControlError::InvalidConfig(m));
        if self.nc == 0 || self.nb == 0 || self.np == 0 {
            return fail(format!("horizons must be positive (Np={}, Nc={}, Nb={})", self.np, self.nc, self.nb));
        }
        if self.np < self.nc * self.nb {
            return fail(format!("Np={} is shorter than Nc·Nb={}", self.np, self.nc * self.nb));
        }
        for (name, w) in [("Q", self.q), ("R", self.r), ("Psi", self.psi)] {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return fail(format!("{name} must be finite and nonnegative, got {w:?}"));
            }
        }
        if !(self.u_min.q_i <= self.u_max.q_i && self.u_min.q_w <= self.u_max.q_w) {
            return fail("input box is empty".into());
        }
        if !(self.y_min.v <= self.y_max.v && self.y_min.rho <= self.y_max.rho) {
            return fail("output bounds are inverted".into());
        }
        if let Some(rate) = self.rate_limit {
            if !(rate > 0.0) {
                return fail(format!("rate limit must be positive, got {rate}"));
            }
        }
        if !(self.dt > 0.0) {
            return fail(format!("sample time must be positive, got {}", self.dt));
        }
        if self.max_iterations == 0 {
            return fail("iteration cap must be positive".into());
        }
        Ok(())
    }

    fn move_index(&self, step: usize) -> usize {
        (step / self.nb).min(self.nc - 1)
    }
}

/// One-step model used by both the rollouts and the observer, in deviation
/// variables around the operating point.
#[derive(Debug, Clone)]
struct Predictor {
    kind: PredictionModel,
    op: OperatingPoint,
    disc: DiscreteModel,
}

impl Predictor {
    fn new(kind: PredictionModel, op: OperatingPoint, dt: f64) -> Result<Self, ControlError> {
        let disc = linearize(&op)?.discretize(dt)?;
        Ok(Self { kind, op, disc })
    }

    /// Next deviation state given the total input deviation (move plus
    /// disturbance estimate).
    fn advance(&self, x: &Vector2<f64>, u: &Vector2<f64>) -> Result<Vector2<f64>, ControlError> {
        match self.kind {
            PredictionModel::Linear => {
                let phi = self.disc.phi.fixed_view::<2, 2>(0, 0);
                let gamma = self.disc.gamma.fixed_view::<2, 2>(0, 0);
                Ok(phi * x + gamma * u)
            }
            PredictionModel::Nonlinear => {
                let xs = self.op.state.to_vector();
                let us = self.op.input.to_vector() + u;
                let (q_i, q_w) = (us[0], us[1]);
                let q_o = self.op.q_o;
                let rho_i = self.op.disturbance.rho_i;
                let f = |s: &Vector2<f64>| {
                    let inflow = q_i + q_w;
                    Vector2::new(
                        inflow - q_o,
                        (rho_i * q_i + q_w - s[1] * inflow) / s[0].max(PREDICTION_VOLUME_FLOOR),
                    )
                };
                let next = numerics::rk4_step(f, &(xs + x), self.disc.dt)?;
                Ok(next - xs)
            }
        }
    }

    fn output(&self, x: &Vector2<f64>) -> Vector2<f64> {
        match self.kind {
            PredictionModel::Linear => self.disc.c.fixed_view::<2, 2>(0, 0) * x,
            PredictionModel::Nonlinear => *x,
        }
    }
}

/// Corrected estimate of the augmented state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    /// Plant state estimate, deviation from the operating point.
    pub x_hat: Vector2<f64>,
    /// Input-disturbance estimate, flow units.
    pub v_hat: Vector2<f64>,
}

/// Constant-gain estimator of the plant state augmented with input
/// disturbances: predict with the controller's model, correct with `L`.
#[derive(Debug, Clone)]
pub struct DisturbanceObserver {
    gain: Matrix,
    predictor: Predictor,
    predicted: Option<Vector4<f64>>,
    corrected: Option<Vector4<f64>>,
}

impl DisturbanceObserver {
    fn new(predictor: Predictor) -> Result<Self, ControlError> {
        let (phi_aug, _, c_aug) = augmented(&predictor.disc);
        let h = Matrix::from_fn(4, 2, |i, j| if i == j + 2 { 1.0 } else { 0.0 });
        let qw = &h * Matrix::identity(2, 2) * OBSERVER_QW * h.transpose();
        let rn = Matrix::identity(2, 2) * OBSERVER_RN;
        let gain = numerics::kalman_gain(&phi_aug, &c_aug, &qw, &rn)?;
        Ok(Self::with_gain(predictor, gain))
    }

    fn with_gain(predictor: Predictor, gain: Matrix) -> Self {
        Self {
            gain,
            predictor,
            predicted: None,
            corrected: None,
        }
    }

    /// Observer for the linear augmented model with an explicit gain.
    pub fn linear_with_gain(op: OperatingPoint, dt: f64, gain: Matrix) -> Result<Self, ControlError> {
        if gain.shape() != (4, 2) {
            return Err(ControlError::Dimension(format!("L is {}x{}, expected 4x2", gain.nrows(), gain.ncols())));
        }
        Ok(Self::with_gain(Predictor::new(PredictionModel::Linear, op, dt)?, gain))
    }

    pub fn linear(op: OperatingPoint, dt: f64) -> Result<Self, ControlError> {
        Self::new(Predictor::new(PredictionModel::Linear, op, dt)?)
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    /// Augmented `(Φ̃, Γ̃, C̃)` of the linear model.
    pub fn augmented_model(&self) -> (Matrix, Matrix, Matrix) {
        augmented(&self.predictor.disc)
    }

    pub fn estimate(&self) -> Option<ObserverState> {
        self.corrected.map(split)
    }

    pub fn prediction(&self) -> Option<ObserverState> {
        self.predicted.map(split)
    }

    /// Seed the prediction; the first measurement otherwise seeds it with
    /// zero disturbance.
    pub fn set_prediction(&mut self, s: ObserverState) {
        self.predicted = Some(Vector4::new(s.x_hat[0], s.x_hat[1], s.v_hat[0], s.v_hat[1]));
        self.corrected = None;
    }

    /// Corrector: `x̂ = x̂* + L (y − C̃ x̂*)`. Measurements are deviations.
    pub fn correct(&mut self, y: &Vector2<f64>) -> ObserverState {
        let pred = self
            .predicted
            .unwrap_or_else(|| Vector4::new(y[0], y[1], 0.0, 0.0));
        let x = Vector2::new(pred[0], pred[1]);
        let innovation = y - self.predictor.output(&x);
        let l = self.gain.fixed_view::<4, 2>(0, 0);
        let corrected = pred + l * innovation;
        self.corrected = Some(corrected);
        split(corrected)
    }

    /// Predictor: `x̂*(k+1)` from the corrected estimate and the input
    /// deviation applied at `k`.
    pub fn predict(&mut self, u: &Vector2<f64>) -> Result<ObserverState, ControlError> {
        let Some(c) = self.corrected else {
            return Err(ControlError::InvalidConfig("observer predicted before any correction".into()));
        };
        let s = split(c);
        let x = self.predictor.advance(&s.x_hat, &(u + s.v_hat))?;
        let next = Vector4::new(x[0], x[1], s.v_hat[0], s.v_hat[1]);
        self.predicted = Some(next);
        Ok(split(next))
    }

    /// One full sample: correct with `y(k)`, then predict with `u(k)`.
    pub fn update(&mut self, y: &Vector2<f64>, u: &Vector2<f64>) -> Result<ObserverState, ControlError> {
        let s = self.correct(y);
        self.predict(u)?;
        Ok(s)
    }

    /// Controller-side use: close out the previous sample with the input
    /// actually applied, then correct with the new measurement.
    /// The very first measurement is taken as a steady state: the
    /// disturbance estimate starts at whatever holds `y` still under `u_prev`.
    fn track(&mut self, y: &Vector2<f64>, u_prev: &Vector2<f64>) -> Result<ObserverState, ControlError> {
        if self.corrected.is_some() {
            self.predict(u_prev)?;
        } else if self.predicted.is_none() {
            self.set_prediction(ObserverState {
                x_hat: *y,
                v_hat: self.steady_disturbance(y, u_prev),
            });
        }
        Ok(self.correct(y))
    }

    /// `v` with `x = Φx + Γ(u + v)`, least squares when `Γ` is singular.
    fn steady_disturbance(&self, x: &Vector2<f64>, u: &Vector2<f64>) -> Vector2<f64> {
        let d = &self.predictor.disc;
        let x = DVector::from_column_slice(x.as_slice());
        let drift = (Matrix::identity(2, 2) - &d.phi) * x;
        let v = numerics::pseudoinverse(&d.gamma) * drift;
        Vector2::new(v[0], v[1]) - u
    }

    pub fn reset(&mut self) {
        self.predicted = None;
        self.corrected = None;
    }
}

fn split(v: Vector4<f64>) -> ObserverState {
    ObserverState {
        x_hat: Vector2::new(v[0], v[1]),
        v_hat: Vector2::new(v[2], v[3]),
    }
}

fn augmented(disc: &DiscreteModel) -> (Matrix, Matrix, Matrix) {
    let mut phi = Matrix::zeros(4, 4);
    phi.view_mut((0, 0), (2, 2)).copy_from(&disc.phi);
    phi.view_mut((0, 2), (2, 2)).copy_from(&disc.gamma);
    phi.view_mut((2, 2), (2, 2)).fill_with_identity();
    let mut gamma = Matrix::zeros(4, 2);
    gamma.view_mut((0, 0), (2, 2)).copy_from(&disc.gamma);
    let mut c = Matrix::zeros(2, 4);
    c.view_mut((0, 0), (2, 2)).copy_from(&disc.c);
    (phi, gamma, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Optimal free moves; the first is applied.
    pub moves: Vec<ControlInput>,
    /// Eliminated slack, the largest predicted bound violation per output.
    pub slack: [f64; 2],
    pub objective: f64,
    pub iterations: usize,
}

impl MpcSolution {
    pub fn first(&self) -> ControlInput {
        self.moves[0]
    }
}

/// One instance of the finite-horizon problem.
struct Problem<'a> {
    cfg: &'a MpcConfig,
    predictor: &'a Predictor,
    x0: Vector2<f64>,
    v_hat: Vector2<f64>,
    r: Vector2<f64>,
    u_prev: Vector2<f64>,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        2 * self.cfg.nc
    }

    fn bounds(&self) -> Result<(DVector<f64>, DVector<f64>), ControlError> {
        let n = self.n();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        let umin = self.cfg.u_min.to_vector();
        let umax = self.cfg.u_max.to_vector();
        for i in 0..self.cfg.nc {
            for c in 0..2 {
                let (mut l, mut h) = (umin[c], umax[c]);
                if let Some(rate) = self.cfg.rate_limit {
                    let reach = rate * (i + 1) as f64;
                    l = l.max(self.u_prev[c] - reach);
                    h = h.min(self.u_prev[c] + reach);
                }
                lo[2 * i + c] = l;
                hi[2 * i + c] = h;
            }
            if lo[2 * i] > hi[2 * i] || lo[2 * i + 1] > hi[2 * i + 1] {
                return Err(ControlError::InfeasibleBox {
                    index: i,
                    lower: [lo[2 * i], lo[2 * i + 1]],
                    upper: [hi[2 * i], hi[2 * i + 1]],
                });
            }
        }
        Ok((lo, hi))
    }

    /// Absolute predicted outputs `ŷ(1..Np)`.
    fn outputs(&self, z: &DVector<f64>) -> Result<Vec<Vector2<f64>>, ControlError> {
        let xs = self.predictor.op.state.to_vector();
        let us = self.predictor.op.input.to_vector();
        let mut x = self.x0 - xs;
        let mut ys = Vec::with_capacity(self.cfg.np);
        for j in 0..self.cfg.np {
            let m = self.cfg.move_index(j);
            let u = Vector2::new(z[2 * m], z[2 * m + 1]) - us + self.v_hat;
            x = self.predictor.advance(&x, &u)?;
            ys.push(xs + self.predictor.output(&x));
        }
        Ok(ys)
    }

    fn moves(&self, z: &DVector<f64>) -> Vec<Vector2<f64>> {
        (0..self.cfg.nc)
            .map(|i| {
                let prev = if i == 0 {
                    self.u_prev
                } else {
                    Vector2::new(z[2 * i - 2], z[2 * i - 1])
                };
                Vector2::new(z[2 * i], z[2 * i + 1]) - prev
            })
            .collect()
    }

    /// Largest violation per output and the sample where it occurs.
    fn violations(&self, ys: &[Vector2<f64>]) -> [(f64, usize, f64); 2] {
        let lo = self.cfg.y_min.to_vector();
        let hi = self.cfg.y_max.to_vector();
        let mut out = [(0.0, 0, 0.0); 2];
        for (o, slot) in out.iter_mut().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                let below = lo[o] - y[o];
                let above = y[o] - hi[o];
                if below > slot.0 {
                    *slot = (below, j, -1.0);
                }
                if above > slot.0 {
                    *slot = (above, j, 1.0);
                }
            }
        }
        out
    }

    fn cost_of(&self, z: &DVector<f64>, ys: &[Vector2<f64>]) -> f64 {
        let mut cost = 0.0;
        for y in ys {
            let e = self.r - y;
            cost += self.cfg.q[0] * e[0] * e[0] + self.cfg.q[1] * e[1] * e[1];
        }
        for du in self.moves(z) {
            cost += self.cfg.r[0] * du[0] * du[0] + self.cfg.r[1] * du[1] * du[1];
        }
        for (o, (delta, _, _)) in self.violations(ys).iter().enumerate() {
            cost += self.cfg.psi[o] * delta * delta;
        }
        cost
    }

    fn cost(&self, z: &DVector<f64>) -> Result<f64, ControlError> {
        let ys = self.outputs(z)?;
        Ok(self.cost_of(z, &ys))
    }

    /// `∂ŷ/∂z`, rows ordered `(ŷ1_v, ŷ1_ρ, ŷ2_v, ...)`.
    fn jacobian(&self, z: &DVector<f64>) -> Result<Matrix, ControlError> {
        let n = self.n();
        let mut jac = Matrix::zeros(2 * self.cfg.np, n);
        match self.predictor.kind {
            PredictionModel::Linear => {
                let phi = &self.predictor.disc.phi;
                let gamma = &self.predictor.disc.gamma;
                let c = &self.predictor.disc.c;
                let mut sens = Matrix::zeros(2, n);
                for j in 0..self.cfg.np {
                    sens = phi * &sens;
                    let m = self.cfg.move_index(j);
                    let mut block = sens.columns_mut(2 * m, 2);
                    block += gamma;
                    jac.rows_mut(2 * j, 2).copy_from(&(c * &sens));
                }
            }
            PredictionModel::Nonlinear => {
                for k in 0..n {
                    let h = RELATIVE_FD_STEP * z[k].abs().max(1.0);
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[k] += h;
                    zm[k] -= h;
                    let yp = self.outputs(&zp)?;
                    let ym = self.outputs(&zm)?;
                    for j in 0..self.cfg.np {
                        let d = (yp[j] - ym[j]) / (2.0 * h);
                        jac[(2 * j, k)] = d[0];
                        jac[(2 * j + 1, k)] = d[1];
                    }
                }
            }
        }
        Ok(jac)
    }

    /// Gauss–Newton gradient and Hessian of the cost at `z`.
    fn local_model(&self, z: &DVector<f64>, ys: &[Vector2<f64>]) -> Result<(DVector<f64>, Matrix), ControlError> {
        let n = self.n();
        let jac = self.jacobian(z)?;
        let mut g = DVector::zeros(n);
        let mut h = Matrix::zeros(n, n);
        for (j, y) in ys.iter().enumerate() {
            let e = self.r - y;
            for o in 0..2 {
                let row = jac.row(2 * j + o).transpose();
                g -= &row * (2.0 * self.cfg.q[o] * e[o]);
                h += &row * row.transpose() * (2.0 * self.cfg.q[o]);
            }
        }
        for (i, du) in self.moves(z).iter().enumerate() {
            for c in 0..2 {
                let w = 2.0 * self.cfg.r[c];
                let a = 2 * i + c;
                g[a] += w * du[c];
                h[(a, a)] += w;
                if i > 0 {
                    let b = a - 2;
                    g[b] -= w * du[c];
                    h[(b, b)] += w;
                    h[(a, b)] -= w;
                    h[(b, a)] -= w;
                }
            }
        }
        for (o, (delta, j, sign)) in self.violations(ys).iter().enumerate() {
            if *delta > 0.0 {
                let row = jac.row(2 * j + o).transpose() * *sign;
                g += &row * (2.0 * self.cfg.psi[o] * delta);
                h += &row * row.transpose() * (2.0 * self.cfg.psi[o]);
            }
        }
        Ok((g, h))
    }

    fn solve(&self, start: DVector<f64>) -> Result<MpcSolution, ControlError> {
        let (lo, hi) = self.bounds()?;
        let mut z = DVector::from_fn(start.len(), |i, _| start[i].clamp(lo[i], hi[i]));
        let mut ys = self.outputs(&z)?;
        let mut cost = self.cost_of(&z, &ys);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.cfg.max_iterations {
            iterations += 1;
            let (g, h) = self.local_model(&z, &ys)?;
            let d = solve_box_qp(&h, &g, &(&lo - &z), &(&hi - &z));
            let slope = g.dot(&d);
            let predicted = slope + 0.5 * d.dot(&(&h * &d));
            if predicted >= -1e-12 * cost.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-10 {
                let trial = &z + &d * alpha;
                let trial_ys = self.outputs(&trial)?;
                let trial_cost = self.cost_of(&trial, &trial_ys);
                if trial_cost <= cost + LINE_SEARCH_ARMIJO * alpha * slope {
                    accepted = Some((trial, trial_ys, trial_cost));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((next, next_ys, next_cost)) = accepted else {
                // no descent left along the model step: stationary up to
                // rounding
                converged = true;
                break;
            };
            let decrease = cost - next_cost;
            let moved = (&next - &z).amax();
            z = next;
            ys = next_ys;
            cost = next_cost;
            if decrease <= COST_TOLERANCE * cost.max(f64::MIN_POSITIVE) || moved <= 1e-9 * (1.0 + z.amax()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(ControlError::NotConverged { iterations });
        }
        let slack = self.violations(&ys).map(|(d, _, _)| d);
        Ok(MpcSolution {
            moves: (0..self.cfg.nc).map(|i| ControlInput::new(z[2 * i], z[2 * i + 1])).collect(),
            slack,
            objective: cost,
            iterations,
        })
    }

    /// Objective for an explicit move sequence, for oracles and reports.
    fn evaluate(&self, moves: &[ControlInput]) -> Result<f64, ControlError> {
        let z = DVector::from_iterator(self.n(), moves.iter().flat_map(|u| [u.q_i, u.q_w]));
        self.cost(&z)
    }
}

fn start_vector(nc: usize, u_prev: ControlInput, warm: Option<&[ControlInput]>) -> DVector<f64> {
    let mut z = DVector::zeros(2 * nc);
    for i in 0..nc {
        let u = match warm {
            Some(w) if !w.is_empty() => w[(i + 1).min(w.len() - 1)],
            _ => u_prev,
        };
        z[2 * i] = u.q_i;
        z[2 * i + 1] = u.q_w;
    }
    z
}

/// Solve one MPC problem from the absolute state estimate `x0` with
/// input-disturbance estimate `v_hat` added to every predicted input.
pub fn mpc_solve(
    cfg: &MpcConfig,
    op: &OperatingPoint,
    x0: PlantState,
    v_hat: Vector2<f64>,
    r: PlantState,
    u_prev: ControlInput,
) -> Result<MpcSolution, ControlError> {
    cfg.validate()?;
    let predictor = Predictor::new(cfg.model, *op, cfg.dt)?;
    let problem = Problem {
        cfg,
        predictor: &predictor,
        x0: x0.to_vector(),
        v_hat,
        r: r.to_vector(),
        u_prev: u_prev.to_vector(),
    };
    problem.solve(start_vector(cfg.nc, u_prev, None))
}

/// Objective of a given move sequence under the same problem data as
/// [`mpc_solve`].
pub fn mpc_objective(
    cfg: &MpcConfig,
    op: &OperatingPoint,
    x0: PlantState,
    v_hat: Vector2<f64>,
    r: PlantState,
    u_prev: ControlInput,
    moves: &[ControlInput],
) -> Result<f64, ControlError> {
    cfg.validate()?;
    if moves.len() != cfg.nc {
        return Err(ControlError::Dimension(format!("{} moves for Nc = {}", moves.len(), cfg.nc)));
    }
    let predictor = Predictor::new(cfg.model, *op, cfg.dt)?;
    Problem {
        cfg,
        predictor: &predictor,
        x0: x0.to_vector(),
        v_hat,
        r: r.to_vector(),
        u_prev: u_prev.to_vector(),
    }
    .evaluate(moves)
}

/// Receding-horizon controller with an offset-free disturbance observer.
#[derive(Debug, Clone)]
pub struct MpcController {
    id: ControllerId,
    config: MpcConfig,
    predictor: Predictor,
    observer: DisturbanceObserver,
    warm: Option<Vec<ControlInput>>,
    last: Option<MpcSolution>,
}

impl MpcController {
    pub fn new(id: ControllerId, config: MpcConfig, op: OperatingPoint) -> Result<Self, ControlError> {
        config.validate()?;
        let predictor = Predictor::new(config.model, op, config.dt)?;
        let linear = Predictor::new(PredictionModel::Linear, op, config.dt)?;
        let gain = DisturbanceObserver::new(linear)?.gain;
        Ok(Self {
            id,
            observer: DisturbanceObserver::with_gain(predictor.clone(), gain),
            predictor,
            config,
            warm: None,
            last: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn observer(&self) -> &DisturbanceObserver {
        &self.observer
    }

    pub fn last_solution(&self) -> Option<&MpcSolution> {
        self.last.as_ref()
    }

    fn deviations(&self, io: &ControllerIo) -> (Vector2<f64>, Vector2<f64>) {
        (
            io.y.to_vector() - self.predictor.op.state.to_vector(),
            io.u_applied_prev.to_vector() - self.predictor.op.input.to_vector(),
        )
    }

    fn check_dt(&self, io: &ControllerIo) -> Result<(), ControlError> {
        if (io.dt - self.config.dt).abs() > 1e-12 * self.config.dt {
            return Err(ControlError::SampleTimeMismatch {
                expected: self.config.dt,
                got: io.dt,
            });
        }
        Ok(())
    }
}

impl Controller for MpcController {
    fn id(&self) -> ControllerId {
        self.id
    }

    fn step(&mut self, io: &ControllerIo) -> Result<ControlInput, ControlError> {
        self.check_dt(io)?;
        let (y, u_prev) = self.deviations(io);
        let est = self.observer.track(&y, &u_prev)?;
        let problem = Problem {
            cfg: &self.config,
            predictor: &self.predictor,
            x0: self.predictor.op.state.to_vector() + est.x_hat,
            v_hat: est.v_hat,
            r: io.r.to_vector(),
            u_prev: io.u_applied_prev.to_vector(),
        };
        let start = start_vector(self.config.nc, io.u_applied_prev, self.warm.as_deref());
        let solution = problem.solve(start)?;
        let u = solution.first();
        self.warm = Some(solution.moves.clone());
        self.last = Some(solution);
        Ok(u)
    }

    fn observe(&mut self, io: &ControllerIo) -> Result<(), ControlError> {
        self.check_dt(io)?;
        let (y, u_prev) = self.deviations(io);
        self.observer.track(&y, &u_prev)?;
        Ok(())
    }

    fn back_initialize(&mut self, _io: &ControllerIo) {
        self.warm = None;
    }

    fn reset(&mut self) {
        self.observer.reset();
        self.warm = None;
        self.last = None;
    }
}
