use nalgebra::{DVector, Vector2};

use super::{ControlError, Controller, ControllerId, ControllerIo};
use crate::numerics::{self, Matrix};
use crate::plant::{ControlInput, LinearModel, OperatingPoint, NOMINAL_Q_O};
use crate::rational::{Rational, RationalTransferMatrix};

/// Desired closed-loop time constant for the PI rules, hours.
pub const CLOSED_LOOP_TIME_CONSTANT: f64 = 0.05;
/// Gain `k` of the inverse-based design.
pub const INVERSE_GAIN: f64 = 100.0;
/// Zeros of the integral terms added to the proportional volume elements.
pub const INVERSE_ADDED_ZEROS: [f64; 2] = [41.3, 165.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessModel {
    /// `k / (τ s + 1)`
    FirstOrder { k: f64, tau: f64 },
    /// `k / s`
    Integrator { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiParameters {
    pub kc: f64,
    pub tau_i: f64,
}

impl PiParameters {
    pub fn integral_gain(&self) -> f64 {
        self.kc / self.tau_i
    }

    /// `Kc (s + 1/τi) / s`
    pub fn transfer(&self) -> Rational {
        Rational::constant(self.kc).add(&Rational::integrator(self.integral_gain()))
    }
}

pub fn pi_from_rules(model: ProcessModel, t_r: f64) -> Result<PiParameters, ControlError> {
    if !(t_r > 0.0) {
        return Err(ControlError::NonPositiveTimeConstant(t_r));
    }
    match model {
        ProcessModel::FirstOrder { k, .. } | ProcessModel::Integrator { k } if k == 0.0 => {
            Err(ControlError::ZeroProcessGain)
        }
        ProcessModel::FirstOrder { k, tau } => Ok(PiParameters {
            kc: 3.0 * tau / (k * t_r),
            tau_i: tau,
        }),
        ProcessModel::Integrator { k } => Ok(PiParameters {
            kc: 4.2 / (k * t_r),
            tau_i: 0.4 * t_r,
        }),
    }
}

/// Read a scalar element `k/s` or `b/(s + a)` as a tuning-rule model.
pub fn process_model_of(g: &Rational) -> Option<ProcessModel> {
    let num = g.num().coeffs();
    let den = g.den().coeffs();
    if num.len() != 1 || g.is_zero() {
        return None;
    }
    match den {
        [a0, a1] if *a0 == 0.0 => Some(ProcessModel::Integrator { k: num[0] / a1 }),
        [a0, a1] if *a0 != 0.0 => Some(ProcessModel::FirstOrder {
            k: num[0] / a0,
            tau: a1 / a0,
        }),
        _ => None,
    }
}

/// `(k/s) Gp⁻¹`, the controller giving the loop `(k/s) I`.
pub fn derive_inverse_controller(gp: &RationalTransferMatrix, k: f64) -> Result<RationalTransferMatrix, ControlError> {
    let inv = gp.inverse_2x2()?;
    Ok(inv.scale(&Rational::integrator(k)))
}

/// Proportional and integral gain matrices of the modified inverse
/// controller: the inverse design with integral action added to its purely
/// proportional elements, placing the zero of row `i` at `zeros[i]`.
pub fn modified_inverse_gains(
    gp: &RationalTransferMatrix,
    k: f64,
    zeros: [f64; 2],
) -> Result<(Matrix, Matrix), ControlError> {
    let gc = derive_inverse_controller(gp, k)?;
    let mut d = Matrix::zeros(2, 2);
    let mut ki = Matrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let (b1, b0) = gc
                .get(i, j)
                .as_pi()
                .ok_or_else(|| ControlError::Dimension(format!("element ({i},{j}) is not of PI form")))?;
            d[(i, j)] = b1;
            ki[(i, j)] = if b0.abs() <= 1e-9 * b1.abs() { b1 * zeros[i] } else { b0 };
        }
    }
    Ok((d, ki))
}

/// What the controller does when its own command leaves the actuator range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SaturationRule {
    None,
    /// Commanded `q_i` above the cap: apply `(cap, 0)` and hold the
    /// integrators for that sample.
    InflowCap { q_i_max: f64 },
}

/// Discrete state-space controller in deviation variables,
/// `u = C x + D e`, `x(k+1) = Φ x + Γ e`, around a nominal input.
#[derive(Debug, Clone)]
pub struct LinearFeedbackController {
    id: ControllerId,
    phi_c: Matrix,
    gamma_c: Matrix,
    c_c: Matrix,
    d_c: Matrix,
    c_pinv: Matrix,
    x_c: DVector<f64>,
    nominal: ControlInput,
    saturation: SaturationRule,
    saturated: bool,
    dt: f64,
}

impl LinearFeedbackController {
    /// ZOH-discretize the continuous controller `(A_c, B_c, C_c, D_c)`.
    pub fn from_state_space(
        a_c: &Matrix,
        b_c: &Matrix,
        c_c: &Matrix,
        d_c: &Matrix,
        dt: f64,
        nominal: ControlInput,
    ) -> Result<Self, ControlError> {
        let n = a_c.nrows();
        if b_c.nrows() != n || c_c.ncols() != n || c_c.nrows() != 2 || d_c.shape() != (2, 2) || b_c.ncols() != 2 {
            return Err(ControlError::Dimension(format!(
                "A_c {}x{}, B_c {}x{}, C_c {}x{}, D_c {}x{}",
                a_c.nrows(),
                a_c.ncols(),
                b_c.nrows(),
                b_c.ncols(),
                c_c.nrows(),
                c_c.ncols(),
                d_c.nrows(),
                d_c.ncols()
            )));
        }
        let (phi_c, gamma_c) = numerics::discretize_zoh(a_c, b_c, dt)?;
        Ok(Self {
            id: ControllerId::LOCAL_PI,
            phi_c,
            gamma_c,
            c_pinv: numerics::pseudoinverse(c_c),
            c_c: c_c.clone(),
            d_c: d_c.clone(),
            x_c: DVector::zeros(n),
            nominal,
            saturation: SaturationRule::None,
            saturated: false,
            dt,
        })
    }

    /// Matrix PI controller `D_c + K_i / s` with one integrator per error
    /// channel.
    pub fn realize_pi_matrix(d_c: &Matrix, k_i: &Matrix, dt: f64, nominal: ControlInput) -> Result<Self, ControlError> {
        if k_i.shape() != (2, 2) {
            return Err(ControlError::Dimension(format!("K_i is {}x{}", k_i.nrows(), k_i.ncols())));
        }
        Self::from_state_space(&Matrix::zeros(2, 2), &Matrix::identity(2, 2), k_i, d_c, dt, nominal)
    }

    pub fn with_id(mut self, id: ControllerId) -> Self {
        self.id = id;
        self
    }

    pub fn with_saturation(mut self, rule: SaturationRule) -> Self {
        self.saturation = rule;
        self
    }

    pub fn phi_c(&self) -> &Matrix {
        &self.phi_c
    }

    pub fn gamma_c(&self) -> &Matrix {
        &self.gamma_c
    }

    pub fn c_c(&self) -> &Matrix {
        &self.c_c
    }

    pub fn d_c(&self) -> &Matrix {
        &self.d_c
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x_c
    }

    pub fn nominal(&self) -> ControlInput {
        self.nominal
    }

    /// Whether the last computed control hit the saturation rule.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    fn output(&self, e: &Vector2<f64>) -> Vector2<f64> {
        let du = &self.c_c * &self.x_c + &self.d_c * e;
        self.nominal.to_vector() + Vector2::new(du[0], du[1])
    }

    /// Absolute input for error `e`, advancing the internal state.
    pub fn compute_control(&mut self, e: &Vector2<f64>) -> ControlInput {
        let u = self.output(e);
        let mut cmd = ControlInput::from_vector(&u);
        self.saturated = match self.saturation {
            SaturationRule::InflowCap { q_i_max } if cmd.q_i > q_i_max => {
                cmd = ControlInput::new(q_i_max, 0.0);
                true
            }
            _ => false,
        };
        let mut next = &self.phi_c * &self.x_c;
        if !self.saturated {
            next += &self.gamma_c * e;
        }
        self.x_c = next;
        cmd
    }

    /// Set the state so the next `compute_control(e_now)` returns `u_prev`.
    pub fn back_initialize(&mut self, u_prev: ControlInput, e_now: &Vector2<f64>) {
        let target = DVector::from_column_slice((u_prev.to_vector() - self.nominal.to_vector()).as_slice())
            - &self.d_c * DVector::from_column_slice(e_now.as_slice());
        self.x_c = &self.c_pinv * &target;
        // one refinement pass against cancellation in D e
        let residual = &target - &self.c_c * &self.x_c;
        self.x_c += &self.c_pinv * residual;
    }

    pub fn reset_state(&mut self) {
        self.x_c.fill(0.0);
        self.saturated = false;
    }
}

impl Controller for LinearFeedbackController {
    fn id(&self) -> ControllerId {
        self.id
    }

    fn step(&mut self, io: &ControllerIo) -> Result<ControlInput, ControlError> {
        if (io.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(ControlError::SampleTimeMismatch {
                expected: self.dt,
                got: io.dt,
            });
        }
        Ok(self.compute_control(&io.error()))
    }

    fn back_initialize(&mut self, io: &ControllerIo) {
        LinearFeedbackController::back_initialize(self, io.u_applied_prev, &io.error());
    }

    fn reset(&mut self) {
        self.reset_state();
    }
}

fn canonical_plant() -> Result<RationalTransferMatrix, ControlError> {
    let m = LinearModel::canonical();
    Ok(RationalTransferMatrix::from_state_space(&m.a, &m.b, &m.c)?)
}

fn inflow_cap() -> SaturationRule {
    SaturationRule::InflowCap { q_i_max: NOMINAL_Q_O }
}

/// Decoupled PI pair tuned from the diagonal plant elements: volume loop on
/// `q_i`, density loop on `q_w`.
pub fn local_pi_controller(dt: f64) -> Result<LinearFeedbackController, ControlError> {
    let gp = canonical_plant()?;
    let mut d = Matrix::zeros(2, 2);
    let mut ki = Matrix::zeros(2, 2);
    for i in 0..2 {
        let model = process_model_of(gp.get(i, i))
            .ok_or_else(|| ControlError::Dimension(format!("diagonal element {i} has no tuning-rule form")))?;
        let pi = pi_from_rules(model, CLOSED_LOOP_TIME_CONSTANT)?;
        d[(i, i)] = pi.kc;
        ki[(i, i)] = pi.integral_gain();
    }
    Ok(
        LinearFeedbackController::realize_pi_matrix(&d, &ki, dt, OperatingPoint::canonical().input)?
            .with_id(ControllerId::LOCAL_PI)
            .with_saturation(inflow_cap()),
    )
}

pub fn modified_inverse_controller(dt: f64) -> Result<LinearFeedbackController, ControlError> {
    let (d, ki) = modified_inverse_gains(&canonical_plant()?, INVERSE_GAIN, INVERSE_ADDED_ZEROS)?;
    Ok(
        LinearFeedbackController::realize_pi_matrix(&d, &ki, dt, OperatingPoint::canonical().input)?
            .with_id(ControllerId::INVERSE)
            .with_saturation(inflow_cap()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, Complex};

    const DT: f64 = 0.002;

    fn nominal() -> ControlInput {
        ControlInput::new(600.0, 150.0)
    }

    #[test]
    fn pi_rules() {
        let p = pi_from_rules(ProcessModel::Integrator { k: 1.0 }, 0.05).unwrap();
        assert_relative_eq!(p.kc, 84.0, epsilon = 1e-12);
        assert_relative_eq!(p.tau_i, 0.02, epsilon = 1e-15);
        assert_relative_eq!(p.integral_gain(), 4200.0, epsilon = 1e-9);
        let tf = p.transfer();
        assert_relative_eq!(tf.num().coeffs()[1], 84.0, epsilon = 1e-9);
        assert_relative_eq!(tf.num().coeffs()[0], 84.0 * 50.0, epsilon = 1e-7);

        let d = pi_from_rules(
            ProcessModel::FirstOrder {
                k: -0.04 / 75.0,
                tau: 1.0 / 75.0,
            },
            0.05,
        )
        .unwrap();
        assert_relative_eq!(d.kc, -1500.0, epsilon = 1e-9);
        assert_relative_eq!(d.tau_i, 1.0 / 75.0, epsilon = 1e-15);

        let half = pi_from_rules(ProcessModel::Integrator { k: 2.0 }, 0.05).unwrap();
        assert_relative_eq!(half.kc, 42.0, epsilon = 1e-12);

        assert!(matches!(
            pi_from_rules(ProcessModel::Integrator { k: 0.0 }, 0.05),
            Err(ControlError::ZeroProcessGain)
        ));
        assert!(pi_from_rules(ProcessModel::Integrator { k: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn plant_diagonal_read_as_rule_models() {
        let gp = canonical_plant().unwrap();
        assert_eq!(process_model_of(gp.get(0, 0)), Some(ProcessModel::Integrator { k: 1.0 }));
        match process_model_of(gp.get(1, 1)) {
            Some(ProcessModel::FirstOrder { k, tau }) => {
                assert_relative_eq!(k, -0.04 / 75.0, epsilon = 1e-15);
                assert_relative_eq!(tau, 1.0 / 75.0, epsilon = 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        let local = local_pi_controller(DT).unwrap();
        assert_relative_eq!(local.d_c()[(0, 0)], 84.0, epsilon = 1e-9);
        assert_relative_eq!(local.d_c()[(1, 1)], -1500.0, epsilon = 1e-7);
        assert_relative_eq!(local.c_c()[(1, 1)], -112_500.0, epsilon = 1e-5);
        assert_eq!(local.d_c()[(0, 1)], 0.0);
    }

    #[test]
    fn pi_realization_is_integrator_bank() {
        let c = LinearFeedbackController::realize_pi_matrix(
            &dmatrix![84.0, 0.0; 0.0, -1505.7],
            &dmatrix![84.0 * 50.0, 0.0; 0.0, -1505.7 * 75.0],
            DT,
            nominal(),
        )
        .unwrap();
        assert_relative_eq!(c.phi_c().clone(), Matrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(c.gamma_c().clone(), Matrix::identity(2, 2) * DT, epsilon = 1e-15);
        assert!(LinearFeedbackController::realize_pi_matrix(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3), DT, nominal())
            .is_err());
    }

    #[test]
    fn printed_local_pi_single_step() {
        let mut c = LinearFeedbackController::realize_pi_matrix(
            &dmatrix![84.0, 0.0; 0.0, -1505.7],
            &dmatrix![84.0 * 50.0, 0.0; 0.0, -1505.7 * 75.0],
            DT,
            nominal(),
        )
        .unwrap();
        let u = c.compute_control(&Vector2::zeros());
        assert_eq!(u, nominal());
        c.reset_state();
        let u = c.compute_control(&Vector2::new(0.0, -0.1));
        assert_relative_eq!(u.q_i - 600.0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(u.q_w - 150.0, 150.57, epsilon = 1e-9);
        // integrator advanced by dt·e
        assert_relative_eq!(c.state()[1], -0.1 * DT, epsilon = 1e-15);
    }

    #[test]
    fn zero_integral_gain_is_pure_proportional() {
        let mut c = LinearFeedbackController::realize_pi_matrix(
            &dmatrix![2.0, 0.0; 0.0, 3.0],
            &Matrix::zeros(2, 2),
            DT,
            nominal(),
        )
        .unwrap();
        let e = Vector2::new(1.0, -1.0);
        let first = c.compute_control(&e);
        for _ in 0..10 {
            assert_eq!(c.compute_control(&e), first);
        }
        assert_relative_eq!(first.q_i, 602.0, epsilon = 1e-12);
    }

    #[test]
    fn anti_windup_caps_and_freezes() {
        let mut c = local_pi_controller(DT).unwrap();
        // volume 2.5 m³ low asks for q_i = 600 + 84·2.5 = 810
        let e = Vector2::new(2.5, 0.0);
        let before = c.state().clone();
        let u = c.compute_control(&e);
        assert_eq!(u, ControlInput::new(750.0, 0.0));
        assert!(c.saturated());
        assert_eq!(c.state(), &before);
        for _ in 0..5 {
            c.compute_control(&e);
            assert_eq!(c.state(), &before);
        }
        let u = c.compute_control(&Vector2::new(0.5, 0.0));
        assert!(!c.saturated());
        assert_relative_eq!(u.q_i, 642.0, epsilon = 1e-9);
    }

    #[test]
    fn back_initialization_round_trip() {
        for mut c in [local_pi_controller(DT).unwrap(), modified_inverse_controller(DT).unwrap()] {
            for (u, e) in [
                (ControlInput::new(700.0, 90.0), Vector2::new(0.3, -0.02)),
                (ControlInput::new(450.0, 300.0), Vector2::new(-1.0, 0.05)),
                (ControlInput::new(600.0, 150.0), Vector2::zeros()),
            ] {
                c.back_initialize(u, &e);
                let out = c.compute_control(&e);
                assert!((out.q_i - u.q_i).abs() < 1e-10 && (out.q_w - u.q_w).abs() < 1e-10, "{out:?} vs {u:?}");
            }
        }
    }

    #[test]
    fn inverse_controller_of_plant() {
        let gp = canonical_plant().unwrap();
        let gc = derive_inverse_controller(&gp, 1.0).unwrap();
        let (p, i) = gc.get(0, 0).as_pi().unwrap();
        assert_relative_eq!(p, 0.8, epsilon = 1e-12);
        assert!(i.abs() < 1e-9);
        let (p, i) = gc.get(0, 1).as_pi().unwrap();
        assert_relative_eq!(p, 20.0, epsilon = 1e-9);
        assert_relative_eq!(i, 1500.0, epsilon = 1e-7);
        let (p, i) = gc.get(1, 1).as_pi().unwrap();
        assert_relative_eq!(p, -20.0, epsilon = 1e-9);
        assert_relative_eq!(i, -1500.0, epsilon = 1e-7);
        assert_relative_eq!(gc.get(1, 0).as_pi().unwrap().0, 0.2, epsilon = 1e-12);

        let k = 7.0;
        let diag = RationalTransferMatrix::new(
            2,
            2,
            vec![Rational::integrator(1.0), Rational::zero(), Rational::zero(), Rational::integrator(1.0)],
        )
        .unwrap();
        let gc = derive_inverse_controller(&diag, k).unwrap();
        assert_eq!(gc.get(0, 0).as_pi(), Some((k, 0.0)));
        assert!(gc.get(1, 0).is_zero());

        let singular = RationalTransferMatrix::new(2, 2, vec![Rational::integrator(1.0); 4]).unwrap();
        assert!(derive_inverse_controller(&singular, 1.0).is_err());
    }

    #[test]
    fn inverse_loop_is_scaled_integrator() {
        let gp = canonical_plant().unwrap();
        let k = 100.0;
        let gc = derive_inverse_controller(&gp, k).unwrap();
        for omega in [0.1, 3.0, 75.0, 400.0, 1e4] {
            let s = Complex::new(0.0, omega);
            let l = gc.eval(s) * gp.eval(s);
            let target = Complex::new(k, 0.0) / s;
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { target } else { Complex::new(0.0, 0.0) };
                    assert!((l[(i, j)] - want).norm() <= 1e-8 * target.norm(), "ω={omega}");
                }
            }
        }
    }

    #[test]
    fn modified_inverse_matches_printed_gains() {
        let (d, ki) = modified_inverse_gains(&canonical_plant().unwrap(), INVERSE_GAIN, INVERSE_ADDED_ZEROS).unwrap();
        let d_want = dmatrix![0.8, 20.0; 0.2, -20.0] * 100.0;
        let ki_want = dmatrix![33.04, 1500.0; 33.0, -1500.0] * 100.0;
        assert_relative_eq!(d, d_want, max_relative = 1e-9);
        assert_relative_eq!(ki, ki_want, max_relative = 1e-9);
    }
}
