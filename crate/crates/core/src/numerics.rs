//! Dense matrix utilities and integrators shared by the plant, the
//! controllers and the analysis toolkit.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::{Complex, DMatrix, SVector, SymmetricEigen};
use thiserror::Error;

/// Real dense matrix.
pub type Matrix = DMatrix<f64>;
/// Complex dense matrix, used for frequency responses.
pub type CMatrix = DMatrix<Complex<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sample period must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("riccati recursion did not converge after {iterations} iterations")]
    RiccatiDiverged { iterations: usize },
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

/// A model evaluated at `s = j·omega` (omega in rad/hour).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPoint {
    pub omega: f64,
    pub value: CMatrix,
}

fn ensure_square(m: &Matrix) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{M t}` by scaling and squaring around a truncated Taylor series.
pub fn matrix_exponential(m: &Matrix, t: f64) -> Result<Matrix, NumericsError> {
    ensure_square(m)?;
    if !t.is_finite() || m.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite("matrix exponential argument"));
    }
    let n = m.nrows();
    let scaled = m * t;
    let norm = norm1(&scaled);
    // keep the series argument below 1/4 so 24 terms are far past convergence
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let a = scaled / 2f64.powi(squarings);

    let mut result = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &a / k as f64;
        result += &term;
        if norm1(&term) <= f64::EPSILON * 1e-2 * norm1(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Exact zero-order-hold pair `(Phi, Gamma)` for `x' = A x + B u`.
///
/// Uses the block exponential `exp([[A, B], [0, 0]] dt)`, whose top row
/// holds `Phi` and `Gamma`; this stays valid when `A` is singular.
pub fn discretize_zoh(a: &Matrix, b: &Matrix, dt: f64) -> Result<(Matrix, Matrix), NumericsError> {
    ensure_square(a)?;
    if b.nrows() != a.nrows() {
        return Err(NumericsError::Dimension(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if !(dt > 0.0) {
        return Err(NumericsError::NonPositiveStep(dt));
    }
    let n = a.nrows();
    let m = b.ncols();
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, m)).copy_from(b);
    let e = matrix_exponential(&block, dt)?;
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, m)).into_owned();
    Ok((phi, gamma))
}

/// Moore–Penrose pseudoinverse; singular values below `1e-12·σ_max` are
/// treated as zero.
pub fn pseudoinverse(m: &Matrix) -> Matrix {
    if m.is_empty() {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let tol = 1e-12 * smax;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// One classical fourth-order Runge–Kutta step of `x' = f(x)`.
pub fn rk4_step<const N: usize, F>(
    mut f: F,
    x: &SVector<f64, N>,
    dt: f64,
) -> Result<SVector<f64, N>, NumericsError>
where
    F: FnMut(&SVector<f64, N>) -> SVector<f64, N>,
{
    if !(dt > 0.0) {
        return Err(NumericsError::NonPositiveStep(dt));
    }
    let mut eval = |p: &SVector<f64, N>| {
        let d = f(p);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(NumericsError::NonFinite("derivative evaluation"))
        }
    };
    let k1 = eval(x)?;
    let k2 = eval(&(x + k1 * (dt / 2.0)))?;
    let k3 = eval(&(x + k2 * (dt / 2.0)))?;
    let k4 = eval(&(x + k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

const RICCATI_MAX_ITERATIONS: usize = 100_000;
const RICCATI_TOLERANCE: f64 = 1e-12;

/// Steady-state Kalman filter gain for `x(k+1) = Φ x(k) + w`,
/// `y = C x + n`, with `cov(w) = Qw` and `cov(n) = Rn`.
///
/// The gain is for the corrector `x̂ = x̂* + L (y − C x̂*)`, i.e.
/// `L = P Cᵀ (C P Cᵀ + Rn)⁻¹` with `P` the fixed point of the a-priori
/// Riccati recursion.
pub fn kalman_gain(phi: &Matrix, c: &Matrix, qw: &Matrix, rn: &Matrix) -> Result<Matrix, NumericsError> {
    ensure_square(phi)?;
    ensure_square(qw)?;
    ensure_square(rn)?;
    let n = phi.nrows();
    let p = c.nrows();
    if c.ncols() != n || qw.nrows() != n || rn.nrows() != p {
        return Err(NumericsError::Dimension(format!(
            "Phi {n}x{n}, C {}x{}, Qw {}x{}, Rn {}x{}",
            c.nrows(),
            c.ncols(),
            qw.nrows(),
            qw.ncols(),
            rn.nrows(),
            rn.ncols()
        )));
    }

    let gain = |cov: &Matrix| -> Result<Matrix, NumericsError> {
        let s = c * cov * c.transpose() + rn;
        let s_inv = s.try_inverse().ok_or(NumericsError::SingularInnovation)?;
        Ok(cov * c.transpose() * s_inv)
    };

    let mut cov = qw.clone();
    for _ in 0..RICCATI_MAX_ITERATIONS {
        let l = gain(&cov)?;
        let posterior = &cov - &l * c * &cov;
        let mut next = phi * posterior * phi.transpose() + qw;
        next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("riccati recursion"));
        }
        let change = (&next - &cov).amax();
        let scale = next.amax();
        cov = next;
        if change <= RICCATI_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return gain(&cov);
        }
    }
    Err(NumericsError::RiccatiDiverged {
        iterations: RICCATI_MAX_ITERATIONS,
    })
}

/// Singular values in descending order, from the Hermitian eigenproblem
/// of `Mᴴ M` (or `M Mᴴ` when `M` is wide).
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let gram = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    let eig = SymmetricEigen::new(gram);
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// `%.9g`-style formatting used for every CSV cell.
pub fn format_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    // rounding may bump the exponent, so read it back
    let (mant, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        let m = trim_zeros(mant);
        format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, Vector2};

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&Matrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(e, Matrix::identity(2, 2));
    }

    #[test]
    fn exponential_scalar_and_diagonal() {
        let e = matrix_exponential(&dmatrix![-75.0], 0.002).unwrap();
        assert_relative_eq!(e[(0, 0)], (-0.15f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(0, 0)], 0.860708, epsilon = 1e-6);

        let e = matrix_exponential(&dmatrix![0.0, 0.0; 0.0, -75.0], 0.002).unwrap();
        assert_relative_eq!(e[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], (-0.15f64).exp(), max_relative = 1e-12);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exponential_large_argument_and_rotation() {
        // exp([[0, w], [-w, 0]]) is a rotation by w
        let w = 7.3;
        let e = matrix_exponential(&dmatrix![0.0, 1.0; -1.0, 0.0], w).unwrap();
        assert_relative_eq!(e[(0, 0)], w.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(0, 1)], w.sin(), epsilon = 1e-12);
        let e = matrix_exponential(&dmatrix![-30.0], 1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-30.0f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn exponential_rejects_non_square() {
        assert!(matches!(
            matrix_exponential(&Matrix::zeros(2, 3), 1.0),
            Err(NumericsError::NotSquare { .. })
        ));
    }

    #[test]
    fn zoh_integrator_and_first_order() {
        let (phi, gamma) = discretize_zoh(&dmatrix![0.0], &dmatrix![1.0], 0.002).unwrap();
        assert_relative_eq!(phi[(0, 0)], 1.0);
        assert_relative_eq!(gamma[(0, 0)], 0.002, max_relative = 1e-14);

        let (_, gamma) = discretize_zoh(&dmatrix![-75.0], &dmatrix![1.0], 0.002).unwrap();
        let exact = (1.0 - (-0.15f64).exp()) / 75.0;
        assert_relative_eq!(gamma[(0, 0)], exact, max_relative = 1e-12);
        assert_relative_eq!(gamma[(0, 0)], 0.00185723, epsilon = 1e-8);
    }

    #[test]
    fn zoh_surge_tank_model() {
        let a = dmatrix![0.0, 0.0; 0.0, -75.0];
        let b = dmatrix![1.0, 1.0; 0.01, -0.04];
        let (phi, gamma) = discretize_zoh(&a, &b, 0.002).unwrap();
        let row2 = (1.0 - (-0.15f64).exp()) / 75.0;
        assert_relative_eq!(phi[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(phi[(1, 1)], 0.860708, epsilon = 1e-6);
        assert_relative_eq!(gamma[(0, 0)], 0.002, epsilon = 1e-14);
        assert_relative_eq!(gamma[(0, 1)], 0.002, epsilon = 1e-14);
        assert_relative_eq!(gamma[(1, 0)], 0.01 * row2, max_relative = 1e-11);
        assert_relative_eq!(gamma[(1, 1)], -0.04 * row2, max_relative = 1e-11);
        assert_relative_eq!(gamma[(1, 0)], 1.85723e-5, epsilon = 1e-9);
        assert_relative_eq!(gamma[(1, 1)], -7.42892e-5, epsilon = 1e-9);
    }

    #[test]
    fn zoh_rejects_bad_input() {
        let a = dmatrix![0.0];
        assert!(matches!(
            discretize_zoh(&a, &dmatrix![1.0], 0.0),
            Err(NumericsError::NonPositiveStep(_))
        ));
        assert!(matches!(
            discretize_zoh(&a, &dmatrix![1.0; 2.0], 0.1),
            Err(NumericsError::Dimension(_))
        ));
    }

    #[test]
    fn pseudoinverse_examples() {
        assert_relative_eq!(pseudoinverse(&Matrix::identity(2, 2)), Matrix::identity(2, 2), epsilon = 1e-14);
        assert_relative_eq!(
            pseudoinverse(&dmatrix![2.0, 0.0; 0.0, 4.0]),
            dmatrix![0.5, 0.0; 0.0, 0.25],
            epsilon = 1e-14
        );
        assert_relative_eq!(
            pseudoinverse(&dmatrix![1.0, 0.0; 0.0, 0.0]),
            dmatrix![1.0, 0.0; 0.0, 0.0],
            epsilon = 1e-14
        );
        assert_eq!(pseudoinverse(&Matrix::zeros(2, 3)), Matrix::zeros(3, 2));
    }

    #[test]
    fn rk4_trivial_fields() {
        let x = Vector2::new(10.0, 1.4);
        assert_eq!(rk4_step(|_| Vector2::zeros(), &x, 0.002).unwrap(), x);
        let c = Vector2::new(3.0, -2.0);
        let next = rk4_step(|_| c, &x, 0.002).unwrap();
        assert_relative_eq!(next, x + c * 0.002, epsilon = 1e-15);
    }

    #[test]
    fn rk4_decay_matches_exponential() {
        let x = SVector::<f64, 1>::new(1.0);
        let next = rk4_step(|x| x * -75.0, &x, 0.002).unwrap();
        assert!((next[0] - (-0.15f64).exp()).abs() <= 1e-6);
    }

    #[test]
    fn rk4_flags_non_finite_derivative() {
        let x = Vector2::new(0.0, 1.0);
        let r = rk4_step(|x| Vector2::new(1.0 / x[0], 0.0), &x, 0.1);
        assert!(matches!(r, Err(NumericsError::NonFinite(_))));
    }

    #[test]
    fn kalman_scalar_limits() {
        let l = kalman_gain(&dmatrix![0.5], &dmatrix![1.0], &dmatrix![0.0], &dmatrix![1.0]).unwrap();
        assert_eq!(l[(0, 0)], 0.0);
        let l = kalman_gain(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1e-10]).unwrap();
        assert_relative_eq!(l[(0, 0)], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn kalman_scalar_closed_form() {
        // random walk: P = (q + sqrt(q^2 + 4 q r)) / 2, L = P / (P + r)
        let (q, r): (f64, f64) = (0.3, 2.0);
        let p = (q + (q * q + 4.0 * q * r).sqrt()) / 2.0;
        let l = kalman_gain(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![q], &dmatrix![r]).unwrap();
        assert_relative_eq!(l[(0, 0)], p / (p + r), max_relative = 1e-10);
    }

    #[test]
    fn kalman_reports_divergence() {
        // unobservable unstable mode never settles
        let r = kalman_gain(&dmatrix![2.0, 0.0; 0.0, 0.5], &dmatrix![0.0, 1.0], &Matrix::identity(2, 2), &dmatrix![1.0]);
        assert!(matches!(r, Err(NumericsError::NonFinite(_)) | Err(NumericsError::RiccatiDiverged { .. })), "{r:?}");
    }

    #[test]
    fn singular_values_examples() {
        let id = CMatrix::identity(2, 2);
        assert_eq!(singular_values(&id), vec![1.0, 1.0]);
        let d = dmatrix![3.0, 0.0; 0.0, -4.0].map(|v| Complex::new(v, 0.0));
        let sv = singular_values(&d);
        assert_relative_eq!(sv[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(sv[1], 3.0, epsilon = 1e-12);
        let col = dmatrix![0.0; 4.0].map(|v| Complex::new(v, 0.0));
        assert_eq!(singular_values(&col).len(), 1);
        let row = dmatrix![3.0, 4.0].map(|v| Complex::new(v, 0.0));
        let sv = singular_values(&row);
        assert_eq!(sv.len(), 1);
        assert_relative_eq!(sv[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn g9_formatting() {
        assert_eq!(format_g9(0.0), "0");
        assert_eq!(format_g9(1.4), "1.4");
        assert_eq!(format_g9(-1505.7), "-1505.7");
        assert_eq!(format_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_g9(123456789.4), "123456789");
        assert_eq!(format_g9(1.234e-7), "1.234e-07");
        assert_eq!(format_g9(2.5e12), "2.5e+12");
        assert_eq!(format_g9(0.002), "0.002");
        assert_eq!(format_g9(9.9999999999), "10");
    }
}
