//! Input/output controllability checks for small LTI models: state-space
//! ranks, poles, transmission zeros, relative gains, scaled models and
//! frequency sweeps.

use std::fmt::{self, Write as _};

use nalgebra::{Complex, DVector};
use thiserror::Error;

use crate::numerics::{format_g9, singular_values, CMatrix, Matrix};
use crate::plant::LinearModel;
use crate::rational::{RationalError, RationalTransferMatrix};

/// Relative SVD tolerance for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// Pole/zero coincidence tolerance when filtering zeros.
const CANCEL_TOLERANCE: f64 = 1e-6;
/// Condition number beyond which a frequency response counts as singular.
const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("transfer matrix has deficient normal rank")]
    RankDeficient,
    #[error("matrix is singular at omega = {0} rad/h")]
    Singular(f64),
    #[error("scaling diagonal {name} must be strictly positive, got {value}")]
    BadScaling { name: &'static str, value: f64 },
    #[error("no crossing of magnitude {level} inside [{lo}, {hi}] rad/h")]
    NoCrossing { level: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Rational(#[from] RationalError),
}

/// `[B AB … A^{n−1}B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix, AnalysisError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(AnalysisError::Dimension(format!(
            "A {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let m = b.ncols();
    let mut out = Matrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    Ok(out)
}

/// `[C; CA; …; CA^{n−1}]`.
pub fn observability_matrix(a: &Matrix, c: &Matrix) -> Result<Matrix, AnalysisError> {
    let n = a.nrows();
    if a.ncols() != n || c.ncols() != n {
        return Err(AnalysisError::Dimension(format!(
            "A {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let p = c.nrows();
    let mut out = Matrix::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = block * a;
    }
    Ok(out)
}

/// Numerical rank with tolerance `RANK_TOLERANCE · σ_max`.
pub fn rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
}

/// One eigenvalue with a unit-norm right eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub eigenvalue: Complex<f64>,
    pub eigenvector: DVector<Complex<f64>>,
}

/// Eigenvalues of `A` sorted by descending real part, each with a right
/// eigenvector taken from the null space of `A − λI`.
pub fn poles_and_modes(a: &Matrix) -> Result<Vec<Mode>, AnalysisError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(AnalysisError::Dimension(format!("A is {}x{}", n, a.ncols())));
    }
    let mut values: Vec<Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
    values.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let ac: CMatrix = a.map(|v| Complex::new(v, 0.0));
    let mut modes: Vec<Mode> = Vec::with_capacity(n);
    for (k, &lambda) in values.iter().enumerate() {
        let shifted = &ac - CMatrix::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        // null-space directions sorted by singular value; repeated eigenvalues
        // take successive directions
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let repeat = values[..k].iter().filter(|&&l| (l - lambda).norm() < 1e-9).count();
        let row = order[repeat.min(n - 1)];
        let mut vec: DVector<Complex<f64>> = v_t.row(row).adjoint();
        // fix the phase so the largest component is real and positive
        let (imax, _) = vec.iter().enumerate().fold((0, 0.0), |acc, (i, c)| {
            if c.norm() > acc.1 + 1e-12 {
                (i, c.norm())
            } else {
                acc
            }
        });
        let phase = vec[imax] / vec[imax].norm();
        vec /= phase;
        modes.push(Mode {
            eigenvalue: lambda,
            eigenvector: vec,
        });
    }
    Ok(modes)
}

fn all_poles(g: &RationalTransferMatrix) -> Vec<Complex<f64>> {
    let mut poles = Vec::new();
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            poles.extend(g.get(i, j).poles());
        }
    }
    poles
}

/// Transmission zeros of a 2×2 transfer matrix: roots of the determinant
/// numerator that do not coincide with a pole of any entry.
pub fn multivariable_zeros(g: &RationalTransferMatrix) -> Result<Vec<Complex<f64>>, AnalysisError> {
    let det = g.determinant_2x2()?;
    if det.is_zero() {
        return Err(AnalysisError::RankDeficient);
    }
    let poles = all_poles(g);
    let zeros = det
        .zeros()
        .into_iter()
        .filter(|z| !poles.iter().any(|p| (p - z).norm() <= CANCEL_TOLERANCE * (1.0 + p.norm())))
        .collect();
    Ok(zeros)
}

fn condition(m: &CMatrix) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

fn invert(m: &CMatrix, omega: f64) -> Result<CMatrix, AnalysisError> {
    if m.nrows() != m.ncols() {
        return Err(AnalysisError::Dimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    if condition(m) > SINGULAR_CONDITION {
        return Err(AnalysisError::Singular(omega));
    }
    m.clone().try_inverse().ok_or(AnalysisError::Singular(omega))
}

/// Relative gain array `G ∘ (G⁻¹)ᵀ` of a frequency response.
pub fn rga(g: &CMatrix) -> Result<CMatrix, AnalysisError> {
    let inv = invert(g, f64::NAN)?;
    Ok(g.component_mul(&inv.transpose()))
}

/// Diagonal output, input and disturbance scalings in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSet {
    pub d_y: Vec<f64>,
    pub d_u: Vec<f64>,
    pub d_d: Vec<f64>,
}

impl ScalingSet {
    /// Output allowance, input range and expected disturbance for the tank.
    pub fn canonical() -> Self {
        Self {
            d_y: vec![7.0, 0.1],
            d_u: vec![600.0, 150.0],
            d_d: vec![0.5],
        }
    }

    pub fn identity(outputs: usize, inputs: usize, disturbances: usize) -> Self {
        Self {
            d_y: vec![1.0; outputs],
            d_u: vec![1.0; inputs],
            d_d: vec![1.0; disturbances],
        }
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        for (name, diag) in [("D_y", &self.d_y), ("D_u", &self.d_u), ("D_d", &self.d_d)] {
            if let Some(&value) = diag.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
                return Err(AnalysisError::BadScaling { name, value });
            }
        }
        Ok(())
    }
}

fn scale_one(
    m: &RationalTransferMatrix,
    out: &[f64],
    inp: &[f64],
    what: &str,
) -> Result<RationalTransferMatrix, AnalysisError> {
    if out.len() != m.rows() || inp.len() != m.cols() {
        return Err(AnalysisError::Dimension(format!(
            "{what} is {}x{} but scalings are {}x{}",
            m.rows(),
            m.cols(),
            out.len(),
            inp.len()
        )));
    }
    Ok(m.map(|i, j, e| e.scale(inp[j] / out[i])))
}

/// `G̃ = D_y⁻¹ G D_u` and `G̃d = D_y⁻¹ Gd D_d`.
pub fn scale_models(
    g: &RationalTransferMatrix,
    gd: &RationalTransferMatrix,
    scaling: &ScalingSet,
) -> Result<(RationalTransferMatrix, RationalTransferMatrix), AnalysisError> {
    scaling.validate()?;
    Ok((
        scale_one(g, &scaling.d_y, &scaling.d_u, "G")?,
        scale_one(gd, &scaling.d_y, &scaling.d_d, "Gd")?,
    ))
}

/// `|G̃⁻¹ G̃d|` at one frequency; `None` where `G̃` is singular.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionPoint {
    pub omega: f64,
    pub magnitudes: Option<Vec<f64>>,
}

pub fn disturbance_rejection_index(
    g: &RationalTransferMatrix,
    gd: &RationalTransferMatrix,
    omegas: &[f64],
) -> Result<Vec<RejectionPoint>, AnalysisError> {
    if g.rows() != g.cols() || gd.rows() != g.rows() {
        return Err(AnalysisError::Dimension(format!(
            "G {}x{}, Gd {}x{}",
            g.rows(),
            g.cols(),
            gd.rows(),
            gd.cols()
        )));
    }
    Ok(omegas
        .iter()
        .map(|&omega| {
            let magnitudes = invert(&g.eval_jw(omega), omega)
                .ok()
                .map(|inv| (inv * gd.eval_jw(omega)).iter().map(|c| c.norm()).collect());
            RejectionPoint { omega, magnitudes }
        })
        .collect())
}

/// Descending singular values at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub omega: f64,
    pub singular_values: Vec<f64>,
}

pub fn default_frequency_grid() -> Vec<f64> {
    log_grid(1e-1, 1e4, 200)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

pub fn singular_value_sweep(g: &RationalTransferMatrix, omegas: &[f64]) -> Vec<SweepPoint> {
    omegas
        .iter()
        .map(|&omega| SweepPoint {
            omega,
            singular_values: singular_values(&g.eval_jw(omega)),
        })
        .collect()
}

/// Sweep rows as `omega,sv1,sv2,…`.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let width = points.iter().map(|p| p.singular_values.len()).max().unwrap_or(0);
    let mut out = String::from("omega");
    for k in 1..=width {
        write!(out, ",sv{k}").unwrap();
    }
    out.push('\n');
    for p in points {
        out.push_str(&format_g9(p.omega));
        for s in &p.singular_values {
            out.push(',');
            out.push_str(&format_g9(*s));
        }
        out.push('\n');
    }
    out
}

/// Frequency in `[lo, hi]` where the largest singular value of `g` falls
/// through `level`, located by bisection on a log scale.
pub fn crossing_frequency(g: &RationalTransferMatrix, level: f64, lo: f64, hi: f64) -> Result<f64, AnalysisError> {
    let f = |w: f64| singular_values(&g.eval_jw(w)).first().copied().unwrap_or(0.0) - level;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (fa, fb) = (f(lo), f(hi));
    if fa.signum() == fb.signum() {
        return Err(AnalysisError::NoCrossing { level, lo, hi });
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m.exp()).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Everything the `analyze` command reports.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub controllability_rank: usize,
    pub observability_rank: usize,
    pub states: usize,
    pub modes: Vec<Mode>,
    pub g: RationalTransferMatrix,
    pub gd: RationalTransferMatrix,
    pub zeros: Result<Vec<Complex<f64>>, String>,
    /// RGA at the lowest grid frequency.
    pub rga: Option<CMatrix>,
    pub rga_omega: f64,
    pub scaled_g: RationalTransferMatrix,
    pub scaled_gd: RationalTransferMatrix,
    pub rejection: Vec<RejectionPoint>,
    pub g_sweep: Vec<SweepPoint>,
    pub gd_sweep: Vec<SweepPoint>,
    /// Where `|G̃d|` drops through 1.
    pub gd_crossing: Option<f64>,
}

pub fn analyze(model: &LinearModel, scaling: &ScalingSet, omegas: &[f64]) -> Result<AnalysisReport, AnalysisError> {
    let ctrb = controllability_matrix(&model.a, &model.b)?;
    let obsv = observability_matrix(&model.a, &model.c)?;
    let modes = poles_and_modes(&model.a)?;
    let g = RationalTransferMatrix::from_state_space(&model.a, &model.b, &model.c)?;
    let gd = RationalTransferMatrix::from_state_space(&model.a, &model.gd, &model.c)?;
    let zeros = multivariable_zeros(&g).map_err(|e| e.to_string());
    let rga_omega = omegas.first().copied().unwrap_or(1.0);
    let rga = rga(&g.eval_jw(rga_omega)).ok();
    let (scaled_g, scaled_gd) = scale_models(&g, &gd, scaling)?;
    let rejection = disturbance_rejection_index(&scaled_g, &scaled_gd, omegas)?;
    let g_sweep = singular_value_sweep(&scaled_g, omegas);
    let gd_sweep = singular_value_sweep(&scaled_gd, omegas);
    let gd_crossing = match (omegas.first(), omegas.last()) {
        (Some(&lo), Some(&hi)) => crossing_frequency(&scaled_gd, 1.0, lo, hi).ok(),
        _ => None,
    };
    Ok(AnalysisReport {
        controllability_rank: rank(&ctrb),
        observability_rank: rank(&obsv),
        states: model.a.nrows(),
        modes,
        g,
        gd,
        zeros,
        rga,
        rga_omega,
        scaled_g,
        scaled_gd,
        rejection,
        g_sweep,
        gd_sweep,
        gd_crossing,
    })
}

fn fmt_complex(c: &Complex<f64>) -> String {
    if c.im.abs() <= 1e-12 * (1.0 + c.re.abs()) {
        format_g9(c.re + 0.0)
    } else {
        format!("{}{}{}j", format_g9(c.re), if c.im < 0.0 { '-' } else { '+' }, format_g9(c.im.abs()))
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}", self.states)?;
        writeln!(f, "controllability rank: {}", self.controllability_rank)?;
        writeln!(f, "observability rank: {}", self.observability_rank)?;
        let poles: Vec<String> = self.modes.iter().map(|m| fmt_complex(&m.eigenvalue)).collect();
        writeln!(f, "poles: {{{}}}", poles.join(", "))?;
        for m in &self.modes {
            let v: Vec<String> = m.eigenvector.iter().map(fmt_complex).collect();
            writeln!(f, "  mode {}: [{}]", fmt_complex(&m.eigenvalue), v.join(", "))?;
        }
        match &self.zeros {
            Ok(z) if z.is_empty() => writeln!(f, "multivariable zeros: none")?,
            Ok(z) => {
                let z: Vec<String> = z.iter().map(fmt_complex).collect();
                writeln!(f, "multivariable zeros: {{{}}}", z.join(", "))?
            }
            Err(e) => writeln!(f, "multivariable zeros: not computed ({e})")?,
        }
        writeln!(f, "G(s):")?;
        write!(f, "{}", self.g)?;
        writeln!(f, "Gd(s):")?;
        write!(f, "{}", self.gd)?;
        match &self.rga {
            Some(r) => {
                writeln!(f, "RGA at omega = {} rad/h:", format_g9(self.rga_omega))?;
                for i in 0..r.nrows() {
                    let row: Vec<String> = (0..r.ncols()).map(|j| fmt_complex(&r[(i, j)])).collect();
                    writeln!(f, "  [{}]", row.join(", "))?;
                }
            }
            None => writeln!(f, "RGA: plant is singular at omega = {}", format_g9(self.rga_omega))?,
        }
        writeln!(f, "scaled G(s):")?;
        write!(f, "{}", self.scaled_g)?;
        writeln!(f, "scaled Gd(s):")?;
        write!(f, "{}", self.scaled_gd)?;
        let valid: Vec<&Vec<f64>> = self.rejection.iter().filter_map(|p| p.magnitudes.as_ref()).collect();
        let skipped = self.rejection.len() - valid.len();
        if let Some(first) = valid.first() {
            let spread = valid
                .iter()
                .flat_map(|m| m.iter().zip(first.iter()).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let v: Vec<String> = first.iter().map(|x| format_g9(*x)).collect();
            writeln!(
                f,
                "disturbance rejection |G~^-1 Gd~|: [{}] (max deviation over {} frequencies: {:.3e}, {} singular)",
                v.join(", "),
                valid.len(),
                spread,
                skipped
            )?;
            if first.iter().any(|&x| x > 1.0) {
                writeln!(f, "  an entry exceeds 1: perfect rejection of the worst disturbance needs more than the scaled input range")?;
            }
        } else {
            writeln!(f, "disturbance rejection: scaled plant singular on the whole grid")?;
        }
        match self.gd_crossing {
            Some(w) => writeln!(f, "|Gd~| falls through 1 at omega = {} rad/h; control is needed below it", format_g9(w))?,
            None => writeln!(f, "|Gd~| does not cross 1 on the frequency grid")?,
        }
        Ok(())
    }
}
