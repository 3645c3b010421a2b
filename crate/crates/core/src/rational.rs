//! Real polynomials, rational functions of `s`, and small transfer matrices
//! built from them.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::numerics::{format_g9, CMatrix, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RationalError {
    #[error("denominator polynomial is zero")]
    ZeroDenominator,
    #[error("division by the zero rational function")]
    DivisionByZero,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("transfer matrix is structurally singular")]
    Singular,
}

const TRIM_TOLERANCE: f64 = 1e-12;
const ROOT_MATCH_TOLERANCE: f64 = 1e-6;

/// Polynomial with coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() <= TRIM_TOLERANCE * scale) {
            coeffs.pop();
        }
        if coeffs.is_empty() || scale == 0.0 {
            coeffs = vec![0.0];
        }
        Self { coeffs }
    }

    /// Build from coefficients in descending powers, `[a_n, ..., a_0]`.
    pub fn from_descending(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().rev().cloned().collect())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// The polynomial `s`.
    pub fn s() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    /// `lead · Π (s − r)`; complex roots must come in conjugate pairs.
    pub fn from_roots(roots: &[Complex<f64>], lead: f64) -> Self {
        let mut c = vec![Complex::new(lead, 0.0)];
        for &r in roots {
            let mut next = vec![Complex::new(0.0, 0.0); c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= ci * r;
            }
            c = next;
        }
        Self::new(c.into_iter().map(|z| z.re).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().expect("never empty")
    }

    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Roots from the eigenvalues of the companion matrix.
    pub fn roots(&self) -> Vec<Complex<f64>> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let mut companion = Matrix::zeros(n, n);
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        let mut roots: Vec<Complex<f64>> = companion.complex_eigenvalues().iter().cloned().collect();
        // eigenvalue noise on real roots shows up as tiny imaginary parts
        for r in &mut roots {
            if r.im.abs() <= 1e-9 * r.norm().max(1.0) {
                r.im = 0.0;
            }
        }
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        roots
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (p, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 && !(first && p == 0) {
                continue;
            }
            let sign = if c < 0.0 { "-" } else { "+" };
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mag = c.abs();
            match p {
                0 => write!(f, "{}", format_g9(mag))?,
                _ if mag == 1.0 => {}
                _ => write!(f, "{}", format_g9(mag))?,
            }
            match p {
                0 => {}
                1 => write!(f, "s")?,
                _ => write!(f, "s^{p}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// Ratio of two real polynomials, kept with common roots cancelled and a
/// monic denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational {
    num: Polynomial,
    den: Polynomial,
}

impl Rational {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, RationalError> {
        if den.is_zero() {
            return Err(RationalError::ZeroDenominator);
        }
        Ok(Self { num, den }.reduced())
    }

    pub fn constant(c: f64) -> Self {
        Self {
            num: Polynomial::constant(c),
            den: Polynomial::constant(1.0),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `k / s`.
    pub fn integrator(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::s(),
        }
    }

    /// `k / (s + a)`.
    pub fn first_order(k: f64, a: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::new(vec![a, 1.0]),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        self.num.eval(s) / self.den.eval(s)
    }

    pub fn poles(&self) -> Vec<Complex<f64>> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex<f64>> {
        if self.num.is_zero() {
            return Vec::new();
        }
        self.num.roots()
    }

    fn reduced(self) -> Self {
        if self.num.is_zero() {
            return Self::zero();
        }
        let mut num_roots = self.num.roots();
        let mut den_roots = self.den.roots();
        let mut i = 0;
        while i < num_roots.len() {
            let z = num_roots[i];
            let hit = den_roots
                .iter()
                .position(|p| (p - z).norm() <= ROOT_MATCH_TOLERANCE * z.norm().max(1.0));
            match hit {
                Some(j) => {
                    den_roots.remove(j);
                    num_roots.remove(i);
                }
                None => i += 1,
            }
        }
        let lead = self.num.leading() / self.den.leading();
        let num = Polynomial::from_roots(&num_roots, lead);
        let den = Polynomial::from_roots(&den_roots, 1.0);
        Self { num, den }
    }

    pub fn scale(&self, k: f64) -> Self {
        if k == 0.0 {
            return Self::zero();
        }
        Self {
            num: self.num.scale(k),
            den: self.den.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.den == other.den {
            return Self {
                num: self.num.add(&other.num),
                den: self.den.clone(),
            }
            .reduced();
        }
        Self {
            num: self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
        .reduced()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
        .reduced()
    }

    pub fn div(&self, other: &Self) -> Result<Self, RationalError> {
        if other.is_zero() {
            return Err(RationalError::DivisionByZero);
        }
        Ok(Self {
            num: self.num.mul(&other.den),
            den: self.den.mul(&other.num),
        }
        .reduced())
    }

    /// Split `(b1 s + b0) / s` into `(b1, b0)`; `None` for any other shape.
    pub fn as_pi(&self) -> Option<(f64, f64)> {
        let den = self.den.coeffs();
        let num = self.num.coeffs();
        if self.num.is_zero() {
            return Some((0.0, 0.0));
        }
        match (den, num.len()) {
            ([c], 1) => Some((num[0] / c, 0.0)),
            ([z, l], 1 | 2) if *z == 0.0 => {
                let b0 = num[0] / l;
                let b1 = num.get(1).map_or(0.0, |b| b / l);
                Some((b1, b0))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.degree() == 0 && self.den.coeffs()[0] == 1.0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({}) / ({})", self.num, self.den)
        }
    }
}

/// Grid of rational functions, e.g. a plant `G(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Rational>,
}

impl RationalTransferMatrix {
    /// `entries` in row-major order.
    pub fn new(rows: usize, cols: usize, entries: Vec<Rational>) -> Result<Self, RationalError> {
        if rows * cols != entries.len() || rows == 0 || cols == 0 {
            return Err(RationalError::Dimension(format!(
                "{rows}x{cols} grid needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_constant(m: &Matrix) -> Self {
        let entries = m.transpose().iter().map(|&v| Rational::constant(v)).collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    /// `C (sI − A)⁻¹ B` via the Faddeev–LeVerrier adjugate expansion.
    pub fn from_state_space(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Self, RationalError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(RationalError::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        // char poly s^n + c1 s^{n-1} + ... + cn; adj(sI - A) = sum_k M_k s^{n-k}
        let mut char_desc = vec![1.0];
        let mut adj_terms: Vec<Matrix> = Vec::with_capacity(n);
        let mut m = Matrix::identity(n, n);
        for k in 1..=n {
            adj_terms.push(m.clone());
            let am = a * &m;
            let ck = -am.trace() / k as f64;
            char_desc.push(ck);
            m = am + Matrix::identity(n, n) * ck;
        }
        let den = Polynomial::from_descending(&char_desc);
        let products: Vec<Matrix> = adj_terms.iter().map(|mk| c * mk * b).collect();
        let (rows, cols) = (c.nrows(), b.ncols());
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let desc: Vec<f64> = products.iter().map(|p| p[(i, j)]).collect();
                entries.push(Rational::new(Polynomial::from_descending(&desc), den.clone())?);
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.cols + j]
    }

    pub fn eval(&self, s: Complex<f64>) -> CMatrix {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(s))
    }

    pub fn eval_jw(&self, omega: f64) -> CMatrix {
        self.eval(Complex::new(0.0, omega))
    }

    pub fn map(&self, f: impl Fn(usize, usize, &Rational) -> Rational) -> Self {
        let entries = (0..self.rows * self.cols)
            .map(|k| f(k / self.cols, k % self.cols, &self.entries[k]))
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scale(&self, k: &Rational) -> Self {
        self.map(|_, _, e| e.mul(k))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, RationalError> {
        if self.cols != other.rows {
            return Err(RationalError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Rational::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self.get(i, k).mul(other.get(k, j)));
                }
                entries.push(acc);
            }
        }
        Self::new(self.rows, other.cols, entries)
    }

    fn ensure_2x2(&self) -> Result<(), RationalError> {
        if self.rows != 2 || self.cols != 2 {
            return Err(RationalError::Dimension(format!(
                "expected a 2x2 transfer matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn determinant_2x2(&self) -> Result<Rational, RationalError> {
        self.ensure_2x2()?;
        Ok(self
            .get(0, 0)
            .mul(self.get(1, 1))
            .sub(&self.get(0, 1).mul(self.get(1, 0))))
    }

    pub fn inverse_2x2(&self) -> Result<Self, RationalError> {
        let det = self.determinant_2x2()?;
        if det.is_zero() {
            return Err(RationalError::Singular);
        }
        let adj = [
            self.get(1, 1).clone(),
            self.get(0, 1).scale(-1.0),
            self.get(1, 0).scale(-1.0),
            self.get(0, 0).clone(),
        ];
        let entries = adj.iter().map(|e| e.div(&det)).collect::<Result<Vec<_>, _>>()?;
        Self::new(2, 2, entries)
    }
}

impl fmt::Display for RationalTransferMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[ {} ]", row.join(",  "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_close(a: Complex<f64>, b: Complex<f64>) {
        assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0), "{a} vs {b}");
    }

    fn poly(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec())
    }

    #[test]
    fn polynomial_arithmetic_and_roots() {
        let p = poly(&[75.0, 1.0]).mul(&Polynomial::s());
        assert_eq!(p.coeffs(), &[0.0, 75.0, 1.0]);
        let roots = p.roots();
        assert_relative_eq!(roots[0].re, -75.0, epsilon = 1e-9);
        assert_relative_eq!(roots[1].re, 0.0, epsilon = 1e-9);
        assert!(poly(&[3.0]).roots().is_empty());
        let back = Polynomial::from_roots(&roots, 1.0);
        assert_relative_eq!(back.coeffs()[1], 75.0, epsilon = 1e-9);
        let q = poly(&[1.0, 0.0, 1.0]);
        let r = q.roots();
        assert_relative_eq!(r[0].im.abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(Polynomial::from_roots(&r, 1.0).coeffs()[0], 1.0, epsilon = 1e-12);
        assert!(poly(&[0.0, 0.0]).is_zero());
        assert_eq!(poly(&[2.0, 1e-20]).degree(), 0);
    }

    #[test]
    fn rational_cancellation() {
        let r = Rational::new(poly(&[75.0, 1.0]), poly(&[0.0, 75.0, 1.0])).unwrap();
        assert_eq!(r.den().degree(), 1);
        assert_eq!(r.num().degree(), 0);
        assert_relative_eq!(r.eval(Complex::new(2.0, 0.0)).re, 0.5, epsilon = 1e-12);
        assert!(Rational::new(poly(&[1.0]), poly(&[0.0])).is_err());
    }

    #[test]
    fn rational_field_operations() {
        let a = Rational::integrator(1.0);
        let b = Rational::first_order(0.01, 75.0);
        let s = Complex::new(0.3, 2.0);
        assert_close(a.add(&b).eval(s), a.eval(s) + b.eval(s));
        assert_close(a.mul(&b).eval(s), a.eval(s) * b.eval(s));
        assert_close(a.div(&b).unwrap().eval(s), a.eval(s) / b.eval(s));
        assert!(a.sub(&a).is_zero());
        assert!(a.div(&Rational::zero()).is_err());
    }

    #[test]
    fn pi_split() {
        // 84 (s + 50) / s
        let pi = Rational::new(poly(&[84.0 * 50.0, 84.0]), Polynomial::s()).unwrap();
        assert_eq!(pi.as_pi(), Some((84.0, 4200.0)));
        assert_eq!(Rational::constant(0.8).as_pi(), Some((0.8, 0.0)));
        assert_eq!(Rational::first_order(1.0, 2.0).as_pi(), None);
    }

    #[test]
    fn state_space_to_transfer_matrix() {
        let a = nalgebra::dmatrix![0.0, 0.0; 0.0, -75.0];
        let b = nalgebra::dmatrix![1.0, 1.0; 0.01, -0.04];
        let g = RationalTransferMatrix::from_state_space(&a, &b, &Matrix::identity(2, 2)).unwrap();
        let s = Complex::new(0.0, 3.0);
        assert_close(g.get(0, 0).eval(s), Rational::integrator(1.0).eval(s));
        assert_close(g.get(1, 1).eval(s), Rational::first_order(-0.04, 75.0).eval(s));
        assert_eq!(g.get(0, 0).den().degree(), 1);
        assert!(g.get(1, 0).num().degree() == 0);
    }

    #[test]
    fn inverse_of_diagonal_integrators() {
        let g = RationalTransferMatrix::new(
            2,
            2,
            vec![Rational::integrator(1.0), Rational::zero(), Rational::zero(), Rational::integrator(1.0)],
        )
        .unwrap();
        let inv = g.inverse_2x2().unwrap();
        assert_eq!(inv.get(0, 0).num().coeffs(), &[0.0, 1.0]);
        assert!(inv.get(0, 1).is_zero());
        let singular = RationalTransferMatrix::new(2, 2, vec![Rational::integrator(1.0); 4]).unwrap();
        assert_eq!(singular.inverse_2x2(), Err(RationalError::Singular));
    }
}
