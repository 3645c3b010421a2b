//! Dense convex QP over a box, by projected Newton steps on the free set.

use nalgebra::DVector;

use crate::numerics::Matrix;

const MAX_ITERATIONS: usize = 500;
const ARMIJO: f64 = 1e-4;

fn clamp(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
}

/// Solve `H x = b` for symmetric positive semidefinite `H`, adding the
/// smallest diagonal shift that makes the Cholesky factorization succeed.
fn solve_spd(h: Matrix, b: DVector<f64>) -> DVector<f64> {
    let diag = h.diagonal().amax();
    let scale = if diag > 0.0 { diag } else { 1.0 };
    let mut shift = 0.0;
    loop {
        let shifted = &h + Matrix::identity(h.nrows(), h.ncols()) * shift;
        if let Some(chol) = shifted.cholesky() {
            let x = chol.solve(&b);
            if x.iter().all(|v| v.is_finite()) {
                return x;
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 10.0 };
    }
}

/// Minimize `½ xᵀ H x + gᵀ x` subject to `lo ≤ x ≤ hi`.
pub(crate) fn solve_box_qp(h: &Matrix, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    let n = g.len();
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + g.dot(x);
    let mut x = clamp(&DVector::zeros(n), lo, hi);
    for _ in 0..MAX_ITERATIONS {
        let grad = h * &x + g;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lo[i] && grad[i] > 0.0) || (x[i] >= hi[i] && grad[i] < 0.0)))
            .collect();
        let mut step = DVector::zeros(n);
        if !free.is_empty() {
            let hf = Matrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_fn(free.len(), |a, _| -grad[free[a]]);
            let sol = solve_spd(hf, gf);
            for (a, &i) in free.iter().enumerate() {
                step[i] = sol[a];
            }
        }
        let f0 = objective(&x);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = clamp(&(&x + &step * alpha), lo, hi);
            let predicted = grad.dot(&(&trial - &x));
            if objective(&trial) <= f0 + ARMIJO * predicted {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else { break };
        let moved = (&next - &x).amax();
        x = next;
        if moved <= 1e-15 * (1.0 + x.amax()) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn interior_minimum() {
        let h = dmatrix![2.0, 0.5; 0.5, 1.0];
        let g = dvector![-1.0, -1.0];
        let x = solve_box_qp(&h, &g, &dvector![-10.0, -10.0], &dvector![10.0, 10.0]);
        let exact = h.clone().try_inverse().unwrap() * -g;
        assert_relative_eq!(x, exact, epsilon = 1e-12);
    }

    #[test]
    fn bound_active() {
        // unconstrained minimum at (2, 3); box caps x1 at 1
        let h = Matrix::identity(2, 2);
        let g = dvector![-2.0, -3.0];
        let x = solve_box_qp(&h, &g, &dvector![-5.0, -5.0], &dvector![1.0, 5.0]);
        assert_relative_eq!(x, dvector![1.0, 3.0], epsilon = 1e-12);
    }

    #[test]
    fn coupled_bound_shifts_free_variable() {
        let h = dmatrix![1.0, 0.9; 0.9, 1.0];
        let g = dvector![1.0, 0.0];
        let x = solve_box_qp(&h, &g, &dvector![0.0, -5.0], &dvector![5.0, 5.0]);
        // x1 pinned at 0 → x2 minimizes ½x2², so 0
        assert_relative_eq!(x, dvector![0.0, 0.0], epsilon = 1e-12);
        let g = dvector![-1.0, 3.0];
        let x = solve_box_qp(&h, &g, &dvector![0.0, -1.0], &dvector![5.0, 5.0]);
        // brute force over a fine grid agrees
        let f = |a: f64, b: f64| 0.5 * (a * a + 1.8 * a * b + b * b) + g[0] * a + g[1] * b;
        let mut best = f64::INFINITY;
        for i in 0..=500 {
            for j in 0..=600 {
                best = best.min(f(i as f64 * 0.01, -1.0 + j as f64 * 0.01));
            }
        }
        assert!(f(x[0], x[1]) <= best + 1e-12);
    }

    #[test]
    fn singular_hessian() {
        let h = Matrix::zeros(2, 2);
        let g = dvector![1.0, -1.0];
        let x = solve_box_qp(&h, &g, &dvector![-1.0, -2.0], &dvector![1.0, 2.0]);
        assert_relative_eq!(x, dvector![-1.0, 2.0], epsilon = 1e-9);
    }
}
