//! Independent single-move MPC oracle: rollouts written out by hand and an
//! exhaustive grid over the admissible box.

use apc_platform::controllers::{MpcConfig, PredictionModel};
use apc_platform::plant::{ControlInput, LinearModel, PlantState};
use nalgebra::{Matrix2, Vector2};

pub const DT: f64 = 0.002;

#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub x0: PlantState,
    pub r: PlantState,
    pub v_hat: Vector2<f64>,
    pub u_prev: ControlInput,
}

fn rollout_linear(cfg: &MpcConfig, case: &Case, u: Vector2<f64>) -> Vec<Vector2<f64>> {
    let disc = LinearModel::canonical().discretize(DT).unwrap();
    let phi = Matrix2::from_iterator(disc.phi.iter().cloned());
    let gamma = Matrix2::from_iterator(disc.gamma.iter().cloned());
    let xs = Vector2::new(10.0, 1.4);
    let us = Vector2::new(600.0, 150.0);
    let mut x = case.x0.to_vector() - xs;
    (0..cfg.np)
        .map(|_| {
            x = phi * x + gamma * (u + case.v_hat - us);
            x + xs
        })
        .collect()
}

fn rollout_nonlinear(cfg: &MpcConfig, case: &Case, u: Vector2<f64>) -> Vec<Vector2<f64>> {
    let w = u + case.v_hat;
    let f = |x: Vector2<f64>| {
        let inflow = w[0] + w[1];
        Vector2::new(inflow - 750.0, (1.5 * w[0] + w[1] - x[1] * inflow) / x[0].max(3.0))
    };
    let mut x = case.x0.to_vector();
    (0..cfg.np)
        .map(|_| {
            let k1 = f(x);
            let k2 = f(x + k1 * (DT / 2.0));
            let k3 = f(x + k2 * (DT / 2.0));
            let k4 = f(x + k3 * DT);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (DT / 6.0);
            x
        })
        .collect()
}

/// Cost of holding `u` over the horizon, slack taken as the worst bound
/// violation of each output.
pub fn oracle_cost(cfg: &MpcConfig, case: &Case, u: Vector2<f64>) -> f64 {
    let ys = match cfg.model {
        PredictionModel::Linear => rollout_linear(cfg, case, u),
        PredictionModel::Nonlinear => rollout_nonlinear(cfg, case, u),
    };
    let r = case.r.to_vector();
    let lo = [3.0, 1.0];
    let hi = [20.0, 1.5];
    let mut cost = 0.0;
    let mut worst = [0.0f64; 2];
    for y in &ys {
        let e = r - y;
        cost += 1e-3 * e[0] * e[0] + e[1] * e[1];
        for o in 0..2 {
            worst[o] = worst[o].max(lo[o] - y[o]).max(y[o] - hi[o]);
        }
    }
    let du = u - case.u_prev.to_vector();
    cost += 0.5e-7 * du.norm_squared();
    cost + 1e7 * (worst[0] * worst[0] + worst[1] * worst[1])
}

/// Admissible box for the single move: input limits, narrowed by the rate
/// limit around the previous input when one is configured.
pub fn move_box(cfg: &MpcConfig, case: &Case) -> ([f64; 2], [f64; 2]) {
    let mut lo: [f64; 2] = [300.0, 0.0];
    let mut hi: [f64; 2] = [1200.0, 750.0];
    if let Some(rate) = cfg.rate_limit {
        let p = case.u_prev.to_vector();
        for c in 0..2 {
            lo[c] = lo[c].max(p[c] - rate);
            hi[c] = hi[c].min(p[c] + rate);
        }
    }
    (lo, hi)
}

pub fn grid_min(cfg: &MpcConfig, case: &Case, points: usize) -> (f64, Vector2<f64>) {
    let (lo, hi) = move_box(cfg, case);
    let mut best = (f64::INFINITY, Vector2::zeros());
    for i in 0..points {
        for j in 0..points {
            let a = i as f64 / (points - 1) as f64;
            let b = j as f64 / (points - 1) as f64;
            let u = Vector2::new(lo[0] + (hi[0] - lo[0]) * a, lo[1] + (hi[1] - lo[1]) * b);
            let c = oracle_cost(cfg, case, u);
            if c < best.0 {
                best = (c, u);
            }
        }
    }
    best
}
