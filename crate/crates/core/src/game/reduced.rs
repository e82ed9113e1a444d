//! One-dimensional reduction of the game.
//!
//! For a fixed scalar workload disturbance h, the cheapest 2d-dimensional
//! disturbance psi with `theta . (psi1 - rho[psi2]) = h` splits the
//! quadratic rate across components. Minimizing
//! `sum_i u_i^2/(2 s1_i) + g_i^2/(2 s2_i)` over slopes with
//! `sum_i theta_i (u_i - rho_i g_i(rho_i t)) = hdot` gives (Lagrange, using
//! that the second block is free on [rho_i T, T], so its energy only
//! accrues over a fraction rho_i of the horizon):
//!
//!   u_i  =  theta_i s1_i hdot / sigma_w^2,
//!   g_i(rho_i t) = -theta_i s2_i hdot(t) / sigma_w^2,
//!   sigma_w^2 = sum_i theta_i^2 (s1_i + rho_i s2_i),
//!
//! and the attained rate is `int hdot^2 / (2 sigma_w^2) dt`. The value is
//! then a supremum over scalar paths h of
//! `int C(f(Gamma[a iota + h])) dt - int hdot^2/(2 sigma_w^2) dt` with
//! drift `a = theta . y`.

use super::{
    game_cost, reflected_cost_integral, workload_cap, workload_variance, CurveTable,
    GameDiagnostics, GameError, GameSolution, CURVE_TABLE_KNOTS,
};
use crate::mincurve::MinCurve;
use crate::model::{CostSpec, SystemConfig};
use crate::paths::{PathKind, PiecewisePath};
use super::optim::{maximize, AscentOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct ReducedObjective<'a> {
    m: usize,
    dt: f64,
    drift: f64,
    sigma_w2: f64,
    table: &'a CurveTable,
    cost: &'a CostSpec,
}

impl ReducedObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (m, dt) = (self.m, self.dt);
        let mut s = vec![0.0; m + 1];
        let mut energy = 0.0;
        let mut acc = 0.0;
        for k in 0..m {
            acc += x[k];
            energy += x[k] * x[k];
            s[k + 1] = self.drift * (k + 1) as f64 * dt + acc;
        }
        let rate = energy / (dt * 2.0 * self.sigma_w2);
        match reflected_cost_integral(&s, dt, self.table, self.cost) {
            Ok(integral) => integral - rate,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Reconstructs the full 2d-dimensional disturbance attaining a scalar
/// workload disturbance h (given by its node values on a uniform grid) at
/// the minimal rate, via the allocation formulas in the module docs. The
/// second block is specified through its time-changed values, i.e.
/// `psi2_i(rho_i t_k) = -theta_i rho_i s2_i h(t_k)/sigma_w^2`, held flat on
/// `[rho_i T, T]`.
fn reconstruct_psi(h_nodes: &[f64], config: &SystemConfig, horizon: f64) -> PiecewisePath {
    let d = config.d;
    let m = h_nodes.len() - 1;
    let sigma_w2 = workload_variance(config);
    let mut times: Vec<f64> = (0..=m).map(|k| horizon * k as f64 / m as f64).collect();
    // breakpoints of the time-changed second block
    for i in 0..d {
        if config.rho[i] < 1.0 {
            for k in 1..=m {
                times.push((config.rho[i] * horizon * k as f64 / m as f64).min(horizon));
            }
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let h_at = |t: f64| -> f64 {
        let pos = (t / horizon * m as f64).min(m as f64);
        let j = (pos.floor() as usize).min(m - 1);
        let frac = pos - j as f64;
        h_nodes[j] + frac * (h_nodes[j + 1] - h_nodes[j])
    };
    let values: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let mut v = vec![0.0; 2 * d];
            for i in 0..d {
                let th = config.theta[i];
                v[i] = th * config.sigma1_hat2[i] * h_at(t) / sigma_w2;
                // psi2_i evaluated at its own clock u = t; it equals the
                // allocation at the pre-image u/rho_i, and is flat once
                // u/rho_i exceeds the horizon
                let pre = (t / config.rho[i]).min(horizon);
                v[d + i] = -th * config.rho[i] * config.sigma2_hat2[i] * h_at(pre) / sigma_w2;
            }
            v
        })
        .collect();
    PiecewisePath::linear(times, values).expect("reconstructed path is valid")
}

/// Solves the game through the one-dimensional workload reduction:
/// maximizes over scalar disturbances h on an m-segment grid, then
/// reconstructs the full-dimensional maximizer and reports the exactly
/// recomputed cost. When `sigma_w^2 = 0` the only admissible disturbance is
/// zero and the value is the cost of the zero disturbance.
pub fn solve_value_reduced(
    config: &SystemConfig,
    curve: &MinCurve,
    cost: &CostSpec,
    m: usize,
) -> Result<GameSolution, GameError> {
    assert!(m >= 8, "grid too coarse: m >= 8 required");
    let sigma_w2 = workload_variance(config);
    let horizon = config.horizon;
    let diag = |iters: usize, spread: f64| GameDiagnostics {
        iterations: iters,
        restarts: 1,
        grid_m: m,
        spread,
    };
    if sigma_w2 <= 0.0 {
        let psi = PiecewisePath::zero(PathKind::Linear, 2 * config.d, horizon);
        return GameSolution::from_psi(psi, config, curve, cost, diag(0, 0.0));
    }
    let dt = horizon / m as f64;
    let drift: f64 = (0..config.d).map(|i| config.theta[i] * config.y[i]).sum();
    let table = CurveTable::build(curve, workload_cap(config), CURVE_TABLE_KNOTS)?;
    let obj = ReducedObjective { m, dt, drift, sigma_w2, table: &table, cost };

    // deterministic ramp starts spanning the plausible slope range, plus a
    // couple of jittered ones; the objective is one-dimensional per node so
    // this is cheap
    let min_index_sup = cost
        .index_sup(&config.mu)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let slope_cap = sigma_w2 * min_index_sup * horizon;
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; m]];
    for frac in [0.25, 0.5, 1.0, 1.5] {
        starts.push(vec![frac * slope_cap * dt; m]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2 {
        let base: f64 = rng.gen::<f64>() * slope_cap;
        starts.push((0..m).map(|_| (base + (rng.gen::<f64>() - 0.5) * slope_cap) * dt).collect());
    }

    let opts = AscentOptions::default();
    let results: Vec<_> = starts
        .into_par_iter()
        .map(|x0| {
            let mut f = |x: &[f64]| obj.value(x);
            maximize(&mut f, x0, &opts)
        })
        .collect();
    let iterations: usize = results.iter().map(|r| r.iterations).sum();

    let mut best: Option<(f64, PiecewisePath)> = None;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &results {
        let mut h = vec![0.0; m + 1];
        let mut acc = 0.0;
        for k in 0..m {
            acc += r.x[k];
            h[k + 1] = acc;
        }
        let psi = reconstruct_psi(&h, config, horizon);
        let v = game_cost(&psi, config, curve, cost)?;
        if !v.is_finite() {
            return Err(GameError::NonFinite);
        }
        lo = lo.min(v);
        hi = hi.max(v);
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, psi));
        }
    }
    let (_, psi) = best.expect("at least one start");
    GameSolution::from_psi(psi, config, curve, cost, diag(iterations, hi - lo))
}
