//! Dynamic-programming oracle for the reduced game.
//!
//! Backward value iteration on a (time, workload) grid for the scalar
//! control problem `sup_h int_0^T [c(w) - hdot^2/(2 sigma_w^2)] dt` with
//! `w = Gamma[a iota + h]`, `a = theta . y`, and running reward
//! `c(w) = sum_i C_i(f_i(w))`. Independent of the path-space ascent: no
//! shared optimizer code, only the minimizing curve and the cost family.

use super::{workload_variance, GameError};
use crate::mincurve::MinCurve;
use crate::model::{CostSpec, SystemConfig};

/// One backward value iteration on a K x (W+1) grid. Controls are constant
/// slopes hdot chosen from a symmetric stencil; reflection at zero is the
/// clamp `w' = max(w + (a + hdot) dt, 0)`, exact for one-sided reflection
/// of a linear segment. Returns the value at (t=0, w=0).
fn dp_pass(
    config: &SystemConfig,
    curve: &MinCurve,
    cost: &CostSpec,
    k_steps: usize,
    w_points: usize,
    w_max: f64,
) -> Result<f64, GameError> {
    let sigma_w2 = workload_variance(config);
    let a: f64 = (0..config.d).map(|i| config.theta[i] * config.y[i]).sum();
    let dt = config.horizon / k_steps as f64;
    let dw = w_max / w_points as f64;

    // running reward per grid node, computed once from the exact curve
    let reward: Vec<f64> = (0..=w_points)
        .map(|j| {
            let q = curve.min_curve(j as f64 * dw)?;
            Ok(q.iter().enumerate().map(|(i, &x)| cost.c_i(i, x)).sum())
        })
        .collect::<Result<_, GameError>>()?;

    // control stencil: |hdot| up to u_max, which dominates the optimal
    // slope sigma_w^2 * V_w (V_w <= T * min_i mu_i ||C_i'||, the slope of
    // the reward in w) plus the drift
    let min_index_sup = cost
        .index_sup(&config.mu)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let u_max = 2.0 * sigma_w2 * config.horizon * min_index_sup + 2.0 * a.abs();
    let n_ctrl = 80usize;
    let controls: Vec<f64> = if sigma_w2 > 0.0 {
        (0..=2 * n_ctrl)
            .map(|k| u_max * (k as f64 - n_ctrl as f64) / n_ctrl as f64)
            .collect()
    } else {
        vec![0.0]
    };

    let interp = |v: &[f64], w: f64| -> f64 {
        let pos = (w / dw).min(w_points as f64);
        let j = (pos.floor() as usize).min(w_points - 1);
        let frac = pos - j as f64;
        v[j] + frac * (v[j + 1] - v[j])
    };
    // three-point quadratic interpolation for the value function: linear
    // interpolation biases the value by O(dw^2/dt) per step, which does not
    // vanish under simultaneous grid doubling
    let interp3 = |v: &[f64], w: f64| -> f64 {
        let pos = (w / dw).min(w_points as f64);
        let j = ((pos.round() as usize).saturating_sub(1)).min(w_points - 2);
        let s = pos - j as f64; // in [~0.5, ~1.5] away from the edges
        let (v0, v1, v2) = (v[j], v[j + 1], v[j + 2]);
        v0 + s * (v1 - v0) + 0.5 * s * (s - 1.0) * (v2 - 2.0 * v1 + v0)
    };

    let mut value = vec![0.0f64; w_points + 1]; // terminal condition V(T, .) = 0
    let mut next = vec![0.0f64; w_points + 1];
    for _ in 0..k_steps {
        for j in 0..=w_points {
            let w = j as f64 * dw;
            let mut best = f64::NEG_INFINITY;
            for &u in &controls {
                let wn = (w + (a + u) * dt).max(0.0).min(w_max);
                let run = if sigma_w2 > 0.0 { u * u / (2.0 * sigma_w2) } else { 0.0 };
                // trapezoidal running reward along the step
                let rw = 0.5 * (reward[j] + interp(&reward, wn));
                let cand = (rw - run) * dt + interp3(&value, wn);
                if cand > best {
                    best = cand;
                }
            }
            next[j] = best;
        }
        std::mem::swap(&mut value, &mut next);
    }
    Ok(value[0])
}

/// Value of the reduced game by backward dynamic programming, with a
/// built-in refinement check: the grid is doubled in both time and space
/// and the two values must agree to 1%; otherwise `GridTooCoarse`.
pub fn dp_oracle_value(
    config: &SystemConfig,
    curve: &MinCurve,
    cost: &CostSpec,
    k_steps: usize,
    w_points: usize,
    w_max: f64,
) -> Result<f64, GameError> {
    assert!(k_steps >= 4 && w_points >= 4, "dp grid too small");
    assert!(w_max > 0.0, "w_max must be positive");
    let coarse = dp_pass(config, curve, cost, k_steps, w_points, w_max)?;
    let fine = dp_pass(config, curve, cost, 2 * k_steps, 2 * w_points, w_max)?;
    let scale = coarse.abs().max(fine.abs()).max(1e-9);
    if (coarse - fine).abs() > 0.01 * scale {
        return Err(GameError::GridTooCoarse { coarse, fine });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistKind;
    use crate::paths::{PathKind, PiecewisePath};

    fn d1(y: f64, s1: f64, s2: f64) -> SystemConfig {
        let mut cfg = SystemConfig::unchecked(
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![1.0],
            vec![y],
            vec![0.0],
            vec![DistKind::Exponential],
            vec![DistKind::Exponential],
            1024,
            4.0,
            1.0,
        );
        cfg.sigma1_hat2 = vec![s1];
        cfg.sigma2_hat2 = vec![s2];
        cfg
    }

    #[test]
    fn degenerate_variance_reduces_to_deterministic_flow() {
        // sigma_w^2 = 0 and positive drift: w(t) = y t, value is the exact
        // integral of C(f(yt)); with mu = 1, f = identity on workload
        let cfg = d1(1.0, 0.0, 0.0);
        let cost = CostSpec::uniform(1, 1.0, 1.0, 2.0).unwrap();
        let curve = MinCurve::new(&cfg, &cost);
        let v = dp_oracle_value(&cfg, &curve, &cost, 64, 64, 2.0).unwrap();
        let expect = (2.0f64.sqrt() + 1.0f64.asinh()) / 2.0 - 1.0;
        assert!((v - expect).abs() < 0.01 * expect, "dp {v} vs exact {expect}");
    }

    #[test]
    fn dp_dominates_any_fixed_disturbance() {
        // the DP value is a sup, so it must weakly dominate the cost of the
        // zero disturbance computed by the public game-cost route
        let cfg = d1(0.5, 1.0, 1.0);
        let cost = CostSpec::uniform(1, 1.0, 1.0, 2.0).unwrap();
        let curve = MinCurve::new(&cfg, &cost);
        let v = dp_oracle_value(&cfg, &curve, &cost, 128, 256, 6.0).unwrap();
        let zero = PiecewisePath::zero(PathKind::Linear, 2, 1.0);
        let base = super::super::game_cost(&zero, &cfg, &curve, &cost).unwrap();
        assert!(v >= base - 0.01 * base.abs().max(1e-3), "dp {v} below zero-psi cost {base}");
    }
}
