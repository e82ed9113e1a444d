//! Centered-and-scaled versions of the simulated primitives, the workload
//! identity self-check, and the state-space-collapse gap.

use super::engine::Trajectory;
use crate::mincurve::MinCurve;
use crate::model::SystemConfig;
use crate::paths::{PathKind, PiecewisePath};

/// Scaled primitives evaluated at the event times (right-continuous
/// values). Per-class arrays are flattened with stride d.
pub struct ScaledRun {
    pub d: usize,
    pub times: Vec<f64>,
    /// Q-tilde as a piecewise-constant path (duplicate event times merged,
    /// last state wins).
    pub q_tilde: PiecewisePath,
    /// A-tilde_i(t) = (A_i(t) - lambda^n_i t) / (b_n sqrt(n)).
    pub a_tilde: Vec<f64>,
    /// S-tilde_i(T_i(t)) = (D_i(t) - mu^n_i T_i(t)) / (b_n sqrt(n)).
    pub s_tilde_alloc: Vec<f64>,
    /// Z^n_i(t) = (mu^n_i / n)(sqrt(n)/b_n)(rho_i t - T_i(t)).
    pub z_n: Vec<f64>,
    /// Y^n_i(t) = y^n_i t + A-tilde_i(t) - S-tilde_i(T_i(t)).
    pub y_n: Vec<f64>,
}

/// Builds the scaled processes of a completed run.
pub fn scale_trajectory(traj: &Trajectory, config: &SystemConfig) -> ScaledRun {
    let d = traj.d;
    let s = config.md_scale();
    let y_n = config.y_n();
    let rows = traj.rows();
    let mut a_tilde = Vec::with_capacity(rows * d);
    let mut s_tilde_alloc = Vec::with_capacity(rows * d);
    let mut z_n = Vec::with_capacity(rows * d);
    let mut yv = Vec::with_capacity(rows * d);
    for k in 0..rows {
        let t = traj.times[k];
        let (a, dep, alloc) = (traj.arrivals_at(k), traj.departures_at(k), traj.alloc_at(k));
        for i in 0..d {
            let at = (a[i] as f64 - config.lambda_n[i] * t) / s;
            let st = (dep[i] as f64 - config.mu_n[i] * alloc[i]) / s;
            let zn = config.mu_n[i] * (config.rho[i] * t - alloc[i]) / s;
            a_tilde.push(at);
            s_tilde_alloc.push(st);
            z_n.push(zn);
            yv.push(y_n[i] * t + at - st);
        }
    }
    // merge duplicate timestamps (simultaneous events), last state wins
    let mut times = Vec::with_capacity(rows);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for k in 0..rows {
        let q: Vec<f64> = traj.queues_at(k).iter().map(|&q| q as f64 / s).collect();
        if times.last() == Some(&traj.times[k]) {
            *values.last_mut().unwrap() = q;
        } else {
            times.push(traj.times[k]);
            values.push(q);
        }
    }
    let q_tilde = PiecewisePath::new(PathKind::Constant, times, values)
        .expect("event times are valid breakpoints");
    ScaledRun { d, times: traj.times.clone(), q_tilde, a_tilde, s_tilde_alloc, z_n, y_n: yv }
}

/// Maximum absolute residual of the scaled system equation
/// `Q-tilde_i(t) = y^n_i t + A-tilde_i(t) - S-tilde_i(T_i(t)) + Z^n_i(t)`
/// over event times and classes. An algebraic identity of the scaling, so
/// the residual is float roundoff only.
pub fn systeq_residual(traj: &Trajectory, config: &SystemConfig) -> f64 {
    let run = scale_trajectory(traj, config);
    let d = traj.d;
    let s = config.md_scale();
    let mut worst = 0.0f64;
    for k in 0..traj.rows() {
        let q = traj.queues_at(k);
        for i in 0..d {
            let lhs = q[i] as f64 / s;
            let rhs = run.y_n[k * d + i] + run.z_n[k * d + i];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Deviation of the one-dimensional workload identity
/// `theta^n . Q-tilde = Gamma[theta^n . Y^n]` over event times, where
/// `theta^n_i = n / mu^n_i`. Y^n is linear between events and jumps at
/// them, so the running minimum is tracked over both the pre-jump (left
/// limit) and post-jump values at each event time. Zero up to roundoff for
/// any work-conserving policy; an idling policy produces a strictly
/// positive deviation.
pub fn workload_check(traj: &Trajectory, config: &SystemConfig) -> f64 {
    let d = traj.d;
    let s = config.md_scale();
    let theta_n = config.theta_n();
    let y_n = config.y_n();
    let rows = traj.rows();
    // theta^n . Y^n at event time t with counts taken from row kc and the
    // (continuous) allocation from row ka
    let y_dot = |t: f64, kc: usize, ka: usize| -> f64 {
        let (a, dep, alloc) = (traj.arrivals_at(kc), traj.departures_at(kc), traj.alloc_at(ka));
        (0..d)
            .map(|i| {
                let at = (a[i] as f64 - config.lambda_n[i] * t) / s;
                let st = (dep[i] as f64 - config.mu_n[i] * alloc[i]) / s;
                theta_n[i] * (y_n[i] * t + at - st)
            })
            .sum()
    };
    let mut runmin = 0.0f64;
    let mut worst = 0.0f64;
    let mut sup_y = 0.0f64;
    for k in 0..rows {
        let t = traj.times[k];
        if k > 0 {
            // left limit: counts frozen since the previous event
            let left = y_dot(t, k - 1, k);
            runmin = runmin.min(left);
            sup_y = sup_y.max(left.abs());
        }
        let right = y_dot(t, k, k);
        runmin = runmin.min(right);
        sup_y = sup_y.max(right.abs());
        let reflected = right - runmin.min(0.0);
        let wq: f64 = traj
            .queues_at(k)
            .iter()
            .zip(&theta_n)
            .map(|(&q, th)| q as f64 / s * th)
            .sum();
        worst = worst.max((wq - reflected).abs());
    }
    worst
}

/// Reference bound for the workload-check tolerance:
/// `1 + sup_t |theta^n . Y^n(t)|` over event times.
pub fn workload_check_scale(traj: &Trajectory, config: &SystemConfig) -> f64 {
    let d = traj.d;
    let s = config.md_scale();
    let theta_n = config.theta_n();
    let y_n = config.y_n();
    let mut sup = 0.0f64;
    for k in 0..traj.rows() {
        let t = traj.times[k];
        let (a, dep, alloc) = (traj.arrivals_at(k), traj.departures_at(k), traj.alloc_at(k));
        let v: f64 = (0..d)
            .map(|i| {
                let at = (a[i] as f64 - config.lambda_n[i] * t) / s;
                let st = (dep[i] as f64 - config.mu_n[i] * alloc[i]) / s;
                theta_n[i] * (y_n[i] * t + at - st)
            })
            .sum();
        sup = sup.max(v.abs());
    }
    1.0 + sup
}

/// State-space-collapse gap: sup over event times of the Euclidean
/// distance between Q-tilde(t) and the minimizing curve evaluated at the
/// scaled workload theta^n . Q-tilde(t).
pub fn collapse_gap(traj: &Trajectory, config: &SystemConfig, curve: &MinCurve) -> f64 {
    let d = traj.d;
    let s = config.md_scale();
    let theta_n = config.theta_n();
    let mut worst = 0.0f64;
    let mut qt = vec![0.0f64; d];
    for k in 0..traj.rows() {
        let q = traj.queues_at(k);
        let mut w = 0.0;
        for i in 0..d {
            qt[i] = q[i] as f64 / s;
            w += theta_n[i] * qt[i];
        }
        let f = curve.min_curve(w.max(0.0)).expect("nonnegative workload");
        let gap: f64 = (0..d).map(|i| (qt[i] - f[i]) * (qt[i] - f[i])).sum::<f64>().sqrt();
        worst = worst.max(gap);
    }
    worst
}
