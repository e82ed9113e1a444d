//! The limiting differential game: minimizing strategy, game cost, and
//! numerical computation of the value by path-space maximization.
//!
//! The minimizing strategy associates with each disturbance path psi the
//! 4-tuple (xi, w, phi, zeta): the free dynamics xi, the reflected workload
//! w, the state phi on the minimizing curve, and the control zeta. The value
//! is the sup over disturbances of `int C(phi) dt - I(psi)`. Three
//! computations of the value exist: the full path-space ascent here, the
//! one-dimensional reduction in [`reduced`], and the dynamic-programming
//! oracle in [`dp`]; they are compared against each other since the ascent
//! carries no global-optimality certificate.

pub mod dp;
pub mod optim;
pub mod reduced;

pub use dp::dp_oracle_value;
pub use reduced::solve_value_reduced;

use crate::mincurve::{CurveError, MinCurve};
use crate::model::{CostSpec, SystemConfig};
use crate::paths::{
    self, integrate_cost, rate_function, skorohod_map, time_change_rho, union_times, PathError,
    PathKind, PiecewisePath,
};
use optim::{maximize, AscentOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("objective evaluated to a non-finite value")]
    NonFinite,
    #[error("dynamic-programming grid too coarse: value {coarse} vs refined {fine}")]
    GridTooCoarse { coarse: f64, fine: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Effective workload variance of the reflected one-dimensional problem:
/// `sigma_w^2 = sum_i theta_i^2 (s1_i + rho_i s2_i)`.
///
/// See [`reduced`] for the derivation from the quadratic rate function.
pub fn workload_variance(config: &SystemConfig) -> f64 {
    (0..config.d)
        .map(|i| {
            config.theta[i]
                * config.theta[i]
                * (config.sigma1_hat2[i] + config.rho[i] * config.sigma2_hat2[i])
        })
        .sum()
}

/// Dense lookup table for the minimizing curve, parameterized by the
/// equalized index level c (where both the workload F(c) and the point q^c
/// are smooth). Falls back to the exact bisection solve beyond its cap.
pub struct CurveTable {
    w: Vec<f64>,
    q: Vec<Vec<f64>>,
    w_cap: f64,
    curve: MinCurve,
}

impl CurveTable {
    pub fn build(curve: &MinCurve, w_cap: f64, knots: usize) -> Result<Self, CurveError> {
        let c_cap = curve.level_of_workload(w_cap)?;
        let mut w = Vec::with_capacity(knots + 1);
        let mut q = Vec::with_capacity(knots + 1);
        for k in 0..=knots {
            let c = c_cap * k as f64 / knots as f64;
            let point = curve.level_point(c)?;
            w.push(point.iter().zip(curve.theta()).map(|(x, t)| x * t).sum());
            q.push(point);
        }
        Ok(CurveTable { w, q, w_cap, curve: curve.clone() })
    }

    pub fn dim(&self) -> usize {
        self.q[0].len()
    }

    /// f(w) into a caller buffer.
    pub fn f_into(&self, w: f64, out: &mut [f64]) -> Result<(), CurveError> {
        if w <= 0.0 {
            out.fill(0.0);
            return Ok(());
        }
        if w >= self.w_cap {
            let exact = self.curve.min_curve(w)?;
            out.copy_from_slice(&exact);
            return Ok(());
        }
        let j = match self.w.binary_search_by(|x| x.partial_cmp(&w).unwrap()) {
            Ok(j) => j.min(self.w.len() - 2),
            Err(j) => j.saturating_sub(1).min(self.w.len() - 2),
        };
        let s = (w - self.w[j]) / (self.w[j + 1] - self.w[j]);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.q[j][k] + s * (self.q[j + 1][k] - self.q[j][k]);
        }
        Ok(())
    }
}

/// The 4-tuple associated with a disturbance path.
pub struct StrategyTuple {
    pub xi: PiecewisePath,
    pub w: PiecewisePath,
    pub phi: PiecewisePath,
    pub zeta: PiecewisePath,
}

fn slice_components(p: &PiecewisePath, lo: usize, hi: usize) -> PiecewisePath {
    PiecewisePath::new(
        p.kind(),
        p.times().to_vec(),
        p.values().iter().map(|v| v[lo..hi].to_vec()).collect(),
    )
    .expect("slice of a valid path is valid")
}

/// The minimizing strategy: from a 2d-dimensional piecewise-linear
/// disturbance psi = (psi1, psi2) starting at zero, computes
/// `xi = y iota + psi1 - rho[psi2]`, `w = Gamma[theta . xi]`,
/// `phi = f(w)`, `zeta = phi - xi`.
pub fn strategy_zeta_star(
    psi: &PiecewisePath,
    config: &SystemConfig,
    curve: &MinCurve,
) -> Result<StrategyTuple, GameError> {
    let d = config.d;
    if psi.dim() != 2 * d {
        return Err(PathError::DomainMismatch(format!(
            "strategy: psi must have {} components, got {}",
            2 * d,
            psi.dim()
        ))
        .into());
    }
    let psi1 = slice_components(psi, 0, d);
    let psi2 = slice_components(psi, d, 2 * d);
    let tc = time_change_rho(&psi2, &config.rho)?;
    let times = union_times(psi1.times(), tc.times());
    let xi_values: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let a = psi1.eval(t);
            let b = tc.eval(t);
            (0..d).map(|i| config.y[i] * t + a[i] - b[i]).collect()
        })
        .collect();
    let xi = PiecewisePath::linear(times, xi_values)?;
    let w = skorohod_map(&xi.dot(&config.theta)?)?;
    let phi_values: Vec<Vec<f64>> = w
        .values()
        .iter()
        .map(|v| curve.min_curve(v[0].max(0.0)))
        .collect::<Result<_, _>>()?;
    let phi = PiecewisePath::linear(w.times().to_vec(), phi_values)?;
    let zeta = phi.sub(&xi)?;
    Ok(StrategyTuple { xi, w, phi, zeta })
}

/// Game cost `int C(phi) dt - I(psi)` under the minimizing strategy.
pub fn game_cost(
    psi: &PiecewisePath,
    config: &SystemConfig,
    curve: &MinCurve,
    cost: &CostSpec,
) -> Result<f64, GameError> {
    let rate = rate_function(psi, config);
    if rate.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let tuple = strategy_zeta_star(psi, config, curve)?;
    Ok(integrate_cost(&tuple.phi, cost)? - rate)
}

/// Integral of C along the reflected, curve-composed path: `s` holds the
/// nodes of theta . xi on a uniform grid with spacing `dt`; the reflected
/// workload is piecewise-linear with at most one extra breakpoint per
/// segment (where the running minimum detaches), and the state is the
/// piecewise-linear interpolation of f(w) between breakpoints, integrated
/// with the same Simpson rule as `integrate_cost`.
fn reflected_cost_integral(
    s: &[f64],
    dt: f64,
    table: &CurveTable,
    cost: &CostSpec,
) -> Result<f64, CurveError> {
    let d = table.dim();
    let c_of = |v: &[f64]| -> f64 { (0..d).map(|i| cost.c_i(i, v[i].max(0.0))).sum() };
    let mut run = s[0].min(0.0);
    let mut qa = vec![0.0; d];
    let mut qb = vec![0.0; d];
    let mut total = 0.0;
    table.f_into(s[0] - run, &mut qa)?;
    for k in 0..s.len() - 1 {
        let (sa, sb) = (s[k], s[k + 1]);
        if sb >= run {
            table.f_into(sb - run, &mut qb)?;
            total += paths::simpson_linear_segment(&qa, &qb, dt, &c_of);
        } else {
            // running minimum detaches inside the segment; the workload
            // hits zero there and stays at zero (zero cost) until the end
            let wa = sa - run;
            if wa > 0.0 {
                let lam = wa / (sa - sb);
                qb.fill(0.0);
                total += paths::simpson_linear_segment(&qa, &qb, lam * dt, &c_of);
            }
            run = sb;
            qb.fill(0.0);
        }
        std::mem::swap(&mut qa, &mut qb);
    }
    Ok(total)
}

/// Grid-based objective for the full-dimensional ascent: disturbance node
/// increments for the active (positive-variance) components.
struct FullObjective<'a> {
    d: usize,
    m: usize,
    dt: f64,
    theta: &'a [f64],
    rho: &'a [f64],
    y: &'a [f64],
    sigma1: &'a [f64],
    sigma2: &'a [f64],
    active: &'a [usize],
    table: &'a CurveTable,
    cost: &'a CostSpec,
}

impl FullObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (d, m, dt) = (self.d, self.m, self.dt);
        let mut nodes = vec![0.0; 2 * d * (m + 1)];
        let mut rate = 0.0;
        for (ai, &comp) in self.active.iter().enumerate() {
            let s2 = if comp < d { self.sigma1[comp] } else { self.sigma2[comp - d] };
            let base = comp * (m + 1);
            let mut acc = 0.0;
            let mut energy = 0.0;
            for k in 0..m {
                let inc = x[ai * m + k];
                acc += inc;
                nodes[base + k + 1] = acc;
                energy += inc * inc;
            }
            rate += energy / (dt * 2.0 * s2);
        }
        let mut s = vec![0.0; m + 1];
        for (k, sk) in s.iter_mut().enumerate() {
            let t = k as f64 * dt;
            let mut acc = 0.0;
            for i in 0..d {
                let psi1 = nodes[i * (m + 1) + k];
                let pos = (self.rho[i] * t / dt).min(m as f64);
                let j = (pos.floor() as usize).min(m - 1);
                let frac = pos - j as f64;
                let b2 = (d + i) * (m + 1);
                let psi2 = nodes[b2 + j] + frac * (nodes[b2 + j + 1] - nodes[b2 + j]);
                acc += self.theta[i] * (self.y[i] * t + psi1 - psi2);
            }
            *sk = acc;
        }
        match reflected_cost_integral(&s, dt, self.table, self.cost) {
            Ok(integral) => integral - rate,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Rebuilds the 2d-dimensional disturbance path from the flattened
    /// increment vector.
    fn psi_path(&self, x: &[f64], horizon: f64) -> PiecewisePath {
        let (d, m) = (self.d, self.m);
        let mut values = vec![vec![0.0; 2 * d]; m + 1];
        for (ai, &comp) in self.active.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..m {
                acc += x[ai * m + k];
                values[k + 1][comp] = acc;
            }
        }
        PiecewisePath::linear_uniform(horizon, values).expect("uniform grid path is valid")
    }
}

#[derive(Clone, Debug)]
pub struct GameDiagnostics {
    pub iterations: usize,
    pub restarts: usize,
    pub grid_m: usize,
    /// Best minus worst final value across restarts.
    pub spread: f64,
}

pub struct GameSolution {
    pub psi_star: PiecewisePath,
    pub xi_star: PiecewisePath,
    pub w_star: PiecewisePath,
    pub phi_star: PiecewisePath,
    pub zeta_star: PiecewisePath,
    pub value: f64,
    pub diagnostics: GameDiagnostics,
}

impl GameSolution {
    fn from_psi(
        psi: PiecewisePath,
        config: &SystemConfig,
        curve: &MinCurve,
        cost: &CostSpec,
        diagnostics: GameDiagnostics,
    ) -> Result<Self, GameError> {
        let tuple = strategy_zeta_star(&psi, config, curve)?;
        let value = integrate_cost(&tuple.phi, cost)? - rate_function(&psi, config);
        if !value.is_finite() {
            return Err(GameError::NonFinite);
        }
        Ok(GameSolution {
            psi_star: psi,
            xi_star: tuple.xi,
            w_star: tuple.w,
            phi_star: tuple.phi,
            zeta_star: tuple.zeta,
            value,
            diagnostics,
        })
    }
}

/// A generous workload cap for curve tables: beyond it lookups fall back to
/// the exact solve.
pub(crate) fn workload_cap(config: &SystemConfig) -> f64 {
    let drift: f64 = (0..config.d).map(|i| config.theta[i] * config.y[i]).sum();
    let noise = (workload_variance(config) * config.horizon).sqrt();
    4.0 * (drift.max(0.0) * config.horizon + 6.0 * noise) + 1.0
}

pub const CURVE_TABLE_KNOTS: usize = 8192;

/// Maximizes the game cost over piecewise-linear disturbances with `m`
/// uniform segments (2d * m increment variables), by finite-difference
/// ascent from the zero start plus `restarts` random starts. Components
/// whose hat-variance vanishes are pinned at zero (the rate function is
/// infinite off zero there).
pub fn solve_value_full(
    config: &SystemConfig,
    curve: &MinCurve,
    cost: &CostSpec,
    m: usize,
    restarts: usize,
    seed: u64,
) -> Result<GameSolution, GameError> {
    assert!(m >= 8, "grid too coarse: m >= 8 required");
    assert!(restarts >= 1, "at least one restart required");
    let d = config.d;
    let horizon = config.horizon;
    let dt = horizon / m as f64;
    let active: Vec<usize> = (0..2 * d)
        .filter(|&comp| {
            if comp < d {
                config.sigma1_hat2[comp] > 0.0
            } else {
                config.sigma2_hat2[comp - d] > 0.0
            }
        })
        .collect();

    let diag_zero = |iters: usize, spread: f64| GameDiagnostics {
        iterations: iters,
        restarts,
        grid_m: m,
        spread,
    };
    if active.is_empty() {
        // all variances vanish: the optimizer is confined to psi = 0
        let psi = PiecewisePath::zero(PathKind::Linear, 2 * d, horizon);
        return GameSolution::from_psi(psi, config, curve, cost, diag_zero(0, 0.0));
    }

    let table = CurveTable::build(curve, workload_cap(config), CURVE_TABLE_KNOTS)?;
    let obj = FullObjective {
        d,
        m,
        dt,
        theta: &config.theta,
        rho: &config.rho,
        y: &config.y,
        sigma1: &config.sigma1_hat2,
        sigma2: &config.sigma2_hat2,
        active: &active,
        table: &table,
        cost,
    };

    let nvars = active.len() * m;
    let sigma_w2 = workload_variance(config);
    let min_index_sup = cost
        .index_sup(&config.mu)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    // the known optimal structure is a common workload ramp allocated
    // across components in proportion to theta_i * variance; random starts
    // jitter around ramps of random size
    let ramp_scale = sigma_w2 * min_index_sup * horizon;
    let starts: Vec<Vec<f64>> = (0..=restarts)
        .map(|r| {
            if r == 0 {
                return vec![0.0; nvars];
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let gamma: f64 = rng.gen::<f64>() * 2.0;
            let mut x = vec![0.0; nvars];
            for (ai, &comp) in active.iter().enumerate() {
                let (i, sign, s2) = if comp < d {
                    (comp, 1.0, config.sigma1_hat2[comp])
                } else {
                    (comp - d, -1.0, config.rho[comp - d] * config.sigma2_hat2[comp - d])
                };
                let slope = sign * gamma * ramp_scale * config.theta[i] * s2 / sigma_w2;
                for k in 0..m {
                    let jitter: f64 = rng.gen::<f64>() - 0.5;
                    x[ai * m + k] = (slope + slope.abs().max(0.1) * jitter) * dt;
                }
            }
            x
        })
        .collect();

    let opts = AscentOptions::default();
    let results: Vec<_> = starts
        .into_par_iter()
        .map(|x0| {
            let mut f = |x: &[f64]| obj.value(x);
            maximize(&mut f, x0, &opts)
        })
        .collect();

    let iterations: usize = results.iter().map(|r| r.iterations).sum();
    // rank candidates by the exact public cost, not the grid objective
    let mut best: Option<(f64, PiecewisePath)> = None;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &results {
        let psi = obj.psi_path(&r.x, horizon);
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
    GameSolution::from_psi(psi, config, curve, cost, diag_zero(iterations, hi - lo))
}
