//! Piecewise path algebra on [0, T].
//!
//! Carriers for disturbance, dynamics and workload paths, plus the
//! one-dimensional Skorohod map, the per-class time change, oscillation,
//! cost integrals along paths, and the quadratic rate functions of the
//! scaled primitives.

use crate::model::{CostSpec, SystemConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("delta must satisfy 0 < delta <= horizon, got {0}")]
    BadDelta(f64),
    #[error("path value is negative: {0}")]
    NegativePathValue(f64),
    #[error("breakpoints must start at 0, end at the horizon, and be strictly increasing")]
    BadBreakpoints,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    /// Piecewise-linear, continuous; values are node values.
    Linear,
    /// Piecewise-constant, right-continuous with left limits; values hold on
    /// [t_j, t_{j+1}).
    Constant,
}

/// A vector-valued piecewise path on [0, T]. Breakpoints are strictly
/// increasing, starting at 0 and ending at T, with one value vector per
/// breakpoint.
#[derive(Clone, Debug)]
pub struct PiecewisePath {
    kind: PathKind,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewisePath {
    pub fn new(kind: PathKind, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        if times.len() < 2 || times.len() != values.len() || times[0] != 0.0 {
            return Err(PathError::BadBreakpoints);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PathError::BadBreakpoints);
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(PathError::BadBreakpoints);
        }
        Ok(PiecewisePath { kind, times, values })
    }

    pub fn linear(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        Self::new(PathKind::Linear, times, values)
    }

    pub fn constant(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        Self::new(PathKind::Constant, times, values)
    }

    pub fn linear_scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        Self::new(PathKind::Linear, times, values.into_iter().map(|v| vec![v]).collect())
    }

    pub fn zero(kind: PathKind, dim: usize, horizon: f64) -> Self {
        PiecewisePath {
            kind,
            times: vec![0.0, horizon],
            values: vec![vec![0.0; dim], vec![0.0; dim]],
        }
    }

    /// Piecewise-linear path with nodes on the uniform grid of `m` segments.
    pub fn linear_uniform(horizon: f64, values: Vec<Vec<f64>>) -> Result<Self, PathError> {
        let m = values.len() - 1;
        let times = (0..=m).map(|k| horizon * k as f64 / m as f64).collect();
        Self::new(PathKind::Linear, times, values)
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Index of the segment containing t: largest j with times[j] <= t,
    /// capped at the last segment start.
    fn segment_index(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(j) => j.min(self.times.len() - 2),
            Err(j) => j.saturating_sub(1).min(self.times.len() - 2),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, self.horizon());
        let j = self.segment_index(t);
        match self.kind {
            PathKind::Constant => {
                if t >= *self.times.last().unwrap() {
                    self.values.last().unwrap().clone()
                } else {
                    self.values[j].clone()
                }
            }
            PathKind::Linear => {
                let (t0, t1) = (self.times[j], self.times[j + 1]);
                let s = (t - t0) / (t1 - t0);
                self.values[j]
                    .iter()
                    .zip(&self.values[j + 1])
                    .map(|(a, b)| a + s * (b - a))
                    .collect()
            }
        }
    }

    pub fn eval_scalar(&self, t: f64) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        self.eval(t)[0]
    }

    pub fn component(&self, i: usize) -> PiecewisePath {
        PiecewisePath {
            kind: self.kind,
            times: self.times.clone(),
            values: self.values.iter().map(|v| vec![v[i]]).collect(),
        }
    }

    /// Scalar path t -> w . f(t) with the same breakpoints (exact for both
    /// kinds).
    pub fn dot(&self, weights: &[f64]) -> Result<PiecewisePath, PathError> {
        if weights.len() != self.dim() {
            return Err(PathError::DomainMismatch(format!(
                "dot: weights len {} vs dim {}",
                weights.len(),
                self.dim()
            )));
        }
        let values = self
            .values
            .iter()
            .map(|v| vec![v.iter().zip(weights).map(|(a, w)| a * w).sum()])
            .collect();
        Ok(PiecewisePath { kind: self.kind, times: self.times.clone(), values })
    }

    /// Resamples onto the given breakpoints (exact for Linear when the new
    /// set contains the old breakpoints; exact for Constant likewise).
    pub fn resample(&self, times: &[f64]) -> Result<PiecewisePath, PathError> {
        let values = times.iter().map(|&t| self.eval(t)).collect();
        PiecewisePath::new(self.kind, times.to_vec(), values)
    }

    /// Componentwise combination on the union of breakpoints.
    pub fn zip_with(
        &self,
        other: &PiecewisePath,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<PiecewisePath, PathError> {
        if self.dim() != other.dim() {
            return Err(PathError::DomainMismatch("zip_with: dimension".into()));
        }
        if (self.horizon() - other.horizon()).abs() > 1e-12 * self.horizon().max(1.0) {
            return Err(PathError::DomainMismatch("zip_with: horizon".into()));
        }
        let times = union_times(&self.times, &other.times);
        let values = times
            .iter()
            .map(|&t| {
                let a = self.eval(t);
                let b = other.eval(t);
                a.iter().zip(&b).map(|(x, y)| f(*x, *y)).collect()
            })
            .collect();
        PiecewisePath::new(self.kind, times, values)
    }

    pub fn add(&self, other: &PiecewisePath) -> Result<PiecewisePath, PathError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PiecewisePath) -> Result<PiecewisePath, PathError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> PiecewisePath {
        PiecewisePath {
            kind: self.kind,
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.iter().map(|x| c * x).collect()).collect(),
        }
    }

    /// Stacks paths side by side into one vector-valued path on the union of
    /// breakpoints.
    pub fn stack(parts: &[&PiecewisePath]) -> Result<PiecewisePath, PathError> {
        let kind = parts[0].kind;
        let mut times = parts[0].times.clone();
        for p in &parts[1..] {
            if p.kind != kind {
                return Err(PathError::DomainMismatch("stack: kind".into()));
            }
            times = union_times(&times, &p.times);
        }
        let values = times
            .iter()
            .map(|&t| parts.iter().flat_map(|p| p.eval(t)).collect())
            .collect();
        PiecewisePath::new(kind, times, values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// CSV serialization: header `t,v1..vk`, one row per breakpoint.
    pub fn to_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        write!(out, "t")?;
        for i in 1..=self.dim() {
            write!(out, ",v{i}")?;
        }
        writeln!(out)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            write!(out, "{t:.17e}")?;
            for x in v {
                write!(out, ",{x:.17e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Sorted union of two breakpoint sets with exact-duplicate removal.
pub fn union_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => {
                if x <= y {
                    i += 1;
                    if x == y {
                        j += 1;
                    }
                    x
                } else {
                    j += 1;
                    y
                }
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => break,
        };
        if out.last().map_or(true, |&l| t > l) {
            out.push(t);
        }
    }
    out
}

/// The one-dimensional Skorohod map
/// `Gamma[z](t) = z(t) - inf_{s <= t} (z(s) ^ 0)`.
///
/// Exact for piecewise-linear input, inserting at most one extra breakpoint
/// per segment (where the running minimum detaches from the constraint).
pub fn skorohod_map(z: &PiecewisePath) -> Result<PiecewisePath, PathError> {
    if z.dim() != 1 {
        return Err(PathError::DomainMismatch("skorohod_map: scalar path required".into()));
    }
    match z.kind {
        PathKind::Constant => {
            let mut run = 0.0f64;
            let values = z
                .values
                .iter()
                .map(|v| {
                    run = run.min(v[0]);
                    vec![v[0] - run]
                })
                .collect();
            PiecewisePath::new(PathKind::Constant, z.times.clone(), values)
        }
        PathKind::Linear => {
            let mut run = z.values[0][0].min(0.0);
            let mut times = Vec::with_capacity(z.times.len() + 4);
            let mut values = Vec::with_capacity(z.times.len() + 4);
            times.push(0.0);
            values.push(vec![z.values[0][0] - run]);
            for k in 0..z.times.len() - 1 {
                let (t0, t1) = (z.times[k], z.times[k + 1]);
                let (z0, z1) = (z.values[k][0], z.values[k + 1][0]);
                if z1 < run {
                    // new running minimum: the reflected path hits zero where
                    // z crosses the old floor, then stays at zero
                    if z0 > run {
                        let tc = t0 + (t1 - t0) * (z0 - run) / (z0 - z1);
                        if tc > *times.last().unwrap() && tc < t1 {
                            times.push(tc);
                            values.push(vec![0.0]);
                        }
                    }
                    run = z1;
                    times.push(t1);
                    values.push(vec![0.0]);
                } else {
                    times.push(t1);
                    values.push(vec![z1 - run]);
                }
            }
            PiecewisePath::new(PathKind::Linear, times, values)
        }
    }
}

/// Per-class time change: component i of the output is `psi_i(rho_i t)`.
/// Piecewise-linear in, piecewise-linear out with exactly remapped
/// breakpoints.
pub fn time_change_rho(psi: &PiecewisePath, rho: &[f64]) -> Result<PiecewisePath, PathError> {
    if psi.kind != PathKind::Linear {
        return Err(PathError::DomainMismatch("time_change_rho: piecewise-linear required".into()));
    }
    if rho.len() != psi.dim() {
        return Err(PathError::DomainMismatch("time_change_rho: rho length".into()));
    }
    if rho.iter().any(|&r| r <= 0.0 || r > 1.0) {
        return Err(PathError::DomainMismatch("time_change_rho: rho_i in (0,1] required".into()));
    }
    let horizon = psi.horizon();
    let mut times: Vec<f64> = vec![0.0, horizon];
    for &r in rho {
        for &t in psi.times() {
            let mapped = t / r;
            if mapped < horizon {
                times.push(mapped);
            }
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let values = times
        .iter()
        .map(|&t| (0..psi.dim()).map(|i| psi.eval(rho[i] * t)[i]).collect())
        .collect();
    PiecewisePath::new(PathKind::Linear, times, values)
}

/// delta-oscillation `sup { ||f(s) - f(t)|| : |s - t| <= delta }`.
///
/// Exact for piecewise-linear paths: on each pair of segments the squared
/// distance is a convex quadratic of (s, t), so the sup over the feasible
/// polygon is attained at a vertex; all vertices are enumerated.
pub fn oscillation(f: &PiecewisePath, delta: f64) -> Result<f64, PathError> {
    let horizon = f.horizon();
    if delta <= 0.0 || delta > horizon {
        return Err(PathError::BadDelta(delta));
    }
    let times = f.times();
    let k = times.len();
    let dist = |s: f64, t: f64| -> f64 {
        let a = f.eval(s);
        let b = f.eval(t);
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    if f.kind == PathKind::Constant {
        // step path: sup over pairs of breakpoint values reachable within delta
        let mut best = 0.0f64;
        for i in 0..k {
            for j in i..k {
                // segment [t_i, t_{i+1}) carries values[i]; two step values can
                // be compared iff their segments come within delta of each other
                let gap = if j == i { 0.0 } else { times[j] - times[(i + 1).min(k - 1)] };
                if gap <= delta {
                    best = best.max(dist(times[i], times[j]));
                }
            }
        }
        return Ok(best);
    }
    let mut best = 0.0f64;
    for i in 0..k - 1 {
        for j in i..k - 1 {
            if times[j] - times[i + 1] > delta {
                break;
            }
            let (s0, s1) = (times[i], times[i + 1]);
            let (t0, t1) = (times[j], times[j + 1]);
            let mut cands: Vec<(f64, f64)> = Vec::with_capacity(10);
            for &s in &[s0, s1] {
                for &t in &[t0, t1] {
                    if (s - t).abs() <= delta {
                        cands.push((s, t));
                    }
                }
            }
            // intersections of |t - s| = delta with the rectangle edges
            for &s in &[s0, s1] {
                for &t in &[s + delta, s - delta] {
                    if t >= t0 && t <= t1 {
                        cands.push((s, t));
                    }
                }
            }
            for &t in &[t0, t1] {
                for &s in &[t + delta, t - delta] {
                    if s >= s0 && s <= s1 {
                        cands.push((s, t));
                    }
                }
            }
            for (s, t) in cands {
                best = best.max(dist(s, t));
            }
        }
    }
    Ok(best)
}

/// Number of Simpson panels per linear segment in `integrate_cost`.
pub const SIMPSON_PANELS: usize = 64;

/// Integral of the total cost along a nonnegative path:
/// exact segment sums for piecewise-constant paths, composite Simpson with
/// `SIMPSON_PANELS` panels per segment for piecewise-linear paths.
pub fn integrate_cost(phi: &PiecewisePath, cost: &CostSpec) -> Result<f64, PathError> {
    for v in phi.values() {
        for &x in v {
            if x < -1e-12 {
                return Err(PathError::NegativePathValue(x));
            }
        }
    }
    let d = phi.dim();
    let c_of = |v: &[f64]| -> f64 { (0..d).map(|i| cost.c_i(i, v[i].max(0.0))).sum() };
    let times = phi.times();
    let mut total = 0.0;
    match phi.kind {
        PathKind::Constant => {
            for j in 0..times.len() - 1 {
                total += c_of(&phi.values()[j]) * (times[j + 1] - times[j]);
            }
        }
        PathKind::Linear => {
            for j in 0..times.len() - 1 {
                let (t0, t1) = (times[j], times[j + 1]);
                let (v0, v1) = (&phi.values()[j], &phi.values()[j + 1]);
                total += simpson_linear_segment(v0, v1, t1 - t0, &c_of);
            }
        }
    }
    Ok(total)
}

/// Composite Simpson of `g(v0 + s (v1 - v0))` over s in [0,1], scaled by the
/// segment length.
pub(crate) fn simpson_linear_segment(
    v0: &[f64],
    v1: &[f64],
    dt: f64,
    g: &impl Fn(&[f64]) -> f64,
) -> f64 {
    let n = SIMPSON_PANELS;
    let mut buf = vec![0.0; v0.len()];
    let mut eval_at = |s: f64| -> f64 {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = v0[k] + s * (v1[k] - v0[k]);
        }
        g(&buf)
    };
    let mut sum = eval_at(0.0) + eval_at(1.0);
    for k in 1..2 * n {
        let s = k as f64 / (2 * n) as f64;
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * eval_at(s);
    }
    sum * dt / (6.0 * n as f64)
}

/// The quadratic action functional of the scaled primitives: for a
/// piecewise-linear `psi = (psi1, psi2)` (2d components) starting at zero,
///
/// `sum_i 1/(2 s1_i) int (dpsi1_i)^2 + sum_i 1/(2 s2_i) int (dpsi2_i)^2`,
///
/// exact as a sum of slope^2 * dt terms. Returns +infinity when psi(0) != 0,
/// when psi is not piecewise-linear, or when a zero-variance component is
/// not identically zero.
pub fn rate_function(psi: &PiecewisePath, config: &SystemConfig) -> f64 {
    let d = config.d;
    if psi.dim() != 2 * d || psi.kind != PathKind::Linear {
        return f64::INFINITY;
    }
    if psi.values()[0].iter().any(|&x| x != 0.0) {
        return f64::INFINITY;
    }
    let times = psi.times();
    let mut total = 0.0;
    for comp in 0..2 * d {
        let s2 = if comp < d {
            config.sigma1_hat2[comp]
        } else {
            config.sigma2_hat2[comp - d]
        };
        let mut energy = 0.0;
        let mut moved = false;
        for j in 0..times.len() - 1 {
            let dt = times[j + 1] - times[j];
            let dv = psi.values()[j + 1][comp] - psi.values()[j][comp];
            if dv != 0.0 {
                moved = true;
            }
            energy += dv * dv / dt;
        }
        if s2 == 0.0 {
            if moved {
                return f64::INFINITY;
            }
        } else {
            total += energy / (2.0 * s2);
        }
    }
    total
}
