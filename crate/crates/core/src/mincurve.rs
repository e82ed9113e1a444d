//! The continuous minimizing curve and the dynamic priority partition.
//!
//! For workload w >= 0, `min_curve(w)` is the cheapest queue-length vector q
//! with `theta . q = w`; its image equalizes the indices `mu_i C_i'(q_i)`.
//! `priority_class` is the index rule built from the same quantities: serve
//! the class with the largest `mu_j C_j'(q_j)`, lowest index on ties.

use crate::model::{CostSpec, SystemConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("level {value} outside [0, {hi})")]
    OutOfRange { value: f64, hi: f64 },
    #[error("workload must be nonnegative, got {0}")]
    NegativeWorkload(f64),
    #[error("priority index undefined on the zero vector")]
    ZeroVector,
    #[error("bisection failed to reach tolerance {tol} in {iters} iterations")]
    ToleranceNotMet { tol: f64, iters: usize },
}

/// Root-finder state for the workload-to-level inversion.
#[derive(Clone, Debug)]
pub struct MinCurve {
    theta: Vec<f64>,
    mu: Vec<f64>,
    cost: CostSpec,
    tol_c: f64,
    /// M_i = mu_i sup C_i'.
    index_sup: Vec<f64>,
    min_index_sup: f64,
}

impl MinCurve {
    pub fn new(config: &SystemConfig, cost: &CostSpec) -> Self {
        Self::from_parts(config.mu.clone(), cost.clone())
    }

    pub fn from_parts(mu: Vec<f64>, cost: CostSpec) -> Self {
        let theta: Vec<f64> = mu.iter().map(|m| 1.0 / m).collect();
        let index_sup = cost.index_sup(&mu);
        let min_index_sup = index_sup.iter().cloned().fold(f64::INFINITY, f64::min);
        MinCurve { theta, mu, cost, tol_c: 1e-12, index_sup, min_index_sup }
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    /// Upper end of the valid level range, min_i M_i.
    pub fn level_sup(&self) -> f64 {
        self.min_index_sup
    }

    /// Per-class index bounds M_i = mu_i sup C_i'.
    pub fn index_sup(&self) -> &[f64] {
        &self.index_sup
    }

    /// q^c with `mu_i C_i'(q^c_i) = c` in every class.
    pub fn level_point(&self, c: f64) -> Result<Vec<f64>, CurveError> {
        if c < 0.0 || c >= self.min_index_sup {
            return Err(CurveError::OutOfRange { value: c, hi: self.min_index_sup });
        }
        (0..self.d())
            .map(|i| {
                self.cost
                    .cost_derivative_inverse(i, c / self.mu[i])
                    .map_err(|_| CurveError::OutOfRange { value: c, hi: self.min_index_sup })
            })
            .collect()
    }

    /// F(c) = theta . q^c, strictly increasing with F(0) = 0 and
    /// F(c) -> infinity as c -> min_i M_i.
    pub fn workload_of_level(&self, c: f64) -> Result<f64, CurveError> {
        let q = self.level_point(c)?;
        Ok(q.iter().zip(&self.theta).map(|(x, t)| x * t).sum())
    }

    /// Solves F(c) = w by bisection. The upper bracket starts just below
    /// min_i M_i (where F diverges) and shrinks if F overflows.
    pub fn level_of_workload(&self, w: f64) -> Result<f64, CurveError> {
        if w < 0.0 {
            return Err(CurveError::NegativeWorkload(w));
        }
        if w == 0.0 {
            return Ok(0.0);
        }
        let sup = self.min_index_sup;
        let mut gap = sup * 2.0f64.powi(-20);
        let mut hi;
        loop {
            hi = sup - gap;
            let f = self.workload_of_level(hi)?;
            if !f.is_finite() {
                gap *= 2.0;
                if gap >= sup {
                    return Err(CurveError::ToleranceNotMet { tol: self.tol_c, iters: 0 });
                }
                continue;
            }
            if f >= w {
                break;
            }
            // grow the bracket geometrically toward the divergence point
            gap *= 0.5;
            if gap < sup * 1e-300 {
                return Err(CurveError::ToleranceNotMet { tol: self.tol_c, iters: 0 });
            }
        }
        let mut lo = 0.0f64;
        let tol = self.tol_c * w.max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = self.workload_of_level(mid)?;
            if (f - w).abs() <= tol {
                return Ok(mid);
            }
            // bracket collapsed to ulp level: F is so steep here (near the
            // divergence) that no representable level does better
            if (hi - lo) <= f64::EPSILON * sup {
                return Ok(mid);
            }
            if f < w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(CurveError::ToleranceNotMet { tol, iters: 200 })
    }

    /// f(w): the cheapest q >= 0 with theta . q = w.
    pub fn min_curve(&self, w: f64) -> Result<Vec<f64>, CurveError> {
        if w < 0.0 {
            return Err(CurveError::NegativeWorkload(w));
        }
        if w == 0.0 {
            return Ok(vec![0.0; self.d()]);
        }
        let c = self.level_of_workload(w)?;
        self.level_point(c)
    }

    /// The serving class for scaled queue lengths q: smallest index
    /// attaining `max_j mu_j C_j'(q_j)`. Exact comparison, no tolerance band.
    pub fn priority_class(&self, q: &[f64]) -> Result<usize, CurveError> {
        if q.iter().all(|&x| x == 0.0) {
            return Err(CurveError::ZeroVector);
        }
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (j, &x) in q.iter().enumerate() {
            let v = self.mu[j] * self.cost.cprime_i(j, x.max(0.0));
            if v > best_val {
                best = j;
                best_val = v;
            }
        }
        Ok(best)
    }
}
