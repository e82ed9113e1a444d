//! System parameters, heavy-traffic scaling regime, and the convex cost family.
//!
//! A `SystemConfig` holds the per-class arrival/service rates at scaling level
//! `n` together with their limits and second-order perturbations, and all
//! derived constants (`rho`, `theta`, `y`, the hat-variances) used by the
//! scheduling policies, the simulator and the game solvers. A `CostSpec`
//! holds the per-class strictly convex cost family
//! `C_i(x) = (a_i + b_i x^p_i)^(1/p_i) - a_i^(1/p_i)`
//! with bounded derivative, which is the only family shipped here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("critical load violated: sum rho_i = {0}, expected 1")]
    CriticalLoadViolation(f64),
    #[error("scaling violated: need 0 < b_n < sqrt(n), got b_n = {b_n}, sqrt(n) = {sqrt_n}")]
    ScalingViolation { b_n: f64, sqrt_n: f64 },
    #[error("rate must be strictly positive (class {0})")]
    NonpositiveRate(usize),
    #[error("horizon must be positive, got {0}")]
    NonpositiveHorizon(f64),
    #[error("negative argument: {0}")]
    NegativeArgument(f64),
    #[error("argument {value} outside [{lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("cost parameters must satisfy a > 0, b > 0, p > 1 (class {0})")]
    BadCostParams(usize),
    #[error("at least one class required")]
    NoClasses,
    #[error("hyperexponential parameters invalid: p in [0,1] and rates positive required")]
    BadDistribution,
}

/// Unit-mean inter-arrival / service time distribution descriptors.
///
/// The menu is restricted to laws with finite exponential moments;
/// deterministic is allowed for hand-checkable unit tests and flagged in
/// reports because it degenerates the hat-variances and the game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DistKind {
    Exponential,
    Erlang { k: u32 },
    Hyperexp { p: f64, r1: f64, r2: f64 },
    Deterministic,
}

impl DistKind {
    /// Variance of the unit-mean normalized law.
    pub fn variance(&self) -> f64 {
        match self {
            DistKind::Exponential => 1.0,
            DistKind::Erlang { k } => 1.0 / (*k as f64),
            DistKind::Hyperexp { p, r1, r2 } => {
                let m1 = p / r1 + (1.0 - p) / r2;
                let m2 = 2.0 * p / (r1 * r1) + 2.0 * (1.0 - p) / (r2 * r2);
                m2 / (m1 * m1) - 1.0
            }
            DistKind::Deterministic => 0.0,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, DistKind::Deterministic)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            DistKind::Erlang { k } if *k == 0 => Err(ModelError::BadDistribution),
            DistKind::Hyperexp { p, r1, r2 } => {
                if !(0.0..=1.0).contains(p) || *r1 <= 0.0 || *r2 <= 0.0 {
                    Err(ModelError::BadDistribution)
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Per-class raw parameters as ingested from a config document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassSpec {
    pub lambda: f64,
    pub mu: f64,
    #[serde(default)]
    pub lambda_tilde: f64,
    #[serde(default)]
    pub mu_tilde: f64,
    #[serde(default = "default_dist")]
    pub ia_dist: DistKind,
    #[serde(default = "default_dist")]
    pub st_dist: DistKind,
    #[serde(default = "CostParams::default")]
    pub cost: CostParams,
}

fn default_dist() -> DistKind {
    DistKind::Exponential
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostParams {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { a: 1.0, b: 1.0, p: 2.0 }
    }
}

/// The config document schema: `classes[]`, `n`, `b_n` or `b_exponent`,
/// `horizon`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawConfig {
    pub classes: Vec<ClassSpec>,
    pub n: u64,
    #[serde(default)]
    pub b_n: Option<f64>,
    #[serde(default)]
    pub b_exponent: Option<f64>,
    pub horizon: f64,
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Effective b_n: explicit value wins, otherwise n^b_exponent,
    /// otherwise the default exponent 0.2.
    pub fn effective_b_n(&self) -> f64 {
        match (self.b_n, self.b_exponent) {
            (Some(b), _) => b,
            (None, Some(beta)) => (self.n as f64).powf(beta),
            (None, None) => (self.n as f64).powf(0.2),
        }
    }

    pub fn with_n(&self, n: u64) -> Self {
        let mut c = self.clone();
        c.n = n;
        c
    }
}

/// Validated system parameters with all derived constants.
#[derive(Clone, Debug)]
pub struct SystemConfig {
    pub d: usize,
    pub n: u64,
    pub b_n: f64,
    pub horizon: f64,
    /// Integer-valued rates at level n, synthesized by rounding.
    pub lambda_n: Vec<f64>,
    pub mu_n: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub ia_dist: Vec<DistKind>,
    pub st_dist: Vec<DistKind>,
    pub sigma2_ia: Vec<f64>,
    pub sigma2_st: Vec<f64>,
    // derived
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma1_hat2: Vec<f64>,
    pub sigma2_hat2: Vec<f64>,
}

pub const CRITICAL_LOAD_TOL: f64 = 1e-12;

/// Builds and validates a `SystemConfig` plus the associated `CostSpec`.
///
/// Integer rates at level n are synthesized as
/// `lambda_n_i = round(n lambda_i + b_n sqrt(n) lambda_tilde_i)` (same for
/// mu), so the second-order limits hold by construction up to O(1/(b_n
/// sqrt(n))) rounding slack.
pub fn build_config(raw: &RawConfig) -> Result<(SystemConfig, CostSpec), ModelError> {
    let d = raw.classes.len();
    if d == 0 {
        return Err(ModelError::NoClasses);
    }
    if raw.horizon <= 0.0 {
        return Err(ModelError::NonpositiveHorizon(raw.horizon));
    }
    let n = raw.n.max(1);
    let b_n = raw.effective_b_n();
    let sqrt_n = (n as f64).sqrt();
    if !(b_n > 0.0) || b_n >= sqrt_n {
        return Err(ModelError::ScalingViolation { b_n, sqrt_n });
    }

    let mut rho_sum = 0.0;
    for (i, c) in raw.classes.iter().enumerate() {
        if c.lambda <= 0.0 || c.mu <= 0.0 {
            return Err(ModelError::NonpositiveRate(i));
        }
        c.ia_dist.validate()?;
        c.st_dist.validate()?;
        rho_sum += c.lambda / c.mu;
    }
    if (rho_sum - 1.0).abs() > CRITICAL_LOAD_TOL {
        return Err(ModelError::CriticalLoadViolation(rho_sum));
    }

    let nf = n as f64;
    let scale = b_n * sqrt_n;
    let synth = |rate: f64, tilde: f64, i: usize| -> Result<f64, ModelError> {
        let v = (nf * rate + scale * tilde).round();
        if v < 1.0 {
            return Err(ModelError::NonpositiveRate(i));
        }
        Ok(v)
    };

    let mut cfg = SystemConfig {
        d,
        n,
        b_n,
        horizon: raw.horizon,
        lambda_n: Vec::with_capacity(d),
        mu_n: Vec::with_capacity(d),
        lambda: Vec::with_capacity(d),
        mu: Vec::with_capacity(d),
        lambda_tilde: Vec::with_capacity(d),
        mu_tilde: Vec::with_capacity(d),
        ia_dist: Vec::with_capacity(d),
        st_dist: Vec::with_capacity(d),
        sigma2_ia: Vec::with_capacity(d),
        sigma2_st: Vec::with_capacity(d),
        rho: Vec::with_capacity(d),
        theta: Vec::with_capacity(d),
        y: Vec::with_capacity(d),
        sigma1_hat2: Vec::with_capacity(d),
        sigma2_hat2: Vec::with_capacity(d),
    };
    for (i, c) in raw.classes.iter().enumerate() {
        let rho = c.lambda / c.mu;
        cfg.lambda_n.push(synth(c.lambda, c.lambda_tilde, i)?);
        cfg.mu_n.push(synth(c.mu, c.mu_tilde, i)?);
        cfg.lambda.push(c.lambda);
        cfg.mu.push(c.mu);
        cfg.lambda_tilde.push(c.lambda_tilde);
        cfg.mu_tilde.push(c.mu_tilde);
        cfg.sigma2_ia.push(c.ia_dist.variance());
        cfg.sigma2_st.push(c.st_dist.variance());
        cfg.ia_dist.push(c.ia_dist.clone());
        cfg.st_dist.push(c.st_dist.clone());
        cfg.rho.push(rho);
        cfg.theta.push(1.0 / c.mu);
        cfg.y.push(c.lambda_tilde - rho * c.mu_tilde);
        cfg.sigma1_hat2.push(c.lambda * c.ia_dist.variance());
        cfg.sigma2_hat2.push(c.mu * c.st_dist.variance());
    }

    let cost = CostSpec::new(
        raw.classes.iter().map(|c| c.cost.a).collect(),
        raw.classes.iter().map(|c| c.cost.b).collect(),
        raw.classes.iter().map(|c| c.cost.p).collect(),
    )?;
    Ok((cfg, cost))
}

impl SystemConfig {
    /// Scale factor b_n * sqrt(n) dividing the centered processes.
    pub fn md_scale(&self) -> f64 {
        self.b_n * (self.n as f64).sqrt()
    }

    /// theta^n_i = n / mu^n_i, the level-n workload weights.
    pub fn theta_n(&self) -> Vec<f64> {
        self.mu_n.iter().map(|m| self.n as f64 / m).collect()
    }

    /// lambda-tilde at level n as realized after rounding.
    pub fn lambda_tilde_n(&self) -> Vec<f64> {
        let s = self.md_scale();
        let nf = self.n as f64;
        (0..self.d)
            .map(|i| (self.lambda_n[i] - nf * self.lambda[i]) / s)
            .collect()
    }

    pub fn mu_tilde_n(&self) -> Vec<f64> {
        let s = self.md_scale();
        let nf = self.n as f64;
        (0..self.d)
            .map(|i| (self.mu_n[i] - nf * self.mu[i]) / s)
            .collect()
    }

    /// y^n_i = lambda-tilde^n_i - rho_i mu-tilde^n_i.
    pub fn y_n(&self) -> Vec<f64> {
        let lt = self.lambda_tilde_n();
        let mt = self.mu_tilde_n();
        (0..self.d).map(|i| lt[i] - self.rho[i] * mt[i]).collect()
    }

    pub fn has_deterministic_streams(&self) -> bool {
        self.ia_dist.iter().chain(self.st_dist.iter()).any(|k| k.is_deterministic())
    }

    /// Escape hatch for hand-checkable scenarios that sit outside the
    /// moderate-deviation regime (e.g. n = 1, b_n = 1 deterministic runs).
    /// Skips the critical-load and scaling checks; everything derived is
    /// still populated.
    #[allow(clippy::too_many_arguments)]
    pub fn unchecked(
        lambda_n: Vec<f64>,
        mu_n: Vec<f64>,
        lambda: Vec<f64>,
        mu: Vec<f64>,
        lambda_tilde: Vec<f64>,
        mu_tilde: Vec<f64>,
        ia_dist: Vec<DistKind>,
        st_dist: Vec<DistKind>,
        n: u64,
        b_n: f64,
        horizon: f64,
    ) -> SystemConfig {
        let d = lambda.len();
        let rho: Vec<f64> = (0..d).map(|i| lambda[i] / mu[i]).collect();
        let theta: Vec<f64> = mu.iter().map(|m| 1.0 / m).collect();
        let y: Vec<f64> = (0..d).map(|i| lambda_tilde[i] - rho[i] * mu_tilde[i]).collect();
        let sigma2_ia: Vec<f64> = ia_dist.iter().map(|k| k.variance()).collect();
        let sigma2_st: Vec<f64> = st_dist.iter().map(|k| k.variance()).collect();
        let sigma1_hat2: Vec<f64> = (0..d).map(|i| lambda[i] * sigma2_ia[i]).collect();
        let sigma2_hat2: Vec<f64> = (0..d).map(|i| mu[i] * sigma2_st[i]).collect();
        SystemConfig {
            d,
            n,
            b_n,
            horizon,
            lambda_n,
            mu_n,
            lambda,
            mu,
            lambda_tilde,
            mu_tilde,
            ia_dist,
            st_dist,
            sigma2_ia,
            sigma2_st,
            rho,
            theta,
            y,
            sigma1_hat2,
            sigma2_hat2,
        }
    }
}

/// Per-class convex costs `C_i(x) = (a_i + b_i x^p_i)^(1/p_i) - a_i^(1/p_i)`
/// with `a_i, b_i > 0`, `p_i > 1`.
///
/// The derivative is strictly increasing and bounded by `b_i^(1/p_i)`, so the
/// family satisfies the linear-growth and bounded-derivative requirements of
/// the scheduling index and the minimizing curve.
#[derive(Clone, Debug)]
pub struct CostSpec {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    /// sup of C_i' = b_i^(1/p_i).
    pub cprime_sup: Vec<f64>,
}

impl CostSpec {
    pub fn new(a: Vec<f64>, b: Vec<f64>, p: Vec<f64>) -> Result<Self, ModelError> {
        let d = a.len();
        if d == 0 || b.len() != d || p.len() != d {
            return Err(ModelError::NoClasses);
        }
        for i in 0..d {
            if a[i] <= 0.0 || b[i] <= 0.0 || p[i] <= 1.0 {
                return Err(ModelError::BadCostParams(i));
            }
        }
        let cprime_sup = (0..d).map(|i| b[i].powf(1.0 / p[i])).collect();
        Ok(CostSpec { a, b, p, cprime_sup })
    }

    /// Identical cost in all classes, the `(a + b x^2)^(1/2)` default.
    pub fn uniform(d: usize, a: f64, b: f64, p: f64) -> Result<Self, ModelError> {
        Self::new(vec![a; d], vec![b; d], vec![p; d])
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    /// max_i sup C_i', the linear-growth constant u1.
    pub fn u1(&self) -> f64 {
        self.cprime_sup.iter().cloned().fold(0.0, f64::max)
    }

    /// M_i = mu_i * sup C_i'.
    pub fn index_sup(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.d()).map(|i| mu[i] * self.cprime_sup[i]).collect()
    }

    /// C_i(x), unchecked (assumes x >= 0).
    #[inline]
    pub fn c_i(&self, i: usize, x: f64) -> f64 {
        let (a, b, p) = (self.a[i], self.b[i], self.p[i]);
        if p == 2.0 {
            (a + b * x * x).sqrt() - a.sqrt()
        } else {
            (a + b * x.powf(p)).powf(1.0 / p) - a.powf(1.0 / p)
        }
    }

    /// C_i'(x) = b x^(p-1) (a + b x^p)^(1/p - 1), unchecked.
    #[inline]
    pub fn cprime_i(&self, i: usize, x: f64) -> f64 {
        let (a, b, p) = (self.a[i], self.b[i], self.p[i]);
        if x == 0.0 {
            return 0.0;
        }
        if p == 2.0 {
            b * x / (a + b * x * x).sqrt()
        } else {
            b * x.powf(p - 1.0) * (a + b * x.powf(p)).powf(1.0 / p - 1.0)
        }
    }

    /// C(q) = sum_i C_i(q_i).
    pub fn cost_eval(&self, q: &[f64]) -> Result<f64, ModelError> {
        let mut s = 0.0;
        for (i, &x) in q.iter().enumerate() {
            if x < 0.0 {
                return Err(ModelError::NegativeArgument(x));
            }
            s += self.c_i(i, x);
        }
        Ok(s)
    }

    pub fn cost_derivative(&self, i: usize, x: f64) -> Result<f64, ModelError> {
        if x < 0.0 {
            return Err(ModelError::NegativeArgument(x));
        }
        Ok(self.cprime_i(i, x))
    }

    /// Inverse of C_i' on [0, sup C_i'). Closed form for p = 2, bisection
    /// with bracket expansion otherwise.
    pub fn cost_derivative_inverse(&self, i: usize, u: f64) -> Result<f64, ModelError> {
        let sup = self.cprime_sup[i];
        if u < 0.0 || u >= sup {
            return Err(ModelError::OutOfRange { value: u, lo: 0.0, hi: sup });
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        let (a, b, p) = (self.a[i], self.b[i], self.p[i]);
        if p == 2.0 {
            let ut = u / b.sqrt();
            return Ok(ut / (1.0 - ut * ut).sqrt() * (a / b).sqrt());
        }
        // bracket expansion, then bisection to 1e-12 * max(1, u)
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while self.cprime_i(i, hi) < u {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(ModelError::OutOfRange { value: u, lo: 0.0, hi: sup });
            }
        }
        let tol = 1e-12 * u.max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.cprime_i(i, mid);
            if (v - u).abs() <= tol {
                return Ok(mid);
            }
            if v < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
