//! Derivative-free ascent on a finite-dimensional objective: central
//! finite-difference gradients with a shrink-on-fail adaptive line search.
//!
//! The game objective is only piecewise differentiable (through the
//! reflection map and the curve composition), so no analytic adjoint is
//! used; robustness is preferred over speed at desk scale.

#[derive(Clone, Debug)]
pub struct AscentOptions {
    /// Central finite-difference step.
    pub fd_step: f64,
    /// Initial line-search step along the (unnormalized) gradient.
    pub init_step: f64,
    pub max_iters: usize,
    /// Line search gives up when the step drops below this.
    pub min_step: f64,
    /// Stop when an accepted step improves by less than this.
    pub f_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            fd_step: 1e-5,
            init_step: 0.1,
            max_iters: 400,
            min_step: 1e-10,
            f_tol: 1e-9,
        }
    }
}

pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

pub fn maximize(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: Vec<f64>,
    opts: &AscentOptions,
) -> AscentResult {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut grad = vec![0.0; n];
    let mut trial = x.clone();
    let mut alpha = opts.init_step;
    let mut iters = 0;
    for _ in 0..opts.max_iters {
        iters += 1;
        // central finite-difference gradient
        let mut gnorm2 = 0.0;
        for i in 0..n {
            let xi = x[i];
            trial.copy_from_slice(&x);
            trial[i] = xi + opts.fd_step;
            let fp = f(&trial);
            trial[i] = xi - opts.fd_step;
            let fm = f(&trial);
            grad[i] = (fp - fm) / (2.0 * opts.fd_step);
            gnorm2 += grad[i] * grad[i];
        }
        if gnorm2.sqrt() < 1e-14 {
            break;
        }
        // shrink-on-fail line search, growing the step after a success
        let mut accepted = false;
        while alpha >= opts.min_step {
            for i in 0..n {
                trial[i] = x[i] + alpha * grad[i];
            }
            let ft = f(&trial);
            if ft > fx {
                let gain = ft - fx;
                x.copy_from_slice(&trial);
                fx = ft;
                alpha *= 2.0;
                accepted = true;
                if gain < opts.f_tol {
                    return AscentResult { x, value: fx, iterations: iters };
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    AscentResult { x, value: fx, iterations: iters }
}
