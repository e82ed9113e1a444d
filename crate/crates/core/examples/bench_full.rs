//! Timing scratch pad for the game-value solvers. Not part of the test suite.

use gcmu::game::{dp_oracle_value, solve_value_full, solve_value_reduced, workload_variance};
use gcmu::mincurve::MinCurve;
use gcmu::model::{build_config, ClassSpec, CostParams, DistKind, RawConfig};
use std::time::Instant;

fn main() {
    let raw = RawConfig {
        classes: vec![
            ClassSpec {
                lambda: 1.0,
                mu: 2.0,
                lambda_tilde: 0.3,
                mu_tilde: 0.0,
                ia_dist: DistKind::Exponential,
                st_dist: DistKind::Exponential,
                cost: CostParams::default(),
            },
            ClassSpec {
                lambda: 1.0,
                mu: 2.0,
                lambda_tilde: 0.0,
                mu_tilde: 0.0,
                ia_dist: DistKind::Exponential,
                st_dist: DistKind::Exponential,
                cost: CostParams::default(),
            },
        ],
        n: 1024,
        b_n: None,
        b_exponent: Some(0.2),
        horizon: 1.0,
    };
    let (cfg, cost) = build_config(&raw).unwrap();
    let curve = MinCurve::new(&cfg, &cost);
    let m: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(64);

    let t0 = Instant::now();
    let sol = solve_value_full(&cfg, &curve, &cost, m, 16, 7).unwrap();
    println!("full m={m} R=16: {:.6} in {:?}", sol.value, t0.elapsed());

    let t0 = Instant::now();
    let r = solve_value_reduced(&cfg, &curve, &cost, 2 * m).unwrap();
    println!("reduced m={}: {:.6} in {:?}", 2 * m, r.value, t0.elapsed());

    let sw2 = workload_variance(&cfg);
    let drift: f64 = (0..cfg.d).map(|i| cfg.theta[i] * cfg.y[i]).sum();
    let w_max = 3.0 * (drift.abs() + 3.0 * sw2.sqrt()) + 1.0;
    let t0 = Instant::now();
    let d = dp_oracle_value(&cfg, &curve, &cost, 400, 800, w_max).unwrap();
    println!("dp 400x800: {:.6} in {:?}", d, t0.elapsed());
}
