//! Experiment orchestration: convergence studies over the scaling
//! parameter n and policy comparisons, with CSV/manifest emission.

use crate::game::{
    dp_oracle_value, solve_value_full, solve_value_reduced, workload_variance, GameError,
};
use crate::mincurve::MinCurve;
use crate::model::{build_config, CostSpec, ModelError, RawConfig, SystemConfig};
use crate::rscost::{mc_diagnostics, path_cost_traj, risk_sensitive_estimate, RsError, RsEstimate};
use crate::sim::{
    collapse_gap, simulate, systeq_residual, workload_check, workload_check_scale, Policy,
    SimError,
};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("beta must lie strictly inside (0, 0.5), got {0}")]
    BadBeta(f64),
    #[error("n grid must be nonempty and strictly increasing")]
    BadGrid,
    #[error("plan needs at least {need} policies, got {got}")]
    TooFewPolicies { need: usize, got: usize },
    #[error("exact invariant failed during replication {replication} (n = {n}): {detail}")]
    InvariantFailure { n: u64, replication: u64, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rs(#[from] RsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub base: RawConfig,
    pub n_grid: Vec<u64>,
    /// b_n = n^beta; the moderate-deviation window is beta in (0, 0.5).
    pub beta: f64,
    pub policies: Vec<(String, Policy)>,
    pub replications: usize,
    pub master_seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Grid size of the reduced game solver used for the reference value.
    pub game_grid_m: usize,
    pub game_restarts: usize,
}

/// Number of leading replications on which the per-run diagnostics
/// (workload identity, system-equation residual, collapse gap) are
/// evaluated; cost accumulation always covers all replications.
pub const DIAGNOSTIC_REPS: usize = 200;

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExpError> {
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(ExpError::BadBeta(self.beta));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExpError::BadGrid);
        }
        if self.policies.is_empty() {
            return Err(ExpError::TooFewPolicies { need: 1, got: 0 });
        }
        Ok(())
    }

    fn raw_at(&self, n: u64) -> RawConfig {
        let mut raw = self.base.with_n(n);
        raw.b_n = None;
        raw.b_exponent = Some(self.beta);
        raw
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PolicyPoint {
    pub policy: String,
    pub n: u64,
    pub b_n: f64,
    pub replications: usize,
    pub j_n: f64,
    pub mean_cost: f64,
    pub ess: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ci_half_width: f64,
    pub gap_to_value: f64,
    pub median_collapse_gap: f64,
    pub max_workload_dev: f64,
    pub workload_tol: f64,
    pub ess_flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GameValues {
    pub full: f64,
    pub reduced: f64,
    pub dp: f64,
    /// Reference used in the gap column (the reduced solver's value).
    pub reference: f64,
}

#[derive(Debug)]
pub struct ConvergenceReport {
    pub game: GameValues,
    pub points: Vec<PolicyPoint>,
    pub csv: String,
}

/// One grid point of a study: R replications of a policy with full cost
/// accumulation and exact-invariant enforcement.
fn run_point(
    config: &SystemConfig,
    cost: &CostSpec,
    curve: &MinCurve,
    label: &str,
    policy: &Policy,
    replications: usize,
    master_seed: u64,
    value_ref: f64,
) -> Result<PolicyPoint, ExpError> {
    struct RepOut {
        cost: f64,
        workload_dev: f64,
        workload_tol: f64,
        systeq: f64,
        collapse: f64,
        invariant_err: Option<String>,
    }
    let outs: Vec<RepOut> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let traj = match simulate(config, curve, policy, master_seed, rep) {
                Ok(t) => t,
                Err(e) => {
                    return RepOut {
                        cost: f64::NAN,
                        workload_dev: 0.0,
                        workload_tol: 0.0,
                        systeq: 0.0,
                        collapse: 0.0,
                        invariant_err: Some(e.to_string()),
                    }
                }
            };
            let c = path_cost_traj(&traj, config, cost);
            let diagnose = (rep as usize) < DIAGNOSTIC_REPS;
            let mut out = RepOut {
                cost: c,
                workload_dev: 0.0,
                workload_tol: f64::INFINITY,
                systeq: 0.0,
                collapse: 0.0,
                invariant_err: traj.check_invariants().err().map(|e| e.to_string()),
            };
            if diagnose && out.invariant_err.is_none() {
                out.workload_dev = workload_check(&traj, config);
                out.workload_tol = 1e-9 * workload_check_scale(&traj, config);
                out.systeq = systeq_residual(&traj, config);
                out.collapse = collapse_gap(&traj, config, curve);
                if out.systeq > 1e-9 {
                    out.invariant_err =
                        Some(format!("system-equation residual {} exceeds 1e-9", out.systeq));
                }
            }
            out
        })
        .collect();

    for (rep, o) in outs.iter().enumerate() {
        if let Some(detail) = &o.invariant_err {
            return Err(ExpError::InvariantFailure {
                n: config.n,
                replication: rep as u64,
                detail: detail.clone(),
            });
        }
    }
    let costs: Vec<f64> = outs.iter().map(|o| o.cost).collect();
    let est: RsEstimate = risk_sensitive_estimate(&costs, config.b_n)?;
    let diag = mc_diagnostics(&est);
    let mut collapse: Vec<f64> = outs
        .iter()
        .take(DIAGNOSTIC_REPS)
        .map(|o| o.collapse)
        .collect();
    collapse.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_collapse = if collapse.is_empty() { 0.0 } else { collapse[collapse.len() / 2] };
    let max_dev = outs
        .iter()
        .take(DIAGNOSTIC_REPS)
        .map(|o| o.workload_dev)
        .fold(0.0f64, f64::max);
    let tol = outs
        .iter()
        .take(DIAGNOSTIC_REPS)
        .map(|o| o.workload_tol)
        .fold(f64::INFINITY, f64::min);
    Ok(PolicyPoint {
        policy: label.to_string(),
        n: config.n,
        b_n: config.b_n,
        replications,
        j_n: est.j_n,
        mean_cost: est.mean_cost,
        ess: est.ess,
        ci_lo: est.ci_lo,
        ci_hi: est.ci_hi,
        ci_half_width: est.ci_half_width,
        gap_to_value: (est.j_n - value_ref).abs(),
        median_collapse_gap: median_collapse,
        max_workload_dev: max_dev,
        workload_tol: tol,
        ess_flagged: diag.dominated_by_extremes,
    })
}

/// Solves the limit game three independent ways for the plan's base
/// config.
pub fn solve_game_values(plan: &ExperimentPlan) -> Result<GameValues, ExpError> {
    let (cfg, cost) = build_config(&plan.raw_at(plan.n_grid[0]))?;
    let curve = MinCurve::new(&cfg, &cost);
    let full = solve_value_full(
        &cfg,
        &curve,
        &cost,
        plan.game_grid_m.max(16),
        plan.game_restarts.max(2),
        plan.master_seed,
    )?;
    let reduced = solve_value_reduced(&cfg, &curve, &cost, 2 * plan.game_grid_m.max(16))?;
    let sigma_w2 = workload_variance(&cfg);
    let drift: f64 = (0..cfg.d).map(|i| cfg.theta[i] * cfg.y[i]).sum();
    let w_max = drift.max(0.0) * cfg.horizon + 8.0 * (sigma_w2 * cfg.horizon).sqrt() + 1.0;
    let dp = dp_oracle_value(&cfg, &curve, &cost, 200, 400, w_max)?;
    Ok(GameValues { full: full.value, reduced: reduced.value, dp, reference: reduced.value })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

fn provenance(plan: &ExperimentPlan) -> (String, String) {
    let cfg_json = serde_json::to_string(&plan.base).expect("config serializes");
    let hash = format!("{:016x}", fnv1a(cfg_json.as_bytes()));
    let version = env!("CARGO_PKG_VERSION").to_string();
    (hash, version)
}

const CSV_HEADER: &str = "policy,n,b_n,replications,j_n,mean_cost,ess,ci_lo,ci_hi,ci_half_width,\
gap_to_value,median_collapse_gap,max_workload_dev,workload_tol,ess_flagged,config_hash,seed,version";

fn csv_rows(points: &[PolicyPoint], hash: &str, seed: u64, version: &str) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for p in points {
        writeln!(
            s,
            "{},{},{:.12},{},{:.12},{:.12},{:.3},{:.12},{:.12},{:.12},{:.12},{:.6e},{:.6e},{:.6e},{},{},{},{}",
            p.policy,
            p.n,
            p.b_n,
            p.replications,
            p.j_n,
            p.mean_cost,
            p.ess,
            p.ci_lo,
            p.ci_hi,
            p.ci_half_width,
            p.gap_to_value,
            p.median_collapse_gap,
            p.max_workload_dev,
            p.workload_tol,
            p.ess_flagged,
            hash,
            seed,
            version
        )
        .expect("string writes cannot fail");
    }
    s
}

fn emit(plan: &ExperimentPlan, name: &str, content: &str) -> Result<(), ExpError> {
    if let Some(dir) = &plan.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}

fn emit_manifest(plan: &ExperimentPlan, game: &GameValues, kind: &str) -> Result<(), ExpError> {
    let (hash, version) = provenance(plan);
    #[derive(Serialize)]
    struct Manifest<'a> {
        kind: &'a str,
        config_hash: String,
        master_seed: u64,
        version: String,
        beta: f64,
        n_grid: &'a [u64],
        replications: usize,
        policies: Vec<&'a str>,
        game: &'a GameValues,
        note: &'a str,
    }
    let m = Manifest {
        kind,
        config_hash: hash,
        master_seed: plan.master_seed,
        version,
        beta: plan.beta,
        n_grid: &plan.n_grid,
        replications: plan.replications,
        policies: plan.policies.iter().map(|(l, _)| l.as_str()).collect(),
        game,
        note: "convergence columns are finite-n Monte-Carlo trends, not proof-strength \
               reproductions; j_n is a lower-biased plain-MC proxy when ESS is flagged",
    };
    emit(plan, "manifest.json", &serde_json::to_string_pretty(&m).expect("serializes"))
}

/// Convergence study: j_n per (n, policy) against the limit game value,
/// with collapse and workload diagnostics. Emits `convergence.csv` and
/// `manifest.json` into the plan's output directory when one is set.
pub fn run_convergence_study(plan: &ExperimentPlan) -> Result<ConvergenceReport, ExpError> {
    plan.validate()?;
    let game = solve_game_values(plan)?;
    let mut points = Vec::new();
    for &n in &plan.n_grid {
        let (cfg, cost) = build_config(&plan.raw_at(n))?;
        let curve = MinCurve::new(&cfg, &cost);
        for (label, policy) in &plan.policies {
            points.push(run_point(
                &cfg,
                &cost,
                &curve,
                label,
                policy,
                plan.replications,
                plan.master_seed,
                game.reference,
            )?);
        }
    }
    let (hash, version) = provenance(plan);
    let csv = csv_rows(&points, &hash, plan.master_seed, &version);
    emit(plan, "convergence.csv", &csv)?;
    emit_manifest(plan, &game, "convergence")?;
    Ok(ConvergenceReport { game, points, csv })
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub points: Vec<PolicyPoint>,
    /// Per-n flags: policies whose CI does not overlap the per-n minimum's CI.
    pub flagged: Vec<(u64, String)>,
    pub csv: String,
}

/// Policy comparison at each n: j_n with CIs across policies; a policy is
/// flagged when its interval sits strictly above the per-n best.
pub fn run_policy_comparison(plan: &ExperimentPlan) -> Result<ComparisonReport, ExpError> {
    plan.validate()?;
    if plan.policies.len() < 2 {
        return Err(ExpError::TooFewPolicies { need: 2, got: plan.policies.len() });
    }
    let game = solve_game_values(plan)?;
    let mut points = Vec::new();
    let mut flagged = Vec::new();
    for &n in &plan.n_grid {
        let (cfg, cost) = build_config(&plan.raw_at(n))?;
        let curve = MinCurve::new(&cfg, &cost);
        let row_start = points.len();
        for (label, policy) in &plan.policies {
            points.push(run_point(
                &cfg,
                &cost,
                &curve,
                label,
                policy,
                plan.replications,
                plan.master_seed,
                game.reference,
            )?);
        }
        let best_hi = points[row_start..]
            .iter()
            .map(|p| p.ci_hi)
            .fold(f64::INFINITY, f64::min);
        for p in &points[row_start..] {
            if p.ci_lo > best_hi {
                flagged.push((n, p.policy.clone()));
            }
        }
    }
    let (hash, version) = provenance(plan);
    let csv = csv_rows(&points, &hash, plan.master_seed, &version);
    emit(plan, "comparison.csv", &csv)?;
    emit_manifest(plan, &game, "comparison")?;
    Ok(ComparisonReport { points, flagged, csv })
}

/// Parses a policy label: `gcmu-preemptive`, `gcmu-nonpreemptive`, or
/// `static:<comma-separated order>`.
pub fn parse_policy(s: &str) -> Result<(String, Policy), String> {
    match s {
        "gcmu-preemptive" => Ok((s.to_string(), Policy::GcmuPreemptive)),
        "gcmu-nonpreemptive" => Ok((s.to_string(), Policy::GcmuNonpreemptive)),
        _ => {
            if let Some(order) = s.strip_prefix("static:") {
                let parsed: Result<Vec<usize>, _> =
                    order.split(',').map(|x| x.trim().parse::<usize>()).collect();
                match parsed {
                    Ok(v) if !v.is_empty() => Ok((s.to_string(), Policy::StaticPriority(v))),
                    _ => Err(format!("bad static order in {s:?}")),
                }
            } else {
                Err(format!(
                    "unknown policy {s:?}; expected gcmu-preemptive, gcmu-nonpreemptive, or static:<order>"
                ))
            }
        }
    }
}
