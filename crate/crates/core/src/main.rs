use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gcmu::experiment::{
    parse_policy, run_convergence_study, run_policy_comparison, ExperimentPlan,
};
use gcmu::game::{dp_oracle_value, solve_value_full, solve_value_reduced, workload_variance};
use gcmu::mincurve::MinCurve;
use gcmu::model::{build_config, RawConfig};
use gcmu::rscost::{mc_diagnostics, path_cost_traj, risk_sensitive_estimate};
use gcmu::sim::{
    collapse_gap, simulate, workload_check, workload_check_scale,
};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gcmu",
    version,
    about = "Multiclass single-server scheduling under moderate-deviation scaling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON config file (classes, n, b_n or b_exponent, horizon)
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded replications of one policy; optionally dump trajectories
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// gcmu-preemptive | gcmu-nonpreemptive | static:<order>
        #[arg(long, default_value = "gcmu-preemptive")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        /// Output directory; trajectory CSVs are written here when set
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the limiting differential game three independent ways
    SolveGame {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 64)]
        grid_m: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// DP oracle time steps
        #[arg(long, default_value_t = 200)]
        dp_k: usize,
        /// DP oracle workload grid points
        #[arg(long, default_value_t = 400)]
        dp_w: usize,
        /// Output directory for path CSVs and the JSON summary
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the minimizing curve f(w)
    DumpCurve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 10.0)]
        w_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study of j_n against the game value over an n grid
    Converge {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024,4096")]
        n_grid: Vec<u64>,
        #[arg(long, default_value_t = 0.2)]
        beta: f64,
        #[arg(long, default_value_t = 20000)]
        replications: usize,
        /// Repeat to compare several policies (e.g. --policy gcmu-preemptive --policy static:1,0)
        #[arg(long, default_values = ["gcmu-preemptive", "gcmu-nonpreemptive"])]
        policy: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        grid_m: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
    /// Compare policies at each n
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024,4096")]
        n_grid: Vec<u64>,
        #[arg(long, default_value_t = 0.2)]
        beta: f64,
        #[arg(long, default_value_t = 2000)]
        replications: usize,
        /// Repeat to compare several policies (e.g. --policy gcmu-preemptive --policy static:1,0)
        #[arg(long, default_values = ["gcmu-preemptive", "gcmu-nonpreemptive"])]
        policy: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        grid_m: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },
}

fn load_raw(path: &PathBuf) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    RawConfig::from_json(&text).context("parsing config JSON")
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MDHT_THREADS") {
        let k: usize = v.parse().context("MDHT_THREADS must be a positive integer")?;
        if k == 0 {
            bail!("MDHT_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("initializing worker pool")?;
    }
    Ok(())
}

fn plan_from(
    raw: RawConfig,
    n_grid: Vec<u64>,
    beta: f64,
    replications: usize,
    policies: &[String],
    seed: u64,
    out: Option<PathBuf>,
    grid_m: usize,
    restarts: usize,
) -> Result<ExperimentPlan> {
    let policies = policies
        .iter()
        .map(|s| parse_policy(s).map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentPlan {
        base: raw,
        n_grid,
        beta,
        policies,
        replications,
        master_seed: seed,
        out_dir: out,
        game_grid_m: grid_m,
        game_restarts: restarts,
    })
}

fn main() -> Result<()> {
    init_threads()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, policy, seed, replications, out } => {
            let raw = load_raw(&config.config)?;
            let (cfg, cost) = build_config(&raw)?;
            let curve = MinCurve::new(&cfg, &cost);
            let (label, pol) = parse_policy(&policy).map_err(anyhow::Error::msg)?;
            let mut costs = Vec::with_capacity(replications);
            for rep in 0..replications as u64 {
                let traj = simulate(&cfg, &curve, &pol, seed, rep)?;
                traj.check_invariants()?;
                costs.push(path_cost_traj(&traj, &cfg, &cost));
                let dev = workload_check(&traj, &cfg);
                let gap = collapse_gap(&traj, &cfg, &curve);
                println!(
                    "rep {rep}: events {} path_cost {:.6} workload_dev {:.3e} collapse_gap {:.4}",
                    traj.rows(),
                    costs[rep as usize],
                    dev,
                    gap
                );
                if dev > 1e-9 * workload_check_scale(&traj, &cfg)
                    && !matches!(pol, gcmu::sim::Policy::IdleThenGcmu { .. })
                {
                    bail!("workload identity violated on replication {rep}: {dev:.3e}");
                }
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir)?;
                    let mut csv = String::from("t");
                    for i in 0..cfg.d {
                        write!(csv, ",q{i}").unwrap();
                    }
                    for i in 0..cfg.d {
                        write!(csv, ",q_tilde{i}").unwrap();
                    }
                    csv.push_str(",serving\n");
                    let s = cfg.md_scale();
                    for k in 0..traj.rows() {
                        write!(csv, "{:.9}", traj.times[k]).unwrap();
                        for &q in traj.queues_at(k) {
                            write!(csv, ",{q}").unwrap();
                        }
                        for &q in traj.queues_at(k) {
                            write!(csv, ",{:.9}", q as f64 / s).unwrap();
                        }
                        writeln!(csv, ",{}", traj.serving[k]).unwrap();
                    }
                    std::fs::write(dir.join(format!("trajectory_{rep}.csv")), csv)?;
                }
            }
            if costs.len() >= 2 {
                let est = risk_sensitive_estimate(&costs, cfg.b_n)?;
                let diag = mc_diagnostics(&est);
                println!(
                    "{label}: j_n {:.6} mean {:.6} ESS {:.1}/{} CI [{:.6}, {:.6}] ({})",
                    est.j_n, est.mean_cost, est.ess, replications, est.ci_lo, est.ci_hi, diag.note
                );
            }
        }
        Command::SolveGame { config, grid_m, restarts, seed, dp_k, dp_w, out } => {
            let raw = load_raw(&config.config)?;
            let (cfg, cost) = build_config(&raw)?;
            let curve = MinCurve::new(&cfg, &cost);
            let full = solve_value_full(&cfg, &curve, &cost, grid_m, restarts, seed)?;
            let reduced = solve_value_reduced(&cfg, &curve, &cost, 2 * grid_m)?;
            let sigma_w2 = workload_variance(&cfg);
            let drift: f64 = (0..cfg.d).map(|i| cfg.theta[i] * cfg.y[i]).sum();
            let w_max = drift.max(0.0) * cfg.horizon + 8.0 * (sigma_w2 * cfg.horizon).sqrt() + 1.0;
            let dp = dp_oracle_value(&cfg, &curve, &cost, dp_k, dp_w, w_max)?;
            let summary = serde_json::json!({
                "value_full": full.value,
                "value_reduced": reduced.value,
                "value_dp": dp,
                "sigma_w2": sigma_w2,
                "diagnostics": {
                    "iterations": full.diagnostics.iterations,
                    "restarts": full.diagnostics.restarts,
                    "grid_m": full.diagnostics.grid_m,
                    "spread": full.diagnostics.spread,
                },
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
                for (name, path) in [
                    ("psi_star.csv", &full.psi_star),
                    ("phi_star.csv", &full.phi_star),
                    ("w_star.csv", &full.w_star),
                    ("zeta_star.csv", &full.zeta_star),
                ] {
                    let mut buf = Vec::new();
                    path.to_csv(&mut buf)?;
                    std::fs::write(dir.join(name), buf)?;
                }
            }
        }
        Command::DumpCurve { config, w_max, points, out } => {
            let raw = load_raw(&config.config)?;
            let (cfg, cost) = build_config(&raw)?;
            let curve = MinCurve::new(&cfg, &cost);
            let mut csv = String::from("w");
            for i in 0..cfg.d {
                write!(csv, ",f{i}").unwrap();
            }
            csv.push('\n');
            for k in 0..=points {
                let w = w_max * k as f64 / points as f64;
                let q = curve.min_curve(w)?;
                write!(csv, "{w:.9}").unwrap();
                for x in q {
                    write!(csv, ",{x:.9}").unwrap();
                }
                csv.push('\n');
            }
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("curve.csv"), csv)?;
                }
                None => print!("{csv}"),
            }
        }
        Command::Converge {
            config,
            n_grid,
            beta,
            replications,
            policy,
            seed,
            out,
            grid_m,
            restarts,
        } => {
            let raw = load_raw(&config.config)?;
            let plan =
                plan_from(raw, n_grid, beta, replications, &policy, seed, out, grid_m, restarts)?;
            let report = run_convergence_study(&plan)?;
            println!(
                "game value: full {:.6} reduced {:.6} dp {:.6}",
                report.game.full, report.game.reduced, report.game.dp
            );
            print!("{}", report.csv);
        }
        Command::Compare {
            config,
            n_grid,
            beta,
            replications,
            policy,
            seed,
            out,
            grid_m,
            restarts,
        } => {
            let raw = load_raw(&config.config)?;
            let plan =
                plan_from(raw, n_grid, beta, replications, &policy, seed, out, grid_m, restarts)?;
            let report = run_policy_comparison(&plan)?;
            print!("{}", report.csv);
            for (n, p) in &report.flagged {
                println!("flagged: policy {p} at n = {n} is outside the best CI");
            }
        }
    }
    Ok(())
}
