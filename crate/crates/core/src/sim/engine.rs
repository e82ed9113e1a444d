//! Exact event-driven simulation of the d-class single-server queue.
//!
//! Queue state changes only at arrival and departure epochs, and every
//! supported policy is constant between epochs, so the event loop is exact:
//! no time discretization anywhere. Service is preemptive-resume where
//! applicable: the head-of-line job of each class retains its accumulated
//! effort across preemptions.

use crate::mincurve::MinCurve;
use crate::model::SystemConfig;
use super::streams::{stream_id, RenewalStream, StreamKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trajectory invariant violated: {0}")]
    InvariantViolated(String),
    #[error("static priority order must be a permutation of 0..d")]
    BadPriorityOrder,
}

#[derive(Clone, Debug)]
pub enum Policy {
    GcmuPreemptive,
    GcmuNonpreemptive,
    /// Preemptive fixed priority: serve the first nonempty class in the
    /// given order.
    StaticPriority(Vec<usize>),
    /// Deliberately non-work-conserving: idle until the given time, then
    /// follow the preemptive rule. Negative control for the workload
    /// identity.
    IdleThenGcmu { idle_until: f64 },
}

/// Event-time record of one run. Row k holds the state at `times[k]`
/// (right-continuous) and the serving class on `[times[k], times[k+1])`.
/// Rows may share a timestamp when a departure and an arrival coincide;
/// per-class arrays are flattened with stride d.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub d: usize,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub queues: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub alloc: Vec<f64>,
    /// Serving class per row, -1 while idle.
    pub serving: Vec<i32>,
}

impl Trajectory {
    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn queues_at(&self, k: usize) -> &[u64] {
        &self.queues[k * self.d..(k + 1) * self.d]
    }

    pub fn arrivals_at(&self, k: usize) -> &[u64] {
        &self.arrivals[k * self.d..(k + 1) * self.d]
    }

    pub fn departures_at(&self, k: usize) -> &[u64] {
        &self.departures[k * self.d..(k + 1) * self.d]
    }

    pub fn alloc_at(&self, k: usize) -> &[f64] {
        &self.alloc[k * self.d..(k + 1) * self.d]
    }

    /// Checks the structural invariants at every event time: flow balance
    /// `Q = A - D >= 0`, admissibility (the served class is nonempty),
    /// nondecreasing 1-Lipschitz allocation with total rate at most one.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        let d = self.d;
        for k in 0..self.rows() {
            let (q, a, dep) = (self.queues_at(k), self.arrivals_at(k), self.departures_at(k));
            for i in 0..d {
                if a[i] < dep[i] || q[i] != a[i] - dep[i] {
                    return Err(SimError::InvariantViolated(format!(
                        "flow balance broken at row {k} class {i}"
                    )));
                }
            }
            let s = self.serving[k];
            if s >= 0 && q[s as usize] == 0 && k + 1 < self.rows() && self.times[k + 1] > self.times[k] {
                return Err(SimError::InvariantViolated(format!(
                    "serving empty class {s} at row {k}"
                )));
            }
            if k > 0 {
                let dt = self.times[k] - self.times[k - 1];
                if dt < 0.0 {
                    return Err(SimError::InvariantViolated(format!("time reversal at row {k}")));
                }
                let prev = &self.alloc[(k - 1) * d..k * d];
                let cur = self.alloc_at(k);
                let mut total = 0.0;
                for i in 0..d {
                    let inc = cur[i] - prev[i];
                    if inc < -1e-12 || inc > dt + 1e-12 {
                        return Err(SimError::InvariantViolated(format!(
                            "allocation not 1-Lipschitz at row {k} class {i}"
                        )));
                    }
                    total += inc;
                }
                if total > dt + 1e-12 {
                    return Err(SimError::InvariantViolated(format!(
                        "total allocation rate exceeds one at row {k}"
                    )));
                }
            }
        }
        Ok(())
    }
}

struct ClassState {
    q: u64,
    next_arrival: f64,
    /// Remaining requirement of the head-of-line job, drawn lazily when it
    /// first enters service and retained across preemptions.
    remaining: Option<f64>,
    arrivals: u64,
    departures: u64,
    alloc: f64,
}

/// Runs one replication of the given policy. Identical
/// (config, policy, master_seed, replication) produce bit-identical
/// trajectories: each (replication, class, arrival/service) triple has its
/// own counter-seeded substream.
pub fn simulate(
    config: &SystemConfig,
    curve: &MinCurve,
    policy: &Policy,
    master_seed: u64,
    replication: u64,
) -> Result<Trajectory, SimError> {
    let d = config.d;
    if let Policy::StaticPriority(order) = policy {
        let mut seen = vec![false; d];
        if order.len() != d || order.iter().any(|&i| i >= d || std::mem::replace(&mut seen[i], true)) {
            return Err(SimError::BadPriorityOrder);
        }
    }
    let horizon = config.horizon;
    let scale = config.md_scale();
    let mut arr_streams: Vec<RenewalStream> = (0..d)
        .map(|i| {
            RenewalStream::new(
                config.ia_dist[i].clone(),
                config.lambda_n[i],
                master_seed,
                stream_id(replication, i, StreamKind::Arrival),
            )
        })
        .collect();
    let mut st_streams: Vec<RenewalStream> = (0..d)
        .map(|i| {
            RenewalStream::new(
                config.st_dist[i].clone(),
                config.mu_n[i],
                master_seed,
                stream_id(replication, i, StreamKind::Service),
            )
        })
        .collect();

    let mut cls: Vec<ClassState> = (0..d)
        .map(|i| ClassState {
            q: 0,
            next_arrival: arr_streams[i].next(),
            remaining: None,
            arrivals: 0,
            departures: 0,
            alloc: 0.0,
        })
        .collect();

    let expected = (config.lambda_n.iter().sum::<f64>() * horizon * 2.5) as usize + 16;
    let mut traj = Trajectory {
        d,
        horizon,
        times: Vec::with_capacity(expected),
        queues: Vec::with_capacity(expected * d),
        arrivals: Vec::with_capacity(expected * d),
        departures: Vec::with_capacity(expected * d),
        alloc: Vec::with_capacity(expected * d),
        serving: Vec::with_capacity(expected),
    };
    let push_record = |traj: &mut Trajectory, t: f64, cls: &[ClassState], serving: i32| {
        traj.times.push(t);
        traj.serving.push(serving);
        for c in cls {
            traj.queues.push(c.q);
            traj.arrivals.push(c.arrivals);
            traj.departures.push(c.departures);
            traj.alloc.push(c.alloc);
        }
    };

    // sticky server for the nonpreemptive policy; selections happen only at
    // departures and at arrivals into an empty system
    let mut in_service: Option<usize> = None;
    let mut qs = vec![0.0f64; d]; // scratch: scaled queue lengths
    let gcmu_pick = |cls: &[ClassState], qs: &mut [f64]| -> Option<usize> {
        if cls.iter().all(|c| c.q == 0) {
            return None;
        }
        for (i, c) in cls.iter().enumerate() {
            qs[i] = c.q as f64 / scale;
        }
        Some(curve.priority_class(qs).expect("nonzero queue vector"))
    };

    let mut t = 0.0f64;
    push_record(&mut traj, 0.0, &cls, -1);
    loop {
        // select the serving class for the next inter-event interval
        let serving: Option<usize> = match policy {
            Policy::GcmuPreemptive => gcmu_pick(&cls, &mut qs),
            Policy::GcmuNonpreemptive => in_service,
            Policy::StaticPriority(order) => order.iter().copied().find(|&i| cls[i].q > 0),
            Policy::IdleThenGcmu { idle_until } => {
                if t < *idle_until {
                    None
                } else {
                    gcmu_pick(&cls, &mut qs)
                }
            }
        };
        if let Some(s) = serving {
            if cls[s].remaining.is_none() {
                cls[s].remaining = Some(st_streams[s].next());
            }
        }
        *traj.serving.last_mut().unwrap() = serving.map_or(-1, |s| s as i32);

        // next event: earliest arrival (lowest class on ties) vs departure;
        // a departure wins a tie with an arrival
        let mut arr_t = f64::INFINITY;
        let mut arr_class = usize::MAX;
        for (i, c) in cls.iter().enumerate() {
            if c.next_arrival < arr_t {
                arr_t = c.next_arrival;
                arr_class = i;
            }
        }
        let dep_t = serving.map_or(f64::INFINITY, |s| t + cls[s].remaining.unwrap());
        // synthetic wake-up so the idling control resumes exactly on time
        let wake_t = match policy {
            Policy::IdleThenGcmu { idle_until } if t < *idle_until => *idle_until,
            _ => f64::INFINITY,
        };
        let next = dep_t.min(arr_t).min(wake_t);

        if next > horizon {
            if let Some(s) = serving {
                let dt = horizon - t;
                cls[s].alloc += dt;
                *cls[s].remaining.as_mut().unwrap() -= dt;
            }
            let last_serving = *traj.serving.last().unwrap();
            push_record(&mut traj, horizon, &cls, last_serving);
            break;
        }

        let dt = next - t;
        if let Some(s) = serving {
            cls[s].alloc += dt;
            *cls[s].remaining.as_mut().unwrap() -= dt;
        }
        t = next;

        if dep_t <= arr_t && dep_t <= wake_t {
            let s = serving.expect("departure requires a served class");
            cls[s].q -= 1;
            cls[s].departures += 1;
            cls[s].remaining = None;
            if matches!(policy, Policy::GcmuNonpreemptive) {
                in_service = gcmu_pick(&cls, &mut qs);
            }
        } else if arr_t <= wake_t {
            let c = &mut cls[arr_class];
            c.q += 1;
            c.arrivals += 1;
            c.next_arrival += arr_streams[arr_class].next();
            if matches!(policy, Policy::GcmuNonpreemptive) && in_service.is_none() {
                // a customer admitted into an empty system is served at once
                in_service = Some(arr_class);
            }
        }
        // (a pure wake-up changes no state; the loop re-selects the server)
        push_record(&mut traj, t, &cls, -1);
    }

    Ok(traj)
}

pub fn simulate_preemptive(
    config: &SystemConfig,
    curve: &MinCurve,
    master_seed: u64,
    replication: u64,
) -> Result<Trajectory, SimError> {
    simulate(config, curve, &Policy::GcmuPreemptive, master_seed, replication)
}

pub fn simulate_nonpreemptive(
    config: &SystemConfig,
    curve: &MinCurve,
    master_seed: u64,
    replication: u64,
) -> Result<Trajectory, SimError> {
    simulate(config, curve, &Policy::GcmuNonpreemptive, master_seed, replication)
}

pub fn simulate_static_priority(
    config: &SystemConfig,
    curve: &MinCurve,
    order: Vec<usize>,
    master_seed: u64,
    replication: u64,
) -> Result<Trajectory, SimError> {
    simulate(config, curve, &Policy::StaticPriority(order), master_seed, replication)
}
