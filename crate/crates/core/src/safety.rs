//! Safety conditions over simulated runs and Monte Carlo campaigns.
//!
//! A run is safe when, at every step, agents keep a clearance above `2ε`,
//! every agent stays within `δ` of its desired position, and every follower
//! lies inside the actual leading triangle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{barycentric_coords_of, GeometryError, Point2};
use crate::graphs::NUM_LEADERS;
use crate::harness::rng::run_seed;
use crate::harness::sim::{run_simulation, SimMode};
use crate::harness::trace::SimulationTrace;
use crate::harness::ScenarioConfig;
use crate::planner::LeaderTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyThresholds {
    /// Radius of the ball enclosing one agent (m).
    pub epsilon: f64,
    /// Admissible deviation from the desired position (m).
    pub delta: f64,
}

impl Default for SafetyThresholds {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            delta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("safety thresholds must be positive (epsilon = {epsilon}, delta = {delta})")]
pub struct InvalidThresholds {
    pub epsilon: f64,
    pub delta: f64,
}

impl SafetyThresholds {
    pub fn validate(&self) -> Result<(), InvalidThresholds> {
        if self.epsilon > 0.0 && self.delta > 0.0 {
            Ok(())
        } else {
            Err(InvalidThresholds {
                epsilon: self.epsilon,
                delta: self.delta,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionCheck {
    pub ok: bool,
    pub min_clearance: f64,
    /// Closest pair `(i, j)` with `i < j`; the lexicographically smallest on ties.
    pub closest_pair: Option<(usize, usize)>,
}

/// Minimum pairwise distance by a sort-and-sweep along x; the pass condition
/// is the strict `‖r_i − r_j‖ > 2ε`.
pub fn check_collision(positions: &[Point2], epsilon: f64) -> CollisionCheck {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].x.total_cmp(&positions[b].x).then(a.cmp(&b)));
    let mut best: Option<(f64, usize, usize)> = None;
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if let Some((d, _, _)) = best {
                if positions[b].x - positions[a].x > d {
                    break;
                }
            }
            let (i, j) = (a.min(b), a.max(b));
            let d = (positions[i] - positions[j]).norm();
            let candidate = (d, i, j);
            if best.is_none_or(|cur| candidate.0 < cur.0 || (candidate.0 == cur.0 && (i, j) < (cur.1, cur.2))) {
                best = Some(candidate);
            }
        }
    }
    match best {
        Some((d, i, j)) => CollisionCheck {
            ok: d > 2.0 * epsilon,
            min_clearance: d,
            closest_pair: Some((i, j)),
        },
        None => CollisionCheck {
            ok: true,
            min_clearance: f64::INFINITY,
            closest_pair: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessCheck {
    pub ok: bool,
    pub max_deviation: f64,
    pub worst_agent: Option<usize>,
}

/// `‖r_i − r_i,desired‖ ≤ δ` for every agent (non-strict).
pub fn check_boundedness(actual: &[Point2], desired: &[Point2], delta: f64) -> BoundednessCheck {
    assert_eq!(actual.len(), desired.len(), "actual and desired lists must align");
    let mut out = BoundednessCheck {
        ok: true,
        max_deviation: 0.0,
        worst_agent: None,
    };
    for (i, (a, d)) in actual.iter().zip(desired).enumerate() {
        let dev = (a - d).norm();
        if out.worst_agent.is_none() || dev > out.max_deviation {
            out.max_deviation = dev;
            out.worst_agent = Some(i);
        }
    }
    out.ok = out.max_deviation <= delta;
    out
}

/// Barycentric coordinates of `t` in the triangle `(m, j, h)`; all
/// nonnegative iff `t` is inside.
pub fn containment_omega(m: &Point2, j: &Point2, h: &Point2, t: &Point2) -> Result<[f64; 3], GeometryError> {
    Ok(barycentric_coords_of(t, [*m, *j, *h])?.as_array())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Collision,
    Boundedness,
    Containment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub time: f64,
    pub condition: Condition,
    pub agents: Vec<usize>,
    /// Signed amount by which the condition is missed (negative).
    pub margin: f64,
}

/// Worst value of one condition over the run and where it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub step: usize,
    pub agents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub thresholds: SafetyThresholds,
    pub steps: usize,
    pub collision_ok: bool,
    pub boundedness_ok: bool,
    pub containment_ok: bool,
    /// Smallest pairwise distance (m).
    pub min_clearance: Option<Extremum>,
    /// Largest deviation from the desired position (m).
    pub max_deviation: Option<Extremum>,
    /// Smallest containment coordinate of any follower.
    pub min_containment: Option<Extremum>,
    pub first_violation: Option<Violation>,
}

impl SafetyReport {
    pub fn all_ok(&self) -> bool {
        self.collision_ok && self.boundedness_ok && self.containment_ok
    }

    /// Smallest of the three margins, each scaled to be dimensionless:
    /// `clearance / 2ε − 1`, `1 − deviation / δ`, and the containment
    /// coordinate. Negative iff some condition fails (up to the boundary
    /// cases of the strict and non-strict inequalities).
    pub fn normalized_margin(&self) -> f64 {
        let th = &self.thresholds;
        let clearance = self
            .min_clearance
            .as_ref()
            .map_or(f64::INFINITY, |e| e.value / (2.0 * th.epsilon) - 1.0);
        let deviation = self.max_deviation.as_ref().map_or(f64::INFINITY, |e| 1.0 - e.value / th.delta);
        let containment = self.min_containment.as_ref().map_or(f64::INFINITY, |e| e.value);
        clearance.min(deviation).min(containment)
    }
}

fn keep_min(slot: &mut Option<Extremum>, value: f64, step: usize, agents: &[usize]) {
    if slot.as_ref().is_none_or(|e| value < e.value) {
        *slot = Some(Extremum {
            value,
            step,
            agents: agents.to_vec(),
        });
    }
}

/// Evaluates every condition at every recorded step on the true positions.
pub fn verify_run(trace: &SimulationTrace, th: &SafetyThresholds) -> SafetyReport {
    let mut report = SafetyReport {
        thresholds: *th,
        steps: trace.rows.len(),
        collision_ok: true,
        boundedness_ok: true,
        containment_ok: true,
        min_clearance: None,
        max_deviation: None,
        min_containment: None,
        first_violation: None,
    };
    let mut max_dev: Option<Extremum> = None;
    for (step, row) in trace.rows.iter().enumerate() {
        let actual: Vec<Point2> = row.truth.iter().map(|s| s.position).collect();
        let mut violations = Vec::new();

        let c = check_collision(&actual, th.epsilon);
        if let Some((i, j)) = c.closest_pair {
            keep_min(&mut report.min_clearance, c.min_clearance, step, &[i, j]);
            if !c.ok {
                report.collision_ok = false;
                violations.push((Condition::Collision, vec![i, j], c.min_clearance - 2.0 * th.epsilon));
            }
        }

        let b = check_boundedness(&actual, &row.desired, th.delta);
        if let Some(i) = b.worst_agent {
            // Tracked as a minimum of the negated deviation.
            keep_min(&mut max_dev, -b.max_deviation, step, &[i]);
            if !b.ok {
                report.boundedness_ok = false;
                violations.push((Condition::Boundedness, vec![i], th.delta - b.max_deviation));
            }
        }

        let leaders = [actual[0], actual[1], actual[2]];
        for (f, t) in actual.iter().enumerate().skip(NUM_LEADERS) {
            let omega = containment_omega(&leaders[0], &leaders[1], &leaders[2], t)
                .map(|w| w.into_iter().fold(f64::INFINITY, f64::min))
                .unwrap_or(f64::NEG_INFINITY);
            keep_min(&mut report.min_containment, omega, step, &[f]);
            if omega < 0.0 {
                report.containment_ok = false;
                violations.push((Condition::Containment, vec![f], omega));
            }
        }

        if report.first_violation.is_none() {
            if let Some((condition, agents, margin)) = violations.into_iter().next() {
                report.first_violation = Some(Violation {
                    step,
                    time: row.time,
                    condition,
                    agents,
                    margin,
                });
            }
        }
    }
    report.max_deviation = max_dev.map(|e| Extremum { value: -e.value, ..e });
    report
}

/// Tracking and estimation errors relative to each agent's travelled distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorFractions {
    /// `max_i max_k ‖r_i − r_i,desired‖ / path_i` over all agents.
    pub tracking: f64,
    /// `max_f max_k ‖r̂_f − r_f‖ / path_f` over followers.
    pub estimation: f64,
}

pub fn error_fractions(trace: &SimulationTrace) -> ErrorFractions {
    let n = trace.num_agents();
    let mut path = vec![0.0; n];
    for w in trace.rows.windows(2) {
        for (i, p) in path.iter_mut().enumerate() {
            *p += (w[1].truth[i].position - w[0].truth[i].position).norm();
        }
    }
    // An agent that never moves has a zero ratio only if it is also exact.
    let ratio = |err: f64, len: f64| if err == 0.0 { 0.0 } else { err / len };
    let mut out = ErrorFractions {
        tracking: 0.0,
        estimation: 0.0,
    };
    for row in &trace.rows {
        for i in 0..n {
            let dev = (row.truth[i].position - row.desired[i]).norm();
            out.tracking = out.tracking.max(ratio(dev, path[i]));
            if i >= NUM_LEADERS {
                let est = (row.estimates[i - NUM_LEADERS].position - row.truth[i].position).norm();
                out.estimation = out.estimation.max(ratio(est, path[i]));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub passed: bool,
    /// `None` when the run aborted.
    pub report: Option<SafetyReport>,
    pub errors: Option<ErrorFractions>,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn normalized_margin(&self) -> f64 {
        self.report.as_ref().map_or(f64::NEG_INFINITY, SafetyReport::normalized_margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub base_seed: u64,
    pub runs: Vec<RunSummary>,
    pub passed: usize,
    pub pass_rate: f64,
    /// Index into `runs` of the run with the smallest normalized margin.
    pub worst_run: usize,
}

impl MonteCarloReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.runs.len()
    }

    pub fn worst(&self) -> &RunSummary {
        &self.runs[self.worst_run]
    }
}

/// Simulates and verifies one run.
pub fn verify_seed(cfg: &ScenarioConfig, traj: &LeaderTrajectory, mode: SimMode, index: usize, seed: u64) -> RunSummary {
    match run_simulation(cfg, traj, seed, mode) {
        Ok(trace) => {
            let report = verify_run(&trace, &cfg.safety);
            RunSummary {
                index,
                seed,
                passed: report.all_ok(),
                errors: Some(error_fractions(&trace)),
                report: Some(report),
                failure: None,
            }
        }
        Err(e) => RunSummary {
            index,
            seed,
            passed: false,
            report: None,
            errors: None,
            failure: Some(e.to_string()),
        },
    }
}

/// Runs `n_runs` seeded simulations in parallel; run `i` uses
/// [`run_seed`]`(base_seed, i)`. An aborted run counts as a failure.
pub fn monte_carlo_verify(
    cfg: &ScenarioConfig,
    traj: &LeaderTrajectory,
    mode: SimMode,
    n_runs: usize,
    base_seed: u64,
) -> MonteCarloReport {
    assert!(n_runs >= 1, "at least one run is required");
    let runs: Vec<RunSummary> = (0..n_runs)
        .into_par_iter()
        .map(|i| verify_seed(cfg, traj, mode, i, run_seed(base_seed, i)))
        .collect();
    let passed = runs.iter().filter(|r| r.passed).count();
    let worst_run = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.normalized_margin().total_cmp(&b.1.normalized_margin()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    MonteCarloReport {
        base_seed,
        passed,
        pass_rate: passed as f64 / n_runs as f64,
        runs,
        worst_run,
    }
}
