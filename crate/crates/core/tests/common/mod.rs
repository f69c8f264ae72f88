//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use continuum_core::dynamics::AgentState;
use continuum_core::geometry::{signed_area, Point2};
use continuum_core::graphs::{validate_assumptions, GraphSpec, LocalizationEdge, NUM_LEADERS};
use continuum_core::harness::trace::SimulationTrace;
use continuum_core::harness::ScenarioConfig;
use continuum_core::localization::{simulate_measurement, CooperativeEstimator, RelativeMeasurement};
use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioConfig::load(&path).unwrap()
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random scenario satisfying all structural assumptions. Followers are
/// scattered inside the leader triangle; each picks three other agents,
/// earlier or later, whose triangle strictly contains it, so follower
/// cycles are common. Draws failing reachability are discarded.
pub fn random_valid_scenario(rng: &mut ChaCha8Rng, num_agents: usize) -> (GraphSpec, Vec<Point2>) {
    loop {
        if let Some(found) = try_scenario(rng, num_agents) {
            return found;
        }
    }
}

fn try_scenario(rng: &mut ChaCha8Rng, num_agents: usize) -> Option<(GraphSpec, Vec<Point2>)> {
    let leaders: Vec<Point2> = (0..3)
        .map(|_| Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
        .collect();
    if signed_area(&leaders[0], &leaders[1], &leaders[2]).abs() < 200.0 {
        return None;
    }
    let mut pos = leaders.clone();
    while pos.len() < num_agents {
        let raw: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
        let s: f64 = raw.iter().sum();
        pos.push(leaders[0] * (raw[0] / s) + leaders[1] * (raw[1] / s) + leaders[2] * (raw[2] / s));
    }
    let mut triples = Vec::new();
    for agent in NUM_LEADERS..num_agents {
        let mut found = None;
        for _ in 0..200 {
            let mut pick: Vec<usize> = Vec::new();
            while pick.len() < 3 {
                let j = rng.random_range(0..num_agents);
                if j != agent && !pick.contains(&j) {
                    pick.push(j);
                }
            }
            let t = [pick[0], pick[1], pick[2]];
            if inside(&pos, t, agent) {
                found = Some(t);
                break;
            }
        }
        // The leader triangle always contains every follower.
        triples.push(found.unwrap_or([0, 1, 2]));
    }
    let g = GraphSpec::new(num_agents, triples, Vec::new()).unwrap();
    validate_assumptions(&g, &pos).ok()?.all_pass().then_some((g, pos))
}

fn inside(pos: &[Point2], t: [usize; 3], agent: usize) -> bool {
    let [a, b, c] = t.map(|j| pos[j]);
    let area = signed_area(&a, &b, &c);
    if area.abs() < 1.0 {
        return false;
    }
    let p = pos[agent];
    // Each sub-triangle must have the orientation of the whole, with margin.
    [signed_area(&p, &b, &c), signed_area(&a, &p, &c), signed_area(&a, &b, &p)]
        .iter()
        .all(|&sub| sub / area > 1e-3)
}

/// Estimator inputs recovered from a recorded run.
pub struct Replay<'a> {
    pub cfg: &'a ScenarioConfig,
    pub trace: &'a SimulationTrace,
}

impl Replay<'_> {
    /// Measurement edges the simulator fuses.
    pub fn edges(&self) -> Vec<LocalizationEdge> {
        self.cfg
            .graph
            .localization_edges()
            .iter()
            .filter(|e| !e.is_self_measurement() && !(e.observer < NUM_LEADERS && e.target < NUM_LEADERS))
            .copied()
            .collect()
    }

    /// Re-runs a fresh estimator over the recorded truth and commanded inputs.
    /// The initial estimate is drawn from the initial covariance. `visit`
    /// sees the estimator after each step together with the true follower
    /// states.
    pub fn run(
        &self,
        rng: &mut ChaCha8Rng,
        fuse: bool,
        mut visit: impl FnMut(usize, &CooperativeEstimator, &[AgentState]),
    ) {
        let cfg = self.cfg;
        let init = cfg.estimator.initial;
        let first = &self.trace.rows[0].truth[NUM_LEADERS..];
        let initial: Vec<AgentState> = first
            .iter()
            .map(|s| {
                let dp = Vector2::new(normal(rng), normal(rng)) * init.position_std;
                let dv = Vector2::new(normal(rng), normal(rng)) * init.velocity_std;
                AgentState::new(s.position + dp, s.velocity + dv)
            })
            .collect();
        let mut est = CooperativeEstimator::new(&initial, init, cfg.noise.process_std, cfg.noise.measurement);
        let edges = self.edges();
        for k in 0..self.trace.rows.len() - 1 {
            let inputs = &self.trace.rows[k].controls[NUM_LEADERS..];
            est.propagate(inputs, cfg.dt).unwrap();
            let truth = &self.trace.rows[k + 1].truth;
            if fuse {
                let mut split = || {
                    let seed: u64 = rng.random();
                    <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed)
                };
                let meas: Vec<RelativeMeasurement> = edges
                    .iter()
                    .filter(|e| (k + 1) % e.period == 0)
                    .map(|e| {
                        let (mut rr, mut rb) = (split(), split());
                        simulate_measurement(
                            (e.observer, e.target),
                            &truth[e.observer],
                            &truth[e.target],
                            &cfg.noise.measurement,
                            &mut rr,
                            &mut rb,
                        )
                        .unwrap()
                    })
                    .collect();
                est.update(&meas, &[truth[0], truth[1], truth[2]]).unwrap();
            }
            visit(k + 1, &est, &truth[NUM_LEADERS..]);
        }
    }
}
