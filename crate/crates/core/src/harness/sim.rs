//! Closed-loop simulation of leaders, followers and the cooperative estimator.

use nalgebra::Vector2;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dynamics::{follower_control, leader_control, step_agent, AgentState};
use crate::geometry::{barycentric_coords, desired_position, BarycentricWeights, GeometryError, Point2, Triangle};
use crate::graphs::{build_weight_matrix, GraphError, NUM_LEADERS};
use crate::harness::rng::{stream_rng, Stream};
use crate::harness::scenario::ScenarioConfig;
use crate::harness::trace::{SimulationTrace, TraceRow};
use crate::localization::{simulate_measurement, CooperativeEstimator, LocalizationError, RelativeMeasurement};
use crate::planner::LeaderTrajectory;

/// States larger than this abort the run.
pub const BLOWUP_NORM: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Followers feed back on the cooperative estimator.
    Cooperative,
    /// Followers feed back on true states; the estimator is not run.
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimMode {
    pub estimator: EstimatorMode,
    /// Whether process and measurement noise are injected.
    pub noise: bool,
}

impl SimMode {
    pub const COOPERATIVE: Self = Self {
        estimator: EstimatorMode::Cooperative,
        noise: true,
    };
    pub const NOISE_FREE_FULL_STATE: Self = Self {
        estimator: EstimatorMode::Bypass,
        noise: false,
    };
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error("state norm {norm:e} of agent {agent} exceeded {BLOWUP_NORM:e} at step {step}")]
    NumericalBlowup { step: usize, agent: usize, norm: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Fixed per-scenario quantities used every step.
struct Wiring {
    /// Barycentric coordinates of each agent in the reference leading triangle.
    alphas: Vec<BarycentricWeights>,
    /// Consensus weights over the in-neighbor triple of each follower.
    weights: Vec<[f64; 3]>,
}

impl Wiring {
    fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        let tri = Triangle::from_vertices(cfg.leader_reference())?;
        let alphas = cfg.reference.iter().map(|p| barycentric_coords(p, &tri)).collect();
        let w = build_weight_matrix(&cfg.graph, &cfg.reference)?;
        let weights = (NUM_LEADERS..cfg.num_agents())
            .map(|i| w.row_weights(i, cfg.graph.in_neighbors(i)))
            .collect();
        Ok(Self { alphas, weights })
    }

    fn desired(&self, leaders: &[Point2; 3]) -> Vec<Point2> {
        self.alphas.iter().map(|a| desired_position(a, leaders)).collect()
    }
}

fn normal(rng: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Simulates the scenario over the trajectory span plus the hold time.
///
/// Each step: leaders track the planned trajectory on their true states,
/// followers run consensus on estimated states, the plant advances with
/// process noise, the estimator propagates with the commanded follower
/// inputs, due measurements are fused, and a row is recorded. Row `k` is at
/// `t0 + k·dt`; there are `⌈T/dt⌉ + 1` rows.
pub fn run_simulation(
    cfg: &ScenarioConfig,
    traj: &LeaderTrajectory,
    seed: u64,
    mode: SimMode,
) -> Result<SimulationTrace, SimError> {
    let n = cfg.num_agents();
    let nf = cfg.num_followers();
    let dt = cfg.dt;
    let wiring = Wiring::new(cfg)?;
    let bypass = mode.estimator == EstimatorMode::Bypass;
    let process_std = if mode.noise { cfg.noise.process_std } else { 0.0 };
    let meas_noise = if mode.noise {
        cfg.noise.measurement
    } else {
        crate::harness::scenario::NoiseConfig::zero().measurement
    };

    let span = traj.duration() + cfg.hold_time;
    let steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
    let time = |k: usize| traj.t0() + k as f64 * dt;
    let leader_goal = |t: f64| traj.evaluate_clamped(t);

    let start = leader_goal(time(0));
    let mut truth: Vec<AgentState> = cfg.reference.iter().map(|&p| AgentState::at_rest(p)).collect();
    for l in 0..NUM_LEADERS {
        truth[l].velocity = start[l].velocity;
    }

    let mut process_rngs: Vec<_> = (0..n)
        .map(|a| (stream_rng(seed, Stream::ProcessX(a)), stream_rng(seed, Stream::ProcessY(a))))
        .collect();
    let edges: Vec<_> = cfg
        .graph
        .localization_edges()
        .iter()
        .filter(|e| !e.is_self_measurement() && !(e.observer < NUM_LEADERS && e.target < NUM_LEADERS))
        .copied()
        .collect();
    let mut edge_rngs: Vec<_> = edges
        .iter()
        .map(|e| {
            let (observer, target) = (e.observer, e.target);
            (
                stream_rng(seed, Stream::Range { observer, target }),
                stream_rng(seed, Stream::Bearing { observer, target }),
            )
        })
        .collect();

    let mut estimator = (!bypass).then(|| {
        let init = cfg.estimator.initial;
        let initial: Vec<AgentState> = (0..nf)
            .map(|f| {
                let s = truth[NUM_LEADERS + f];
                if !mode.noise {
                    return s;
                }
                let mut rng = stream_rng(seed, Stream::InitialEstimate(NUM_LEADERS + f));
                let dp = Vector2::new(normal(&mut rng), normal(&mut rng)) * init.position_std;
                let dv = Vector2::new(normal(&mut rng), normal(&mut rng)) * init.velocity_std;
                AgentState::new(s.position + dp, s.velocity + dv)
            })
            .collect();
        CooperativeEstimator::new(&initial, init, cfg.noise.process_std, cfg.noise.measurement)
    });

    let believed = |est: &Option<CooperativeEstimator>, truth: &[AgentState]| -> (Vec<AgentState>, Vec<f64>) {
        match est {
            Some(e) => ((0..nf).map(|f| e.estimate(f)).collect(), (0..nf).map(|f| e.block_trace(f)).collect()),
            None => (truth[NUM_LEADERS..].to_vec(), vec![0.0; nf]),
        }
    };

    let mut trace = SimulationTrace::new(n);
    let (estimates, cov_trace) = believed(&estimator, &truth);
    trace.rows.push(TraceRow {
        time: time(0),
        truth: truth.clone(),
        desired: wiring.desired(&start.map(|s| s.position)),
        estimates,
        cov_trace,
        controls: Vec::new(),
        measurements: 0,
        sigma_max: None,
    });

    for k in 0..steps {
        let goal = leader_goal(time(k));
        let (follower_view, _) = believed(&estimator, &truth);
        let view = |agent: usize| -> AgentState {
            if agent < NUM_LEADERS {
                truth[agent]
            } else {
                follower_view[agent - NUM_LEADERS]
            }
        };
        let mut controls = Vec::with_capacity(n);
        for l in 0..NUM_LEADERS {
            controls.push(leader_control(&truth[l], &goal[l].position, &goal[l].velocity, &cfg.gains));
        }
        for f in 0..nf {
            let agent = NUM_LEADERS + f;
            let neighbors = cfg.graph.in_neighbors(agent).map(view);
            controls.push(follower_control(&view(agent), &neighbors, &wiring.weights[f], &cfg.gains));
        }
        trace.rows[k].controls = controls.clone();

        for (a, s) in truth.iter_mut().enumerate() {
            let (rx, ry) = &mut process_rngs[a];
            let eta = Vector2::new(normal(rx), normal(ry)) * process_std;
            *s = step_agent(s, &controls[a], &eta, dt);
            let norm = s.to_vector().norm();
            if !(norm <= BLOWUP_NORM) {
                return Err(SimError::NumericalBlowup { step: k + 1, agent: a, norm });
            }
        }

        let mut fired = 0;
        let mut sigma_max = None;
        if let Some(est) = estimator.as_mut() {
            est.propagate(&controls[NUM_LEADERS..], dt)?;
            let mut measurements: Vec<RelativeMeasurement> = Vec::new();
            for (e, (rr, rb)) in edges.iter().zip(edge_rngs.iter_mut()) {
                if (k + 1) % e.period == 0 {
                    measurements.push(simulate_measurement(
                        (e.observer, e.target),
                        &truth[e.observer],
                        &truth[e.target],
                        &meas_noise,
                        rr,
                        rb,
                    )?);
                }
            }
            let anchors = [truth[0], truth[1], truth[2]];
            if !measurements.is_empty() {
                let diag = est.observer_diagnostics(&measurements, &anchors, dt, cfg.estimator.r2)?;
                sigma_max = Some(diag.sigma_max);
            }
            fired = est.update(&measurements, &anchors)?.applied;
        }

        let t = time(k + 1);
        let goal_next = leader_goal(t);
        let (estimates, cov_trace) = believed(&estimator, &truth);
        trace.rows.push(TraceRow {
            time: t,
            truth: truth.clone(),
            desired: wiring.desired(&goal_next.map(|s| s.position)),
            estimates,
            cov_trace,
            controls: Vec::new(),
            measurements: fired,
            sigma_max,
        });
    }
    Ok(trace)
}
