//! Scenario files.
//!
//! Scenarios are TOML documents. Agent ids are 1-based in the file; agents
//! 1–3 are the leaders. Omitted optional fields take documented defaults,
//! which are listed in [`ScenarioConfig::defaults_applied`].
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [[agent]]
//! id = 1
//! position = [0.0, 0.0]
//! # ... one entry per agent
//!
//! [[follower]]
//! id = 4
//! in_neighbors = [1, 2, 3]
//!
//! [localization]
//! edges = [{ observer = 4, target = 1 }, { observer = 5, target = 4, period = 2 }]
//! self_measuring = [1]
//!
//! [planner]
//! final_leaders = [[10.0, 0.0], [16.0, 0.0], [12.0, 5.0]]
//! duration = 20.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AgentState, ControlGains, DynamicsError};
use crate::geometry::{signed_area, Point2};
use crate::graphs::{validate_assumptions, AssumptionReport, GraphError, GraphSpec, LocalizationEdge, NUM_LEADERS};
use crate::localization::{InitialUncertainty, MeasurementNoise};
use crate::planner::{
    AreaConstraint, BoundaryConditions, DEFAULT_AREA_TOL_FRACTION, DEFAULT_GRID_SIZE, DEFAULT_T_RESOLUTION, MIN_GRID_SIZE,
};
use crate::safety::SafetyThresholds;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_DT: f64 = 0.1;
const DEFAULT_PROCESS_STD: f64 = 0.5;
const DEFAULT_RANGE_STD: f64 = 0.03;
const DEFAULT_BEARING_STD: f64 = 0.01;
const DEFAULT_R2: f64 = 0.999;
const DEFAULT_HOLD_TIME: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("scenario violates structural assumptions {:?}:\n{report}", report.failed())]
    Assumptions { report: AssumptionReport },
    #[error("invalid gains: {0}")]
    Gains(#[from] DynamicsError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    name: Option<String>,
    dt: Option<f64>,
    seed: Option<u64>,
    hold_time: Option<f64>,
    agent: Vec<RawAgent>,
    follower: Vec<RawFollower>,
    localization: Option<RawLocalization>,
    control: Option<RawControl>,
    noise: Option<RawNoise>,
    safety: Option<RawSafety>,
    planner: RawPlanner,
    estimator: Option<RawEstimator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: usize,
    position: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFollower {
    id: usize,
    in_neighbors: [usize; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    observer: usize,
    target: usize,
    period: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLocalization {
    #[serde(default)]
    edges: Vec<RawEdge>,
    #[serde(default)]
    self_measuring: Vec<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawControl {
    g1: Option<f64>,
    g2: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    process_std: Option<f64>,
    range_std: Option<f64>,
    bearing_std: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSafety {
    epsilon: Option<f64>,
    delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    final_leaders: [[f64; 2]; 3],
    initial_velocities: Option<[[f64; 2]; 3]>,
    final_velocities: Option<[[f64; 2]; 3]>,
    duration: Option<f64>,
    t_search: Option<[f64; 2]>,
    grid_size: Option<usize>,
    area: Option<f64>,
    area_tol: Option<f64>,
    t_resolution: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    position_std: Option<f64>,
    velocity_std: Option<f64>,
    r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-axis acceleration noise std on every agent (m/s²).
    pub process_std: f64,
    pub measurement: MeasurementNoise,
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            process_std: 0.0,
            measurement: MeasurementNoise {
                range_std: 0.0,
                bearing_std: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub final_leaders: [Point2; 3],
    pub initial_velocities: [Point2; 3],
    pub final_velocities: [Point2; 3],
    pub duration: Option<f64>,
    pub t_search: Option<(f64, f64)>,
    pub grid_size: usize,
    pub area: AreaConstraint,
    pub t_resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub initial: InitialUncertainty,
    /// Threshold of the observer contraction diagnostic.
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub dt: f64,
    pub seed: u64,
    /// Time simulated after the leaders arrive (s).
    pub hold_time: f64,
    /// Reference positions of all agents (zero-based index).
    pub reference: Vec<Point2>,
    pub graph: GraphSpec,
    pub gains: ControlGains,
    pub noise: NoiseConfig,
    pub safety: SafetyThresholds,
    pub planner: PlannerConfig,
    pub estimator: EstimatorConfig,
    /// Human-readable `field = value` lines for every default that was used.
    pub defaults_applied: Vec<String>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: std::fmt::Debug>(&mut self, value: Option<T>, field: &str, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(format!("{field} = {default:?}"));
            default
        })
    }
}

fn point(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

fn agent_index(id: usize, n: usize, what: &str) -> Result<usize, ScenarioError> {
    if id == 0 || id > n {
        return Err(invalid(format!("{what}: agent id {id} outside 1..={n}")));
    }
    Ok(id - 1)
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.name.is_empty() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ScenarioError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let mut d = Defaults(Vec::new());

        let n = raw.agent.len();
        if n <= NUM_LEADERS {
            return Err(invalid(format!("need more than {NUM_LEADERS} agents, got {n}")));
        }
        let mut reference = vec![None; n];
        for a in &raw.agent {
            let i = agent_index(a.id, n, "agent")?;
            if reference[i].replace(point(a.position)).is_some() {
                return Err(invalid(format!("agent {} listed twice", a.id)));
            }
            if !a.position.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("agent {} has a non-finite position", a.id)));
            }
        }
        let reference: Vec<Point2> = reference.into_iter().map(|p| p.expect("ids are a permutation")).collect();

        let mut triples = vec![None; n - NUM_LEADERS];
        for f in &raw.follower {
            let i = agent_index(f.id, n, "follower")?;
            if i < NUM_LEADERS {
                return Err(invalid(format!("agent {} is a leader and takes no in-neighbors", f.id)));
            }
            let mut t = [0; 3];
            for (slot, &id) in t.iter_mut().zip(&f.in_neighbors) {
                *slot = agent_index(id, n, "in_neighbors")?;
            }
            if triples[i - NUM_LEADERS].replace(t).is_some() {
                return Err(invalid(format!("follower {} listed twice", f.id)));
            }
        }
        let triples = triples
            .into_iter()
            .enumerate()
            .map(|(k, t)| t.ok_or_else(|| invalid(format!("follower {} has no in-neighbors", k + NUM_LEADERS + 1))))
            .collect::<Result<Vec<_>, _>>()?;

        let loc = raw.localization.unwrap_or_default();
        let mut edges = Vec::new();
        for e in &loc.edges {
            edges.push(LocalizationEdge {
                observer: agent_index(e.observer, n, "localization edge")?,
                target: agent_index(e.target, n, "localization edge")?,
                period: e.period.unwrap_or(1),
            });
        }
        for &id in &loc.self_measuring {
            let i = agent_index(id, n, "self_measuring")?;
            edges.push(LocalizationEdge::new(i, i));
        }
        let graph = GraphSpec::new(n, triples, edges)?;
        let report = validate_assumptions(&graph, &reference)?;
        if !report.all_pass() {
            return Err(ScenarioError::Assumptions { report });
        }

        let dt = d.take(raw.dt, "dt", DEFAULT_DT);
        let control = raw.control.unwrap_or_default();
        let gains = ControlGains {
            g1: d.take(control.g1, "control.g1", ControlGains::default().g1),
            g2: d.take(control.g2, "control.g2", ControlGains::default().g2),
        };
        gains.validate(dt)?;

        let noise = raw.noise.unwrap_or_default();
        let noise = NoiseConfig {
            process_std: d.take(noise.process_std, "noise.process_std", DEFAULT_PROCESS_STD),
            measurement: MeasurementNoise {
                range_std: d.take(noise.range_std, "noise.range_std", DEFAULT_RANGE_STD),
                bearing_std: d.take(noise.bearing_std, "noise.bearing_std", DEFAULT_BEARING_STD),
            },
        };
        let stds = [noise.process_std, noise.measurement.range_std, noise.measurement.bearing_std];
        if !stds.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(invalid("noise standard deviations must be finite and nonnegative"));
        }

        let safety = raw.safety.unwrap_or_default();
        let defaults = SafetyThresholds::default();
        let safety = SafetyThresholds {
            epsilon: d.take(safety.epsilon, "safety.epsilon", defaults.epsilon),
            delta: d.take(safety.delta, "safety.delta", defaults.delta),
        };
        safety.validate().map_err(|e| invalid(e.to_string()))?;

        let est = raw.estimator.unwrap_or_default();
        let init = InitialUncertainty::default();
        let estimator = EstimatorConfig {
            initial: InitialUncertainty {
                position_std: d.take(est.position_std, "estimator.position_std", init.position_std),
                velocity_std: d.take(est.velocity_std, "estimator.velocity_std", init.velocity_std),
            },
            r2: d.take(est.r2, "estimator.r2", DEFAULT_R2),
        };
        if !(estimator.initial.position_std > 0.0 && estimator.initial.velocity_std > 0.0) {
            return Err(invalid("estimator initial standard deviations must be positive"));
        }
        if !(estimator.r2 > 0.0 && estimator.r2 < 1.0) {
            return Err(invalid("estimator.r2 must lie in (0, 1)"));
        }

        let p = raw.planner;
        let leaders0 = [reference[0], reference[1], reference[2]];
        let initial_area = signed_area(&leaders0[0], &leaders0[1], &leaders0[2]).abs();
        let a0 = d.take(p.area, "planner.area", initial_area);
        let area_tol = d.take(p.area_tol, "planner.area_tol", DEFAULT_AREA_TOL_FRACTION * a0);
        let zero = [[0.0; 2]; 3];
        let planner = PlannerConfig {
            final_leaders: p.final_leaders.map(point),
            initial_velocities: d.take(p.initial_velocities, "planner.initial_velocities", zero).map(point),
            final_velocities: d.take(p.final_velocities, "planner.final_velocities", zero).map(point),
            duration: p.duration,
            t_search: p.t_search.map(|[a, b]| (a, b)),
            grid_size: d.take(p.grid_size, "planner.grid_size", DEFAULT_GRID_SIZE),
            area: AreaConstraint { a0, area_tol },
            t_resolution: d.take(p.t_resolution, "planner.t_resolution", DEFAULT_T_RESOLUTION),
        };
        if planner.duration.is_none() && planner.t_search.is_none() {
            return Err(invalid("planner needs a duration or t_search bounds"));
        }
        if planner.duration.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return Err(invalid("planner.duration must be positive"));
        }
        if planner.grid_size < MIN_GRID_SIZE {
            return Err(invalid(format!("planner.grid_size must be at least {MIN_GRID_SIZE}")));
        }
        if !(a0 > 0.0 && area_tol > 0.0 && planner.t_resolution > 0.0) {
            return Err(invalid("planner area, area_tol and t_resolution must be positive"));
        }

        let cfg = Self {
            name: raw.name.unwrap_or_default(),
            dt,
            seed: d.take(raw.seed, "seed", 0),
            hold_time: d.take(raw.hold_time, "hold_time", DEFAULT_HOLD_TIME),
            reference,
            graph,
            gains,
            noise,
            safety,
            planner,
            estimator,
            defaults_applied: d.0,
        };
        if !(cfg.dt > 0.0 && cfg.hold_time >= 0.0) {
            return Err(invalid("dt must be positive and hold_time nonnegative"));
        }
        Ok(cfg)
    }

    pub fn num_agents(&self) -> usize {
        self.reference.len()
    }

    pub fn num_followers(&self) -> usize {
        self.reference.len() - NUM_LEADERS
    }

    pub fn leader_reference(&self) -> [Point2; 3] {
        [self.reference[0], self.reference[1], self.reference[2]]
    }

    /// Leader boundary conditions for a maneuver of the given duration,
    /// starting at `t = 0` from the reference positions.
    pub fn boundary_conditions(&self, duration: f64) -> BoundaryConditions {
        let p = &self.planner;
        BoundaryConditions {
            t0: 0.0,
            tf: duration,
            initial: std::array::from_fn(|l| AgentState::new(self.reference[l], p.initial_velocities[l])),
            terminal: std::array::from_fn(|l| AgentState::new(p.final_leaders[l], p.final_velocities[l])),
        }
    }

    /// The scenario with a different maneuver duration.
    pub fn with_duration(&self, duration: f64) -> Self {
        let mut c = self.clone();
        c.planner.duration = Some(duration);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[[agent]]
id = 1
position = [0.0, 0.0]
[[agent]]
id = 2
position = [4.0, 0.0]
[[agent]]
id = 3
position = [0.0, 4.0]
[[agent]]
id = 4
position = [1.0, 1.0]

[[follower]]
id = 4
in_neighbors = [1, 2, 3]

[planner]
final_leaders = [[10.0, 0.0], [14.0, 0.0], [10.0, 4.0]]
duration = 10.0
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.gains, ControlGains { g1: 6.0, g2: 9.0 });
        assert_eq!(cfg.safety, SafetyThresholds { epsilon: 0.5, delta: 0.5 });
        assert_eq!(cfg.planner.area.a0, 8.0);
        assert_eq!(cfg.graph.in_neighbors(3), [0, 1, 2]);
        for field in ["dt", "control.g1", "control.g2", "safety.epsilon", "safety.delta", "noise.process_std"] {
            assert!(
                cfg.defaults_applied.iter().any(|l| l.starts_with(&format!("{field} ="))),
                "{field} not echoed"
            );
        }
    }

    #[test]
    fn follower_on_edge_names_assumption_three() {
        let text = MINIMAL.replace("position = [1.0, 1.0]", "position = [2.0, 0.0]");
        match ScenarioConfig::from_toml_str(&text) {
            Err(ScenarioError::Assumptions { report }) => assert_eq!(report.failed(), vec![3]),
            other => panic!("expected an assumption error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = MINIMAL.replace("duration = 10.0", "duration = \"ten\"");
        match ScenarioConfig::from_toml_str(&text) {
            Err(ScenarioError::Parse { line, .. }) => {
                let expected = text.lines().position(|l| l.starts_with("duration")).unwrap() + 1;
                assert_eq!(line, expected);
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(ScenarioError::Validation(_))));
        let text = MINIMAL.replace("duration = 10.0", "");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn follower_self_measurement_rejected() {
        let text = format!("{MINIMAL}\n[localization]\nself_measuring = [4]\n");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(ScenarioError::Graph(_))));
    }
}
