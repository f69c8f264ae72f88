//! Coordination and localization digraphs, the reference-consistent weight
//! matrix `W = [B A]`, and structural checks on both.
//!
//! Agents are indexed from zero internally: leaders are `0, 1, 2` and
//! followers `3..N`. Human-facing output (reports, scenario files) uses the
//! one-based numbering `1..=N`.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geometry::{barycentric_coords, signed_area, BarycentricWeights, Point2, Triangle, DEGENERACY_TOL};

pub const NUM_LEADERS: usize = 3;

/// Minimum barycentric weight for a follower to count as strictly inside its
/// in-neighbor triangle.
pub const CONTAINMENT_MARGIN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph needs at least {NUM_LEADERS} leaders and one follower, got {0} agents")]
    TooFewAgents(usize),
    #[error("expected {expected} in-neighbor triples (one per follower), got {got}")]
    TripleCount { expected: usize, got: usize },
    #[error("agent {agent} references unknown agent {other}")]
    UnknownAgent { agent: usize, other: usize },
    #[error("agent {0} lists itself as an in-neighbor")]
    SelfLoop(usize),
    #[error("agent {0} has repeated in-neighbors")]
    RepeatedNeighbor(usize),
    #[error("localization edge {observer} -> {target} is invalid: {reason}")]
    BadLocalizationEdge {
        observer: usize,
        target: usize,
        reason: &'static str,
    },
    #[error("expected {expected} reference positions, got {got}")]
    PositionCount { expected: usize, got: usize },
    #[error("structural assumptions violated:\n{0}")]
    AssumptionViolation(AssumptionReport),
}

/// A directed localization edge: `observer` measures range and bearing to
/// `target`. `observer == target` marks an absolute self-measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalizationEdge {
    pub observer: usize,
    pub target: usize,
    /// Fires every `period` estimator steps.
    pub period: usize,
}

impl LocalizationEdge {
    pub fn new(observer: usize, target: usize) -> Self {
        Self {
            observer,
            target,
            period: 1,
        }
    }

    pub fn is_self_measurement(&self) -> bool {
        self.observer == self.target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    num_agents: usize,
    /// In-neighbor triple of follower `NUM_LEADERS + k` at index `k`.
    in_neighbors: Vec<[usize; 3]>,
    localization: Vec<LocalizationEdge>,
}

impl GraphSpec {
    /// Builds and structurally validates a graph. Geometric assumptions are
    /// checked separately by [`validate_assumptions`].
    ///
    /// Self-measurement edges are only accepted for leaders.
    pub fn new(
        num_agents: usize,
        in_neighbors: Vec<[usize; 3]>,
        mut localization: Vec<LocalizationEdge>,
    ) -> Result<Self, GraphError> {
        if num_agents <= NUM_LEADERS {
            return Err(GraphError::TooFewAgents(num_agents));
        }
        let expected = num_agents - NUM_LEADERS;
        if in_neighbors.len() != expected {
            return Err(GraphError::TripleCount {
                expected,
                got: in_neighbors.len(),
            });
        }
        for (k, triple) in in_neighbors.iter().enumerate() {
            let agent = k + NUM_LEADERS;
            for &j in triple {
                if j >= num_agents {
                    return Err(GraphError::UnknownAgent { agent, other: j });
                }
                if j == agent {
                    return Err(GraphError::SelfLoop(agent));
                }
            }
            if triple[0] == triple[1] || triple[1] == triple[2] || triple[0] == triple[2] {
                return Err(GraphError::RepeatedNeighbor(agent));
            }
        }
        for e in &localization {
            let bad = |reason| GraphError::BadLocalizationEdge {
                observer: e.observer,
                target: e.target,
                reason,
            };
            if e.observer >= num_agents || e.target >= num_agents {
                return Err(bad("unknown agent"));
            }
            if e.period == 0 {
                return Err(bad("period must be at least one step"));
            }
            if e.is_self_measurement() && e.observer >= NUM_LEADERS {
                return Err(bad("only leaders can self-measure"));
            }
        }
        localization.sort();
        localization.dedup_by_key(|e| (e.observer, e.target));
        Ok(Self {
            num_agents,
            in_neighbors,
            localization,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_followers(&self) -> usize {
        self.num_agents - NUM_LEADERS
    }

    pub fn is_leader(&self, agent: usize) -> bool {
        agent < NUM_LEADERS
    }

    /// In-neighbors of follower `agent` (an agent index, not a follower offset).
    pub fn in_neighbors(&self, agent: usize) -> [usize; 3] {
        self.in_neighbors[agent - NUM_LEADERS]
    }

    pub fn in_neighbor_triples(&self) -> &[[usize; 3]] {
        &self.in_neighbors
    }

    /// Coordination edges `(j, i)`: follower `i` listens to `j`.
    pub fn coordination_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(k, t)| t.iter().map(move |&j| (j, k + NUM_LEADERS)))
    }

    /// Localization edges sorted by `(observer, target)`.
    pub fn localization_edges(&self) -> &[LocalizationEdge] {
        &self.localization
    }

    pub fn self_measuring(&self) -> impl Iterator<Item = usize> + '_ {
        self.localization.iter().filter(|e| e.is_self_measurement()).map(|e| e.observer)
    }

    /// Agents reachable from `source` along coordination edges.
    pub fn reachable_from(&self, source: usize) -> Vec<bool> {
        let mut out_edges = vec![Vec::new(); self.num_agents];
        for (j, i) in self.coordination_edges() {
            out_edges[j].push(i);
        }
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([source]);
        seen[source] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &out_edges[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }
}

/// Verdicts on the four structural assumptions. Agent lists are zero-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssumptionReport {
    /// Leaders form a triangle.
    pub leaders_non_collinear: bool,
    /// Followers whose in-neighbors are collinear.
    pub collinear_neighbors: Vec<usize>,
    /// Followers not strictly inside their in-neighbor triangle.
    pub outside_neighbors: Vec<usize>,
    /// `(leader, follower)` pairs with no directed coordination path.
    pub unreachable: Vec<(usize, usize)>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.leaders_non_collinear
            && self.collinear_neighbors.is_empty()
            && self.outside_neighbors.is_empty()
            && self.unreachable.is_empty()
    }

    /// Numbers (1–4) of the failing assumptions.
    pub fn failed(&self) -> Vec<u8> {
        let mut out = Vec::new();
        if !self.leaders_non_collinear {
            out.push(1);
        }
        if !self.collinear_neighbors.is_empty() {
            out.push(2);
        }
        if !self.outside_neighbors.is_empty() {
            out.push(3);
        }
        if !self.unreachable.is_empty() {
            out.push(4);
        }
        out
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |v: &[usize]| v.iter().map(|a| (a + 1).to_string()).collect::<Vec<_>>().join(", ");
        if self.all_pass() {
            return write!(f, "all assumptions hold");
        }
        if !self.leaders_non_collinear {
            writeln!(f, "assumption 1: leaders 1, 2, 3 are collinear")?;
        }
        if !self.collinear_neighbors.is_empty() {
            writeln!(f, "assumption 2: collinear in-neighbors for agents {}", ids(&self.collinear_neighbors))?;
        }
        if !self.outside_neighbors.is_empty() {
            writeln!(
                f,
                "assumption 3: agents {} not strictly inside their in-neighbor triangle",
                ids(&self.outside_neighbors)
            )?;
        }
        if !self.unreachable.is_empty() {
            let mut followers: Vec<usize> = self.unreachable.iter().map(|&(_, i)| i).collect();
            followers.sort_unstable();
            followers.dedup();
            writeln!(f, "assumption 4: no path from some leader to agents {}", ids(&followers))?;
        }
        Ok(())
    }
}

fn check_positions(g: &GraphSpec, positions: &[Point2]) -> Result<(), GraphError> {
    if positions.len() != g.num_agents {
        return Err(GraphError::PositionCount {
            expected: g.num_agents,
            got: positions.len(),
        });
    }
    Ok(())
}

fn neighbor_weights(g: &GraphSpec, positions: &[Point2], agent: usize) -> Option<BarycentricWeights> {
    let [a, b, c] = g.in_neighbors(agent);
    let tri = Triangle::new(positions[a], positions[b], positions[c]).ok()?;
    Some(barycentric_coords(&positions[agent], &tri))
}

pub fn validate_assumptions(g: &GraphSpec, positions: &[Point2]) -> Result<AssumptionReport, GraphError> {
    check_positions(g, positions)?;
    let mut report = AssumptionReport {
        leaders_non_collinear: signed_area(&positions[0], &positions[1], &positions[2]).abs() >= DEGENERACY_TOL,
        ..Default::default()
    };
    for agent in NUM_LEADERS..g.num_agents {
        match neighbor_weights(g, positions, agent) {
            None => report.collinear_neighbors.push(agent),
            Some(w) if w.min() <= CONTAINMENT_MARGIN => report.outside_neighbors.push(agent),
            Some(_) => {}
        }
    }
    for leader in 0..NUM_LEADERS {
        let seen = g.reachable_from(leader);
        for (agent, &ok) in seen.iter().enumerate().skip(NUM_LEADERS) {
            if !ok {
                report.unreachable.push((leader, agent));
            }
        }
    }
    Ok(report)
}

/// `W ∈ R^{(N-3)×N}` partitioned as `[B A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn num_followers(&self) -> usize {
        self.w.nrows()
    }

    pub fn num_agents(&self) -> usize {
        self.w.ncols()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Leader block, `(N-3)×3`.
    pub fn b(&self) -> DMatrix<f64> {
        self.w.columns(0, NUM_LEADERS).into_owned()
    }

    /// Follower block, `(N-3)×(N-3)`.
    pub fn a(&self) -> DMatrix<f64> {
        self.w.columns(NUM_LEADERS, self.num_followers()).into_owned()
    }

    /// Communication weights of follower `agent` for its in-neighbors, in the
    /// order of its triple.
    pub fn row_weights(&self, agent: usize, neighbors: [usize; 3]) -> [f64; 3] {
        let row = agent - NUM_LEADERS;
        neighbors.map(|j| self.w[(row, j)])
    }
}

pub fn build_weight_matrix(g: &GraphSpec, positions: &[Point2]) -> Result<WeightMatrix, GraphError> {
    let report = validate_assumptions(g, positions)?;
    if !report.all_pass() {
        return Err(GraphError::AssumptionViolation(report));
    }
    let nf = g.num_followers();
    let mut w = DMatrix::zeros(nf, g.num_agents);
    for agent in NUM_LEADERS..g.num_agents {
        let row = agent - NUM_LEADERS;
        // Validation guarantees a non-degenerate in-neighbor triangle.
        let alpha = neighbor_weights(g, positions, agent).expect("validated triangle");
        for (&j, a) in g.in_neighbors(agent).iter().zip(alpha.0) {
            w[(row, j)] = a;
        }
        w[(row, agent)] = -1.0;
    }
    Ok(WeightMatrix { w })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AProperties {
    pub diag_minus_one: bool,
    pub nonneg_offdiag: bool,
    /// Largest real part over the eigenvalues of `A`.
    pub spectral_abscissa: f64,
}

impl AProperties {
    pub fn hurwitz(&self) -> bool {
        self.spectral_abscissa < 0.0
    }
}

pub fn check_a_properties(w: &WeightMatrix) -> AProperties {
    let a = w.a();
    let n = a.nrows();
    let diag_minus_one = (0..n).all(|i| a[(i, i)] == -1.0);
    let b = w.b();
    let nonneg_offdiag = b.iter().all(|&x| x >= 0.0)
        && (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] >= 0.0));
    let spectral_abscissa = if nonneg_offdiag {
        metzler_abscissa(&a)
    } else {
        schur_abscissa(&a)
    };
    AProperties {
        diag_minus_one,
        nonneg_offdiag,
        spectral_abscissa,
    }
}

/// `s I − M` has only positive pivots under elimination without pivoting.
/// For a Metzler `M` this holds iff `s` exceeds its spectral abscissa.
fn shifted_m_matrix(m: &DMatrix<f64>, s: f64) -> bool {
    let n = m.nrows();
    let mut z = DMatrix::from_fn(n, n, |i, j| if i == j { s - m[(i, j)] } else { -m[(i, j)] });
    for k in 0..n {
        let pivot = z[(k, k)];
        if !(pivot > 0.0) {
            return false;
        }
        for i in k + 1..n {
            let f = z[(i, k)] / pivot;
            if f != 0.0 {
                for j in k + 1..n {
                    z[(i, j)] -= f * z[(k, j)];
                }
            }
        }
    }
    true
}

/// Spectral abscissa of a matrix with nonnegative off-diagonal entries, by
/// bisection between the largest diagonal entry and the largest row sum.
/// The Perron root is real, so no eigen-solver is needed; this also stays
/// exact for the highly defective matrices layered graphs produce.
fn metzler_abscissa(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut lo = (0..n).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = (0..n).map(|i| m.row(i).sum()).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shifted_m_matrix(m, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest real eigenvalue part via a capped real Schur iteration; NaN when it
/// does not converge.
fn schur_abscissa(m: &DMatrix<f64>) -> f64 {
    nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000 * m.nrows().max(1))
        .map(|s| s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(f64::NAN)
}
