//! Leader trajectory planning.
//!
//! Each leader coordinate is a double integrator `q̈ = v`. The plan minimizes
//! the control effort `J = ∫ Σ_leaders |v|² dt` subject to position/velocity
//! boundary conditions and to the leading triangle keeping a fixed area.
//!
//! The problem is transcribed on a uniform grid: the decision variables are
//! nodal accelerations, acceleration is linear between nodes (so position is
//! the cubic Hermite interpolant of the nodal samples), and the effort of each
//! piecewise-linear segment is integrated exactly. Boundary conditions are
//! linear equalities in the accelerations. The area equality is imposed at
//! every interior node by an augmented-Lagrangian outer loop; each inner
//! iteration solves the Gauss–Newton model of the augmented Lagrangian as an
//! equality-constrained QP, followed by a backtracking line search.

use nalgebra::{DMatrix, DVector, SVector, Vector2};
use thiserror::Error;

use crate::dynamics::AgentState;
use crate::geometry::{signed_area, Point2, DEGENERACY_TOL};

pub const DEFAULT_GRID_SIZE: usize = 201;
pub const MIN_GRID_SIZE: usize = 20;
/// Default area tolerance as a fraction of the target area.
pub const DEFAULT_AREA_TOL_FRACTION: f64 = 1e-3;
/// Default bisection resolution of the travel-time search (s).
pub const DEFAULT_T_RESOLUTION: f64 = 0.1;

const MAX_OUTER: usize = 60;
const MAX_INNER: usize = 60;
const COST_CHANGE_TOL: f64 = 1e-8;
const MAX_PENALTY: f64 = 1e12;

/// Number of scalar trajectories: three leaders times two axes.
const BLOCKS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("invalid boundary conditions: {0}")]
    InvalidBoundary(String),
    #[error("grid size {0} is below the minimum of {MIN_GRID_SIZE}")]
    GridTooSmall(usize),
    #[error("area constraint infeasible: {0}")]
    InfeasibleConstraint(String),
    #[error("no convergence after {outer_iterations} outer iterations (max area violation {max_area_violation:e} m², tolerance {area_tol:e} m²)")]
    NoConvergence {
        outer_iterations: usize,
        max_area_violation: f64,
        area_tol: f64,
        cost: f64,
    },
    #[error("time {t} s outside trajectory span [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("linear solve failed while {0}")]
    Numerical(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub t0: f64,
    pub tf: f64,
    pub initial: [AgentState; 3],
    pub terminal: [AgentState; 3],
}

impl BoundaryConditions {
    /// Leaders start and finish at rest.
    pub fn rest_to_rest(t0: f64, tf: f64, initial: [Point2; 3], terminal: [Point2; 3]) -> Self {
        Self {
            t0,
            tf,
            initial: initial.map(AgentState::at_rest),
            terminal: terminal.map(AgentState::at_rest),
        }
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.tf = self.t0 + duration;
        self
    }

    fn initial_positions(&self) -> [Point2; 3] {
        self.initial.map(|s| s.position)
    }

    fn terminal_positions(&self) -> [Point2; 3] {
        self.terminal.map(|s| s.position)
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let finite = [self.t0, self.tf].iter().all(|x| x.is_finite())
            && self.initial.iter().chain(&self.terminal).all(AgentState::is_finite);
        if !finite {
            return Err(PlannerError::InvalidBoundary("non-finite value".into()));
        }
        if self.tf <= self.t0 {
            return Err(PlannerError::InvalidBoundary(format!(
                "tf = {} must exceed t0 = {}",
                self.tf, self.t0
            )));
        }
        for (name, tri) in [("initial", self.initial_positions()), ("final", self.terminal_positions())] {
            if signed_area(&tri[0], &tri[1], &tri[2]).abs() < DEGENERACY_TOL {
                return Err(PlannerError::InvalidBoundary(format!("{name} leader triangle is degenerate")));
            }
        }
        Ok(())
    }
}

/// Target area of the leading triangle and the admissible deviation (m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaConstraint {
    pub a0: f64,
    pub area_tol: f64,
}

impl AreaConstraint {
    pub fn new(a0: f64) -> Self {
        Self {
            a0,
            area_tol: DEFAULT_AREA_TOL_FRACTION * a0,
        }
    }

    /// Area of the initial leading triangle.
    pub fn from_initial(bc: &BoundaryConditions) -> Self {
        let [a, b, c] = bc.initial_positions();
        Self::new(signed_area(&a, &b, &c).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanDiagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_area_violation: f64,
    pub final_penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSample {
    pub position: Point2,
    pub velocity: Vector2<f64>,
    pub acceleration: Vector2<f64>,
}

/// Sampled leader trajectories on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderTrajectory {
    t0: f64,
    tf: f64,
    step: f64,
    samples: Vec<[LeaderSample; 3]>,
    cost: f64,
    pub diagnostics: PlanDiagnostics,
}

impl LeaderTrajectory {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn grid_size(&self) -> usize {
        self.samples.len()
    }

    pub fn node_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.step
    }

    pub fn samples(&self) -> &[[LeaderSample; 3]] {
        &self.samples
    }

    /// Control effort `∫ Σ |v|² dt` of the sampled trajectory.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Leader positions at every grid node.
    pub fn node_positions(&self) -> impl Iterator<Item = [Point2; 3]> + '_ {
        self.samples.iter().map(|s| s.map(|x| x.position))
    }

    /// Largest `| |area(t_k)| − a0 |` over the grid.
    pub fn max_area_deviation(&self, a0: f64) -> f64 {
        self.node_positions()
            .map(|[a, b, c]| (signed_area(&a, &b, &c).abs() - a0).abs())
            .fold(0.0, f64::max)
    }

    /// Exact evaluation of the piecewise-cubic trajectory.
    pub fn evaluate(&self, t: f64) -> Result<[LeaderSample; 3], PlannerError> {
        let slack = 1e-9 * self.duration().max(1.0);
        if !(t >= self.t0 - slack && t <= self.tf + slack) {
            return Err(PlannerError::OutOfRange {
                t,
                t0: self.t0,
                tf: self.tf,
            });
        }
        Ok(self.evaluate_clamped(t))
    }

    /// Like [`evaluate`](Self::evaluate), holding the boundary samples outside
    /// the span.
    pub fn evaluate_clamped(&self, t: f64) -> [LeaderSample; 3] {
        let last = self.samples.len() - 1;
        if t <= self.t0 {
            return self.samples[0];
        }
        let u = (t - self.t0) / self.step;
        let k = u.floor() as usize;
        if k >= last {
            return self.samples[last];
        }
        let s = t - self.node_time(k);
        let h = self.step;
        let (lo, hi) = (&self.samples[k], &self.samples[k + 1]);
        std::array::from_fn(|l| {
            let (a0, a1) = (lo[l].acceleration, hi[l].acceleration);
            let jerk = (a1 - a0) / h;
            LeaderSample {
                position: lo[l].position + lo[l].velocity * s + a0 * (s * s / 2.0) + jerk * (s * s * s / 6.0),
                velocity: lo[l].velocity + a0 * s + jerk * (s * s / 2.0),
                acceleration: a0 + jerk * s,
            }
        })
    }
}

/// SPD tridiagonal matrix with a cached `LDLᵀ` factorization.
#[derive(Debug, Clone)]
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiagonal {
    fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        let n = diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = diag[0];
        for i in 1..n {
            l[i - 1] = off[i - 1] / d[i - 1];
            d[i] = diag[i] - l[i - 1] * off[i - 1];
        }
        Self { diag, off, d, l }
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.diag.len();
        DVector::from_fn(n, |i, _| {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            v
        })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.d.len();
        let mut x = b.clone();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// Grid-dependent matrices shared by every scalar trajectory.
#[derive(Debug, Clone)]
struct Transcription {
    m: usize,
    h: f64,
    /// Node positions from accelerations: `p_k = p_0 + k h v_0 + (Φ a)_k`.
    phi: DMatrix<f64>,
    /// Node velocities: `v_k = v_0 + (Ψ a)_k`.
    psi: DMatrix<f64>,
    /// Effort Hessian: `J = ½ aᵀ H a` per scalar trajectory.
    hess: Tridiagonal,
    /// `Φ H⁻¹ Φᵀ`.
    gamma: DMatrix<f64>,
    /// Terminal rows `[Φ_{M-1}; Ψ_{M-1}]`.
    e_rows: [DVector<f64>; 2],
    /// `H⁻¹ Eᵀ` and `E H⁻¹ Eᵀ`.
    hinv_et: [DVector<f64>; 2],
    e_hinv_et: nalgebra::Matrix2<f64>,
}

impl Transcription {
    fn new(m: usize, duration: f64) -> Self {
        let h = duration / (m - 1) as f64;
        let mut phi = DMatrix::zeros(m, m);
        let mut psi = DMatrix::zeros(m, m);
        for k in 0..m - 1 {
            for j in 0..m {
                let p = phi[(k, j)] + h * psi[(k, j)];
                phi[(k + 1, j)] = p;
                psi[(k + 1, j)] = psi[(k, j)];
            }
            phi[(k + 1, k)] += h * h / 3.0;
            phi[(k + 1, k + 1)] += h * h / 6.0;
            psi[(k + 1, k)] += h / 2.0;
            psi[(k + 1, k + 1)] += h / 2.0;
        }

        let mut diag = vec![4.0 * h / 3.0; m];
        diag[0] = 2.0 * h / 3.0;
        diag[m - 1] = 2.0 * h / 3.0;
        let hess = Tridiagonal::new(diag, vec![h / 3.0; m - 1]);

        let mut hinv_phi_t = DMatrix::zeros(m, m);
        for k in 0..m {
            let col = hess.solve(&phi.row(k).transpose());
            hinv_phi_t.set_column(k, &col);
        }
        let gamma = &phi * &hinv_phi_t;

        let e_rows = [phi.row(m - 1).transpose(), psi.row(m - 1).transpose()];
        let hinv_et = [hess.solve(&e_rows[0]), hess.solve(&e_rows[1])];
        let e_hinv_et = nalgebra::Matrix2::from_fn(|i, j| e_rows[i].dot(&hinv_et[j]));
        Self {
            m,
            h,
            phi,
            psi,
            hess,
            gamma,
            e_rows,
            hinv_et,
            e_hinv_et,
        }
    }

    fn duration(&self) -> f64 {
        self.h * (self.m - 1) as f64
    }

    /// Terminal residual targets `[q_f − q_0 − v_0 T, v_f − v_0]`.
    fn terminal_rhs(&self, q0: f64, v0: f64, qf: f64, vf: f64) -> SVector<f64, 2> {
        SVector::<f64, 2>::new(qf - q0 - v0 * self.duration(), vf - v0)
    }

    /// Minimum-effort accelerations of one scalar trajectory without path
    /// constraints.
    fn unconstrained(&self, rhs: &SVector<f64, 2>) -> Result<DVector<f64>, PlannerError> {
        let nu = self
            .e_hinv_et
            .try_inverse()
            .ok_or(PlannerError::Numerical("solving the boundary-condition system"))?
            * rhs;
        Ok(&self.hinv_et[0] * nu[0] + &self.hinv_et[1] * nu[1])
    }

    fn effort(&self, a: &DVector<f64>) -> f64 {
        0.5 * a.dot(&self.hess.mul(a))
    }

    fn positions(&self, q0: f64, v0: f64, a: &DVector<f64>) -> DVector<f64> {
        let mut p = &self.phi * a;
        for k in 0..self.m {
            p[k] += q0 + v0 * (k as f64 * self.h);
        }
        p
    }

    fn velocities(&self, v0: f64, a: &DVector<f64>) -> DVector<f64> {
        let mut v = &self.psi * a;
        v.add_scalar_mut(v0);
        v
    }
}

/// Result of planning one scalar rest-to-rest (or general) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisProfile {
    pub step: f64,
    pub positions: DVector<f64>,
    pub velocities: DVector<f64>,
    pub accelerations: DVector<f64>,
    pub cost: f64,
}

/// Minimum-effort transcription of a single double-integrator coordinate
/// with fixed boundary position and velocity.
pub fn plan_axis(
    q0: f64,
    v0: f64,
    qf: f64,
    vf: f64,
    duration: f64,
    grid_size: usize,
) -> Result<AxisProfile, PlannerError> {
    if grid_size < MIN_GRID_SIZE {
        return Err(PlannerError::GridTooSmall(grid_size));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(PlannerError::InvalidBoundary(format!("duration {duration} must be positive")));
    }
    let tr = Transcription::new(grid_size, duration);
    let a = tr.unconstrained(&tr.terminal_rhs(q0, v0, qf, vf))?;
    Ok(AxisProfile {
        step: tr.h,
        positions: tr.positions(q0, v0, &a),
        velocities: tr.velocities(v0, &a),
        cost: tr.effort(&a),
        accelerations: a,
    })
}

type Blocks = [DVector<f64>; BLOCKS];

/// Per-block boundary data: `(q0, v0, qf, vf)`, block `b = 2·leader + axis`.
fn block_boundaries(bc: &BoundaryConditions) -> [(f64, f64, f64, f64); BLOCKS] {
    std::array::from_fn(|b| {
        let (l, axis) = (b / 2, b % 2);
        (
            bc.initial[l].position[axis],
            bc.initial[l].velocity[axis],
            bc.terminal[l].position[axis],
            bc.terminal[l].velocity[axis],
        )
    })
}

/// Augmented-Lagrangian machinery for the area equality.
struct AreaProblem<'a> {
    tr: &'a Transcription,
    bounds: [(f64, f64, f64, f64); BLOCKS],
    /// Signed target area (orientation of the initial triangle).
    target: f64,
    a0: f64,
}

struct Linearization {
    positions: Blocks,
    /// Scaled area residuals at interior nodes.
    residual: DVector<f64>,
    /// `∂c_k/∂p_b(k)` per interior node (rows) and block (columns).
    slopes: DMatrix<f64>,
}

impl AreaProblem<'_> {
    fn interior(&self) -> usize {
        self.tr.m - 2
    }

    fn linearize(&self, a: &Blocks) -> Linearization {
        let positions: Blocks = std::array::from_fn(|b| {
            let (q0, v0, _, _) = self.bounds[b];
            self.tr.positions(q0, v0, &a[b])
        });
        let nc = self.interior();
        let mut residual = DVector::zeros(nc);
        let mut slopes = DMatrix::zeros(nc, BLOCKS);
        let scale = 1.0 / self.a0;
        for c in 0..nc {
            let k = c + 1;
            let (x1, y1) = (positions[0][k], positions[1][k]);
            let (x2, y2) = (positions[2][k], positions[3][k]);
            let (x3, y3) = (positions[4][k], positions[5][k]);
            let area = 0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1));
            residual[c] = (area - self.target) * scale;
            let grad = [
                0.5 * (y2 - y3),
                0.5 * (x3 - x2),
                0.5 * (y3 - y1),
                0.5 * (x1 - x3),
                0.5 * (y1 - y2),
                0.5 * (x2 - x1),
            ];
            for (b, g) in grad.into_iter().enumerate() {
                slopes[(c, b)] = g * scale;
            }
        }
        Linearization {
            positions,
            residual,
            slopes,
        }
    }

    fn effort(&self, a: &Blocks) -> f64 {
        a.iter().map(|ab| self.tr.effort(ab)).sum()
    }

    fn merit(&self, a: &Blocks, lambda: &DVector<f64>, mu: f64) -> (f64, DVector<f64>) {
        let lin = self.linearize(a);
        let c = lin.residual;
        (self.effort(a) + lambda.dot(&c) + 0.5 * mu * c.norm_squared(), c)
    }

    /// `G u`: linearized residual change for an acceleration perturbation.
    fn jac_mul(&self, slopes: &DMatrix<f64>, u: &Blocks) -> DVector<f64> {
        let mut out = DVector::zeros(self.interior());
        for (b, ub) in u.iter().enumerate() {
            let pu = &self.tr.phi * ub;
            for c in 0..out.len() {
                out[c] += slopes[(c, b)] * pu[c + 1];
            }
        }
        out
    }

    /// `Gᵀ z`.
    fn jac_t_mul(&self, slopes: &DMatrix<f64>, z: &DVector<f64>) -> Blocks {
        std::array::from_fn(|b| {
            let mut w = DVector::zeros(self.tr.m);
            for c in 0..z.len() {
                w[c + 1] = slopes[(c, b)] * z[c];
            }
            self.tr.phi.tr_mul(&w)
        })
    }

    fn hinv(&self, x: &Blocks) -> Blocks {
        std::array::from_fn(|b| self.tr.hess.solve(&x[b]))
    }
}

/// `(H + μ GᵀG)⁻¹` applied through the Woodbury identity.
struct ModelInverse<'p, 'a> {
    problem: &'p AreaProblem<'a>,
    slopes: &'p DMatrix<f64>,
    z: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'p, 'a> ModelInverse<'p, 'a> {
    fn new(problem: &'p AreaProblem<'a>, slopes: &'p DMatrix<f64>, mu: f64) -> Result<Self, PlannerError> {
        let nc = problem.interior();
        // G H⁻¹ Gᵀ = Γ ∘ (S Sᵀ) on interior nodes since every block shares H.
        let sst = slopes * slopes.transpose();
        let mut z = DMatrix::from_fn(nc, nc, |i, j| problem.tr.gamma[(i + 1, j + 1)] * sst[(i, j)]);
        for i in 0..nc {
            z[(i, i)] += 1.0 / mu;
        }
        let z = z
            .cholesky()
            .ok_or(PlannerError::Numerical("factoring the Gauss-Newton model"))?;
        Ok(Self { problem, slopes, z })
    }

    fn apply(&self, x: &Blocks) -> Blocks {
        let y = self.problem.hinv(x);
        let gy = self.problem.jac_mul(self.slopes, &y);
        let corr = self.problem.hinv(&self.problem.jac_t_mul(self.slopes, &self.z.solve(&gy)));
        std::array::from_fn(|b| &y[b] - &corr[b])
    }
}

/// Gauss–Newton step for the augmented Lagrangian that keeps the linear
/// terminal constraints satisfied.
fn newton_step(
    problem: &AreaProblem<'_>,
    a: &Blocks,
    lin: &Linearization,
    lambda: &DVector<f64>,
    mu: f64,
) -> Result<(Blocks, f64), PlannerError> {
    let tr = problem.tr;
    let weights = lambda + &lin.residual * mu;
    let jt = problem.jac_t_mul(&lin.slopes, &weights);
    let grad: Blocks = std::array::from_fn(|b| tr.hess.mul(&a[b]) + &jt[b]);

    let inv = ModelInverse::new(problem, &lin.slopes, mu)?;
    let kg = inv.apply(&grad);
    // Columns of K⁻¹ Eᵀ; each terminal row touches a single block.
    let mut k_et: Vec<Blocks> = Vec::with_capacity(2 * BLOCKS);
    for b in 0..BLOCKS {
        for row in &tr.e_rows {
            let mut x: Blocks = std::array::from_fn(|_| DVector::zeros(tr.m));
            x[b] = row.clone();
            k_et.push(inv.apply(&x));
        }
    }
    let nrow = 2 * BLOCKS;
    let e_dot = |i: usize, v: &Blocks| tr.e_rows[i % 2].dot(&v[i / 2]);
    let schur = DMatrix::from_fn(nrow, nrow, |i, j| e_dot(i, &k_et[j]));
    let rhs = DVector::from_fn(nrow, |i, _| -e_dot(i, &kg));
    let nu = schur
        .lu()
        .solve(&rhs)
        .ok_or(PlannerError::Numerical("solving the terminal-constraint system"))?;
    let step: Blocks = std::array::from_fn(|b| {
        let mut s = -&kg[b];
        for (j, col) in k_et.iter().enumerate() {
            s -= &col[b] * nu[j];
        }
        s
    });
    let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g.dot(s)).sum();
    Ok((step, slope))
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimum-effort leader trajectories under the fixed-area constraint.
pub fn plan_leader_trajectories(
    bc: &BoundaryConditions,
    ac: &AreaConstraint,
    grid_size: usize,
) -> Result<LeaderTrajectory, PlannerError> {
    bc.validate()?;
    if grid_size < MIN_GRID_SIZE {
        return Err(PlannerError::GridTooSmall(grid_size));
    }
    if !(ac.a0 > 0.0 && ac.area_tol > 0.0) {
        return Err(PlannerError::InfeasibleConstraint(format!(
            "area {} and tolerance {} must be positive",
            ac.a0, ac.area_tol
        )));
    }
    let orientation = {
        let [a, b, c] = bc.initial_positions();
        signed_area(&a, &b, &c).signum()
    };
    for (name, tri) in [("initial", bc.initial_positions()), ("final", bc.terminal_positions())] {
        let area = signed_area(&tri[0], &tri[1], &tri[2]);
        if (area - orientation * ac.a0).abs() > ac.area_tol {
            return Err(PlannerError::InfeasibleConstraint(format!(
                "{name} leader triangle has signed area {area}, target {} ± {}",
                orientation * ac.a0,
                ac.area_tol
            )));
        }
    }

    let tr = Transcription::new(grid_size, bc.duration());
    let bounds = block_boundaries(bc);
    let mut a: Blocks = std::array::from_fn(|_| DVector::zeros(grid_size));
    for (b, &(q0, v0, qf, vf)) in bounds.iter().enumerate() {
        a[b] = tr.unconstrained(&tr.terminal_rhs(q0, v0, qf, vf))?;
    }
    let problem = AreaProblem {
        tr: &tr,
        bounds,
        target: orientation * ac.a0,
        a0: ac.a0,
    };

    let unconstrained_cost = problem.effort(&a);
    let mut lin = problem.linearize(&a);
    let mut diagnostics = PlanDiagnostics {
        max_area_violation: max_abs(&lin.residual) * ac.a0,
        ..Default::default()
    };
    if diagnostics.max_area_violation <= ac.area_tol {
        return Ok(build_trajectory(bc, &tr, &problem, &a, diagnostics));
    }

    let nc = problem.interior();
    let mut lambda = DVector::zeros(nc);
    let mut mu = 10.0 * unconstrained_cost.max(1e-6);
    let mut prev_violation = max_abs(&lin.residual);
    let mut prev_cost = f64::INFINITY;
    for outer in 1..=MAX_OUTER {
        diagnostics.outer_iterations = outer;
        let (mut merit, _) = problem.merit(&a, &lambda, mu);
        for _ in 0..MAX_INNER {
            diagnostics.inner_iterations += 1;
            let (step, slope) = newton_step(&problem, &a, &lin, &lambda, mu)?;
            if slope >= 0.0 || -slope <= 1e-15 * (1.0 + merit.abs()) {
                break;
            }
            let mut alpha = 1.0;
            let accepted = loop {
                let trial: Blocks = std::array::from_fn(|b| &a[b] + &step[b] * alpha);
                let (m_trial, _) = problem.merit(&trial, &lambda, mu);
                if m_trial <= merit + 1e-4 * alpha * slope {
                    break Some((trial, m_trial));
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    break None;
                }
            };
            let Some((trial, m_trial)) = accepted else { break };
            let decrease = merit - m_trial;
            a = trial;
            merit = m_trial;
            lin = problem.linearize(&a);
            if decrease <= 1e-13 * (1.0 + merit.abs()) {
                break;
            }
        }

        let violation = max_abs(&lin.residual);
        let cost = problem.effort(&a);
        diagnostics.max_area_violation = violation * ac.a0;
        diagnostics.final_penalty = mu;
        let cost_change = (cost - prev_cost).abs() / cost.abs().max(1e-12);
        if diagnostics.max_area_violation < ac.area_tol && cost_change < COST_CHANGE_TOL {
            return Ok(build_trajectory(bc, &tr, &problem, &a, diagnostics));
        }
        prev_cost = cost;
        lambda += &lin.residual * mu;
        if violation > 0.25 * prev_violation {
            mu = (mu * 10.0).min(MAX_PENALTY);
        }
        prev_violation = violation;
    }
    Err(PlannerError::NoConvergence {
        outer_iterations: diagnostics.outer_iterations,
        max_area_violation: diagnostics.max_area_violation,
        area_tol: ac.area_tol,
        cost: problem.effort(&a),
    })
}

fn build_trajectory(
    bc: &BoundaryConditions,
    tr: &Transcription,
    problem: &AreaProblem<'_>,
    a: &Blocks,
    diagnostics: PlanDiagnostics,
) -> LeaderTrajectory {
    let lin = problem.linearize(a);
    let velocities: Blocks = std::array::from_fn(|b| tr.velocities(problem.bounds[b].1, &a[b]));
    let samples = (0..tr.m)
        .map(|k| {
            std::array::from_fn(|l| LeaderSample {
                position: Point2::new(lin.positions[2 * l][k], lin.positions[2 * l + 1][k]),
                velocity: Vector2::new(velocities[2 * l][k], velocities[2 * l + 1][k]),
                acceleration: Vector2::new(a[2 * l][k], a[2 * l + 1][k]),
            })
        })
        .collect();
    LeaderTrajectory {
        t0: bc.t0,
        tf: bc.tf,
        step: tr.h,
        samples,
        cost: problem.effort(a),
        diagnostics,
    }
}

/// Outcome of one feasibility probe in the travel-time search.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe<P> {
    pub feasible: bool,
    /// Signed safety margin; negative when infeasible.
    pub margin: f64,
    pub payload: P,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub duration: f64,
    pub feasible: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSearchOutcome<P> {
    pub t_star: f64,
    pub resolution: f64,
    /// Payload of the probe at `t_star`.
    pub payload: P,
    /// Every probe in evaluation order.
    pub probes: Vec<ProbeRecord>,
    /// Pairs `(feasible T, infeasible T')` with `T < T'`, contradicting the
    /// monotonicity the bisection relies on.
    pub non_monotone: Vec<(f64, f64)>,
}

#[derive(Debug, Error)]
pub enum TimeSearchError<E> {
    #[error("invalid bracket [{lo}, {hi}] with resolution {resolution}")]
    BracketInvalid { lo: f64, hi: f64, resolution: f64 },
    #[error("upper bound T = {0} s is not feasible")]
    UpperBoundInfeasible(f64),
    #[error("probe failed: {0}")]
    Probe(E),
}

/// Smallest feasible travel time on the lattice `k · resolution` inside
/// `bounds`, by bisection.
///
/// The upper end of the lattice is probed first and must be feasible. Ties at
/// the resolution limit resolve to the smallest feasible lattice value seen.
/// Bisection never probes above a feasible point, so up to
/// `monotonicity_checks` extra lattice points evenly spread between `T*` and
/// the upper end are probed afterwards; infeasible ones are reported in
/// `non_monotone`.
pub fn min_travel_time<P, E, F>(
    bounds: (f64, f64),
    resolution: f64,
    monotonicity_checks: usize,
    mut probe: F,
) -> Result<TimeSearchOutcome<P>, TimeSearchError<E>>
where
    F: FnMut(f64) -> Result<Probe<P>, E>,
{
    let (lo, hi) = bounds;
    let invalid = || TimeSearchError::BracketInvalid { lo, hi, resolution };
    if !(resolution > 0.0 && lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid());
    }
    let k_lo = (lo / resolution - 1e-9).ceil() as i64;
    let k_hi = (hi / resolution + 1e-9).floor() as i64;
    if k_hi < k_lo {
        return Err(invalid());
    }
    let lattice = |k: i64| k as f64 * resolution;
    let mut probes = Vec::new();
    let mut run = |k: i64, probes: &mut Vec<ProbeRecord>| -> Result<Probe<P>, TimeSearchError<E>> {
        let t = lattice(k);
        let p = probe(t).map_err(TimeSearchError::Probe)?;
        probes.push(ProbeRecord {
            duration: t,
            feasible: p.feasible,
            margin: p.margin,
        });
        Ok(p)
    };

    let top = run(k_hi, &mut probes)?;
    if !top.feasible {
        return Err(TimeSearchError::UpperBoundInfeasible(lattice(k_hi)));
    }
    let (mut best_k, mut best) = (k_hi, top);
    if k_lo < k_hi {
        let bottom = run(k_lo, &mut probes)?;
        if bottom.feasible {
            best_k = k_lo;
            best = bottom;
        } else {
            let (mut fail_k, mut pass_k) = (k_lo, k_hi);
            while pass_k - fail_k > 1 {
                let mid = fail_k + (pass_k - fail_k) / 2;
                let p = run(mid, &mut probes)?;
                if p.feasible {
                    pass_k = mid;
                    best_k = mid;
                    best = p;
                } else {
                    fail_k = mid;
                }
            }
        }
    }

    let gap = k_hi - best_k;
    let checks = (monotonicity_checks as i64).min(gap - 1).max(0);
    for i in 1..=checks {
        run(best_k + i * gap / (checks + 1), &mut probes)?;
    }

    let mut non_monotone = Vec::new();
    for p in probes.iter().filter(|p| p.feasible) {
        for q in probes.iter().filter(|q| !q.feasible && q.duration > p.duration) {
            non_monotone.push((p.duration, q.duration));
        }
    }
    Ok(TimeSearchOutcome {
        t_star: lattice(best_k),
        resolution,
        payload: best.payload,
        probes,
        non_monotone,
    })
}
