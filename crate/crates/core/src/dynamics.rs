//! Discrete double-integrator agents, the leader/follower control law and the
//! collective (stacked) form of the follower dynamics.

use nalgebra::{DMatrix, DVector, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::graphs::{WeightMatrix, NUM_LEADERS};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DynamicsError {
    #[error("gains must be positive (g1 = {g1}, g2 = {g2})")]
    NonPositiveGains { g1: f64, g2: f64 },
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("closed loop is not Schur stable at dt = {dt} (spectral radius {radius})")]
    Unstable { dt: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentState {
    pub position: Point2,
    pub velocity: Vector2<f64>,
}

impl AgentState {
    pub fn new(position: Point2, velocity: Vector2<f64>) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Point2) -> Self {
        Self::new(position, Vector2::zeros())
    }

    /// `[x, y, vx, vy]`.
    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.position.x, self.position.y, self.velocity.x, self.velocity.y)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(Point2::new(v[0], v[1]), Vector2::new(v[2], v[3]))
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|x| x.is_finite())
    }
}

/// Per-agent transition matrix for state `[x, y, vx, vy]`.
pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

/// Per-agent input matrix (4×2).
pub fn input_matrix(dt: f64) -> nalgebra::Matrix4x2<f64> {
    let mut b = nalgebra::Matrix4x2::zeros();
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    b
}

/// One step of the double integrator: `r⁺ = r + dt ṙ`, `ṙ⁺ = ṙ + dt (u + η)`.
pub fn step_agent(s: &AgentState, u: &Vector2<f64>, noise: &Vector2<f64>, dt: f64) -> AgentState {
    AgentState {
        position: s.position + s.velocity * dt,
        velocity: s.velocity + (u + noise) * dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    /// Velocity gain (1/s).
    pub g1: f64,
    /// Position gain (1/s²).
    pub g2: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self { g1: 6.0, g2: 9.0 }
    }
}

impl ControlGains {
    /// Single-agent closed loop under PD tracking: `A - B [g2 I, g1 I]`.
    pub fn closed_loop(&self, dt: f64) -> Matrix4<f64> {
        let mut m = transition(dt);
        for axis in 0..2 {
            m[(2 + axis, axis)] = -self.g2 * dt;
            m[(2 + axis, 2 + axis)] = 1.0 - self.g1 * dt;
        }
        m
    }

    pub fn validate(&self, dt: f64) -> Result<(), DynamicsError> {
        if !(self.g1 > 0.0 && self.g2 > 0.0) {
            return Err(DynamicsError::NonPositiveGains { g1: self.g1, g2: self.g2 });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::BadTimeStep(dt));
        }
        let radius = spectral_radius(&DMatrix::from_iterator(4, 4, self.closed_loop(dt).iter().copied()));
        if !(radius < 1.0) {
            return Err(DynamicsError::Unstable { dt, radius });
        }
        Ok(())
    }
}

/// Largest eigenvalue modulus; NaN if the Schur iteration does not converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000 * m.nrows().max(1))
        .map(|s| s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::NAN)
}

/// `g1 (ṙ_d − ṙ) + g2 (r_d − r)`.
pub fn leader_control(s: &AgentState, desired_pos: &Point2, desired_vel: &Vector2<f64>, gains: &ControlGains) -> Vector2<f64> {
    (desired_vel - s.velocity) * gains.g1 + (desired_pos - s.position) * gains.g2
}

/// Weighted consensus on estimated neighbor states.
pub fn follower_control(
    self_est: &AgentState,
    neighbor_ests: &[AgentState; 3],
    weights: &[f64; 3],
    gains: &ControlGains,
) -> Vector2<f64> {
    let mut pos = Vector2::zeros();
    let mut vel = Vector2::zeros();
    for (n, &w) in neighbor_ests.iter().zip(weights) {
        pos += (n.position - self_est.position) * w;
        vel += (n.velocity - self_est.velocity) * w;
    }
    vel * gains.g1 + pos * gains.g2
}

/// Stacked follower dynamics.
///
/// Two orderings are used. The *system* ordering stacks per axis,
/// `[x_F; ẋ_F; y_F; ẏ_F]`, and leader inputs as `[x_L; ẋ_L; y_L; ẏ_L]`. The
/// *agent* ordering stacks per follower, `[x, y, ẋ, ẏ]` for each in turn; it
/// is the layout of the estimator. `o` maps system to agent ordering.
///
/// One step reads `X⁺ = A_sys X + B_sys U + K X̂ + G η`, where `X̂` is the
/// estimate the followers feed back on.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveDynamics {
    pub a_sys: DMatrix<f64>,
    pub b_sys: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Process-noise input (`4(N-3) × 2(N-3)`, noise stacked `[η_x; η_y]`).
    pub g: DMatrix<f64>,
    pub o: DMatrix<f64>,
}

impl CollectiveDynamics {
    pub fn num_followers(&self) -> usize {
        self.a_sys.nrows() / 4
    }

    /// `A_sys + K`: the loop closed on the estimates.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.a_sys + &self.k
    }

    pub fn step(&self, x: &DVector<f64>, x_hat: &DVector<f64>, u: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        &self.a_sys * x + &self.b_sys * u + &self.k * x_hat + &self.g * eta
    }

    /// `A_sys` expressed in the agent ordering: `O A_sys Oᵀ`.
    pub fn a_agent(&self) -> DMatrix<f64> {
        &self.o * &self.a_sys * self.o.transpose()
    }

    pub fn to_agent_order(&self, x_sys: &DVector<f64>) -> DVector<f64> {
        &self.o * x_sys
    }

    pub fn to_system_order(&self, x_agent: &DVector<f64>) -> DVector<f64> {
        self.o.transpose() * x_agent
    }
}

/// Position in the system ordering of component `c` (0 = x, 1 = ẋ, 2 = y, 3 = ẏ)
/// of follower `f` (zero-based follower offset).
fn sys_index(nf: usize, f: usize, component: usize) -> usize {
    component * nf + f
}

pub fn assemble_collective(w: &WeightMatrix, gains: &ControlGains, dt: f64) -> CollectiveDynamics {
    let nf = w.num_followers();
    let n = 4 * nf;
    let a = w.a();
    let b = w.b();

    let mut a_sys = DMatrix::identity(n, n);
    let mut k = DMatrix::zeros(n, n);
    let mut b_sys = DMatrix::zeros(n, 4 * NUM_LEADERS);
    let mut g = DMatrix::zeros(n, 2 * nf);
    for axis in 0..2 {
        let pos = 2 * axis;
        let vel = pos + 1;
        for f in 0..nf {
            let row_p = sys_index(nf, f, pos);
            let row_v = sys_index(nf, f, vel);
            a_sys[(row_p, row_v)] = dt;
            g[(row_v, axis * nf + f)] = dt;
            for j in 0..nf {
                k[(row_v, sys_index(nf, j, pos))] = dt * gains.g2 * a[(f, j)];
                k[(row_v, sys_index(nf, j, vel))] = dt * gains.g1 * a[(f, j)];
            }
            for l in 0..NUM_LEADERS {
                // Leader input layout mirrors the follower one: [x_L; ẋ_L; y_L; ẏ_L].
                b_sys[(row_v, pos * NUM_LEADERS + l)] = dt * gains.g2 * b[(f, l)];
                b_sys[(row_v, vel * NUM_LEADERS + l)] = dt * gains.g1 * b[(f, l)];
            }
        }
    }

    // Agent layout per follower is [x, y, ẋ, ẏ]; system components are
    // [x, ẋ, y, ẏ].
    let mut o = DMatrix::zeros(n, n);
    for f in 0..nf {
        for (slot, component) in [0usize, 2, 1, 3].into_iter().enumerate() {
            o[(4 * f + slot, sys_index(nf, f, component))] = 1.0;
        }
    }

    CollectiveDynamics { a_sys, b_sys, k, g, o }
}

/// Leader states stacked as the collective input `[x_L; ẋ_L; y_L; ẏ_L]`.
pub fn leader_input(leaders: &[AgentState; 3]) -> DVector<f64> {
    let mut u = DVector::zeros(4 * NUM_LEADERS);
    for (l, s) in leaders.iter().enumerate() {
        u[l] = s.position.x;
        u[NUM_LEADERS + l] = s.velocity.x;
        u[2 * NUM_LEADERS + l] = s.position.y;
        u[3 * NUM_LEADERS + l] = s.velocity.y;
    }
    u
}

/// Follower states stacked in agent order `[x, y, ẋ, ẏ]` per follower.
pub fn stack_agent_order(states: &[AgentState]) -> DVector<f64> {
    let mut x = DVector::zeros(4 * states.len());
    for (f, s) in states.iter().enumerate() {
        x.fixed_rows_mut::<4>(4 * f).copy_from(&s.to_vector());
    }
    x
}

pub fn unstack_agent_order(x: &DVector<f64>) -> Vec<AgentState> {
    (0..x.len() / 4)
        .map(|f| AgentState::from_vector(&x.fixed_rows::<4>(4 * f).into_owned()))
        .collect()
}
