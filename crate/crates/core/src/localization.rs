//! Cooperative localization of the followers.
//!
//! One joint extended Kalman filter holds every follower's state `[x, y, ẋ, ẏ]`
//! together with the full covariance, cross-covariance blocks included.
//! Leaders are exact anchors and are not part of the joint state. Relative
//! range/bearing measurements are fused one at a time in `(observer, target)`
//! order.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x4, Matrix4, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{input_matrix, transition, AgentState};
use crate::geometry::Point2;
use crate::graphs::NUM_LEADERS;

/// Minimum separation for range/bearing to be defined (m).
pub const COINCIDENCE_TOL: f64 = 1e-9;
/// Innovation covariances with a larger condition number are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;
/// Eigenvalues of the joint covariance down to this value are clipped to
/// zero; anything lower aborts the run.
pub const PSD_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizationError {
    #[error("agents {observer} and {target} coincide; range and bearing are undefined")]
    CoincidentAgents { observer: usize, target: usize },
    #[error("innovation covariance for {observer}->{target} is ill-conditioned (condition {condition:e})")]
    SingularInnovation {
        observer: usize,
        target: usize,
        condition: f64,
    },
    #[error("joint covariance lost positive semidefiniteness (min eigenvalue {min_eigenvalue:e})")]
    CovarianceDivergence { min_eigenvalue: f64 },
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Standard deviations of the range (m) and bearing (rad) noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoise {
    pub range_std: f64,
    pub bearing_std: f64,
}

impl MeasurementNoise {
    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::new(self.range_std.powi(2), self.bearing_std.powi(2)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeMeasurement {
    pub observer: usize,
    pub target: usize,
    pub range: f64,
    /// Wrapped to `(−π, π]`.
    pub bearing: f64,
}

impl RelativeMeasurement {
    pub fn is_self_measurement(&self) -> bool {
        self.observer == self.target
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = theta.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn separation(observer: &Point2, target: &Point2, ids: (usize, usize)) -> Result<Vector2<f64>, LocalizationError> {
    let delta = target - observer;
    if delta.norm() < COINCIDENCE_TOL {
        return Err(LocalizationError::CoincidentAgents {
            observer: ids.0,
            target: ids.1,
        });
    }
    Ok(delta)
}

/// Noise-free range and bearing from `observer` to `target`.
pub fn range_bearing(observer: &Point2, target: &Point2) -> (f64, f64) {
    let delta = target - observer;
    (delta.norm(), delta.y.atan2(delta.x))
}

/// Range and bearing with additive Gaussian noise. The range and bearing
/// draws come from separate streams so that each noise source can be seeded
/// independently.
pub fn simulate_measurement<R: Rng + ?Sized>(
    ids: (usize, usize),
    observer: &AgentState,
    target: &AgentState,
    noise: &MeasurementNoise,
    range_rng: &mut R,
    bearing_rng: &mut R,
) -> Result<RelativeMeasurement, LocalizationError> {
    separation(&observer.position, &target.position, ids)?;
    let (range, bearing) = range_bearing(&observer.position, &target.position);
    let nr: f64 = StandardNormal.sample(range_rng);
    let nb: f64 = StandardNormal.sample(bearing_rng);
    Ok(RelativeMeasurement {
        observer: ids.0,
        target: ids.1,
        range: range + noise.range_std * nr,
        bearing: wrap_angle(bearing + noise.bearing_std * nb),
    })
}

/// Gradient of `[range; bearing]` with respect to the observer's state. The
/// gradient with respect to the target's state is its negative.
pub fn measurement_jacobian(observer: &AgentState, target: &AgentState) -> Result<Matrix2x4<f64>, LocalizationError> {
    let delta = separation(&observer.position, &target.position, (0, 0))?;
    let d2 = delta.norm_squared();
    let d = d2.sqrt();
    Ok(Matrix2x4::new(
        -delta.x / d,
        -delta.y / d,
        0.0,
        0.0,
        delta.y / d2,
        -delta.x / d2,
        0.0,
        0.0,
    ))
}

/// Initial uncertainty of every follower estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialUncertainty {
    pub position_std: f64,
    pub velocity_std: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        Self {
            position_std: 0.05,
            velocity_std: 0.05,
        }
    }
}

/// Contraction of the one-step estimation error map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverDiagnostics {
    pub sigma_max: f64,
    pub r2: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateOutcome {
    pub applied: usize,
    /// Measurements rejected for an ill-conditioned innovation.
    pub skipped: Vec<(usize, usize)>,
}

/// Joint follower estimate with full covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CooperativeEstimator {
    x: DVector<f64>,
    p: DMatrix<f64>,
    /// Per-axis acceleration noise std (m/s²).
    process_std: f64,
    noise: MeasurementNoise,
}

impl CooperativeEstimator {
    /// Starts from the given follower estimates with uncorrelated errors.
    pub fn new(
        initial: &[AgentState],
        uncertainty: InitialUncertainty,
        process_std: f64,
        noise: MeasurementNoise,
    ) -> Self {
        let n = 4 * initial.len();
        let x = crate::dynamics::stack_agent_order(initial);
        let (ps, vs) = (uncertainty.position_std.powi(2), uncertainty.velocity_std.powi(2));
        let p = DMatrix::from_fn(n, n, |i, j| match (i == j, i % 4) {
            (true, 0 | 1) => ps,
            (true, _) => vs,
            _ => 0.0,
        });
        Self {
            x,
            p,
            process_std,
            noise,
        }
    }

    pub fn num_followers(&self) -> usize {
        self.x.len() / 4
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Overwrites the joint covariance (used by tests and diagnostics).
    pub fn set_covariance(&mut self, p: DMatrix<f64>) {
        assert_eq!(p.shape(), self.p.shape());
        self.p = p;
    }

    pub fn noise(&self) -> &MeasurementNoise {
        &self.noise
    }

    /// Estimate of follower `f` (zero-based follower offset).
    pub fn estimate(&self, f: usize) -> AgentState {
        AgentState::from_vector(&self.x.fixed_rows::<4>(4 * f).into_owned())
    }

    pub fn estimates(&self) -> Vec<AgentState> {
        (0..self.num_followers()).map(|f| self.estimate(f)).collect()
    }

    pub fn block(&self, i: usize, j: usize) -> Matrix4<f64> {
        self.p.fixed_view::<4, 4>(4 * i, 4 * j).into_owned()
    }

    pub fn position_covariance(&self, f: usize) -> Matrix2<f64> {
        self.p.fixed_view::<2, 2>(4 * f, 4 * f).into_owned()
    }

    pub fn block_trace(&self, f: usize) -> f64 {
        self.block(f, f).trace()
    }

    /// Squared position error normalized by the position covariance.
    pub fn position_nees(&self, f: usize, truth: &Point2) -> f64 {
        let e = truth - self.estimate(f).position;
        match self.position_covariance(f).try_inverse() {
            Some(inv) => (e.transpose() * inv * e)[0],
            None => f64::INFINITY,
        }
    }

    /// Time update: `x̂ ← A x̂ + B u`, `P_ij ← A P_ij Aᵀ`, plus `B Q Bᵀ` on the
    /// diagonal blocks.
    pub fn propagate(&mut self, inputs: &[Vector2<f64>], dt: f64) -> Result<(), LocalizationError> {
        let nf = self.num_followers();
        if inputs.len() != nf {
            return Err(LocalizationError::DimensionMismatch {
                expected: nf,
                got: inputs.len(),
            });
        }
        let a = transition(dt);
        let b = input_matrix(dt);
        let bqbt = b * b.transpose() * self.process_std.powi(2);
        for (f, u) in inputs.iter().enumerate() {
            let xf = a * self.x.fixed_rows::<4>(4 * f) + b * u;
            self.x.fixed_rows_mut::<4>(4 * f).copy_from(&xf);
        }
        for i in 0..nf {
            for j in 0..nf {
                let mut blk = a * self.block(i, j) * a.transpose();
                if i == j {
                    blk += bqbt;
                }
                self.p.fixed_view_mut::<4, 4>(4 * i, 4 * j).copy_from(&blk);
            }
        }
        repair_covariance(&mut self.p)
    }

    /// Position and velocity of any agent: leaders from the anchor states,
    /// followers from the current estimate.
    fn believed(&self, agent: usize, leaders: &[AgentState; 3]) -> AgentState {
        if agent < NUM_LEADERS {
            leaders[agent]
        } else {
            self.estimate(agent - NUM_LEADERS)
        }
    }

    /// Linearized measurement rows for one relative measurement over the joint
    /// state, with the predicted measurement. `None` for measurements between
    /// two anchors, which carry no information about the followers.
    fn linearize(
        &self,
        observer: usize,
        target: usize,
        leaders: &[AgentState; 3],
    ) -> Result<Option<(DMatrix<f64>, Vector2<f64>)>, LocalizationError> {
        if observer < NUM_LEADERS && target < NUM_LEADERS {
            return Ok(None);
        }
        let (obs, tgt) = (self.believed(observer, leaders), self.believed(target, leaders));
        separation(&obs.position, &tgt.position, (observer, target))?;
        let c = measurement_jacobian(&obs, &tgt)?;
        let mut h = DMatrix::zeros(2, self.x.len());
        if observer >= NUM_LEADERS {
            h.fixed_view_mut::<2, 4>(0, 4 * (observer - NUM_LEADERS)).copy_from(&c);
        }
        if target >= NUM_LEADERS {
            h.fixed_view_mut::<2, 4>(0, 4 * (target - NUM_LEADERS)).copy_from(&(-c));
        }
        let (range, bearing) = range_bearing(&obs.position, &tgt.position);
        Ok(Some((h, Vector2::new(range, bearing))))
    }

    /// Sequential measurement update in `(observer, target)` order.
    ///
    /// Self-measurements and measurements between two leaders are ignored:
    /// leaders are already exact. A measurement with an ill-conditioned
    /// innovation covariance is skipped and reported.
    pub fn update(
        &mut self,
        measurements: &[RelativeMeasurement],
        leaders: &[AgentState; 3],
    ) -> Result<UpdateOutcome, LocalizationError> {
        let mut ordered: Vec<&RelativeMeasurement> = measurements.iter().filter(|m| !m.is_self_measurement()).collect();
        ordered.sort_by_key(|m| (m.observer, m.target));
        let r = self.noise.covariance();
        let mut outcome = UpdateOutcome::default();
        for m in ordered {
            let Some((h, predicted)) = self.linearize(m.observer, m.target, leaders)? else {
                continue;
            };
            let pht = &self.p * h.transpose();
            let s = Matrix2::from_fn(|i, j| (h.row(i) * pht.column(j))[0]) + r;
            let s = (s + s.transpose()) * 0.5;
            let condition = condition_number(&s);
            let Some(s_inv) = s.try_inverse().filter(|_| condition <= MAX_INNOVATION_CONDITION) else {
                log::warn!(
                    "skipping measurement {}->{}: innovation condition number {condition:e}",
                    m.observer,
                    m.target
                );
                outcome.skipped.push((m.observer, m.target));
                continue;
            };
            let innovation = Vector2::new(m.range - predicted[0], wrap_angle(m.bearing - predicted[1]));
            let gain = &pht * DMatrix::from_column_slice(2, 2, s_inv.as_slice());
            self.x += &gain * DVector::from_column_slice(innovation.as_slice());
            let s_dyn = DMatrix::from_column_slice(2, 2, s.as_slice());
            self.p -= &gain * s_dyn * gain.transpose();
            repair_covariance(&mut self.p)?;
            outcome.applied += 1;
        }
        Ok(outcome)
    }

    /// Stacked linearization of a measurement set at the current estimate:
    /// `(C_CL, R_CL)`.
    pub fn stacked_measurement_model(
        &self,
        measurements: &[RelativeMeasurement],
        leaders: &[AgentState; 3],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), LocalizationError> {
        let mut rows = Vec::new();
        for m in measurements.iter().filter(|m| !m.is_self_measurement()) {
            if let Some((h, _)) = self.linearize(m.observer, m.target, leaders)? {
                rows.push(h);
            }
        }
        let n = self.x.len();
        let mut c = DMatrix::zeros(2 * rows.len(), n);
        let mut r = DMatrix::zeros(2 * rows.len(), 2 * rows.len());
        let rm = self.noise.covariance();
        for (k, h) in rows.iter().enumerate() {
            c.view_mut((2 * k, 0), (2, n)).copy_from(h);
            r.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(&rm);
        }
        Ok((c, r))
    }

    /// Observer diagnostics for the measurement set about to be fused, using
    /// the batch gain `K_CL = P C_CLᵀ (C_CL P C_CLᵀ + R_CL)⁻¹`.
    pub fn observer_diagnostics(
        &self,
        measurements: &[RelativeMeasurement],
        leaders: &[AgentState; 3],
        dt: f64,
        r2: f64,
    ) -> Result<ObserverDiagnostics, LocalizationError> {
        let a_cl = joint_transition(self.num_followers(), dt);
        let (c_cl, r_cl) = self.stacked_measurement_model(measurements, leaders)?;
        let k_cl = if c_cl.nrows() == 0 {
            DMatrix::zeros(self.x.len(), 0)
        } else {
            let s = &c_cl * &self.p * c_cl.transpose() + r_cl;
            match s.clone().try_inverse() {
                Some(s_inv) => &self.p * c_cl.transpose() * s_inv,
                None => DMatrix::zeros(self.x.len(), c_cl.nrows()),
            }
        };
        Ok(observer_stability(&a_cl, &k_cl, &c_cl, r2))
    }
}

/// Block-diagonal transition of the joint follower state (agent ordering).
pub fn joint_transition(num_followers: usize, dt: f64) -> DMatrix<f64> {
    let a = transition(dt);
    let n = 4 * num_followers;
    let mut out = DMatrix::zeros(n, n);
    for f in 0..num_followers {
        out.fixed_view_mut::<4, 4>(4 * f, 4 * f).copy_from(&a);
    }
    out
}

/// `σ_max(A_CL − K_CL C_CL)` and whether it is below `r2`.
pub fn observer_stability(a_cl: &DMatrix<f64>, k_cl: &DMatrix<f64>, c_cl: &DMatrix<f64>, r2: f64) -> ObserverDiagnostics {
    let a_obs = if c_cl.nrows() == 0 {
        a_cl.clone()
    } else {
        a_cl - k_cl * c_cl
    };
    let sigma_max = a_obs.singular_values().max();
    ObserverDiagnostics {
        sigma_max,
        r2,
        stable: sigma_max < r2,
    }
}

fn condition_number(s: &Matrix2<f64>) -> f64 {
    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Symmetrizes `p` and projects tiny negative eigenvalues back to zero.
pub fn repair_covariance(p: &mut DMatrix<f64>) -> Result<(), LocalizationError> {
    let sym = (&*p + p.transpose()) * 0.5;
    *p = sym;
    if p.clone().cholesky().is_some() {
        return Ok(());
    }
    let eig = p.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    if min_eigenvalue >= 0.0 {
        return Ok(());
    }
    if min_eigenvalue < PSD_FLOOR {
        return Err(LocalizationError::CovarianceDivergence { min_eigenvalue });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    *p = (&rebuilt + rebuilt.transpose()) * 0.5;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(x: f64, y: f64) -> AgentState {
        AgentState::at_rest(Point2::new(x, y))
    }

    const NOISE: MeasurementNoise = MeasurementNoise {
        range_std: 0.03,
        bearing_std: 0.01,
    };

    #[test]
    fn measurement_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(2);
        let zero = MeasurementNoise {
            range_std: 0.0,
            bearing_std: 0.0,
        };
        let m = simulate_measurement((3, 4), &st(0.0, 0.0), &st(3.0, 4.0), &zero, &mut rng, &mut rng2).unwrap();
        assert_eq!(m.range, 5.0);
        assert_eq!(m.bearing, 4f64.atan2(3.0));
        let m = simulate_measurement((3, 4), &st(0.0, 0.0), &st(0.0, 2.0), &zero, &mut rng, &mut rng2).unwrap();
        assert!((m.bearing - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            simulate_measurement((3, 4), &st(1.0, 1.0), &st(1.0, 1.0), &zero, &mut rng, &mut rng2),
            Err(LocalizationError::CoincidentAgents { .. })
        ));
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let c = measurement_jacobian(&st(0.0, 0.0), &st(1.0, 0.0)).unwrap();
        assert_eq!(c, Matrix2x4::new(-1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0));
        let c = measurement_jacobian(&st(0.0, 0.0), &st(0.0, 2.0)).unwrap();
        assert_eq!(c, Matrix2x4::new(0.0, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0));
    }

    #[test]
    fn propagation_examples() {
        // With no velocity uncertainty the covariance has nothing to shear.
        let still = InitialUncertainty {
            position_std: 0.05,
            velocity_std: 0.0,
        };
        let mut est = CooperativeEstimator::new(&[st(1.0, 2.0), st(3.0, 4.0)], still, 0.0, NOISE);
        let before = est.clone();
        est.propagate(&[Vector2::zeros(); 2], 0.1).unwrap();
        assert_eq!(est, before);

        // Cross blocks start at zero and stay there without updates.
        let mut est = CooperativeEstimator::new(&[st(1.0, 2.0), st(3.0, 4.0)], InitialUncertainty::default(), 0.5, NOISE);
        for _ in 0..5 {
            est.propagate(&[Vector2::new(1.0, 0.0), Vector2::zeros()], 0.1).unwrap();
        }
        assert_eq!(est.block(0, 1), Matrix4::zeros());

        // Per-axis block [[1 + dt², dt], [dt, 1 + q dt²]] from P = I.
        let (q, dt): (f64, f64) = (0.25, 0.1);
        let mut est = CooperativeEstimator::new(&[st(0.0, 0.0)], InitialUncertainty::default(), q.sqrt(), NOISE);
        est.set_covariance(DMatrix::identity(4, 4));
        est.propagate(&[Vector2::zeros()], dt).unwrap();
        let blk = est.block(0, 0);
        for axis in 0..2 {
            assert!((blk[(axis, axis)] - (1.0 + dt * dt)).abs() < 1e-15);
            assert!((blk[(axis, axis + 2)] - dt).abs() < 1e-15);
            assert!((blk[(axis + 2, axis)] - dt).abs() < 1e-15);
            assert!((blk[(axis + 2, axis + 2)] - (1.0 + q * dt * dt)).abs() < 1e-15);
        }
        assert!(est.propagate(&[], dt).is_err());
    }

    #[test]
    fn empty_and_anchor_only_updates_are_no_ops() {
        let leaders = [st(0.0, 0.0), st(10.0, 0.0), st(5.0, 8.0)];
        let mut est = CooperativeEstimator::new(&[st(5.0, 3.0)], InitialUncertainty::default(), 0.5, NOISE);
        let before = est.clone();
        let out = est.update(&[], &leaders).unwrap();
        assert_eq!(out.applied, 0);
        assert_eq!(est, before);
        let anchors = [
            RelativeMeasurement {
                observer: 0,
                target: 0,
                range: 0.0,
                bearing: 0.0,
            },
            RelativeMeasurement {
                observer: 0,
                target: 1,
                range: 10.0,
                bearing: 0.0,
            },
        ];
        est.update(&anchors, &leaders).unwrap();
        assert_eq!(est, before);
    }

    #[test]
    fn triangulation_with_tiny_noise() {
        let leaders = [st(0.0, 0.0), st(10.0, 0.0), st(5.0, 8.0)];
        let truth = Point2::new(4.0, 3.0);
        let tiny = MeasurementNoise {
            range_std: 1e-6,
            bearing_std: 1e-6,
        };
        // Without a time update the covariance collapses to the measurement
        // scale after the first pass, so later passes shrink the first-pass
        // linearization error only like 1/n. A start 0.1 m off keeps that
        // error near 1e-3 m.
        let start = AgentState::at_rest(truth + Vector2::new(0.08, -0.06));
        let mut est = CooperativeEstimator::new(
            &[start],
            InitialUncertainty {
                position_std: 0.1,
                velocity_std: 0.1,
            },
            0.0,
            tiny,
        );
        let meas: Vec<_> = [0usize, 1]
            .iter()
            .map(|&l| {
                let (range, bearing) = range_bearing(&truth, &leaders[l].position);
                RelativeMeasurement {
                    observer: 3,
                    target: l,
                    range,
                    bearing,
                }
            })
            .collect();
        for _ in 0..3 {
            let trace_before = est.block_trace(0);
            est.update(&meas, &leaders).unwrap();
            assert!(est.block_trace(0) <= trace_before + 1e-15);
        }
        assert!((est.estimate(0).position - truth).norm() <= 1e-3);
    }

    #[test]
    fn follower_pair_update_builds_cross_covariance() {
        let leaders = [st(0.0, 0.0), st(10.0, 0.0), st(5.0, 8.0)];
        let mut est = CooperativeEstimator::new(&[st(3.0, 2.0), st(6.0, 3.0)], InitialUncertainty::default(), 0.5, NOISE);
        let (range, bearing) = range_bearing(&Point2::new(3.0, 2.0), &Point2::new(6.0, 3.0));
        let m = RelativeMeasurement {
            observer: 3,
            target: 4,
            range,
            bearing,
        };
        est.update(&[m], &leaders).unwrap();
        assert!(est.block(0, 1).norm() > 0.0);
        assert_eq!(est.block(0, 1), est.block(1, 0).transpose());
    }

    #[test]
    fn singular_innovation_is_skipped() {
        let leaders = [st(0.0, 0.0), st(10.0, 0.0), st(5.0, 8.0)];
        let exact = MeasurementNoise {
            range_std: 0.0,
            bearing_std: 0.0,
        };
        let mut est = CooperativeEstimator::new(&[st(3.0, 2.0)], InitialUncertainty::default(), 0.5, exact);
        est.set_covariance(DMatrix::zeros(4, 4));
        let m = RelativeMeasurement {
            observer: 3,
            target: 0,
            range: 3.0,
            bearing: 1.0,
        };
        let out = est.update(&[m], &leaders).unwrap();
        assert_eq!(out.skipped, vec![(3, 0)]);
        assert_eq!(out.applied, 0);
    }

    #[test]
    fn psd_repair() {
        let mut p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 + 1e-12, 1.0, 1.0]);
        repair_covariance(&mut p).unwrap();
        assert_eq!(p, p.transpose());
        assert!(p.symmetric_eigenvalues().min() >= -1e-15);
        let mut bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(
            repair_covariance(&mut bad),
            Err(LocalizationError::CovarianceDivergence { .. })
        ));
    }

    #[test]
    fn no_measurements_means_open_loop_sigma() {
        let leaders = [st(0.0, 0.0), st(10.0, 0.0), st(5.0, 8.0)];
        let est = CooperativeEstimator::new(&[st(3.0, 2.0), st(6.0, 3.0)], InitialUncertainty::default(), 0.5, NOISE);
        let d = est.observer_diagnostics(&[], &leaders, 0.1, 0.999).unwrap();
        assert!(d.sigma_max >= 1.0);
        assert!(!d.stable);
    }
}
