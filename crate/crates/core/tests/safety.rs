use continuum_core::dynamics::AgentState;
use continuum_core::geometry::{barycentric_coords_of, Point2};
use continuum_core::harness::trace::{SimulationTrace, TraceRow};
use continuum_core::safety::{check_collision, containment_omega, verify_run, Condition, SafetyThresholds};
use proptest::prelude::*;

/// O(N²) minimum distance with the lexicographically first closest pair.
fn brute_force(positions: &[Point2]) -> (f64, Option<(usize, usize)>) {
    let mut best = (f64::INFINITY, None);
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            if d < best.0 {
                best = (d, Some((i, j)));
            }
        }
    }
    best
}

fn points(max: usize) -> impl Strategy<Value = Vec<Point2>> {
    // Coarse coordinates make exact ties common.
    prop::collection::vec((-20i32..20, -20i32..20), 0..max)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x as f64 * 0.25, y as f64 * 0.25)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn collision_matches_brute_force(pos in points(25), eps in 0.05..1.0f64) {
        let got = check_collision(&pos, eps);
        let (d, pair) = brute_force(&pos);
        prop_assert_eq!(got.min_clearance, d);
        prop_assert_eq!(got.closest_pair, pair);
        prop_assert_eq!(got.ok, d > 2.0 * eps);
    }

    #[test]
    fn omega_is_barycentric(v in prop::array::uniform3((-50.0..50.0f64, -50.0..50.0f64)), t in (-80.0..80.0f64, -80.0..80.0f64)) {
        let [m, j, h] = v.map(|(x, y)| Point2::new(x, y));
        let t = Point2::new(t.0, t.1);
        if let (Ok(omega), Ok(bary)) = (containment_omega(&m, &j, &h, &t), barycentric_coords_of(&t, [m, j, h])) {
            for k in 0..3 {
                prop_assert!((omega[k] - bary.0[k]).abs() <= 1e-12);
            }
        }
    }
}

fn static_row(t: f64, positions: &[Point2]) -> TraceRow {
    let truth: Vec<AgentState> = positions.iter().map(|&p| AgentState::at_rest(p)).collect();
    TraceRow {
        time: t,
        estimates: truth[3..].to_vec(),
        cov_trace: vec![0.0; positions.len() - 3],
        desired: positions.to_vec(),
        truth,
        controls: Vec::new(),
        measurements: 0,
        sigma_max: None,
    }
}

fn formation() -> Vec<Point2> {
    [(0.0, 0.0), (20.0, 0.0), (10.0, 17.0), (6.0, 4.0), (14.0, 4.0), (10.0, 10.0)]
        .iter()
        .map(|&(x, y)| Point2::new(x, y))
        .collect()
}

#[test]
fn static_trace_passes_and_verification_is_pure() {
    let pos = formation();
    let mut trace = SimulationTrace::new(pos.len());
    trace.rows = (0..20).map(|k| static_row(k as f64 * 0.1, &pos)).collect();
    let th = SafetyThresholds::default();
    let report = verify_run(&trace, &th);
    assert!(report.all_ok(), "{report:?}");
    assert_eq!(report.max_deviation.as_ref().unwrap().value, 0.0);
    assert_eq!(verify_run(&trace, &th), report);
}

/// Followers 4 and 5 trade places along a straight line while the desired
/// positions follow them, so only the collision condition can fail. They
/// meet in the middle.
#[test]
fn swapped_followers_collide_at_crossing() {
    let base = formation();
    let (a, b) = (base[3], base[4]);
    let steps = 20;
    let mut trace = SimulationTrace::new(base.len());
    for k in 0..=steps {
        let s = k as f64 / steps as f64;
        let mut pos = base.clone();
        pos[3] = a + (b - a) * s;
        pos[4] = b + (a - b) * s;
        trace.rows.push(static_row(k as f64 * 0.1, &pos));
    }
    let th = SafetyThresholds::default();
    let report = verify_run(&trace, &th);
    assert!(!report.collision_ok && report.boundedness_ok && report.containment_ok);
    let closest = report.min_clearance.as_ref().unwrap();
    assert_eq!((closest.step, closest.value), (steps / 2, 0.0));
    assert_eq!(closest.agents, vec![3, 4]);
    // Oracle: the first step at which the pair is within 2ε.
    let first = (0..=steps)
        .find(|&k| (trace.rows[k].truth[3].position - trace.rows[k].truth[4].position).norm() <= 2.0 * th.epsilon)
        .unwrap();
    let v = report.first_violation.unwrap();
    assert_eq!(v.condition, Condition::Collision);
    assert_eq!(v.step, first);
    assert_eq!(v.agents, vec![3, 4]);
}
