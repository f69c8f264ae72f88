use continuum_core::dynamics::AgentState;
use continuum_core::geometry::{signed_area, Point2};
use continuum_core::planner::*;
use nalgebra::{Rotation2, Vector2};
use proptest::prelude::*;

fn leaders() -> [Point2; 3] {
    [Point2::new(0.0, 0.0), Point2::new(6.0, 0.0), Point2::new(2.0, 5.0)]
}

fn rotate_about_centroid(tri: [Point2; 3], angle: f64) -> [Point2; 3] {
    let c = (tri[0] + tri[1] + tri[2]) / 3.0;
    let r = Rotation2::new(angle);
    tri.map(|v| c + r * (v - c))
}

/// Classical minimum-effort rest-to-rest solution of `q̈ = v`.
fn cubic(l: f64, t_total: f64, t: f64) -> (f64, f64) {
    let s = t / t_total;
    (l * (3.0 * s * s - 2.0 * s * s * s), 6.0 * l / t_total * (s - s * s))
}

#[test]
fn one_dimensional_rest_to_rest_matches_cubic() {
    let (l, t_total) = (10.0, 8.0);
    let prof = plan_axis(0.0, 0.0, l, 0.0, t_total, 201).unwrap();
    let exact_cost = 12.0 * l * l / (t_total * t_total * t_total);
    assert!((prof.cost - exact_cost).abs() / exact_cost < 0.01, "cost {} vs {}", prof.cost, exact_cost);
    for k in 0..201 {
        let (q, v) = cubic(l, t_total, k as f64 * prof.step);
        assert!((prof.positions[k] - q).abs() < 1e-3 * l, "node {k}");
        assert!((prof.velocities[k] - v).abs() < 1e-3 * l);
    }
}

#[test]
fn unconstrained_cost_scales_with_inverse_cube_of_time() {
    let costs: Vec<f64> = [5.0, 10.0, 20.0]
        .iter()
        .map(|&t| plan_axis(0.0, 0.0, 7.0, 0.0, t, 201).unwrap().cost)
        .collect();
    for w in [(0, 1, 2.0), (1, 2, 2.0), (0, 2, 4.0)] {
        let exponent = (costs[w.0] / costs[w.1]).ln() / f64::ln(w.2);
        assert!((exponent - 3.0).abs() < 0.06, "exponent {exponent}");
    }
}

#[test]
fn rotation_about_centroid_holds_area() {
    let start = leaders();
    let end = rotate_about_centroid(start, std::f64::consts::FRAC_PI_2);
    let bc = BoundaryConditions::rest_to_rest(0.0, 10.0, start, end);
    let ac = AreaConstraint::from_initial(&bc);
    let traj = plan_leader_trajectories(&bc, &ac, DEFAULT_GRID_SIZE).unwrap();
    // Shoelace formula on the returned samples.
    let worst = traj
        .node_positions()
        .map(|[a, b, c]| {
            let shoelace = 0.5 * ((a.x * b.y - b.x * a.y) + (b.x * c.y - c.x * b.y) + (c.x * a.y - a.x * c.y));
            (shoelace.abs() - ac.a0).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= ac.area_tol, "worst deviation {worst} vs {}", ac.area_tol);
    let last = traj.evaluate(10.0).unwrap();
    for l in 0..3 {
        assert!((last[l].position - end[l]).norm() < 1e-6);
        assert!(last[l].velocity.norm() < 1e-6);
    }
    // The area constraint must cost something over the straight-line plan.
    let straight: f64 = (0..3)
        .flat_map(|l| (0..2).map(move |ax| (l, ax)))
        .map(|(l, ax)| plan_axis(start[l][ax], 0.0, end[l][ax], 0.0, 10.0, 201).unwrap().cost)
        .sum();
    assert!(traj.cost() > straight);
}

#[test]
fn grid_refinement_changes_cost_little() {
    let start = leaders();
    let end = rotate_about_centroid(start, 1.0).map(|v| v + Vector2::new(5.0, -3.0));
    let bc = BoundaryConditions::rest_to_rest(0.0, 12.0, start, end);
    let ac = AreaConstraint::from_initial(&bc);
    let coarse = plan_leader_trajectories(&bc, &ac, 101).unwrap().cost();
    let fine = plan_leader_trajectories(&bc, &ac, 201).unwrap().cost();
    assert!((coarse - fine).abs() / fine < 0.005, "{coarse} vs {fine}");
}

fn feasible_bc() -> impl Strategy<Value = BoundaryConditions> {
    (
        -20.0..20.0f64,
        -20.0..20.0f64,
        -3.0..3.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        4.0..15.0f64,
    )
        .prop_map(|(dx, dy, angle, v0x, v0y, vfx, vfy, duration)| {
            let start = leaders();
            let end = rotate_about_centroid(start, angle).map(|v| v + Vector2::new(dx, dy));
            // Common leader velocities translate the triangle, so they keep its area.
            let v0 = Vector2::new(v0x, v0y);
            let vf = Vector2::new(vfx, vfy);
            BoundaryConditions {
                t0: 0.0,
                tf: duration,
                initial: start.map(|p| AgentState::new(p, v0)),
                terminal: end.map(|p| AgentState::new(p, vf)),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn boundary_conditions_are_met(bc in feasible_bc()) {
        let ac = AreaConstraint::from_initial(&bc);
        let traj = plan_leader_trajectories(&bc, &ac, 101).unwrap();
        let first = traj.evaluate(bc.t0).unwrap();
        let last = traj.evaluate(bc.tf).unwrap();
        for l in 0..3 {
            prop_assert!((first[l].position - bc.initial[l].position).norm() <= 1e-6);
            prop_assert!((first[l].velocity - bc.initial[l].velocity).norm() <= 1e-6);
            prop_assert!((last[l].position - bc.terminal[l].position).norm() <= 1e-6);
            prop_assert!((last[l].velocity - bc.terminal[l].velocity).norm() <= 1e-6);
        }
        prop_assert!(traj.max_area_deviation(ac.a0) <= ac.area_tol);
        let [a, b, c] = bc.initial.map(|s| s.position);
        prop_assert!((signed_area(&a, &b, &c).abs() - ac.a0).abs() < 1e-12);
    }
}
