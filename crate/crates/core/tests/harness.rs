use std::path::PathBuf;

use continuum_core::geometry::{barycentric_coords, desired_position, Triangle};
use continuum_core::harness::mintime::plan_for;
use continuum_core::harness::sim::{run_simulation, EstimatorMode, SimMode};
use continuum_core::harness::trace::{column_count, SimulationTrace};
use continuum_core::harness::ScenarioConfig;
use continuum_core::safety::{monte_carlo_verify, verify_run, verify_seed};

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioConfig::load(&path).unwrap()
}

#[test]
fn ten_agent_fixture_wiring() {
    let cfg = scenario("ten_agent.toml");
    assert_eq!(cfg.num_agents(), 10);
    let mut observed: Vec<usize> = cfg
        .graph
        .localization_edges()
        .iter()
        .filter(|e| e.observer == 9)
        .map(|e| e.target + 1)
        .collect();
    observed.sort();
    assert_eq!(observed, vec![6, 7, 8]);
    assert_eq!((cfg.gains.g1, cfg.gains.g2), (6.0, 9.0));
    assert_eq!(cfg.dt, 0.1);
    assert_eq!(cfg.noise.measurement.range_std, 0.03);
    assert_eq!((cfg.safety.epsilon, cfg.safety.delta), (0.5, 0.5));
}

#[test]
fn bypass_noise_free_converges_to_formation() {
    let cfg = scenario("ten_agent.toml");
    let traj = plan_for(&cfg, 30.0).unwrap();
    let trace = run_simulation(&cfg, &traj, 0, SimMode::NOISE_FREE_FULL_STATE).unwrap();
    let expected_rows = ((traj.duration() + cfg.hold_time) / cfg.dt).ceil() as usize + 1;
    assert_eq!(trace.rows.len(), expected_rows);

    // Oracle: the follower's reference barycentric weights applied to the
    // final leader positions.
    let last = trace.rows.last().unwrap();
    let reference = Triangle::from_vertices(cfg.leader_reference()).unwrap();
    let leaders = cfg.planner.final_leaders;
    for i in 3..cfg.num_agents() {
        let goal = desired_position(&barycentric_coords(&cfg.reference[i], &reference), &leaders);
        let err = (last.truth[i].position - goal).norm();
        assert!(err <= 1e-3, "follower {} ends {err} m from its goal", i + 1);
    }
    let report = verify_run(&trace, &cfg.safety);
    assert!(report.all_ok(), "{report:?}");
    // Full state feedback carries no estimator covariance.
    assert!(last.cov_trace.iter().all(|&c| c == 0.0));
}

#[test]
fn same_seed_same_bytes() {
    let cfg = scenario("ten_agent.toml");
    let traj = plan_for(&cfg, 25.0).unwrap();
    let a = run_simulation(&cfg, &traj, 77, SimMode::COOPERATIVE).unwrap().to_csv_bytes();
    let b = run_simulation(&cfg, &traj, 77, SimMode::COOPERATIVE).unwrap().to_csv_bytes();
    let c = run_simulation(&cfg, &traj, 78, SimMode::COOPERATIVE).unwrap().to_csv_bytes();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn csv_round_trip_preserves_verdicts() {
    let cfg = scenario("ten_agent.toml");
    let traj = plan_for(&cfg, 20.0).unwrap();
    let trace = run_simulation(&cfg, &traj, 5, SimMode::COOPERATIVE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.export(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), trace.rows.len() + 1);
    assert_eq!(text.lines().next().unwrap().split(',').count(), column_count(10));

    let back = SimulationTrace::import(&path).unwrap();
    for (a, b) in back.rows.iter().zip(&trace.rows) {
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.desired, b.desired);
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.cov_trace, b.cov_trace);
    }
    assert_eq!(verify_run(&back, &cfg.safety), verify_run(&trace, &cfg.safety));
}

#[test]
fn single_run_campaign_matches_direct_run() {
    let cfg = scenario("four_agent.toml");
    let traj = plan_for(&cfg, 20.0).unwrap();
    let direct = verify_run(&run_simulation(&cfg, &traj, 123, SimMode::COOPERATIVE).unwrap(), &cfg.safety);
    let mc = monte_carlo_verify(&cfg, &traj, SimMode::COOPERATIVE, 1, 123);
    assert_eq!(mc.runs[0].report.as_ref(), Some(&direct));
    assert_eq!(mc.runs[0].seed, 123);
    assert_eq!(mc.passed, usize::from(direct.all_ok()));
    assert_eq!(verify_seed(&cfg, &traj, SimMode::COOPERATIVE, 0, 123), mc.runs[0]);
}

#[test]
fn noise_free_campaign_is_degenerate() {
    let cfg = scenario("four_agent.toml");
    let traj = plan_for(&cfg, 20.0).unwrap();
    let mode = SimMode {
        estimator: EstimatorMode::Cooperative,
        noise: false,
    };
    let mc = monte_carlo_verify(&cfg, &traj, mode, 4, 9);
    assert!(mc.pass_rate == 0.0 || mc.pass_rate == 1.0);
    let first = &mc.runs[0].report;
    assert!(mc.runs.iter().all(|r| &r.report == first));
}

#[test]
fn cooperative_estimates_track_truth() {
    let cfg = scenario("ten_agent.toml");
    let traj = plan_for(&cfg, 40.0).unwrap();
    let trace = run_simulation(&cfg, &traj, 3, SimMode::COOPERATIVE).unwrap();
    let worst = trace
        .rows
        .iter()
        .flat_map(|r| r.estimates.iter().zip(&r.truth[3..]).map(|(e, t)| (e.position - t.position).norm()))
        .fold(0.0, f64::max);
    assert!(worst < 0.5, "estimation error reached {worst} m");
    assert!(trace.rows[1..].iter().all(|r| r.measurements > 0 && r.sigma_max.is_some()));
}
