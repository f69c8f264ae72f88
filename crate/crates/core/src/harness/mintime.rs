//! Minimum safe travel time of the leaders' maneuver.

use crate::harness::scenario::ScenarioConfig;
use crate::harness::sim::SimMode;
use crate::planner::{
    min_travel_time, plan_leader_trajectories, LeaderTrajectory, PlannerError, Probe, TimeSearchError, TimeSearchOutcome,
};
use crate::safety::{monte_carlo_verify, MonteCarloReport};

/// Plans the scenario's leader maneuver with the given duration.
pub fn plan_for(cfg: &ScenarioConfig, duration: f64) -> Result<LeaderTrajectory, PlannerError> {
    plan_leader_trajectories(&cfg.boundary_conditions(duration), &cfg.planner.area, cfg.planner.grid_size)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinTimeOptions {
    pub bounds: (f64, f64),
    pub resolution: f64,
    pub runs: usize,
    pub base_seed: u64,
    pub mode: SimMode,
    pub monotonicity_checks: usize,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub trajectory: LeaderTrajectory,
    pub campaign: MonteCarloReport,
}

/// A duration is feasible when every Monte Carlo run at that duration passes
/// all safety conditions. The probe margin is the worst normalized margin.
pub fn min_safe_time(
    cfg: &ScenarioConfig,
    opts: &MinTimeOptions,
) -> Result<TimeSearchOutcome<Candidate>, TimeSearchError<PlannerError>> {
    min_travel_time(opts.bounds, opts.resolution, opts.monotonicity_checks, |t| {
        let trajectory = plan_for(cfg, t)?;
        let campaign = monte_carlo_verify(cfg, &trajectory, opts.mode, opts.runs, opts.base_seed);
        log::info!(
            "T = {t:.3} s: {}/{} runs safe, worst margin {:.4}",
            campaign.passed,
            campaign.runs.len(),
            campaign.worst().normalized_margin()
        );
        Ok(Probe {
            feasible: campaign.all_passed(),
            margin: campaign.worst().normalized_margin(),
            payload: Candidate { trajectory, campaign },
        })
    })
}
