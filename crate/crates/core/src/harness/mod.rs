//! Scenario files, the closed-loop simulation, traces and the travel-time
//! search.

pub mod mintime;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use scenario::ScenarioConfig;
