//! Leader–follower continuum deformation of multi-agent formations.
//!
//! Three leaders steer a triangle; every follower tracks a convex combination
//! of three in-neighbors, estimated by a cooperative localization filter.

pub mod dynamics;
pub mod geometry;
pub mod graphs;
pub mod planner;
pub mod localization;
pub mod harness;
pub mod safety;
