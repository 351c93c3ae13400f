//! Experiment orchestration on top of `besd_core`: configuration, seeded
//! runs of every method, checkpoint evaluation, subgoal-benefit ratios and
//! CSV/SVG artifacts.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod ratio;
