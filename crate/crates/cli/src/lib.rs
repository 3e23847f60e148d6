//! Experiment runner library: configuration, scenario execution, reporting.

pub mod config;
pub mod csvio;
pub mod report;
pub mod runner;
pub mod svg;
