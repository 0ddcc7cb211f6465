//! Synthetic experiments, file formats and reports.

pub mod config;
pub mod data;
pub mod experiments;
pub mod io;
pub mod plot;
pub mod report;
