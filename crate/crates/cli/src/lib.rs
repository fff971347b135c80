//! Batch front end for gcdlab.

pub mod acceptance;
pub mod app;
pub mod commands;

pub use app::run;
