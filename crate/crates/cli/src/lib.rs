//! Command-line front end for sparse tensor CCA experiments.

pub mod commands;
pub mod config;
pub mod dataset;

pub use config::RunConfig;
pub use dataset::{load_dataset, save_dataset, Manifest};
