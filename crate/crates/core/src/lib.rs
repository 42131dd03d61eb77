//! Sparse tensor canonical correlation analysis with multi-order graph
//! Laplacian regularization.

pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod manifold;
pub mod prox;
pub mod solver;
pub mod synthetic;
pub mod ssn;
pub mod tensor;

pub use error::{Error, Result};
pub use data::MultiViewDataset;
pub use solver::{fit, FitResult, ProblemConfig, ProjectionSet};
