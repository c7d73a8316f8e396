//! Optimizers, margin solvers and experiment tooling for studying the implicit
//! bias of incremental and mini-batch Adam on separable linear classification.

pub mod datagen;
pub mod error;
pub mod exec;
pub mod fixedpoint;
pub mod harness;
pub mod linalg;
pub mod margin;
pub mod optim;
pub mod problem;

pub use error::{Error, Result};
pub use problem::{Dataset, DatasetKind, LossKind};
