//! Stabilized multi-cut Benders decomposition for two-stage stochastic
//! capacity-expansion planning.

pub mod detequiv;
pub mod driver;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod instance;
pub mod layout;
pub mod master;
pub mod operation;
pub mod oracle;
pub mod report;
pub mod scenred;
pub mod solver;
pub mod stabilization;
pub mod subproblem;

pub use error::{Error, Result};
