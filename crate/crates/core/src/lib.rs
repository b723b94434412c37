//! Judge-propensity instrumental-variables toolkit: case ingestion, leave-out
//! instruments, fixed-effect 2SLS with clustered inference, identification
//! diagnostics, double machine learning, a synthetic court generator, and a
//! cost-benefit calculator.

pub mod cba;
pub mod corpus;
pub mod ddml;
pub mod diagnostics;
pub mod dsu;
pub mod error;
pub mod hdfe;
pub mod ivcore;
pub mod linalg;
pub mod simgen;

pub use error::{Error, Result};
