//! Static and landmark dynamic risk prediction for a time-to-event outcome
//! with competing risks and no random censoring.

pub mod cli;
pub mod data;
pub mod error;
pub mod exec;
pub mod glm;
pub mod harness;
pub mod landmark;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod rmtl;
pub mod simulation;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
pub use exec::Exec;
