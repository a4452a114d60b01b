//! Domain core of the clinic record system: data model, access control,
//! archetype engine, versioned audited store and the clinic operations.

pub mod access;
pub mod archetype;
pub mod canonical;
pub mod clinic;
pub mod clock;
pub mod error;
pub mod model;
pub mod store;
pub mod workflow;

pub use clinic::{Clinic, ClinicConfig};
pub use error::{EmrError, Result};
