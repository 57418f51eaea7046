//! Deep material networks with a micromechanics-informed parametric layer.
//!
//! A perfect binary tree of rank-1 laminates maps two phase properties to an
//! effective property. The leaf weights and laminate rotations come from a
//! small parametric layer driven by microstructural parameters `(vf, q)`.

pub mod dataset;
pub mod error;
pub mod inelastic;
pub mod io;
pub mod laminate;
pub mod network;
pub mod oracle;
pub mod parametric;
pub mod tensor;
pub mod training;

pub use error::{DmnError, Result};
