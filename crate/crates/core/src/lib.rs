//! One-class classification with logarithmic-barrier losses.
//!
//! The toolkit trains a small dense MLP to enclose target data in a
//! hypersphere using one of five losses (MSE-OCL, SBL, HRN, LBL, LBLSig),
//! fits a rejection threshold on training errors, and evaluates with AUC and
//! G-mean. All gradients are hand-derived and validated against a
//! finite-difference oracle.

pub mod adam;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod hypersphere;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod trainer;

pub use error::{OccError, Result};
