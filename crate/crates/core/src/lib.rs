//! Data-enabled policy optimization (DeePO) for the linear quadratic
//! regulator, its perturbation-free variant (PFDeePO), and a seeded
//! simulation harness.

// `!(x < tol)` style checks are used so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod datastore;
pub mod deepo;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lqr;
pub mod pfdeepo;

pub use error::{Error, Result};
