//! Desk-scale toolkit for measuring how lottery-ticket magnitude pruning
//! changes post-hoc explanations of a small residual CNN.
//!
//! Pipeline: [`train`] a [`model::Network`], prune it with
//! [`pruning::run_lth_cycle`], explain it with [`attribution`], score the
//! explanations with [`metrics`], and extract concepts with [`concepts`].
//! [`harness`] wires the stages to disk.

pub mod attribution;
pub mod autodiff;
pub mod checkpoint;
pub mod concepts;
pub mod data;
pub mod error;
pub mod harness;
pub mod imageio;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pruning;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tensor};
