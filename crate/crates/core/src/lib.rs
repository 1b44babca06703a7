//! Private-feature extraction at desk scale.
//!
//! The crate trains split dense networks whose intermediate ("private")
//! feature keeps the information needed for a primary label while shedding
//! the information about a sensitive label, and measures how well that
//! worked: log-rank privacy, leave-one-out nearest-neighbour error, and the
//! variational lower / kernel-density upper bounds on the relevant mutual
//! informations.
//!
//! Everything here is pure computation over `alloc` collections. File
//! formats, the command line and logging live in the `dpfe` crate.

#![cfg_attr(not(test), no_std)]
// `!(x >= 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod linalg;
mod math;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod tradeoff;

pub use error::{Error, Result, Warning};
pub use tensor::Tensor2;
