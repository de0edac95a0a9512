//! Direct and indirect data-driven predictive control.
//!
//! The crate builds the Hankel-data controllers (DeePC with an `l2` or a
//! projection regularizer, gamma-DDPC) next to their indirect counterparts
//! (SPC, causal SPC and the slack-augmented multi-step predictor), and
//! provides the machinery to check numerically that the two families return
//! the same inputs and predictions.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bench;
pub mod controllers;
pub mod equivalence;
pub mod error;
pub mod estimation;
pub mod numkit;
pub mod qpcore;
pub mod rng;
pub mod sysdata;

pub use error::{Error, Result};
