// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Distributed ADMM over directed graphs.
//!
//! The consensus step of ADMM (the projection onto the consensus set) is
//! carried out by *finite-time exact ratio consensus*: every node runs the
//! ratio (push-sum style) iteration, watches the Hankel matrices built from
//! the differences of its own trajectory, and as soon as they lose rank it
//! extrapolates the exact network average from the kernel of the first
//! defective matrix. A counter / max-consensus termination layer lets nodes
//! agree on when every node has finished without knowing the network size.
//!
//! The crate is `no_std` + `alloc`. IO, file formats and the experiment CLI
//! live in the `fdadmm` companion crate.
//!
//! Arithmetic is pluggable through [`Scalar`]: `f64` uses an SVD rank test
//! with relative tolerances, [`Exact`] runs the same protocol over the
//! rationals and detects rank loss exactly.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod admm;
pub mod consensus;
pub mod error;
pub mod ftdt;
pub mod graph;
pub mod linalg;
pub mod netsim;
pub mod objectives;
pub mod oracle;
pub mod scalar;

pub use error::{Error, Result};
pub use graph::{Digraph, NodeId, WeightMatrix};
pub use scalar::{Exact, Scalar, Tolerances};
