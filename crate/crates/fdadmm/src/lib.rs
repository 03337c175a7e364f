// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! File formats and the experiment runner around [`fdadmm_core`].
//!
//! * [`graph_file`]: edge lists, `n m` header then one `to from` pair per line.
//! * [`dataset`]: classification data as CSV, label column last.
//! * [`config`]: experiment description in TOML.
//! * [`report`]: per-step metrics as CSV and round logs as JSON lines.
//! * [`compare`]: per-step deltas between runs.

pub mod compare;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod graph_file;
pub mod report;

pub use error::{CliError, Result};
