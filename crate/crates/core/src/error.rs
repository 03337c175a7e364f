// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

use alloc::string::String;

use crate::graph::NodeId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid edge ({to}, {from}): {reason}")]
    InvalidEdge {
        to: NodeId,
        from: NodeId,
        reason: &'static str,
    },

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("node {node} is missing the message from in-neighbor {from}")]
    MissingMessage { node: NodeId, from: NodeId },

    #[error("difference sequence is identically zero (already converged)")]
    DegenerateSequence,

    #[error("numeric breakdown at node {node}: {detail}")]
    NumericBreakdown { node: NodeId, detail: &'static str },

    #[error("node {node} found no Hankel defect within {rounds} rounds")]
    NoDefect { node: NodeId, rounds: usize },

    #[error("termination counter of node {node} is already frozen")]
    AlreadyFrozen { node: NodeId },

    #[error("t_term = {t_term} with M = {defect} does not give an integer M_max")]
    NonIntegerResult { t_term: usize, defect: usize },

    #[error("inner solver stopped after {iterations} iterations (residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("need at least {needed} points above the floor, got {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("reference solver hit {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
