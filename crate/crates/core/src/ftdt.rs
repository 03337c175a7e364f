// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Distributed termination for finite-time consensus.
//!
//! Each node runs a step counter `c` that freezes at `2(M + 1)` once its
//! Hankel defect is known, relays the running maximum `θ` of all counters it
//! has heard of, and counts in `r` how long `θ` has been stable. A node is
//! finished when `r` reaches its frozen count. All quantities are integers.
//!
//! Round convention: the first round is round 1. A node whose defect shows
//! up after round `2M + 1` freezes in that same round, before its
//! `θ`/`r` update, so a lone node (`M = 0`) terminates at round 3.

use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FtdtMsg {
    pub theta: u64,
    pub c: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TerminationState {
    pub c: u64,
    pub r: u64,
    pub theta: u64,
    /// `c°`, set by [`freeze_counter`].
    pub frozen: Option<u64>,
    pub defect: Option<usize>,
    pub t_term: Option<usize>,
}

impl TerminationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn message(&self) -> FtdtMsg {
        FtdtMsg {
            theta: self.theta,
            c: self.c,
        }
    }

    pub fn terminated(&self) -> bool {
        self.t_term.is_some()
    }
}

/// Stops the counter at `c° = 2(M + 1)`.
pub fn freeze_counter(state: &mut TerminationState, node: NodeId, defect: usize) -> Result<()> {
    if state.frozen.is_some() {
        return Err(Error::AlreadyFrozen { node });
    }
    let c0 = 2 * (defect as u64 + 1);
    state.frozen = Some(c0);
    state.defect = Some(defect);
    state.c = c0;
    Ok(())
}

/// One round of counter / relay updates. `inbox` must hold one message per
/// in-neighbor, as sent at the start of this round.
pub fn ftdt_step(
    state: &mut TerminationState,
    node: NodeId,
    in_neighbors: &[NodeId],
    inbox: &[(NodeId, FtdtMsg)],
) -> Result<()> {
    if state.frozen.is_none() {
        state.c += 1;
    }
    let mut theta = state.theta.max(state.c);
    for &from in in_neighbors {
        let msg = inbox
            .iter()
            .find(|(f, _)| *f == from)
            .map(|(_, m)| m)
            .ok_or(Error::MissingMessage { node, from })?;
        theta = theta.max(msg.theta).max(msg.c);
    }
    if theta == state.theta {
        state.r += 1;
    } else {
        state.theta = theta;
        state.r = 0;
    }
    Ok(())
}

/// Fires once, in the round where `r` reaches `c°`.
pub fn check_termination(state: &mut TerminationState, round: usize) -> Option<usize> {
    match (state.frozen, state.t_term) {
        (Some(c0), None) if state.r == c0 => {
            state.t_term = Some(round);
            state.t_term
        }
        _ => None,
    }
}

/// `M_max = (t_term - 2 M_i - 1) / 2 - 1`.
pub fn derive_mmax(t_term: usize, defect: usize) -> Result<usize> {
    let bad = Error::NonIntegerResult { t_term, defect };
    let num = t_term.checked_sub(2 * defect + 1).ok_or(bad.clone())?;
    if num % 2 != 0 || num < 2 {
        return Err(bad);
    }
    Ok(num / 2 - 1)
}

/// `t₁ = 4(M_max + 1) - 1`, the length of the first ADMM step.
pub fn first_step_rounds(m_max: usize) -> usize {
    4 * (m_max + 1) - 1
}
