// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Round-synchronous message passing.
//!
//! Every round has two halves. First each node fills an [`Outbox`] from its
//! current state; the engine checks that exactly one message went to every
//! out-neighbor. Then each node receives an [`Inbox`] holding one message
//! per in-neighbor and updates. Updates only see the previous snapshot, so
//! the serial and parallel schedules agree bit for bit.

use alloc::format;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::graph::{Digraph, NodeId};

/// Which part of a schedule a round belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    /// Ratio consensus with Hankel detection (Algorithm 1, step 1).
    Learn,
    /// Ratio consensus with a known kernel plus max-consensus on `M + 1`.
    MaxConsensus,
    /// Ratio consensus with a known kernel, fixed length.
    Steady,
    /// Ratio consensus with detection and distributed termination.
    Ftdt,
    /// ε-consensus baseline.
    Epsilon,
    /// Anything outside an ADMM schedule (standalone consensus runs, tests).
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseLabel {
    /// ADMM step, starting at 1 (0 outside ADMM).
    pub step: usize,
    pub phase: Phase,
    /// Round within the phase, starting at 1.
    pub sub_round: usize,
}

/// Per-round information handed to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundCtx {
    pub node: NodeId,
    /// Global round index, starting at 1.
    pub round: usize,
    pub label: PhaseLabel,
}

pub struct Outbox<'a, M> {
    node: NodeId,
    out_neighbors: &'a [NodeId],
    sent: Vec<(NodeId, M)>,
}

impl<M: Clone> Outbox<'_, M> {
    pub fn send(&mut self, to: NodeId, msg: M) {
        self.sent.push((to, msg));
    }

    /// Same message to every out-neighbor.
    pub fn broadcast(&mut self, msg: M) {
        for &to in self.out_neighbors {
            self.sent.push((to, msg.clone()));
        }
    }

    fn validate(&self) -> Result<()> {
        let mut hit = alloc::vec![false; self.out_neighbors.len()];
        for (to, _) in &self.sent {
            let Some(k) = self.out_neighbors.iter().position(|o| o == to) else {
                return Err(Error::ProtocolViolation(format!(
                    "node {} sent to non-neighbor {to}",
                    self.node
                )));
            };
            if core::mem::replace(&mut hit[k], true) {
                return Err(Error::ProtocolViolation(format!(
                    "node {} sent twice to {to}",
                    self.node
                )));
            }
        }
        if let Some(k) = hit.iter().position(|h| !h) {
            return Err(Error::ProtocolViolation(format!(
                "node {} sent nothing to out-neighbor {}",
                self.node, self.out_neighbors[k]
            )));
        }
        Ok(())
    }
}

/// Messages received by one node, ordered by sender id.
#[derive(Debug, Clone)]
pub struct Inbox<M> {
    messages: Vec<(NodeId, M)>,
}

impl<M> Inbox<M> {
    pub fn new(mut messages: Vec<(NodeId, M)>) -> Self {
        messages.sort_by_key(|(from, _)| *from);
        Self { messages }
    }

    pub fn get(&self, from: NodeId) -> Option<&M> {
        self.messages
            .binary_search_by_key(&from, |(f, _)| *f)
            .ok()
            .map(|k| &self.messages[k].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &M)> {
        self.messages.iter().map(|(f, m)| (*f, m))
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Projects every message through `f`, e.g. to pull one payload field.
    pub fn project<'a, T>(&'a self, mut f: impl FnMut(&'a M) -> Option<T>) -> Vec<(NodeId, T)> {
        self.messages
            .iter()
            .filter_map(|(from, m)| f(m).map(|t| (*from, t)))
            .collect()
    }
}

/// A node state machine.
pub trait Process: Send {
    type Msg: Clone + Send + Sync;

    fn send(&self, ctx: &RoundCtx, out: &mut Outbox<'_, Self::Msg>);

    fn receive(&mut self, ctx: &RoundCtx, inbox: &Inbox<Self::Msg>) -> Result<()>;

    /// Hash of the observable state, for logs and replay checks.
    fn digest(&self) -> u64;

    fn is_done(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundRecord {
    pub round: usize,
    pub label: PhaseLabel,
    pub messages: usize,
    /// Digest of every node's state after the round.
    pub digests: Vec<u64>,
}

/// Append-only record of every round the network ran.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundLog {
    records: Vec<RoundRecord>,
}

impl RoundLog {
    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rounds spent in each `(step, phase)` block, in order of appearance.
    pub fn phase_lengths(&self) -> Vec<(usize, Phase, usize)> {
        let mut out: Vec<(usize, Phase, usize)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some((s, p, len)) if *s == r.label.step && *p == r.label.phase => *len += 1,
                _ => out.push((r.label.step, r.label.phase, 1)),
            }
        }
        out
    }

    /// Rounds per ADMM step.
    pub fn rounds_per_step(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some((s, len)) if *s == r.label.step => *len += 1,
                _ => out.push((r.label.step, 1)),
            }
        }
        out
    }

    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        for r in &self.records {
            h.write_usize(r.round);
            h.write_usize(r.messages);
            for d in &r.digests {
                h.write_u64(*d);
            }
        }
        h.finish()
    }
}

pub struct Network<P: Process> {
    graph: Digraph,
    nodes: Vec<P>,
    round: usize,
    log: RoundLog,
    parallel: bool,
}

impl<P: Process> Network<P> {
    pub fn new(graph: Digraph, nodes: Vec<P>) -> Result<Self> {
        if nodes.len() != graph.node_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.node_count(),
                found: nodes.len(),
            });
        }
        Ok(Self {
            graph,
            nodes,
            round: 0,
            log: RoundLog::default(),
            parallel: false,
        })
    }

    /// Updates nodes concurrently within a round. Results are identical to
    /// the serial loop. Without the `parallel` feature this is a no-op.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn nodes(&self) -> &[P] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [P] {
        &mut self.nodes
    }

    pub fn into_parts(self) -> (Vec<P>, RoundLog) {
        (self.nodes, self.log)
    }

    /// Rounds run so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn log(&self) -> &RoundLog {
        &self.log
    }

    pub fn digests(&self) -> Vec<u64> {
        self.nodes.iter().map(Process::digest).collect()
    }

    pub fn run_round(&mut self, label: PhaseLabel) -> Result<&RoundRecord> {
        let round = self.round + 1;
        let n = self.nodes.len();
        let mut pending: Vec<Vec<(NodeId, P::Msg)>> = (0..n).map(|_| Vec::new()).collect();
        let mut messages = 0;
        for (j, node) in self.nodes.iter().enumerate() {
            let ctx = RoundCtx {
                node: j,
                round,
                label,
            };
            let mut out = Outbox {
                node: j,
                out_neighbors: self.graph.out_neighbors(j),
                sent: Vec::new(),
            };
            node.send(&ctx, &mut out);
            out.validate()?;
            messages += out.sent.len();
            for (to, msg) in out.sent {
                pending[to].push((j, msg));
            }
        }
        let inboxes: Vec<Inbox<P::Msg>> = pending.into_iter().map(Inbox::new).collect();
        self.deliver(round, label, &inboxes)?;
        self.round = round;
        let digests = self.digests();
        self.log.records.push(RoundRecord {
            round,
            label,
            messages,
            digests,
        });
        Ok(self.log.records.last().expect("just pushed"))
    }

    #[cfg(feature = "parallel")]
    fn deliver(
        &mut self,
        round: usize,
        label: PhaseLabel,
        inboxes: &[Inbox<P::Msg>],
    ) -> Result<()> {
        use rayon::prelude::*;
        if self.parallel {
            return self
                .nodes
                .par_iter_mut()
                .zip(inboxes.par_iter())
                .enumerate()
                .try_for_each(|(j, (node, inbox))| {
                    node.receive(
                        &RoundCtx {
                            node: j,
                            round,
                            label,
                        },
                        inbox,
                    )
                });
        }
        self.deliver_serial(round, label, inboxes)
    }

    #[cfg(not(feature = "parallel"))]
    fn deliver(
        &mut self,
        round: usize,
        label: PhaseLabel,
        inboxes: &[Inbox<P::Msg>],
    ) -> Result<()> {
        self.deliver_serial(round, label, inboxes)
    }

    fn deliver_serial(
        &mut self,
        round: usize,
        label: PhaseLabel,
        inboxes: &[Inbox<P::Msg>],
    ) -> Result<()> {
        for (j, (node, inbox)) in self.nodes.iter_mut().zip(inboxes).enumerate() {
            node.receive(
                &RoundCtx {
                    node: j,
                    round,
                    label,
                },
                inbox,
            )?;
        }
        Ok(())
    }

    /// Exactly `rounds` rounds labelled `(step, phase, 1..=rounds)`.
    pub fn run_phase(&mut self, step: usize, phase: Phase, rounds: usize) -> Result<()> {
        for sub_round in 1..=rounds {
            self.run_round(PhaseLabel {
                step,
                phase,
                sub_round,
            })?;
        }
        Ok(())
    }

    /// Runs until every node reports done, at most `max_rounds` rounds.
    /// Returns the number of rounds run, or `None` if the cap was hit.
    pub fn run_until_done(
        &mut self,
        step: usize,
        phase: Phase,
        max_rounds: usize,
    ) -> Result<Option<usize>> {
        for sub_round in 1..=max_rounds {
            if self.nodes.iter().all(Process::is_done) {
                return Ok(Some(sub_round - 1));
            }
            self.run_round(PhaseLabel {
                step,
                phase,
                sub_round,
            })?;
        }
        Ok(self
            .nodes
            .iter()
            .all(Process::is_done)
            .then_some(max_rounds))
    }

    /// Re-runs the rounds of `log` on this network (which must start from
    /// the same state the logged run started from) and checks every digest.
    pub fn replay(&mut self, log: &RoundLog) -> Result<()> {
        for rec in log.records() {
            let label = rec.label;
            let got = self.run_round(label)?;
            if got.digests != rec.digests || got.messages != rec.messages {
                return Err(Error::ProtocolViolation(format!(
                    "replay diverged at round {}",
                    rec.round
                )));
            }
        }
        Ok(())
    }
}

/// FNV digest helper for `Process::digest` implementations.
pub fn digest_with(f: impl FnOnce(&mut FnvHasher)) -> u64 {
    let mut h = FnvHasher::default();
    f(&mut h);
    h.finish()
}
