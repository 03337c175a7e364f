// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Ratio consensus and its finite-time extrapolation.
//!
//! Each node runs two linear iterations, a numerator `y` (the payload,
//! `p` coordinates) and a denominator `x` (starting at one). Their ratio
//! tends to the network average. The node also watches the differences of
//! its own trajectory: once the `k × k` Hankel matrices of those differences
//! become singular, the normalized kernel `β` (length `M + 1`, last entry 1)
//! gives the limit in closed form from the first `M + 1` samples.
//!
//! The kernel is taken from the *stacked* Hankel matrix of all channels
//! (denominator first, then every numerator coordinate). On regular digraphs
//! the denominator never moves, so it alone cannot reveal the defect.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ftdt::{self, FtdtMsg, TerminationState};
use crate::graph::{Digraph, NodeId, Weight, WeightMatrix};
use crate::linalg::modular;
use crate::netsim::{digest_with, Inbox, Network, Outbox, Phase, Process, RoundCtx};
use crate::scalar::{KernelProbe, Scalar, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub struct RatioMsg<S> {
    pub y: Vec<S>,
    pub x: S,
}

/// Trajectories of one node. `y[t]` has one entry per payload coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioState<S> {
    pub y: Vec<Vec<S>>,
    pub x: Vec<S>,
}

impl<S: Scalar> RatioState<S> {
    pub fn new(y0: Vec<S>) -> Self {
        Self {
            y: vec![y0],
            x: vec![S::one()],
        }
    }

    pub fn from_f64(y0: &[f64]) -> Self {
        Self::new(y0.iter().map(|&v| S::from_f64(v)).collect())
    }

    /// Rounds completed.
    pub fn round(&self) -> usize {
        self.x.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    pub fn message(&self) -> RatioMsg<S> {
        RatioMsg {
            y: self.y.last().expect("non-empty").clone(),
            x: self.x.last().expect("non-empty").clone(),
        }
    }

    /// Current ratio `y[t] / x[t]`.
    pub fn ratio(&self) -> Vec<f64> {
        let x = self.x.last().expect("non-empty");
        self.y
            .last()
            .expect("non-empty")
            .iter()
            .map(|v| v.div(x).to_f64())
            .collect()
    }

    /// Sample `[x, y_1, ..., y_p]` at time `t`.
    pub fn sample(&self, t: usize) -> Vec<S> {
        let mut s = Vec::with_capacity(self.dim() + 1);
        s.push(self.x[t].clone());
        s.extend(self.y[t].iter().cloned());
        s
    }
}

/// Node `j`'s row of the weight matrix restricted to its in-neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct InWeights {
    pub own: Weight,
    pub neighbors: Vec<(NodeId, Weight)>,
}

impl InWeights {
    pub fn new(g: &Digraph, w: &WeightMatrix, node: NodeId) -> Self {
        Self {
            own: w.weight(node, node),
            neighbors: g
                .in_neighbors(node)
                .iter()
                .map(|&i| (i, w.weight(node, i)))
                .collect(),
        }
    }
}

fn lookup<T>(inbox: &[(NodeId, T)], node: NodeId, from: NodeId) -> Result<&T> {
    inbox
        .iter()
        .find(|(f, _)| *f == from)
        .map(|(_, m)| m)
        .ok_or(Error::MissingMessage { node, from })
}

/// `y_j[t+1] = p_jj y_j[t] + Σ p_ji y_i[t]`, same for `x`.
pub fn ratio_step<S: Scalar>(
    state: &mut RatioState<S>,
    node: NodeId,
    weights: &InWeights,
    inbox: &[(NodeId, &RatioMsg<S>)],
) -> Result<()> {
    ratio_step_with(state, node, weights, inbox, None)
}

/// [`ratio_step`] with the next denominator supplied by the caller (cached
/// from an earlier run, since `x` starts at one every time).
pub fn ratio_step_with<S: Scalar>(
    state: &mut RatioState<S>,
    node: NodeId,
    weights: &InWeights,
    inbox: &[(NodeId, &RatioMsg<S>)],
    next_x: Option<&S>,
) -> Result<()> {
    let own = state.message();
    let mut msgs: Vec<(Weight, &RatioMsg<S>)> = Vec::with_capacity(weights.neighbors.len() + 1);
    msgs.push((weights.own, &own));
    for &(from, w) in &weights.neighbors {
        msgs.push((w, *lookup(inbox, node, from)?));
    }
    let x = match next_x {
        Some(x) => x.clone(),
        None => S::weighted_sum(msgs.iter().map(|(w, m)| (*w, &m.x))),
    };
    let y = (0..state.dim())
        .map(|c| S::weighted_sum(msgs.iter().map(|(w, m)| (*w, &m.y[c]))))
        .collect();
    state.y.push(y);
    state.x.push(x);
    Ok(())
}

/// `v_j ← max(v_j, max over in-neighbors)`.
pub fn max_consensus_step<T: Ord + Copy>(
    value: T,
    node: NodeId,
    in_neighbors: &[NodeId],
    inbox: &[(NodeId, T)],
) -> Result<T> {
    in_neighbors
        .iter()
        .try_fold(value, |acc, &from| Ok(acc.max(*lookup(inbox, node, from)?)))
}

/// Coordinate-wise min/max relay used by the ε-consensus baseline.
fn extremum_step(own: &mut [f64], others: &[&[f64]], take_max: bool) {
    for o in others {
        for (a, b) in own.iter_mut().zip(o.iter()) {
            *a = if take_max { a.max(*b) } else { a.min(*b) };
        }
    }
}

/// Minimal recurrence of a node's trajectory, as found by the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Learned<S> {
    /// Defect index `M`: the first singular Hankel matrix is `(M+1)×(M+1)`.
    pub m: usize,
    /// Kernel, length `M + 1`, last entry one.
    pub beta: Vec<S>,
    /// Round after which the defect was visible (`2M + 1`).
    pub found_at: usize,
    /// The first differences were all negligible: the input was already at consensus.
    pub degenerate: bool,
}

impl<S: Scalar> Learned<S> {
    pub fn trivial(found_at: usize) -> Self {
        Self {
            m: 0,
            beta: vec![S::one()],
            found_at,
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feed {
    Pending,
    Found,
    Degenerate,
    /// The detector already has its answer; the sample was ignored.
    Done,
}

/// Incremental first-defect search over a multi-channel sequence.
#[derive(Debug, Clone)]
pub struct HankelDetector<S> {
    node: NodeId,
    tol: Tolerances,
    last: Option<Vec<S>>,
    diffs: Vec<Vec<S>>,
    /// Differences modulo [`SCREEN_PRIME`], when the backend provides them.
    screen: Option<Vec<Vec<u64>>>,
    learned: Option<Learned<S>>,
}

/// 2^61 - 1. Full rank modulo a prime implies full rank over Q, so most
/// exact rank tests never leave machine integers.
const SCREEN_PRIME: u64 = (1 << 61) - 1;

impl<S: Scalar> HankelDetector<S> {
    pub fn new(node: NodeId, channels: usize, tol: Tolerances) -> Self {
        let screen = S::one()
            .residue(SCREEN_PRIME)
            .map(|_| vec![Vec::new(); channels]);
        Self {
            node,
            tol,
            last: None,
            diffs: vec![Vec::new(); channels],
            screen,
            learned: None,
        }
    }

    pub fn learned(&self) -> Option<&Learned<S>> {
        self.learned.as_ref()
    }

    pub fn samples(&self) -> usize {
        self.diffs[0].len() + usize::from(self.last.is_some())
    }

    /// Appends the next sample (one value per channel). With `2k` samples the
    /// `k × k` matrices are tested.
    pub fn feed(&mut self, sample: &[S]) -> Result<Feed> {
        if self.learned.is_some() {
            return Ok(Feed::Done);
        }
        if sample.len() != self.diffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.diffs.len(),
                found: sample.len(),
            });
        }
        if let Some(prev) = self.last.take() {
            for (c, (a, b)) in sample.iter().zip(&prev).enumerate() {
                let d = a.sub(b);
                if let Some(screen) = self.screen.as_mut() {
                    match d.residue(SCREEN_PRIME) {
                        Some(r) => screen[c].push(r),
                        None => self.screen = None,
                    }
                }
                self.diffs[c].push(d);
            }
        }
        self.last = Some(sample.to_vec());
        let nd = self.diffs[0].len();
        if nd == 0 || nd % 2 == 0 {
            return Ok(Feed::Pending);
        }
        if nd == 1 && self.diffs.iter().all(|d| d[0].is_negligible(&self.tol)) {
            self.learned = Some(Learned::trivial(1));
            return Ok(Feed::Degenerate);
        }
        let k = nd.div_ceil(2);
        if let Some(screen) = &self.screen {
            let rows: Vec<Vec<u64>> = screen
                .iter()
                .flat_map(|ch| (0..k).map(move |r| ch[r..r + k].to_vec()))
                .collect();
            if modular::kernel_mod_p(&rows, k, SCREEN_PRIME) == modular::ModKernel::FullRank {
                return Ok(Feed::Pending);
            }
        }
        let channels: Vec<&[S]> = self.diffs.iter().map(Vec::as_slice).collect();
        match S::hankel_kernel(&channels, k, &self.tol) {
            KernelProbe::FullRank => Ok(Feed::Pending),
            KernelProbe::Kernel(beta) => {
                self.learned = Some(Learned {
                    m: k - 1,
                    beta,
                    found_at: nd,
                    degenerate: false,
                });
                Ok(Feed::Found)
            }
            KernelProbe::BadNormalization => Err(Error::NumericBreakdown {
                node: self.node,
                detail: "kernel has a vanishing last entry",
            }),
        }
    }
}

/// Defect of a single scalar sequence, for tests and oracles.
/// Returns `DegenerateSequence` for a sequence that never moves.
pub fn find_defect<S: Scalar>(seq: &[S], tol: &Tolerances) -> Result<Learned<S>> {
    let mut d = HankelDetector::new(0, 1, *tol);
    for s in seq {
        match d.feed(core::slice::from_ref(s))? {
            Feed::Found => return Ok(d.learned.expect("found")),
            Feed::Degenerate => return Err(Error::DegenerateSequence),
            Feed::Pending | Feed::Done => {}
        }
    }
    Err(Error::NoDefect {
        node: 0,
        rounds: seq.len().saturating_sub(1),
    })
}

/// `μ[c] = Σ β_i y[i][c] / Σ β_i x[i]`, `i = 0..=M`.
pub fn fterc_final<S: Scalar>(
    y: &[Vec<S>],
    x: &[S],
    beta: &[S],
    node: NodeId,
    tol: &Tolerances,
) -> Result<Vec<S>> {
    let m1 = beta.len();
    if y.len() < m1 || x.len() < m1 {
        return Err(Error::InsufficientData {
            needed: m1,
            found: x.len().min(y.len()),
        });
    }
    let den = S::dot(beta, &x[..m1]);
    if !den.is_safe_divisor(tol) {
        return Err(Error::NumericBreakdown {
            node,
            detail: "final-value denominator vanished",
        });
    }
    let p = y[0].len();
    Ok((0..p)
        .map(|c| {
            let col: Vec<S> = y[..m1].iter().map(|v| v[c].clone()).collect();
            S::dot(beta, &col).div(&den)
        })
        .collect())
}

/// `φ = trajᵀβ / 𝟙ᵀβ`, the limit of one trajectory on its own.
pub fn final_values<S: Scalar>(
    traj: &[S],
    beta: &[S],
    node: NodeId,
    tol: &Tolerances,
) -> Result<S> {
    let m1 = beta.len();
    if traj.len() < m1 {
        return Err(Error::InsufficientData {
            needed: m1,
            found: traj.len(),
        });
    }
    let sum = beta.iter().fold(S::zero(), |a, b| a.add(b));
    if !sum.is_safe_divisor(tol) {
        return Err(Error::NumericBreakdown {
            node,
            detail: "kernel coefficients sum to zero",
        });
    }
    Ok(S::dot(beta, &traj[..m1]).div(&sum))
}

/// One message per edge and round: ratio pair plus optional relays.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload<S> {
    pub ratio: RatioMsg<S>,
    pub max: Option<u64>,
    pub ftdt: Option<FtdtMsg>,
}

/// What a node does during the current phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Ratio consensus with Hankel detection.
    Learn,
    /// Ratio consensus with the kernel learned earlier.
    Reuse,
    /// Detection plus distributed termination.
    Ftdt,
}

/// Outcome of the termination protocol at one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FtdtOutcome {
    pub defect: usize,
    /// Round at which `r` reached `c°`; `None` if the node was still
    /// waiting when the common end round came.
    pub t_term: Option<usize>,
    /// `θ / 2 - 1` at termination.
    pub m_max: usize,
    /// Round at which the node leaves the phase, `4(M_max + 1) - 1`.
    pub stop_round: usize,
}

/// A consensus node: ratio iteration, detector, optional max-consensus
/// channel and optional termination layer.
#[derive(Debug, Clone)]
pub struct FtercNode<S> {
    id: NodeId,
    weights: InWeights,
    in_neighbors: Vec<NodeId>,
    tol: Tolerances,
    mode: Mode,
    ratio: RatioState<S>,
    detector: Option<HankelDetector<S>>,
    learned: Option<Learned<S>>,
    max_value: Option<u64>,
    term: Option<TerminationState>,
    outcome: Option<FtdtOutcome>,
    ratio_frozen: bool,
    last_round: usize,
    caching: bool,
    x_cache: Vec<S>,
}

impl<S: Scalar> FtercNode<S> {
    pub fn new(g: &Digraph, w: &WeightMatrix, id: NodeId, tol: Tolerances) -> Self {
        Self {
            id,
            weights: InWeights::new(g, w, id),
            in_neighbors: g.in_neighbors(id).to_vec(),
            tol,
            mode: Mode::Learn,
            ratio: RatioState::new(vec![]),
            detector: None,
            learned: None,
            max_value: None,
            term: None,
            outcome: None,
            ratio_frozen: false,
            last_round: 0,
            caching: false,
            x_cache: Vec::new(),
        }
    }

    /// Reuse the denominator trajectory of earlier runs instead of
    /// recomputing it. Off by default.
    pub fn set_denominator_caching(&mut self, on: bool) {
        self.caching = on;
        if !on {
            self.x_cache.clear();
        }
    }

    fn reset(&mut self, mode: Mode, seed: &[f64]) {
        if self.caching && self.ratio.x.len() > self.x_cache.len() {
            self.x_cache = core::mem::take(&mut self.ratio.x);
        }
        self.mode = mode;
        self.ratio = RatioState::from_f64(seed);
        self.max_value = None;
        self.term = None;
        self.outcome = None;
        self.ratio_frozen = false;
        self.last_round = 0;
        self.detector = None;
        if mode != Mode::Reuse {
            self.learned = None;
            let mut d = HankelDetector::new(self.id, seed.len() + 1, self.tol);
            d.feed(&self.ratio.sample(0)).expect("first sample");
            self.detector = Some(d);
        }
        if mode == Mode::Ftdt {
            self.term = Some(TerminationState::new());
        }
    }

    /// Fresh ratio consensus from `seed`, detecting the kernel as it goes.
    pub fn begin_learning(&mut self, seed: &[f64]) {
        self.reset(Mode::Learn, seed);
    }

    /// Like [`begin_learning`](Self::begin_learning), with distributed termination.
    pub fn begin_ftdt(&mut self, seed: &[f64]) {
        self.reset(Mode::Ftdt, seed);
    }

    /// Fresh ratio consensus from `seed` reusing the learned kernel.
    pub fn begin_reuse(&mut self, seed: &[f64]) -> Result<()> {
        if self.learned.is_none() {
            return Err(Error::ProtocolViolation(alloc::format!(
                "node {} has no kernel to reuse",
                self.id
            )));
        }
        self.reset(Mode::Reuse, seed);
        Ok(())
    }

    /// Turns on the max-consensus relay with initial value `v`.
    pub fn set_max(&mut self, v: u64) {
        self.max_value = Some(v);
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn ratio_state(&self) -> &RatioState<S> {
        &self.ratio
    }

    pub fn learned(&self) -> Option<&Learned<S>> {
        self.learned.as_ref()
    }

    pub fn max_value(&self) -> Option<u64> {
        self.max_value
    }

    pub fn termination(&self) -> Option<&TerminationState> {
        self.term.as_ref()
    }

    pub fn ftdt_outcome(&self) -> Option<FtdtOutcome> {
        self.outcome
    }

    /// Exact value of the limit, in the backend's arithmetic.
    pub fn value(&self) -> Result<Vec<S>> {
        let l = self.learned.as_ref().ok_or(Error::NoDefect {
            node: self.id,
            rounds: self.ratio.round(),
        })?;
        fterc_final(&self.ratio.y, &self.ratio.x, &l.beta, self.id, &self.tol)
    }

    /// The limit rounded to `f64`.
    pub fn result(&self) -> Result<Vec<f64>> {
        Ok(self.value()?.iter().map(Scalar::to_f64).collect())
    }

    /// Fixes `M_max = θ/2 − 1` and the common end round `t₁`. Called when
    /// the node terminates, or at round `2θ − 1` (counter frozen) if it has
    /// not yet: the relay maximum reaches every node by then, so `t₁` is
    /// the same at every node.
    fn settle(&mut self, t_term: Option<usize>, round: usize) -> Result<()> {
        let term = self.term.as_ref().expect("ftdt mode");
        let Some(defect) = term.defect else {
            return Err(Error::NoDefect {
                node: self.id,
                rounds: round,
            });
        };
        let theta = term.theta as usize;
        if theta % 2 != 0 || theta < 2 {
            return Err(Error::ProtocolViolation(alloc::format!(
                "node {}: odd relay maximum {theta}",
                self.id
            )));
        }
        let m_max = theta / 2 - 1;
        let stop_round = ftdt::first_step_rounds(m_max);
        if round > stop_round {
            return Err(Error::ProtocolViolation(alloc::format!(
                "node {} settled at {round}, after the common end round {stop_round}",
                self.id
            )));
        }
        self.outcome = Some(FtdtOutcome {
            defect,
            t_term,
            m_max,
            stop_round,
        });
        self.ratio_frozen = true;
        Ok(())
    }
}

impl<S: Scalar> Process for FtercNode<S> {
    type Msg = Payload<S>;

    fn send(&self, _ctx: &RoundCtx, out: &mut Outbox<'_, Payload<S>>) {
        out.broadcast(Payload {
            ratio: self.ratio.message(),
            max: self.max_value,
            ftdt: self.term.as_ref().map(TerminationState::message),
        });
    }

    fn receive(&mut self, ctx: &RoundCtx, inbox: &Inbox<Payload<S>>) -> Result<()> {
        self.last_round = ctx.label.sub_round;
        if !self.ratio_frozen {
            let msgs = inbox.project(|m| Some(&m.ratio));
            let cached = self.x_cache.get(self.ratio.round() + 1);
            ratio_step_with(&mut self.ratio, self.id, &self.weights, &msgs, cached)?;
            if let Some(det) = self.detector.as_mut() {
                let t = self.ratio.round();
                match det.feed(&self.ratio.sample(t))? {
                    Feed::Found | Feed::Degenerate => {
                        self.learned = det.learned().cloned();
                        if let Some(term) = self.term.as_mut() {
                            ftdt::freeze_counter(
                                term,
                                self.id,
                                self.learned.as_ref().expect("set").m,
                            )?;
                        }
                    }
                    Feed::Pending | Feed::Done => {}
                }
            }
        }
        if let Some(v) = self.max_value {
            let msgs = inbox.project(|m| m.max);
            self.max_value = Some(max_consensus_step(v, self.id, &self.in_neighbors, &msgs)?);
        }
        if let Some(term) = self.term.as_mut() {
            let before = term.theta;
            let msgs = inbox.project(|m| m.ftdt);
            ftdt::ftdt_step(term, self.id, &self.in_neighbors, &msgs)?;
            if self.outcome.is_some() && term.theta != before {
                return Err(Error::ProtocolViolation(alloc::format!(
                    "node {}: relay maximum changed after termination",
                    self.id
                )));
            }
            let round = ctx.label.sub_round;
            if let Some(t) = ftdt::check_termination(term, round) {
                self.settle(Some(t), round)?;
            } else if self.outcome.is_none()
                && term.frozen.is_some()
                && round + 1 == 2 * term.theta as usize
            {
                self.settle(None, round)?;
            }
        }
        Ok(())
    }

    fn digest(&self) -> u64 {
        digest_with(|h| {
            use core::hash::Hasher;
            for v in self
                .ratio
                .y
                .last()
                .into_iter()
                .flatten()
                .chain(self.ratio.x.last())
            {
                v.hash_into(h);
            }
            h.write_usize(self.ratio.x.len());
            if let Some(l) = &self.learned {
                h.write_usize(l.m);
                for b in &l.beta {
                    b.hash_into(h);
                }
            }
            if let Some(v) = self.max_value {
                h.write_u64(v);
            }
            if let Some(t) = &self.term {
                for v in [t.c, t.r, t.theta] {
                    h.write_u64(v);
                }
            }
        })
    }

    fn is_done(&self) -> bool {
        match self.mode {
            Mode::Ftdt => self
                .outcome
                .is_some_and(|o| self.last_round >= o.stop_round),
            Mode::Learn => self.learned.is_some(),
            Mode::Reuse => self
                .learned
                .as_ref()
                .is_some_and(|l| self.ratio.round() >= l.m),
        }
    }
}

/// Per-node results of a standalone finite-time run.
#[derive(Debug, Clone)]
pub struct FtercReport<S> {
    pub values: Vec<Vec<f64>>,
    pub learned: Vec<Learned<S>>,
    pub rounds: usize,
    /// Restarts with perturbed inputs (floating point only).
    pub restarts: usize,
}

const PERTURBATION: f64 = 1e-9;
const MAX_ATTEMPTS: usize = 3;

/// Deterministic perturbation pattern in `[-0.5, 0.5]`.
pub fn perturbation(node: NodeId, coord: usize, attempt: usize) -> f64 {
    let k = (node * 7919 + coord * 104_729 + attempt * 1_299_709) % 1009;
    k as f64 / 1008.0 - 0.5
}

/// Adds the restart perturbation for `attempt` to every seed.
pub fn perturb_seeds(seeds: &[Vec<f64>], attempt: usize) -> Vec<Vec<f64>> {
    seeds
        .iter()
        .enumerate()
        .map(|(j, s)| {
            s.iter()
                .enumerate()
                .map(|(c, v)| v + PERTURBATION * perturbation(j, c, attempt))
                .collect()
        })
        .collect()
}

/// Runs detection on every node for `rounds` rounds (`2n` suffices) and
/// extrapolates. In floating point a failed detection restarts from
/// perturbed seeds, at most three times.
pub fn fterc_average<S: Scalar>(
    g: &Digraph,
    seeds: &[Vec<f64>],
    rounds: usize,
    tol: &Tolerances,
) -> Result<FtercReport<S>> {
    let mut attempt = 0;
    loop {
        let input = if attempt == 0 {
            seeds.to_vec()
        } else {
            perturb_seeds(seeds, attempt)
        };
        match fterc_once::<S>(g, &input, rounds, tol) {
            Ok(mut r) => {
                r.restarts = attempt;
                return Ok(r);
            }
            Err(e @ (Error::NumericBreakdown { .. } | Error::NoDefect { .. })) => {
                attempt += 1;
                if S::NAME != "f64" || attempt >= MAX_ATTEMPTS {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

fn fterc_once<S: Scalar>(
    g: &Digraph,
    seeds: &[Vec<f64>],
    rounds: usize,
    tol: &Tolerances,
) -> Result<FtercReport<S>> {
    let w = WeightMatrix::ratio_weights(g);
    let nodes = (0..g.node_count())
        .map(|j| {
            let mut node = FtercNode::<S>::new(g, &w, j, *tol);
            node.begin_learning(&seeds[j]);
            node
        })
        .collect();
    let mut net = Network::new(g.clone(), nodes)?;
    net.run_phase(0, Phase::Free, rounds)?;
    let mut values = Vec::with_capacity(g.node_count());
    let mut learned = Vec::with_capacity(g.node_count());
    for node in net.nodes() {
        values.push(node.result()?);
        learned.push(node.learned().cloned().expect("result() checked"));
    }
    Ok(FtercReport {
        values,
        learned,
        rounds,
        restarts: 0,
    })
}

/// Message of the ε-consensus baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonMsg {
    pub ratio: RatioMsg<f64>,
    pub hi: Vec<f64>,
    pub lo: Vec<f64>,
}

/// Ratio consensus stopped by a windowed max/min spread check: every
/// `window` rounds the network knows the spread of the ratios at the start
/// of the window, and stops once it is at most `ε`.
#[derive(Debug, Clone)]
pub struct EpsilonNode {
    id: NodeId,
    weights: InWeights,
    in_neighbors: Vec<NodeId>,
    window: usize,
    eps: f64,
    ratio: RatioState<f64>,
    hi: Vec<f64>,
    lo: Vec<f64>,
    pos: usize,
    done_after: Option<usize>,
    rounds: usize,
}

impl EpsilonNode {
    pub fn new(g: &Digraph, w: &WeightMatrix, id: NodeId, window: usize, eps: f64) -> Self {
        Self {
            id,
            weights: InWeights::new(g, w, id),
            in_neighbors: g.in_neighbors(id).to_vec(),
            window,
            eps,
            ratio: RatioState::new(vec![]),
            hi: vec![],
            lo: vec![],
            pos: 0,
            done_after: None,
            rounds: 0,
        }
    }

    pub fn begin(&mut self, seed: &[f64]) {
        self.ratio = RatioState::new(seed.to_vec());
        self.hi = seed.to_vec();
        self.lo = seed.to_vec();
        self.pos = 0;
        self.rounds = 0;
        self.done_after = None;
        self.close_window_if_due();
    }

    fn close_window_if_due(&mut self) {
        if self.pos < self.window {
            return;
        }
        let spread = self
            .hi
            .iter()
            .zip(&self.lo)
            .fold(0.0f64, |m, (h, l)| m.max(h - l));
        if spread <= self.eps {
            self.done_after = Some(self.rounds);
        } else {
            let r = self.ratio.ratio();
            self.hi.clone_from(&r);
            self.lo = r;
            self.pos = 0;
        }
    }

    pub fn value(&self) -> Vec<f64> {
        self.ratio.ratio()
    }

    pub fn rounds_used(&self) -> Option<usize> {
        self.done_after
    }
}

impl Process for EpsilonNode {
    type Msg = EpsilonMsg;

    fn send(&self, _ctx: &RoundCtx, out: &mut Outbox<'_, EpsilonMsg>) {
        out.broadcast(EpsilonMsg {
            ratio: self.ratio.message(),
            hi: self.hi.clone(),
            lo: self.lo.clone(),
        });
    }

    fn receive(&mut self, _ctx: &RoundCtx, inbox: &Inbox<EpsilonMsg>) -> Result<()> {
        if self.done_after.is_some() {
            return Ok(());
        }
        let ratio_msgs = inbox.project(|m| Some(&m.ratio));
        ratio_step(&mut self.ratio, self.id, &self.weights, &ratio_msgs)?;
        let mut his = Vec::with_capacity(self.in_neighbors.len());
        let mut los = Vec::with_capacity(self.in_neighbors.len());
        for &from in &self.in_neighbors {
            let m = inbox.get(from).ok_or(Error::MissingMessage {
                node: self.id,
                from,
            })?;
            his.push(m.hi.as_slice());
            los.push(m.lo.as_slice());
        }
        extremum_step(&mut self.hi, &his, true);
        extremum_step(&mut self.lo, &los, false);
        self.rounds += 1;
        self.pos += 1;
        self.close_window_if_due();
        Ok(())
    }

    fn digest(&self) -> u64 {
        digest_with(|h| {
            use core::hash::Hasher;
            for v in self
                .ratio
                .y
                .last()
                .into_iter()
                .flatten()
                .chain(self.ratio.x.last())
                .chain(&self.hi)
                .chain(&self.lo)
            {
                h.write_u64(v.to_bits());
            }
            h.write_usize(self.rounds);
        })
    }

    fn is_done(&self) -> bool {
        self.done_after.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub values: Vec<Vec<f64>>,
    pub rounds: usize,
}

/// Baseline consensus up to spread `ε`, certified every `diameter` rounds.
pub fn epsilon_consensus(
    g: &Digraph,
    seeds: &[Vec<f64>],
    eps: f64,
    max_rounds: usize,
) -> Result<EpsilonReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let window = g.diameter()?;
    let w = WeightMatrix::ratio_weights(g);
    let nodes = (0..g.node_count())
        .map(|j| {
            let mut node = EpsilonNode::new(g, &w, j, window, eps);
            node.begin(&seeds[j]);
            node
        })
        .collect();
    let mut net = Network::new(g.clone(), nodes)?;
    let rounds =
        net.run_until_done(0, Phase::Epsilon, max_rounds)?
            .ok_or(Error::MaxIterations {
                iterations: max_rounds,
                residual: f64::NAN,
            })?;
    Ok(EpsilonReport {
        values: net.nodes().iter().map(EpsilonNode::value).collect(),
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    fn three_cycle() -> Digraph {
        Digraph::new(3, &[(1, 0), (2, 1), (0, 2)]).unwrap()
    }

    fn run_ratio<S: Scalar>(g: &Digraph, y0: &[Vec<f64>], rounds: usize) -> Vec<RatioState<S>> {
        let w = WeightMatrix::ratio_weights(g);
        let ws: Vec<InWeights> = (0..g.node_count())
            .map(|j| InWeights::new(g, &w, j))
            .collect();
        let mut st: Vec<RatioState<S>> = y0.iter().map(|v| RatioState::from_f64(v)).collect();
        for _ in 0..rounds {
            let msgs: Vec<RatioMsg<S>> = st.iter().map(RatioState::message).collect();
            for j in 0..g.node_count() {
                let inbox: Vec<(NodeId, &RatioMsg<S>)> =
                    g.in_neighbors(j).iter().map(|&i| (i, &msgs[i])).collect();
                ratio_step(&mut st[j], j, &ws[j], &inbox).unwrap();
            }
        }
        st
    }

    #[test]
    fn single_node_is_static() {
        let g = Digraph::new(1, &[]).unwrap();
        let st = run_ratio::<f64>(&g, &[vec![7.0]], 5);
        assert!(st[0].y.iter().all(|v| v[0] == 7.0));
        assert!(st[0].x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn three_cycle_first_step() {
        let st = run_ratio::<f64>(&three_cycle(), &[vec![1.0], vec![2.0], vec![3.0]], 1);
        let y1: Vec<f64> = st.iter().map(|s| s.y[1][0]).collect();
        assert_eq!(y1, vec![2.0, 1.5, 2.5]);
    }

    #[test]
    fn mass_is_conserved_exactly() {
        let g = Digraph::random_strongly_connected(8, 0.3, 2);
        let y0: Vec<Vec<f64>> = (0..8).map(|j| vec![j as f64 * 0.37 - 1.0]).collect();
        let st = run_ratio::<Exact>(&g, &y0, 12);
        let total0 = st.iter().fold(Exact::zero(), |a, s| a.add(&s.y[0][0]));
        for t in 0..=12 {
            let tot = st.iter().fold(Exact::zero(), |a, s| a.add(&s.y[t][0]));
            assert_eq!(tot, total0);
            let xs = st.iter().fold(Exact::zero(), |a, s| a.add(&s.x[t]));
            assert_eq!(xs, Exact::from(8));
        }
    }

    #[test]
    fn missing_message_is_reported() {
        let g = three_cycle();
        let w = WeightMatrix::ratio_weights(&g);
        let mut st = RatioState::<f64>::from_f64(&[1.0]);
        let err = ratio_step(&mut st, 0, &InWeights::new(&g, &w, 0), &[]);
        assert_eq!(err, Err(Error::MissingMessage { node: 0, from: 2 }));
    }

    #[test]
    fn max_consensus_on_cycle() {
        let g = three_cycle();
        let mut v = vec![5u64, 1, 1];
        for _ in 0..2 {
            let prev = v.clone();
            for j in 0..3 {
                let inbox: Vec<(NodeId, u64)> =
                    g.in_neighbors(j).iter().map(|&i| (i, prev[i])).collect();
                v[j] = max_consensus_step(prev[j], j, g.in_neighbors(j), &inbox).unwrap();
            }
        }
        assert_eq!(v, vec![5, 5, 5]);
        assert_eq!(max_consensus_step(3u64, 0, &[], &[]).unwrap(), 3);
    }

    #[test]
    fn constant_sequence_is_degenerate() {
        let s = vec![4.0f64; 6];
        assert_eq!(
            find_defect(&s, &Tolerances::default()),
            Err(Error::DegenerateSequence)
        );
        let ones = vec![Exact::one(); 4];
        assert_eq!(
            find_defect(&ones, &Tolerances::default()),
            Err(Error::DegenerateSequence)
        );
    }

    #[test]
    fn fterc_on_three_cycle() {
        let g = three_cycle();
        let seeds = vec![vec![1.0], vec![2.0], vec![3.0]];
        let exact = fterc_average::<Exact>(&g, &seeds, 6, &Tolerances::default()).unwrap();
        assert!(exact.values.iter().all(|v| v == &vec![2.0]));
        let float = fterc_average::<f64>(&g, &seeds, 6, &Tolerances::default()).unwrap();
        assert!(float.values.iter().all(|v| (v[0] - 2.0).abs() < 1e-12));
    }

    #[test]
    fn constant_input_returns_the_constant() {
        let g = Digraph::random_strongly_connected(5, 0.4, 9);
        let seeds = vec![vec![3.25, -1.0]; 5];
        let r = fterc_average::<Exact>(&g, &seeds, 10, &Tolerances::default()).unwrap();
        assert!(r.values.iter().all(|v| v == &vec![3.25, -1.0]));
    }

    #[test]
    fn single_node_fterc() {
        let g = Digraph::new(1, &[]).unwrap();
        let r = fterc_average::<Exact>(&g, &[vec![7.0]], 2, &Tolerances::default()).unwrap();
        assert_eq!(r.values, vec![vec![7.0]]);
        assert_eq!(r.learned[0].m, 0);
    }

    #[test]
    fn final_values_ratio_matches_fterc() {
        let g = Digraph::random_strongly_connected(6, 0.3, 4);
        let seeds: Vec<Vec<f64>> = (0..6).map(|j| vec![(j * j) as f64 - 3.0]).collect();
        let r = fterc_average::<Exact>(&g, &seeds, 12, &Tolerances::default()).unwrap();
        let st = run_ratio::<Exact>(&g, &seeds, 12);
        let tol = Tolerances::default();
        for j in 0..6 {
            let l = &r.learned[j];
            let ys: Vec<Exact> = st[j].y.iter().map(|v| v[0].clone()).collect();
            let phi_y = final_values(&ys, &l.beta, j, &tol).unwrap();
            let phi_x = final_values(&st[j].x, &l.beta, j, &tol).unwrap();
            let direct = fterc_final(&st[j].y, &st[j].x, &l.beta, j, &tol).unwrap();
            assert_eq!(phi_y.div(&phi_x), direct[0]);
        }
    }

    #[test]
    fn epsilon_baseline() {
        let g = three_cycle();
        let r = epsilon_consensus(&g, &[vec![1.0], vec![2.0], vec![3.0]], 0.01, 10_000).unwrap();
        assert!(r.values.iter().all(|v| (v[0] - 2.0).abs() <= 0.01));
        let same = epsilon_consensus(&g, &vec![vec![4.0]; 3], 0.01, 10_000).unwrap();
        assert_eq!(same.rounds, g.diameter().unwrap());
        let lone =
            epsilon_consensus(&Digraph::new(1, &[]).unwrap(), &[vec![4.0]], 0.01, 10).unwrap();
        assert_eq!(lone.rounds, 0);
    }

    #[test]
    fn epsilon_rounds_are_monotone() {
        let g = Digraph::random_strongly_connected(10, 0.2, 17);
        let seeds: Vec<Vec<f64>> = (0..10).map(|j| vec![libm::sin(j as f64)]).collect();
        let loose = epsilon_consensus(&g, &seeds, 0.1, 100_000).unwrap();
        let tight = epsilon_consensus(&g, &seeds, 0.001, 100_000).unwrap();
        assert!(tight.rounds >= loose.rounds);
        let spread = |v: &[Vec<f64>]| {
            let (lo, hi) = v
                .iter()
                .fold((f64::MAX, f64::MIN), |(l, h), x| (l.min(x[0]), h.max(x[0])));
            hi - lo
        };
        assert!(spread(&tight.values) <= 0.001);
    }

    #[test]
    fn late_node_leaves_at_the_common_round() {
        // Node 1 sits far from the nodes with the largest defect and would
        // terminate one round after t1.
        let g = Digraph::random_strongly_connected(7, 0.2, 1005);
        let w = WeightMatrix::ratio_weights(&g);
        let nodes = (0..7)
            .map(|j| {
                let mut node = FtercNode::<Exact>::new(&g, &w, j, Tolerances::default());
                node.begin_ftdt(&[libm::sin(j as f64 * 0.37)]);
                node
            })
            .collect();
        let mut net = Network::new(g, nodes).unwrap();
        let rounds = net.run_until_done(1, Phase::Ftdt, 40).unwrap();
        let outcomes: Vec<FtdtOutcome> = net.nodes().iter().map(|v| v.ftdt_outcome().unwrap()).collect();
        assert_eq!(rounds, Some(27));
        assert!(outcomes.iter().all(|o| o.m_max == 6 && o.stop_round == 27));
        assert_eq!(outcomes[1].t_term, None);
        assert!(outcomes.iter().filter(|o| o.t_term.is_some()).all(|o| o.t_term.unwrap() <= 27));
    }

}
