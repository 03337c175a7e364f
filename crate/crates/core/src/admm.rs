// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Distributed consensus ADMM.
//!
//! Each node `i` holds `x_i`, a copy `z_i` of the consensus variable and an
//! unscaled multiplier `λ_i`. One step is
//!
//! ```text
//! x_i ← argmin f_i(x) + λ_iᵀx + (ρ/2)‖x − z_i‖²
//! z_i ← prox_g(average of x_j + λ_j/ρ)        (network consensus)
//! λ_i ← λ_i + ρ(x_i − z_i)
//! ```
//!
//! where the average comes from finite-time ratio consensus, so every node
//! ends up with the same `z`. Three schedules are provided: a known size
//! bound `n′` ([`run_dadmm_fterc`]), distributed termination with no size
//! knowledge ([`run_fdadmm_ftdt`]) and an ε-consensus baseline
//! ([`run_epsilon_baseline`]).

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::consensus::{perturb_seeds, EpsilonNode, FtdtOutcome, FtercNode};
use crate::error::{Error, Result};
use crate::graph::{Digraph, WeightMatrix};
use crate::linalg::{axpy, dist2, dot, norm2};
use crate::netsim::{Network, Phase, RoundLog};
use crate::objectives::{uniform_vec, L1Regularizer, LocalObjective};
use crate::scalar::{Exact, Scalar, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Algorithm {
    /// Known size bound `n′`: learn for `2n′` rounds, agree on `t_max`
    /// in `n′` rounds, then `t_max` rounds per step.
    DadmmFterc,
    /// Distributed termination in step 1, then `t_max` rounds per step.
    FdadmmFtdt,
    /// Windowed ε-consensus every step.
    EpsilonBaseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DadmmFterc => "dadmm_fterc",
            Algorithm::FdadmmFtdt => "fdadmm_ftdt",
            Algorithm::EpsilonBaseline => "epsilon_baseline",
        }
    }
}

/// Initial `x⁰, z⁰, λ⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Init {
    /// Independent uniform draws in `(-1, 1)`.
    Random {
        seed: u64,
    },
    Zero,
}

/// Number type used inside the consensus iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Arithmetic {
    Exact,
    Float,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdmmConfig {
    pub rho: f64,
    pub k_max: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Upper bound on the node count; Algorithm 1 only.
    pub n_prime: Option<usize>,
    pub init: Init,
    pub arithmetic: Arithmetic,
    pub tolerances: Tolerances,
    /// Stop as soon as the residual test passes. When off, run `k_max` steps.
    pub stop_on_criterion: bool,
    pub cache_denominators: bool,
    /// Agreement level of the ε-consensus baseline.
    pub epsilon: f64,
    /// Round cap for a single ε-consensus run.
    pub epsilon_max_rounds: usize,
    pub parallel: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            k_max: 500,
            eps_abs: 1e-4,
            eps_rel: 1e-2,
            n_prime: None,
            init: Init::Random { seed: 0 },
            arithmetic: Arithmetic::Exact,
            tolerances: Tolerances::default(),
            stop_on_criterion: true,
            cache_denominators: false,
            epsilon: 0.01,
            epsilon_max_rounds: 100_000,
            parallel: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self, n: usize, algorithm: Algorithm) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be positive and finite, got {}", self.rho));
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        if !(self.eps_abs >= 0.0) || !(self.eps_rel >= 0.0) {
            return bad("stopping tolerances must be nonnegative".into());
        }
        match (algorithm, self.n_prime) {
            (Algorithm::DadmmFterc, None) => return bad("dadmm_fterc needs n_prime".into()),
            (_, Some(np)) if np < n => {
                return bad(format!("n_prime = {np} is below the node count {n}"))
            }
            _ => {}
        }
        if algorithm == Algorithm::EpsilonBaseline && !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Local objectives plus an optional common regularizer `g(z)`.
#[derive(Debug)]
pub struct Problem {
    pub locals: Vec<Box<dyn LocalObjective>>,
    pub regularizer: Option<L1Regularizer>,
}

impl Problem {
    pub fn new(
        locals: Vec<Box<dyn LocalObjective>>,
        regularizer: Option<L1Regularizer>,
    ) -> Result<Self> {
        let Some(first) = locals.first() else {
            return Err(Error::InvalidConfig("problem has no nodes".into()));
        };
        let p = first.dim();
        if let Some(f) = locals.iter().find(|f| f.dim() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: f.dim(),
            });
        }
        Ok(Self {
            locals,
            regularizer,
        })
    }

    pub fn node_count(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.locals[0].dim()
    }

    /// `Σ f_i(x_i) + g(z)`.
    pub fn objective(&self, x: &[Vec<f64>], z: &[f64]) -> f64 {
        let f: f64 = self.locals.iter().zip(x).map(|(f, x)| f.evaluate(x)).sum();
        f + self.regularizer.map_or(0.0, |g| g.evaluate(z))
    }

    /// Objective at the consensus point `x_i = z` for all `i`.
    pub fn consensus_objective(&self, z: &[f64]) -> f64 {
        let f: f64 = self.locals.iter().map(|f| f.evaluate(z)).sum();
        f + self.regularizer.map_or(0.0, |g| g.evaluate(z))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeAdmmState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Stacked iterates `X, Z, Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

impl Iterate {
    fn of(states: &[NodeAdmmState]) -> Self {
        Self {
            x: states.iter().map(|s| s.x.clone()).collect(),
            z: states.iter().map(|s| s.z.clone()).collect(),
            lambda: states.iter().map(|s| s.lambda.clone()).collect(),
        }
    }

    /// Mean of the `z_i`.
    pub fn z_mean(&self) -> Vec<f64> {
        crate::oracle::exact_average(&self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub iterate: Iterate,
    /// `Σ f_i(x_i^k) + g(z̄^k)`.
    pub objective: f64,
    /// `Σ f_i(z̄^k) + g(z̄^k)`.
    pub consensus_objective: f64,
    /// `‖X^k − Z^k‖`
    pub primal_res: f64,
    /// `ρ‖Z^k − Z^{k−1}‖`
    pub dual_res: f64,
    pub consensus_rounds: usize,
    pub bound_lhs: Option<f64>,
    pub bound_rhs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub rho: f64,
    pub initial: Iterate,
    pub steps: Vec<StepRecord>,
    pub log: RoundLog,
    /// Steady-state rounds per step (none for the baseline).
    pub t_max: Option<usize>,
    /// Per-node defects `M_i` learned in step 1.
    pub defects: Vec<usize>,
    /// Per-node termination outcomes (distributed termination only).
    pub ftdt: Vec<FtdtOutcome>,
    pub converged: bool,
    /// Perturbed restarts of step 1 (floating point only).
    pub restarts: usize,
}

impl RunRecord {
    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    pub fn node_count(&self) -> usize {
        self.initial.x.len()
    }

    pub fn dim(&self) -> usize {
        self.initial.x.first().map_or(0, Vec::len)
    }
}

/// `x_i = argmin f_i(x) + λᵀx + (ρ/2)‖x − z‖²`.
pub fn x_update(f: &dyn LocalObjective, z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>> {
    f.solve_x_update(z, lambda, rho)
}

/// `λ + ρ(x − z)`.
pub fn lambda_update(x: &[f64], z: &[f64], lambda: &[f64], rho: f64) -> Vec<f64> {
    lambda
        .iter()
        .zip(x.iter().zip(z))
        .map(|(l, (x, z))| l + rho * (x - z))
        .collect()
}

/// Source of network averages for the z update.
pub trait AveragingEngine {
    /// Per-node averages of `seeds` for ADMM step `k`, and the rounds used.
    fn average(&mut self, k: usize, seeds: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, usize)>;
    fn log(&self) -> &RoundLog;
}

/// Seeds every node with `x_i + λ_i/ρ`, averages over the network and
/// applies the regularizer's proximal map. Returns the rounds used.
pub fn z_update_consensus(
    states: &mut [NodeAdmmState],
    problem: &Problem,
    engine: &mut dyn AveragingEngine,
    k: usize,
    rho: f64,
) -> Result<usize> {
    let seeds: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            s.x.iter()
                .zip(&s.lambda)
                .map(|(x, l)| x + l / rho)
                .collect()
        })
        .collect();
    let (avgs, rounds) = engine.average(k, &seeds)?;
    let n = states.len();
    for (s, avg) in states.iter_mut().zip(avgs) {
        s.z = match problem.regularizer {
            Some(g) => g.z_update(&avg, n, rho),
            None => avg,
        };
    }
    Ok(rounds)
}

/// Residual test on the last recorded step, with `√(np)` scaling of the
/// absolute tolerance.
pub fn stopping_criterion(record: &RunRecord, config: &AdmmConfig) -> bool {
    record
        .steps
        .last()
        .is_some_and(|last| residuals_converged(last, record.node_count() * record.dim(), config))
}

fn residuals_converged(step: &StepRecord, np: usize, config: &AdmmConfig) -> bool {
    let it = &step.iterate;
    let scale = libm::sqrt(np as f64) * config.eps_abs;
    let primal_tol = scale + config.eps_rel * stacked_norm(&it.x).max(stacked_norm(&it.z));
    let dual_tol = scale + config.eps_rel * stacked_norm(&it.lambda);
    step.primal_res <= primal_tol && step.dual_res <= dual_tol
}

fn sq(v: f64) -> f64 {
    v * v
}

fn stacked_norm(v: &[Vec<f64>]) -> f64 {
    libm::sqrt(v.iter().map(|b| dot(b, b)).sum())
}

fn stacked_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(a, b)| sq(dist2(a, b))).sum())
}

/// `X̄^k = (1/k) Σ_{s=1}^{k} X^s` and likewise for `Z`.
pub fn ergodic_averages(record: &RunRecord, k: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    assert!(k >= 1 && k <= record.steps.len(), "k out of range");
    let n = record.node_count();
    let p = record.dim();
    let mut x = vec![vec![0.0; p]; n];
    let mut z = vec![vec![0.0; p]; n];
    for s in &record.steps[..k] {
        for i in 0..n {
            axpy(1.0, &s.iterate.x[i], &mut x[i]);
            axpy(1.0, &s.iterate.z[i], &mut z[i]);
        }
    }
    let inv = 1.0 / k as f64;
    for v in x.iter_mut().chain(z.iter_mut()) {
        v.iter_mut().for_each(|e| *e *= inv);
    }
    (x, z)
}

/// Both sides of the ergodic bound at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub k: usize,
    /// `L(X̄^k, Z̄^k, λ*) − L(X*, Z*, λ*)`
    pub lhs: f64,
    /// `((1/2ρ)‖λ* − λ⁰‖² + (ρ/2)‖X* − Z⁰‖²) / k`
    pub rhs: f64,
}

impl BoundCheck {
    /// Margin of `0 ≤ lhs`.
    pub fn lower_margin(&self) -> f64 {
        self.lhs
    }

    /// Margin of `lhs ≤ rhs`.
    pub fn upper_margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn min_margin(&self) -> f64 {
        self.lower_margin().min(self.upper_margin())
    }
}

/// Evaluates the O(1/k) ergodic bound at every recorded step, with the
/// Lagrangian `L(X, Z, λ) = Σ f_i(x_i) + g(z̄) + Σ λ_iᵀ(x_i − z_i)` (the
/// consensus indicator vanishes since every `Z^k` is consensual).
pub fn check_o1k_bound(
    record: &RunRecord,
    problem: &Problem,
    lambda_star: &[Vec<f64>],
    x_star: &[f64],
    rho: f64,
) -> Vec<BoundCheck> {
    let n = record.node_count();
    let x_star_stack = vec![x_star.to_vec(); n];
    let lagrangian = |x: &[Vec<f64>], z: &[Vec<f64>]| {
        let coupling: f64 = (0..n)
            .map(|i| dot(&lambda_star[i], &x[i]) - dot(&lambda_star[i], &z[i]))
            .sum();
        problem.objective(x, &crate::oracle::exact_average(z)) + coupling
    };
    let l_star = lagrangian(&x_star_stack, &x_star_stack);
    let r0 = sq(stacked_dist(lambda_star, &record.initial.lambda)) / (2.0 * rho)
        + 0.5 * rho * sq(stacked_dist(&x_star_stack, &record.initial.z));
    // Running sums keep this linear in the number of steps.
    let p = record.dim();
    let mut sx = vec![vec![0.0; p]; n];
    let mut sz = vec![vec![0.0; p]; n];
    record
        .steps
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let k = idx + 1;
            for i in 0..n {
                axpy(1.0, &s.iterate.x[i], &mut sx[i]);
                axpy(1.0, &s.iterate.z[i], &mut sz[i]);
            }
            let inv = 1.0 / k as f64;
            let xb: Vec<Vec<f64>> = sx
                .iter()
                .map(|v| v.iter().map(|e| e * inv).collect())
                .collect();
            let zb: Vec<Vec<f64>> = sz
                .iter()
                .map(|v| v.iter().map(|e| e * inv).collect())
                .collect();
            BoundCheck {
                k,
                lhs: lagrangian(&xb, &zb) - l_star,
                rhs: r0 / k as f64,
            }
        })
        .collect()
}

/// Fills `bound_lhs` / `bound_rhs` of every step.
pub fn attach_bound(
    record: &mut RunRecord,
    problem: &Problem,
    lambda_star: &[Vec<f64>],
    x_star: &[f64],
) {
    let checks = check_o1k_bound(record, problem, lambda_star, x_star, record.rho);
    for (s, c) in record.steps.iter_mut().zip(checks) {
        s.bound_lhs = Some(c.lhs);
        s.bound_rhs = Some(c.rhs);
    }
}

/// Errors below this are treated as converged to machine precision.
pub const PROBE_FLOOR: f64 = 1e-12;
pub const PROBE_MIN_POINTS: usize = 10;

/// `‖X^k − 𝟙⊗x*‖` for every step.
pub fn distance_to(record: &RunRecord, x_star: &[f64]) -> Vec<f64> {
    record
        .steps
        .iter()
        .map(|s| libm::sqrt(s.iterate.x.iter().map(|x| sq(dist2(x, x_star))).sum()))
        .collect()
}

/// Least-squares slope of `log10 e_k` against `k` over the tail half of the
/// points above [`PROBE_FLOOR`].
pub fn tail_slope(errors: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > PROBE_FLOOR)
        .map(|(i, &e)| ((i + 1) as f64, libm::log10(e)))
        .collect();
    if pts.len() < PROBE_MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: PROBE_MIN_POINTS,
            found: pts.len(),
        });
    }
    let tail = &pts[pts.len() / 2..];
    let m = tail.len() as f64;
    let (sx, sy) = tail
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = tail.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    Ok(if sxx == 0.0 { 0.0 } else { sxy / sxx })
}

/// Tail slope of `log10 ‖X^k − X*‖`.
pub fn rlinear_probe(record: &RunRecord, x_star: &[f64]) -> Result<f64> {
    tail_slope(&distance_to(record, x_star))
}

fn initial_states(n: usize, p: usize, init: Init) -> Vec<NodeAdmmState> {
    match init {
        Init::Zero => vec![
            NodeAdmmState {
                x: vec![0.0; p],
                z: vec![0.0; p],
                lambda: vec![0.0; p]
            };
            n
        ],
        Init::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| NodeAdmmState {
                    x: uniform_vec(&mut rng, p),
                    z: uniform_vec(&mut rng, p),
                    lambda: uniform_vec(&mut rng, p),
                })
                .collect()
        }
    }
}

fn x_updates(
    states: &mut [NodeAdmmState],
    problem: &Problem,
    rho: f64,
    parallel: bool,
) -> Result<()> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return states
            .par_iter_mut()
            .zip(problem.locals.par_iter())
            .try_for_each(|(s, f)| {
                s.x = x_update(f.as_ref(), &s.z, &s.lambda, rho)?;
                Ok(())
            });
    }
    let _ = parallel;
    for (s, f) in states.iter_mut().zip(&problem.locals) {
        s.x = x_update(f.as_ref(), &s.z, &s.lambda, rho)?;
    }
    Ok(())
}

/// Consensus-set membership: every `z_i` within `1e-8 (1 + ‖z̄‖)` of the mean.
fn check_consensus(states: &[NodeAdmmState]) -> Result<()> {
    let zs: Vec<Vec<f64>> = states.iter().map(|s| s.z.clone()).collect();
    let mean = crate::oracle::exact_average(&zs);
    let tol = 1e-8 * (1.0 + norm2(&mean));
    match zs.iter().position(|z| dist2(z, &mean) > tol) {
        None => Ok(()),
        Some(node) => Err(Error::NumericBreakdown {
            node,
            detail: "z copy off the consensus set",
        }),
    }
}

fn run_admm(
    problem: &Problem,
    config: &AdmmConfig,
    engine: &mut dyn AveragingEngine,
    require_consensus: bool,
) -> Result<(Iterate, Vec<StepRecord>, bool)> {
    let (n, p) = (problem.node_count(), problem.dim());
    let rho = config.rho;
    let mut states = initial_states(n, p, config.init);
    let initial = Iterate::of(&states);
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut converged = false;
    for k in 1..=config.k_max {
        x_updates(&mut states, problem, rho, config.parallel)?;
        let rounds = z_update_consensus(&mut states, problem, engine, k, rho)?;
        if require_consensus {
            check_consensus(&states)?;
        }
        for s in states.iter_mut() {
            s.lambda = lambda_update(&s.x, &s.z, &s.lambda, rho);
        }
        let iterate = Iterate::of(&states);
        let zbar = iterate.z_mean();
        let prev_z = steps.last().map_or(&initial.z, |s| &s.iterate.z);
        let step = StepRecord {
            k,
            objective: problem.objective(&iterate.x, &zbar),
            consensus_objective: problem.consensus_objective(&zbar),
            primal_res: stacked_dist(&iterate.x, &iterate.z),
            dual_res: rho * stacked_dist(&iterate.z, prev_z),
            consensus_rounds: rounds,
            bound_lhs: None,
            bound_rhs: None,
            iterate,
        };
        let done = residuals_converged(&step, n * p, config);
        steps.push(step);
        if done {
            converged = true;
            if config.stop_on_criterion {
                break;
            }
        }
    }
    Ok((initial, steps, converged))
}

fn check_graph(problem: &Problem, graph: &Digraph) -> Result<()> {
    if graph.node_count() != problem.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            found: problem.node_count(),
        });
    }
    if !graph.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    Ok(())
}

/// Finite-time consensus engine for the two exact schedules.
pub struct FtercEngine<S: Scalar> {
    graph: Digraph,
    weights: WeightMatrix,
    algorithm: Algorithm,
    n_prime: usize,
    config: AdmmConfig,
    net: Network<FtercNode<S>>,
    t_max: Option<usize>,
    defects: Vec<usize>,
    outcomes: Vec<FtdtOutcome>,
    restarts: usize,
}

const MAX_ATTEMPTS: usize = 3;

impl<S: Scalar> FtercEngine<S> {
    pub fn new(graph: &Digraph, algorithm: Algorithm, config: &AdmmConfig) -> Result<Self> {
        let weights = WeightMatrix::ratio_weights(graph);
        let net = fterc_network(graph, &weights, config)?;
        Ok(Self {
            graph: graph.clone(),
            weights,
            algorithm,
            n_prime: config.n_prime.unwrap_or(0),
            config: config.clone(),
            net,
            t_max: None,
            defects: Vec::new(),
            outcomes: Vec::new(),
            restarts: 0,
        })
    }

    pub fn t_max(&self) -> Option<usize> {
        self.t_max
    }

    fn results(&self) -> Result<Vec<Vec<f64>>> {
        self.net.nodes().iter().map(FtercNode::result).collect()
    }

    fn first_step(&mut self, seeds: &[Vec<f64>]) -> Result<usize> {
        let n = self.graph.node_count();
        match self.algorithm {
            Algorithm::DadmmFterc => {
                for (node, s) in self.net.nodes_mut().iter_mut().zip(seeds) {
                    node.begin_learning(s);
                }
                let rounds = 2 * self.n_prime;
                self.net.run_phase(1, Phase::Learn, rounds)?;
                for node in self.net.nodes() {
                    if node.learned().is_none() {
                        return Err(Error::NoDefect {
                            node: node.id(),
                            rounds,
                        });
                    }
                }
                Ok(rounds)
            }
            Algorithm::FdadmmFtdt => {
                for (node, s) in self.net.nodes_mut().iter_mut().zip(seeds) {
                    node.begin_ftdt(s);
                }
                // Simulator-side guard only; nodes never see it.
                let cap = 4 * n + 8;
                let rounds = self
                    .net
                    .run_until_done(1, Phase::Ftdt, cap)?
                    .ok_or_else(|| {
                        let node = self
                            .net
                            .nodes()
                            .iter()
                            .position(|v| v.ftdt_outcome().is_none())
                            .unwrap_or(0);
                        Error::NoDefect { node, rounds: cap }
                    })?;
                self.outcomes = self
                    .net
                    .nodes()
                    .iter()
                    .map(|v| v.ftdt_outcome().expect("done"))
                    .collect();
                let t_max = self.outcomes[0].m_max + 1;
                if let Some(o) = self
                    .outcomes
                    .iter()
                    .find(|o| o.m_max + 1 != t_max || o.stop_round != rounds)
                {
                    return Err(Error::ProtocolViolation(format!(
                        "nodes disagree on the first-step length: {} vs {rounds}",
                        o.stop_round
                    )));
                }
                self.t_max = Some(t_max);
                Ok(rounds)
            }
            Algorithm::EpsilonBaseline => unreachable!("baseline uses its own engine"),
        }
    }

    fn second_step_max_consensus(&mut self, seeds: &[Vec<f64>]) -> Result<usize> {
        for (node, s) in self.net.nodes_mut().iter_mut().zip(seeds) {
            node.begin_reuse(s)?;
            let m = node.learned().expect("reuse checked").m as u64;
            node.set_max(m + 1);
        }
        self.net.run_phase(2, Phase::MaxConsensus, self.n_prime)?;
        let maxes: Vec<u64> = self
            .net
            .nodes()
            .iter()
            .map(|v| v.max_value().expect("set"))
            .collect();
        if maxes.iter().any(|&m| m != maxes[0]) {
            return Err(Error::ProtocolViolation(format!(
                "max-consensus did not settle in {} rounds",
                self.n_prime
            )));
        }
        self.t_max = Some(maxes[0] as usize);
        Ok(self.n_prime)
    }

    fn steady_step(&mut self, k: usize, seeds: &[Vec<f64>]) -> Result<usize> {
        let t_max = self.t_max.expect("learned in an earlier step");
        for (node, s) in self.net.nodes_mut().iter_mut().zip(seeds) {
            node.begin_reuse(s)?;
        }
        self.net.run_phase(k, Phase::Steady, t_max)?;
        Ok(t_max)
    }
}

fn fterc_network<S: Scalar>(
    graph: &Digraph,
    weights: &WeightMatrix,
    config: &AdmmConfig,
) -> Result<Network<FtercNode<S>>> {
    let nodes = (0..graph.node_count())
        .map(|j| {
            let mut node = FtercNode::new(graph, weights, j, config.tolerances);
            node.set_denominator_caching(config.cache_denominators);
            node
        })
        .collect();
    let mut net = Network::new(graph.clone(), nodes)?;
    net.set_parallel(config.parallel);
    Ok(net)
}

impl<S: Scalar> AveragingEngine for FtercEngine<S> {
    fn average(&mut self, k: usize, seeds: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, usize)> {
        let rounds = match (self.algorithm, k) {
            (_, 1) => {
                let mut attempt = 0;
                loop {
                    let input = if attempt == 0 {
                        seeds.to_vec()
                    } else {
                        perturb_seeds(seeds, attempt)
                    };
                    match self.first_step(&input) {
                        Ok(r) => break r,
                        Err(Error::NumericBreakdown { .. } | Error::NoDefect { .. })
                            if S::NAME == "f64" && attempt + 1 < MAX_ATTEMPTS =>
                        {
                            attempt += 1;
                            self.restarts = attempt;
                            self.net = fterc_network(&self.graph, &self.weights, &self.config)?;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            (Algorithm::DadmmFterc, 2) => self.second_step_max_consensus(seeds)?,
            _ => self.steady_step(k, seeds)?,
        };
        if k == 1 {
            self.defects = self
                .net
                .nodes()
                .iter()
                .map(|v| v.learned().expect("learned").m)
                .collect();
        }
        Ok((self.results()?, rounds))
    }

    fn log(&self) -> &RoundLog {
        self.net.log()
    }
}

/// Windowed ε-consensus engine for the baseline.
pub struct EpsilonEngine {
    net: Network<EpsilonNode>,
    max_rounds: usize,
}

impl EpsilonEngine {
    pub fn new(graph: &Digraph, config: &AdmmConfig) -> Result<Self> {
        let window = graph.diameter()?;
        let w = WeightMatrix::ratio_weights(graph);
        let nodes = (0..graph.node_count())
            .map(|j| EpsilonNode::new(graph, &w, j, window, config.epsilon))
            .collect();
        let mut net = Network::new(graph.clone(), nodes)?;
        net.set_parallel(config.parallel);
        Ok(Self {
            net,
            max_rounds: config.epsilon_max_rounds,
        })
    }
}

impl AveragingEngine for EpsilonEngine {
    fn average(&mut self, k: usize, seeds: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, usize)> {
        for (node, s) in self.net.nodes_mut().iter_mut().zip(seeds) {
            node.begin(s);
        }
        let rounds = self
            .net
            .run_until_done(k, Phase::Epsilon, self.max_rounds)?
            .ok_or(Error::MaxIterations {
                iterations: self.max_rounds,
                residual: f64::NAN,
            })?;
        Ok((
            self.net.nodes().iter().map(EpsilonNode::value).collect(),
            rounds,
        ))
    }

    fn log(&self) -> &RoundLog {
        self.net.log()
    }
}

fn run_fterc_schedule(
    problem: &Problem,
    graph: &Digraph,
    config: &AdmmConfig,
    algorithm: Algorithm,
) -> Result<RunRecord> {
    check_graph(problem, graph)?;
    config.validate(problem.node_count(), algorithm)?;
    match config.arithmetic {
        Arithmetic::Exact => run_with::<Exact>(problem, graph, config, algorithm),
        Arithmetic::Float => run_with::<f64>(problem, graph, config, algorithm),
    }
}

fn run_with<S: Scalar>(
    problem: &Problem,
    graph: &Digraph,
    config: &AdmmConfig,
    algorithm: Algorithm,
) -> Result<RunRecord> {
    let mut engine = FtercEngine::<S>::new(graph, algorithm, config)?;
    let (initial, steps, converged) = run_admm(problem, config, &mut engine, true)?;
    Ok(RunRecord {
        algorithm,
        rho: config.rho,
        initial,
        steps,
        log: engine.net.log().clone(),
        t_max: engine.t_max,
        defects: engine.defects,
        ftdt: engine.outcomes,
        converged,
        restarts: engine.restarts,
    })
}

/// Algorithm 1: needs `config.n_prime ≥ n`.
pub fn run_dadmm_fterc(
    problem: &Problem,
    graph: &Digraph,
    config: &AdmmConfig,
) -> Result<RunRecord> {
    run_fterc_schedule(problem, graph, config, Algorithm::DadmmFterc)
}

/// Algorithm 2: ignores `config.n_prime`.
pub fn run_fdadmm_ftdt(
    problem: &Problem,
    graph: &Digraph,
    config: &AdmmConfig,
) -> Result<RunRecord> {
    let config = AdmmConfig {
        n_prime: None,
        ..config.clone()
    };
    run_fterc_schedule(problem, graph, &config, Algorithm::FdadmmFtdt)
}

/// ADMM with ε-consensus z updates. The `z_i` only agree to within `ε`.
pub fn run_epsilon_baseline(
    problem: &Problem,
    graph: &Digraph,
    config: &AdmmConfig,
) -> Result<RunRecord> {
    check_graph(problem, graph)?;
    config.validate(problem.node_count(), Algorithm::EpsilonBaseline)?;
    let mut engine = EpsilonEngine::new(graph, config)?;
    let (initial, steps, converged) = run_admm(problem, config, &mut engine, false)?;
    Ok(RunRecord {
        algorithm: Algorithm::EpsilonBaseline,
        rho: config.rho,
        initial,
        steps,
        log: engine.net.log().clone(),
        t_max: None,
        defects: Vec::new(),
        ftdt: Vec::new(),
        converged,
        restarts: 0,
    })
}

pub fn run(
    algorithm: Algorithm,
    problem: &Problem,
    graph: &Digraph,
    config: &AdmmConfig,
) -> Result<RunRecord> {
    match algorithm {
        Algorithm::DadmmFterc => run_dadmm_fterc(problem, graph, config),
        Algorithm::FdadmmFtdt => run_fdadmm_ftdt(problem, graph, config),
        Algorithm::EpsilonBaseline => run_epsilon_baseline(problem, graph, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::objectives::{boxed, least_squares_instance, LeastSquares, Zero};

    fn three_cycle() -> Digraph {
        Digraph::new(3, &[(1, 0), (2, 1), (0, 2)]).unwrap()
    }

    fn ls_problem(n: usize, seed: u64) -> Problem {
        Problem::new(boxed(least_squares_instance(n, 3, 3, seed)), None).unwrap()
    }

    fn step(k: usize, x: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> StepRecord {
        let n = x.len();
        let p = x[0].len();
        StepRecord {
            k,
            iterate: Iterate {
                x,
                z,
                lambda: vec![vec![0.0; p]; n],
            },
            objective: 0.0,
            consensus_objective: 0.0,
            primal_res: 0.0,
            dual_res: 0.0,
            consensus_rounds: 0,
            bound_lhs: None,
            bound_rhs: None,
        }
    }

    fn record(initial: Iterate, steps: Vec<StepRecord>) -> RunRecord {
        RunRecord {
            algorithm: Algorithm::FdadmmFtdt,
            rho: 1.0,
            initial,
            steps,
            log: RoundLog::default(),
            t_max: None,
            defects: vec![],
            ftdt: vec![],
            converged: false,
            restarts: 0,
        }
    }

    #[test]
    fn x_update_examples() {
        let f = LeastSquares::new(Matrix::identity(1), vec![2.0]).unwrap();
        assert!((x_update(&f, &[0.0], &[0.0], 1.0).unwrap()[0] - 1.0).abs() < 1e-15);
        assert_eq!(
            x_update(&Zero { dim: 2 }, &[0.5, -3.0], &[0.0, 0.0], 1.0).unwrap(),
            vec![0.5, -3.0]
        );
    }

    #[test]
    fn lambda_update_examples() {
        assert_eq!(
            lambda_update(&[1.0, 2.0], &[1.0, 2.0], &[0.3, -0.1], 5.0),
            vec![0.3, -0.1]
        );
        assert_eq!(
            lambda_update(&[1.0, -1.0], &[0.0, 0.0], &[0.0, 0.0], 2.0),
            vec![2.0, -2.0]
        );
        let xs = [[1.0, 0.5], [0.0, 2.0], [-1.0, 1.0]];
        let ls = [[0.1, 0.2], [0.0, -0.3], [0.5, 0.0]];
        let z = [0.25, 0.75];
        let rho = 1.5;
        let new: Vec<Vec<f64>> = (0..3)
            .map(|i| lambda_update(&xs[i], &z, &ls[i], rho))
            .collect();
        for c in 0..2 {
            let before: f64 = ls.iter().map(|l| l[c]).sum();
            let after: f64 = new.iter().map(|l| l[c]).sum();
            let sx: f64 = xs.iter().map(|x| x[c]).sum();
            assert!((after - (before + rho * (sx - 3.0 * z[c]))).abs() < 1e-12);
        }
    }

    #[test]
    fn z_update_on_three_cycle() {
        let g = three_cycle();
        let cfg = AdmmConfig::default();
        let problem = Problem::new(boxed(vec![Zero { dim: 1 }; 3]), None).unwrap();
        let mut engine = FtercEngine::<Exact>::new(&g, Algorithm::FdadmmFtdt, &cfg).unwrap();
        let mut states: Vec<NodeAdmmState> = (1..=3)
            .map(|v| NodeAdmmState {
                x: vec![v as f64],
                z: vec![0.0],
                lambda: vec![0.0],
            })
            .collect();
        z_update_consensus(&mut states, &problem, &mut engine, 1, 1.0).unwrap();
        assert!(states.iter().all(|s| s.z == vec![2.0]));
        // Averaging a consensual vector changes nothing.
        for s in states.iter_mut() {
            s.x.clone_from(&s.z);
        }
        z_update_consensus(&mut states, &problem, &mut engine, 2, 1.0).unwrap();
        assert!(states.iter().all(|s| s.z == vec![2.0]));
        for s in states.iter_mut() {
            s.x = vec![-0.75];
        }
        z_update_consensus(&mut states, &problem, &mut engine, 3, 1.0).unwrap();
        assert!(states.iter().all(|s| s.z == vec![-0.75]));
    }

    #[test]
    fn z_update_applies_soft_threshold() {
        let g = three_cycle();
        let cfg = AdmmConfig::default();
        let reg = L1Regularizer::new(3.0, 0).unwrap();
        let problem = Problem::new(boxed(vec![Zero { dim: 2 }; 3]), Some(reg)).unwrap();
        let mut engine = FtercEngine::<Exact>::new(&g, Algorithm::FdadmmFtdt, &cfg).unwrap();
        let mut states: Vec<NodeAdmmState> = [[3.0, 0.5], [2.0, -0.5], [1.0, 0.3]]
            .iter()
            .map(|v| NodeAdmmState {
                x: v.to_vec(),
                z: vec![0.0; 2],
                lambda: vec![0.0; 2],
            })
            .collect();
        z_update_consensus(&mut states, &problem, &mut engine, 1, 1.0).unwrap();
        // Mean (2, 0.1), threshold 3 / (3 · 1) = 1.
        assert!(states.iter().all(|s| s.z == vec![1.0, 0.0]));
    }

    #[test]
    fn stopping_criterion_examples() {
        let cfg = AdmmConfig::default();
        let x = vec![vec![1.0, 2.0]; 2];
        let mut r = record(
            Iterate {
                x: x.clone(),
                z: x.clone(),
                lambda: vec![vec![0.0; 2]; 2],
            },
            vec![step(1, x.clone(), x.clone())],
        );
        assert!(stopping_criterion(&r, &cfg));
        r.steps[0].primal_res = 10.0;
        r.steps[0].dual_res = 10.0;
        assert!(!stopping_criterion(&r, &cfg));
        r.steps[0].primal_res = 0.05;
        r.steps[0].dual_res = 0.0;
        let mut prev = true;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6] {
            let now = stopping_criterion(
                &r,
                &AdmmConfig {
                    eps_abs: eps,
                    eps_rel: 0.0,
                    ..cfg.clone()
                },
            );
            assert!(prev || !now);
            prev = now;
        }
        assert!(!stopping_criterion(
            &record(r.initial.clone(), vec![]),
            &cfg
        ));
    }

    #[test]
    fn ergodic_average_examples() {
        let init = Iterate {
            x: vec![vec![0.0]],
            z: vec![vec![0.0]],
            lambda: vec![vec![0.0]],
        };
        let r = record(
            init,
            vec![
                step(1, vec![vec![1.0]], vec![vec![4.0]]),
                step(2, vec![vec![3.0]], vec![vec![4.0]]),
            ],
        );
        assert_eq!(ergodic_averages(&r, 1), (vec![vec![1.0]], vec![vec![4.0]]));
        assert_eq!(ergodic_averages(&r, 2), (vec![vec![2.0]], vec![vec![4.0]]));
    }

    #[test]
    fn bound_at_the_optimum_and_zero_start() {
        let problem = ls_problem(2, 3);
        let parts = least_squares_instance(2, 3, 3, 3);
        let reference = crate::oracle::centralized_least_squares(&parts);
        let ls = reference.lambda_star.clone().unwrap();
        let xs = vec![reference.x_star.clone(); 2];
        let zero = Iterate {
            x: vec![vec![0.0; 3]; 2],
            z: vec![vec![0.0; 3]; 2],
            lambda: vec![vec![0.0; 3]; 2],
        };
        let r = record(
            zero,
            vec![step(1, xs.clone(), xs.clone()), step(2, xs.clone(), xs)],
        );
        let rho = 2.0;
        let checks = check_o1k_bound(&r, &problem, &ls, &reference.x_star, rho);
        let lam2: f64 = ls.iter().map(|l| dot(l, l)).sum();
        let x2 = 2.0 * dot(&reference.x_star, &reference.x_star);
        for c in &checks {
            assert!(c.lhs.abs() < 1e-12);
            let want = (lam2 / (2.0 * rho) + 0.5 * rho * x2) / c.k as f64;
            assert!((c.rhs - want).abs() < 1e-12);
            assert!(c.upper_margin() >= 0.0);
        }
    }

    #[test]
    fn tail_slope_examples() {
        let geo: Vec<f64> = (1..=30).map(|k| libm::pow(2.0, -(k as f64))).collect();
        assert!((tail_slope(&geo).unwrap() + libm::log10(2.0)).abs() < 1e-6);
        assert_eq!(tail_slope(&[0.5; 20]).unwrap(), 0.0);
        assert_eq!(
            tail_slope(&[1e-13; 40]),
            Err(Error::InsufficientData {
                needed: 10,
                found: 0
            })
        );
    }

    #[test]
    fn single_node_runs() {
        let g = Digraph::new(1, &[]).unwrap();
        let f = LeastSquares::new(Matrix::identity(2), vec![1.0, -2.0]).unwrap();
        let problem = Problem::new(boxed(vec![f]), None).unwrap();
        let cfg = AdmmConfig {
            n_prime: Some(1),
            k_max: 300,
            ..Default::default()
        };
        let r = run_fdadmm_ftdt(&problem, &g, &cfg).unwrap();
        assert_eq!(r.log.rounds_per_step()[0], (1, 3));
        assert_eq!(r.t_max, Some(1));
        assert!(r.log.rounds_per_step()[1..]
            .iter()
            .all(|&(_, len)| len == 1));
        let a = run_dadmm_fterc(
            &problem,
            &g,
            &AdmmConfig {
                stop_on_criterion: false,
                ..cfg
            },
        )
        .unwrap();
        let last = a.last().unwrap();
        assert!(dist2(&last.iterate.x[0], &[1.0, -2.0]) < 1e-10);
        assert!(dist2(&last.iterate.z[0], &[1.0, -2.0]) < 1e-10);
    }

    #[test]
    fn config_and_graph_validation() {
        let problem = ls_problem(3, 0);
        let g = three_cycle();
        let cfg = AdmmConfig::default();
        assert!(matches!(
            run_dadmm_fterc(&problem, &g, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = AdmmConfig {
            n_prime: Some(2),
            ..cfg
        };
        assert!(matches!(
            run_dadmm_fterc(&problem, &g, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = AdmmConfig {
            n_prime: Some(3),
            rho: 0.0,
            ..cfg
        };
        assert!(matches!(
            run_dadmm_fterc(&problem, &g, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        let path = Digraph::new(3, &[(1, 0), (2, 1)]).unwrap();
        assert_eq!(
            run_fdadmm_ftdt(&problem, &path, &AdmmConfig::default()).unwrap_err(),
            Error::NotStronglyConnected
        );
    }

    #[test]
    fn caching_does_not_change_iterates() {
        let problem = ls_problem(4, 5);
        let g = Digraph::random_strongly_connected(4, 0.3, 5);
        let cfg = AdmmConfig {
            k_max: 15,
            stop_on_criterion: false,
            ..Default::default()
        };
        let a = run_fdadmm_ftdt(&problem, &g, &cfg).unwrap();
        let b = run_fdadmm_ftdt(
            &problem,
            &g,
            &AdmmConfig {
                cache_denominators: true,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn float_backend_tracks_exact() {
        let problem = ls_problem(5, 9);
        let g = Digraph::random_strongly_connected(5, 0.3, 9);
        let cfg = AdmmConfig {
            k_max: 20,
            stop_on_criterion: false,
            ..Default::default()
        };
        let a = run_fdadmm_ftdt(&problem, &g, &cfg).unwrap();
        let b = run_fdadmm_ftdt(
            &problem,
            &g,
            &AdmmConfig {
                arithmetic: Arithmetic::Float,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(a.log.rounds_per_step(), b.log.rounds_per_step());
        let (xa, xb) = (&a.last().unwrap().iterate.x, &b.last().unwrap().iterate.x);
        for i in 0..5 {
            assert!(dist2(&xa[i], &xb[i]) < 1e-6);
        }
    }
}
