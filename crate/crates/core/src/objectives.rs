// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Local objectives `f_i` and the l1 regularizer.
//!
//! Every x update solves `argmin f(x) + λᵀx + (ρ/2)‖x − z‖²` with the
//! unscaled multiplier `λ`. The scaled form `(ρ/2)‖x − z + u‖²` used in some
//! logistic regression write-ups is the same problem with `λ = ρu`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{axpy, cholesky_solve, dot, norm2, Matrix};

/// Subproblem gradient tolerance for iterative x updates.
pub const X_UPDATE_TOL: f64 = 1e-8;
/// Newton iteration budget for iterative x updates.
pub const X_UPDATE_MAX_ITER: usize = 200;

pub trait LocalObjective: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> f64;
    /// `None` for nonsmooth objectives.
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>>;
    fn solve_x_update(&self, z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>>;
}

/// Gradient of the x-update subproblem at `x`.
pub fn subproblem_gradient(
    f: &dyn LocalObjective,
    x: &[f64],
    z: &[f64],
    lambda: &[f64],
    rho: f64,
) -> Option<Vec<f64>> {
    let mut g = f.gradient(x)?;
    for i in 0..g.len() {
        g[i] += lambda[i] + rho * (x[i] - z[i]);
    }
    Some(g)
}

/// `f(x) = ½‖Ax − b‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    a: Matrix,
    b: Vec<f64>,
    gram: Matrix,
    atb: Vec<f64>,
}

impl LeastSquares {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: b.len(),
            });
        }
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "least-squares data must be finite".into(),
            ));
        }
        let gram = a.gram();
        let atb = a.tr_mul_vec(&b);
        Ok(Self { a, b, gram, atb })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `AᵀA`
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// `Aᵀb`
    pub fn atb(&self) -> &[f64] {
        &self.atb
    }
}

impl LocalObjective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let mut r = self.a.mul_vec(x);
        axpy(-1.0, &self.b, &mut r);
        0.5 * dot(&r, &r)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g = self.gram.mul_vec(x);
        axpy(-1.0, &self.atb, &mut g);
        Some(g)
    }

    fn solve_x_update(&self, z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>> {
        ls_solve(&self.gram, &self.atb, z, lambda, rho)
    }
}

/// `(AᵀA + ρI) x = Aᵀb − λ + ρz`.
pub fn ls_x_update(a: &Matrix, b: &[f64], z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>> {
    ls_solve(&a.gram(), &a.tr_mul_vec(b), z, lambda, rho)
}

fn ls_solve(gram: &Matrix, atb: &[f64], z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>> {
    let mut m = gram.clone();
    m.add_diagonal(rho);
    let rhs: Vec<f64> = (0..atb.len())
        .map(|i| atb[i] - lambda[i] + rho * z[i])
        .collect();
    cholesky_solve(&m, &rhs).ok_or(Error::SolverFailure {
        iterations: 0,
        residual: f64::INFINITY,
    })
}

/// `f(x) = Σ log(1 + exp(−b (aᵀw + v)))` with `x = (w, v)`: the intercept is
/// the last coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    features: Matrix,
    labels: Vec<f64>,
}

impl Logistic {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::InvalidConfig(
                "logistic objective needs at least one example".into(),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "labels must be ±1, found {bad}"
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidConfig("features must be finite".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Number of features, excluding the intercept.
    pub fn features_dim(&self) -> usize {
        self.features.cols()
    }

    fn margin(&self, r: usize, x: &[f64]) -> f64 {
        let p = self.features.cols();
        self.labels[r] * (dot(self.features.row(r), &x[..p]) + x[p])
    }

    pub(crate) fn hessian(&self, x: &[f64]) -> Matrix {
        let p = self.features.cols();
        let mut h = Matrix::zeros(p + 1, p + 1);
        for r in 0..self.labels.len() {
            let s = sigmoid(self.margin(r, x));
            let w = s * (1.0 - s);
            let row = self.features.row(r);
            for i in 0..=p {
                let ai = if i < p { row[i] } else { 1.0 };
                for j in 0..=p {
                    let aj = if j < p { row[j] } else { 1.0 };
                    h[(i, j)] += w * ai * aj;
                }
            }
        }
        h
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

impl LocalObjective for Logistic {
    fn dim(&self) -> usize {
        self.features.cols() + 1
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        (0..self.labels.len())
            .map(|r| softplus(-self.margin(r, x)))
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p = self.features.cols();
        let mut g = vec![0.0; p + 1];
        for r in 0..self.labels.len() {
            let c = -self.labels[r] * sigmoid(-self.margin(r, x));
            axpy(c, self.features.row(r), &mut g[..p]);
            g[p] += c;
        }
        Some(g)
    }

    /// Damped Newton with Armijo backtracking, started at `z`.
    fn solve_x_update(&self, z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>> {
        let phi = |x: &[f64]| {
            let prox: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            self.evaluate(x) + dot(lambda, x) + 0.5 * rho * prox
        };
        let mut x = z.to_vec();
        let mut value = phi(&x);
        let mut residual = f64::INFINITY;
        for it in 0..X_UPDATE_MAX_ITER {
            let g = subproblem_gradient(self, &x, z, lambda, rho).expect("smooth");
            residual = norm2(&g);
            if residual <= X_UPDATE_TOL {
                return Ok(x);
            }
            let mut h = self.hessian(&x);
            h.add_diagonal(rho);
            let step = cholesky_solve(&h, &g).ok_or(Error::SolverFailure {
                iterations: it,
                residual,
            })?;
            let slope = dot(&g, &step);
            if slope <= 1e-13 * (1.0 + value.abs()) {
                // The predicted decrease is below rounding: the local quadratic
                // model is exact enough, take the full step.
                axpy(-1.0, &step, &mut x);
                value = phi(&x);
                continue;
            }
            let mut t = 1.0;
            loop {
                let mut trial = x.clone();
                axpy(-t, &step, &mut trial);
                let v = phi(&trial);
                if v <= value - 1e-4 * t * slope || t < 1e-12 {
                    x = trial;
                    value = v;
                    break;
                }
                t *= 0.5;
            }
        }
        Err(Error::SolverFailure {
            iterations: X_UPDATE_MAX_ITER,
            residual,
        })
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zero {
    pub dim: usize,
}

impl LocalObjective for Zero {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }

    fn solve_x_update(&self, z: &[f64], lambda: &[f64], rho: f64) -> Result<Vec<f64>> {
        Ok(z.iter().zip(lambda).map(|(z, l)| z - l / rho).collect())
    }
}

/// `S_κ(a) = sign(a) max(|a| − κ, 0)`, componentwise.
pub fn soft_threshold(a: &[f64], kappa: f64) -> Vec<f64> {
    a.iter().map(|&v| shrink(v, kappa)).collect()
}

fn shrink(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

/// `g(z) = μ‖z_{0..p}‖₁`, where the trailing `unpenalized` coordinates (the
/// intercept) carry no penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Regularizer {
    pub mu: f64,
    pub unpenalized: usize,
}

impl L1Regularizer {
    pub fn new(mu: f64, unpenalized: usize) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "l1 weight must be finite and nonnegative, got {mu}"
            )));
        }
        Ok(Self { mu, unpenalized })
    }

    /// `κ = μ / (nρ)`.
    pub fn threshold(&self, n: usize, rho: f64) -> f64 {
        self.mu / (n as f64 * rho)
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let p = z.len().saturating_sub(self.unpenalized);
        self.mu * z[..p].iter().map(|v| v.abs()).sum::<f64>()
    }

    /// The z update from the exact consensus average `z̄`.
    pub fn z_update(&self, avg: &[f64], n: usize, rho: f64) -> Vec<f64> {
        l1_z_update(avg, self.threshold(n, rho), self.unpenalized)
    }
}

/// Soft-thresholds every coordinate except the trailing `unpenalized` ones.
pub fn l1_z_update(avg: &[f64], kappa: f64, unpenalized: usize) -> Vec<f64> {
    let p = avg.len().saturating_sub(unpenalized);
    avg.iter()
        .enumerate()
        .map(|(i, &v)| if i < p { shrink(v, kappa) } else { v })
        .collect()
}

/// Smallest `μ` for which the pooled l1 logistic problem has a zero
/// feature vector: `‖Σ_i b_i a_i σ(−b_i v₀)‖_∞` where `v₀ = log(m₊/m₋)` is
/// the best intercept-only fit. Zero when one class is empty.
pub fn compute_mu_max(features: &Matrix, labels: &[f64]) -> f64 {
    let m = labels.len() as f64;
    let pos = labels.iter().filter(|&&b| b > 0.0).count() as f64;
    let neg = m - pos;
    if pos == 0.0 || neg == 0.0 {
        return 0.0;
    }
    let mut g = vec![0.0; features.cols()];
    for (r, &b) in labels.iter().enumerate() {
        // σ(−b v₀) is m₋/m for positives and m₊/m for negatives.
        let weight = if b > 0.0 { neg / m } else { -pos / m };
        axpy(weight, features.row(r), &mut g);
    }
    g.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// One local least-squares objective per node with `A_i ∈ R^{q×p}` and
/// `b_i ∈ R^q`, all entries standard normal.
pub fn least_squares_instance(n: usize, p: usize, q: usize, seed: u64) -> Vec<LeastSquares> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a = Matrix::from_fn(q, p, |_, _| StandardNormal.sample(&mut rng));
            let b = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
            LeastSquares::new(a, b).expect("finite data")
        })
        .collect()
}

/// Synthetic pooled classification data.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticData {
    pub features: Matrix,
    pub labels: Vec<f64>,
    pub w_true: Vec<f64>,
    pub v_true: f64,
}

/// Label noise variance.
pub const LABEL_NOISE_VARIANCE: f64 = 0.1;

impl LogisticData {
    /// Examples with no generating model: `w_true` is empty and `v_true` NaN.
    pub fn from_examples(features: Matrix, labels: Vec<f64>) -> Self {
        Self { features, labels, w_true: Vec::new(), v_true: f64::NAN }
    }

    /// `m` examples with standard normal features, `nonzeros` normal entries
    /// in the true weight vector, a normal intercept and labels
    /// `sign(aᵀw + v + noise)`.
    pub fn generate(m: usize, p: usize, nonzeros: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w_true = vec![0.0; p];
        for i in sample(&mut rng, p, nonzeros.min(p)) {
            w_true[i] = StandardNormal.sample(&mut rng);
        }
        let v_true: f64 = StandardNormal.sample(&mut rng);
        let noise = Normal::new(0.0, libm::sqrt(LABEL_NOISE_VARIANCE)).expect("valid");
        let features = Matrix::from_fn(m, p, |_, _| StandardNormal.sample(&mut rng));
        let labels = (0..m)
            .map(|r| {
                let s = dot(features.row(r), &w_true) + v_true + noise.sample(&mut rng);
                if s >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Self {
            features,
            labels,
            w_true,
            v_true,
        }
    }

    /// Deals the examples to `n` nodes in contiguous blocks of near-equal size.
    pub fn split(&self, n: usize) -> Result<Vec<Logistic>> {
        let m = self.labels.len();
        if n == 0 || n > m {
            return Err(Error::InvalidConfig(alloc::format!(
                "cannot split {m} examples over {n} nodes"
            )));
        }
        let p = self.features.cols();
        (0..n)
            .map(|j| {
                let (lo, hi) = (j * m / n, (j + 1) * m / n);
                let features = Matrix::from_fn(hi - lo, p, |r, c| self.features[(lo + r, c)]);
                Logistic::new(features, self.labels[lo..hi].to_vec())
            })
            .collect()
    }

    pub fn mu_max(&self) -> f64 {
        compute_mu_max(&self.features, &self.labels)
    }
}

/// Boxes a list of objectives for the ADMM engine.
pub fn boxed<T: LocalObjective + 'static>(v: Vec<T>) -> Vec<Box<dyn LocalObjective>> {
    v.into_iter()
        .map(|f| Box::new(f) as Box<dyn LocalObjective>)
        .collect()
}

/// Uniform draw in `(-1, 1)` used for random initial iterates.
pub fn uniform_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}
