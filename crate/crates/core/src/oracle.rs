// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Centralized references for tests and bound instrumentation. Nothing here
//! is on the message path of a distributed run.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::linalg::{axpy, cholesky_solve, jacobi_svd, norm2, Matrix};
use crate::objectives::{l1_z_update, LeastSquares, LocalObjective, Logistic};

/// Per-coordinate arithmetic mean.
pub fn exact_average(values: &[Vec<f64>]) -> Vec<f64> {
    let n = values.len() as f64;
    let mut sum = vec![0.0; values.first().map_or(0, Vec::len)];
    for v in values {
        axpy(1.0, v, &mut sum);
    }
    sum.iter().map(|s| s / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NormalEquations,
    /// The normal matrix was singular; a `1e-12` ridge was added.
    RidgedNormalEquations,
    ProximalGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// `λ*_i = −∇f_i(x*)`, one block per node, when the objective is smooth.
    pub lambda_star: Option<Vec<Vec<f64>>>,
    pub method: Method,
    /// Optimality residual reached by the solve.
    pub residual: f64,
}

pub const RIDGE: f64 = 1e-12;

/// Solves `(Σ AᵢᵀAᵢ) x = Σ Aᵢᵀbᵢ`.
pub fn centralized_least_squares(parts: &[LeastSquares]) -> Reference {
    let p = parts[0].dim();
    let mut gram = Matrix::zeros(p, p);
    let mut rhs = vec![0.0; p];
    for f in parts {
        gram.add_assign(f.gram());
        axpy(1.0, f.atb(), &mut rhs);
    }
    let (x_star, method) = match cholesky_solve(&gram, &rhs) {
        Some(x) => (x, Method::NormalEquations),
        None => {
            gram.add_diagonal(RIDGE);
            let x = cholesky_solve(&gram, &rhs).expect("ridged normal matrix is positive definite");
            (x, Method::RidgedNormalEquations)
        }
    };
    let lambda_star: Vec<Vec<f64>> = parts
        .iter()
        .map(|f| {
            f.gradient(&x_star)
                .expect("smooth")
                .iter()
                .map(|g| -g)
                .collect()
        })
        .collect();
    let mut total = vec![0.0; p];
    for l in &lambda_star {
        axpy(-1.0, l, &mut total);
    }
    Reference {
        f_star: parts.iter().map(|f| f.evaluate(&x_star)).sum(),
        residual: norm2(&total),
        x_star,
        lambda_star: Some(lambda_star),
        method,
    }
}

/// Stopping level for the composite gradient map.
pub const PROX_GRAD_TOL: f64 = 1e-8;

/// `min Σ log(1 + exp(−b(aᵀw + v))) + μ‖w‖₁` by accelerated proximal
/// gradient with backtracking and adaptive restart.
pub fn centralized_l1_logistic(pooled: &Logistic, mu: f64, max_iter: usize) -> Result<Reference> {
    let dim = pooled.dim();
    let composite =
        |x: &[f64]| pooled.evaluate(x) + mu * x[..dim - 1].iter().map(|v| v.abs()).sum::<f64>();
    let prox_step = |y: &[f64], grad: &[f64], l: f64| {
        let mut t = y.to_vec();
        axpy(-1.0 / l, grad, &mut t);
        l1_z_update(&t, mu / l, 1)
    };
    let mut x = vec![0.0; dim];
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut l = 1.0f64;
    let mut fx = composite(&x);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        // Gradient-map norm at the current iterate.
        let gx = pooled.gradient(&x).expect("smooth");
        let lx = l.max(1e-12);
        let px = prox_step(&x, &gx, lx);
        residual = lx * norm2(&x.iter().zip(&px).map(|(a, b)| a - b).collect::<Vec<_>>());
        if residual <= PROX_GRAD_TOL {
            return Ok(Reference {
                f_star: fx,
                x_star: x,
                lambda_star: None,
                method: Method::ProximalGradient,
                residual,
            });
        }
        let hy = pooled.evaluate(&y);
        let gy = pooled.gradient(&y).expect("smooth");
        let next = loop {
            let cand = prox_step(&y, &gy, l);
            let d: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = hy + crate::linalg::dot(&gy, &d) + 0.5 * l * crate::linalg::dot(&d, &d);
            if pooled.evaluate(&cand) <= model + 1e-12 * hy.abs().max(1.0) {
                break cand;
            }
            l *= 2.0;
        };
        let f_next = composite(&next);
        if f_next > fx && theta > 1.0 {
            // Restart momentum from the current point; the plain step taken
            // next is always accepted.
            theta = 1.0;
            y.clone_from(&x);
            l *= 0.9;
            continue;
        }
        let theta_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * theta * theta));
        let beta = (theta - 1.0) / theta_next;
        y = next
            .iter()
            .zip(&x)
            .map(|(n, o)| n + beta * (n - o))
            .collect();
        x = next;
        fx = f_next;
        theta = theta_next;
        l *= 0.9;
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        residual,
    })
}

/// Numerical rank threshold for [`minimal_poly_oracle`].
pub const KRYLOV_RANK_TOL: f64 = 1e-8;

/// Smallest `d` such that `e_jᵀ, e_jᵀW, …, e_jᵀW^d` are linearly dependent,
/// judged by singular values of the row-normalized Krylov matrix.
pub fn minimal_poly_oracle(w: &Matrix, j: usize) -> usize {
    let n = w.rows();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cur = vec![0.0; n];
    cur[j] = 1.0;
    for d in 0..=n {
        let nrm = norm2(&cur);
        rows.push(cur.iter().map(|v| v / nrm).collect());
        let svd = jacobi_svd(&Matrix::from_rows(&rows).transpose());
        let smax = svd.sigma[0];
        if svd
            .sigma
            .last()
            .is_some_and(|&s| s <= KRYLOV_RANK_TOL * smax)
        {
            return d;
        }
        cur = (0..n)
            .map(|c| (0..n).map(|r| cur[r] * w[(r, c)]).sum())
            .collect();
    }
    n
}

/// Exact version of [`minimal_poly_oracle`]. The Krylov rows are scaled to
/// primitive integer vectors and reduced fraction-free, which keeps the
/// integers small.
pub fn minimal_poly_exact(w: &WeightMatrix, j: usize) -> usize {
    let n = w.size();
    let mut lcm = 1u64;
    for r in 0..n {
        for c in 0..n {
            lcm = lcm.lcm(w.weight(r, c).denom());
        }
    }
    let scaled: Vec<Vec<BigInt>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    let q = w.weight(r, c);
                    BigInt::from(*q.numer()) * BigInt::from(lcm / q.denom())
                })
                .collect()
        })
        .collect();
    // Echelon basis: (pivot column, primitive row).
    let mut basis: Vec<(usize, Vec<BigInt>)> = Vec::new();
    let mut cur: Vec<BigInt> = (0..n).map(|c| BigInt::from(u8::from(c == j))).collect();
    for d in 0..=n {
        let mut v = cur.clone();
        for (piv, row) in &basis {
            if !v[*piv].is_zero() {
                let (a, b) = (row[*piv].clone(), v[*piv].clone());
                for c in 0..n {
                    v[c] = &a * &v[c] - &b * &row[c];
                }
                make_primitive(&mut v);
            }
        }
        match v.iter().position(|e| !e.is_zero()) {
            None => return d,
            Some(piv) => basis.push((piv, v)),
        }
        cur = (0..n)
            .map(|c| {
                (0..n)
                    .filter(|&r| !cur[r].is_zero())
                    .map(|r| &cur[r] * &scaled[r][c])
                    .sum()
            })
            .collect();
        make_primitive(&mut cur);
    }
    n
}

fn make_primitive(v: &mut [BigInt]) {
    let g = v.iter().fold(BigInt::zero(), |g, e| g.gcd(e));
    if !g.is_zero() && !g.is_one() {
        for e in v.iter_mut() {
            *e /= &g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Digraph;
    use crate::objectives::{least_squares_instance, LogisticData};

    #[test]
    fn averages() {
        assert_eq!(exact_average(&[vec![1.0], vec![2.0], vec![3.0]]), vec![2.0]);
        assert_eq!(exact_average(&[vec![4.5, -1.0]]), vec![4.5, -1.0]);
        assert_eq!(
            exact_average(&[vec![3.0], vec![1.0], vec![2.0]]),
            exact_average(&[vec![1.0], vec![2.0], vec![3.0]])
        );
    }

    #[test]
    fn least_squares_reference() {
        let one = LeastSquares::new(Matrix::identity(2), vec![1.5, -2.0]).unwrap();
        let r = centralized_least_squares(&[one]);
        assert_eq!(r.x_star, vec![1.5, -2.0]);
        assert_eq!(r.method, Method::NormalEquations);

        let parts = least_squares_instance(6, 3, 3, 2);
        let r = centralized_least_squares(&parts);
        assert!(r.residual <= 1e-10);
        let sum = exact_average(r.lambda_star.as_ref().unwrap());
        assert!(norm2(&sum) <= 1e-10);
    }

    #[test]
    fn singular_normal_matrix_is_ridged() {
        let f = LeastSquares::new(Matrix::zeros(1, 2), vec![1.0]).unwrap();
        assert_eq!(
            centralized_least_squares(&[f]).method,
            Method::RidgedNormalEquations
        );
    }

    fn pooled(seed: u64) -> (LogisticData, Logistic) {
        let d = LogisticData::generate(120, 5, 3, seed);
        let f = Logistic::new(d.features.clone(), d.labels.clone()).unwrap();
        (d, f)
    }

    #[test]
    fn l1_logistic_thresholds_at_mu_max() {
        let (d, f) = pooled(1);
        let mu_max = d.mu_max();
        let r = centralized_l1_logistic(&f, 1.01 * mu_max, 100_000).unwrap();
        assert!(norm2(&r.x_star[..5]) <= 1e-6, "{:?}", r.x_star);
        let r = centralized_l1_logistic(&f, 0.1 * mu_max, 100_000).unwrap();
        assert!(r.x_star[..5].iter().any(|v| v.abs() > 1e-3));
        let zero = f.evaluate(&[0.0; 6]);
        assert!(r.f_star <= zero);
        let huge = centralized_l1_logistic(&f, 1e6, 100_000).unwrap();
        assert!(huge.x_star[..5].iter().all(|&v| v == 0.0));
    }

    /// On a two-feature problem, Newton on the support found by the
    /// proximal solver must land on the same point.
    #[test]
    fn l1_logistic_matches_newton_on_support() {
        let d = LogisticData::generate(60, 2, 2, 8);
        let f = Logistic::new(d.features.clone(), d.labels.clone()).unwrap();
        let mu = 0.3 * d.mu_max();
        let r = centralized_l1_logistic(&f, mu, 100_000).unwrap();
        let support: Vec<usize> = (0..2).filter(|&i| r.x_star[i] != 0.0).chain([2]).collect();
        let sign: Vec<f64> = (0..3)
            .map(|i| if i < 2 { r.x_star[i].signum() } else { 0.0 })
            .collect();
        let mut x = r.x_star.clone();
        for _ in 0..50 {
            let mut g = f.gradient(&x).unwrap();
            axpy(mu, &sign, &mut g);
            let h = f.hessian(&x);
            let k = support.len();
            let hs = Matrix::from_fn(k, k, |a, b| h[(support[a], support[b])]);
            let gs: Vec<f64> = support.iter().map(|&i| g[i]).collect();
            let step = cholesky_solve(&hs, &gs).unwrap();
            for (a, &i) in support.iter().enumerate() {
                x[i] -= step[a];
            }
        }
        for i in 0..3 {
            assert!(
                (x[i] - r.x_star[i]).abs() <= 1e-7,
                "{x:?} vs {:?}",
                r.x_star
            );
        }
    }

    #[test]
    fn minimal_polynomial_degrees() {
        let g1 = Digraph::new(1, &[]).unwrap();
        let w1 = WeightMatrix::ratio_weights(&g1);
        assert_eq!(minimal_poly_exact(&w1, 0), 1);
        assert_eq!(
            minimal_poly_oracle(&Matrix::from_rows(&w1.to_dense()), 0),
            1
        );
        let g = Digraph::random_strongly_connected(7, 0.3, 3);
        let w = WeightMatrix::ratio_weights(&g);
        let dense = Matrix::from_rows(&w.to_dense());
        for j in 0..7 {
            let d = minimal_poly_exact(&w, j);
            assert!(d <= 7);
            assert_eq!(minimal_poly_oracle(&dense, j), d);
        }
    }
}
