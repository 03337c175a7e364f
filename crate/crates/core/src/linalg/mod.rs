// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Small dense linear algebra: just enough for Hankel rank tests, local
//! least-squares / Newton solves, and exact kernels over the rationals.

mod dense;
pub mod modular;

pub use dense::{cholesky_solve, jacobi_svd, Matrix, Svd};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
