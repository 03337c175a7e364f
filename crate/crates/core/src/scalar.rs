// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Arithmetic backends for the consensus layer.
//!
//! The protocol only needs field operations, a notion of "negligible", and a
//! kernel extractor for the stacked Hankel matrices. `f64` answers the rank
//! question with an SVD and relative tolerances; [`Exact`] answers it exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::hash::Hasher;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

use crate::graph::Weight;
use crate::linalg::{self, modular, Matrix};

/// Numerical thresholds for the `f64` backend. Exact arithmetic ignores them.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tolerances {
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// Smallest admissible |denominator| in the final-value ratio.
    pub denom_tol: f64,
    /// A first difference set entirely below this is treated as converged.
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            denom_tol: 1e-12,
            abs_tol: 1e-13,
        }
    }
}

/// Outcome of probing a stacked Hankel matrix for a kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelProbe<S> {
    FullRank,
    /// Normalized kernel, last entry one.
    Kernel(Vec<S>),
    /// Rank deficient but the last kernel entry is (numerically) zero.
    BadNormalization,
}

pub trait Scalar: Clone + Debug + PartialEq + Send + Sync + 'static {
    const NAME: &'static str;

    fn zero() -> Self;
    fn one() -> Self;
    /// Exact for [`Exact`] (every finite double is a dyadic rational).
    fn from_f64(v: f64) -> Self;
    fn from_weight(w: Weight) -> Self;
    fn to_f64(&self) -> f64;

    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;

    /// `Σ w_i v_i`
    fn weighted_sum<'a>(terms: impl Iterator<Item = (Weight, &'a Self)>) -> Self {
        terms.fold(Self::zero(), |acc, (w, v)| {
            acc.add(&Self::from_weight(w).mul(v))
        })
    }

    fn dot(coeffs: &[Self], values: &[Self]) -> Self {
        coeffs
            .iter()
            .zip(values)
            .fold(Self::zero(), |acc, (c, v)| acc.add(&c.mul(v)))
    }

    /// Below `abs_tol` in magnitude (exactly zero for exact arithmetic).
    fn is_negligible(&self, tol: &Tolerances) -> bool;
    /// Large enough to divide by under `denom_tol`.
    fn is_safe_divisor(&self, tol: &Tolerances) -> bool;

    fn hash_into<H: Hasher>(&self, state: &mut H);

    /// Image in `Z/pZ`, for backends whose rank questions can be screened
    /// modulo a prime. `None` means "not available".
    fn residue(&self, _p: u64) -> Option<u64> {
        None
    }

    /// Looks for a kernel of the `k`-column block Hankel matrix stacking
    /// `Γ_k(s̄)` for every channel. Each channel must hold `2k - 1` differences.
    fn hankel_kernel(channels: &[&[Self]], k: usize, tol: &Tolerances) -> KernelProbe<Self>;
}

fn stacked_hankel<S: Clone>(channels: &[&[S]], k: usize) -> Vec<Vec<S>> {
    let mut rows = Vec::with_capacity(channels.len() * k);
    for ch in channels {
        debug_assert!(ch.len() >= 2 * k - 1);
        for r in 0..k {
            rows.push(ch[r..r + k].to_vec());
        }
    }
    rows
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_weight(w: Weight) -> Self {
        *w.numer() as f64 / *w.denom() as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn is_negligible(&self, tol: &Tolerances) -> bool {
        self.abs() <= tol.abs_tol
    }
    fn is_safe_divisor(&self, tol: &Tolerances) -> bool {
        self.abs() > tol.denom_tol
    }
    fn hash_into<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.to_bits());
    }

    fn hankel_kernel(channels: &[&[f64]], k: usize, tol: &Tolerances) -> KernelProbe<f64> {
        let rows = stacked_hankel(channels, k);
        let a = Matrix::from_rows(&rows);
        // Column equilibration: Hankel columns of a decaying sequence differ by
        // orders of magnitude, which would swamp the rank test otherwise.
        let scale: Vec<f64> = (0..k)
            .map(|c| {
                let n = libm::sqrt((0..a.rows()).map(|r| a[(r, c)] * a[(r, c)]).sum::<f64>());
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            })
            .collect();
        let scaled = Matrix::from_fn(a.rows(), k, |r, c| a[(r, c)] / scale[c]);
        let svd = linalg::jacobi_svd(&scaled);
        let (smax, smin) = (svd.sigma[0], svd.sigma[k - 1]);
        if !(smin <= tol.rank_tol * smax) && smax > 0.0 {
            return KernelProbe::FullRank;
        }
        let beta: Vec<f64> = (0..k).map(|r| svd.v[(r, k - 1)] / scale[r]).collect();
        let last = beta[k - 1];
        if !(last.abs() > tol.denom_tol * linalg::norm_inf(&beta)) {
            return KernelProbe::BadNormalization;
        }
        KernelProbe::Kernel(beta.iter().map(|b| b / last).collect())
    }
}

/// Arbitrary-precision rational scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exact(pub BigRational);

impl Exact {
    pub fn ratio(num: i64, den: i64) -> Self {
        Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }
}

impl From<i64> for Exact {
    fn from(v: i64) -> Self {
        Exact(BigRational::from_integer(BigInt::from(v)))
    }
}

impl Scalar for Exact {
    const NAME: &'static str = "exact";

    fn zero() -> Self {
        Exact(BigRational::zero())
    }
    fn one() -> Self {
        Exact(BigRational::one())
    }
    fn from_f64(v: f64) -> Self {
        Exact(BigRational::from_f64(v).expect("finite input"))
    }
    fn from_weight(w: Weight) -> Self {
        Exact(BigRational::new(
            BigInt::from(*w.numer()),
            BigInt::from(*w.denom()),
        ))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
    fn add(&self, rhs: &Self) -> Self {
        Exact(&self.0 + &rhs.0)
    }
    fn sub(&self, rhs: &Self) -> Self {
        Exact(&self.0 - &rhs.0)
    }
    fn mul(&self, rhs: &Self) -> Self {
        Exact(&self.0 * &rhs.0)
    }
    fn div(&self, rhs: &Self) -> Self {
        Exact(&self.0 / &rhs.0)
    }

    fn weighted_sum<'a>(terms: impl Iterator<Item = (Weight, &'a Self)>) -> Self {
        // Accumulate numerator over a running common denominator and reduce
        // once at the end; per-term reduction dominates the cost otherwise.
        let mut num = BigInt::zero();
        let mut den = BigInt::one();
        for (w, v) in terms {
            let wn = BigInt::from(*w.numer()) * v.0.numer();
            let wd = BigInt::from(*w.denom()) * v.0.denom();
            let g = num_integer::Integer::gcd(&den, &wd);
            let l = &den / &g * &wd;
            num = num * (&l / &den) + wn * (&l / &wd);
            den = l;
        }
        Exact(BigRational::new(num, den))
    }

    fn is_negligible(&self, _tol: &Tolerances) -> bool {
        self.0.is_zero()
    }
    fn is_safe_divisor(&self, _tol: &Tolerances) -> bool {
        !self.0.is_zero()
    }
    fn hash_into<H: Hasher>(&self, state: &mut H) {
        for part in [self.0.numer(), self.0.denom()] {
            let (sign, digits) = part.to_u64_digits();
            state.write_u8(sign as u8);
            for d in digits {
                state.write_u64(d);
            }
        }
    }

    fn residue(&self, p: u64) -> Option<u64> {
        let big_p = BigInt::from(p);
        let num = self.0.numer().mod_floor(&big_p).to_u64()?;
        let den = self.0.denom().mod_floor(&big_p).to_u64()?;
        if den == 0 {
            return None;
        }
        Some(modular::mul_mod(num, modular::pow_mod(den, p - 2, p), p))
    }

    fn hankel_kernel(channels: &[&[Exact]], k: usize, _tol: &Tolerances) -> KernelProbe<Exact> {
        let seqs: Vec<Vec<BigInt>> = channels
            .iter()
            .map(|ch| {
                let seq: Vec<BigRational> = ch[..2 * k - 1].iter().map(|v| v.0.clone()).collect();
                modular::integer_sequence(&seq)
            })
            .filter(|s| s.iter().any(|v| !v.is_zero()))
            .collect();
        if seqs.is_empty() {
            // Everything is zero: any vector is a kernel vector.
            let mut beta = vec![Exact::zero(); k];
            beta[k - 1] = Exact::one();
            return KernelProbe::Kernel(beta);
        }
        match modular::hankel_kernel(&seqs, k) {
            modular::ExactKernel::FullRank => KernelProbe::FullRank,
            modular::ExactKernel::Kernel(b) => {
                KernelProbe::Kernel(b.into_iter().map(Exact).collect())
            }
            modular::ExactKernel::LastZero => KernelProbe::BadNormalization,
        }
    }
}

impl Exact {
    pub fn abs(&self) -> Self {
        Exact(self.0.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric<S: Scalar>(ratio: f64, len: usize) -> Vec<S> {
        (0..len)
            .map(|t| S::from_f64(libm::pow(ratio, t as f64)))
            .collect()
    }

    #[test]
    fn from_f64_is_exact() {
        let v = 0.1f64;
        assert_eq!(Exact::from_f64(v).to_f64(), v);
        assert_eq!(Exact::from_f64(0.5), Exact::ratio(1, 2));
    }

    #[test]
    fn weighted_sum_matches_fold() {
        let vals = [Exact::ratio(1, 3), Exact::ratio(-2, 7), Exact::from(5)];
        let ws = [Weight::new(1, 2), Weight::new(1, 4), Weight::new(1, 3)];
        let fast = Exact::weighted_sum(ws.iter().copied().zip(vals.iter()));
        let slow = ws.iter().zip(&vals).fold(Exact::zero(), |acc, (w, v)| {
            acc.add(&Exact::from_weight(*w).mul(v))
        });
        assert_eq!(fast, slow);
    }

    #[test]
    fn geometric_sequence_has_order_one_kernel() {
        // s[t] = (1/2)^t satisfies s[t+1] - s[t]/2 = 0.
        let s: Vec<Exact> = geometric(0.5, 3);
        let tol = Tolerances::default();
        assert_eq!(
            Exact::hankel_kernel(&[&s[..1]], 1, &tol),
            KernelProbe::FullRank
        );
        assert_eq!(
            Exact::hankel_kernel(&[&s], 2, &tol),
            KernelProbe::Kernel(vec![Exact::ratio(-1, 2), Exact::one()])
        );
    }

    #[test]
    fn float_kernel_of_two_mode_sequence() {
        // s[t] = a^t + b^t obeys a two-term recurrence, so the 3x3 Hankel is singular.
        let (a, b) = (0.5f64, -0.25f64);
        let s: Vec<f64> = (0..5)
            .map(|t| libm::pow(a, t as f64) + libm::pow(b, t as f64))
            .collect();
        let tol = Tolerances::default();
        assert_eq!(f64::hankel_kernel(&[&s], 2, &tol), KernelProbe::FullRank);
        let KernelProbe::Kernel(beta) = f64::hankel_kernel(&[&s], 3, &tol) else {
            panic!()
        };
        // (t - a)(t - b) = t^2 - (a + b) t + ab
        assert!((beta[0] - a * b).abs() < 1e-12);
        assert!((beta[1] + (a + b)).abs() < 1e-12);
        assert_eq!(beta[2], 1.0);
    }
}
