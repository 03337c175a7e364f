// Copyright 2026 The fdadmm Authors
// SPDX-License-Identifier: Apache-2.0

//! Exact kernels of integer matrices by multi-modular elimination.
//!
//! Rank over Q is screened modulo large primes (full rank mod p implies full
//! rank over Q). A one-dimensional kernel is computed mod many primes, lifted
//! with CRT, recovered by rational reconstruction and then checked exactly,
//! so a returned kernel is never wrong, only possibly slow.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

const MAX_PRIMES: usize = 1 << 13;
const MAX_UNLUCKY: usize = 16;

#[inline]
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for small in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % small == 0 {
            return n == small;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primes below 2^62 in descending order.
#[derive(Debug, Clone)]
pub struct Primes {
    candidate: u64,
}

impl Default for Primes {
    fn default() -> Self {
        Self {
            candidate: (1u64 << 62) - 1,
        }
    }
}

impl Iterator for Primes {
    type Item = u64;
    fn next(&mut self) -> Option<u64> {
        while self.candidate > 2 {
            let c = self.candidate;
            self.candidate -= 2;
            if is_prime(c) {
                return Some(c);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModKernel {
    FullRank,
    /// Rank exactly `cols - 1`, kernel scaled so its last entry is 1.
    Kernel(Vec<u64>),
    /// Rank below `cols - 1`, or the kernel has a zero last entry.
    Unlucky,
}

/// Row reduction of `rows` (entries already reduced mod `p`).
pub fn kernel_mod_p(rows: &[Vec<u64>], cols: usize, p: u64) -> ModKernel {
    let mut a: Vec<Vec<u64>> = rows.to_vec();
    let mut pivots: Vec<usize> = Vec::with_capacity(cols);
    let mut rank = 0;
    for c in 0..cols {
        let Some(pr) = (rank..a.len()).find(|&r| a[r][c] != 0) else {
            continue;
        };
        a.swap(rank, pr);
        let inv = pow_mod(a[rank][c], p - 2, p);
        for v in a[rank].iter_mut() {
            *v = mul_mod(*v, inv, p);
        }
        let pivot_row = a[rank].clone();
        for r in 0..a.len() {
            if r != rank && a[r][c] != 0 {
                let f = a[r][c];
                for (v, &pv) in a[r].iter_mut().zip(&pivot_row).skip(c) {
                    *v = (*v + p - mul_mod(f, pv, p)) % p;
                }
            }
        }
        pivots.push(c);
        rank += 1;
        if rank == a.len() {
            break;
        }
    }
    if rank == cols {
        return ModKernel::FullRank;
    }
    if rank + 1 < cols || pivots.contains(&(cols - 1)) {
        return ModKernel::Unlucky;
    }
    let mut kernel = vec![0u64; cols];
    kernel[cols - 1] = 1;
    for (r, &c) in pivots.iter().enumerate() {
        kernel[c] = (p - a[r][cols - 1]) % p;
    }
    ModKernel::Kernel(kernel)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExactKernel {
    FullRank,
    /// A kernel vector with last entry 1.
    Kernel(Vec<BigRational>),
    /// Rank deficient, but every kernel vector has a zero last entry.
    LastZero,
}

/// Scales a rational sequence by the lcm of its denominators.
pub fn integer_sequence(seq: &[BigRational]) -> Vec<BigInt> {
    let l = seq.iter().fold(BigInt::one(), |l, v| l.lcm(v.denom()));
    seq.iter().map(|v| v.numer() * (&l / v.denom())).collect()
}

/// Kernel of an integer matrix with `cols` columns, for the case that
/// matters here: rank `cols` (returns `FullRank`) or `cols - 1`.
pub fn exact_kernel(rows: &[Vec<BigInt>], cols: usize) -> ExactKernel {
    exact_kernel_with(
        cols,
        |p| {
            let big_p = BigInt::from(p);
            rows.iter()
                .map(|row| row.iter().map(|v| residue(v, &big_p)).collect())
                .collect()
        },
        |beta| {
            rows.iter().all(|row| {
                row.iter()
                    .zip(beta)
                    .map(|(a, b)| a * b)
                    .sum::<BigInt>()
                    .is_zero()
            })
        },
        || rows.to_vec(),
    )
}

/// Kernel of the block Hankel matrix stacking `Γ_k(s)` for each integer
/// sequence `s` (each of length at least `2k - 1`). Reduces every sequence
/// once per prime instead of every matrix entry.
pub fn hankel_kernel(seqs: &[Vec<BigInt>], k: usize) -> ExactKernel {
    let rows_of = |s: &[u64]| -> Vec<Vec<u64>> { (0..k).map(|r| s[r..r + k].to_vec()).collect() };
    exact_kernel_with(
        k,
        |p| {
            let big_p = BigInt::from(p);
            seqs.iter()
                .flat_map(|s| {
                    let red: Vec<u64> = s.iter().map(|v| residue(v, &big_p)).collect();
                    rows_of(&red)
                })
                .collect()
        },
        |beta| {
            seqs.iter().all(|s| {
                (0..k).all(|r| {
                    s[r..r + k]
                        .iter()
                        .zip(beta)
                        .map(|(a, b)| a * b)
                        .sum::<BigInt>()
                        .is_zero()
                })
            })
        },
        || {
            seqs.iter()
                .flat_map(|s| (0..k).map(move |r| s[r..r + k].to_vec()))
                .collect()
        },
    )
}

fn residue(v: &BigInt, p: &BigInt) -> u64 {
    v.mod_floor(p).to_u64().unwrap_or(0)
}

/// The multi-modular loop. `reduce(p)` gives the matrix mod `p`;
/// `annihilates` checks an integer candidate exactly; `rows` materializes
/// the matrix for the rational fallback.
fn exact_kernel_with(
    cols: usize,
    reduce: impl Fn(u64) -> Vec<Vec<u64>>,
    annihilates: impl Fn(&[BigInt]) -> bool,
    rows: impl Fn() -> Vec<Vec<BigInt>>,
) -> ExactKernel {
    if cols == 0 {
        return ExactKernel::FullRank;
    }
    let mut modulus = BigUint::one();
    let mut residues: Vec<BigUint> = vec![BigUint::zero(); cols];
    let mut used = 0usize;
    let mut unlucky = 0usize;
    let mut next_try = 1usize;
    for p in Primes::default() {
        match kernel_mod_p(&reduce(p), cols, p) {
            ModKernel::FullRank => return ExactKernel::FullRank,
            ModKernel::Unlucky => {
                unlucky += 1;
                if unlucky > MAX_UNLUCKY {
                    break;
                }
                continue;
            }
            ModKernel::Kernel(k) => {
                crt_accumulate(&mut residues, &modulus, &k, p);
                modulus *= p;
                used += 1;
            }
        }
        if used == next_try {
            next_try = used + (used / 2).max(1);
            if let Some(beta) = reconstruct(&residues, &modulus) {
                if annihilates(&clear_denominators(&beta)) {
                    return ExactKernel::Kernel(beta);
                }
            }
        }
        if used >= MAX_PRIMES {
            break;
        }
    }
    rational_kernel(&rows(), cols)
}

fn clear_denominators(beta: &[BigRational]) -> Vec<BigInt> {
    let l = beta.iter().fold(BigInt::one(), |l, b| l.lcm(b.denom()));
    beta.iter().map(|b| b.numer() * (&l / b.denom())).collect()
}

fn crt_accumulate(residues: &mut [BigUint], modulus: &BigUint, k: &[u64], p: u64) {
    let m_mod_p = (modulus % p).to_u64().unwrap_or(0);
    let inv = pow_mod(m_mod_p, p - 2, p);
    for (r, &kv) in residues.iter_mut().zip(k) {
        let r_mod_p = (&*r % p).to_u64().unwrap_or(0);
        let t = mul_mod((kv + p - r_mod_p) % p, inv, p);
        *r += modulus * t;
    }
}

fn reconstruct(residues: &[BigUint], modulus: &BigUint) -> Option<Vec<BigRational>> {
    let bound = BigInt::from((modulus >> 1u32).sqrt());
    let m = BigInt::from(modulus.clone());
    residues
        .iter()
        .map(|a| rational_reconstruction(&BigInt::from(a.clone()), &m, &bound))
        .collect()
}

/// Finds `r/s ≡ a (mod m)` with `|r|, |s| <= bound`.
pub fn rational_reconstruction(a: &BigInt, m: &BigInt, bound: &BigInt) -> Option<BigRational> {
    let (mut r0, mut r1) = (m.clone(), a.mod_floor(m));
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while &r1 > bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let t2 = &t0 - &q * &t1;
        r0 = core::mem::replace(&mut r1, r2);
        t0 = core::mem::replace(&mut t1, t2);
    }
    if t1.is_zero() || &t1.abs() > bound || !r1.gcd(&t1).is_one() {
        return None;
    }
    Some(BigRational::new(r1, t1))
}

/// Plain Gauss-Jordan over Q. Slow, only reached when the modular path gives up.
fn rational_kernel(rows: &[Vec<BigInt>], cols: usize) -> ExactKernel {
    let mut a: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| BigRational::from_integer(v.clone()))
                .collect()
        })
        .collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for c in 0..cols {
        let Some(pr) = (rank..a.len()).find(|&r| !a[r][c].is_zero()) else {
            continue;
        };
        a.swap(rank, pr);
        let inv = a[rank][c].recip();
        for v in a[rank].iter_mut() {
            *v *= &inv;
        }
        let pivot_row = a[rank].clone();
        for r in 0..a.len() {
            if r != rank && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                for (v, pv) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= &f * pv;
                }
            }
        }
        pivots.push(c);
        rank += 1;
    }
    if rank == cols {
        return ExactKernel::FullRank;
    }
    if pivots.contains(&(cols - 1)) {
        return ExactKernel::LastZero;
    }
    let mut kernel = vec![BigRational::zero(); cols];
    kernel[cols - 1] = BigRational::one();
    for (r, &c) in pivots.iter().enumerate() {
        kernel[c] = -a[r][cols - 1].clone();
    }
    ExactKernel::Kernel(kernel)
}

/// Sign-aware conversion used by callers that build rows from `i64` data.
pub fn big(v: i64) -> BigInt {
    BigInt::from(v)
}
