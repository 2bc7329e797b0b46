//! Independent oracles shared by the integration suites. Nothing here calls
//! into the library's numerics.

#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Natural log of an arbitrarily large integer, accurate to f64 precision.
pub fn ln_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap() as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `C(n, 0..=n)` by the multiplicative recurrence.
pub fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for i in 1..=n {
        c = c * BigUint::from(n - i + 1) / BigUint::from(i);
        row.push(c.clone());
    }
    row
}

/// Exact hypergeometric law of the number of successes in `draws` draws
/// without replacement from `population` items with `successes` marked.
pub struct ExactHypergeom {
    /// `C(K, i) C(N - K, n - i)` for every `i` in `0..=draws`.
    pub weights: Vec<BigUint>,
    pub total: BigUint,
}

impl ExactHypergeom {
    pub fn new(population: u64, successes: u64, draws: u64) -> Self {
        let marked = binomial_row(successes);
        let unmarked = binomial_row(population - successes);
        let weights = (0..=draws)
            .map(|i| {
                if i > successes || draws - i > population - successes {
                    BigUint::zero()
                } else {
                    &marked[i as usize] * &unmarked[(draws - i) as usize]
                }
            })
            .collect();
        let total = &binomial_row(population)[draws as usize];
        Self { weights, total: total.clone() }
    }

    /// `ln P[X <= x]`.
    pub fn ln_cdf(&self, x: u64) -> f64 {
        let upto = (x as usize).min(self.weights.len() - 1);
        let num: BigUint = self.weights[..=upto].iter().sum();
        ln_big(&num) - ln_big(&self.total)
    }

    /// `ln P[X > x]`.
    pub fn ln_sf(&self, x: u64) -> f64 {
        let from = (x as usize + 1).min(self.weights.len());
        let num: BigUint = self.weights[from..].iter().sum();
        ln_big(&num) - ln_big(&self.total)
    }
}

/// Relative error between two probabilities given by their logs.
pub fn rel_err_ln(ours: f64, oracle: f64) -> f64 {
    if ours == f64::NEG_INFINITY && oracle == f64::NEG_INFINITY {
        return 0.0;
    }
    (ours - oracle).exp_m1().abs()
}

/// Bits of `1 - (1 - q)^groups` for an exact per-group failure `ln q`.
pub fn bits_from_group_failure(ln_q: f64, groups: f64) -> f64 {
    let q = ln_q.exp();
    let p_fail = -(groups * (-q).ln_1p()).exp_m1();
    -p_fail.log2()
}

/// Security bits straight from the definition: a group of `g` is corrupted
/// when it holds `t` or more of the `floor(gamma n)` adversaries, and there
/// are `m n / g` groups.
pub fn oracle_security_bits(g: u64, t: u64, n: u64, gamma: f64, m: u64) -> f64 {
    let corrupt = (gamma * n as f64).floor() as u64;
    let hg = ExactHypergeom::new(n - 1, corrupt, g);
    bits_from_group_failure(hg.ln_sf(t - 1), (m * n) as f64 / g as f64)
}

/// Availability bits: a group fails when more than `g - required` members
/// are among the `floor(delta n)` dropouts.
pub fn oracle_availability_bits(g: u64, required: u64, n: u64, delta: f64, m: u64) -> f64 {
    let dropped = (delta * n as f64).floor() as u64;
    let hg = ExactHypergeom::new(n - 1, dropped, g);
    bits_from_group_failure(hg.ln_sf(g - required), (m * n) as f64 / g as f64)
}

pub fn mod_pow(b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u128;
    let mut base = (b % p) as u128;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p as u128;
        }
        base = base * base % p as u128;
        e >>= 1;
    }
    acc as u64
}

pub fn mod_inv(a: u64, p: u64) -> u64 {
    assert!(!a.is_multiple_of(p));
    mod_pow(a, p - 2, p)
}

/// Textbook Lagrange interpolation through `(xs, ys)` evaluated at `x`,
/// all residues mod the prime `p`.
pub fn lagrange_at(p: u64, xs: &[u64], ys: &[u64], x: u64) -> u64 {
    let p128 = p as u128;
    let mut acc = 0u128;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut num = 1u128;
        let mut den = 1u128;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                num = num * ((x + p - xj % p) % p) as u128 % p128;
                den = den * ((xi + p - xj % p) % p) as u128 % p128;
            }
        }
        let term = yi as u128 * num % p128 * mod_inv(den as u64, p) as u128 % p128;
        acc = (acc + term) % p128;
    }
    acc as u64
}

/// The residue of `-i` mod `p`.
pub fn neg(i: u64, p: u64) -> u64 {
    (p - i % p) % p
}

/// All subsets of `0..n` with at least `min` elements, as index lists.
pub fn subsets_at_least(n: usize, min: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize >= min)
        .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
        .collect()
}
