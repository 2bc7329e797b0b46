//! Prime-field arithmetic.
//!
//! Elements are plain canonical residues; all arithmetic goes through a
//! [`PrimeField`] context that owns the modulus. The default modulus is the
//! Mersenne prime 2^61 - 1, for which multiplication reduces with shifts.
//! Small primes (13, 5, ...) are supported so that privacy properties can be
//! checked exhaustively.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// A canonical residue in `[0, p)` for the field it was produced by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Display for FieldElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Reduction {
    Mersenne61,
    Generic,
}

/// Arithmetic context for the prime field `F_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeField {
    modulus: u64,
    reduction: Reduction,
}

impl Default for PrimeField {
    fn default() -> Self {
        Self::mersenne61()
    }
}

impl PrimeField {
    /// Field over `p`. Fails unless `p` is a prime below 2^63.
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus >= 1 << 63 {
            return Err(Error::Config(format!("modulus {modulus} must be below 2^63")));
        }
        if !is_prime(modulus) {
            return Err(Error::Config(format!("modulus {modulus} is not prime")));
        }
        let reduction = if modulus == MERSENNE_61 { Reduction::Mersenne61 } else { Reduction::Generic };
        Ok(Self { modulus, reduction })
    }

    pub const fn mersenne61() -> Self {
        Self { modulus: MERSENNE_61, reduction: Reduction::Mersenne61 }
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Bit length of the modulus (61 for the default field).
    pub fn bits(&self) -> u32 {
        64 - self.modulus.leading_zeros()
    }

    /// Bytes needed to carry one element on the wire.
    pub fn element_bytes(&self) -> usize {
        (self.bits() as usize).div_ceil(8)
    }

    pub fn ensure_same(&self, other: &PrimeField) -> Result<()> {
        if self.modulus != other.modulus {
            return Err(Error::Config(format!(
                "mismatched moduli: {} vs {}",
                self.modulus, other.modulus
            )));
        }
        Ok(())
    }

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement(value % self.modulus)
    }

    /// Accepts only canonical representatives.
    pub fn try_element(&self, value: u64) -> Result<FieldElement> {
        if value < self.modulus {
            Ok(FieldElement(value))
        } else {
            Err(Error::Domain(format!("{value} is not a canonical residue mod {}", self.modulus)))
        }
    }

    pub fn from_i64(&self, value: i64) -> FieldElement {
        let m = self.modulus as i128;
        FieldElement((value as i128).rem_euclid(m) as u64)
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        debug_assert!(a.0 < self.modulus && b.0 < self.modulus);
        let s = a.0 + b.0;
        FieldElement(if s >= self.modulus { s - self.modulus } else { s })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        debug_assert!(a.0 < self.modulus && b.0 < self.modulus);
        if a.0 >= b.0 {
            FieldElement(a.0 - b.0)
        } else {
            FieldElement(a.0 + self.modulus - b.0)
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a.0 == 0 {
            a
        } else {
            FieldElement(self.modulus - a.0)
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        debug_assert!(a.0 < self.modulus && b.0 < self.modulus);
        let wide = a.0 as u128 * b.0 as u128;
        match self.reduction {
            Reduction::Mersenne61 => {
                // 2^61 = 1 (mod p)
                let lo = (wide as u64) & MERSENNE_61;
                let hi = (wide >> 61) as u64;
                let s = lo + hi;
                let s = (s & MERSENNE_61) + (s >> 61);
                FieldElement(if s >= MERSENNE_61 { s - MERSENNE_61 } else { s })
            }
            Reduction::Generic => FieldElement((wide % self.modulus as u128) as u64),
        }
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; zero has none.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.0 == 0 {
            return Err(Error::Domain("zero has no multiplicative inverse".into()));
        }
        // extended Euclid on (a, p)
        let (mut r0, mut r1) = (self.modulus as i128, a.0 as i128);
        let (mut s0, mut s1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (s0, s1) = (s1, s0 - q * s1);
        }
        debug_assert_eq!(r0, 1);
        Ok(FieldElement(s0.rem_euclid(self.modulus as i128) as u64))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Uniform draw from `[0, p)`.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_range(0..self.modulus))
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_range(1..self.modulus))
    }

    pub fn sum<I: IntoIterator<Item = FieldElement>>(&self, items: I) -> FieldElement {
        items.into_iter().fold(FieldElement::ZERO, |acc, x| self.add(acc, x))
    }

    /// `acc[i] += rhs[i]`; panics on length mismatch.
    pub fn add_assign_slice(&self, acc: &mut [FieldElement], rhs: &[FieldElement]) {
        assert_eq!(acc.len(), rhs.len(), "slice length mismatch");
        for (a, &b) in acc.iter_mut().zip(rhs) {
            *a = self.add(*a, b);
        }
    }

    /// Sum of `coeffs[i] * values[i]`.
    pub fn dot(&self, coeffs: &[FieldElement], values: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(coeffs.len(), values.len());
        match self.reduction {
            Reduction::Mersenne61 => {
                // products are < 2^122; accumulate up to 32 of them before reducing
                let mut total = FieldElement::ZERO;
                for (cc, vc) in coeffs.chunks(32).zip(values.chunks(32)) {
                    let mut acc: u128 = 0;
                    for (&c, &v) in cc.iter().zip(vc) {
                        acc += c.0 as u128 * v.0 as u128;
                    }
                    total = self.add(total, self.reduce_wide(acc));
                }
                total
            }
            Reduction::Generic => coeffs
                .iter()
                .zip(values)
                .fold(FieldElement::ZERO, |acc, (&c, &v)| self.add(acc, self.mul(c, v))),
        }
    }

    fn reduce_wide(&self, x: u128) -> FieldElement {
        match self.reduction {
            Reduction::Mersenne61 => {
                let p = MERSENNE_61 as u128;
                let s = (x & p) + (x >> 61);
                let s = (s & p) + (s >> 61);
                let s = s as u64;
                FieldElement(if s >= MERSENNE_61 { s - MERSENNE_61 } else { s })
            }
            Reduction::Generic => FieldElement((x % self.modulus as u128) as u64),
        }
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &SMALL {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for &a in &SMALL {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
