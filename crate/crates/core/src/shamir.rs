//! Packed Shamir secret sharing.
//!
//! `k` secrets are embedded in one polynomial of degree at most `t + k - 2`:
//! the secrets sit at the reserved points `-1, ..., -k` and the `n` shares
//! are the evaluations at `1, ..., n`. Any `t + k - 1` shares determine the
//! polynomial, while `t - 1` shares are independent of the secrets.
//!
//! Sharing fixes the polynomial through the `k` secret points plus `t - 1`
//! uniformly random shares at `1, ..., t - 1`; the remaining shares are then
//! Lagrange combinations of those values, precomputed per scheme.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};

/// One evaluation of a sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Share {
    pub point: FieldElement,
    pub value: FieldElement,
}

/// The `n` shares of one packed sharing of `k` secrets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedShareSet {
    pub threshold: usize,
    pub pack: usize,
    pub shares: Vec<Share>,
}

/// One party's shares of a block-wise shared vector: one value per block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorShare {
    pub point: FieldElement,
    pub values: Vec<FieldElement>,
}

/// A length-`len` vector shared block by block, `pack` entries per block.
/// The last block is zero-padded when `pack` does not divide `len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareVector {
    pub len: usize,
    pub pack: usize,
    pub shares: Vec<VectorShare>,
}

impl ShareVector {
    pub fn blocks(&self) -> usize {
        block_count(self.len, self.pack)
    }

    pub fn padding(&self) -> usize {
        self.blocks() * self.pack - self.len
    }
}

pub fn block_count(len: usize, pack: usize) -> usize {
    len.div_ceil(pack)
}

/// Barycentric Lagrange basis over a fixed set of distinct nodes.
#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    field: PrimeField,
    nodes: Vec<FieldElement>,
    weights: Vec<FieldElement>,
}

impl LagrangeBasis {
    pub fn new(field: PrimeField, nodes: Vec<FieldElement>) -> Result<Self> {
        let mut denoms = Vec::with_capacity(nodes.len());
        for (i, &xi) in nodes.iter().enumerate() {
            let mut d = FieldElement::ONE;
            for (l, &xl) in nodes.iter().enumerate() {
                if l != i {
                    let diff = field.sub(xi, xl);
                    if diff.is_zero() {
                        return Err(Error::Domain(format!("duplicate evaluation point {xi}")));
                    }
                    d = field.mul(d, diff);
                }
            }
            denoms.push(d);
        }
        let weights = batch_inverse(&field, &denoms)?;
        Ok(Self { field, nodes, weights })
    }

    pub fn nodes(&self) -> &[FieldElement] {
        &self.nodes
    }

    /// `c` such that `f(x) = sum c_i f(nodes_i)` for every polynomial of
    /// degree below the node count.
    pub fn coefficients_at(&self, x: FieldElement) -> Vec<FieldElement> {
        let f = &self.field;
        if let Some(pos) = self.nodes.iter().position(|&n| n == x) {
            let mut unit = vec![FieldElement::ZERO; self.nodes.len()];
            unit[pos] = FieldElement::ONE;
            return unit;
        }
        let diffs: Vec<_> = self.nodes.iter().map(|&n| f.sub(x, n)).collect();
        let ell = diffs.iter().fold(FieldElement::ONE, |acc, &d| f.mul(acc, d));
        let inv = batch_inverse(f, &diffs).expect("x is not a node");
        self.weights
            .iter()
            .zip(&inv)
            .map(|(&w, &di)| f.mul(ell, f.mul(w, di)))
            .collect()
    }
}

fn batch_inverse(field: &PrimeField, xs: &[FieldElement]) -> Result<Vec<FieldElement>> {
    let mut prefix = Vec::with_capacity(xs.len());
    let mut acc = FieldElement::ONE;
    for &x in xs {
        prefix.push(acc);
        acc = field.mul(acc, x);
    }
    let mut inv = field.inv(acc)?;
    let mut out = vec![FieldElement::ZERO; xs.len()];
    for i in (0..xs.len()).rev() {
        out[i] = field.mul(inv, prefix[i]);
        inv = field.mul(inv, xs[i]);
    }
    Ok(out)
}

/// Packed `(t, n, k)` sharing configuration with precomputed share matrix.
#[derive(Clone, Debug)]
pub struct PackedScheme {
    field: PrimeField,
    threshold: usize,
    pack: usize,
    share_count: usize,
    secret_points: Vec<FieldElement>,
    share_points: Vec<FieldElement>,
    // rows for shares t..=n over [secrets; random shares 1..t-1]
    share_matrix: Vec<Vec<FieldElement>>,
}

impl PackedScheme {
    pub fn new(field: PrimeField, threshold: usize, share_count: usize, pack: usize) -> Result<Self> {
        if threshold == 0 || pack == 0 {
            return Err(Error::Config(format!(
                "threshold and pack width must be positive (t={threshold}, k={pack})"
            )));
        }
        if threshold + pack - 1 > share_count {
            return Err(Error::Infeasible(format!(
                "t + k - 1 = {} exceeds share count n = {share_count}",
                threshold + pack - 1
            )));
        }
        if (share_count + pack) as u128 >= field.modulus() as u128 {
            return Err(Error::FieldTooSmall { shares: share_count, pack, modulus: field.modulus() });
        }
        let secret_points: Vec<_> = (1..=pack as i64).map(|i| field.from_i64(-i)).collect();
        let share_points: Vec<_> = (1..=share_count as u64).map(|i| field.element(i)).collect();

        let mut nodes = secret_points.clone();
        nodes.extend_from_slice(&share_points[..threshold - 1]);
        let basis = LagrangeBasis::new(field, nodes)?;
        let share_matrix = share_points[threshold - 1..]
            .iter()
            .map(|&x| basis.coefficients_at(x))
            .collect();

        Ok(Self { field, threshold, pack, share_count, secret_points, share_points, share_matrix })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn pack(&self) -> usize {
        self.pack
    }

    pub fn share_count(&self) -> usize {
        self.share_count
    }

    /// Shares needed for plain reconstruction, `t + k - 1`.
    pub fn reconstruction_threshold(&self) -> usize {
        self.threshold + self.pack - 1
    }

    /// Shares needed for error-detecting reconstruction, `t + k`.
    pub fn verified_threshold(&self) -> usize {
        self.threshold + self.pack
    }

    pub fn secret_points(&self) -> &[FieldElement] {
        &self.secret_points
    }

    pub fn share_points(&self) -> &[FieldElement] {
        &self.share_points
    }

    /// Share point of the party at 0-based `position`.
    pub fn share_point(&self, position: usize) -> FieldElement {
        self.share_points[position]
    }

    pub fn share<R: Rng + ?Sized>(&self, secrets: &[FieldElement], rng: &mut R) -> Result<PackedShareSet> {
        let randomness: Vec<_> = (0..self.threshold - 1).map(|_| self.field.random(rng)).collect();
        self.share_with_randomness(secrets, &randomness)
    }

    /// Deterministic sharing given the `t - 1` random shares explicitly.
    pub fn share_with_randomness(
        &self,
        secrets: &[FieldElement],
        randomness: &[FieldElement],
    ) -> Result<PackedShareSet> {
        let values = self.share_values(secrets, randomness)?;
        let shares = self
            .share_points
            .iter()
            .zip(values)
            .map(|(&point, value)| Share { point, value })
            .collect();
        Ok(PackedShareSet { threshold: self.threshold, pack: self.pack, shares })
    }

    fn share_values(&self, secrets: &[FieldElement], randomness: &[FieldElement]) -> Result<Vec<FieldElement>> {
        if secrets.len() != self.pack {
            return Err(Error::Config(format!("expected {} secrets, got {}", self.pack, secrets.len())));
        }
        if randomness.len() != self.threshold - 1 {
            return Err(Error::Config(format!(
                "expected {} random values, got {}",
                self.threshold - 1,
                randomness.len()
            )));
        }
        let mut known = Vec::with_capacity(self.reconstruction_threshold());
        known.extend_from_slice(secrets);
        known.extend_from_slice(randomness);
        let mut out = Vec::with_capacity(self.share_count);
        out.extend_from_slice(randomness);
        out.extend(self.share_matrix.iter().map(|row| self.field.dot(row, &known)));
        Ok(out)
    }

    /// Plain reconstruction from the first `t + k - 1` of `shares`.
    pub fn reconstruct(&self, shares: &[Share]) -> Result<Vec<FieldElement>> {
        let points: Vec<_> = shares.iter().map(|s| s.point).collect();
        let values: Vec<_> = shares.iter().map(|s| s.value).collect();
        self.reconstructor(&points, false)?.secrets(&values)
    }

    /// Error-detecting reconstruction: needs `t + k` shares. Every share
    /// outside the first qualified subset must lie on the polynomial it
    /// defines, and a second, different qualified subset must produce the
    /// same secrets.
    pub fn reconstruct_verified(&self, shares: &[Share]) -> Result<Vec<FieldElement>> {
        let points: Vec<_> = shares.iter().map(|s| s.point).collect();
        let values: Vec<_> = shares.iter().map(|s| s.value).collect();
        self.reconstructor(&points, true)?.secrets(&values)
    }

    /// Precomputes reconstruction coefficients for a fixed list of share
    /// points, so that many blocks shared over the same parties reuse them.
    pub fn reconstructor(&self, points: &[FieldElement], verified: bool) -> Result<Reconstructor> {
        let need = if verified { self.verified_threshold() } else { self.reconstruction_threshold() };
        if points.len() < need {
            return Err(Error::ThresholdNotMet { have: points.len(), need });
        }
        for (i, p) in points.iter().enumerate() {
            if self.secret_points.contains(p) {
                return Err(Error::Domain(format!("share point {p} collides with a secret point")));
            }
            if points[..i].contains(p) {
                return Err(Error::Domain(format!("duplicate share point {p}")));
            }
        }
        let base = self.reconstruction_threshold();
        let primary = LagrangeBasis::new(self.field, points[..base].to_vec())?;
        let primary_rows = self.secret_points.iter().map(|&s| primary.coefficients_at(s)).collect();

        let check = if verified {
            let extra_rows = points[base..].iter().map(|&x| primary.coefficients_at(x)).collect();
            let tail = points.len() - base;
            let second = LagrangeBasis::new(self.field, points[tail..].to_vec())?;
            let second_rows = self.secret_points.iter().map(|&s| second.coefficients_at(s)).collect();
            Some(Verification { extra_rows, second_offset: tail, second_rows })
        } else {
            None
        };

        Ok(Reconstructor { field: self.field, count: points.len(), base, primary_rows, check })
    }

    /// Shares a vector block by block with zero padding on the last block.
    pub fn share_vector<R: Rng + ?Sized>(&self, vector: &[FieldElement], rng: &mut R) -> Result<ShareVector> {
        let blocks = block_count(vector.len(), self.pack);
        let mut shares: Vec<VectorShare> = self
            .share_points
            .iter()
            .map(|&point| VectorShare { point, values: Vec::with_capacity(blocks) })
            .collect();
        let mut secrets = vec![FieldElement::ZERO; self.pack];
        let mut randomness = vec![FieldElement::ZERO; self.threshold - 1];
        for chunk in vector.chunks(self.pack) {
            secrets.fill(FieldElement::ZERO);
            secrets[..chunk.len()].copy_from_slice(chunk);
            for r in randomness.iter_mut() {
                *r = self.field.random(rng);
            }
            for (share, value) in shares.iter_mut().zip(self.share_values(&secrets, &randomness)?) {
                share.values.push(value);
            }
        }
        Ok(ShareVector { len: vector.len(), pack: self.pack, shares })
    }

    pub fn reconstruct_vector(&self, shares: &[VectorShare], len: usize) -> Result<Vec<FieldElement>> {
        self.reconstruct_vector_inner(shares, len, false)
    }

    pub fn reconstruct_vector_verified(&self, shares: &[VectorShare], len: usize) -> Result<Vec<FieldElement>> {
        self.reconstruct_vector_inner(shares, len, true)
    }

    fn reconstruct_vector_inner(&self, shares: &[VectorShare], len: usize, verified: bool) -> Result<Vec<FieldElement>> {
        let blocks = block_count(len, self.pack);
        if let Some(bad) = shares.iter().find(|s| s.values.len() != blocks) {
            return Err(Error::Config(format!(
                "share at point {} carries {} blocks, expected {blocks}",
                bad.point,
                bad.values.len()
            )));
        }
        let points: Vec<_> = shares.iter().map(|s| s.point).collect();
        let rec = self.reconstructor(&points, verified)?;
        let mut out = Vec::with_capacity(blocks * self.pack);
        let mut column = Vec::with_capacity(shares.len());
        for b in 0..blocks {
            column.clear();
            column.extend(shares.iter().map(|s| s.values[b]));
            out.extend(rec.secrets(&column)?);
        }
        out.truncate(len);
        Ok(out)
    }
}

#[derive(Clone, Debug)]
struct Verification {
    extra_rows: Vec<Vec<FieldElement>>,
    second_offset: usize,
    second_rows: Vec<Vec<FieldElement>>,
}

/// Reconstruction coefficients bound to one ordered list of share points.
#[derive(Clone, Debug)]
pub struct Reconstructor {
    field: PrimeField,
    count: usize,
    base: usize,
    primary_rows: Vec<Vec<FieldElement>>,
    check: Option<Verification>,
}

impl Reconstructor {
    pub fn is_verified(&self) -> bool {
        self.check.is_some()
    }

    /// Secrets from share values listed in the same order as the points.
    pub fn secrets(&self, values: &[FieldElement]) -> Result<Vec<FieldElement>> {
        if values.len() != self.count {
            return Err(Error::Config(format!("expected {} share values, got {}", self.count, values.len())));
        }
        let f = &self.field;
        let base = &values[..self.base];
        let secrets: Vec<_> = self.primary_rows.iter().map(|row| f.dot(row, base)).collect();
        if let Some(check) = &self.check {
            for (row, &actual) in check.extra_rows.iter().zip(&values[self.base..]) {
                if f.dot(row, base) != actual {
                    return Err(Error::TamperDetected);
                }
            }
            let second = &values[check.second_offset..];
            for (row, &s) in check.second_rows.iter().zip(&secrets) {
                if f.dot(row, second) != s {
                    return Err(Error::TamperDetected);
                }
            }
        }
        Ok(secrets)
    }
}

/// Pointwise sum of two share lists over the same points.
pub fn add_shares(field: &PrimeField, a: &[Share], b: &[Share]) -> Result<Vec<Share>> {
    if a.len() != b.len() {
        return Err(Error::Config(format!("share count mismatch: {} vs {}", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.point != y.point {
                return Err(Error::Config(format!("evaluation point mismatch: {} vs {}", x.point, y.point)));
            }
            Ok(Share { point: x.point, value: field.add(x.value, y.value) })
        })
        .collect()
}

impl PackedShareSet {
    /// Share-set addition; both sets must come from the same `(t, k)` scheme.
    pub fn add(&self, field: &PrimeField, other: &PackedShareSet) -> Result<PackedShareSet> {
        if self.threshold != other.threshold || self.pack != other.pack {
            return Err(Error::Config(format!(
                "configuration mismatch: (t={}, k={}) vs (t={}, k={})",
                self.threshold, self.pack, other.threshold, other.pack
            )));
        }
        Ok(PackedShareSet {
            threshold: self.threshold,
            pack: self.pack,
            shares: add_shares(field, &self.shares, &other.shares)?,
        })
    }
}
