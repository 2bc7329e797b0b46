mod common;

use common::{lagrange_at, neg, subsets_at_least};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shardagg::field::{FieldElement, PrimeField, MERSENNE_61};
use shardagg::shamir::{add_shares, PackedScheme, Share};
use shardagg::Error;

fn values(v: &[FieldElement]) -> Vec<u64> {
    v.iter().map(|e| e.value()).collect()
}

fn pick(shares: &[Share], subset: &[usize]) -> Vec<Share> {
    subset.iter().map(|&i| shares[i]).collect()
}

/// Every scheme that fits in F_13 with at most 8 shares.
fn small_configs() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for n in 1..=8usize {
        for t in 1..=n {
            for k in 1..=n {
                if t + k - 1 <= n && n + k < 13 {
                    out.push((t, k, n));
                }
            }
        }
    }
    out
}

#[test]
fn shares_lie_on_the_oracle_polynomial() {
    let p = 13;
    let field = PrimeField::new(p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (t, k, n) in small_configs() {
        let scheme = PackedScheme::new(field, t, n, k).unwrap();
        let secrets: Vec<u64> = (0..k).map(|_| rng.gen_range(0..p)).collect();
        let randomness: Vec<u64> = (0..t - 1).map(|_| rng.gen_range(0..p)).collect();
        let set = scheme
            .share_with_randomness(
                &secrets.iter().map(|&s| field.element(s)).collect::<Vec<_>>(),
                &randomness.iter().map(|&s| field.element(s)).collect::<Vec<_>>(),
            )
            .unwrap();
        // the polynomial is pinned by the secrets at -1..-k and the random
        // values at 1..t-1
        let mut xs: Vec<u64> = (1..=k as u64).map(|i| neg(i, p)).collect();
        xs.extend(1..t as u64);
        let ys: Vec<u64> = secrets.iter().chain(&randomness).copied().collect();
        for (i, share) in set.shares.iter().enumerate() {
            assert_eq!(share.point.value(), i as u64 + 1);
            assert_eq!(share.value.value(), lagrange_at(p, &xs, &ys, i as u64 + 1), "t={t} k={k} n={n}");
        }
    }
}

#[test]
fn exhaustive_roundtrip_and_homomorphism_mod_13() {
    let p = 13;
    let field = PrimeField::new(p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    for (t, k, n) in small_configs() {
        let scheme = PackedScheme::new(field, t, n, k).unwrap();
        for _ in 0..3 {
            let a: Vec<_> = (0..k).map(|_| field.random(&mut rng)).collect();
            let b: Vec<_> = (0..k).map(|_| field.random(&mut rng)).collect();
            let sum: Vec<_> = a.iter().zip(&b).map(|(&x, &y)| field.add(x, y)).collect();
            let sa = scheme.share(&a, &mut rng).unwrap();
            let sb = scheme.share(&b, &mut rng).unwrap();
            let combined = add_shares(&field, &sa.shares, &sb.shares).unwrap();

            for subset in subsets_at_least(n, t + k - 1) {
                let got = scheme.reconstruct(&pick(&sa.shares, &subset)).unwrap();
                assert_eq!(values(&got), values(&a), "t={t} k={k} n={n} subset={subset:?}");
                let got = scheme.reconstruct(&pick(&combined, &subset)).unwrap();
                assert_eq!(values(&got), values(&sum));
                if subset.len() >= t + k {
                    let got = scheme.reconstruct_verified(&pick(&combined, &subset)).unwrap();
                    assert_eq!(values(&got), values(&sum));
                }
                checked += 1;
            }
            for subset in subsets_at_least(n, 0).into_iter().filter(|s| s.len() < t + k - 1) {
                assert!(matches!(
                    scheme.reconstruct(&pick(&sa.shares, &subset)),
                    Err(Error::ThresholdNotMet { .. })
                ));
            }
        }
    }
    assert!(checked > 1000, "only {checked} subsets exercised");
}

/// Counts how often each joint view of the shares at `positions` occurs
/// over all sharing randomness, for a fixed secret vector.
fn view_histogram(scheme: &PackedScheme, field: &PrimeField, secrets: &[u64], positions: &[usize]) -> Vec<usize> {
    let p = field.modulus();
    let t = scheme.threshold();
    let secrets: Vec<_> = secrets.iter().map(|&s| field.element(s)).collect();
    let mut hist = vec![0usize; (p as usize).pow(positions.len() as u32)];
    for r in 0..p.pow(t as u32 - 1) {
        let randomness: Vec<_> = (0..t - 1).map(|i| field.element(r / p.pow(i as u32) % p)).collect();
        let set = scheme.share_with_randomness(&secrets, &randomness).unwrap();
        let idx = positions.iter().fold(0usize, |acc, &i| acc * p as usize + set.shares[i].value.value() as usize);
        hist[idx] += 1;
    }
    hist
}

#[test]
fn fewer_than_t_shares_are_independent_of_the_secret() {
    let field = PrimeField::new(13).unwrap();

    // t = 2, k = 1, n = 3: any single share is uniform for every secret
    let scheme = PackedScheme::new(field, 2, 3, 1).unwrap();
    for pos in 0..3 {
        for s in 0..13 {
            assert_eq!(view_histogram(&scheme, &field, &[s], &[pos]), vec![1; 13], "position {pos}, secret {s}");
        }
    }

    // t = 3, k = 2, n = 5: any pair of shares is uniform over F_13^2
    let scheme = PackedScheme::new(field, 3, 5, 2).unwrap();
    for pair in subsets_at_least(5, 2).into_iter().filter(|s| s.len() == 2) {
        for secrets in [[0, 0], [1, 12], [7, 3]] {
            assert_eq!(view_histogram(&scheme, &field, &secrets, &pair), vec![1; 169], "pair {pair:?}");
        }
    }
}

#[test]
fn t_shares_do_depend_on_the_secret() {
    // sanity check on the brute-force harness itself
    let field = PrimeField::new(13).unwrap();
    let scheme = PackedScheme::new(field, 2, 3, 1).unwrap();
    assert_ne!(
        view_histogram(&scheme, &field, &[0], &[0, 1]),
        view_histogram(&scheme, &field, &[1], &[0, 1])
    );
}

#[test]
fn verified_reconstruction_catches_every_single_share_tamper() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let big = PrimeField::new(MERSENNE_61).unwrap();
    let small = PrimeField::new(13).unwrap();
    let mut detected = 0;
    for trial in 0..1000 {
        let field = if trial % 4 == 0 { small } else { big };
        let t = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=3);
        let n = rng.gen_range(t + k..=(t + k + 3).min(12 - k));
        let scheme = PackedScheme::new(field, t, n, k).unwrap();
        let secrets: Vec<_> = (0..k).map(|_| field.random(&mut rng)).collect();
        let mut shares = scheme.share(&secrets, &mut rng).unwrap().shares;
        let victim = rng.gen_range(0..n);
        let delta = field.random_nonzero(&mut rng);
        shares[victim].value = field.add(shares[victim].value, delta);
        match scheme.reconstruct_verified(&shares) {
            Err(Error::TamperDetected) => detected += 1,
            other => panic!("trial {trial}: t={t} k={k} n={n} victim={victim} gave {other:?}"),
        }
    }
    assert_eq!(detected, 1000);
}

proptest! {
    #[test]
    fn roundtrip_in_the_default_field(
        t in 1usize..6,
        k in 1usize..6,
        extra in 0usize..5,
        seed in any::<u64>(),
        drop_mask in any::<u16>(),
    ) {
        let field = PrimeField::new(MERSENNE_61).unwrap();
        let n = t + k + extra;
        let scheme = PackedScheme::new(field, t, n, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let secrets: Vec<_> = (0..k).map(|_| field.random(&mut rng)).collect();
        let shares = scheme.share(&secrets, &mut rng).unwrap().shares;
        let kept: Vec<Share> = shares
            .iter()
            .enumerate()
            .filter(|(i, _)| drop_mask >> i & 1 == 0)
            .map(|(_, s)| *s)
            .collect();
        let plain = scheme.reconstruct(&kept);
        if kept.len() >= t + k - 1 {
            prop_assert_eq!(plain.unwrap(), secrets.clone());
        } else {
            prop_assert!(
                matches!(plain, Err(Error::ThresholdNotMet { .. })),
                "expected ThresholdNotMet"
            );
        }
        if kept.len() >= t + k {
            prop_assert_eq!(scheme.reconstruct_verified(&kept).unwrap(), secrets);
        }
    }

    #[test]
    fn vector_sharing_is_linear(
        len in 1usize..20,
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let field = PrimeField::new(MERSENNE_61).unwrap();
        let scheme = PackedScheme::new(field, 3, k + 4, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<_> = (0..len).map(|_| field.random(&mut rng)).collect();
        let b: Vec<_> = (0..len).map(|_| field.random(&mut rng)).collect();
        let sa = scheme.share_vector(&a, &mut rng).unwrap();
        let sb = scheme.share_vector(&b, &mut rng).unwrap();
        let summed: Vec<_> = sa
            .shares
            .iter()
            .zip(&sb.shares)
            .map(|(x, y)| {
                let mut s = x.clone();
                field.add_assign_slice(&mut s.values, &y.values);
                s
            })
            .collect();
        let expect: Vec<_> = a.iter().zip(&b).map(|(&x, &y)| field.add(x, y)).collect();
        prop_assert_eq!(scheme.reconstruct_vector_verified(&summed, len).unwrap(), expect);
    }
}
