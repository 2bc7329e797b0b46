mod common;

use common::{oracle_availability_bits, oracle_security_bits};
use proptest::prelude::*;
use shardagg::params::{
    achieved_availability, achieved_security, availability_for_layout, expansion_factor, find_params,
    required_shares, security_for_layout, AvailabilityFormula, ProtocolParams, SecurityConfig, BITS_CAP,
};
use shardagg::Error;

const BITS_TOL: f64 = 0.01;

fn divisors(n: u64) -> impl Iterator<Item = u64> {
    (2..=n / 2).filter(move |&g| n.is_multiple_of(g))
}

#[test]
fn security_bits_match_the_exact_oracle() {
    let mut compared = 0;
    for n in [200u64, 500, 1000, 2000] {
        for gamma in [0.05, 0.1, 0.3] {
            for g in divisors(n).filter(|&g| g <= n / 2) {
                for t in (1..=g).step_by((g as usize / 12).max(1)) {
                    let oracle = oracle_security_bits(g, t, n, gamma, 2);
                    if !oracle.is_finite() || oracle > 1000.0 {
                        continue;
                    }
                    let ours = achieved_security(g as usize, t as usize, n, gamma, 2);
                    assert!((ours - oracle).abs() <= BITS_TOL, "n={n} g={g} t={t} gamma={gamma}: {ours} vs {oracle}");
                    compared += 1;
                }
            }
        }
    }
    assert!(compared > 300, "{compared}");
}

#[test]
fn availability_bits_match_the_exact_oracle() {
    let mut compared = 0;
    for n in [200u64, 1000, 2000] {
        for delta in [0.05, 0.2] {
            for g in divisors(n).filter(|&g| g <= n / 2) {
                for k in [1u64, 5, 10] {
                    for malicious in [false, true] {
                        for t in (1..=g).step_by((g as usize / 10).max(1)) {
                            let required = required_shares(t as usize, k as usize, malicious) as u64;
                            if required > g {
                                continue;
                            }
                            let oracle = oracle_availability_bits(g, required, n, delta, 2);
                            if !oracle.is_finite() || oracle > 1000.0 {
                                continue;
                            }
                            let ours = achieved_availability(g as usize, t as usize, k as usize, n, delta, 2, malicious);
                            assert!(
                                (ours - oracle).abs() <= BITS_TOL,
                                "n={n} g={g} t={t} k={k} mal={malicious}: {ours} vs {oracle}"
                            );
                            compared += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(compared > 300, "{compared}");
}

#[test]
fn layout_agrees_with_uniform_when_groups_are_even() {
    for (n, g) in [(1000u64, 40usize), (2000, 50), (1200, 60)] {
        for t in [5, 12, 20] {
            let a = achieved_security(g, t, n, 0.05, 2);
            let b = security_for_layout(g, t, n, 0.05, 2);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            let a = achieved_availability(g, t, 3, n, 0.05, 2, true);
            let b = availability_for_layout(g, t, 3, n, 0.05, 2, true, AvailabilityFormula::Described);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn chosen_parameters_meet_targets_and_smaller_even_groups_cannot() {
    for (n, k, malicious) in [(1000u64, 10usize, false), (1000, 10, true), (2000, 5, false), (2000, 10, true)] {
        let cfg = SecurityConfig { n, k, malicious, ..SecurityConfig::default() };
        let p = find_params(&cfg).unwrap();
        assert!(p.achieved_sigma >= cfg.sigma && p.achieved_eta >= cfg.eta, "{p:?}");
        assert!(p.t + k - 1 <= p.g);
        if n % p.g as u64 == 0 {
            let required = p.required_shares() as u64;
            assert!(oracle_security_bits(p.g as u64, p.t as u64, n, cfg.gamma, 2) >= cfg.sigma - BITS_TOL);
            assert!(oracle_availability_bits(p.g as u64, required, n, cfg.delta, 2) >= cfg.eta - BITS_TOL);
        }
        // no evenly dividing smaller group admits any threshold
        for g in divisors(n).filter(|&g| (g as usize) < p.g && g as usize >= k + usize::from(malicious)) {
            let feasible = (1..=g).any(|t| {
                let required = required_shares(t as usize, k, malicious) as u64;
                required <= g
                    && oracle_security_bits(g, t, n, cfg.gamma, 2) >= cfg.sigma + BITS_TOL
                    && oracle_availability_bits(g, required, n, cfg.delta, 2) >= cfg.eta + BITS_TOL
            });
            assert!(!feasible, "n={n} k={k}: g={g} beats chosen g={}", p.g);
        }
    }
}

#[test]
fn frozen_default_sweep() {
    // regression values for k = 100, gamma = delta = 0.05, sigma = 40, eta = 20
    let expected = [
        (1_000u64, 157usize, 34usize),
        (10_000, 169, 40),
        (100_000, 170, 40),
        (1_000_000, 174, 42),
        (10_000_000, 177, 43),
        (100_000_000, 181, 45),
    ];
    for (n, g, t) in expected {
        let cfg = SecurityConfig { n, malicious: true, ..SecurityConfig::default() };
        let p = find_params(&cfg).unwrap();
        assert_eq!((p.g, p.t), (g, t), "n={n}");
        assert_eq!(p.neighbors(), 2 * g);
    }
}

#[test]
fn infeasible_targets_name_the_binding_constraint() {
    let cfg = SecurityConfig { n: 300, k: 10, gamma: 0.4, delta: 0.4, ..SecurityConfig::default() };
    match find_params(&cfg) {
        Err(Error::Infeasible(msg)) => assert!(msg.contains("binding constraint"), "{msg}"),
        other => panic!("expected infeasible, got {other:?}"),
    }
    let cfg = SecurityConfig { n: 1000, gamma: 0.7, delta: 0.4, ..SecurityConfig::default() };
    assert!(matches!(find_params(&cfg), Err(Error::Config(_))));
}

#[test]
fn no_adversary_and_no_dropouts_saturate() {
    assert_eq!(achieved_security(10, 2, 1000, 0.0, 2), BITS_CAP);
    assert_eq!(achieved_availability(10, 2, 3, 1000, 0.0, 2, true), BITS_CAP);
}

#[test]
fn expansion_factor_is_the_closed_form() {
    assert_eq!(expansion_factor(181, 100, 61), 2.0 * 181.0 / 100.0 * 61.0);
    let p = ProtocolParams::manual(1000, 50, 10, 25, 2, false);
    assert_eq!(p.expansion_factor(61), 4.0 * 61.0);
}

proptest! {
    #[test]
    fn bits_are_monotone_in_the_threshold(
        n in 200u64..5000,
        g in 10usize..100,
        t in 1usize..60,
        k in 1usize..20,
    ) {
        prop_assume!(g <= n as usize / 2 && t + 1 + k <= g);
        let s0 = achieved_security(g, t, n, 0.1, 2);
        let s1 = achieved_security(g, t + 1, n, 0.1, 2);
        prop_assert!(s1 >= s0 - 1e-9);
        let a0 = achieved_availability(g, t, k, n, 0.1, 2, false);
        let a1 = achieved_availability(g, t + 1, k, n, 0.1, 2, false);
        prop_assert!(a1 <= a0 + 1e-9);
        let am = achieved_availability(g, t, k, n, 0.1, 2, true);
        prop_assert!(am <= a0 + 1e-9);
    }
}
