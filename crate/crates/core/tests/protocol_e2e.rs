use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shardagg::field::{FieldElement, PrimeField};
use shardagg::params::ProtocolParams;
use shardagg::protocol::{
    server_reconstruct_output, server_subagg_collect, MessageKind, Party, RoundCollection, ShardScheme,
};
use shardagg::sim::{
    load_inputs, run_simulation, verify_privacy_ledger, Adversary, Corruption, DropoutModel, DropoutTiming,
    InputModel, SimulationConfig, Verdict,
};

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn config(n: u64, g: usize, t: usize, k: usize, malicious: bool, len: usize, seed: u64) -> SimulationConfig {
    SimulationConfig::new(ProtocolParams::manual(n, g, t, k, 2, malicious), len, seed)
}

/// Round-by-round groups recovered from who sent shares to whom.
fn groups_from_trace(report: &shardagg::sim::SimulationReport, rounds: usize) -> Vec<BTreeSet<BTreeSet<usize>>> {
    (0..rounds)
        .map(|r| {
            let mut mates: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
            for rec in report.trace.iter().filter(|rec| rec.round == r && rec.kind == MessageKind::ShareDelivery) {
                if let Party::Client(to) = rec.receiver {
                    mates.entry(rec.sender).or_default().insert(to);
                }
            }
            mates.into_values().collect()
        })
        .collect()
}

fn set(members: &[usize]) -> BTreeSet<usize> {
    members.iter().copied().collect()
}

#[test]
fn four_party_trace_reproduces_the_worked_example() {
    // parties A..D are clients 0..3; swapping C and D in the order yields
    // round one {A,B} {C,D} and round two {A,C} {B,D}
    let inputs = load_inputs(&fixture("four_party.txt"), 4, 1).unwrap();
    assert_eq!(inputs, vec![vec![1], vec![1], vec![0], vec![0]]);
    for scheme in [ShardScheme::Shamir, ShardScheme::Additive] {
        let mut cfg = config(4, 2, 1, 1, false, 1, 0);
        cfg.modulus = 5;
        cfg.permutation = Some(vec![0, 1, 3, 2]);
        cfg.inputs = InputModel::Fixed(inputs.clone());
        cfg.shard_scheme = scheme;
        cfg.record_trace = true;
        let report = run_simulation(&cfg).unwrap();

        let rounds = groups_from_trace(&report, 2);
        assert_eq!(rounds[0], BTreeSet::from([set(&[0, 1]), set(&[2, 3])]));
        assert_eq!(rounds[1], BTreeSet::from([set(&[0, 2]), set(&[1, 3])]));
        assert_eq!(report.verdict, Verdict::Match);
        assert_eq!(report.output, Some(vec![2]));
        assert_eq!(report.oracle_sum, vec![2]);
        assert!(report.ledger.as_ref().is_none_or(|l| l.honest_graph_connected));
    }
}

#[test]
fn four_party_example_over_f2_with_additive_shards() {
    let f2 = PrimeField::new(2).unwrap();
    let e = |v: u64| vec![f2.element(v)];
    // shards from the example: A = (1, 0), B = (0, 1), C = (0, 0), D = (1, 1)
    let shards = [[1u64, 0], [0, 1], [0, 0], [1, 1]];
    let rounds = [[[0usize, 1], [2, 3]], [[0, 2], [1, 3]]];
    let mut totals = Vec::new();
    for (r, groups) in rounds.iter().enumerate() {
        // each member reports its group's sum
        let reports: Vec<Vec<Vec<FieldElement>>> = groups
            .iter()
            .map(|members| {
                let s = members.iter().map(|&c| shards[c][r]).sum::<u64>() % 2;
                vec![e(s); members.len()]
            })
            .collect();
        let group_sums: Vec<u64> = reports.iter().map(|g| g[0][0].value()).collect();
        assert_eq!(group_sums, if r == 0 { vec![1, 1] } else { vec![0, 0] });
        match server_subagg_collect(&f2, 1, &reports).unwrap() {
            RoundCollection::Sum(s) => totals.push(Some(s)),
            RoundCollection::Incomplete(g) => panic!("groups {g:?} missing"),
        }
    }
    assert_eq!(totals, vec![Some(e(0)), Some(e(0))]);
    let v = server_reconstruct_output(&f2, ShardScheme::Additive, &totals).unwrap();
    assert_eq!(v, e(0));
}

#[test]
fn honest_runs_match_the_plaintext_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for run in 0..40 {
        let n = rng.gen_range(8..=256u64);
        let g = rng.gen_range(4..=(n as usize / 2).min(24));
        let k = rng.gen_range(1..=g / 2);
        let malicious = rng.gen_bool(0.5);
        let t = rng.gen_range(1..=g + 1 - k - usize::from(malicious));
        let len = rng.gen_range(1..=32);
        let cfg = config(n, g, t, k, malicious, len, run);
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Match, "n={n} g={g} t={t} k={k} mal={malicious} L={len}");
        assert_eq!(report.output.as_deref(), Some(report.oracle_sum.as_slice()));
        assert_eq!(report.covered.len(), n as usize);
    }
}

#[test]
fn share_traffic_matches_group_sizes() {
    let cfg = config(100, 10, 4, 3, true, 7, 5);
    let report = run_simulation(&cfg).unwrap();
    let squares: u64 = report.groups.iter().map(|g| (g.size * g.size) as u64).sum();
    let shares = report.counters.by_kind[&MessageKind::ShareDelivery].messages;
    assert_eq!(shares, squares);
    let reports = report.counters.by_kind[&MessageKind::GroupSumReport].messages;
    assert_eq!(reports, 2 * 100);
    assert_eq!(report.counters.server_received_messages, reports);
    assert_eq!(report.protocol_steps, shardagg::sim::PROTOCOL_STEPS);
}

#[test]
fn dropouts_before_shares_are_excluded_and_after_shares_are_counted() {
    for (timing, covered) in [(DropoutTiming::BeforeShares, 190), (DropoutTiming::AfterShares, 200)] {
        let mut cfg = config(200, 20, 5, 4, true, 5, 3);
        cfg.dropouts = DropoutModel { fraction: 0.05, timing, explicit: None };
        cfg.inputs = InputModel::Bounded(1000);
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Match, "{timing:?}");
        assert_eq!(report.covered.len(), covered, "{timing:?}");
        assert_eq!(report.client_aborts, 0);
    }
}

#[test]
fn a_group_past_its_allowance_makes_the_round_unavailable() {
    // groups of 10 need t + k = 9 shares in malicious mode; drop 3 of group 0
    let mut cfg = config(100, 10, 5, 4, true, 3, 1);
    cfg.permutation = Some((0..100).collect());
    cfg.dropouts = DropoutModel { fraction: 0.0, timing: DropoutTiming::AfterShares, explicit: Some(vec![0, 1, 2]) };
    let report = run_simulation(&cfg).unwrap();
    assert_eq!(report.verdict, Verdict::Unavailable);
    assert!(report.output.is_none());
    assert!(!report.unavailable_groups.is_empty());
}

#[test]
fn malicious_mode_aborts_on_tampered_shares() {
    let mut cfg = config(120, 12, 4, 4, true, 6, 9);
    cfg.corruption = Corruption::Fraction(0.1);
    cfg.adversary = Adversary::Mutator { rate: 1.0, kinds: vec![MessageKind::ShareDelivery] };
    let report = run_simulation(&cfg).unwrap();
    assert!(report.mutations_applied > 0);
    assert_eq!(report.verdict, Verdict::Abort);
    assert!(report.output.is_none());
}

#[test]
fn semi_honest_mode_cannot_see_a_tampered_share() {
    // the reason for the extra share: without it a single bad share goes
    // straight into the output
    let mut wrong = 0;
    for seed in 0..20 {
        let mut cfg = config(60, 10, 4, 3, false, 4, seed);
        cfg.adversary = Adversary::SingleMutation { kinds: vec![MessageKind::ShareDelivery] };
        let report = run_simulation(&cfg).unwrap();
        assert_eq!(report.mutations_applied, 1);
        wrong += usize::from(report.verdict == Verdict::Mismatch);
    }
    assert!(wrong > 0);
}

#[test]
fn observers_below_threshold_learn_nothing() {
    let mut cfg = config(400, 40, 12, 8, false, 2, 21);
    cfg.corruption = Corruption::Fraction(0.05);
    cfg.adversary = Adversary::Observer;
    let report = run_simulation(&cfg).unwrap();
    assert_eq!(report.verdict, Verdict::Match);
    let verdict = verify_privacy_ledger(&report, &cfg.params);
    assert!(verdict.violations.is_empty());
    assert!(verdict.exposed_groups.is_empty());
    assert!(verdict.clean);
}

#[test]
fn a_group_with_t_corrupt_members_is_reported_exposed() {
    let mut cfg = config(40, 10, 3, 2, false, 2, 4);
    cfg.permutation = Some((0..40).collect());
    cfg.corruption = Corruption::Explicit(vec![0, 1, 2]);
    cfg.adversary = Adversary::Observer;
    let report = run_simulation(&cfg).unwrap();
    let verdict = verify_privacy_ledger(&report, &cfg.params);
    assert!(verdict.violations.is_empty());
    assert!(verdict.exposed_groups.contains(&(0, 0)));
    assert!(!verdict.clean);
}

#[test]
fn reports_are_reproducible_from_the_seed() {
    let mut cfg = config(150, 15, 5, 5, true, 9, 77);
    cfg.dropouts = DropoutModel { fraction: 0.04, timing: DropoutTiming::Mixed, explicit: None };
    cfg.corruption = Corruption::Fraction(0.05);
    cfg.adversary = Adversary::Observer;
    let a = run_simulation(&cfg).unwrap().without_timing();
    let b = run_simulation(&cfg).unwrap().without_timing();
    assert_eq!(a, b);
    cfg.seed += 1;
    let c = run_simulation(&cfg).unwrap().without_timing();
    assert_ne!(a.oracle_sum, c.oracle_sum);
}

#[test]
fn configurations_round_trip_through_json() {
    let mut cfg = config(64, 8, 3, 2, true, 4, 12);
    cfg.dropouts = DropoutModel { fraction: 0.05, timing: DropoutTiming::AfterShares, explicit: None };
    cfg.adversary = Adversary::Mutator { rate: 0.5, kinds: vec![MessageKind::SumBroadcast] };
    let text = serde_json::to_string(&cfg).unwrap();
    let back: SimulationConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let report = run_simulation(&back).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["n"], 64);
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut cfg = config(64, 8, 3, 2, true, 4, 12);
    cfg.dropouts.fraction = 1.5;
    assert!(matches!(run_simulation(&cfg), Err(shardagg::Error::Config(_))));
    let mut cfg = config(64, 8, 3, 2, true, 4, 12);
    cfg.modulus = 11;
    assert!(run_simulation(&cfg).is_err());
    let cfg = config(64, 8, 9, 2, false, 4, 12);
    assert!(run_simulation(&cfg).is_err());
}
