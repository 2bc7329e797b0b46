//! Group size and threshold selection from security and availability targets.
//!
//! A group is *corrupted* when at least `t` of its members are adversarial,
//! and *fails* when more members drop out than the group can spare while
//! still reaching the reconstruction share count (`t + k - 1`, or `t + k`
//! with error-detecting reconstruction). Both per-group events are
//! hypergeometric: a member's `g` group-mates are drawn from the other
//! `n - 1` parties, `floor(gamma * n)` (resp. `floor(delta * n)`) of which
//! are corrupt (resp. drop out). The federation-level failure probability
//! is `1 - (1 - q)^(m n / g)` over all groups of all shard rounds, and the
//! achieved bits are its negative base-2 log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::round_size_histogram;
use crate::hypergeom::{hg_log_cdf, hg_log_sf};

/// Reported in place of +inf bits (no adversaries, no dropouts).
pub const BITS_CAP: f64 = 10_000.0;

/// Largest group the search will consider.
pub const MAX_GROUP_SIZE: usize = 100_000;

/// Which per-group availability expression to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvailabilityFormula {
    /// Per-group success = P[dropouts <= allowance].
    #[default]
    Described,
    /// Per-group success = 1 - P[dropouts <= allowance], as literally printed.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityConfig {
    pub sigma: f64,
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub n: u64,
    pub k: usize,
    pub m: usize,
    pub malicious: bool,
    #[serde(default)]
    pub availability_formula: AvailabilityFormula,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        Self {
            sigma: 40.0,
            eta: 20.0,
            gamma: 0.05,
            delta: 0.05,
            n: 1_000_000,
            k: 100,
            m: 2,
            malicious: false,
            availability_formula: AvailabilityFormula::Described,
        }
    }
}

impl SecurityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.sigma.is_nan() || self.eta.is_nan() || self.sigma < 1.0 || self.eta < 1.0 {
            return bad(format!("sigma and eta must be at least 1 (got {}, {})", self.sigma, self.eta));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.delta) {
            return bad(format!("gamma and delta must lie in [0, 1) (got {}, {})", self.gamma, self.delta));
        }
        if self.gamma + self.delta >= 1.0 {
            return bad(format!("gamma + delta must be below 1 (got {})", self.gamma + self.delta));
        }
        if self.n < 2 {
            return bad(format!("federation size must be at least 2 (got {})", self.n));
        }
        if self.k == 0 {
            return bad("pack width k must be positive".into());
        }
        if self.m < 2 {
            return bad(format!("shard count m must be at least 2 (got {})", self.m));
        }
        Ok(())
    }
}

/// A concrete, checked protocol configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub g: usize,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub n: u64,
    pub malicious: bool,
    pub achieved_sigma: f64,
    pub achieved_eta: f64,
}

impl ProtocolParams {
    /// Unchecked parameters (achieved bits left at zero), for fixtures and
    /// hand-picked configurations.
    pub fn manual(n: u64, g: usize, t: usize, k: usize, m: usize, malicious: bool) -> Self {
        Self { g, t, k, m, n, malicious, achieved_sigma: 0.0, achieved_eta: 0.0 }
    }

    pub fn required_shares(&self) -> usize {
        required_shares(self.t, self.k, self.malicious)
    }

    /// Distinct parties a client exchanges shares with, itself included.
    pub fn neighbors(&self) -> usize {
        self.m * self.g
    }

    pub fn expansion_factor(&self, field_bits: u32) -> f64 {
        self.neighbors() as f64 / self.k as f64 * field_bits as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.g < 2 || self.t == 0 || self.k == 0 || self.m < 2 {
            return Err(Error::Config(format!(
                "need g >= 2, t >= 1, k >= 1, m >= 2 (got g={}, t={}, k={}, m={})",
                self.g, self.t, self.k, self.m
            )));
        }
        if self.required_shares() > self.g {
            return Err(Error::Infeasible(format!(
                "group of {} cannot supply the {} shares reconstruction needs",
                self.g,
                self.required_shares()
            )));
        }
        if (self.n as usize) < self.g {
            return Err(Error::Infeasible(format!("federation of {} is smaller than one group of {}", self.n, self.g)));
        }
        Ok(())
    }
}

pub fn required_shares(t: usize, k: usize, malicious: bool) -> usize {
    t + k - 1 + usize::from(malicious)
}

/// `floor(fraction * n)`.
pub fn fraction_count(n: u64, fraction: f64) -> u64 {
    (fraction * n as f64).floor() as u64
}

/// Bits from per-group failure log-probabilities, `(group count, ln q)`.
fn bits_from_failures(groups: &[(f64, f64)]) -> f64 {
    if groups.iter().all(|&(_, lq)| lq == f64::NEG_INFINITY) {
        return BITS_CAP;
    }
    if groups.iter().any(|&(_, lq)| lq >= 0.0) {
        return 0.0;
    }
    let peak = groups.iter().map(|&(c, lq)| c.ln() + lq).fold(f64::NEG_INFINITY, f64::max);
    let ln_p_fail = if peak < -30.0 {
        // 1 - prod (1 - q)^c = sum c q to within a relative 2^-40
        let s: f64 = groups.iter().map(|&(c, lq)| (c.ln() + lq - peak).exp()).sum();
        peak + s.ln()
    } else {
        let ln_ok: f64 = groups.iter().map(|&(c, lq)| c * (-lq.exp()).ln_1p()).sum();
        let p_fail = -ln_ok.exp_m1();
        if p_fail <= 0.0 {
            return BITS_CAP;
        }
        p_fail.ln()
    };
    (-ln_p_fail / std::f64::consts::LN_2).clamp(0.0, BITS_CAP)
}

fn ln_corruption(size: usize, t: usize, n: u64, gamma: f64) -> f64 {
    let population = n - 1;
    let corrupt = fraction_count(n, gamma).min(population);
    let draws = (size as u64).min(population);
    hg_log_sf(t as u64 - 1, population, corrupt, draws).expect("parameters in range").ln()
}

fn ln_group_failure(
    size: usize,
    t: usize,
    k: usize,
    n: u64,
    delta: f64,
    malicious: bool,
    formula: AvailabilityFormula,
) -> f64 {
    let required = required_shares(t, k, malicious);
    if required > size {
        return 0.0;
    }
    let allowance = (size - required) as u64;
    let population = n - 1;
    let dropouts = fraction_count(n, delta).min(population);
    let draws = (size as u64).min(population);
    match formula {
        AvailabilityFormula::Described => hg_log_sf(allowance, population, dropouts, draws),
        AvailabilityFormula::Literal => hg_log_cdf(allowance, population, dropouts, draws),
    }
    .expect("parameters in range")
    .ln()
}

/// Security bits with `m n / g` equally sized groups.
pub fn achieved_security(g: usize, t: usize, n: u64, gamma: f64, m: usize) -> f64 {
    assert!(t >= 1 && g >= 1 && n >= 2);
    let groups = m as f64 * n as f64 / g as f64;
    bits_from_failures(&[(groups, ln_corruption(g, t, n, gamma))])
}

/// Availability bits with `m n / g` equally sized groups.
pub fn achieved_availability(g: usize, t: usize, k: usize, n: u64, delta: f64, m: usize, malicious: bool) -> f64 {
    achieved_availability_with(g, t, k, n, delta, m, malicious, AvailabilityFormula::Described)
}

#[allow(clippy::too_many_arguments)]
pub fn achieved_availability_with(
    g: usize,
    t: usize,
    k: usize,
    n: u64,
    delta: f64,
    m: usize,
    malicious: bool,
    formula: AvailabilityFormula,
) -> f64 {
    let groups = m as f64 * n as f64 / g as f64;
    bits_from_failures(&[(groups, ln_group_failure(g, t, k, n, delta, malicious, formula))])
}

fn layout(n: u64, g: usize, m: usize) -> Vec<(usize, f64)> {
    let mut sizes = std::collections::BTreeMap::new();
    for round in 0..m {
        for (size, count) in round_size_histogram(n as usize, g, round) {
            *sizes.entry(size).or_insert(0usize) += count;
        }
    }
    sizes.into_iter().map(|(s, c)| (s, c as f64)).collect()
}

/// Security bits over the actual group sizes the assignment produces
/// (merged tail groups included).
pub fn security_for_layout(g: usize, t: usize, n: u64, gamma: f64, m: usize) -> f64 {
    let groups: Vec<_> = layout(n, g, m)
        .into_iter()
        .map(|(size, count)| (count, ln_corruption(size, t, n, gamma)))
        .collect();
    bits_from_failures(&groups)
}

#[allow(clippy::too_many_arguments)]
pub fn availability_for_layout(
    g: usize,
    t: usize,
    k: usize,
    n: u64,
    delta: f64,
    m: usize,
    malicious: bool,
    formula: AvailabilityFormula,
) -> f64 {
    let groups: Vec<_> = layout(n, g, m)
        .into_iter()
        .map(|(size, count)| (count, ln_group_failure(size, t, k, n, delta, malicious, formula)))
        .collect();
    bits_from_failures(&groups)
}

/// `(2g / k) * field_bits`: per-client traffic relative to sending the
/// input in the clear.
pub fn expansion_factor(g: usize, k: usize, field_bits: u32) -> f64 {
    assert!(k >= 1);
    2.0 * g as f64 / k as f64 * field_bits as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binding {
    Security,
    Availability,
    Conflict,
}

impl std::fmt::Display for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Binding::Security => "security (sigma)",
            Binding::Availability => "availability (eta)",
            Binding::Conflict => "security and availability cannot both be met",
        })
    }
}

struct Planner<'a> {
    cfg: &'a SecurityConfig,
}

impl Planner<'_> {
    fn security(&self, g: usize, t: usize) -> f64 {
        let c = self.cfg;
        achieved_security(g, t, c.n, c.gamma, c.m).min(security_for_layout(g, t, c.n, c.gamma, c.m))
    }

    fn availability(&self, g: usize, t: usize) -> f64 {
        let c = self.cfg;
        achieved_availability_with(g, t, c.k, c.n, c.delta, c.m, c.malicious, c.availability_formula).min(
            availability_for_layout(g, t, c.k, c.n, c.delta, c.m, c.malicious, c.availability_formula),
        )
    }

    /// Best threshold for group size `g`, or the constraint that fails.
    fn threshold_for(&self, g: usize) -> std::result::Result<(usize, f64, f64), Binding> {
        let c = self.cfg;
        let t_max = match (g + 1).checked_sub(c.k + usize::from(c.malicious)) {
            Some(t) if t >= 1 => t,
            _ => return Err(Binding::Availability),
        };
        if self.availability(g, 1) < c.eta {
            return Err(Binding::Availability);
        }
        if self.security(g, t_max) < c.sigma {
            return Err(Binding::Security);
        }
        // smallest t meeting sigma; security grows with t
        let t_sec = partition_point(1, t_max, |t| self.security(g, t) < c.sigma);
        // largest t meeting eta; availability shrinks with t
        let t_av = partition_point(1, t_max, |t| self.availability(g, t) >= c.eta) - 1;
        if t_sec > t_av {
            return Err(Binding::Conflict);
        }
        // balance the two slacks: their difference grows with t
        let slack = |t: usize| (self.security(g, t) - c.sigma, self.availability(g, t) - c.eta);
        let cross = partition_point(t_sec, t_av, |t| {
            let (s, a) = slack(t);
            s < a
        });
        let mut best = None;
        for t in [cross.saturating_sub(1), cross] {
            if t < t_sec || t > t_av {
                continue;
            }
            let (s, a) = slack(t);
            let score = s.min(a);
            if best.is_none_or(|(_, b, _, _)| score > b) {
                best = Some((t, score, s + c.sigma, a + c.eta));
            }
        }
        let (t, _, sec, av) = best.expect("non-empty threshold range");
        Ok((t, sec, av))
    }
}

/// First value in `lo..=hi` where `pred` turns false, `hi + 1` if never.
fn partition_point(lo: usize, hi: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut a, mut b) = (lo, hi + 1);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    a
}

/// Smallest group size (and balanced threshold) meeting both targets.
///
/// Group sizes are searched by doubling followed by binary refinement and a
/// short downward scan, since feasibility is only nearly monotone in `g`
/// once merged tail groups enter the picture.
pub fn find_params(cfg: &SecurityConfig) -> Result<ProtocolParams> {
    cfg.validate()?;
    let planner = Planner { cfg };
    let g_min = (cfg.k + usize::from(cfg.malicious)).max(2);
    let g_max = ((cfg.n / cfg.m as u64) as usize).min(MAX_GROUP_SIZE);
    if g_min > g_max {
        return Err(Error::Infeasible(format!(
            "federation of {} cannot host {} rounds of groups of at least {g_min}",
            cfg.n, cfg.m
        )));
    }

    let mut lower = g_min - 1;
    let mut g = g_min;
    loop {
        match planner.threshold_for(g) {
            Ok(_) => break,
            Err(binding) if g == g_max => {
                return Err(Error::Infeasible(format!(
                    "no (g, t) with g <= {g_max} meets the targets; binding constraint: {binding}"
                )))
            }
            Err(_) => {
                lower = g;
                g = (g * 2).min(g_max);
            }
        }
    }
    let mut upper = g;
    while upper - lower > 1 {
        let mid = lower + (upper - lower) / 2;
        if planner.threshold_for(mid).is_ok() {
            upper = mid;
        } else {
            lower = mid;
        }
    }
    let mut best = upper;
    for cand in upper.saturating_sub(16).max(g_min)..upper {
        if planner.threshold_for(cand).is_ok() {
            best = cand;
            break;
        }
    }
    let (t, achieved_sigma, achieved_eta) = planner.threshold_for(best).expect("feasible");
    let params = ProtocolParams {
        g: best,
        t,
        k: cfg.k,
        m: cfg.m,
        n: cfg.n,
        malicious: cfg.malicious,
        achieved_sigma,
        achieved_eta,
    };
    debug_assert!(params.validate().is_ok());
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_adversary_means_capped_bits() {
        assert_eq!(achieved_security(20, 3, 1000, 0.0, 2), BITS_CAP);
        assert_eq!(achieved_availability(20, 3, 5, 1000, 0.0, 2, true), BITS_CAP);
    }

    #[test]
    fn oversized_requirement_gives_zero_bits() {
        assert_eq!(achieved_availability(10, 8, 5, 1000, 0.05, 2, false), 0.0);
    }

    #[test]
    fn security_monotone_in_threshold_and_gamma() {
        let mut prev = 0.0;
        for t in 1..30 {
            let bits = achieved_security(40, t, 5000, 0.1, 2);
            assert!(bits >= prev, "t={t}");
            prev = bits;
        }
        let mut prev = f64::INFINITY;
        for gamma in [0.01, 0.02, 0.05, 0.1, 0.2, 0.3] {
            let bits = achieved_security(40, 15, 5000, gamma, 2);
            assert!(bits <= prev);
            prev = bits;
        }
    }

    #[test]
    fn availability_monotone() {
        let mut prev = f64::INFINITY;
        for delta in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let bits = achieved_availability(60, 10, 20, 10_000, delta, 2, true);
            assert!(bits <= prev);
            prev = bits;
        }
        // more slack (g - t) at fixed g, k is never worse
        let mut prev = 0.0;
        for t in (1..=30).rev() {
            let bits = achieved_availability(60, t, 20, 10_000, 0.05, 2, true);
            assert!(bits >= prev);
            prev = bits;
        }
    }

    #[test]
    fn tight_malicious_groups_are_fragile() {
        // g = t + k: a single dropout kills a group
        let bits = achieved_availability(30, 10, 20, 1_000_000, 0.05, 2, true);
        assert!(bits < 0.01, "{bits}");
    }

    #[test]
    fn no_threat_gives_smallest_legal_group() {
        let cfg = SecurityConfig { gamma: 0.0, delta: 0.0, n: 10_000, k: 100, malicious: true, ..Default::default() };
        let p = find_params(&cfg).unwrap();
        assert_eq!((p.g, p.t), (101, 1));
        let cfg = SecurityConfig { k: 1, ..cfg };
        let p = find_params(&cfg).unwrap();
        assert_eq!((p.g, p.t), (2, 1));
    }

    #[test]
    fn returned_params_meet_targets() {
        for (n, k, malicious) in [(1_000u64, 10usize, false), (50_000, 20, true), (2_000_000, 100, true)] {
            let cfg = SecurityConfig { n, k, malicious, ..Default::default() };
            let p = find_params(&cfg).unwrap();
            assert!(p.validate().is_ok());
            assert!(p.achieved_sigma >= cfg.sigma && p.achieved_eta >= cfg.eta, "{p:?}");
            assert!(achieved_security(p.g, p.t, n, cfg.gamma, 2) >= cfg.sigma);
            assert!(achieved_availability(p.g, p.t, k, n, cfg.delta, 2, malicious) >= cfg.eta);
            // one size smaller is not feasible at any threshold
            let smaller = Planner { cfg: &cfg }.threshold_for(p.g - 1);
            assert!(smaller.is_err(), "g-1 = {} also feasible", p.g - 1);
        }
    }

    #[test]
    fn infeasible_reports_binding_constraint() {
        let cfg = SecurityConfig { n: 300, gamma: 0.45, delta: 0.45, k: 10, ..Default::default() };
        match find_params(&cfg) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("binding constraint"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SecurityConfig::default();
        for bad in [
            SecurityConfig { gamma: 0.6, delta: 0.5, ..base.clone() },
            SecurityConfig { sigma: 0.0, ..base.clone() },
            SecurityConfig { m: 1, ..base.clone() },
            SecurityConfig { k: 0, ..base.clone() },
            SecurityConfig { gamma: -0.1, ..base.clone() },
        ] {
            assert!(matches!(find_params(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn expansion_examples() {
        assert_eq!(expansion_factor(50, 100, 61), 61.0);
        let mut prev = f64::INFINITY;
        for k in [1, 10, 100, 1000] {
            let ex = expansion_factor(175, k, 61);
            assert!(ex < prev);
            prev = ex;
        }
    }

    #[test]
    fn literal_formula_differs() {
        let a = achieved_availability_with(200, 30, 100, 100_000, 0.05, 2, true, AvailabilityFormula::Described);
        let b = achieved_availability_with(200, 30, 100, 100_000, 0.05, 2, true, AvailabilityFormula::Literal);
        assert!(a > 20.0 && b < 1.0, "{a} {b}");
    }
}
