//! Hypergeometric probabilities in the log domain.
//!
//! Point masses use Loader's saddle-point form (Stirling-series error terms
//! plus the binomial deviance `bd0`), which keeps full relative precision
//! even when the population runs to 10^8 and the terms are far below
//! `f64::MIN_POSITIVE`. Tails are summed directly on the requested side,
//! starting from the largest term in range and walking outward with the
//! ratio recurrence, so a survival probability of 1e-40 is never formed as
//! `1 - cdf`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Natural log of a probability; `-inf` encodes an impossible event.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn new(ln: f64) -> Self {
        debug_assert!(ln <= 1e-12 || ln.is_nan(), "log-probability {ln} > 0");
        LogProb(ln.min(0.0))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn log2(self) -> f64 {
        self.0 / LN_2
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_impossible(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

// ln(n!) - ln(sqrt(2 pi n) (n/e)^n) for n = 0..=15
#[allow(clippy::excessive_precision)]
const STIRLERR_TABLE: [f64; 16] = [
    0.0,
    0.08106146679532725822,
    0.041340695955409294094,
    0.027677925684998339149,
    0.020790672103765093112,
    0.016644691189821192163,
    0.013876128823070747999,
    0.011896709945891770095,
    0.010411265261972096497,
    0.0092554621827127329177,
    0.0083305634333628712565,
    0.007573675487951840795,
    0.0069428401072095298657,
    0.0064089941880042070684,
    0.0059513701127588477356,
    0.005554733551962801371,
];

fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return STIRLERR_TABLE[n as usize];
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// ln of the binomial mass `C(n, x) p^x q^(n-x)` with `q = 1 - p` given.
fn ln_binom_raw(x: f64, n: f64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if x == 0.0 {
        if n == 0.0 {
            return 0.0;
        }
        return if p < 0.1 { -bd0(n, n * q) - n * p } else { n * q.ln() };
    }
    if x == n {
        return if q < 0.1 { -bd0(n, n * p) - n * q } else { n * p.ln() };
    }
    if x < 0.0 || x > n {
        return f64::NEG_INFINITY;
    }
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(x, n * p) - bd0(n - x, n * q);
    let lf = (2.0 * PI).ln() + x.ln() + (-x / n).ln_1p();
    lc - 0.5 * lf
}

fn check(population: u64, successes: u64, draws: u64) -> Result<()> {
    if successes > population || draws > population {
        return Err(Error::Domain(format!(
            "hypergeometric parameters out of range: N={population}, K={successes}, draws={draws}"
        )));
    }
    Ok(())
}

fn support(population: u64, successes: u64, draws: u64) -> (u64, u64) {
    (draws.saturating_sub(population - successes), successes.min(draws))
}

fn raw_ln_pmf(i: u64, population: u64, successes: u64, draws: u64) -> f64 {
    let (lo, hi) = support(population, successes, draws);
    if i < lo || i > hi {
        return f64::NEG_INFINITY;
    }
    if draws == 0 || draws == population {
        return 0.0;
    }
    let (x, r, b, n) = (i as f64, successes as f64, (population - successes) as f64, draws as f64);
    let total = population as f64;
    let p = n / total;
    let q = (total - n) / total;
    let p1 = ln_binom_raw(x, r, p, q);
    let p2 = ln_binom_raw(n - x, b, p, q);
    let p3 = ln_binom_raw(n, total, p, q);
    p1 + p2 - p3
}

/// `ln P[X = i]` for `X ~ Hypergeometric(population, successes, draws)`.
pub fn hg_log_pmf(i: u64, population: u64, successes: u64, draws: u64) -> Result<LogProb> {
    check(population, successes, draws)?;
    Ok(LogProb::new(raw_ln_pmf(i, population, successes, draws)))
}

/// `ln sum_{i=lo}^{hi} P[X = i]` for a non-empty range inside the support.
fn ln_range_sum(lo: u64, hi: u64, population: u64, successes: u64, draws: u64) -> f64 {
    debug_assert!(lo <= hi);
    let mode = ((draws as f64 + 1.0) * (successes as f64 + 1.0) / (population as f64 + 2.0)).floor() as u64;
    let start = mode.clamp(lo, hi);
    let anchor = raw_ln_pmf(start, population, successes, draws);
    if anchor == f64::NEG_INFINITY {
        return anchor;
    }
    let (n, k, d) = (population as f64, successes as f64, draws as f64);
    // P[i+1] / P[i]
    let ratio = |i: f64| (k - i) * (d - i) / ((i + 1.0) * (n - k - d + i + 1.0));

    let mut sum = 1.0f64;
    let mut term = 1.0f64;
    for i in start..hi {
        term *= ratio(i as f64);
        sum += term;
        if term <= sum * 1e-18 {
            break;
        }
    }
    term = 1.0;
    for i in (lo..start).rev() {
        term /= ratio(i as f64);
        sum += term;
        if term <= sum * 1e-18 {
            break;
        }
    }
    anchor + sum.ln()
}

/// `ln P[X <= x]`.
pub fn hg_log_cdf(x: u64, population: u64, successes: u64, draws: u64) -> Result<LogProb> {
    check(population, successes, draws)?;
    let (lo, hi) = support(population, successes, draws);
    if x < lo {
        return Ok(LogProb::ZERO);
    }
    if x >= hi {
        return Ok(LogProb::ONE);
    }
    Ok(LogProb::new(ln_range_sum(lo, x, population, successes, draws)))
}

/// `ln P[X > x]`, summed over the upper tail directly.
pub fn hg_log_sf(x: u64, population: u64, successes: u64, draws: u64) -> Result<LogProb> {
    check(population, successes, draws)?;
    let (lo, hi) = support(population, successes, draws);
    if x >= hi {
        return Ok(LogProb::ZERO);
    }
    if x < lo {
        return Ok(LogProb::ONE);
    }
    Ok(LogProb::new(ln_range_sum(x + 1, hi, population, successes, draws)))
}
