//! Scenario count for a random convex program.
//!
//! `Φ(p, d, M) = Σ_{j<d} C(M, j) (1−p)^j p^{M−j}` bounds the probability that
//! the solution of a program with `d` decision variables and `M` sampled
//! constraints has reliability below `p`. Everything is evaluated in the log
//! domain so `β` down to 1e−300 stays representable.

use crate::error::{Error, Result};
use serde::Serialize;

/// Default cap on the number of scenarios returned by [`min_scenarios`].
pub const DEFAULT_SCENARIO_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioBudget {
    pub p: f64,
    pub beta: f64,
    pub d: u64,
    pub m: u64,
    /// `log Φ(p, d, m)`.
    pub log_phi: f64,
}

impl ScenarioBudget {
    /// Smallest admissible budget for `(p, beta, d)`.
    pub fn minimal(p: f64, beta: f64, d: u64) -> Result<Self> {
        let m = min_scenarios(p, beta, d)?;
        Ok(ScenarioBudget {
            p,
            beta,
            d,
            m,
            log_phi: log_phi(p, d, m)?,
        })
    }

    pub fn phi(&self) -> f64 {
        self.log_phi.exp()
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must lie in (0, 1)")))
    }
}

/// `log Φ(p, d, M)`.
pub fn log_phi(p: f64, d: u64, m: u64) -> Result<f64> {
    check_probability("p", p)?;
    if d == 0 || d > m {
        return Err(Error::Domain(format!("need 1 <= d <= M, got d = {d}, M = {m}")));
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mf = m as f64;
    // log C(M, j) accumulated as a running sum of log((M − j + 1) / j).
    let mut ln_binom = 0.0;
    let mut terms = Vec::with_capacity(d as usize);
    for j in 0..d {
        if j > 0 {
            let jf = j as f64;
            ln_binom += (mf - jf + 1.0).ln() - jf.ln();
        }
        let jf = j as f64;
        terms.push(ln_binom + jf * ln_q + (mf - jf) * ln_p);
    }
    Ok(log_sum_exp(&terms))
}

/// `Φ(p, d, M)` in linear scale; underflows to zero for tiny tails.
pub fn phi(p: f64, d: u64, m: u64) -> Result<f64> {
    log_phi(p, d, m).map(f64::exp)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Smallest `M ≥ d` with `Φ(p, d, M) ≤ beta`, capped at [`DEFAULT_SCENARIO_CAP`].
pub fn min_scenarios(p: f64, beta: f64, d: u64) -> Result<u64> {
    min_scenarios_capped(p, beta, d, DEFAULT_SCENARIO_CAP)
}

pub fn min_scenarios_capped(p: f64, beta: f64, d: u64, cap: u64) -> Result<u64> {
    check_probability("p", p)?;
    check_probability("beta", beta)?;
    if d == 0 {
        return Err(Error::Domain("d must be at least 1".into()));
    }
    if d > cap {
        return Err(Error::Overflow { cap });
    }
    let target = beta.ln();
    let ok = |m: u64| -> Result<bool> { Ok(log_phi(p, d, m)? <= target) };

    // Exponential bracketing: lo fails, hi satisfies.
    if ok(d)? {
        return Ok(d);
    }
    let mut lo = d;
    let mut lo_val = log_phi(p, d, lo)?;
    let mut hi = d.saturating_mul(2).max(d + 1);
    loop {
        if hi > cap {
            if ok(cap)? {
                hi = cap;
                break;
            }
            return Err(Error::Overflow { cap });
        }
        let hi_val = log_phi(p, d, hi)?;
        assert!(hi_val <= lo_val + 1e-9, "log Φ increased from M={lo} to M={hi}");
        if hi_val <= target {
            break;
        }
        lo = hi;
        lo_val = hi_val;
        hi = hi.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let mid_val = log_phi(p, d, mid)?;
        assert!(mid_val <= lo_val + 1e-9, "log Φ not monotone at M={mid}");
        if mid_val <= target {
            hi = mid;
        } else {
            lo = mid;
            lo_val = mid_val;
        }
    }
    Ok(hi)
}

/// Closed-form sufficient count `⌈2/(1−p) · (ln β⁻¹ + d)⌉`.
pub fn explicit_bound(p: f64, beta: f64, d: u64) -> Result<u64> {
    check_probability("p", p)?;
    check_probability("beta", beta)?;
    let value = 2.0 / (1.0 - p) * (-beta.ln() + d as f64);
    Ok(value.ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF};

    /// Φ is the CDF at d−1 of Binomial(M, 1−p).
    fn oracle_phi(p: f64, d: u64, m: u64) -> f64 {
        Binomial::new(1.0 - p, m).unwrap().cdf(d - 1)
    }

    #[test]
    fn single_term() {
        let lp = log_phi(0.5, 1, 10).unwrap();
        assert!((lp - 10.0 * 0.5f64.ln()).abs() < 1e-14);
        assert!((lp.exp() - 9.765625e-4).abs() < 1e-16);
    }

    #[test]
    fn all_but_last_term() {
        // d = M drops only the j = M term: Φ = 1 − (1−p)^M → 1.
        for m in [1u64, 5, 40, 300] {
            let expected = (-(0.5f64.powi(m as i32))).ln_1p();
            let got = log_phi(0.5, m, m).unwrap();
            assert!((got - expected).abs() < 1e-12, "{m}: {got} vs {expected}");
        }
    }

    #[test]
    fn frozen_high_precision_values() {
        // 60-digit arbitrary-precision summation of the defining series.
        let cases = [
            (0.95, 12, 890, 1.0891074590712305e-9),
            (0.95, 12, 893, 9.682327316901728e-10),
            (0.05, 12, 23, 1.9644559518206057e-10),
        ];
        for (p, d, m, expected) in cases {
            let got = phi(p, d, m).unwrap();
            assert!(((got - expected) / expected).abs() < 1e-12, "{p} {d} {m}: {got}");
        }
    }

    #[test]
    fn matches_binomial_cdf() {
        for &p in &[0.05, 0.3, 0.6, 0.95, 0.999] {
            for &d in &[1u64, 3, 12, 40] {
                for &m in &[40u64, 100, 900, 5000] {
                    let ours = phi(p, d, m).unwrap();
                    let oracle = oracle_phi(p, d, m);
                    if oracle > 1e-250 {
                        assert!(((ours - oracle) / oracle).abs() < 1e-8, "{p} {d} {m}: {ours} vs {oracle}");
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_beta_does_not_underflow() {
        let m = min_scenarios(0.5, 1e-300, 12).unwrap();
        assert!(log_phi(0.5, 12, m).unwrap() <= 1e-300f64.ln());
        assert!(log_phi(0.5, 12, m - 1).unwrap() > 1e-300f64.ln());
        // Far below f64's range in linear scale, still finite in logs.
        assert!(log_phi(0.5, 12, 5000).unwrap().is_finite());
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(log_phi(0.0, 1, 2), Err(Error::Domain(_))));
        assert!(matches!(log_phi(1.0, 1, 2), Err(Error::Domain(_))));
        assert!(matches!(log_phi(0.5, 3, 2), Err(Error::Domain(_))));
        assert!(matches!(min_scenarios(0.5, 1.5, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn cap_overflow() {
        assert!(matches!(
            min_scenarios_capped(0.999, 1e-9, 12, 1000),
            Err(Error::Overflow { cap: 1000 })
        ));
    }

    #[test]
    fn minimality_on_grid() {
        for &p in &[0.05, 0.3, 0.6, 0.9, 0.95, 0.99] {
            for &beta in &[1e-2, 1e-6, 1e-9, 1e-12] {
                for &d in &[1u64, 2, 5, 12, 30] {
                    let m = min_scenarios(p, beta, d).unwrap();
                    assert!(m >= d);
                    assert!(log_phi(p, d, m).unwrap() <= beta.ln());
                    if m > d {
                        assert!(log_phi(p, d, m - 1).unwrap() > beta.ln());
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_bound_values() {
        assert_eq!(explicit_bound(0.95, 1e-9, 12).unwrap(), 1309);
        assert_eq!(explicit_bound(0.5, (-1.0f64).exp(), 1).unwrap(), 8);
    }

    #[test]
    fn budget_roundtrip() {
        let b = ScenarioBudget::minimal(0.6, 1e-9, 12).unwrap();
        assert_eq!(b.m, min_scenarios(0.6, 1e-9, 12).unwrap());
        assert!(b.phi() <= 1e-9);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn phi_monotone(p in 0.01f64..0.99, d in 1u64..30, m in 30u64..2000) {
                let base = log_phi(p, d, m).unwrap();
                prop_assert!(log_phi(p, d, m + 1).unwrap() <= base + 1e-12);
                prop_assert!(log_phi(p, d + 1, m).unwrap() >= base - 1e-12);
            }

            #[test]
            fn min_scenarios_monotone(p in 0.01f64..0.98, lb in 1.0f64..20.0, d in 1u64..25) {
                let beta = 10f64.powf(-lb);
                let m = min_scenarios(p, beta, d).unwrap();
                prop_assert!(min_scenarios((p + 0.01).min(0.99), beta, d).unwrap() >= m);
                prop_assert!(min_scenarios(p, beta / 10.0, d).unwrap() >= m);
                prop_assert!(min_scenarios(p, beta, d + 1).unwrap() >= m);
                prop_assert!(explicit_bound(p, beta, d).unwrap() >= m);
            }
        }
    }
}
