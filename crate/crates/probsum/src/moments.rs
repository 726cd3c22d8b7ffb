//! Factorial moments E\[X(X−1)⋯(X−N+1)\] computed by three independent
//! routes and reconciled.
//!
//! The routes are:
//!
//! * **direct** — the expectation Σ_n n(n−1)⋯(n−N+1)·P(X=n);
//! * **tail sum** — N · Σ_{n≥0} ∏_{j=1}^{N−1}(n+j) · P(X > n+N−1), the
//!   survival-weighted form;
//! * **pgf** — the z → 1⁻ limit of the N-th derivative of E\[zˣ\].
//!
//! All three report the factorial moment itself (the survival form is
//! multiplied through by N), so a report compares like with like. The PGF
//! route refuses signed support: E\[zˣ\] for negative X is a Laurent series
//! and outside what the derivative-limit evaluator is built for. The tail
//! sum assumes nonnegative support to represent the moment; for signed
//! tables it is still reported as the literal formula value, and the
//! disagreement diagnostic makes the mismatch visible.

use std::fmt;

use crate::dist::Distribution;
use crate::series::{self, SeriesError, SeriesPolicy, SeriesResult};

#[derive(Debug, Clone, PartialEq)]
pub enum MomentError {
    /// A series route hit the term cap or grew without a certified stop;
    /// the moment of this order may be infinite.
    InfiniteMoment {
        order: u32,
        source: SeriesError,
    },
    /// PGF derivative limits are not defined here for signed support.
    SignedSupportPgf,
    Series(SeriesError),
}

impl fmt::Display for MomentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentError::InfiniteMoment { order, source } => {
                write!(
                    f,
                    "factorial moment of order {order} may be infinite: {source}"
                )
            }
            MomentError::SignedSupportPgf => {
                write!(f, "pgf route is unsupported for signed support")
            }
            MomentError::Series(e) => write!(f, "series evaluation failed: {e}"),
        }
    }
}

impl std::error::Error for MomentError {}

fn series_failure(err: SeriesError, order: u32) -> MomentError {
    match err {
        SeriesError::MaxTermsReached { .. } | SeriesError::Divergent { .. } => {
            MomentError::InfiniteMoment { order, source: err }
        }
        other => MomentError::Series(other),
    }
}

/// Per-order reconciliation of the three routes.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MomentReport {
    #[serde(rename = "N")]
    pub order: u32,
    pub direct: Option<f64>,
    pub tail_sum: Option<f64>,
    /// Absent (null) when the support is signed.
    pub pgf: Option<f64>,
    pub max_rel_diff: f64,
    pub certified: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub route_errors: Vec<String>,
}

/// Relative gap between two route values; exact agreement (including 0 = 0)
/// is 0.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn product_weight(n: f64, factors: u32, offset: f64) -> f64 {
    // ∏_{j=1}^{factors} (n + offset + j) in plain f64.
    let mut acc = 1.0;
    for j in 1..=factors {
        acc *= n + offset + f64::from(j);
    }
    acc
}

/// Direct route: Σ_n n(n−1)⋯(n−N+1)·P(X=n) over the support.
///
/// Finite support is summed exactly. Infinite support runs through the
/// series engine; when the family admits a pmf ratio bound the truncation
/// is certified.
pub fn factorial_moment_direct(
    d: &Distribution,
    order: u32,
    policy: &SeriesPolicy,
) -> Result<SeriesResult, MomentError> {
    assert!(order >= 1, "moment order must be >= 1");
    if let Some(max) = d.support_max() {
        let mut sum = 0.0f64;
        let mut terms = 0u64;
        for n in d.support_min()..=max {
            sum += d.pmf(n) * series::falling_factorial(n as f64, order);
            terms += 1;
        }
        return Ok(SeriesResult {
            value: sum,
            terms_used: terms,
            tail_estimate: 0.0,
            certified: true,
        });
    }

    // Infinite support starts at 0; terms below n = order vanish.
    let term = |m: u64| {
        let n = m + u64::from(order);
        d.pmf(n as i64) * series::falling_factorial(n as f64, order)
    };
    let tail = |m: u64| {
        let n = (m + u64::from(order)) as i64;
        match d.pmf_ratio_bound(n) {
            Some(rho) => {
                // Term ratio ≤ ρ · (n+1)/(n+1−N), decreasing in n.
                let growth = (n as f64 + 1.0) / (n as f64 + 1.0 - f64::from(order));
                let r = rho * growth;
                if r < 1.0 {
                    term(m) * r / (1.0 - r)
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        }
    };
    let has_bound = d.pmf_ratio_bound(0).is_some();
    let result = if has_bound {
        series::sum_series(term, Some(&tail), policy)
    } else {
        series::sum_series(term, None, policy)
    };
    result.map_err(|e| series_failure(e, order))
}

/// Survival-weighted route: N · Σ_{n≥0} ∏_{j=1}^{N−1}(n+j) · P(X > n+N−1).
///
/// For N = 1 the weight is the empty product, recovering the classical
/// E\[X\] = Σ P(X > n).
pub fn factorial_moment_tailsum(
    d: &Distribution,
    order: u32,
    policy: &SeriesPolicy,
) -> Result<SeriesResult, MomentError> {
    assert!(order >= 1, "moment order must be >= 1");
    let shift = i64::from(order) - 1;
    let term = |n: u64| product_weight(n as f64, order - 1, 0.0) * d.survival(n as i64 + shift);

    let result = match d.support_max() {
        Some(max) => {
            // Survival vanishes once n + N − 1 ≥ max; certified exact stop.
            let tail = |n: u64| {
                if n as i64 + shift >= max {
                    0.0
                } else {
                    f64::INFINITY
                }
            };
            series::sum_series(term, Some(&tail), policy)
        }
        None => {
            let tail = |n: u64| match d.survival_ratio_bound(n as i64 + shift) {
                Some(rho) => {
                    // Weight ratio (n+N)/(n+1) is decreasing in n.
                    let growth = (n as f64 + f64::from(order)) / (n as f64 + 1.0);
                    let r = rho * growth;
                    if r < 1.0 {
                        term(n) * r / (1.0 - r)
                    } else {
                        f64::INFINITY
                    }
                }
                None => f64::INFINITY,
            };
            if d.survival_ratio_bound(0).is_some() {
                series::sum_series(term, Some(&tail), policy)
            } else {
                series::sum_series(term, None, policy)
            }
        }
    };

    result
        .map(|r| SeriesResult {
            value: r.value * f64::from(order),
            tail_estimate: r.tail_estimate * f64::from(order),
            ..r
        })
        .map_err(|e| series_failure(e, order))
}

/// PGF route: the z → 1⁻ limit of the N-th derivative of E\[zˣ\], delegated
/// to the series engine with the pmf as coefficients.
pub fn factorial_moment_pgf(
    d: &Distribution,
    order: u32,
    policy: &SeriesPolicy,
) -> Result<SeriesResult, MomentError> {
    assert!(order >= 1, "moment order must be >= 1");
    if d.has_negative_support() {
        return Err(MomentError::SignedSupportPgf);
    }
    let coeffs = |n: u64| d.pmf(n as i64);
    let bound = d.support_max().map(|m| m as u64);
    series::derivative_at_one(coeffs, bound, order, policy).map_err(|e| series_failure(e, order))
}

/// Runs every applicable route and reconciles them. Route failures are
/// recorded in `route_errors` while the surviving routes are still
/// reported; the pgf route is recorded as absent for signed support.
pub fn moment_report(d: &Distribution, order: u32, policy: &SeriesPolicy) -> MomentReport {
    let mut route_errors = Vec::new();
    let mut certified = true;
    let mut values: Vec<f64> = Vec::with_capacity(3);

    let mut run = |name: &str, res: Result<SeriesResult, MomentError>| match res {
        Ok(r) => {
            certified &= r.certified;
            values.push(r.value);
            Some(r.value)
        }
        Err(e) => {
            certified = false;
            route_errors.push(format!("{name}: {e}"));
            None
        }
    };

    let direct = run("direct", factorial_moment_direct(d, order, policy));
    let tail_sum = run("tail_sum", factorial_moment_tailsum(d, order, policy));
    let pgf = if d.has_negative_support() {
        None
    } else {
        run("pgf", factorial_moment_pgf(d, order, policy))
    };

    let mut max_rel_diff = 0.0f64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            max_rel_diff = max_rel_diff.max(rel_diff(values[i], values[j]));
        }
    }

    MomentReport {
        order,
        direct,
        tail_sum,
        pgf,
        max_rel_diff,
        certified,
        route_errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy() -> SeriesPolicy {
        SeriesPolicy::default()
    }

    #[test]
    fn direct_point_mass() {
        let d = Distribution::point_mass(3);
        let r = factorial_moment_direct(&d, 2, &policy()).unwrap();
        assert_eq!(r.value, 6.0);
        assert!(r.certified);
    }

    #[test]
    fn direct_poisson_matches_power_identity() {
        // Factorial moments of Poisson(λ) are λ^N. Oracle: brute-force sum
        // to 200 terms.
        let d = Distribution::poisson(2.0).unwrap();
        let brute: f64 = (3..200)
            .map(|n| d.pmf(n) * series::falling_factorial(n as f64, 3))
            .sum();
        assert!((brute - 8.0).abs() < 1e-12);

        let r = factorial_moment_direct(&d, 3, &policy()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-9);
        assert!(r.certified, "ratio-bound tail should certify poisson");
    }

    #[test]
    fn direct_bernoulli_vanishes_at_order_two() {
        let d = Distribution::bernoulli(0.3).unwrap();
        let r = factorial_moment_direct(&d, 2, &policy()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn tailsum_bernoulli_first_order() {
        let d = Distribution::bernoulli(0.3).unwrap();
        let r = factorial_moment_tailsum(&d, 1, &policy()).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tailsum_geometric_second_order() {
        // Σ (n+1)·P(X>n+1) = 1 for geometric(1/2); times N = 2.
        // Oracle: brute-force partial sums to 200 terms.
        let d = Distribution::geometric(0.5).unwrap();
        let brute: f64 = 2.0
            * (0..200u64)
                .map(|n| (n as f64 + 1.0) * d.survival(n as i64 + 1))
                .sum::<f64>();
        assert!((brute - 2.0).abs() < 1e-12);

        let r = factorial_moment_tailsum(&d, 2, &policy()).unwrap();
        assert!((r.value - brute).abs() < 1e-9);
        assert!(r.certified);
    }

    #[test]
    fn tailsum_point_mass() {
        // Survival is 1 below the mass: (1)(1) + (2)(1) = 3, times 2.
        let d = Distribution::point_mass(3);
        let r = factorial_moment_tailsum(&d, 2, &policy()).unwrap();
        assert!((r.value - 6.0).abs() < 1e-12);
        assert!(r.certified);
    }

    #[test]
    fn tailsum_first_order_is_survival_sum() {
        for d in [
            Distribution::geometric(0.4).unwrap(),
            Distribution::poisson(1.5).unwrap(),
            Distribution::table(0, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        ] {
            let direct_survival_sum: f64 = (0..400).map(|n| d.survival(n)).sum();
            let r = factorial_moment_tailsum(&d, 1, &policy()).unwrap();
            assert!(
                (r.value - direct_survival_sum).abs() < 1e-10,
                "E[X] = ΣP(X>n) failed for {d:?}"
            );
        }
    }

    #[test]
    fn pgf_bernoulli_first_order() {
        let d = Distribution::bernoulli(0.5).unwrap();
        let r = factorial_moment_pgf(&d, 1, &policy()).unwrap();
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn pgf_point_mass_third_order() {
        let d = Distribution::point_mass(3);
        let r = factorial_moment_pgf(&d, 3, &policy()).unwrap();
        assert_eq!(r.value, 6.0);
    }

    #[test]
    fn pgf_geometric_second_order() {
        // 2!·(q/p)² with q/p = 1. Oracle: truncated coefficient sum.
        let d = Distribution::geometric(0.5).unwrap();
        let oracle: f64 = (2..200)
            .map(|n| d.pmf(n) * series::falling_factorial(n as f64, 2))
            .sum();
        let r = factorial_moment_pgf(&d, 2, &policy()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
        assert!((r.value - oracle).abs() < 1e-10);
    }

    #[test]
    fn pgf_refuses_signed_support() {
        let d = Distribution::table(-1, vec![0.7, 0.0, 0.3]).unwrap();
        assert!(matches!(
            factorial_moment_pgf(&d, 1, &policy()),
            Err(MomentError::SignedSupportPgf)
        ));
    }

    #[test]
    fn report_poisson_first_order() {
        let d = Distribution::poisson(1.0).unwrap();
        let rep = moment_report(&d, 1, &policy());
        for v in [rep.direct, rep.tail_sum, rep.pgf] {
            assert!((v.unwrap() - 1.0).abs() < 1e-9);
        }
        assert!(rep.max_rel_diff < 1e-9);
        assert!(rep.route_errors.is_empty());
    }

    #[test]
    fn report_vanishes_above_support() {
        let d = Distribution::table(0, vec![0.5, 0.5]).unwrap();
        let rep = moment_report(&d, 5, &policy());
        assert_eq!(rep.direct.unwrap(), 0.0);
        assert_eq!(rep.tail_sum.unwrap(), 0.0);
        assert_eq!(rep.pgf.unwrap(), 0.0);
        assert_eq!(rep.max_rel_diff, 0.0);
        assert!(rep.certified);
    }

    #[test]
    fn report_geometric_third_order() {
        // 3!·(q/p)³ = 6 for p = 1/2.
        let d = Distribution::geometric(0.5).unwrap();
        let rep = moment_report(&d, 3, &policy());
        for v in [rep.direct, rep.tail_sum, rep.pgf] {
            assert!((v.unwrap() - 6.0).abs() < 1e-8);
        }
        assert!(rep.max_rel_diff < 1e-8);
    }

    #[test]
    fn report_signed_support_omits_pgf() {
        let d = Distribution::table(-1, vec![0.7, 0.0, 0.3]).unwrap();
        let rep = moment_report(&d, 1, &policy());
        assert!(rep.pgf.is_none());
        assert!(rep.route_errors.is_empty());
        // Direct is the real E[X]; the survival formula assumes nonnegative
        // support and diverges from it here, visibly.
        assert!((rep.direct.unwrap() + 0.4).abs() < 1e-12);
        assert!((rep.tail_sum.unwrap() - 0.3).abs() < 1e-12);
        assert!(rep.max_rel_diff > 0.5);
    }

    #[test]
    fn report_serializes_with_spec_keys() {
        let d = Distribution::bernoulli(0.5).unwrap();
        let rep = moment_report(&d, 1, &policy());
        let json = serde_json::to_value(&rep).unwrap();
        for key in [
            "N",
            "direct",
            "tail_sum",
            "pgf",
            "max_rel_diff",
            "certified",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }

    #[test]
    fn routes_agree_across_families_and_orders() {
        let dists = [
            Distribution::bernoulli(0.5).unwrap(),
            Distribution::binomial(10, 0.3).unwrap(),
            Distribution::geometric(0.5).unwrap(),
            Distribution::poisson(1.0).unwrap(),
            Distribution::poisson(2.0).unwrap(),
            Distribution::negative_binomial(2.0, 0.5).unwrap(),
        ];
        for d in &dists {
            for order in 1..=6 {
                let rep = moment_report(d, order, &policy());
                assert!(
                    rep.max_rel_diff < 1e-8,
                    "routes disagree for {d:?} order {order}: {rep:?}"
                );
            }
        }
    }

    #[test]
    fn certified_moments_stable_under_tighter_policy() {
        // Raising max_terms or tightening tolerances moves a certified
        // value by no more than the 1e-10 stability budget.
        let loose = SeriesPolicy::default();
        let tight = SeriesPolicy {
            rel_tol: loose.rel_tol / 10.0,
            max_terms: loose.max_terms * 10,
            ..loose
        };
        for d in [
            Distribution::geometric(0.4).unwrap(),
            Distribution::poisson(2.0).unwrap(),
            Distribution::negative_binomial(2.0, 0.5).unwrap(),
        ] {
            for order in 1..=4 {
                let a = factorial_moment_tailsum(&d, order, &loose).unwrap();
                let b = factorial_moment_tailsum(&d, order, &tight).unwrap();
                assert!(a.certified && b.certified);
                let scale = a.value.abs().max(1.0);
                assert!(
                    (a.value - b.value).abs() <= 1e-10 * scale,
                    "instability for {d:?} N={order}: {} vs {}",
                    a.value,
                    b.value
                );
            }
        }
    }

    #[test]
    fn abel_summation_consistency_on_finite_support() {
        // Σ pmf(n)zⁿ = (1−z)·Σ cdf(n)zⁿ, the cdf series truncated at the
        // support max with the closed-form remainder z^{m+1}/(1−z) for its
        // all-ones tail.
        let tables = [
            Distribution::table(0, vec![0.2, 0.3, 0.5]).unwrap(),
            Distribution::table(0, vec![0.05, 0.2, 0.3, 0.25, 0.2]).unwrap(),
            Distribution::table(0, vec![1.0]).unwrap(),
        ];
        for d in &tables {
            let max = d.support_max().unwrap();
            for z in [0.0f64, 0.3, 0.9] {
                let pgf: f64 = (0..=max).map(|n| d.pmf(n) * z.powi(n as i32)).sum();
                let cdf_series: f64 = (0..=max).map(|n| d.cdf(n) * z.powi(n as i32)).sum::<f64>()
                    + if z == 0.0 {
                        0.0
                    } else {
                        z.powi(max as i32 + 1) / (1.0 - z)
                    };
                assert!(
                    (pgf - (1.0 - z) * cdf_series).abs() < 1e-12,
                    "abel consistency failed for {d:?} at z={z}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn random_tables_routes_agree(
            raw in proptest::collection::vec(0.01f64..1.0, 1..10),
            order in 1u32..6,
        ) {
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let d = Distribution::table(0, probs).unwrap();
            let rep = moment_report(&d, order, &policy());
            prop_assert!(rep.route_errors.is_empty());
            prop_assert!(rep.certified);
            prop_assert!(rep.max_rel_diff < 1e-10, "report {rep:?}");
        }
    }
}
