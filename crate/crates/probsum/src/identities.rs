//! Numerical checks of exact summation identities.
//!
//! Three identities are covered:
//!
//! * the complement identity
//!   Σ P(X≤n)P(Y=n) = 1 − Σ P(X=n+1)P(Y≤n) for independent X, Y, whose
//!   common value is P(X ≤ Y);
//! * the Abel-summation identity Σ P(X=n)zⁿ = (1−z)·Σ P(X≤n)zⁿ for
//!   0 ≤ z < 1;
//! * the two-sequence rearrangement
//!   −Σ βₙ(α−αₙ) = α·Σ(β−βₙ) − Σ(αβ−αₙβₙ) for sequences with limits α, β.
//!
//! The complement checker also reports the probabilistic interpretation
//! P(X ≤ Y) through a third, independent summation route, so a failure
//! localizes to either the series machinery or the identity itself.

use std::fmt;

use crate::dist::Distribution;
use crate::series::{self, SeriesError, SeriesPolicy};

#[derive(Debug, Clone, PartialEq)]
pub enum IdentityError {
    /// These identities are stated for nonnegative support.
    NegativeSupport,
    /// z must lie in [0, 1).
    DomainZ(f64),
    Series(SeriesError),
}

impl fmt::Display for IdentityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentityError::NegativeSupport => {
                write!(f, "identity checks require nonnegative support")
            }
            IdentityError::DomainZ(z) => write!(f, "z must lie in [0, 1), got {z}"),
            IdentityError::Series(e) => write!(f, "series evaluation failed: {e}"),
        }
    }
}

impl std::error::Error for IdentityError {}

impl From<SeriesError> for IdentityError {
    fn from(e: SeriesError) -> Self {
        IdentityError::Series(e)
    }
}

/// Two sides of an identity plus their gap.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    pub certified: bool,
    /// P(X ≤ Y) for the complement identity; absent for the others.
    pub interpretation: Option<f64>,
}

impl IdentityReport {
    fn new(lhs: f64, rhs: f64, certified: bool, interpretation: Option<f64>) -> Self {
        IdentityReport {
            lhs,
            rhs,
            abs_diff: (lhs - rhs).abs(),
            certified,
            interpretation,
        }
    }
}

/// Checks Σ P(X≤n)P(Y=n) = 1 − Σ P(X=n+1)P(Y≤n) for independent X and Y,
/// and reports P(X ≤ Y) computed by a third route.
pub fn check_leq_identity(
    dx: &Distribution,
    dy: &Distribution,
    policy: &SeriesPolicy,
) -> Result<IdentityReport, IdentityError> {
    if dx.has_negative_support() || dy.has_negative_support() {
        return Err(IdentityError::NegativeSupport);
    }

    // CDF factors are at most 1, so the exact survival of the pmf factor
    // bounds each remainder.
    let lhs_tail = |n: u64| dy.survival(n as i64);
    let lhs = series::sum_series(
        |n| dx.cdf(n as i64) * dy.pmf(n as i64),
        Some(&lhs_tail),
        policy,
    )?;

    let rhs_tail = |n: u64| dx.survival(n as i64 + 1);
    let rhs_inner = series::sum_series(
        |n| dx.pmf(n as i64 + 1) * dy.cdf(n as i64),
        Some(&rhs_tail),
        policy,
    )?;

    let interp_tail = |n: u64| dx.survival(n as i64);
    let interp = series::sum_series(
        |n| dx.pmf(n as i64) * dy.survival(n as i64 - 1),
        Some(&interp_tail),
        policy,
    )?;

    Ok(IdentityReport::new(
        lhs.value,
        1.0 - rhs_inner.value,
        lhs.certified && rhs_inner.certified && interp.certified,
        Some(interp.value),
    ))
}

/// Checks Σ P(X=n)zⁿ = (1−z)·Σ P(X≤n)zⁿ at a point z ∈ [0, 1).
///
/// Finite support is evaluated exactly, the all-ones CDF tail closed into
/// z^{m+1}/(1−z). Infinite support certifies both series: the PGF remainder
/// is at most z^{n+1}·P(X>n) and the CDF remainder at most z^{n+1}/(1−z).
pub fn check_abel_identity(
    d: &Distribution,
    z: f64,
    policy: &SeriesPolicy,
) -> Result<IdentityReport, IdentityError> {
    if d.has_negative_support() {
        return Err(IdentityError::NegativeSupport);
    }
    if !(0.0..1.0).contains(&z) {
        return Err(IdentityError::DomainZ(z));
    }

    if let Some(max) = d.support_max() {
        let lhs: f64 = (0..=max).map(|n| d.pmf(n) * z.powi(n as i32)).sum();
        let cdf_series: f64 = (0..=max).map(|n| d.cdf(n) * z.powi(n as i32)).sum::<f64>()
            + z.powi(max as i32 + 1) / (1.0 - z);
        return Ok(IdentityReport::new(lhs, (1.0 - z) * cdf_series, true, None));
    }

    let pgf_tail = |n: u64| z.powi(n as i32 + 1) * d.survival(n as i64);
    let lhs = series::sum_series(
        |n| d.pmf(n as i64) * z.powi(n as i32),
        Some(&pgf_tail),
        policy,
    )?;

    let cdf_tail = |n: u64| z.powi(n as i32 + 1) / (1.0 - z);
    let cdf_series = series::sum_series(
        |n| d.cdf(n as i64) * z.powi(n as i32),
        Some(&cdf_tail),
        policy,
    )?;

    Ok(IdentityReport::new(
        lhs.value,
        (1.0 - z) * cdf_series.value,
        lhs.certified && cdf_series.certified,
        None,
    ))
}

/// A pair of real sequences with asserted limits. The caller vouches for
/// the rearrangement hypotheses: the limits exist and the three series in
/// the identity converge. Nothing here can verify that numerically.
pub struct SequencePair {
    pub alpha: Box<dyn Fn(u64) -> f64 + Send + Sync>,
    pub beta: Box<dyn Fn(u64) -> f64 + Send + Sync>,
    pub alpha_limit: f64,
    pub beta_limit: f64,
}

impl SequencePair {
    /// αₙ = 1 − 2^{−(n+1)} → 1 and βₙ = 3 − 2^{−n} → 3; every series in
    /// the identity is a closed-form geometric sum.
    pub fn geometric_demo() -> Self {
        SequencePair {
            alpha: Box::new(|n| 1.0 - 0.5f64.powi(n as i32 + 1)),
            beta: Box::new(|n| 3.0 - 0.5f64.powi(n as i32)),
            alpha_limit: 1.0,
            beta_limit: 3.0,
        }
    }

    /// The stopped-sum worked instance: αₙ = P(w < n+1) for w geometric on
    /// {1, 2, …} with success ½, and βₙ the perturbed step mean
    /// ½ + 2^{−(n+2)}.
    pub fn stopped_instance() -> Self {
        SequencePair {
            alpha: Box::new(|n| 1.0 - 0.5f64.powi(n as i32)),
            beta: Box::new(|n| 0.5 + 0.5f64.powi(n as i32 + 2)),
            alpha_limit: 1.0,
            beta_limit: 0.5,
        }
    }

    /// CLI registry of named pairs.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "geometric-demo" => Some(Self::geometric_demo()),
            "stopped-instance" => Some(Self::stopped_instance()),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 2] = ["geometric-demo", "stopped-instance"];
}

/// Checks −Σ βₙ(α−αₙ) = α·Σ(β−βₙ) − Σ(αβ−αₙβₙ).
///
/// The sequences carry no remainder bounds, so the sums stop heuristically
/// and the report is flagged uncertified.
pub fn check_two_sequence_identity(
    sp: &SequencePair,
    policy: &SeriesPolicy,
) -> Result<IdentityReport, IdentityError> {
    let alpha = sp.alpha_limit;
    let beta = sp.beta_limit;

    let lhs = series::sum_series(|n| -(sp.beta)(n) * (alpha - (sp.alpha)(n)), None, policy)?;
    let beta_gap = series::sum_series(|n| beta - (sp.beta)(n), None, policy)?;
    let product_gap = series::sum_series(
        |n| alpha * beta - (sp.alpha)(n) * (sp.beta)(n),
        None,
        policy,
    )?;

    Ok(IdentityReport::new(
        lhs.value,
        alpha * beta_gap.value - product_gap.value,
        lhs.certified && beta_gap.certified && product_gap.certified,
        None,
    ))
}
