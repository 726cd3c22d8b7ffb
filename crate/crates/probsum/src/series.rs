//! Evaluation of the infinite sums and derivative limits that the rest of
//! the crate is built on.
//!
//! Everything here works on plain `f64`. Truncation of an infinite sum is
//! either *certified* (the caller supplies an upper bound on the discarded
//! remainder and the sum stops once that bound drops below the requested
//! tolerance) or *heuristic* (the sum stops after a run of consecutive
//! negligible terms, and the result is flagged as uncertified).

use std::fmt;

/// Number of consecutive below-threshold terms required before a sum
/// without a remainder bound is allowed to stop. Survival-weighted series
/// can plateau for heavy-shouldered PMFs, so a single small term is not
/// taken as evidence of convergence.
const CONSECUTIVE_SMALL_TERMS: u32 = 20;

/// Partial sums past this magnitude are treated as divergent rather than
/// merely slow to converge.
const DIVERGENCE_GUARD: f64 = 1e30;

/// What to do when a sum hits `max_terms` before its stopping rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailMode {
    /// Hitting the term cap is an error: the requested tolerance was not
    /// certifiably reached.
    Certified,
    /// Hitting the term cap returns the partial sum, flagged uncertified.
    Capped,
}

/// Truncation tolerances and term caps shared by every series evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeriesPolicy {
    /// Relative tolerance on the accumulated value.
    pub rel_tol: f64,
    /// Absolute floor below which remainders are always acceptable.
    pub abs_tol: f64,
    /// Hard cap on the number of terms.
    pub max_terms: u64,
    /// Behaviour when `max_terms` is reached.
    pub tail_mode: TailMode,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        SeriesPolicy {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            max_terms: 10_000_000,
            tail_mode: TailMode::Certified,
        }
    }
}

impl SeriesPolicy {
    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(SeriesError::InvalidPolicy("rel_tol must be > 0".into()));
        }
        if self.abs_tol.is_nan() || self.abs_tol < 0.0 {
            return Err(SeriesError::InvalidPolicy("abs_tol must be >= 0".into()));
        }
        if self.max_terms == 0 {
            return Err(SeriesError::InvalidPolicy("max_terms must be >= 1".into()));
        }
        Ok(())
    }

    /// Remainder threshold for a given partial sum.
    fn threshold(&self, partial: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * partial.abs())
    }
}

/// Outcome of a truncated series evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SeriesResult {
    pub value: f64,
    pub terms_used: u64,
    /// Estimate of the discarded remainder. When `certified` is true this
    /// is a genuine upper bound; otherwise it is the magnitude of the last
    /// term seen, reported as a heuristic only.
    pub tail_estimate: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesError {
    /// A rising-factorial weight left the representable range of `f64`.
    Overflow {
        base: u64,
        order: u32,
    },
    /// `max_terms` was reached before the stopping rule fired.
    MaxTermsReached {
        partial: f64,
        tail_estimate: f64,
        terms_used: u64,
    },
    /// Partial sums grew past the divergence guard, or a term was not
    /// finite. The moment being summed may be infinite.
    Divergent {
        partial: f64,
        terms_used: u64,
    },
    InvalidPolicy(String),
}

impl fmt::Display for SeriesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesError::Overflow { base, order } => {
                write!(f, "rising factorial overflow at (n={base}, N={order})")
            }
            SeriesError::MaxTermsReached {
                partial,
                tail_estimate,
                terms_used,
            } => write!(
                f,
                "term cap reached after {terms_used} terms (partial sum {partial}, \
                 last tail estimate {tail_estimate})"
            ),
            SeriesError::Divergent {
                partial,
                terms_used,
            } => write!(
                f,
                "series shows divergent behaviour after {terms_used} terms \
                 (partial sum {partial}); the quantity may be infinite"
            ),
            SeriesError::InvalidPolicy(msg) => write!(f, "invalid series policy: {msg}"),
        }
    }
}

impl std::error::Error for SeriesError {}

/// Rising factorial ∏_{j=1}^{order} (n + j), i.e. the Pochhammer symbol
/// (n+1)_order. The empty product (order 0) is 1.
pub fn rising_factorial(n: u64, order: u32) -> Result<f64, SeriesError> {
    let mut acc = 1.0f64;
    for j in 1..=u64::from(order) {
        acc *= (n + j) as f64;
    }
    if acc.is_finite() {
        Ok(acc)
    } else {
        Err(SeriesError::Overflow { base: n, order })
    }
}

/// Falling factorial x(x−1)⋯(x−order+1) evaluated at real `x`. The empty
/// product (order 0) is 1.
pub fn falling_factorial(x: f64, order: u32) -> f64 {
    let mut acc = 1.0f64;
    for j in 0..order {
        acc *= x - f64::from(j);
    }
    acc
}

/// Sums `term(0) + term(1) + …` under the given policy.
///
/// `tail_bound(n)`, when supplied, must be an upper bound on the magnitude
/// of the remainder `Σ_{m>n} term(m)`. The sum then stops at the first `n`
/// where that bound falls below `max(abs_tol, rel_tol · |partial|)` and the
/// result is certified. Without a bound, the sum stops after 20
/// consecutive terms below the same threshold and the result is
/// uncertified.
pub fn sum_series<F>(
    term: F,
    tail_bound: Option<&dyn Fn(u64) -> f64>,
    policy: &SeriesPolicy,
) -> Result<SeriesResult, SeriesError>
where
    F: Fn(u64) -> f64,
{
    policy.validate()?;

    let mut partial = 0.0f64;
    let mut small_run = 0u32;
    let mut last_tail = f64::INFINITY;

    for n in 0..policy.max_terms {
        let t = term(n);
        if !t.is_finite() {
            return Err(SeriesError::Divergent {
                partial,
                terms_used: n,
            });
        }
        partial += t;
        if partial.abs() > DIVERGENCE_GUARD {
            return Err(SeriesError::Divergent {
                partial,
                terms_used: n + 1,
            });
        }

        let threshold = policy.threshold(partial);
        match tail_bound {
            Some(bound) => {
                last_tail = bound(n);
                if last_tail <= threshold {
                    return Ok(SeriesResult {
                        value: partial,
                        terms_used: n + 1,
                        tail_estimate: last_tail,
                        certified: true,
                    });
                }
            }
            None => {
                last_tail = t.abs();
                if t.abs() <= threshold {
                    small_run += 1;
                    if small_run >= CONSECUTIVE_SMALL_TERMS {
                        return Ok(SeriesResult {
                            value: partial,
                            terms_used: n + 1,
                            tail_estimate: t.abs(),
                            certified: false,
                        });
                    }
                } else {
                    small_run = 0;
                }
            }
        }
    }

    match policy.tail_mode {
        TailMode::Certified => Err(SeriesError::MaxTermsReached {
            partial,
            tail_estimate: last_tail,
            terms_used: policy.max_terms,
        }),
        TailMode::Capped => Ok(SeriesResult {
            value: partial,
            terms_used: policy.max_terms,
            tail_estimate: last_tail,
            certified: false,
        }),
    }
}

/// The limit as z → 1⁻ of the N-th derivative of Σ coeffs(n) zⁿ.
///
/// For power series whose coefficients form a PMF this limit, whenever the
/// N-th factorial moment is finite, equals the Abel sum
/// Σ_n coeffs(n)·n(n−1)⋯(n−N+1), and that coefficient sum is what gets
/// evaluated here. Finite differencing near z = 1 is hopelessly
/// ill-conditioned for this purpose and is deliberately not attempted.
///
/// With a `support_bound` the sum is finite and evaluated exactly. Without
/// one it runs through [`sum_series`] with heuristic stopping; a cap hit or
/// runaway growth is reported as [`SeriesError::Divergent`] or
/// [`SeriesError::MaxTermsReached`], signalling that the derivative limit
/// (the moment) may be infinite.
pub fn derivative_at_one<F>(
    coeffs: F,
    support_bound: Option<u64>,
    order: u32,
    policy: &SeriesPolicy,
) -> Result<SeriesResult, SeriesError>
where
    F: Fn(u64) -> f64,
{
    assert!(order >= 1, "derivative order must be >= 1");
    match support_bound {
        Some(bound) => {
            let mut sum = 0.0f64;
            let mut terms = 0u64;
            for n in u64::from(order)..=bound {
                sum += coeffs(n) * falling_factorial(n as f64, order);
                terms += 1;
            }
            Ok(SeriesResult {
                value: sum,
                terms_used: terms,
                tail_estimate: 0.0,
                certified: true,
            })
        }
        None => {
            // Terms below n = order vanish; start past them so the
            // small-term heuristic sees real mass.
            let shifted = |m: u64| {
                let n = m + u64::from(order);
                coeffs(n) * falling_factorial(n as f64, order)
            };
            sum_series(shifted, None, policy)
        }
    }
}
