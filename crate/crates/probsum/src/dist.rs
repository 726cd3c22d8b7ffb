//! Integer-valued random variables with PMF, CDF, survival and sampling
//! access.
//!
//! Survival probabilities are computed directly (closed forms or upper-tail
//! recurrences) rather than as `1 − cdf`, because the tail-bound optimizer
//! needs them accurate well below the 1e-12 level where the complement
//! would cancel. The geometric family uses the "failures before the first
//! success" convention on support {0, 1, 2, …}, so sums over the support
//! start at n = 0 everywhere.

use std::fmt;

use rand::Rng;

/// Exact factorials up to 20!; beyond that the log-gamma path takes over.
const FACTORIALS: [f64; 21] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
    355687428096000.0,
    6402373705728000.0,
    121645100408832000.0,
    2432902008176640000.0,
];

/// Tables whose entries sum to within this band of 1 are renormalized;
/// anything farther off is rejected.
pub const TABLE_SUM_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DistError {
    InvalidParameter(String),
    InvalidTable(String),
    BadDescriptor(String),
}

impl fmt::Display for DistError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            DistError::InvalidTable(msg) => write!(f, "invalid probability table: {msg}"),
            DistError::BadDescriptor(msg) => write!(f, "bad distribution descriptor: {msg}"),
        }
    }
}

impl std::error::Error for DistError {}

/// An integer-valued random variable.
///
/// Named families live on {0, 1, 2, …}. Finite tables may sit at any
/// integer offset, including negative ones (walk steps need signed
/// support); they are the only signed-support representation on purpose,
/// since truncating signed infinite support is complexity nothing here
/// requires.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Bernoulli { p: f64 },
    Binomial { n: u64, p: f64 },
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    NegativeBinomial { r: f64, p: f64 },
    Table { offset: i64, probs: Vec<f64> },
}

fn check_open_unit(p: f64, what: &str) -> Result<(), DistError> {
    if p.is_finite() && 0.0 < p && p < 1.0 {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(format!(
            "{what} must lie strictly inside (0, 1), got {p}"
        )))
    }
}

impl Distribution {
    pub fn bernoulli(p: f64) -> Result<Self, DistError> {
        check_open_unit(p, "bernoulli p")?;
        Ok(Distribution::Bernoulli { p })
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self, DistError> {
        check_open_unit(p, "binomial p")?;
        Ok(Distribution::Binomial { n, p })
    }

    /// Geometric on {0, 1, 2, …}: number of failures before the first
    /// success.
    pub fn geometric(p: f64) -> Result<Self, DistError> {
        check_open_unit(p, "geometric p")?;
        Ok(Distribution::Geometric { p })
    }

    pub fn poisson(lambda: f64) -> Result<Self, DistError> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Distribution::Poisson { lambda })
        } else {
            Err(DistError::InvalidParameter(format!(
                "poisson lambda must be positive, got {lambda}"
            )))
        }
    }

    pub fn negative_binomial(r: f64, p: f64) -> Result<Self, DistError> {
        check_open_unit(p, "negative binomial p")?;
        if r.is_finite() && r > 0.0 {
            Ok(Distribution::NegativeBinomial { r, p })
        } else {
            Err(DistError::InvalidParameter(format!(
                "negative binomial r must be positive, got {r}"
            )))
        }
    }

    /// Finite table on {offset, offset+1, …}. Entries must be nonnegative
    /// and sum to 1 within [`TABLE_SUM_BAND`]; within that band the table
    /// is silently renormalized (use [`Distribution::from_descriptor`] to
    /// observe the adjustment).
    pub fn table(offset: i64, probs: Vec<f64>) -> Result<Self, DistError> {
        Self::table_with_adjustment(offset, probs).map(|(d, _)| d)
    }

    fn table_with_adjustment(
        offset: i64,
        mut probs: Vec<f64>,
    ) -> Result<(Self, Option<f64>), DistError> {
        if probs.is_empty() {
            return Err(DistError::InvalidTable("table must be nonempty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DistError::InvalidTable(
                "table entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > TABLE_SUM_BAND {
            return Err(DistError::InvalidTable(format!(
                "table entries sum to {sum}, outside 1 ± {TABLE_SUM_BAND}"
            )));
        }
        let adjustment = if sum == 1.0 {
            None
        } else {
            for p in &mut probs {
                *p /= sum;
            }
            Some(sum - 1.0)
        };
        Ok((Distribution::Table { offset, probs }, adjustment))
    }

    /// Point mass at `value`, as a one-entry table.
    pub fn point_mass(value: i64) -> Self {
        Distribution::Table {
            offset: value,
            probs: vec![1.0],
        }
    }

    /// Parses the JSON distribution descriptor used by the CLI and test
    /// fixtures, e.g. `{"kind":"poisson","lambda":2.0}` or
    /// `{"kind":"table","offset":-1,"pmf":[0.7,0.0,0.3]}`.
    ///
    /// Returns the distribution together with the renormalization
    /// adjustment (observed sum minus 1) if the table needed one.
    pub fn from_descriptor(json: &str) -> Result<(Self, Option<f64>), DistError> {
        let desc: Descriptor =
            serde_json::from_str(json).map_err(|e| DistError::BadDescriptor(e.to_string()))?;
        desc.build()
    }

    pub fn support_min(&self) -> i64 {
        match self {
            Distribution::Table { offset, .. } => *offset,
            _ => 0,
        }
    }

    /// Largest support point, or `None` for the infinite families.
    pub fn support_max(&self) -> Option<i64> {
        match self {
            Distribution::Bernoulli { .. } => Some(1),
            Distribution::Binomial { n, .. } => Some(*n as i64),
            Distribution::Table { offset, probs } => Some(offset + probs.len() as i64 - 1),
            _ => None,
        }
    }

    pub fn has_negative_support(&self) -> bool {
        self.support_min() < 0
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Bernoulli { p } => *p,
            Distribution::Binomial { n, p } => *n as f64 * p,
            Distribution::Geometric { p } => (1.0 - p) / p,
            Distribution::Poisson { lambda } => *lambda,
            Distribution::NegativeBinomial { r, p } => r * (1.0 - p) / p,
            Distribution::Table { offset, probs } => probs
                .iter()
                .enumerate()
                .map(|(i, p)| (*offset + i as i64) as f64 * p)
                .sum(),
        }
    }

    /// P(X = n); zero outside the support.
    pub fn pmf(&self, n: i64) -> f64 {
        if n < self.support_min() {
            return 0.0;
        }
        match self {
            Distribution::Bernoulli { p } => match n {
                0 => 1.0 - p,
                1 => *p,
                _ => 0.0,
            },
            Distribution::Binomial { n: trials, p } => {
                let k = n as u64;
                if k > *trials {
                    return 0.0;
                }
                binomial_pmf(*trials, *p, k)
            }
            Distribution::Geometric { p } => p * (1.0 - p).powi(saturating_i32(n)),
            Distribution::Poisson { lambda } => poisson_pmf(*lambda, n as u64),
            Distribution::NegativeBinomial { r, p } => negative_binomial_pmf(*r, *p, n as u64),
            Distribution::Table { offset, probs } => {
                probs.get((n - offset) as usize).copied().unwrap_or(0.0)
            }
        }
    }

    /// P(X ≤ n).
    pub fn cdf(&self, n: i64) -> f64 {
        if n < self.support_min() {
            return 0.0;
        }
        if let Some(max) = self.support_max() {
            if n >= max {
                return 1.0;
            }
        }
        match self {
            Distribution::Table { offset, probs } => {
                let upto = (n - offset) as usize;
                probs[..=upto.min(probs.len() - 1)].iter().sum()
            }
            // Named families: accumulate whichever tail is shorter so both
            // sides of the distribution keep relative accuracy.
            _ => {
                if (n as f64) < self.mean() {
                    (0..=n).map(|k| self.pmf(k)).sum()
                } else {
                    1.0 - self.survival(n)
                }
            }
        }
    }

    /// P(X > n), computed from the upper tail directly.
    pub fn survival(&self, n: i64) -> f64 {
        if n < self.support_min() {
            return 1.0;
        }
        if let Some(max) = self.support_max() {
            if n >= max {
                return 0.0;
            }
        }
        match self {
            Distribution::Bernoulli { p } => *p, // only n = 0 reaches here
            Distribution::Binomial { n: trials, p } => ((n + 1) as u64..=*trials)
                .map(|k| binomial_pmf(*trials, *p, k))
                .sum(),
            Distribution::Geometric { p } => (1.0 - p).powi(saturating_i32(n + 1)),
            Distribution::Poisson { lambda } => {
                upper_tail_sum(poisson_pmf(*lambda, (n + 1) as u64), (n + 1) as u64, |k| {
                    lambda / (k + 1) as f64
                })
            }
            Distribution::NegativeBinomial { r, p } => {
                let q = 1.0 - p;
                upper_tail_sum(
                    negative_binomial_pmf(*r, *p, (n + 1) as u64),
                    (n + 1) as u64,
                    |k| q * (k as f64 + r) / (k + 1) as f64,
                )
            }
            Distribution::Table { offset, probs } => {
                let from = (n - offset + 1) as usize;
                probs[from.min(probs.len())..].iter().sum()
            }
        }
    }

    /// Upper bound on pmf(j+1)/pmf(j) valid for every j ≥ k, when the
    /// family admits one below 1 for large k. `None` for finite support
    /// (where no bound is needed).
    pub fn pmf_ratio_bound(&self, k: i64) -> Option<f64> {
        let k = k.max(0) as f64;
        match self {
            Distribution::Geometric { p } => Some(1.0 - p),
            Distribution::Poisson { lambda } => Some(lambda / (k + 1.0)),
            Distribution::NegativeBinomial { r, p } => {
                let q = 1.0 - p;
                Some(q * ((k + r) / (k + 1.0)).max(1.0))
            }
            _ => None,
        }
    }

    /// Upper bound on survival(j+1)/survival(j) valid for every j ≥ k.
    pub fn survival_ratio_bound(&self, k: i64) -> Option<f64> {
        // survival(j+1) = Σ_{i>j} pmf(i+1) ≤ ρ · survival(j) with ρ the
        // pmf ratio bound from k+1 on.
        self.pmf_ratio_bound(k + 1)
    }

    /// Draws one value. Inversion from a single uniform, so identical seed
    /// and call sequence reproduce identical output.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.gen();
        match self {
            Distribution::Bernoulli { p } => i64::from(u >= 1.0 - p),
            Distribution::Binomial { n: trials, p } => {
                let q = 1.0 - p;
                invert_recurrence(u, q.powi(saturating_u32(*trials)), *trials, |k| {
                    (*trials - k) as f64 / (k + 1) as f64 * (p / q)
                })
            }
            Distribution::Geometric { p } => {
                // Closed-form inversion of the tail q^{k+1}.
                let q = 1.0 - p;
                ((1.0 - u).ln() / q.ln()).floor() as i64
            }
            Distribution::Poisson { lambda } => {
                let cap = (lambda + 40.0 * lambda.sqrt() + 100.0) as u64;
                invert_recurrence(u, (-lambda).exp(), cap, |k| lambda / (k + 1) as f64)
            }
            Distribution::NegativeBinomial { r, p } => {
                let q = 1.0 - p;
                let mean = r * q / p;
                let var = mean / p;
                let cap = (mean + 40.0 * var.sqrt() + 100.0) as u64;
                invert_recurrence(u, p.powf(*r), cap, |k| q * (k as f64 + r) / (k + 1) as f64)
            }
            Distribution::Table { offset, probs } => {
                let mut cum = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        return offset + i as i64;
                    }
                }
                offset + probs.len() as i64 - 1
            }
        }
    }
}

/// Inversion sampling via the pmf recurrence pmf(k+1) = pmf(k)·ratio(k).
fn invert_recurrence(u: f64, pmf0: f64, cap: u64, ratio: impl Fn(u64) -> f64) -> i64 {
    let mut k = 0u64;
    let mut term = pmf0;
    let mut cum = term;
    while u >= cum && k < cap {
        term *= ratio(k);
        k += 1;
        cum += term;
    }
    k as i64
}

/// Σ_{j≥k0} pmf(j) given pmf(k0) and the pmf ratio recurrence. Stops once
/// terms are past the mode and negligible against the accumulated sum.
fn upper_tail_sum(pmf_start: f64, k0: u64, ratio: impl Fn(u64) -> f64) -> f64 {
    let mut term = pmf_start;
    let mut sum = term;
    let mut k = k0;
    loop {
        let r = ratio(k);
        term *= r;
        k += 1;
        sum += term;
        if r < 1.0 && term <= sum * 1e-18 {
            break;
        }
        if k > k0 + 100_000 {
            break; // tail flattened out numerically; sum is converged in f64
        }
    }
    sum
}

fn saturating_i32(n: i64) -> i32 {
    n.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

fn saturating_u32(n: u64) -> i32 {
    n.min(i32::MAX as u64) as i32
}

fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    if k <= 20 && lambda < 700.0 {
        (-lambda).exp() * lambda.powi(k as i32) / FACTORIALS[k as usize]
    } else {
        (-lambda + k as f64 * lambda.ln() - ln_factorial(k)).exp()
    }
}

fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    debug_assert!(k <= n);
    let q = 1.0 - p;
    if n <= 20 {
        let choose =
            FACTORIALS[n as usize] / (FACTORIALS[k as usize] * FACTORIALS[(n - k) as usize]);
        choose * p.powi(k as i32) * q.powi((n - k) as i32)
    } else {
        (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
            + k as f64 * p.ln()
            + (n - k) as f64 * q.ln())
        .exp()
    }
}

fn negative_binomial_pmf(r: f64, p: f64, k: u64) -> f64 {
    let q = 1.0 - p;
    if k <= 30 {
        // C(k+r−1, k) as ∏ (r+j)/(j+1)
        let mut coef = 1.0;
        for j in 0..k {
            coef *= (r + j as f64) / (j + 1) as f64;
        }
        coef * p.powf(r) * q.powi(k as i32)
    } else {
        (ln_gamma(k as f64 + r) - ln_gamma(r) - ln_factorial(k) + r * p.ln() + k as f64 * q.ln())
            .exp()
    }
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    if n <= 20 {
        FACTORIALS[n as usize].ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-14
/// relative for positive arguments.
#[allow(clippy::excessive_precision)]
pub(crate) fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // Shift upward; avoids the reflection formula for the small
        // positive arguments the negative binomial can produce.
        return ln_gamma(z + 1.0) - z.ln();
    }
    let z = z - 1.0;
    let mut x = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        x += c / (z + (i + 1) as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Serde form of the JSON distribution descriptor.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Descriptor {
    Bernoulli {
        p: f64,
    },
    Binomial {
        n: u64,
        p: f64,
    },
    Geometric {
        p: f64,
    },
    Poisson {
        lambda: f64,
    },
    NegativeBinomial {
        r: f64,
        p: f64,
    },
    Table {
        #[serde(default)]
        offset: i64,
        pmf: Vec<f64>,
    },
}

impl Descriptor {
    pub fn build(self) -> Result<(Distribution, Option<f64>), DistError> {
        match self {
            Descriptor::Bernoulli { p } => Ok((Distribution::bernoulli(p)?, None)),
            Descriptor::Binomial { n, p } => Ok((Distribution::binomial(n, p)?, None)),
            Descriptor::Geometric { p } => Ok((Distribution::geometric(p)?, None)),
            Descriptor::Poisson { lambda } => Ok((Distribution::poisson(lambda)?, None)),
            Descriptor::NegativeBinomial { r, p } => {
                Ok((Distribution::negative_binomial(r, p)?, None))
            }
            Descriptor::Table { offset, pmf } => Distribution::table_with_adjustment(offset, pmf),
        }
    }
}
