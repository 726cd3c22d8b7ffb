//! Stopped-sum expectations E\[S_w\] for triangular arrays X_1, X_2, … and
//! stopping times w, evaluated by two series routes and validated against
//! Monte Carlo.
//!
//! The two routes:
//!
//! * **weighted** — Σ_{n≥1} P(w ≥ n)·E\[X_n\];
//! * **rearranged** — Σ_{n≥1}(E\[X\] − E\[X_n\]·P(w < n)) − Σ_{n≥1}(E\[X\] − E\[X_n\]),
//!   the limit-difference form, with E\[X\] the limit mean.
//!
//! "Not dependent on the future" is enforced structurally by the two rule
//! kinds rather than verified semantically: an independent stopping time
//! drawn before the path, or a threshold on the partial sums that consults
//! S_1..S_n only. The measure-theoretic condition is not machine-checkable
//! from samples.
//!
//! Threshold rules have no closed-form P(w ≥ n); the series routes then
//! run on survival estimated by a dedicated Monte Carlo pass (its own seed
//! stream) and the results are flagged uncertified with propagated
//! standard errors.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dist::{Descriptor, DistError, Distribution};
use crate::rng;
use crate::series::{self, SeriesError, SeriesPolicy};

const MC_STREAM: u64 = 1;
const SURVIVAL_STREAM: u64 = 2;

/// Replicates whose stopping rule hits its hard cap more often than this
/// trip the finiteness warning.
pub const CAP_HIT_WARN_RATE: f64 = 0.01;

/// Default hard cap on threshold-rule path length.
pub const DEFAULT_THRESHOLD_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum StoppedError {
    InvalidModel(String),
    InvalidRule(String),
    /// Threshold rules need an estimated survival before series evaluation.
    MissingEstimate,
    /// One of the two rearranged-route series failed; `which` names it.
    SeriesDiverged {
        which: &'static str,
        source: SeriesError,
    },
    Series(SeriesError),
    Dist(DistError),
}

impl fmt::Display for StoppedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppedError::InvalidModel(msg) => write!(f, "invalid triangular model: {msg}"),
            StoppedError::InvalidRule(msg) => write!(f, "invalid stopping rule: {msg}"),
            StoppedError::MissingEstimate => write!(
                f,
                "threshold stopping rules need an estimated survival pass before \
                 series evaluation"
            ),
            StoppedError::SeriesDiverged { which, source } => {
                write!(f, "the {which} series did not converge: {source}")
            }
            StoppedError::Series(e) => write!(f, "series evaluation failed: {e}"),
            StoppedError::Dist(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for StoppedError {}

impl From<SeriesError> for StoppedError {
    fn from(e: SeriesError) -> Self {
        StoppedError::Series(e)
    }
}

impl From<DistError> for StoppedError {
    fn from(e: DistError) -> Self {
        StoppedError::Dist(e)
    }
}

type MeanFn = Box<dyn Fn(u64) -> f64 + Send + Sync>;
type SamplerFn = Box<dyn Fn(u64, &mut ChaCha8Rng) -> f64 + Send + Sync>;
type TailFn = Box<dyn Fn(u64) -> f64 + Send + Sync>;

/// A triangular array X_1, X_2, … with known per-index means E\[X_n\] and a
/// sampler. The caller asserts convergence in mean to a limit variable;
/// `limit_mean` is that E\[X\]. Registry models also carry a certified bound
/// on Σ_{n>k} |E\[X\] − E\[X_n\]| so the series routes can certify truncation.
pub struct TriangularModel {
    mean_fn: MeanFn,
    sampler: SamplerFn,
    pub limit_mean: f64,
    pub description: String,
    mean_gap_tail: Option<TailFn>,
    /// sup_n |E\[X_n\]|, used in remainder bounds.
    mean_abs_bound: f64,
}

impl fmt::Debug for TriangularModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriangularModel")
            .field("description", &self.description)
            .field("limit_mean", &self.limit_mean)
            .finish()
    }
}

impl TriangularModel {
    pub fn new(
        mean_fn: MeanFn,
        sampler: SamplerFn,
        limit_mean: f64,
        description: &str,
        mean_gap_tail: Option<TailFn>,
        mean_abs_bound: f64,
    ) -> Self {
        TriangularModel {
            mean_fn,
            sampler,
            limit_mean,
            description: description.to_string(),
            mean_gap_tail,
            mean_abs_bound,
        }
    }

    pub fn mean(&self, n: u64) -> f64 {
        (self.mean_fn)(n)
    }

    pub fn draw(&self, n: u64, rng: &mut ChaCha8Rng) -> f64 {
        (self.sampler)(n, rng)
    }

    fn gap_tail(&self, k: u64) -> Option<f64> {
        self.mean_gap_tail.as_ref().map(|f| f(k))
    }

    /// Builds a model from the JSON descriptor, e.g.
    /// `{"means":{"limit":0.5,"perturbation":"half_pow","scale":1.0},"step":"bernoulli"}`.
    pub fn from_descriptor(desc: ModelDescriptor) -> Result<Self, StoppedError> {
        desc.build()
    }

    /// Registry of shipped instances.
    pub fn named(name: &str) -> Option<Self> {
        let desc = match name {
            "wald-iid" => ModelDescriptor {
                means: MeansSpec {
                    limit: 2.0,
                    perturbation: Perturbation::None,
                    scale: 0.0,
                },
                step: StepKind::Poisson,
            },
            "geometric-perturbed-bernoulli" => ModelDescriptor {
                means: MeansSpec {
                    limit: 0.5,
                    perturbation: Perturbation::HalfPow,
                    scale: 1.0,
                },
                step: StepKind::Bernoulli,
            },
            _ => return None,
        };
        Some(desc.build().expect("registry descriptors are valid"))
    }

    pub const NAMES: [&'static str; 2] = ["wald-iid", "geometric-perturbed-bernoulli"];

    /// Accepts a registry name or an inline JSON descriptor.
    pub fn parse(name_or_json: &str) -> Result<Self, StoppedError> {
        if name_or_json.trim_start().starts_with('{') {
            let desc: ModelDescriptor = serde_json::from_str(name_or_json)
                .map_err(|e| StoppedError::InvalidModel(e.to_string()))?;
            desc.build()
        } else {
            Self::named(name_or_json).ok_or_else(|| {
                StoppedError::InvalidModel(format!(
                    "unknown model '{name_or_json}' (shipped: {})",
                    Self::NAMES.join(", ")
                ))
            })
        }
    }
}

/// Mean sequence of a descriptor-built model: limit plus a named
/// perturbation.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MeansSpec {
    pub limit: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    None,
    /// mean(n) = limit + scale · 2^{−(n+1)}
    HalfPow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// X_n ~ Bernoulli(mean(n)); means must stay inside [0, 1].
    Bernoulli,
    /// X_n ≡ mean(n), deterministic.
    Constant,
    /// X_n ~ Poisson(mean(n)); means must stay positive.
    Poisson,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ModelDescriptor {
    pub means: MeansSpec,
    pub step: StepKind,
}

impl ModelDescriptor {
    pub fn build(self) -> Result<TriangularModel, StoppedError> {
        let MeansSpec {
            limit,
            perturbation,
            scale,
        } = self.means;
        if !limit.is_finite() || !scale.is_finite() || scale < 0.0 {
            return Err(StoppedError::InvalidModel(
                "limit must be finite and scale finite and nonnegative".into(),
            ));
        }

        let mean_fn: MeanFn = match perturbation {
            Perturbation::None => Box::new(move |_| limit),
            Perturbation::HalfPow => Box::new(move |n| limit + scale * 0.5f64.powi(n as i32 + 1)),
        };
        let mean_gap_tail: Option<TailFn> = match perturbation {
            Perturbation::None => Some(Box::new(|_| 0.0)),
            Perturbation::HalfPow => Some(Box::new(move |k| scale * 0.5f64.powi(k as i32 + 1))),
        };
        let mean_abs_bound = match perturbation {
            Perturbation::None => limit.abs(),
            Perturbation::HalfPow => limit.abs() + scale,
        };

        // Extremes of the mean sequence over n ≥ 1: the n = 1 value and
        // the limit.
        let mean_lo = limit.min(limit + scale * 0.25);
        let mean_hi = limit.max(limit + scale * 0.25);

        let sampler: SamplerFn = match self.step {
            StepKind::Bernoulli => {
                if mean_lo < 0.0 || mean_hi > 1.0 {
                    return Err(StoppedError::InvalidModel(format!(
                        "bernoulli steps need means in [0, 1]; sequence spans \
                         [{mean_lo}, {mean_hi}]"
                    )));
                }
                let mean = match perturbation {
                    Perturbation::None => {
                        Box::new(move |_| limit) as Box<dyn Fn(u64) -> f64 + Send + Sync>
                    }
                    Perturbation::HalfPow => {
                        Box::new(move |n| limit + scale * 0.5f64.powi(n as i32 + 1))
                    }
                };
                Box::new(move |n, rng: &mut ChaCha8Rng| {
                    use rand::Rng;
                    f64::from(rng.gen::<f64>() < mean(n))
                })
            }
            StepKind::Constant => match perturbation {
                Perturbation::None => Box::new(move |_, _: &mut ChaCha8Rng| limit),
                Perturbation::HalfPow => {
                    Box::new(move |n, _: &mut ChaCha8Rng| limit + scale * 0.5f64.powi(n as i32 + 1))
                }
            },
            StepKind::Poisson => {
                if mean_lo <= 0.0 {
                    return Err(StoppedError::InvalidModel(format!(
                        "poisson steps need positive means; sequence reaches {mean_lo}"
                    )));
                }
                let mean = match perturbation {
                    Perturbation::None => {
                        Box::new(move |_| limit) as Box<dyn Fn(u64) -> f64 + Send + Sync>
                    }
                    Perturbation::HalfPow => {
                        Box::new(move |n| limit + scale * 0.5f64.powi(n as i32 + 1))
                    }
                };
                Box::new(move |n, rng: &mut ChaCha8Rng| {
                    Distribution::Poisson { lambda: mean(n) }.sample(rng) as f64
                })
            }
        };

        let description = format!(
            "limit {limit}, perturbation {perturbation:?} scale {scale}, {:?} steps",
            self.step
        );
        Ok(TriangularModel::new(
            mean_fn,
            sampler,
            limit,
            &description,
            mean_gap_tail,
            mean_abs_bound,
        ))
    }
}

/// A stopping time w on {1, 2, …} that never looks past the present.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    /// w drawn independently of the path, from `dist` shifted by `shift`.
    Independent { dist: Distribution, shift: i64 },
    /// Stop at the first n with S_n ≥ level, or at the hard cap. Consults
    /// S_1..S_n only.
    Threshold { level: f64, cap: u64 },
}

impl StoppingRule {
    pub fn independent(dist: Distribution, shift: i64) -> Result<Self, StoppedError> {
        if dist.support_min() + shift < 1 {
            return Err(StoppedError::InvalidRule(format!(
                "stopping times live on {{1, 2, …}}; support starts at {}",
                dist.support_min() + shift
            )));
        }
        Ok(StoppingRule::Independent { dist, shift })
    }

    pub fn threshold(level: f64, cap: u64) -> Result<Self, StoppedError> {
        if !level.is_finite() {
            return Err(StoppedError::InvalidRule("level must be finite".into()));
        }
        if cap == 0 {
            return Err(StoppedError::InvalidRule("cap must be >= 1".into()));
        }
        Ok(StoppingRule::Threshold { level, cap })
    }

    /// P(w ≥ n) in closed form; only independent rules have one.
    pub fn prob_w_ge(&self, n: u64) -> Option<f64> {
        match self {
            StoppingRule::Independent { dist, shift } => Some(dist.survival(n as i64 - shift - 1)),
            StoppingRule::Threshold { .. } => None,
        }
    }

    /// Upper bound on Σ_{n>k} P(w ≥ n) for independent rules.
    fn survival_sum_tail(&self, k: u64) -> Option<f64> {
        match self {
            StoppingRule::Independent { dist, shift } => {
                if let Some(max) = dist.support_max() {
                    let w_max = (max + shift).max(0) as u64;
                    let mut total = 0.0;
                    for n in k + 1..=w_max {
                        total += dist.survival(n as i64 - shift - 1);
                    }
                    return Some(total);
                }
                let rho = dist.survival_ratio_bound(k as i64 - shift)?;
                if rho < 1.0 {
                    Some(dist.survival(k as i64 - shift) / (1.0 - rho))
                } else {
                    Some(f64::INFINITY)
                }
            }
            StoppingRule::Threshold { .. } => None,
        }
    }

    pub fn parse(json: &str) -> Result<Self, StoppedError> {
        let desc: RuleDescriptor =
            serde_json::from_str(json).map_err(|e| StoppedError::InvalidRule(e.to_string()))?;
        desc.build()
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleDescriptor {
    Independent {
        dist: Descriptor,
        #[serde(default)]
        shift: i64,
    },
    Threshold {
        level: f64,
        #[serde(default = "default_cap")]
        cap: u64,
    },
}

fn default_cap() -> u64 {
    DEFAULT_THRESHOLD_CAP
}

impl RuleDescriptor {
    pub fn build(self) -> Result<StoppingRule, StoppedError> {
        match self {
            RuleDescriptor::Independent { dist, shift } => {
                let (d, _) = dist.build()?;
                StoppingRule::independent(d, shift)
            }
            RuleDescriptor::Threshold { level, cap } => StoppingRule::threshold(level, cap),
        }
    }
}

/// Survival of a threshold stopping time estimated by a dedicated Monte
/// Carlo pass, together with the per-replicate accumulations needed to
/// propagate uncertainty into the series routes.
#[derive(Debug, Clone)]
pub struct EmpiricalStopping {
    pub replicates: u64,
    /// survival[n] ≈ P(w ≥ n) for n = 1..=max_w (index 0 unused, = 1).
    survival: Vec<f64>,
    pub max_w: u64,
    pub cap_hit_rate: f64,
    /// Standard error of the mean of Y_i = Σ_{n≤w_i} E\[X_n\], which is the
    /// sampling error of the survival-weighted series under estimation.
    pub series_std_error: f64,
}

impl EmpiricalStopping {
    pub fn prob_w_ge(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        self.survival.get(n as usize).copied().unwrap_or(0.0)
    }
}

/// Estimates P(w ≥ n) for a threshold rule by simulating paths on a
/// dedicated seed stream.
pub fn estimate_stopping(
    model: &TriangularModel,
    rule: &StoppingRule,
    replicates: u64,
    seed: u64,
) -> Result<EmpiricalStopping, StoppedError> {
    let (level, cap) = match rule {
        StoppingRule::Threshold { level, cap } => (*level, *cap),
        StoppingRule::Independent { .. } => {
            return Err(StoppedError::InvalidRule(
                "independent rules have closed-form survival; no estimation pass needed".into(),
            ))
        }
    };
    if replicates == 0 {
        return Err(StoppedError::InvalidRule("replicates must be >= 1".into()));
    }

    struct Acc {
        w_counts: Vec<u64>,
        cap_hits: u64,
        y_sum: f64,
        y_sumsq: f64,
    }

    let accs: Vec<Acc> = rng::ranges(replicates)
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, len))| {
            let mut rng = rng::range_rng(seed, SURVIVAL_STREAM, idx as u64);
            let mut acc = Acc {
                w_counts: Vec::new(),
                cap_hits: 0,
                y_sum: 0.0,
                y_sumsq: 0.0,
            };
            let mut mean_cumsum = vec![0.0f64]; // index n → Σ_{k≤n} mean(k)
            for _ in 0..len {
                let mut s = 0.0f64;
                let mut n = 0u64;
                loop {
                    n += 1;
                    s += model.draw(n, &mut rng);
                    if s >= level {
                        break;
                    }
                    if n >= cap {
                        acc.cap_hits += 1;
                        break;
                    }
                }
                while mean_cumsum.len() <= n as usize {
                    let next = mean_cumsum.len() as u64;
                    mean_cumsum.push(mean_cumsum[next as usize - 1] + model.mean(next));
                }
                let y = mean_cumsum[n as usize];
                acc.y_sum += y;
                acc.y_sumsq += y * y;
                if acc.w_counts.len() <= n as usize {
                    acc.w_counts.resize(n as usize + 1, 0);
                }
                acc.w_counts[n as usize] += 1;
            }
            acc
        })
        .collect();

    let mut w_counts: Vec<u64> = Vec::new();
    let mut cap_hits = 0u64;
    let mut y_sum = 0.0;
    let mut y_sumsq = 0.0;
    for acc in accs {
        if w_counts.len() < acc.w_counts.len() {
            w_counts.resize(acc.w_counts.len(), 0);
        }
        for (i, c) in acc.w_counts.iter().enumerate() {
            w_counts[i] += c;
        }
        cap_hits += acc.cap_hits;
        y_sum += acc.y_sum;
        y_sumsq += acc.y_sumsq;
    }

    let max_w = w_counts.len().saturating_sub(1) as u64;
    let r = replicates as f64;
    // survival[n] = (# replicates with w ≥ n) / R, built from the top.
    let mut survival = vec![0.0f64; max_w as usize + 1];
    let mut ge = 0u64;
    for n in (1..=max_w as usize).rev() {
        ge += w_counts[n];
        survival[n] = ge as f64 / r;
    }
    if !survival.is_empty() {
        survival[0] = 1.0;
    }

    let y_mean = y_sum / r;
    let y_var = ((y_sumsq - r * y_mean * y_mean) / (r - 1.0).max(1.0)).max(0.0);

    Ok(EmpiricalStopping {
        replicates,
        survival,
        max_w,
        cap_hit_rate: cap_hits as f64 / r,
        series_std_error: (y_var / r).sqrt(),
    })
}

/// Value of one series route.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SeriesEstimate {
    pub value: f64,
    pub certified: bool,
    /// Propagated Monte Carlo uncertainty when the rule survival was
    /// estimated; absent for closed-form rules.
    pub std_error: Option<f64>,
    pub terms_used: u64,
}

fn survival_lookup<'a>(
    rule: &'a StoppingRule,
    est: Option<&'a EmpiricalStopping>,
) -> Result<Box<dyn Fn(u64) -> f64 + 'a>, StoppedError> {
    match rule {
        StoppingRule::Independent { .. } => Ok(Box::new(move |n| {
            rule.prob_w_ge(n)
                .expect("independent rules have closed-form survival")
        })),
        StoppingRule::Threshold { .. } => {
            let est = est.ok_or(StoppedError::MissingEstimate)?;
            Ok(Box::new(move |n| est.prob_w_ge(n)))
        }
    }
}

/// Survival-weighted route Σ_{n≥1} P(w ≥ n)·E\[X_n\].
///
/// The caller asserts the underlying convergence hypothesis (absolute
/// convergence of the series). Threshold rules require `est` from
/// [`estimate_stopping`]; the result is then uncertified and carries the
/// propagated standard error.
pub fn stopped_sum_series(
    model: &TriangularModel,
    rule: &StoppingRule,
    est: Option<&EmpiricalStopping>,
    policy: &SeriesPolicy,
) -> Result<SeriesEstimate, StoppedError> {
    let p_w_ge = survival_lookup(rule, est)?;
    let term = |m: u64| p_w_ge(m + 1) * model.mean(m + 1);

    let estimated = matches!(rule, StoppingRule::Threshold { .. });
    let result = if estimated {
        series::sum_series(term, None, policy)?
    } else {
        let tail = |m: u64| match rule.survival_sum_tail(m + 1) {
            Some(t) => t * model.mean_abs_bound,
            None => f64::INFINITY,
        };
        series::sum_series(term, Some(&tail), policy)?
    };

    Ok(SeriesEstimate {
        value: result.value,
        certified: result.certified && !estimated,
        std_error: est.filter(|_| estimated).map(|e| e.series_std_error),
        terms_used: result.terms_used,
    })
}

/// Rearranged route: Σ (E\[X\] − E\[X_n\]·P(w<n)) − Σ (E\[X\] − E\[X_n\]).
///
/// Both series are evaluated separately; a divergence error names which
/// one failed.
pub fn stopped_sum_rearranged(
    model: &TriangularModel,
    rule: &StoppingRule,
    est: Option<&EmpiricalStopping>,
    policy: &SeriesPolicy,
) -> Result<SeriesEstimate, StoppedError> {
    let p_w_ge = survival_lookup(rule, est)?;
    let limit = model.limit_mean;
    let estimated = matches!(rule, StoppingRule::Threshold { .. });

    let first_term = |m: u64| {
        let n = m + 1;
        limit - model.mean(n) * (1.0 - p_w_ge(n))
    };
    let second_term = |m: u64| limit - model.mean(m + 1);

    let first = if estimated {
        series::sum_series(first_term, None, policy)
    } else {
        let tail = |m: u64| match (model.gap_tail(m + 1), rule.survival_sum_tail(m + 1)) {
            (Some(gap), Some(surv)) => gap + surv * model.mean_abs_bound,
            _ => f64::INFINITY,
        };
        match model.gap_tail(0) {
            Some(_) => series::sum_series(first_term, Some(&tail), policy),
            None => series::sum_series(first_term, None, policy),
        }
    }
    .map_err(|source| StoppedError::SeriesDiverged {
        which: "stopped-weight",
        source,
    })?;

    let second = {
        let tail = |m: u64| model.gap_tail(m + 1).unwrap_or(f64::INFINITY);
        match model.gap_tail(0) {
            Some(_) => series::sum_series(second_term, Some(&tail), policy),
            None => series::sum_series(second_term, None, policy),
        }
    }
    .map_err(|source| StoppedError::SeriesDiverged {
        which: "mean-gap",
        source,
    })?;

    Ok(SeriesEstimate {
        value: first.value - second.value,
        certified: first.certified && second.certified && !estimated,
        std_error: est.filter(|_| estimated).map(|e| e.series_std_error),
        terms_used: first.terms_used.max(second.terms_used),
    })
}

/// Monte Carlo estimate of E\[S_w\].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McStoppedSum {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: u64,
    /// Fraction of replicates that hit the threshold cap (0 for
    /// independent rules).
    pub cap_hit_rate: f64,
}

/// Simulates S_w directly. Independent rules draw w first, then exactly w
/// steps; threshold rules draw one step at a time and never look past the
/// stopping index. Deterministic per seed, independent of worker count.
pub fn mc_stopped_sum(
    model: &TriangularModel,
    rule: &StoppingRule,
    replicates: u64,
    seed: u64,
) -> McStoppedSum {
    struct Acc {
        sum: f64,
        sumsq: f64,
        cap_hits: u64,
    }

    let accs: Vec<Acc> = rng::ranges(replicates)
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, len))| {
            let mut rng = rng::range_rng(seed, MC_STREAM, idx as u64);
            let mut acc = Acc {
                sum: 0.0,
                sumsq: 0.0,
                cap_hits: 0,
            };
            for _ in 0..len {
                let s_w = match rule {
                    StoppingRule::Independent { dist, shift } => {
                        let w = (dist.sample(&mut rng) + shift) as u64;
                        let mut s = 0.0;
                        for n in 1..=w {
                            s += model.draw(n, &mut rng);
                        }
                        s
                    }
                    StoppingRule::Threshold { level, cap } => {
                        let mut s = 0.0;
                        let mut n = 0u64;
                        loop {
                            n += 1;
                            s += model.draw(n, &mut rng);
                            if s >= *level {
                                break;
                            }
                            if n >= *cap {
                                acc.cap_hits += 1;
                                break;
                            }
                        }
                        s
                    }
                };
                acc.sum += s_w;
                acc.sumsq += s_w * s_w;
            }
            acc
        })
        .collect();

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut cap_hits = 0u64;
    for acc in accs {
        sum += acc.sum;
        sumsq += acc.sumsq;
        cap_hits += acc.cap_hits;
    }

    let r = replicates as f64;
    let mean = sum / r;
    let var = ((sumsq - r * mean * mean) / (r - 1.0).max(1.0)).max(0.0);
    McStoppedSum {
        estimate: mean,
        std_error: (var / r).sqrt(),
        replicates,
        cap_hit_rate: cap_hits as f64 / r,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TermsUsed {
    pub weighted: u64,
    pub rearranged: u64,
}

/// Both series routes and the Monte Carlo estimate, with agreement
/// diagnostics. Route failures land in `errors` while surviving values are
/// still reported.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StoppedSumReport {
    pub series_weighted: Option<f64>,
    pub series_rearranged: Option<f64>,
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    pub terms_used: TermsUsed,
    pub certified: bool,
    /// Propagated series uncertainty for estimated-survival rules.
    pub series_std_error: Option<f64>,
    pub series_abs_diff: Option<f64>,
    /// |series_weighted − mc| in units of the MC standard error.
    pub mc_sigma_distance: Option<f64>,
    pub cap_hit_rate: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub errors: Vec<String>,
}

/// Runs both series routes and the Monte Carlo check.
pub fn stopped_report(
    model: &TriangularModel,
    rule: &StoppingRule,
    policy: &SeriesPolicy,
    replicates: u64,
    seed: u64,
) -> StoppedSumReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let est = match rule {
        StoppingRule::Threshold { .. } => match estimate_stopping(model, rule, replicates, seed) {
            Ok(e) => {
                if e.cap_hit_rate > CAP_HIT_WARN_RATE {
                    warnings.push(format!(
                        "survival estimation hit the path cap in {:.2}% of replicates; \
                             the finite-stopping hypothesis looks strained",
                        e.cap_hit_rate * 100.0
                    ));
                }
                Some(e)
            }
            Err(e) => {
                errors.push(format!("survival estimation: {e}"));
                None
            }
        },
        StoppingRule::Independent { .. } => None,
    };

    let mut certified = true;
    let mut terms = TermsUsed {
        weighted: 0,
        rearranged: 0,
    };
    let mut series_std_error = None;

    let weighted = match stopped_sum_series(model, rule, est.as_ref(), policy) {
        Ok(s) => {
            certified &= s.certified;
            terms.weighted = s.terms_used;
            series_std_error = series_std_error.or(s.std_error);
            Some(s.value)
        }
        Err(e) => {
            certified = false;
            errors.push(format!("weighted series: {e}"));
            None
        }
    };

    let rearranged = match stopped_sum_rearranged(model, rule, est.as_ref(), policy) {
        Ok(s) => {
            certified &= s.certified;
            terms.rearranged = s.terms_used;
            series_std_error = series_std_error.or(s.std_error);
            Some(s.value)
        }
        Err(e) => {
            certified = false;
            errors.push(format!("rearranged series: {e}"));
            None
        }
    };

    let mc = mc_stopped_sum(model, rule, replicates, seed);
    if mc.cap_hit_rate > CAP_HIT_WARN_RATE {
        warnings.push(format!(
            "{:.2}% of Monte Carlo replicates hit the path cap; the finite-stopping \
             hypothesis looks strained",
            mc.cap_hit_rate * 100.0
        ));
    }

    let series_abs_diff = match (weighted, rearranged) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    };
    // Distance in units of the combined Monte Carlo plus propagated-series
    // uncertainty; undefined when everything is degenerate-exact.
    let mc_sigma_distance = weighted.and_then(|w| {
        let se = series_std_error.unwrap_or(0.0);
        let combined = (mc.std_error * mc.std_error + se * se).sqrt();
        let diff = (w - mc.estimate).abs();
        if combined > 0.0 {
            Some(diff / combined)
        } else {
            (diff == 0.0).then_some(0.0)
        }
    });

    StoppedSumReport {
        series_weighted: weighted,
        series_rearranged: rearranged,
        mc_estimate: mc.estimate,
        mc_std_error: mc.std_error,
        terms_used: terms,
        certified,
        series_std_error,
        series_abs_diff,
        mc_sigma_distance,
        cap_hit_rate: mc.cap_hit_rate,
        warnings,
        errors,
    }
}
