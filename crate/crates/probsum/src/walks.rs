//! Random-walk Monte Carlo for the positivity count η and the first
//! argmax index T, plus the weighted-tail-sum equidistribution check.
//!
//! For a walk S_1, …, S_h with iid integer steps, each replicate records
//!
//! * η — the number of indices i with S_i strictly positive;
//! * T — the smallest i attaining max_{1≤i≤h} S_i, or 0 when that
//!   maximum is ≤ 0.
//!
//! In the negative-drift limit both statistics share a distribution, which
//! the check exercises through equality of weighted survival sums
//! Σ ∏_{j=1}^{N−1}(n+j)·P(stat > n+N−1) for the configured orders N. The
//! limit is approximated at a finite horizon; an empirical gate on
//! m_h = P(S_h > 0) certifies that practically nothing changes past the
//! horizon before the check is allowed to run.
//!
//! Replicates are split into fixed ranges with per-range counter-derived
//! RNG streams and merged in range order, so results are bit-identical no
//! matter how many worker threads rayon schedules.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::dist::Distribution;
use crate::rng;

/// Default threshold on the empirical m_h = P(S_h > 0) gate.
pub const DEFAULT_CONVERGENCE_GATE: f64 = 1e-4;

/// Bootstrap resamples behind every weighted-sum standard error.
pub const BOOTSTRAP_RESAMPLES: u32 = 200;

const STEP_STREAM: u64 = 0;
const BOOTSTRAP_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum WalkError {
    InvalidConfig(String),
    /// The walk retains too much positive mass at the horizon for the
    /// limit statistics to have settled.
    ConvergenceGate {
        m_horizon: f64,
        gate: f64,
    },
}

impl fmt::Display for WalkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WalkError::InvalidConfig(msg) => write!(f, "invalid walk config: {msg}"),
            WalkError::ConvergenceGate { m_horizon, gate } => write!(
                f,
                "P(S_n > 0) is {m_horizon} at the horizon, above the gate {gate}; \
                 convergence of the series Σ m_n/n is doubtful at this horizon"
            ),
        }
    }
}

impl std::error::Error for WalkError {}

/// A walk increment: a finite-support integer distribution. Walks want
/// signed steps, so a step with no negative support point must be
/// constructed with an explicit drift note.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    dist: Distribution,
    drift_note: Option<String>,
}

impl StepDistribution {
    pub fn new(dist: Distribution) -> Result<Self, WalkError> {
        if dist.support_max().is_none() {
            return Err(WalkError::InvalidConfig(
                "step distributions must have finite support".into(),
            ));
        }
        if !dist.has_negative_support() {
            return Err(WalkError::InvalidConfig(
                "step has no negative support point; use with_drift_note if that is intended"
                    .into(),
            ));
        }
        Ok(StepDistribution {
            dist,
            drift_note: None,
        })
    }

    /// Admits a nonnegative step, recording why the caller wants a walk
    /// that can only drift upward.
    pub fn with_drift_note(dist: Distribution, note: &str) -> Result<Self, WalkError> {
        if dist.support_max().is_none() {
            return Err(WalkError::InvalidConfig(
                "step distributions must have finite support".into(),
            ));
        }
        Ok(StepDistribution {
            dist,
            drift_note: Some(note.to_string()),
        })
    }

    pub fn dist(&self) -> &Distribution {
        &self.dist
    }

    pub fn drift_note(&self) -> Option<&str> {
        self.drift_note.as_deref()
    }

    /// The ±1 step with P(+1) = p, the reference walk shape.
    pub fn plus_minus_one(p_up: f64) -> Result<Self, WalkError> {
        let dist = Distribution::table(-1, vec![1.0 - p_up, 0.0, p_up])
            .map_err(|e| WalkError::InvalidConfig(e.to_string()))?;
        Self::new(dist)
    }
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub step: StepDistribution,
    pub horizon: u32,
    pub replicates: u64,
    pub seed: u64,
    /// Weighted-sum orders N for the equidistribution check.
    pub orders: Vec<u32>,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.horizon < 1 {
            return Err(WalkError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.replicates < 1 {
            return Err(WalkError::InvalidConfig("replicates must be >= 1".into()));
        }
        if self.orders.contains(&0) {
            return Err(WalkError::InvalidConfig("orders must be >= 1".into()));
        }
        Ok(())
    }
}

/// Estimated m_n = P(S_n > 0) at one index.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PositivityEstimate {
    pub n: u32,
    pub estimate: f64,
    pub std_error: f64,
}

/// Weighted survival sums of η and T at one order, with bootstrap SEs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WeightedSums {
    pub order: u32,
    pub eta_value: f64,
    pub eta_std_error: f64,
    pub t_value: f64,
    pub t_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WalkStats {
    pub horizon: u32,
    pub replicates: u64,
    pub seed: u64,
    /// Histogram of η over 0..=horizon.
    pub eta_hist: Vec<u64>,
    /// Histogram of T over 0..=horizon.
    pub t_hist: Vec<u64>,
    /// m_n estimates for n = 1..=horizon.
    #[serde(rename = "m_n_estimates")]
    pub m_n: Vec<PositivityEstimate>,
    pub weighted_sums: Vec<WeightedSums>,
}

struct RangeAccum {
    eta: Vec<u64>,
    t: Vec<u64>,
    positive: Vec<u64>,
}

fn simulate_range(cfg: &WalkConfig, range_index: u64, replicates: u64) -> RangeAccum {
    let h = cfg.horizon as usize;
    let mut acc = RangeAccum {
        eta: vec![0; h + 1],
        t: vec![0; h + 1],
        positive: vec![0; h + 1],
    };
    let mut rng = rng::range_rng(cfg.seed, STEP_STREAM, range_index);
    let step = cfg.step.dist();

    for _ in 0..replicates {
        let mut s = 0i64;
        let mut eta = 0usize;
        let mut max = 0i64;
        let mut argmax = 0usize;
        for i in 1..=h {
            s += step.sample(&mut rng);
            if s > 0 {
                eta += 1;
                acc.positive[i] += 1;
            }
            // Strict comparison keeps the first attainment; staying at 0
            // leaves T = 0, which is exactly the max ≤ 0 convention.
            if s > max {
                max = s;
                argmax = i;
            }
        }
        acc.eta[eta] += 1;
        acc.t[argmax] += 1;
    }
    acc
}

/// Prefix table G(v) = Σ_{n ≤ v−N} ∏_{j=1}^{N−1}(n+j), so that the
/// weighted survival sum of a statistic equals the mean of G over its
/// replicate values.
fn weight_prefix_table(order: u32, horizon: u32) -> Vec<f64> {
    let mut acc = 0.0f64;
    (0..=horizon as usize)
        .map(|v| {
            if v >= order as usize {
                let n = (v - order as usize) as f64;
                let mut w = 1.0f64;
                for j in 1..order {
                    w *= n + f64::from(j);
                }
                acc += w;
            }
            acc
        })
        .collect()
}

fn weighted_sum(hist: &[u64], g: &[f64], replicates: u64) -> f64 {
    let total: f64 = hist
        .iter()
        .zip(g)
        .map(|(&count, &gv)| count as f64 * gv)
        .sum();
    total / replicates as f64
}

/// Bootstrap SEs for all orders at once: resample replicates from the
/// empirical histogram and recompute every weighted sum per resample.
fn bootstrap_std_errors(
    hist: &[u64],
    g_tables: &[Vec<f64>],
    replicates: u64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let cumulative: Vec<u64> = hist
        .iter()
        .scan(0u64, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect();

    let mut samples = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES as usize); g_tables.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut sums = vec![0.0f64; g_tables.len()];
        for _ in 0..replicates {
            let pick = rng.gen_range(0..replicates);
            let cell = cumulative.partition_point(|&c| c <= pick);
            for (k, g) in g_tables.iter().enumerate() {
                sums[k] += g[cell];
            }
        }
        for (k, sum) in sums.iter().enumerate() {
            samples[k].push(sum / replicates as f64);
        }
    }

    samples
        .iter()
        .map(|vals| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
            var.sqrt()
        })
        .collect()
}

/// Runs the walk. Deterministic in (seed, replicates, horizon, orders),
/// independent of how many worker threads execute the ranges.
pub fn simulate_walk(cfg: &WalkConfig) -> Result<WalkStats, WalkError> {
    cfg.validate()?;
    let h = cfg.horizon as usize;

    let accums: Vec<RangeAccum> = rng::ranges(cfg.replicates)
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, len))| simulate_range(cfg, idx as u64, len))
        .collect();

    let mut eta_hist = vec![0u64; h + 1];
    let mut t_hist = vec![0u64; h + 1];
    let mut positive = vec![0u64; h + 1];
    for acc in accums {
        for i in 0..=h {
            eta_hist[i] += acc.eta[i];
            t_hist[i] += acc.t[i];
            positive[i] += acc.positive[i];
        }
    }

    let r = cfg.replicates as f64;
    let m_n = (1..=h)
        .map(|n| {
            let m = positive[n] as f64 / r;
            PositivityEstimate {
                n: n as u32,
                estimate: m,
                std_error: (m * (1.0 - m) / r).sqrt(),
            }
        })
        .collect();

    let g_tables: Vec<Vec<f64>> = cfg
        .orders
        .iter()
        .map(|&order| weight_prefix_table(order, cfg.horizon))
        .collect();

    let weighted_sums = if g_tables.is_empty() {
        Vec::new()
    } else {
        let mut boot_rng = rng::range_rng(cfg.seed, BOOTSTRAP_STREAM, 0);
        let eta_se = bootstrap_std_errors(&eta_hist, &g_tables, cfg.replicates, &mut boot_rng);
        let t_se = bootstrap_std_errors(&t_hist, &g_tables, cfg.replicates, &mut boot_rng);
        cfg.orders
            .iter()
            .enumerate()
            .map(|(k, &order)| WeightedSums {
                order,
                eta_value: weighted_sum(&eta_hist, &g_tables[k], cfg.replicates),
                eta_std_error: eta_se[k],
                t_value: weighted_sum(&t_hist, &g_tables[k], cfg.replicates),
                t_std_error: t_se[k],
            })
            .collect()
    };

    Ok(WalkStats {
        horizon: cfg.horizon,
        replicates: cfg.replicates,
        seed: cfg.seed,
        eta_hist,
        t_hist,
        m_n,
        weighted_sums,
    })
}

/// One order of the equidistribution comparison.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EquidistributionCheck {
    pub order: u32,
    pub eta_value: f64,
    pub t_value: f64,
    pub abs_diff: f64,
    pub combined_std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquidistributionReport {
    /// Empirical m at the horizon, which passed the gate.
    pub gate_estimate: f64,
    pub gate_threshold: f64,
    pub checks: Vec<EquidistributionCheck>,
    pub all_pass: bool,
}

/// Equidistribution verdicts from already-computed walk statistics. Fails
/// with the convergence gate when the walk still has positive mass at the
/// horizon.
pub fn equidistribution_from_stats(
    stats: &WalkStats,
    gate: f64,
) -> Result<EquidistributionReport, WalkError> {
    let m_horizon = stats.m_n.last().map_or(0.0, |m| m.estimate);
    if m_horizon >= gate {
        return Err(WalkError::ConvergenceGate { m_horizon, gate });
    }

    let checks: Vec<EquidistributionCheck> = stats
        .weighted_sums
        .iter()
        .map(|ws| {
            let diff = (ws.eta_value - ws.t_value).abs();
            let combined =
                (ws.eta_std_error * ws.eta_std_error + ws.t_std_error * ws.t_std_error).sqrt();
            EquidistributionCheck {
                order: ws.order,
                eta_value: ws.eta_value,
                t_value: ws.t_value,
                abs_diff: diff,
                combined_std_error: combined,
                pass: diff <= 3.0 * combined,
            }
        })
        .collect();

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(EquidistributionReport {
        gate_estimate: m_horizon,
        gate_threshold: gate,
        checks,
        all_pass,
    })
}

/// Simulates and checks in one call.
pub fn check_equidistribution(
    cfg: &WalkConfig,
    gate: f64,
) -> Result<EquidistributionReport, WalkError> {
    let stats = simulate_walk(cfg)?;
    equidistribution_from_stats(&stats, gate)
}
