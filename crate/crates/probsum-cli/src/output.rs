//! Report envelopes and the three output formats.
//!
//! JSON is the machine surface (schemas ship under `schemas/`), CSV exists
//! only for histogram and profile data, and pretty is a terminal summary.

use std::fs;
use std::path::Path;

use probsum::bounds::BoundResult;
use probsum::identities::IdentityReport;
use probsum::moments::MomentReport;
use probsum::stopped::StoppedSumReport;
use probsum::walks::{EquidistributionReport, WalkStats};

use crate::selftest::SelftestReport;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Pretty,
}

#[derive(serde::Serialize)]
#[serde(untagged)]
pub enum BoundEntry {
    Ok(Box<BoundResult>),
    Failed { x: f64, error: String },
}

#[derive(serde::Serialize)]
#[serde(untagged)]
pub enum CommandOutput {
    Moments {
        /// Table-sum adjustment applied while parsing the descriptor.
        renormalization: Option<f64>,
        reports: Vec<MomentReport>,
        /// Present when some order disagreed beyond the exit-2 tolerance.
        #[serde(skip_serializing_if = "Option::is_none")]
        disagreement: Option<String>,
    },
    Bound {
        renormalization: Option<f64>,
        results: Vec<BoundEntry>,
    },
    Identity {
        kind: String,
        #[serde(flatten)]
        report: IdentityReport,
    },
    Walk {
        stats: WalkStats,
        equidistribution: EquidistributionReport,
    },
    Stopped(Box<StoppedSumReport>),
    Selftest(SelftestReport),
}

pub fn emit(
    output: &CommandOutput,
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = render(output, format)?;
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {path:?}: {e}"))),
    }
}

fn render(output: &CommandOutput, format: OutputFormat) -> Result<String, CliError> {
    match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string(output)
                .map_err(|e| CliError::Usage(format!("serialization failed: {e}")))?;
            text.push('\n');
            Ok(text)
        }
        OutputFormat::Csv => render_csv(output),
        OutputFormat::Pretty => Ok(render_pretty(output)),
    }
}

fn render_csv(output: &CommandOutput) -> Result<String, CliError> {
    match output {
        CommandOutput::Walk { stats, .. } => {
            let mut text = String::from("value,eta_count,t_count\n");
            for (v, (eta, t)) in stats.eta_hist.iter().zip(&stats.t_hist).enumerate() {
                text.push_str(&format!("{v},{eta},{t}\n"));
            }
            Ok(text)
        }
        CommandOutput::Bound { results, .. } => {
            let mut text = String::from("x,best_N,bound,clamped\n");
            for entry in results {
                if let BoundEntry::Ok(r) = entry {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        r.x, r.best_order, r.bound, r.clamped
                    ));
                }
            }
            Ok(text)
        }
        _ => Err(CliError::Usage(
            "csv output exists only for walk histograms and bound profiles".into(),
        )),
    }
}

fn render_pretty(output: &CommandOutput) -> String {
    let mut s = String::new();
    match output {
        CommandOutput::Moments {
            reports,
            renormalization,
            disagreement,
        } => {
            if let Some(adj) = renormalization {
                s.push_str(&format!("table renormalized by {adj:+.3e}\n"));
            }
            s.push_str("  N        direct      tail_sum           pgf  max_rel_diff certified\n");
            for r in reports {
                let fmt = |v: Option<f64>| match v {
                    Some(v) => format!("{v:>13.6e}"),
                    None => format!("{:>13}", "absent"),
                };
                s.push_str(&format!(
                    "{:>3} {} {} {} {:>13.3e} {}\n",
                    r.order,
                    fmt(r.direct),
                    fmt(r.tail_sum),
                    fmt(r.pgf),
                    r.max_rel_diff,
                    r.certified
                ));
            }
            if let Some(d) = disagreement {
                s.push_str(&format!("warning: {d}\n"));
            }
        }
        CommandOutput::Bound { results, .. } => {
            s.push_str("    x  best_N         bound clamped\n");
            for entry in results {
                match entry {
                    BoundEntry::Ok(r) => s.push_str(&format!(
                        "{:>5} {:>7} {:>13.6e} {}\n",
                        r.x, r.best_order, r.bound, r.clamped
                    )),
                    BoundEntry::Failed { x, error } => {
                        s.push_str(&format!("{x:>5}  failed: {error}\n"))
                    }
                }
            }
        }
        CommandOutput::Identity { kind, report } => {
            s.push_str(&format!(
                "{kind}: lhs = {:.12e}, rhs = {:.12e}, |diff| = {:.3e}, certified = {}\n",
                report.lhs, report.rhs, report.abs_diff, report.certified
            ));
            if let Some(p) = report.interpretation {
                s.push_str(&format!("P(X <= Y) = {p:.12e}\n"));
            }
        }
        CommandOutput::Walk {
            stats,
            equidistribution,
        } => {
            s.push_str(&format!(
                "walk: horizon {}, replicates {}, seed {}\n",
                stats.horizon, stats.replicates, stats.seed
            ));
            s.push_str(&format!(
                "gate: m_horizon = {:.3e} (threshold {:.1e})\n",
                equidistribution.gate_estimate, equidistribution.gate_threshold
            ));
            for c in &equidistribution.checks {
                s.push_str(&format!(
                    "order {}: eta {:.6e} vs t {:.6e}, |diff| {:.3e}, 3*SE {:.3e} -> {}\n",
                    c.order,
                    c.eta_value,
                    c.t_value,
                    c.abs_diff,
                    3.0 * c.combined_std_error,
                    if c.pass { "pass" } else { "FAIL" }
                ));
            }
        }
        CommandOutput::Stopped(r) => {
            let fmt = |v: Option<f64>| match v {
                Some(v) => format!("{v:.9e}"),
                None => "failed".to_string(),
            };
            s.push_str(&format!(
                "series (weighted)   = {}\nseries (rearranged) = {}\n",
                fmt(r.series_weighted),
                fmt(r.series_rearranged)
            ));
            s.push_str(&format!(
                "monte carlo         = {:.9e} +- {:.3e}\n",
                r.mc_estimate, r.mc_std_error
            ));
            if let Some(d) = r.series_abs_diff {
                s.push_str(&format!("series |diff|       = {d:.3e}\n"));
            }
            if let Some(z) = r.mc_sigma_distance {
                s.push_str(&format!("mc distance         = {z:.2} sigma\n"));
            }
            s.push_str(&format!("certified           = {}\n", r.certified));
            for w in &r.warnings {
                s.push_str(&format!("warning: {w}\n"));
            }
        }
        CommandOutput::Selftest(report) => {
            for check in &report.checks {
                s.push_str(&format!(
                    "{:<30} {} {}\n",
                    check.name,
                    if check.pass { "pass" } else { "FAIL" },
                    check.detail
                ));
            }
            s.push_str(&format!(
                "{}/{} checks passed (seed {})\n",
                report.checks.iter().filter(|c| c.pass).count(),
                report.checks.len(),
                report.seed
            ));
        }
    }
    s
}
