//! `probsum` — one binary over the summation-formula toolkit.
//!
//! Subcommands: `moments`, `bound`, `identity`, `walk`, `stopped`, and
//! `selftest` (the full verification battery as an executable table).
//!
//! Exit codes: 0 success, 1 usage or parse failure, 2 numerical
//! disagreement beyond tolerance, 3 hypothesis-gate failure.

mod output;
mod selftest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use probsum::bounds;
use probsum::dist::Distribution;
use probsum::identities::{self, SequencePair};
use probsum::moments;
use probsum::stopped::{self, StoppingRule, TriangularModel};
use probsum::walks::{self, StepDistribution, WalkConfig};
use probsum::SeriesPolicy;

use output::{CommandOutput, OutputFormat};

/// Route disagreement beyond this relative tolerance exits with code 2.
const DISAGREEMENT_TOL: f64 = 1e-6;

pub enum CliError {
    Usage(String),
    Disagreement(String),
    GateFailure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Disagreement(_) => 2,
            CliError::GateFailure(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Disagreement(m) | CliError::GateFailure(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "probsum",
    version,
    about = "Summation formulas for integer-valued random variables: factorial moments, \
             tail bounds, identities, walk fluctuation statistics, stopped sums"
)]
struct Cli {
    /// Relative series tolerance (default 1e-12).
    #[arg(long, global = true)]
    rel_tol: Option<f64>,

    /// Absolute series tolerance floor (default 1e-15).
    #[arg(long, global = true)]
    abs_tol: Option<f64>,

    /// Term cap for series evaluation (default 10000000).
    #[arg(long, global = true)]
    max_terms: Option<u64>,

    /// Seed for every stochastic component (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output format.
    #[arg(long, global = true, value_enum)]
    output: Option<OutputFormat>,

    /// Worker threads for Monte Carlo commands (0 = auto).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Defaults that may be supplied by the JSON config file named in
/// `PROBSUM_CONFIG`. Flags override the file; the file overrides built-ins.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_terms: Option<u64>,
    seed: Option<u64>,
    output: Option<OutputFormat>,
    threads: Option<usize>,
}

struct Global {
    policy: SeriesPolicy,
    seed: u64,
    format: OutputFormat,
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Factorial moments by direct, survival-weighted and PGF routes.
    Moments {
        /// Distribution descriptor: inline JSON or a file path.
        #[arg(long)]
        dist: String,
        /// Moment orders, e.g. 1,2,3.
        #[arg(long, value_delimiter = ',', required = true)]
        orders: Vec<u32>,
    },
    /// The factorial-moment bound on P(X >= x), optimized over order.
    Bound {
        #[arg(long)]
        dist: String,
        /// Thresholds x, e.g. 5 or 0.5,1,1.5.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Exact-identity checks.
    Identity {
        #[command(subcommand)]
        which: IdentityCommand,
    },
    /// Random-walk positivity/argmax statistics and the equidistribution
    /// check.
    Walk {
        /// Step distribution descriptor: inline JSON or a file path.
        #[arg(long)]
        step: String,
        #[arg(long, default_value_t = 200)]
        horizon: u32,
        #[arg(long, default_value_t = 1_000_000)]
        replicates: u64,
        /// Weighted-sum orders.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        orders: Vec<u32>,
        /// Convergence gate on the positivity probability at the horizon.
        #[arg(long, default_value_t = walks::DEFAULT_CONVERGENCE_GATE)]
        gate: f64,
        /// Required to run a step with no negative support point.
        #[arg(long)]
        drift_note: Option<String>,
    },
    /// Stopped-sum expectation by two series routes plus Monte Carlo.
    Stopped {
        /// Registry model name or inline JSON descriptor.
        #[arg(long)]
        model: String,
        /// Stopping rule descriptor: inline JSON or a file path.
        #[arg(long)]
        rule: String,
        #[arg(long, default_value_t = 100_000)]
        replicates: u64,
    },
    /// Runs the whole verification battery and prints one line per check.
    Selftest {
        /// Monte Carlo replicates for the walk and stopped-sum checks.
        #[arg(long, default_value_t = 1_000_000)]
        replicates: u64,
    },
}

#[derive(Subcommand)]
enum IdentityCommand {
    /// Complement identity for independent X, Y plus P(X <= Y).
    Leq {
        #[arg(long)]
        dist_x: String,
        #[arg(long)]
        dist_y: String,
    },
    /// Abel summation identity at a point z in [0, 1).
    Abel {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        z: f64,
    },
    /// Two-sequence rearrangement identity on a named sequence pair.
    Twoseq {
        /// One of: geometric-demo, stopped-instance.
        #[arg(long)]
        pair: String,
    },
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Err(e) => {
            // --help/--version are not usage errors.
            if e.use_stderr() {
                eprintln!("{e}");
                ExitCode::from(1)
            } else {
                print!("{e}");
                ExitCode::SUCCESS
            }
        }
        Ok(cli) => match dispatch(cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("error: {}", err.message());
                ExitCode::from(err.code())
            }
        },
    }
}

fn load_config_file() -> Result<ConfigFile, CliError> {
    match std::env::var_os("PROBSUM_CONFIG") {
        None => Ok(ConfigFile::default()),
        Some(path) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| usage(format!("cannot read PROBSUM_CONFIG {path:?}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("bad config file {path:?}: {e}")))
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = load_config_file()?;
    let defaults = SeriesPolicy::default();
    let policy = SeriesPolicy {
        rel_tol: cli.rel_tol.or(file.rel_tol).unwrap_or(defaults.rel_tol),
        abs_tol: cli.abs_tol.or(file.abs_tol).unwrap_or(defaults.abs_tol),
        max_terms: cli
            .max_terms
            .or(file.max_terms)
            .unwrap_or(defaults.max_terms),
        tail_mode: defaults.tail_mode,
    };
    policy.validate().map_err(usage)?;

    let global = Global {
        policy,
        seed: cli.seed.or(file.seed).unwrap_or(0),
        format: cli.output.or(file.output).unwrap_or(OutputFormat::Json),
        out: cli.out,
    };

    if let Some(threads) = cli.threads.or(file.threads) {
        if threads > 0 {
            // A later identical call (tests in-process) is fine to ignore.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }

    let (report, failure) = match cli.command {
        Command::Moments { dist, orders } => cmd_moments(&global, &dist, &orders)?,
        Command::Bound { dist, x } => cmd_bound(&global, &dist, &x)?,
        Command::Identity { which } => cmd_identity(&global, which)?,
        Command::Walk {
            step,
            horizon,
            replicates,
            orders,
            gate,
            drift_note,
        } => cmd_walk(
            &global, &step, horizon, replicates, &orders, gate, drift_note,
        )?,
        Command::Stopped {
            model,
            rule,
            replicates,
        } => cmd_stopped(&global, &model, &rule, replicates)?,
        Command::Selftest { replicates } => {
            let report = selftest::run(&global.policy, global.seed, replicates)?;
            let failure = match &report {
                CommandOutput::Selftest(r) if !r.all_pass => Some(CliError::Disagreement(
                    "one or more selftest checks failed".into(),
                )),
                _ => None,
            };
            (report, failure)
        }
    };

    // The report is written even when a numerical check failed; only the
    // exit code carries the verdict then.
    output::emit(&report, global.format, global.out.as_deref())?;
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

/// Inline JSON (starts with '{') or the contents of a file at that path.
fn read_spec_arg(arg: &str) -> Result<String, CliError> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg)
            .map_err(|e| usage(format!("cannot read descriptor file {arg}: {e}")))
    }
}

fn parse_distribution(arg: &str) -> Result<(Distribution, Option<f64>), CliError> {
    let json = read_spec_arg(arg)?;
    Distribution::from_descriptor(&json).map_err(usage)
}

type CommandResult = Result<(CommandOutput, Option<CliError>), CliError>;

fn cmd_moments(global: &Global, dist: &str, orders: &[u32]) -> CommandResult {
    if orders.contains(&0) {
        return Err(usage("orders must be >= 1"));
    }
    let (d, renormalization) = parse_distribution(dist)?;
    let reports: Vec<_> = orders
        .iter()
        .map(|&order| moments::moment_report(&d, order, &global.policy))
        .collect();

    let worst = reports
        .iter()
        .map(|r| r.max_rel_diff)
        .fold(0.0f64, f64::max);
    let disagreement = (worst > DISAGREEMENT_TOL)
        .then(|| format!("route disagreement {worst:.3e} exceeds {DISAGREEMENT_TOL:.0e}"));
    let failure = disagreement.clone().map(CliError::Disagreement);

    Ok((
        CommandOutput::Moments {
            renormalization,
            reports,
            disagreement,
        },
        failure,
    ))
}

fn cmd_bound(global: &Global, dist: &str, xs: &[f64]) -> CommandResult {
    if xs.iter().any(|&x| x.is_nan() || x <= 0.0) {
        return Err(usage("every x must be positive"));
    }
    let (d, renormalization) = parse_distribution(dist)?;
    let results = bounds::bound_profile(&d, xs, &global.policy);
    let entries: Vec<output::BoundEntry> = xs
        .iter()
        .zip(results)
        .map(|(&x, res)| match res {
            Ok(r) => output::BoundEntry::Ok(Box::new(r)),
            Err(e) => output::BoundEntry::Failed {
                x,
                error: e.to_string(),
            },
        })
        .collect();
    Ok((
        CommandOutput::Bound {
            renormalization,
            results: entries,
        },
        None,
    ))
}

fn cmd_identity(global: &Global, which: IdentityCommand) -> CommandResult {
    let (kind, report) = match which {
        IdentityCommand::Leq { dist_x, dist_y } => {
            let (dx, _) = parse_distribution(&dist_x)?;
            let (dy, _) = parse_distribution(&dist_y)?;
            let report = identities::check_leq_identity(&dx, &dy, &global.policy).map_err(usage)?;
            ("leq", report)
        }
        IdentityCommand::Abel { dist, z } => {
            let (d, _) = parse_distribution(&dist)?;
            let report = identities::check_abel_identity(&d, z, &global.policy).map_err(usage)?;
            ("abel", report)
        }
        IdentityCommand::Twoseq { pair } => {
            let sp = SequencePair::named(&pair).ok_or_else(|| {
                usage(format!(
                    "unknown sequence pair '{pair}' (shipped: {})",
                    SequencePair::NAMES.join(", ")
                ))
            })?;
            let report =
                identities::check_two_sequence_identity(&sp, &global.policy).map_err(usage)?;
            ("twoseq", report)
        }
    };
    Ok((
        CommandOutput::Identity {
            kind: kind.to_string(),
            report,
        },
        None,
    ))
}

fn cmd_walk(
    global: &Global,
    step: &str,
    horizon: u32,
    replicates: u64,
    orders: &[u32],
    gate: f64,
    drift_note: Option<String>,
) -> CommandResult {
    let (dist, _) = parse_distribution(step)?;
    let step = match drift_note {
        Some(note) => StepDistribution::with_drift_note(dist, &note),
        None => StepDistribution::new(dist),
    }
    .map_err(usage)?;

    let cfg = WalkConfig {
        step,
        horizon,
        replicates,
        seed: global.seed,
        orders: orders.to_vec(),
    };
    let stats = walks::simulate_walk(&cfg).map_err(usage)?;
    let equidistribution = walks::equidistribution_from_stats(&stats, gate)
        .map_err(|e| CliError::GateFailure(e.to_string()))?;

    let failure = (!equidistribution.all_pass).then(|| {
        let detail = equidistribution
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                format!(
                    "order {}: |diff| = {:.4e} > 3*SE = {:.4e}",
                    c.order,
                    c.abs_diff,
                    3.0 * c.combined_std_error
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        CliError::Disagreement(format!(
            "weighted sums of the positivity count and argmax index disagree: {detail}"
        ))
    });

    Ok((
        CommandOutput::Walk {
            stats,
            equidistribution,
        },
        failure,
    ))
}

fn cmd_stopped(global: &Global, model: &str, rule: &str, replicates: u64) -> CommandResult {
    if replicates == 0 {
        return Err(usage("replicates must be >= 1"));
    }
    let model = TriangularModel::parse(model).map_err(usage)?;
    let rule_json = read_spec_arg(rule)?;
    let rule = StoppingRule::parse(&rule_json).map_err(usage)?;
    let report = stopped::stopped_report(&model, &rule, &global.policy, replicates, global.seed);
    let failure =
        (!report.errors.is_empty()).then(|| CliError::Disagreement(report.errors.join("; ")));
    Ok((CommandOutput::Stopped(Box::new(report)), failure))
}
