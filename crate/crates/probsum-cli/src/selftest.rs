//! The verification battery behind `probsum selftest`: every check the
//! test suite enforces, as an executable pass/fail table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use probsum::bounds;
use probsum::dist::Distribution;
use probsum::identities::{self, SequencePair};
use probsum::moments;
use probsum::stopped::{self, StoppingRule, TriangularModel};
use probsum::walks::{self, StepDistribution, WalkConfig, WalkError};
use probsum::SeriesPolicy;

use crate::output::CommandOutput;
use crate::CliError;

#[derive(Debug, serde::Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, serde::Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub replicates: u64,
    pub checks: Vec<SelftestCheck>,
    pub all_pass: bool,
}

fn named_families() -> Vec<Distribution> {
    vec![
        Distribution::bernoulli(0.5).unwrap(),
        Distribution::binomial(10, 0.3).unwrap(),
        Distribution::geometric(0.5).unwrap(),
        Distribution::poisson(1.0).unwrap(),
        Distribution::poisson(2.0).unwrap(),
        Distribution::negative_binomial(2.0, 0.5).unwrap(),
    ]
}

fn random_table(rng: &mut ChaCha8Rng) -> Distribution {
    let len = rng.gen_range(2..=8);
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Distribution::table(0, raw.iter().map(|w| w / total).collect()).unwrap()
}

fn check_moment_routes(policy: &SeriesPolicy, seed: u64) -> SelftestCheck {
    let mut dists = named_families();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f);
    for _ in 0..20 {
        dists.push(random_table(&mut rng));
    }

    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for d in &dists {
        for order in 1..=6u32 {
            let rep = moments::moment_report(d, order, policy);
            worst = worst.max(rep.max_rel_diff);
            if rep.max_rel_diff > 1e-8 || !rep.route_errors.is_empty() {
                failures.push(format!("{d:?} N={order}"));
            }
        }
    }

    // Closed-form oracles: Poisson moments are powers of the rate and
    // geometric moments are N!(q/p)^N.
    for (lambda, order) in [(1.0f64, 3u32), (2.0, 4)] {
        let d = Distribution::poisson(lambda).unwrap();
        let got = moments::factorial_moment_direct(&d, order, policy)
            .unwrap()
            .value;
        if moments::rel_diff(got, lambda.powi(order as i32)) > 1e-8 {
            failures.push(format!("poisson({lambda}) oracle N={order}"));
        }
    }
    let geo = Distribution::geometric(0.5).unwrap();
    for order in 1..=4u32 {
        let got = moments::factorial_moment_direct(&geo, order, policy)
            .unwrap()
            .value;
        let oracle = (1..=order).map(f64::from).product::<f64>();
        if moments::rel_diff(got, oracle) > 1e-8 {
            failures.push(format!("geometric oracle N={order}"));
        }
    }

    SelftestCheck {
        name: "factorial-moment-routes".into(),
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "{} distributions x 6 orders, worst rel diff {worst:.2e}",
                dists.len()
            )
        } else {
            format!("failed: {}", failures.join(", "))
        },
    }
}

fn check_bound_validity(policy: &SeriesPolicy, seed: u64) -> SelftestCheck {
    let mut dists = named_families();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x626f);
    for _ in 0..20 {
        dists.push(random_table(&mut rng));
    }

    let mut cases = 0u32;
    let mut failures = Vec::new();
    for d in &dists {
        for step in 1..=30u32 {
            let x = f64::from(step) * 0.5;
            cases += 1;
            match bounds::tail_bound(d, x, policy) {
                Ok(r) => {
                    let truth = d.survival((x.ceil() as i64) - 1);
                    if truth > r.bound + 1e-10 {
                        failures.push(format!("{d:?} x={x}"));
                    }
                }
                Err(e) => failures.push(format!("{d:?} x={x}: {e}")),
            }
        }
    }

    // Spot value: Poisson(1) at x = 5 optimizes to 1/120 at order 3.
    let poisson = Distribution::poisson(1.0).unwrap();
    let spot = bounds::tail_bound(&poisson, 5.0, policy).unwrap();
    if spot.best_order != 3 || (spot.bound - 1.0 / 120.0).abs() > 1e-9 {
        failures.push(format!(
            "poisson(1) x=5 gave bound {} at N={}",
            spot.bound, spot.best_order
        ));
    }

    SelftestCheck {
        name: "tail-bound-validity".into(),
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{cases} (distribution, x) cases all dominated by the bound")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    }
}

fn check_leq_identity(policy: &SeriesPolicy, seed: u64) -> SelftestCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c65);
    let mut worst = 0.0f64;
    let mut failures = 0u32;
    for _ in 0..50 {
        let dx = random_table(&mut rng);
        let dy = random_table(&mut rng);
        let r = identities::check_leq_identity(&dx, &dy, policy).unwrap();

        let mut brute = 0.0;
        for x in 0..=dx.support_max().unwrap() {
            for y in x..=dy.support_max().unwrap().max(x) {
                brute += dx.pmf(x) * dy.pmf(y);
            }
        }
        let err = r
            .abs_diff
            .max((r.lhs - brute).abs())
            .max((r.interpretation.unwrap() - brute).abs());
        worst = worst.max(err);
        if err >= 1e-10 {
            failures += 1;
        }
    }
    SelftestCheck {
        name: "complement-identity".into(),
        pass: failures == 0,
        detail: format!("50 random independent pairs, worst error {worst:.2e}"),
    }
}

fn check_abel_identity(policy: &SeriesPolicy, seed: u64) -> SelftestCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6162);
    let mut worst = 0.0f64;
    let mut pass = true;
    for _ in 0..20 {
        let d = random_table(&mut rng);
        for z in [0.0, 0.25, 0.5, 0.75, 0.99] {
            let r = identities::check_abel_identity(&d, z, policy).unwrap();
            worst = worst.max(r.abs_diff);
            pass &= r.abs_diff < 1e-10;
        }
    }
    // Against the closed-form PGF of Poisson(1).
    let poisson = Distribution::poisson(1.0).unwrap();
    for z in [0.0, 0.25, 0.5, 0.75, 0.99] {
        let r = identities::check_abel_identity(&poisson, z, policy).unwrap();
        let pgf = (z - 1.0f64).exp();
        let err = r.abs_diff.max((r.lhs - pgf).abs());
        worst = worst.max(err);
        pass &= err < 1e-10;
    }
    SelftestCheck {
        name: "abel-identity".into(),
        pass,
        detail: format!("tables and poisson across z grid, worst error {worst:.2e}"),
    }
}

fn check_two_sequence(policy: &SeriesPolicy) -> SelftestCheck {
    let mut worst = 0.0f64;
    let mut pass = true;
    for name in SequencePair::NAMES {
        let sp = SequencePair::named(name).unwrap();
        let r = identities::check_two_sequence_identity(&sp, policy).unwrap();
        worst = worst.max(r.abs_diff);
        pass &= r.abs_diff < 1e-9;
    }
    SelftestCheck {
        name: "two-sequence-identity".into(),
        pass,
        detail: format!("shipped sequence pairs, worst gap {worst:.2e}"),
    }
}

fn check_walk(policy: &SeriesPolicy, seed: u64, replicates: u64) -> Vec<SelftestCheck> {
    let _ = policy;
    let cfg = WalkConfig {
        step: StepDistribution::plus_minus_one(0.3).unwrap(),
        horizon: 200,
        replicates,
        seed,
        orders: vec![1, 2, 3],
    };
    let equidistribution =
        match walks::check_equidistribution(&cfg, walks::DEFAULT_CONVERGENCE_GATE) {
            Ok(report) => {
                let worst = report
                    .checks
                    .iter()
                    .map(|c| {
                        if c.combined_std_error > 0.0 {
                            c.abs_diff / c.combined_std_error
                        } else {
                            0.0
                        }
                    })
                    .fold(0.0f64, f64::max);
                SelftestCheck {
                    name: "walk-equidistribution".into(),
                    pass: report.all_pass,
                    detail: format!(
                        "drift -0.4 walk, orders 1-3, worst gap {worst:.2} sigma (3 allowed)"
                    ),
                }
            }
            Err(e) => SelftestCheck {
                name: "walk-equidistribution".into(),
                pass: false,
                detail: e.to_string(),
            },
        };

    let zero_drift = WalkConfig {
        step: StepDistribution::plus_minus_one(0.5).unwrap(),
        horizon: 100,
        replicates: 20_000,
        seed,
        orders: vec![1],
    };
    let gate = match walks::check_equidistribution(&zero_drift, walks::DEFAULT_CONVERGENCE_GATE) {
        Err(WalkError::ConvergenceGate { m_horizon, .. }) => SelftestCheck {
            name: "walk-convergence-gate".into(),
            pass: true,
            detail: format!("zero-drift walk rejected with m_horizon {m_horizon:.3}"),
        },
        Err(e) => SelftestCheck {
            name: "walk-convergence-gate".into(),
            pass: false,
            detail: format!("unexpected error: {e}"),
        },
        Ok(_) => SelftestCheck {
            name: "walk-convergence-gate".into(),
            pass: false,
            detail: "zero-drift walk slipped through the gate".into(),
        },
    };

    vec![equidistribution, gate]
}

fn check_stopped(policy: &SeriesPolicy, seed: u64, replicates: u64) -> SelftestCheck {
    let mut failures = Vec::new();

    let wald = TriangularModel::named("wald-iid").unwrap();
    let wald_rule =
        StoppingRule::independent(Distribution::geometric(1.0 / 3.0).unwrap(), 1).unwrap();
    let rep = stopped::stopped_report(&wald, &wald_rule, policy, replicates, seed);
    if (rep.series_weighted.unwrap_or(f64::NAN) - 6.0).abs() > 1e-9
        || (rep.series_rearranged.unwrap_or(f64::NAN) - 6.0).abs() > 1e-9
    {
        failures.push("wald series".to_string());
    }
    if rep.mc_sigma_distance.unwrap_or(f64::INFINITY) > 3.0 {
        failures.push(format!(
            "wald mc {:.6} vs 6 ({:.2} sigma)",
            rep.mc_estimate,
            rep.mc_sigma_distance.unwrap()
        ));
    }

    let perturbed = TriangularModel::named("geometric-perturbed-bernoulli").unwrap();
    let perturbed_rule =
        StoppingRule::independent(Distribution::geometric(0.5).unwrap(), 1).unwrap();
    let rep = stopped::stopped_report(&perturbed, &perturbed_rule, policy, replicates, seed);
    let target = 4.0 / 3.0;
    if (rep.series_weighted.unwrap_or(f64::NAN) - target).abs() > 1e-10
        || (rep.series_rearranged.unwrap_or(f64::NAN) - target).abs() > 1e-10
        || rep.series_abs_diff.unwrap_or(f64::NAN) > 1e-10
    {
        failures.push("perturbed series".to_string());
    }
    if rep.mc_sigma_distance.unwrap_or(f64::INFINITY) > 3.0 {
        failures.push(format!(
            "perturbed mc {:.6} vs {target:.6} ({:.2} sigma)",
            rep.mc_estimate,
            rep.mc_sigma_distance.unwrap()
        ));
    }

    SelftestCheck {
        name: "stopped-sum-agreement".into(),
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "wald and perturbed instances reconcile (series exact, mc within 3 sigma)".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    }
}

pub fn run(policy: &SeriesPolicy, seed: u64, replicates: u64) -> Result<CommandOutput, CliError> {
    if replicates == 0 {
        return Err(CliError::Usage("replicates must be >= 1".into()));
    }
    let mut checks = vec![
        check_moment_routes(policy, seed),
        check_bound_validity(policy, seed),
        check_leq_identity(policy, seed),
        check_abel_identity(policy, seed),
        check_two_sequence(policy),
    ];
    checks.extend(check_walk(policy, seed, replicates));
    checks.push(check_stopped(policy, seed, replicates));

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(CommandOutput::Selftest(SelftestReport {
        seed,
        replicates,
        checks,
        all_pass,
    }))
}
