//! Statistical sanity of the percentile bootstrap: on a well-behaved
//! monotone population the nominal-95% intervals should cover the true
//! rates most of the time. Percentile intervals at small replicate counts
//! under-cover, so the floor asserted here is deliberately loose — the test
//! exists to catch broken resampling (empty intervals, wrong pivots,
//! seed-dependent drift), not to certify calibration.

use pfaudit::identify::{
    self, BootstrapConfig, EstimatorConfig, FrequencyConfig, IntervalResult, Mode,
    StatisticSelector, Tolerances,
};
use pfaudit::simulate::{self, DgpSpec};
use pfaudit::stratum::PrincipalStratum;

fn population() -> DgpSpec {
    let spec = serde_json::json!({
        "groups": {"A": 0.5, "B": 0.5},
        "w_given_group": {
            "A": {"w0": 0.5, "w1": 0.5},
            "B": {"w0": 0.5, "w1": 0.5}
        },
        "x_given_group_w": {
            "A": {"w0": {"x0": 0.6, "x1": 0.4}, "w1": {"x0": 0.3, "x1": 0.7}},
            "B": {"w0": {"x0": 0.6, "x1": 0.4}, "w1": {"x0": 0.3, "x1": 0.7}}
        },
        "strata_given_group_w": {
            "A": {"w0": {"safe": 0.50, "preventable": 0.30, "backlash": 0.0, "dangerous": 0.20},
                  "w1": {"safe": 0.30, "preventable": 0.35, "backlash": 0.0, "dangerous": 0.35}},
            "B": {"w0": {"safe": 0.45, "preventable": 0.35, "backlash": 0.0, "dangerous": 0.20},
                  "w1": {"safe": 0.25, "preventable": 0.40, "backlash": 0.0, "dangerous": 0.35}}
        },
        "decision_model": {"type": "covariate_based", "rates": {"x0": 0.25, "x1": 0.75}},
        "enforce_monotonicity": true
    });
    serde_json::from_value(spec).expect("fixed spec is valid")
}

#[test]
fn bootstrap_intervals_cover_the_true_rates() {
    let spec = population();
    let oracle = simulate::exact_distribution(&spec).expect("valid spec");
    let tolerances = Tolerances::default();
    let estimator = EstimatorConfig::Frequency(FrequencyConfig { alpha: 0.0 });

    let quantities = [
        ("rate_safe", PrincipalStratum::Safe),
        ("rate_preventable", PrincipalStratum::Preventable),
        ("rate_dangerous", PrincipalStratum::Dangerous),
    ];

    let mut covered = 0usize;
    let mut total = 0usize;
    for seed in 0..15u64 {
        let ds = simulate::sample(&spec, 1_500, seed, false).expect("sampling succeeds");
        let reg = identify::fit(&ds, &estimator, true).expect("fit succeeds");
        let (base, _) = identify::identify_rates(&ds, &reg, Mode::Marginal, &tolerances)
            .expect("identification succeeds");
        let summary = identify::bootstrap(
            &ds,
            &estimator,
            true,
            Mode::Marginal,
            &tolerances,
            &base,
            &BootstrapConfig {
                replicates: 24,
                seed: 1_000 + seed,
                level: 0.95,
                selector: StatisticSelector::Rates,
            },
        )
        .expect("bootstrap succeeds");

        for group in oracle.groups() {
            let intervals = &summary.cells[&group];
            for (name, stratum) in quantities {
                let truth = oracle
                    .stratum_rate(Some(&group), stratum, None)
                    .expect("positive mass");
                total += 1;
                match &intervals[name] {
                    IntervalResult::Interval { lower, upper, .. } => {
                        assert!(lower <= upper, "{group}/{name}: inverted interval");
                        if *lower <= truth && truth <= *upper {
                            covered += 1;
                        }
                    }
                    IntervalResult::Unavailable { failures } => {
                        panic!("{group}/{name}: no interval ({failures} failed replicates)")
                    }
                }
            }
        }
    }

    assert_eq!(total, 90, "15 seeds x 2 groups x 3 rates");
    let coverage = covered as f64 / total as f64;
    assert!(
        coverage >= 0.7,
        "nominal-95% intervals covered only {covered}/{total} = {coverage:.2}"
    );
}

#[test]
fn bootstrap_is_reproducible_for_a_fixed_seed() {
    let spec = population();
    let ds = simulate::sample(&spec, 800, 3, false).expect("sampling succeeds");
    let estimator = EstimatorConfig::Frequency(FrequencyConfig { alpha: 0.0 });
    let tolerances = Tolerances::default();
    let reg = identify::fit(&ds, &estimator, true).expect("fit succeeds");
    let (base, _) = identify::identify_rates(&ds, &reg, Mode::Marginal, &tolerances)
        .expect("identification succeeds");
    let cfg = BootstrapConfig {
        replicates: 12,
        seed: 42,
        level: 0.9,
        selector: StatisticSelector::All,
    };
    let run = || {
        identify::bootstrap(
            &ds,
            &estimator,
            true,
            Mode::Marginal,
            &tolerances,
            &base,
            &cfg,
        )
        .expect("bootstrap succeeds")
    };
    let first = run();
    let second = run();
    assert_eq!(
        serde_json::to_string(&first.cells).unwrap(),
        serde_json::to_string(&second.cells).unwrap(),
        "same seed must reproduce identical intervals"
    );
}
