//! Property-based invariants of the table algebra, the criteria, and the
//! plug-in identification, plus seeded concentration checks for the sampler.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pfaudit::identify::{Mode, Tolerances};
use pfaudit::metrics::{self, JointMass};
use pfaudit::simulate;
use pfaudit::stratum::PrincipalStratum;
use pfaudit::table::{ObservedTable, PotentialOutcomeTable};

const STRATA: [PrincipalStratum; 4] = PrincipalStratum::ALL;

/// A small arbitrary population table: 2–3 groups, arbitrary counts per
/// (group, stratum, decision).
fn table_strategy() -> impl Strategy<Value = PotentialOutcomeTable> {
    (2usize..=3, prop::collection::vec(0u64..40, 24)).prop_map(|(ngroups, counts)| {
        let mut table = PotentialOutcomeTable::new();
        for g in 0..ngroups {
            let group = format!("g{g}");
            for (si, stratum) in STRATA.into_iter().enumerate() {
                for (di, decision) in [false, true].into_iter().enumerate() {
                    table.add(&group, stratum, decision, counts[g * 8 + si * 2 + di]);
                }
            }
        }
        table
    })
}

/// Shared per-stratum decision shape scaled by a per-group multiplier: the
/// premise side of the table-level fairness implication, exact in integers.
fn fair_table_strategy() -> impl Strategy<Value = PotentialOutcomeTable> {
    let shape = prop::collection::vec((0u64..30, 0u64..30), 4)
        .prop_filter("at least one unit per stratum", |shape| {
            shape.iter().all(|(d, r)| d + r > 0)
        });
    (2usize..=4, shape, prop::collection::vec(1u64..6, 4)).prop_map(
        |(ngroups, shape, multipliers)| {
            let mut table = PotentialOutcomeTable::new();
            for g in 0..ngroups {
                let group = format!("g{g}");
                let k = multipliers[g % multipliers.len()];
                for (si, stratum) in STRATA.into_iter().enumerate() {
                    let (detained, released) = shape[si];
                    table.add(&group, stratum, true, k * detained);
                    table.add(&group, stratum, false, k * released);
                }
            }
            table
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Collapsing potential outcomes to observed data loses no mass and
    /// lands every unit in the cell its stratum dictates.
    #[test]
    fn marginalize_conserves_mass_and_realizes_outcomes(table in table_strategy()) {
        let observed = table.marginalize();
        prop_assert_eq!(observed.total(), table.total());
        for group in table.groups() {
            prop_assert_eq!(observed.group_total(group), table.group_total(group));
            for decision in [false, true] {
                for outcome in [false, true] {
                    let want: u64 = STRATA
                        .into_iter()
                        .filter(|s| s.realized_outcome(decision) == outcome)
                        .map(|s| table.count(group, s, decision))
                        .sum();
                    prop_assert_eq!(observed.count(group, decision, outcome), want);
                }
            }
        }
    }

    /// Scaling every count by the same factor changes no rate, disparity, or
    /// verdict: the criteria depend on proportions only.
    #[test]
    fn criteria_are_scale_invariant(table in table_strategy(), k in 2u64..6) {
        let mut scaled = PotentialOutcomeTable::new();
        for group in table.groups() {
            for stratum in STRATA {
                for decision in [false, true] {
                    scaled.add(group, stratum, decision, k * table.count(group, stratum, decision));
                }
            }
        }
        let base_rates = metrics::principal_rates(&table);
        let scaled_rates = metrics::principal_rates(&scaled);
        prop_assert_eq!(&base_rates.by_group, &scaled_rates.by_group);

        let base = metrics::evaluate_all(&table.marginalize(), 0.05);
        let scaled = metrics::evaluate_all(&scaled.marginalize(), 0.05);
        match (base, scaled) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.overall.disparity, b.overall.disparity);
                prop_assert_eq!(a.calibration.max_disparity, b.calibration.max_disparity);
                prop_assert_eq!(a.accuracy.max_disparity, b.accuracy.max_disparity);
                prop_assert_eq!(a.all_pass, b.all_pass);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "scaling changed feasibility: {a:?} vs {b:?}"),
        }
    }

    /// Renaming groups permutes report keys and nothing else.
    #[test]
    fn criteria_are_equivariant_under_group_relabeling(table in table_strategy()) {
        let relabel = |g: &str| format!("relabeled-{g}");
        let mut renamed = PotentialOutcomeTable::new();
        for group in table.groups() {
            for stratum in STRATA {
                for decision in [false, true] {
                    renamed.add(&relabel(group), stratum, decision, table.count(group, stratum, decision));
                }
            }
        }
        let base = metrics::evaluate_all(&table.marginalize(), 0.05);
        let mapped = metrics::evaluate_all(&renamed.marginalize(), 0.05);
        match (base, mapped) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.overall.disparity, b.overall.disparity);
                prop_assert_eq!(a.calibration.max_disparity, b.calibration.max_disparity);
                prop_assert_eq!(a.accuracy.max_disparity, b.accuracy.max_disparity);
                for (group, rate) in &a.overall.rate_by_group {
                    prop_assert_eq!(b.overall.rate_by_group[&relabel(group)], *rate);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "relabeling changed feasibility: {a:?} vs {b:?}"),
        }
    }

    /// Equal within-stratum treatment plus equal composition forces all
    /// three observed criteria to zero disparity — the table-level form of
    /// the within-cell implication.
    #[test]
    fn fair_composition_implies_zero_observed_disparity(table in fair_table_strategy()) {
        let rates = metrics::principal_rates(&table);
        let pf = metrics::pf_disparity(&rates);
        prop_assert!(pf.max <= 1e-12, "construction is principally fair, got {}", pf.max);

        let report = metrics::evaluate_all(&table.marginalize(), 1e-12)
            .expect("every stratum is populated");
        prop_assert!(report.overall.disparity <= 1e-12, "overall {}", report.overall.disparity);
        prop_assert!(
            report.calibration.max_disparity <= 1e-12,
            "calibration {}",
            report.calibration.max_disparity
        );
        prop_assert!(
            report.accuracy.max_disparity <= 1e-12,
            "accuracy {}",
            report.accuracy.max_disparity
        );
        prop_assert!(report.all_pass);
    }

    /// The two criteria entry points — integer tables and probability mass —
    /// agree on the same population.
    #[test]
    fn joint_mass_criteria_match_table_criteria(table in table_strategy()) {
        let observed = table.marginalize();
        if table.groups().any(|g| observed.group_total(g) == 0) {
            return Ok(());
        }
        let mut joint: BTreeMap<String, JointMass> = BTreeMap::new();
        for group in table.groups() {
            let total = observed.group_total(group) as f64;
            let mut mass: JointMass = [[0.0; 2]; 2];
            for (d, decision) in [false, true].into_iter().enumerate() {
                for (y, outcome) in [false, true].into_iter().enumerate() {
                    mass[d][y] = observed.count(group, decision, outcome) as f64 / total;
                }
            }
            joint.insert(group.to_owned(), mass);
        }
        let from_table = metrics::evaluate_all(&observed, 0.05).expect("groups nonempty");
        let from_mass = metrics::criteria_from_joint(&joint, 0.05).expect("groups nonempty");
        prop_assert!((from_table.overall.disparity - from_mass.overall.disparity).abs() <= 1e-12);
        prop_assert!(
            (from_table.calibration.max_disparity - from_mass.calibration.max_disparity).abs() <= 1e-12
        );
        prop_assert!(
            (from_table.accuracy.max_disparity - from_mass.accuracy.max_disparity).abs() <= 1e-12
        );
        prop_assert_eq!(from_table.all_pass, from_mass.all_pass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// On exact monotone populations the plug-in stratum shares form a
    /// probability vector and the rates stay inside [0, 1].
    #[test]
    fn plugin_shares_are_a_probability_vector_on_monotone_populations(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = simulate::random_spec_for_identification(&mut rng);
        let oracle = simulate::exact_distribution(&spec).expect("valid spec");
        for mode in [Mode::Marginal, Mode::ConditionalOnW] {
            let est = simulate::plugin_estimates(&oracle, mode, &Tolerances::default());
            prop_assert!(!est.cells.is_empty());
            for cell in &est.cells {
                let probs = cell.stratum_probs.expect("identified exactly");
                let sum = probs.safe + probs.preventable + probs.dangerous;
                prop_assert!((sum - 1.0).abs() <= 1e-12, "{}: shares sum to {sum}", cell.key());
                prop_assert!(probs.safe >= -1e-12 && probs.preventable >= -1e-12 && probs.dangerous >= -1e-12);
                for rate in [&cell.rate_safe, &cell.rate_preventable, &cell.rate_dangerous] {
                    let rate = rate.as_ref().expect("positive mass everywhere by construction");
                    prop_assert!(rate.raw >= -1e-9 && rate.raw <= 1.0 + 1e-9, "raw {}", rate.raw);
                    prop_assert!((0.0..=1.0).contains(&rate.clipped));
                }
            }
        }
    }
}

/// Empirical stratum shares concentrate around the population shares at the
/// Hoeffding rate; with the bound at 3·sqrt(ln n / n) a failure probability
/// is about n^-18 per cell, so this is deterministic in practice.
#[test]
fn sampled_stratum_shares_concentrate() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let spec = simulate::random_spec_for_identification(&mut rng);
    let oracle = simulate::exact_distribution(&spec).expect("valid spec");
    for seed in 0..5u64 {
        let n = 20_000usize;
        let ds = simulate::sample(&spec, n, seed, true).expect("sampling succeeds");
        let mut group_sizes: BTreeMap<&str, usize> = BTreeMap::new();
        let mut stratum_counts: BTreeMap<(&str, PrincipalStratum), usize> = BTreeMap::new();
        for record in &ds.records {
            *group_sizes.entry(record.group.as_str()).or_default() += 1;
            let stratum = record.stratum.expect("latent draw requested");
            *stratum_counts
                .entry((record.group.as_str(), stratum))
                .or_default() += 1;
        }
        for (&group, &size) in &group_sizes {
            let bound = 3.0 * ((size as f64).ln() / size as f64).sqrt();
            for stratum in STRATA {
                let observed =
                    *stratum_counts.get(&(group, stratum)).unwrap_or(&0) as f64 / size as f64;
                let expected = oracle
                    .stratum_share(group, stratum, None)
                    .expect("group has mass");
                assert!(
                    (observed - expected).abs() <= bound,
                    "seed {seed}, {group}/{}: |{observed} - {expected}| > {bound}",
                    stratum.name()
                );
            }
        }
    }
}

/// Potential-outcome pairs and strata are in bijection.
#[test]
fn stratum_bijection_is_total() {
    for y1 in [false, true] {
        for y0 in [false, true] {
            let stratum = PrincipalStratum::from_potentials(y1, y0);
            assert_eq!(stratum.realized_outcome(true), y1);
            assert_eq!(stratum.realized_outcome(false), y0);
        }
    }
    for stratum in STRATA {
        let again = PrincipalStratum::from_potentials(
            stratum.realized_outcome(true),
            stratum.realized_outcome(false),
        );
        assert_eq!(again, stratum);
    }
}

/// `ObservedTable` built from unit iterators equals the one built by
/// marginalizing the table the units came from.
#[test]
fn observed_from_units_matches_marginalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = simulate::random_spec_for_identification(&mut rng);
    let ds = simulate::sample(&spec, 3_000, 21, true).expect("sampling succeeds");

    let by_units = ObservedTable::from_units(
        ds.records
            .iter()
            .map(|r| (r.group.as_str(), r.decision, r.outcome)),
    );
    let potential = ds.potential_table().expect("latent strata present");
    // Realized outcomes in the records must match what the stratum dictates
    // under the recorded decision, so the two constructions agree.
    let marginalized = potential.marginalize();
    assert_eq!(by_units.total(), marginalized.total());
    for group in potential.groups() {
        for decision in [false, true] {
            for outcome in [false, true] {
                assert_eq!(
                    by_units.count(group, decision, outcome),
                    marginalized.count(group, decision, outcome),
                );
            }
        }
    }
}
