//! A built-in worked example: pretrial detention in a stylized population.
//!
//! The population holds 1000 people split across two groups, with response
//! types chosen so that within every stratum both groups are detained at the
//! same rate (0.8 of the dangerous, 0.5 of the backlash and preventable, 0.2
//! of the safe). Because the groups differ in stratum composition, the
//! observed view of this population still fails the usual group-fairness
//! criteria: equal treatment of comparable people and equal aggregate rates
//! are different demands. The example exercises every table and metric
//! operation and serves as a fixture in tests and the `demo-tables` command.

use crate::dataset::{Dataset, Schema, UnitRecord};
use crate::simulate::{DecisionModel, DgpSpec, StratumDist};
use crate::stratum::PrincipalStratum;
use crate::table::PotentialOutcomeTable;
use std::collections::BTreeMap;

/// Counts by (group, stratum, detained?, count).
const EXAMPLE_COUNTS: [(&str, PrincipalStratum, u64, u64); 8] = [
    // group, stratum, detained, released
    ("A", PrincipalStratum::Safe, 30, 120),
    ("A", PrincipalStratum::Preventable, 70, 70),
    ("A", PrincipalStratum::Backlash, 30, 30),
    ("A", PrincipalStratum::Dangerous, 120, 30),
    ("B", PrincipalStratum::Safe, 40, 160),
    ("B", PrincipalStratum::Preventable, 80, 80),
    ("B", PrincipalStratum::Backlash, 20, 20),
    ("B", PrincipalStratum::Dangerous, 80, 20),
];

/// The example population as a potential-outcome table.
pub fn example_population() -> PotentialOutcomeTable {
    let mut table = PotentialOutcomeTable::new();
    for &(group, stratum, detained, released) in &EXAMPLE_COUNTS {
        table.add(group, stratum, true, detained);
        table.add(group, stratum, false, released);
    }
    table
}

/// The example population as a unit-level dataset: one record per person,
/// with the latent stratum attached. The example has a single covariate
/// cell, so the dataset declares no covariates and no conditioning columns.
pub fn example_dataset() -> Dataset {
    let mut records = Vec::with_capacity(1000);
    for &(group, stratum, detained, released) in &EXAMPLE_COUNTS {
        for (decision, count) in [(true, detained), (false, released)] {
            for _ in 0..count {
                records.push(UnitRecord {
                    decision,
                    outcome: stratum.realized_outcome(decision),
                    group: group.to_owned(),
                    covariates: Vec::new(),
                    stratum: Some(stratum),
                });
            }
        }
    }
    Dataset {
        schema: Schema {
            decision: "decision".to_owned(),
            outcome: "outcome".to_owned(),
            group: "group".to_owned(),
            covariates: Vec::new(),
            covariate_types: Vec::new(),
            condition: Vec::new(),
        },
        records,
        groups: vec!["A".to_owned(), "B".to_owned()],
    }
}

/// The example population as a simulation spec: the uniform distribution over
/// its 1000 units, with one covariate cell so the stratum mix is the only
/// thing that differs between groups.
///
/// Decision probabilities depend on the stratum alone, so principal fairness
/// holds by construction, but the stratum distributions differ across groups.
pub fn example_spec() -> DgpSpec {
    let single = |label: &str| BTreeMap::from([(label.to_owned(), 1.0)]);

    let mut strata = BTreeMap::new();
    strata.insert(
        "A".to_owned(),
        BTreeMap::from([(
            "w0".to_owned(),
            StratumDist {
                safe: 0.30,
                preventable: 0.28,
                backlash: 0.12,
                dangerous: 0.30,
            },
        )]),
    );
    strata.insert(
        "B".to_owned(),
        BTreeMap::from([(
            "w0".to_owned(),
            StratumDist {
                safe: 0.40,
                preventable: 0.32,
                backlash: 0.08,
                dangerous: 0.20,
            },
        )]),
    );

    let rates = BTreeMap::from([(
        "w0".to_owned(),
        BTreeMap::from([
            ("safe".to_owned(), 0.2),
            ("preventable".to_owned(), 0.5),
            ("backlash".to_owned(), 0.5),
            ("dangerous".to_owned(), 0.8),
        ]),
    )]);

    DgpSpec {
        groups: BTreeMap::from([("A".to_owned(), 0.5), ("B".to_owned(), 0.5)]),
        w_given_group: BTreeMap::from([
            ("A".to_owned(), single("w0")),
            ("B".to_owned(), single("w0")),
        ]),
        x_given_group_w: BTreeMap::from([
            (
                "A".to_owned(),
                BTreeMap::from([("w0".to_owned(), single("x0"))]),
            ),
            (
                "B".to_owned(),
                BTreeMap::from([("w0".to_owned(), single("x0"))]),
            ),
        ]),
        strata_given_group_w: strata,
        decision_model: DecisionModel::StratumBased {
            rates: Some(rates),
            rates_by_group: None,
        },
        enforce_assumption1: false,
        enforce_monotonicity: false,
        enforce_pf: true,
    }
}
