//! Fairness criteria on count tables.
//!
//! Two families of quantities live here. Per-stratum decision rates compare
//! how groups are treated within each principal stratum; their pairwise gaps
//! measure departures from principal fairness and need stratum-level counts,
//! so they apply to simulated or worked-example populations. The three
//! statistical criteria need only the observed view:
//!
//! - overall parity: Pr(decision | group) equal across groups,
//! - calibration: Pr(outcome | decision, group) equal across groups within
//!   each decision arm,
//! - accuracy: Pr(decision | outcome, group) equal across groups within each
//!   realized-outcome arm.
//!
//! Every disparity is the maximum absolute pairwise difference across groups.
//! Cells whose conditioning event has zero count are excluded from maxima and
//! flagged instead; a group with zero total count is an error.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Error;
use crate::stratum::PrincipalStratum;
use crate::table::{ObservedTable, PotentialOutcomeTable};

/// Joint decision-outcome mass for one group: `mass[decision][outcome]`.
/// Entries may be counts or probabilities; only ratios are used.
pub type JointMass = [[f64; 2]; 2];

/// Share of units receiving the decision within each (group, stratum) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumDecisionRates {
    /// `by_group[group][stratum.index()]`; `None` when the stratum is empty
    /// for the group.
    pub by_group: BTreeMap<String, [Option<f64>; 4]>,
}

/// Decision rates within each principal stratum, per group.
pub fn principal_rates(table: &PotentialOutcomeTable) -> StratumDecisionRates {
    let mut by_group = BTreeMap::new();
    for group in table.groups() {
        let mut rates = [None; 4];
        for stratum in PrincipalStratum::ALL {
            let total = table.stratum_total(group, stratum);
            if total > 0 {
                let taken = table.count(group, stratum, true);
                rates[stratum.index()] = Some(taken as f64 / total as f64);
            }
        }
        by_group.insert(group.to_owned(), rates);
    }
    StratumDecisionRates { by_group }
}

/// Departure from principal fairness: per-stratum maxima of pairwise
/// decision-rate gaps across groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfDisparity {
    /// Max absolute pairwise gap per stratum (0 when fewer than two groups
    /// have the stratum populated), indexed canonically.
    pub per_stratum: [f64; 4],
    /// Largest entry of `per_stratum`.
    pub max: f64,
    /// (group, stratum) cells that were empty and therefore skipped.
    pub undefined: Vec<(String, PrincipalStratum)>,
}

/// Maximum pairwise decision-rate gap within each stratum.
pub fn pf_disparity(rates: &StratumDecisionRates) -> PfDisparity {
    let mut per_stratum = [0.0f64; 4];
    let mut undefined = Vec::new();
    for stratum in PrincipalStratum::ALL {
        let defined: Vec<f64> = rates
            .by_group
            .iter()
            .filter_map(|(group, r)| {
                let v = r[stratum.index()];
                if v.is_none() {
                    undefined.push((group.clone(), stratum));
                }
                v
            })
            .collect();
        per_stratum[stratum.index()] = max_pairwise_gap(&defined);
    }
    let max = per_stratum.iter().cloned().fold(0.0, f64::max);
    PfDisparity {
        per_stratum,
        max,
        undefined,
    }
}

/// Overall decision-rate parity across groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallParity {
    /// Pr(decision | group).
    pub rate_by_group: BTreeMap<String, f64>,
    /// Max absolute pairwise gap.
    pub disparity: f64,
}

/// A criterion evaluated within two conditioning arms (decision arms for
/// calibration, outcome arms for accuracy).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalCriterion {
    /// `value_by_group[group][arm]`; `None` when the group has no unit in the
    /// conditioning arm.
    pub value_by_group: BTreeMap<String, [Option<f64>; 2]>,
    /// Max absolute pairwise gap per arm, over groups where defined.
    pub disparity_by_arm: [f64; 2],
    /// Largest entry of `disparity_by_arm`.
    pub max_disparity: f64,
    /// (group, arm) cells with an empty conditioning event.
    pub undefined: Vec<(String, bool)>,
}

/// All three criteria at a pass/fail tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityReport {
    pub epsilon: f64,
    pub overall: OverallParity,
    pub overall_pass: bool,
    pub calibration: ConditionalCriterion,
    pub calibration_pass: bool,
    pub accuracy: ConditionalCriterion,
    pub accuracy_pass: bool,
    pub all_pass: bool,
}

/// Pr(decision | group) with its max pairwise gap.
pub fn overall_parity(table: &ObservedTable) -> Result<OverallParity, Error> {
    overall_parity_from_joint(&joint_of(table))
}

/// Pr(outcome | decision, group) per decision arm, with per-arm gaps.
pub fn calibration(table: &ObservedTable) -> Result<ConditionalCriterion, Error> {
    calibration_from_joint(&joint_of(table))
}

/// Pr(decision | outcome, group) per outcome arm, with per-arm gaps.
pub fn accuracy(table: &ObservedTable) -> Result<ConditionalCriterion, Error> {
    accuracy_from_joint(&joint_of(table))
}

/// Evaluate all three criteria at tolerance `epsilon` (a disparity passes
/// when it does not exceed `epsilon`).
pub fn evaluate_all(table: &ObservedTable, epsilon: f64) -> Result<DisparityReport, Error> {
    criteria_from_joint(&joint_of(table), epsilon)
}

/// Evaluate the criteria on per-group joint masses instead of count tables.
/// Masses need not be normalized; only within-group ratios matter. This is
/// the entry point for distribution-level checks.
pub fn criteria_from_joint(
    joint: &BTreeMap<String, JointMass>,
    epsilon: f64,
) -> Result<DisparityReport, Error> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be a nonnegative finite number, got {epsilon}"
        )));
    }
    let overall = overall_parity_from_joint(joint)?;
    let calibration = calibration_from_joint(joint)?;
    let accuracy = accuracy_from_joint(joint)?;
    let overall_pass = overall.disparity <= epsilon;
    let calibration_pass = calibration.max_disparity <= epsilon;
    let accuracy_pass = accuracy.max_disparity <= epsilon;
    Ok(DisparityReport {
        epsilon,
        overall_pass,
        calibration_pass,
        accuracy_pass,
        all_pass: overall_pass && calibration_pass && accuracy_pass,
        overall,
        calibration,
        accuracy,
    })
}

fn joint_of(table: &ObservedTable) -> BTreeMap<String, JointMass> {
    table
        .groups()
        .map(|g| {
            let mut mass = [[0.0; 2]; 2];
            for decision in [false, true] {
                for outcome in [false, true] {
                    mass[decision as usize][outcome as usize] =
                        table.count(g, decision, outcome) as f64;
                }
            }
            (g.to_owned(), mass)
        })
        .collect()
}

fn group_total(mass: &JointMass) -> f64 {
    mass[0][0] + mass[0][1] + mass[1][0] + mass[1][1]
}

fn overall_parity_from_joint(joint: &BTreeMap<String, JointMass>) -> Result<OverallParity, Error> {
    let mut rate_by_group = BTreeMap::new();
    for (group, mass) in joint {
        let total = group_total(mass);
        if total <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "group \"{group}\" has zero total mass"
            )));
        }
        rate_by_group.insert(group.clone(), (mass[1][0] + mass[1][1]) / total);
    }
    let values: Vec<f64> = rate_by_group.values().cloned().collect();
    Ok(OverallParity {
        disparity: max_pairwise_gap(&values),
        rate_by_group,
    })
}

fn calibration_from_joint(
    joint: &BTreeMap<String, JointMass>,
) -> Result<ConditionalCriterion, Error> {
    // Arm = decision; value = Pr(outcome = 1 | decision = arm, group).
    conditional_criterion(joint, |mass, arm| {
        let d = arm as usize;
        ratio(mass[d][1], mass[d][0] + mass[d][1])
    })
}

fn accuracy_from_joint(joint: &BTreeMap<String, JointMass>) -> Result<ConditionalCriterion, Error> {
    // Arm = realized outcome; value = Pr(decision = 1 | outcome = arm, group).
    conditional_criterion(joint, |mass, arm| {
        let y = arm as usize;
        ratio(mass[1][y], mass[0][y] + mass[1][y])
    })
}

fn conditional_criterion(
    joint: &BTreeMap<String, JointMass>,
    value: impl Fn(&JointMass, bool) -> Option<f64>,
) -> Result<ConditionalCriterion, Error> {
    let mut value_by_group: BTreeMap<String, [Option<f64>; 2]> = BTreeMap::new();
    let mut undefined = Vec::new();
    for (group, mass) in joint {
        if group_total(mass) <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "group \"{group}\" has zero total mass"
            )));
        }
        let mut vals = [None; 2];
        for arm in [false, true] {
            vals[arm as usize] = value(mass, arm);
            if vals[arm as usize].is_none() {
                undefined.push((group.clone(), arm));
            }
        }
        value_by_group.insert(group.clone(), vals);
    }
    let mut disparity_by_arm = [0.0f64; 2];
    for arm in 0..2 {
        let defined: Vec<f64> = value_by_group.values().filter_map(|v| v[arm]).collect();
        disparity_by_arm[arm] = max_pairwise_gap(&defined);
    }
    Ok(ConditionalCriterion {
        max_disparity: disparity_by_arm[0].max(disparity_by_arm[1]),
        value_by_group,
        disparity_by_arm,
        undefined,
    })
}

fn ratio(numerator: f64, denominator: f64) -> Option<f64> {
    (denominator > 0.0).then(|| numerator / denominator)
}

/// Max absolute pairwise difference; 0 for fewer than two values. Equals
/// max - min, computed that way to stay O(n).
fn max_pairwise_gap(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}
