//! Synthetic populations with known response types, and exact finite checks
//! of the structural results the auditing pipeline relies on.
//!
//! A [`DgpSpec`] describes a population over (group, W, X, response type,
//! decision): group frequencies, a W cell distribution per group, an X label
//! distribution per (group, W), a response-type composition per (group, W),
//! and a decision model that is either stratum-based (rates per W and
//! response type, optionally per group) or covariate-based (rates per X
//! label). Because every component is a finite categorical distribution, the
//! full joint distribution is a short list of probability atoms — so claims
//! that hold "in expectation" can be checked *exactly*, without sampling
//! error, by [`exact_distribution`] and the three `check_*` functions:
//!
//! - [`check_implication`]: principally fair decisions plus response types
//!   independent of group within W cells imply all three statistical
//!   criteria within every W cell;
//! - [`check_equivalence`]: with group-independent response types and an
//!   empty backlash stratum, principal fairness and the three criteria are
//!   equivalent — each can be read off the other;
//! - [`check_identification`]: with an empty backlash stratum and decisions
//!   driven by covariates alone, the plug-in formulas recover the true
//!   stratum-specific decision rates from observable quantities.
//!
//! Every `enforce_*` flag on a spec is verified against the numbers, never
//! trusted. [`sample`] draws unit-level datasets for end-to-end estimator
//! tests, consuming exactly one uniform draw per categorical choice in a
//! fixed order so that output is a pure function of (spec, n, seed).

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnType, Dataset, Schema, UnitRecord, Value};
use crate::error::{Error, SpecIssue};
use crate::identify::{self, CellEstimates, IdentifiedEstimates, Mode, StratumProbs, Tolerances};
use crate::metrics::{self, DisparityReport, JointMass};
use crate::stratum::PrincipalStratum;

/// Slack allowed when a spec's probabilities must sum to one.
pub const SUM_TOL: f64 = 1e-12;

/// Tolerance for verifying structural premises (shared compositions, empty
/// backlash stratum, shared decision rates) against a spec's numbers.
pub const PREMISE_TOL: f64 = 1e-12;

/// Cap on the number of probability atoms accepted for exact evaluation.
pub const ATOM_CAP: usize = 10_000_000;

/// Distribution over the four response types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumDist {
    pub safe: f64,
    pub preventable: f64,
    pub backlash: f64,
    pub dangerous: f64,
}

impl StratumDist {
    pub fn get(&self, stratum: PrincipalStratum) -> f64 {
        match stratum {
            PrincipalStratum::Safe => self.safe,
            PrincipalStratum::Preventable => self.preventable,
            PrincipalStratum::Backlash => self.backlash,
            PrincipalStratum::Dangerous => self.dangerous,
        }
    }

    fn sum(&self) -> f64 {
        self.safe + self.preventable + self.backlash + self.dangerous
    }
}

/// Decision rates keyed by W label, then response-type name.
pub type StratumRates = BTreeMap<String, BTreeMap<String, f64>>;

/// How decisions are assigned in a synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DecisionModel {
    /// Decision probability depends on the W cell and the response type.
    /// Exactly one of `rates` (shared by all groups) or `rates_by_group`
    /// must be present; both are keyed by W label, then response-type name.
    StratumBased {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rates: Option<StratumRates>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rates_by_group: Option<BTreeMap<String, StratumRates>>,
    },
    /// Decision probability depends only on the X label. Outcomes then
    /// depend on the decision only through the response type, so the
    /// unconfoundedness premise of identification holds by construction.
    CovariateBased { rates: BTreeMap<String, f64> },
}

/// Full description of a synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    /// Group label -> probability; entries must be positive and sum to one.
    pub groups: BTreeMap<String, f64>,
    /// Group -> W label -> probability. All groups must use one W label set.
    pub w_given_group: BTreeMap<String, BTreeMap<String, f64>>,
    /// Group -> W -> X label -> probability.
    pub x_given_group_w: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    /// Group -> W -> response-type composition.
    pub strata_given_group_w: BTreeMap<String, BTreeMap<String, StratumDist>>,
    pub decision_model: DecisionModel,
    /// Declares that response types are independent of group within each W
    /// cell. Verified against the numbers, never trusted.
    #[serde(default)]
    pub enforce_assumption1: bool,
    /// Declares the backlash stratum empty everywhere. Verified.
    #[serde(default)]
    pub enforce_monotonicity: bool,
    /// Declares decisions principally fair within W cells: stratum-based
    /// rates shared across groups. Verified structurally.
    #[serde(default)]
    pub enforce_pf: bool,
}

fn check_simplex(
    issues: &mut Vec<SpecIssue>,
    path: &str,
    entries: &BTreeMap<String, f64>,
    positive: bool,
) {
    if entries.is_empty() {
        issues.push(SpecIssue::new(path, "at least one entry is required"));
        return;
    }
    let mut entries_ok = true;
    for (label, p) in entries {
        let ok = p.is_finite() && *p >= 0.0 && *p <= 1.0 && (!positive || *p > 0.0);
        if !ok {
            entries_ok = false;
            let range = if positive { "(0, 1]" } else { "[0, 1]" };
            issues.push(SpecIssue::new(
                format!("{path}.{label}"),
                format!("probability must lie in {range}, got {p}"),
            ));
        }
    }
    if entries_ok {
        let sum: f64 = entries.values().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            issues.push(SpecIssue::new(
                path,
                format!("probabilities sum to {sum}, expected 1"),
            ));
        }
    }
}

fn check_stratum_dist(issues: &mut Vec<SpecIssue>, path: &str, dist: &StratumDist) {
    let mut entries_ok = true;
    for stratum in PrincipalStratum::ALL {
        let p = dist.get(stratum);
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            entries_ok = false;
            issues.push(SpecIssue::new(
                format!("{path}.{}", stratum.name()),
                format!("probability must lie in [0, 1], got {p}"),
            ));
        }
    }
    if entries_ok && (dist.sum() - 1.0).abs() > SUM_TOL {
        issues.push(SpecIssue::new(
            path,
            format!("probabilities sum to {}, expected 1", dist.sum()),
        ));
    }
}

/// Check that `map` has exactly the expected keys, reporting both missing
/// and unknown entries.
fn check_keys<V>(
    issues: &mut Vec<SpecIssue>,
    path: &str,
    map: &BTreeMap<String, V>,
    expected: &[String],
    what: &str,
) -> bool {
    let mut ok = true;
    for key in expected {
        if !map.contains_key(key) {
            ok = false;
            issues.push(SpecIssue::new(
                path,
                format!("missing entry for {what} \"{key}\""),
            ));
        }
    }
    for key in map.keys() {
        if !expected.contains(key) {
            ok = false;
            issues.push(SpecIssue::new(
                format!("{path}.{key}"),
                format!("unknown {what}"),
            ));
        }
    }
    ok
}

fn check_rate_table(
    issues: &mut Vec<SpecIssue>,
    path: &str,
    table: &BTreeMap<String, BTreeMap<String, f64>>,
    w_labels: &[String],
) {
    let stratum_names: Vec<String> = PrincipalStratum::ALL
        .iter()
        .map(|s| s.name().to_owned())
        .collect();
    check_keys(issues, path, table, w_labels, "W label");
    for (w, rates) in table {
        if !w_labels.contains(w) {
            continue;
        }
        let wpath = format!("{path}.{w}");
        check_keys(issues, &wpath, rates, &stratum_names, "response type");
        for (name, rate) in rates {
            if stratum_names.contains(name) && !(rate.is_finite() && (0.0..=1.0).contains(rate)) {
                issues.push(SpecIssue::new(
                    format!("{wpath}.{name}"),
                    format!("decision rate must lie in [0, 1], got {rate}"),
                ));
            }
        }
    }
}

/// Validate a spec: every distribution a proper simplex, key structure
/// consistent, decision rates complete, and every `enforce_*` declaration
/// actually true of the numbers. All problems are collected before failing.
pub fn validate_spec(spec: &DgpSpec) -> Result<(), Error> {
    let mut issues = Vec::new();

    check_simplex(&mut issues, "groups", &spec.groups, true);
    let group_labels: Vec<String> = spec.groups.keys().cloned().collect();

    check_keys(
        &mut issues,
        "w_given_group",
        &spec.w_given_group,
        &group_labels,
        "group",
    );
    let w_labels: Vec<String> = spec
        .w_given_group
        .values()
        .next()
        .map(|m| m.keys().cloned().collect())
        .unwrap_or_default();
    for (g, dist) in &spec.w_given_group {
        let path = format!("w_given_group.{g}");
        check_simplex(&mut issues, &path, dist, false);
        let labels: Vec<String> = dist.keys().cloned().collect();
        if labels != w_labels {
            issues.push(SpecIssue::new(
                path,
                "all groups must use the same set of W labels".to_owned(),
            ));
        }
    }

    check_keys(
        &mut issues,
        "x_given_group_w",
        &spec.x_given_group_w,
        &group_labels,
        "group",
    );
    for (g, by_w) in &spec.x_given_group_w {
        let path = format!("x_given_group_w.{g}");
        check_keys(&mut issues, &path, by_w, &w_labels, "W label");
        for (w, dist) in by_w {
            check_simplex(&mut issues, &format!("{path}.{w}"), dist, false);
        }
    }

    check_keys(
        &mut issues,
        "strata_given_group_w",
        &spec.strata_given_group_w,
        &group_labels,
        "group",
    );
    for (g, by_w) in &spec.strata_given_group_w {
        let path = format!("strata_given_group_w.{g}");
        check_keys(&mut issues, &path, by_w, &w_labels, "W label");
        for (w, dist) in by_w {
            check_stratum_dist(&mut issues, &format!("{path}.{w}"), dist);
        }
    }

    match &spec.decision_model {
        DecisionModel::StratumBased {
            rates,
            rates_by_group,
        } => match (rates, rates_by_group) {
            (Some(_), Some(_)) => issues.push(SpecIssue::new(
                "decision_model",
                "give either rates or rates_by_group, not both",
            )),
            (None, None) => issues.push(SpecIssue::new(
                "decision_model",
                "a stratum-based model needs rates or rates_by_group",
            )),
            (Some(table), None) => {
                check_rate_table(&mut issues, "decision_model.rates", table, &w_labels)
            }
            (None, Some(by_group)) => {
                check_keys(
                    &mut issues,
                    "decision_model.rates_by_group",
                    by_group,
                    &group_labels,
                    "group",
                );
                for (g, table) in by_group {
                    check_rate_table(
                        &mut issues,
                        &format!("decision_model.rates_by_group.{g}"),
                        table,
                        &w_labels,
                    );
                }
            }
        },
        DecisionModel::CovariateBased { rates } => {
            let mut x_labels: BTreeSet<&String> = BTreeSet::new();
            for by_w in spec.x_given_group_w.values() {
                for dist in by_w.values() {
                    x_labels.extend(dist.keys());
                }
            }
            for x in &x_labels {
                if !rates.contains_key(*x) {
                    issues.push(SpecIssue::new(
                        "decision_model.rates",
                        format!("missing rate for X label \"{x}\""),
                    ));
                }
            }
            for (x, rate) in rates {
                if !x_labels.contains(x) {
                    issues.push(SpecIssue::new(
                        format!("decision_model.rates.{x}"),
                        "unknown X label".to_owned(),
                    ));
                } else if !(rate.is_finite() && (0.0..=1.0).contains(rate)) {
                    issues.push(SpecIssue::new(
                        format!("decision_model.rates.{x}"),
                        format!("decision rate must lie in [0, 1], got {rate}"),
                    ));
                }
            }
        }
    }

    // Verify the declarations only once the structure is sound; on a broken
    // structure the reports above are the actionable ones.
    if issues.is_empty() {
        verify_declarations(spec, &group_labels, &w_labels, &mut issues);
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Spec(issues))
    }
}

fn verify_declarations(
    spec: &DgpSpec,
    group_labels: &[String],
    w_labels: &[String],
    issues: &mut Vec<SpecIssue>,
) {
    if spec.enforce_assumption1 {
        let first = &group_labels[0];
        for g in &group_labels[1..] {
            for w in w_labels {
                for stratum in PrincipalStratum::ALL {
                    let a = spec.strata_given_group_w[first][w].get(stratum);
                    let b = spec.strata_given_group_w[g][w].get(stratum);
                    if (a - b).abs() > PREMISE_TOL {
                        issues.push(SpecIssue::new(
                            "enforce_assumption1",
                            format!(
                                "response types depend on group: {stratum} share is {a} for \
                                 \"{first}\" but {b} for \"{g}\" in cell \"{w}\""
                            ),
                        ));
                    }
                }
            }
        }
    }

    if spec.enforce_monotonicity {
        for (g, by_w) in &spec.strata_given_group_w {
            for (w, dist) in by_w {
                if dist.backlash > PREMISE_TOL {
                    issues.push(SpecIssue::new(
                        "enforce_monotonicity",
                        format!(
                            "backlash mass {} in strata_given_group_w.{g}.{w}",
                            dist.backlash
                        ),
                    ));
                }
            }
        }
    }

    if spec.enforce_pf {
        match &spec.decision_model {
            DecisionModel::CovariateBased { .. } => issues.push(SpecIssue::new(
                "enforce_pf",
                "covariate-based decisions cannot be declared principally fair; \
                 use a stratum-based model with rates shared across groups",
            )),
            DecisionModel::StratumBased {
                rates_by_group: Some(by_group),
                ..
            } => {
                let first = &group_labels[0];
                for g in &group_labels[1..] {
                    for w in w_labels {
                        for stratum in PrincipalStratum::ALL {
                            let a = by_group[first][w][stratum.name()];
                            let b = by_group[g][w][stratum.name()];
                            if (a - b).abs() > PREMISE_TOL {
                                issues.push(SpecIssue::new(
                                    "enforce_pf",
                                    format!(
                                        "decision rates depend on group: {stratum} rate is {a} \
                                         for \"{first}\" but {b} for \"{g}\" in cell \"{w}\""
                                    ),
                                ));
                            }
                        }
                    }
                }
            }
            // Shared rates are principally fair within W by construction.
            DecisionModel::StratumBased { .. } => {}
        }
    }
}

/// Decision probability for a unit with the given attributes.
fn decision_rate(spec: &DgpSpec, group: &str, w: &str, x: &str, stratum: PrincipalStratum) -> f64 {
    match &spec.decision_model {
        DecisionModel::StratumBased {
            rates,
            rates_by_group,
        } => {
            let table = match (rates, rates_by_group) {
                (Some(shared), _) => shared,
                (None, Some(by_group)) => &by_group[group],
                (None, None) => unreachable!("validated specs have exactly one rate table"),
            };
            table[w][stratum.name()]
        }
        DecisionModel::CovariateBased { rates } => rates[x],
    }
}

/// One positive-mass point of the joint distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub group: String,
    pub w: String,
    pub x: String,
    pub stratum: PrincipalStratum,
    pub decision: bool,
    pub outcome: bool,
    pub mass: f64,
}

/// The exact joint distribution implied by a spec, as a finite list of
/// positive-mass atoms. Everything observable — and, because the response
/// type is part of each atom, everything latent — can be computed from it
/// without sampling.
#[derive(Debug, Clone, Serialize)]
pub struct OracleDistribution {
    pub atoms: Vec<Atom>,
}

/// Expand a spec into its exact joint distribution.
pub fn exact_distribution(spec: &DgpSpec) -> Result<OracleDistribution, Error> {
    exact_distribution_with_cap(spec, ATOM_CAP)
}

/// As [`exact_distribution`], with an explicit cap on the atom count.
pub fn exact_distribution_with_cap(
    spec: &DgpSpec,
    cap: usize,
) -> Result<OracleDistribution, Error> {
    validate_spec(spec)?;
    let mut count: usize = 0;
    for by_w in spec.x_given_group_w.values() {
        for dist in by_w.values() {
            count = count.saturating_add(dist.len().saturating_mul(8));
        }
    }
    if count > cap {
        return Err(Error::InvalidArgument(format!(
            "spec implies {count} probability atoms, more than the supported {cap}"
        )));
    }

    let mut atoms = Vec::new();
    for (g, pg) in &spec.groups {
        for (w, pw) in &spec.w_given_group[g] {
            let strata = &spec.strata_given_group_w[g][w];
            for (x, px) in &spec.x_given_group_w[g][w] {
                for stratum in PrincipalStratum::ALL {
                    let rate = decision_rate(spec, g, w, x, stratum);
                    for decision in [false, true] {
                        let pd = if decision { rate } else { 1.0 - rate };
                        let mass = pg * pw * px * strata.get(stratum) * pd;
                        if mass > 0.0 {
                            atoms.push(Atom {
                                group: g.clone(),
                                w: w.clone(),
                                x: x.clone(),
                                stratum,
                                decision,
                                outcome: stratum.realized_outcome(decision),
                                mass,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(OracleDistribution { atoms })
}

impl OracleDistribution {
    fn mass_where<F: Fn(&Atom) -> bool>(&self, pred: F) -> f64 {
        self.atoms.iter().filter(|a| pred(a)).map(|a| a.mass).sum()
    }

    /// Group labels with positive mass, sorted.
    pub fn groups(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.atoms.iter().map(|a| a.group.clone()).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// W labels with positive mass, sorted.
    pub fn w_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.atoms.iter().map(|a| a.w.clone()).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Pr(decision | response type, group?, W?); `None` when the
    /// conditioning event has zero mass.
    pub fn stratum_rate(
        &self,
        group: Option<&str>,
        stratum: PrincipalStratum,
        w: Option<&str>,
    ) -> Option<f64> {
        let select = |a: &Atom| {
            a.stratum == stratum && group.is_none_or(|g| a.group == g) && w.is_none_or(|l| a.w == l)
        };
        let denom = self.mass_where(select);
        (denom > 0.0).then(|| self.mass_where(|a| select(a) && a.decision) / denom)
    }

    /// Pr(response type | group, W?); `None` when the cell has zero mass.
    pub fn stratum_share(
        &self,
        group: &str,
        stratum: PrincipalStratum,
        w: Option<&str>,
    ) -> Option<f64> {
        let in_cell = |a: &Atom| a.group == group && w.is_none_or(|l| a.w == l);
        let denom = self.mass_where(in_cell);
        (denom > 0.0).then(|| self.mass_where(|a| in_cell(a) && a.stratum == stratum) / denom)
    }

    /// Per-group joint mass over (decision, outcome), optionally within one
    /// W cell. Groups without mass in the cell are omitted.
    pub fn joint_by_group(&self, w: Option<&str>) -> BTreeMap<String, JointMass> {
        let mut map: BTreeMap<String, JointMass> = BTreeMap::new();
        for a in &self.atoms {
            if w.is_none_or(|l| a.w == l) {
                let entry = map.entry(a.group.clone()).or_insert([[0.0; 2]; 2]);
                entry[a.decision as usize][a.outcome as usize] += a.mass;
            }
        }
        map
    }
}

/// Run the identification formulas on an exact distribution instead of a
/// sample: the outcome regression on (group, W, X) and the per-cell joint
/// frequencies are population quantities, so under the identifying premises
/// the result must match the true rates up to floating-point error. Sample
/// sizes in the output are zero, since no units are involved.
pub fn plugin_estimates(
    oracle: &OracleDistribution,
    mode: Mode,
    tol: &Tolerances,
) -> IdentifiedEstimates {
    #[derive(Default, Clone, Copy)]
    struct ArmMass {
        total: f64,
        positive: f64,
    }
    // Exact outcome regression cells, keyed by (group, W, X), one per arm.
    let mut regression: BTreeMap<(&str, &str, &str), [ArmMass; 2]> = BTreeMap::new();
    for a in &oracle.atoms {
        let arms = regression
            .entry((a.group.as_str(), a.w.as_str(), a.x.as_str()))
            .or_default();
        let arm = &mut arms[a.decision as usize];
        arm.total += a.mass;
        if a.outcome {
            arm.positive += a.mass;
        }
    }

    let mut frames: Vec<(String, Option<String>)> = Vec::new();
    match mode {
        Mode::Marginal => {
            for g in oracle.groups() {
                frames.push((g, None));
            }
        }
        Mode::ConditionalOnW => {
            let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
            for a in &oracle.atoms {
                seen.insert((a.group.clone(), a.w.clone()));
            }
            for (g, w) in seen {
                frames.push((g, Some(w)));
            }
        }
    }

    let mut cells = Vec::with_capacity(frames.len());
    for (group, w_sel) in frames {
        let mut joint = [[0.0f64; 2]; 2];
        for a in &oracle.atoms {
            if a.group == group && w_sel.as_deref().is_none_or(|l| a.w == l) {
                joint[a.decision as usize][a.outcome as usize] += a.mass;
            }
        }
        let total = joint[0][0] + joint[0][1] + joint[1][0] + joint[1][1];

        // Within-frame regression means, weighting each covariate cell by
        // its frame mass and renormalizing per arm over cells where the
        // regression is defined.
        let mut sum = [0.0f64; 2];
        let mut weight = [0.0f64; 2];
        let mut missing = 0usize;
        for ((g, w, _x), arms) in &regression {
            if *g != group || w_sel.as_deref().is_some_and(|l| *w != l) {
                continue;
            }
            let cell_weight = arms[0].total + arms[1].total;
            for arm in 0..2 {
                if arms[arm].total > 0.0 {
                    sum[arm] += cell_weight * (arms[arm].positive / arms[arm].total);
                    weight[arm] += cell_weight;
                } else {
                    missing += 1;
                }
            }
        }

        let (probs, rates) = if weight[0] > 0.0 && weight[1] > 0.0 {
            let m0 = sum[0] / weight[0];
            let m1 = sum[1] / weight[1];
            let rates = identify::rates_from_moments(
                m0,
                m1,
                joint[0][0] / total,
                (joint[0][1] + joint[1][1]) / total,
                joint[1][1] / total,
                tol.denominator_floor,
            );
            (
                Some(StratumProbs {
                    safe: 1.0 - m0,
                    preventable: m0 - m1,
                    dangerous: m1,
                }),
                Some(rates),
            )
        } else {
            (None, None)
        };

        let w = w_sel.map(|l| vec![("w".to_owned(), l)]).unwrap_or_default();
        let (rate_safe, rate_preventable, rate_dangerous) = match rates {
            Some(r) => (r.safe, r.preventable, r.dangerous),
            None => (None, None, None),
        };
        cells.push(CellEstimates {
            group,
            w,
            n: 0,
            missing_predictions: missing,
            stratum_probs: probs,
            rate_safe,
            rate_preventable,
            rate_dangerous,
        });
    }

    IdentifiedEstimates { mode, cells }
}

/// Largest gap between any two values; zero for fewer than two.
fn spread(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    hi - lo
}

/// Result of the exact implication check.
#[derive(Debug, Clone, Serialize)]
pub struct ImplicationCheck {
    /// Both premises verified against the distribution: decision rates
    /// within (W, response type) do not depend on group, and response-type
    /// composition within W does not depend on group.
    pub premises_hold: bool,
    pub premise_failures: Vec<String>,
    /// Largest criterion disparity across W cells.
    pub max_disparity: f64,
    /// Criteria evaluated within each W cell.
    pub per_w: BTreeMap<String, DisparityReport>,
    /// Whether all criteria hold in every W cell; `None` when the premises
    /// fail, because then the implication asserts nothing.
    pub conclusion_holds: Option<bool>,
    pub tolerance: f64,
}

/// Exactly check that principally fair decisions plus group-independent
/// response types (within W cells) imply the three statistical criteria
/// within every W cell.
pub fn check_implication(spec: &DgpSpec, tolerance: f64) -> Result<ImplicationCheck, Error> {
    let oracle = exact_distribution(spec)?;
    let groups = oracle.groups();
    let mut premise_failures = Vec::new();

    for w in oracle.w_labels() {
        for stratum in PrincipalStratum::ALL {
            let shares: Vec<f64> = groups
                .iter()
                .filter_map(|g| oracle.stratum_share(g, stratum, Some(&w)))
                .collect();
            if spread(&shares) > PREMISE_TOL {
                premise_failures.push(format!(
                    "response-type composition differs across groups in cell \"{w}\" \
                     ({stratum} share spread {:.3e})",
                    spread(&shares)
                ));
            }
            let rates: Vec<f64> = groups
                .iter()
                .filter_map(|g| oracle.stratum_rate(Some(g), stratum, Some(&w)))
                .collect();
            if spread(&rates) > PREMISE_TOL {
                premise_failures.push(format!(
                    "decision rates differ across groups in cell \"{w}\" \
                     ({stratum} rate spread {:.3e})",
                    spread(&rates)
                ));
            }
        }
    }
    let premises_hold = premise_failures.is_empty();

    let mut per_w = BTreeMap::new();
    let mut max_disparity = 0.0f64;
    for w in oracle.w_labels() {
        let joint = oracle.joint_by_group(Some(&w));
        let report = metrics::criteria_from_joint(&joint, tolerance)?;
        max_disparity = max_disparity
            .max(report.overall.disparity)
            .max(report.calibration.max_disparity)
            .max(report.accuracy.max_disparity);
        per_w.insert(w, report);
    }
    let conclusion = per_w.values().all(|r| r.all_pass);

    Ok(ImplicationCheck {
        premises_hold,
        premise_failures,
        max_disparity,
        per_w,
        conclusion_holds: premises_hold.then_some(conclusion),
        tolerance,
    })
}

/// Result of the exact equivalence check.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceCheck {
    /// Both premises verified against the distribution: response types
    /// independent of group (marginally), and an empty backlash stratum.
    pub premises_hold: bool,
    pub premise_failures: Vec<String>,
    /// Largest cross-group gap in Pr(decision | response type).
    pub pf_gap: f64,
    pub pf_fair: bool,
    /// Largest marginal criterion disparity.
    pub criteria_gap: f64,
    pub criteria_fair: bool,
    /// The marginal criteria evaluation behind `criteria_fair`.
    pub report: DisparityReport,
    /// `Some(pf_fair == criteria_fair)` when the premises hold.
    pub equivalence_holds: Option<bool>,
    pub tolerance: f64,
}

/// Exactly check that, with group-independent response types and an empty
/// backlash stratum, principal fairness holds if and only if all three
/// statistical criteria hold.
pub fn check_equivalence(spec: &DgpSpec, tolerance: f64) -> Result<EquivalenceCheck, Error> {
    let oracle = exact_distribution(spec)?;
    let groups = oracle.groups();
    let mut premise_failures = Vec::new();

    for stratum in PrincipalStratum::ALL {
        let shares: Vec<f64> = groups
            .iter()
            .filter_map(|g| oracle.stratum_share(g, stratum, None))
            .collect();
        if spread(&shares) > PREMISE_TOL {
            premise_failures.push(format!(
                "response-type composition differs across groups ({stratum} share spread {:.3e})",
                spread(&shares)
            ));
        }
    }
    for g in &groups {
        if let Some(share) = oracle.stratum_share(g, PrincipalStratum::Backlash, None) {
            if share > PREMISE_TOL {
                premise_failures.push(format!("backlash mass {share:.3e} in group \"{g}\""));
            }
        }
    }
    let premises_hold = premise_failures.is_empty();

    let mut pf_gap = 0.0f64;
    for stratum in PrincipalStratum::ALL {
        let rates: Vec<f64> = groups
            .iter()
            .filter_map(|g| oracle.stratum_rate(Some(g), stratum, None))
            .collect();
        pf_gap = pf_gap.max(spread(&rates));
    }

    let report = metrics::criteria_from_joint(&oracle.joint_by_group(None), tolerance)?;
    let criteria_gap = report
        .overall
        .disparity
        .max(report.calibration.max_disparity)
        .max(report.accuracy.max_disparity);
    let pf_fair = pf_gap <= tolerance;
    let criteria_fair = report.all_pass;

    Ok(EquivalenceCheck {
        premises_hold,
        premise_failures,
        pf_gap,
        pf_fair,
        criteria_gap,
        criteria_fair,
        report,
        equivalence_holds: premises_hold.then_some(pf_fair == criteria_fair),
        tolerance,
    })
}

/// Premises of the identification result, verified against the spec.
#[derive(Debug, Clone, Serialize)]
pub struct IdentificationPremises {
    /// Backlash stratum empty everywhere.
    pub monotone: bool,
    /// Decisions depend on the X label alone, so outcome unconfoundedness
    /// given the regression covariates holds by construction.
    pub covariate_decisions: bool,
}

/// Result of the exact identification check.
#[derive(Debug, Clone, Serialize)]
pub struct IdentificationCheck {
    pub premises: IdentificationPremises,
    /// Largest |plug-in - truth| over groups and response types, marginal.
    pub marginal_max_deviation: f64,
    /// Same, conditioning on W cells.
    pub conditional_max_deviation: f64,
    pub cells_compared: usize,
    /// (cell, response type) pairs skipped because the type has no mass.
    pub skipped: Vec<String>,
}

/// Exactly check that the plug-in formulas recover the true per-stratum
/// decision rates, in marginal and W-conditional modes. A rate the plug-in
/// withholds (floored denominator) while the truth exists — or vice versa —
/// counts as an infinite deviation.
pub fn check_identification(
    spec: &DgpSpec,
    tol: &Tolerances,
) -> Result<IdentificationCheck, Error> {
    let oracle = exact_distribution(spec)?;
    let premises = IdentificationPremises {
        monotone: oracle
            .atoms
            .iter()
            .all(|a| a.stratum != PrincipalStratum::Backlash),
        covariate_decisions: matches!(spec.decision_model, DecisionModel::CovariateBased { .. }),
    };

    let mut skipped = Vec::new();
    let mut cells_compared = 0usize;
    let mut deviation = [0.0f64; 2];
    for (slot, mode) in [(0usize, Mode::Marginal), (1usize, Mode::ConditionalOnW)] {
        let plugin = plugin_estimates(&oracle, mode, tol);
        for cell in &plugin.cells {
            cells_compared += 1;
            let w_sel: Option<&str> = cell.w.first().map(|(_, v)| v.as_str());
            for (stratum, rate) in [
                (PrincipalStratum::Safe, &cell.rate_safe),
                (PrincipalStratum::Preventable, &cell.rate_preventable),
                (PrincipalStratum::Dangerous, &cell.rate_dangerous),
            ] {
                let truth = oracle.stratum_rate(Some(&cell.group), stratum, w_sel);
                match (truth, rate) {
                    (None, None) => skipped.push(format!("{} ({stratum})", cell.key())),
                    (Some(t), Some(r)) => {
                        deviation[slot] = deviation[slot].max((r.raw - t).abs());
                    }
                    _ => deviation[slot] = f64::INFINITY,
                }
            }
        }
    }

    Ok(IdentificationCheck {
        premises,
        marginal_max_deviation: deviation[0],
        conditional_max_deviation: deviation[1],
        cells_compared,
        skipped,
    })
}

/// Inverse-CDF draw over a validated categorical distribution, consuming
/// exactly one uniform variate. Zero-mass labels can never be drawn.
fn draw<'a>(
    rng: &mut ChaCha8Rng,
    entries: impl Iterator<Item = (&'a String, &'a f64)>,
) -> &'a String {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut fallback = None;
    for (label, p) in entries {
        if *p > 0.0 {
            cum += *p;
            fallback = Some(label);
            if u < cum {
                return label;
            }
        }
    }
    fallback.expect("validated distributions have positive total mass")
}

fn draw_stratum(rng: &mut ChaCha8Rng, dist: &StratumDist) -> PrincipalStratum {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut fallback = PrincipalStratum::Safe;
    for stratum in PrincipalStratum::ALL {
        let p = dist.get(stratum);
        if p > 0.0 {
            cum += p;
            fallback = stratum;
            if u < cum {
                return stratum;
            }
        }
    }
    fallback
}

/// Draw a unit-level dataset of `n` units from a spec.
///
/// Each unit consumes exactly five uniform draws in a fixed order (group, W,
/// X, response type, decision), so the dataset is a pure function of (spec,
/// `n`, `seed`). Columns are named `group`, `w`, `x`, `decision`, `outcome`,
/// with `w` designated as the conditioning column. With `with_latent` the
/// records carry their true response type; otherwise it is withheld, as it
/// would be in real data.
pub fn sample(spec: &DgpSpec, n: usize, seed: u64, with_latent: bool) -> Result<Dataset, Error> {
    validate_spec(spec)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one unit; got n = 0".to_owned(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let group = draw(&mut rng, spec.groups.iter());
        let w = draw(&mut rng, spec.w_given_group[group].iter());
        let x = draw(&mut rng, spec.x_given_group_w[group][w].iter());
        let stratum = draw_stratum(&mut rng, &spec.strata_given_group_w[group][w]);
        let decision = rng.random::<f64>() < decision_rate(spec, group, w, x, stratum);
        records.push(UnitRecord {
            decision,
            outcome: stratum.realized_outcome(decision),
            group: group.clone(),
            covariates: vec![Value::Cat(w.clone()), Value::Cat(x.clone())],
            stratum: with_latent.then_some(stratum),
        });
    }
    let mut groups: Vec<String> = records.iter().map(|r| r.group.clone()).collect();
    groups.sort_unstable();
    groups.dedup();
    Ok(Dataset {
        schema: Schema {
            decision: "decision".to_owned(),
            outcome: "outcome".to_owned(),
            group: "group".to_owned(),
            covariates: vec!["w".to_owned(), "x".to_owned()],
            covariate_types: vec![ColumnType::Categorical, ColumnType::Categorical],
            condition: vec!["w".to_owned()],
        },
        records,
        groups,
    })
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

fn random_simplex(rng: &mut ChaCha8Rng, labels: &[String]) -> BTreeMap<String, f64> {
    let raw: Vec<f64> = labels.iter().map(|_| uniform(rng, 0.05, 1.0)).collect();
    let sum: f64 = raw.iter().sum();
    labels
        .iter()
        .cloned()
        .zip(raw.iter().map(|v| v / sum))
        .collect()
}

fn random_strata(rng: &mut ChaCha8Rng) -> StratumDist {
    let raw: [f64; 4] = std::array::from_fn(|_| uniform(rng, 0.05, 1.0));
    let sum: f64 = raw.iter().sum();
    StratumDist {
        safe: raw[0] / sum,
        preventable: raw[1] / sum,
        backlash: raw[2] / sum,
        dangerous: raw[3] / sum,
    }
}

fn random_monotone_strata(rng: &mut ChaCha8Rng) -> StratumDist {
    let raw: [f64; 3] = std::array::from_fn(|_| uniform(rng, 0.05, 1.0));
    let sum: f64 = raw.iter().sum();
    StratumDist {
        safe: raw[0] / sum,
        preventable: raw[1] / sum,
        backlash: 0.0,
        dangerous: raw[2] / sum,
    }
}

fn random_rate_table(
    rng: &mut ChaCha8Rng,
    ws: &[String],
) -> BTreeMap<String, BTreeMap<String, f64>> {
    ws.iter()
        .map(|w| {
            (
                w.clone(),
                PrincipalStratum::ALL
                    .iter()
                    .map(|s| (s.name().to_owned(), uniform(rng, 0.05, 0.95)))
                    .collect(),
            )
        })
        .collect()
}

/// A random population satisfying the implication premises: a shared
/// response-type composition per W cell and shared stratum-based decision
/// rates. Backlash mass is allowed — the implication does not need
/// monotonicity. Group sizes, W-cell compositions, and X distributions all
/// vary freely.
pub fn random_spec_for_implication(rng: &mut ChaCha8Rng) -> DgpSpec {
    let groups = labels("g", rng.random_range(1..=3usize));
    let ws = labels("w", rng.random_range(1..=2usize));
    let xs = labels("x", rng.random_range(1..=3usize));

    let group_dist = random_simplex(rng, &groups);
    let shared_strata: BTreeMap<String, StratumDist> =
        ws.iter().map(|w| (w.clone(), random_strata(rng))).collect();
    let rates = random_rate_table(rng, &ws);

    let mut w_given_group = BTreeMap::new();
    let mut x_given_group_w = BTreeMap::new();
    let mut strata_given_group_w = BTreeMap::new();
    for g in &groups {
        w_given_group.insert(g.clone(), random_simplex(rng, &ws));
        x_given_group_w.insert(
            g.clone(),
            ws.iter()
                .map(|w| (w.clone(), random_simplex(rng, &xs)))
                .collect(),
        );
        strata_given_group_w.insert(g.clone(), shared_strata.clone());
    }

    DgpSpec {
        groups: group_dist,
        w_given_group,
        x_given_group_w,
        strata_given_group_w,
        decision_model: DecisionModel::StratumBased {
            rates: Some(rates),
            rates_by_group: None,
        },
        enforce_assumption1: true,
        enforce_monotonicity: false,
        enforce_pf: true,
    }
}

/// A random population satisfying the equivalence premises: response types
/// independent of group (shared W distribution and shared compositions) and
/// no backlash mass. With `violate_pf`, one group's decision rate for one
/// (W, response type) pair is shifted by 0.1, so principal fairness — and,
/// by the equivalence, at least one criterion — visibly fails.
pub fn random_spec_for_equivalence(rng: &mut ChaCha8Rng, violate_pf: bool) -> DgpSpec {
    let group_count = if violate_pf {
        rng.random_range(2..=3usize)
    } else {
        rng.random_range(1..=3usize)
    };
    let groups = labels("g", group_count);
    let ws = labels("w", rng.random_range(1..=2usize));
    let xs = labels("x", rng.random_range(1..=3usize));

    let group_dist = random_simplex(rng, &groups);
    let shared_w = random_simplex(rng, &ws);
    let shared_strata: BTreeMap<String, StratumDist> = ws
        .iter()
        .map(|w| (w.clone(), random_monotone_strata(rng)))
        .collect();
    let base_rates = random_rate_table(rng, &ws);

    let decision_model = if violate_pf {
        let mut by_group: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = groups
            .iter()
            .map(|g| (g.clone(), base_rates.clone()))
            .collect();
        let target_g = &groups[rng.random_range(0..groups.len())];
        let target_w = &ws[rng.random_range(0..ws.len())];
        let monotone = [
            PrincipalStratum::Safe,
            PrincipalStratum::Preventable,
            PrincipalStratum::Dangerous,
        ];
        let target_s = monotone[rng.random_range(0..monotone.len())].name();
        let rate = by_group
            .get_mut(target_g)
            .unwrap()
            .get_mut(target_w)
            .unwrap()
            .get_mut(target_s)
            .unwrap();
        // Rates start in [0.05, 0.95], so the shifted value stays in range.
        *rate = if *rate <= 0.5 {
            *rate + 0.1
        } else {
            *rate - 0.1
        };
        DecisionModel::StratumBased {
            rates: None,
            rates_by_group: Some(by_group),
        }
    } else {
        DecisionModel::StratumBased {
            rates: Some(base_rates),
            rates_by_group: None,
        }
    };

    let mut w_given_group = BTreeMap::new();
    let mut x_given_group_w = BTreeMap::new();
    let mut strata_given_group_w = BTreeMap::new();
    for g in &groups {
        w_given_group.insert(g.clone(), shared_w.clone());
        x_given_group_w.insert(
            g.clone(),
            ws.iter()
                .map(|w| (w.clone(), random_simplex(rng, &xs)))
                .collect(),
        );
        strata_given_group_w.insert(g.clone(), shared_strata.clone());
    }

    DgpSpec {
        groups: group_dist,
        w_given_group,
        x_given_group_w,
        strata_given_group_w,
        decision_model,
        enforce_assumption1: true,
        enforce_monotonicity: true,
        enforce_pf: !violate_pf,
    }
}

/// A random population satisfying the identification premises: no backlash
/// mass and covariate-based decisions. Response-type compositions vary
/// freely across groups and W cells — identification does not need them
/// shared.
pub fn random_spec_for_identification(rng: &mut ChaCha8Rng) -> DgpSpec {
    let groups = labels("g", rng.random_range(1..=3usize));
    let ws = labels("w", rng.random_range(1..=2usize));
    let xs = labels("x", rng.random_range(2..=4usize));

    let group_dist = random_simplex(rng, &groups);
    let mut w_given_group = BTreeMap::new();
    let mut x_given_group_w = BTreeMap::new();
    let mut strata_given_group_w = BTreeMap::new();
    for g in &groups {
        w_given_group.insert(g.clone(), random_simplex(rng, &ws));
        x_given_group_w.insert(
            g.clone(),
            ws.iter()
                .map(|w| (w.clone(), random_simplex(rng, &xs)))
                .collect(),
        );
        strata_given_group_w.insert(
            g.clone(),
            ws.iter()
                .map(|w| (w.clone(), random_monotone_strata(rng)))
                .collect(),
        );
    }
    let rates: BTreeMap<String, f64> = xs
        .iter()
        .map(|x| (x.clone(), uniform(rng, 0.05, 0.95)))
        .collect();

    DgpSpec {
        groups: group_dist,
        w_given_group,
        x_given_group_w,
        strata_given_group_w,
        decision_model: DecisionModel::CovariateBased { rates },
        enforce_assumption1: false,
        enforce_monotonicity: true,
        enforce_pf: false,
    }
}

/// Outcome of one randomized verification case.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremRun {
    pub theorem: u8,
    pub case: u64,
    pub passed: bool,
    pub detail: String,
}

/// Run `cases` randomized checks of one structural result (1 = implication,
/// 2 = equivalence, 3 = identification). Case `k` draws its population from
/// stream `(theorem << 32) | k` of a generator seeded with `seed`, so every
/// case is reproducible in isolation. For the equivalence result, odd cases
/// build in a deliberate fairness violation and must detect it on both
/// sides.
pub fn run_theorem_cases(
    theorem: u8,
    cases: u64,
    seed: u64,
    tolerance: f64,
    tol: &Tolerances,
) -> Result<Vec<TheoremRun>, Error> {
    if !(1..=3).contains(&theorem) {
        return Err(Error::InvalidArgument(format!(
            "unknown theorem {theorem}; expected 1, 2, or 3"
        )));
    }
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be a nonnegative finite number, got {tolerance}"
        )));
    }
    let mut runs = Vec::with_capacity(cases as usize);
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((theorem as u64) << 32) | case);
        let run = match theorem {
            1 => {
                let spec = random_spec_for_implication(&mut rng);
                let check = check_implication(&spec, tolerance)?;
                TheoremRun {
                    theorem,
                    case,
                    passed: check.premises_hold && check.conclusion_holds == Some(true),
                    detail: format!("max criterion disparity {:.3e}", check.max_disparity),
                }
            }
            2 => {
                let violate = case % 2 == 1;
                let spec = random_spec_for_equivalence(&mut rng, violate);
                let check = check_equivalence(&spec, tolerance)?;
                let side = if violate {
                    "constructed violation"
                } else {
                    "fair by construction"
                };
                TheoremRun {
                    theorem,
                    case,
                    passed: check.premises_hold
                        && check.equivalence_holds == Some(true)
                        && check.pf_fair == !violate,
                    detail: format!(
                        "{side}: pf gap {:.3e}, criteria gap {:.3e}",
                        check.pf_gap, check.criteria_gap
                    ),
                }
            }
            _ => {
                let spec = random_spec_for_identification(&mut rng);
                let check = check_identification(&spec, tol)?;
                let deviation = check
                    .marginal_max_deviation
                    .max(check.conditional_max_deviation);
                TheoremRun {
                    theorem,
                    case,
                    passed: check.premises.monotone
                        && check.premises.covariate_decisions
                        && deviation <= tolerance,
                    detail: format!("max deviation {deviation:.3e}"),
                }
            }
        };
        runs.push(run);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::example_spec;

    #[test]
    fn worked_example_matches_its_frozen_joint() {
        let spec = example_spec();
        validate_spec(&spec).unwrap();
        let oracle = exact_distribution(&spec).unwrap();
        let joint = oracle.joint_by_group(None);
        // [decision][outcome] masses; the population table scaled by 1/1000.
        let expect_a = [[0.15, 0.10], [0.10, 0.15]];
        let expect_b = [[0.18, 0.10], [0.12, 0.10]];
        for (d, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((joint["A"][d][y] - expect_a[d][y]).abs() < 1e-15);
            assert!((joint["B"][d][y] - expect_b[d][y]).abs() < 1e-15);
        }
        let report = metrics::criteria_from_joint(&joint, 0.01).unwrap();
        assert!((report.overall.rate_by_group["A"] - 0.5).abs() < 1e-15);
        assert!((report.overall.rate_by_group["B"] - 0.44).abs() < 1e-15);
        assert!(!report.all_pass);
    }

    #[test]
    fn worked_example_fails_the_implication_premise_on_composition() {
        // The two groups share decision rates (principal fairness) but have
        // different response-type compositions, so the implication's other
        // premise fails and the check asserts nothing about criteria.
        let check = check_implication(&example_spec(), 1e-9).unwrap();
        assert!(!check.premises_hold);
        assert_eq!(check.conclusion_holds, None);
        assert!(check
            .premise_failures
            .iter()
            .all(|m| m.contains("composition")));
        assert!(!check.premise_failures.is_empty());
    }

    #[test]
    fn worked_example_fails_equivalence_premises() {
        let check = check_equivalence(&example_spec(), 1e-9).unwrap();
        assert!(!check.premises_hold);
        assert!(check.equivalence_holds.is_none());
        // Both premises are individually violated: group-dependent
        // composition and positive backlash mass.
        assert!(check
            .premise_failures
            .iter()
            .any(|m| m.contains("composition")));
        assert!(check
            .premise_failures
            .iter()
            .any(|m| m.contains("backlash")));
        // Decision rates are shared, so principal fairness itself holds.
        assert!(check.pf_gap < 1e-15);
    }

    #[test]
    fn worked_example_population_trips_the_monotonicity_diagnostics() {
        let oracle = exact_distribution(&example_spec()).unwrap();
        let plugin = plugin_estimates(&oracle, Mode::Marginal, &Tolerances::default());
        let flags = identify::monotonicity_diagnostics(&plugin, 1e-9);
        assert!(flags.any_flagged);
        assert!(flags.cells["A"].negative_preventable_mass);
        // Pr(Y=1|D=0,A) = 0.4 and Pr(Y=1|D=1,A) = 0.6, so the implied
        // preventable share is -0.2.
        let probs = plugin.cell("A", &[]).unwrap().stratum_probs.unwrap();
        assert!((probs.preventable + 0.2).abs() < 1e-12);
    }

    fn tiny_monotone_spec() -> DgpSpec {
        let strata = |safe: f64, preventable: f64, dangerous: f64| StratumDist {
            safe,
            preventable,
            backlash: 0.0,
            dangerous,
        };
        DgpSpec {
            groups: [("g0".to_owned(), 1.0)].into(),
            w_given_group: [(
                "g0".to_owned(),
                [("w0".to_owned(), 0.5), ("w1".to_owned(), 0.5)].into(),
            )]
            .into(),
            x_given_group_w: [(
                "g0".to_owned(),
                [
                    ("w0".to_owned(), [("x0".to_owned(), 1.0)].into()),
                    ("w1".to_owned(), [("x1".to_owned(), 1.0)].into()),
                ]
                .into(),
            )]
            .into(),
            strata_given_group_w: [(
                "g0".to_owned(),
                [
                    ("w0".to_owned(), strata(0.6, 0.3, 0.1)),
                    ("w1".to_owned(), strata(0.2, 0.3, 0.5)),
                ]
                .into(),
            )]
            .into(),
            decision_model: DecisionModel::CovariateBased {
                rates: [("x0".to_owned(), 0.3), ("x1".to_owned(), 0.8)].into(),
            },
            enforce_assumption1: false,
            enforce_monotonicity: true,
            enforce_pf: false,
        }
    }

    #[test]
    fn identification_is_exact_on_a_hand_checked_population() {
        let spec = tiny_monotone_spec();
        let check = check_identification(&spec, &Tolerances::default()).unwrap();
        assert!(check.premises.monotone);
        assert!(check.premises.covariate_decisions);
        assert!(check.marginal_max_deviation <= 1e-12);
        assert!(check.conditional_max_deviation <= 1e-12);
        assert!(check.skipped.is_empty());

        // Hand-derived marginal truths. Dangerous units sit in w0 with
        // probability (0.5*0.1)/(0.5*0.1 + 0.5*0.5) = 1/6, so their decision
        // rate is (1/6)*0.3 + (5/6)*0.8 = 43/60; safe: 0.75*0.3 + 0.25*0.8;
        // preventable: equal shares, (0.3 + 0.8)/2.
        let oracle = exact_distribution(&spec).unwrap();
        let plugin = plugin_estimates(&oracle, Mode::Marginal, &Tolerances::default());
        let cell = plugin.cell("g0", &[]).unwrap();
        assert!((cell.rate_dangerous.unwrap().raw - 43.0 / 60.0).abs() < 1e-12);
        assert!((cell.rate_safe.unwrap().raw - 0.425).abs() < 1e-12);
        assert!((cell.rate_preventable.unwrap().raw - 0.55).abs() < 1e-12);

        // Conditionally on a W cell the decision depends only on X, which is
        // degenerate here, so every stratum's rate equals the cell's rate.
        let conditional = plugin_estimates(&oracle, Mode::ConditionalOnW, &Tolerances::default());
        let w0 = vec![("w".to_owned(), "w0".to_owned())];
        let c0 = conditional.cell("g0", &w0).unwrap();
        for rate in [&c0.rate_safe, &c0.rate_preventable, &c0.rate_dangerous] {
            assert!((rate.unwrap().raw - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn random_implication_populations_satisfy_the_criteria_per_cell() {
        for k in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + k);
            let spec = random_spec_for_implication(&mut rng);
            validate_spec(&spec).unwrap();
            let check = check_implication(&spec, 1e-12).unwrap();
            assert!(
                check.premises_hold,
                "case {k}: {:?}",
                check.premise_failures
            );
            assert_eq!(
                check.conclusion_holds,
                Some(true),
                "case {k}: disparity {}",
                check.max_disparity
            );
        }
    }

    #[test]
    fn random_equivalence_populations_agree_on_both_sides() {
        for k in 0..10 {
            let violate = k % 2 == 1;
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + k);
            let spec = random_spec_for_equivalence(&mut rng, violate);
            validate_spec(&spec).unwrap();
            let check = check_equivalence(&spec, 1e-9).unwrap();
            assert!(
                check.premises_hold,
                "case {k}: {:?}",
                check.premise_failures
            );
            assert_eq!(check.pf_fair, !violate, "case {k}: pf gap {}", check.pf_gap);
            assert_eq!(
                check.criteria_fair, !violate,
                "case {k}: criteria gap {}",
                check.criteria_gap
            );
            assert_eq!(check.equivalence_holds, Some(true));
            if violate {
                assert!(check.pf_gap > 1e-5);
                assert!(check.criteria_gap > 1e-6);
            }
        }
    }

    #[test]
    fn random_identification_populations_recover_true_rates() {
        for k in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + k);
            let spec = random_spec_for_identification(&mut rng);
            validate_spec(&spec).unwrap();
            let check = check_identification(&spec, &Tolerances::default()).unwrap();
            assert!(check.premises.monotone && check.premises.covariate_decisions);
            assert!(
                check.marginal_max_deviation <= 1e-12,
                "case {k}: marginal deviation {}",
                check.marginal_max_deviation
            );
            assert!(
                check.conditional_max_deviation <= 1e-12,
                "case {k}: conditional deviation {}",
                check.conditional_max_deviation
            );
        }
    }

    #[test]
    fn pf_violations_surface_as_implication_premise_failures() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_spec_for_equivalence(&mut rng, true);
        let check = check_implication(&spec, 1e-9).unwrap();
        assert!(!check.premises_hold);
        assert!(check
            .premise_failures
            .iter()
            .any(|m| m.contains("decision rates differ")));
    }

    #[test]
    fn theorem_suites_pass_and_record_cases() {
        let tol = Tolerances::default();
        for theorem in 1..=3u8 {
            let tolerance = if theorem == 3 { 1e-12 } else { 1e-9 };
            let runs = run_theorem_cases(theorem, 6, 0, tolerance, &tol).unwrap();
            assert_eq!(runs.len(), 6);
            for run in &runs {
                assert!(
                    run.passed,
                    "theorem {theorem} case {}: {}",
                    run.case, run.detail
                );
            }
        }
        assert!(run_theorem_cases(4, 1, 0, 1e-9, &tol).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let spec = example_spec();
        let a = sample(&spec, 500, 11, true).unwrap();
        let b = sample(&spec, 500, 11, true).unwrap();
        assert_eq!(a.records, b.records);
        let c = sample(&spec, 500, 12, true).unwrap();
        assert_ne!(a.records, c.records);

        for record in &a.records {
            let stratum = record.stratum.expect("latent draw requested");
            assert_eq!(record.outcome, stratum.realized_outcome(record.decision));
            assert!(record.group == "A" || record.group == "B");
        }
        let without = sample(&spec, 50, 11, false).unwrap();
        assert!(without.records.iter().all(|r| r.stratum.is_none()));
    }

    #[test]
    fn sampled_group_shares_track_the_spec() {
        let spec = example_spec();
        let ds = sample(&spec, 4000, 7, false).unwrap();
        let a = ds.records.iter().filter(|r| r.group == "A").count() as f64;
        let share = a / 4000.0;
        assert!((share - 0.5).abs() < 0.05, "group A share {share}");
    }

    #[test]
    fn sample_rejects_empty_requests() {
        assert!(matches!(
            sample(&example_spec(), 0, 0, false),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn atom_cap_is_enforced() {
        let err = exact_distribution_with_cap(&example_spec(), 10).unwrap_err();
        assert!(err.to_string().contains("atoms"));
    }

    fn issue_paths(err: Error) -> Vec<String> {
        match err {
            Error::Spec(issues) => issues.into_iter().map(|i| i.path).collect(),
            other => panic!("expected spec issues, got {other}"),
        }
    }

    #[test]
    fn validation_rejects_bad_sums_and_ranges() {
        let mut spec = example_spec();
        *spec.groups.get_mut("A").unwrap() = 0.4;
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"groups".to_owned()));

        let mut spec = example_spec();
        spec.strata_given_group_w
            .get_mut("A")
            .unwrap()
            .get_mut("w0")
            .unwrap()
            .safe = -0.1;
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths
            .iter()
            .any(|p| p.starts_with("strata_given_group_w.A.w0")));
    }

    #[test]
    fn validation_rejects_structural_mismatches() {
        let mut spec = example_spec();
        spec.w_given_group.remove("B");
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"w_given_group".to_owned()));

        let mut spec = example_spec();
        let renamed: BTreeMap<String, f64> = [("elsewhere".to_owned(), 1.0)].into();
        spec.w_given_group.insert("B".to_owned(), renamed);
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.iter().any(|p| p.starts_with("w_given_group")));
    }

    #[test]
    fn validation_rejects_inconsistent_decision_models() {
        let mut spec = example_spec();
        if let DecisionModel::StratumBased { rates, .. } = &spec.decision_model {
            let shared = rates.clone().unwrap();
            spec.decision_model = DecisionModel::StratumBased {
                rates: Some(shared.clone()),
                rates_by_group: Some(
                    spec.groups
                        .keys()
                        .map(|g| (g.clone(), shared.clone()))
                        .collect(),
                ),
            };
        }
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"decision_model".to_owned()));

        let mut spec = example_spec();
        spec.decision_model = DecisionModel::CovariateBased {
            rates: BTreeMap::new(), // x0 missing
        };
        spec.enforce_pf = false;
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"decision_model.rates".to_owned()));
    }

    #[test]
    fn declarations_are_verified_not_trusted() {
        // The worked example's compositions differ by group, so declaring
        // assumption 1 must fail.
        let mut spec = example_spec();
        spec.enforce_assumption1 = true;
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"enforce_assumption1".to_owned()));

        // It also has backlash mass.
        let mut spec = example_spec();
        spec.enforce_monotonicity = true;
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"enforce_monotonicity".to_owned()));

        // Covariate-based decisions cannot be declared principally fair.
        let mut spec = example_spec();
        spec.decision_model = DecisionModel::CovariateBased {
            rates: [("x0".to_owned(), 0.5)].into(),
        };
        let paths = issue_paths(validate_spec(&spec).unwrap_err());
        assert!(paths.contains(&"enforce_pf".to_owned()));
    }

    #[test]
    fn spec_json_round_trips() {
        let spec = example_spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: DgpSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        // Unknown top-level fields are rejected.
        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<DgpSpec>(value).is_err());
    }
}
