//! Count tables over groups, strata, decisions, and outcomes.
//!
//! [`PotentialOutcomeTable`] counts units by (group, stratum, decision) and
//! describes a population whose response types are known, as in a simulation
//! or a worked example. [`ObservedTable`] counts units by (group, decision,
//! realized outcome) and is all an observational dataset reveals.
//! [`PotentialOutcomeTable::marginalize`] maps the first onto the second by
//! replacing each stratum with the outcome it realizes under the recorded
//! decision; the map loses the stratum dimension and cannot be inverted.

use std::collections::BTreeMap;

use crate::stratum::PrincipalStratum;

/// Unit counts indexed by group, principal stratum, and decision.
///
/// `counts[stratum.index()][decision as usize]` holds the number of units of
/// the group in `stratum` that received `decision`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PotentialOutcomeTable {
    counts: BTreeMap<String, [[u64; 2]; 4]>,
}

impl PotentialOutcomeTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `count` units of `group` in `stratum` that received `decision`.
    pub fn add(&mut self, group: &str, stratum: PrincipalStratum, decision: bool, count: u64) {
        let cell = &mut self.counts.entry(group.to_owned()).or_default()[stratum.index()]
            [decision as usize];
        *cell += count;
    }

    /// Count for one (group, stratum, decision) cell; zero for unknown groups.
    pub fn count(&self, group: &str, stratum: PrincipalStratum, decision: bool) -> u64 {
        self.counts
            .get(group)
            .map_or(0, |g| g[stratum.index()][decision as usize])
    }

    /// Units of `group` in `stratum`, summed over decisions.
    pub fn stratum_total(&self, group: &str, stratum: PrincipalStratum) -> u64 {
        self.count(group, stratum, false) + self.count(group, stratum, true)
    }

    /// Units of `group`, summed over strata and decisions.
    pub fn group_total(&self, group: &str) -> u64 {
        PrincipalStratum::ALL
            .iter()
            .map(|&s| self.stratum_total(group, s))
            .sum()
    }

    /// All units in the table.
    pub fn total(&self) -> u64 {
        self.groups().map(|g| self.group_total(g)).sum()
    }

    /// Group labels in sorted order.
    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Build from per-unit observations with known strata.
    pub fn from_units<'a>(
        units: impl IntoIterator<Item = (&'a str, PrincipalStratum, bool)>,
    ) -> Self {
        let mut table = Self::new();
        for (group, stratum, decision) in units {
            table.add(group, stratum, decision, 1);
        }
        table
    }

    /// Collapse the stratum dimension into realized outcomes.
    ///
    /// Each (group, stratum, decision) count lands in the observed cell
    /// (group, decision, `stratum.realized_outcome(decision)`).
    pub fn marginalize(&self) -> ObservedTable {
        let mut observed = ObservedTable::new();
        for (group, cells) in &self.counts {
            for stratum in PrincipalStratum::ALL {
                for decision in [false, true] {
                    let n = cells[stratum.index()][decision as usize];
                    if n > 0 {
                        observed.add(group, decision, stratum.realized_outcome(decision), n);
                    }
                }
            }
        }
        // Keep groups whose counts are all zero visible in the observed view.
        for group in self.counts.keys() {
            observed.counts.entry(group.clone()).or_default();
        }
        observed
    }
}

/// Unit counts indexed by group, decision, and realized outcome.
///
/// `counts[decision as usize][outcome as usize]` holds the number of units of
/// the group with that decision and realized outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObservedTable {
    counts: BTreeMap<String, [[u64; 2]; 2]>,
}

impl ObservedTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `count` units of `group` with `decision` and realized `outcome`.
    pub fn add(&mut self, group: &str, decision: bool, outcome: bool, count: u64) {
        let cell = &mut self.counts.entry(group.to_owned()).or_default()[decision as usize]
            [outcome as usize];
        *cell += count;
    }

    /// Count for one (group, decision, outcome) cell; zero for unknown groups.
    pub fn count(&self, group: &str, decision: bool, outcome: bool) -> u64 {
        self.counts
            .get(group)
            .map_or(0, |g| g[decision as usize][outcome as usize])
    }

    /// Units of `group` with `decision`, summed over outcomes.
    pub fn decision_total(&self, group: &str, decision: bool) -> u64 {
        self.count(group, decision, false) + self.count(group, decision, true)
    }

    /// Units of `group` with realized `outcome`, summed over decisions.
    pub fn outcome_total(&self, group: &str, outcome: bool) -> u64 {
        self.count(group, false, outcome) + self.count(group, true, outcome)
    }

    /// Units of `group`.
    pub fn group_total(&self, group: &str) -> u64 {
        self.decision_total(group, false) + self.decision_total(group, true)
    }

    /// All units in the table.
    pub fn total(&self) -> u64 {
        self.groups().map(|g| self.group_total(g)).sum()
    }

    /// Group labels in sorted order.
    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Build from per-unit observations.
    pub fn from_units<'a>(units: impl IntoIterator<Item = (&'a str, bool, bool)>) -> Self {
        let mut table = Self::new();
        for (group, decision, outcome) in units {
            table.add(group, decision, outcome, 1);
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn marginalize_collapses_strata_into_realized_outcomes() {
        // One unit per (stratum, decision) cell: every observed cell must end
        // up with exactly two units, one from each stratum that realizes the
        // same outcome under that decision.
        let mut table = PotentialOutcomeTable::new();
        for stratum in PrincipalStratum::ALL {
            for decision in [false, true] {
                table.add("g", stratum, decision, 1);
            }
        }
        let observed = table.marginalize();
        for decision in [false, true] {
            for outcome in [false, true] {
                assert_eq!(observed.count("g", decision, outcome), 2);
            }
        }
        assert_eq!(observed.total(), 8);
    }

    #[test]
    fn marginalize_example_population() {
        // Frozen expected counts for the built-in example population, derived
        // by hand from its stratum-level composition.
        let observed = demo::example_population().marginalize();

        assert_eq!(observed.count("A", true, true), 150);
        assert_eq!(observed.count("A", true, false), 100);
        assert_eq!(observed.count("A", false, true), 100);
        assert_eq!(observed.count("A", false, false), 150);

        assert_eq!(observed.count("B", true, true), 100);
        assert_eq!(observed.count("B", true, false), 120);
        assert_eq!(observed.count("B", false, true), 100);
        assert_eq!(observed.count("B", false, false), 180);

        assert_eq!(observed.total(), 1000);
    }

    #[test]
    fn marginalize_preserves_group_totals() {
        let table = demo::example_population();
        let observed = table.marginalize();
        for group in ["A", "B"] {
            assert_eq!(table.group_total(group), observed.group_total(group));
        }
    }

    #[test]
    fn from_units_counts_each_unit_once() {
        let units = [
            ("a", PrincipalStratum::Safe, false),
            ("a", PrincipalStratum::Safe, false),
            ("b", PrincipalStratum::Dangerous, true),
        ];
        let table = PotentialOutcomeTable::from_units(units);
        assert_eq!(table.count("a", PrincipalStratum::Safe, false), 2);
        assert_eq!(table.count("b", PrincipalStratum::Dangerous, true), 1);
        assert_eq!(table.count("b", PrincipalStratum::Safe, false), 0);
        assert_eq!(table.total(), 3);
    }

    #[test]
    fn groups_iterate_in_sorted_order() {
        let mut table = ObservedTable::new();
        table.add("zeta", false, false, 1);
        table.add("alpha", true, true, 1);
        table.add("mid", false, true, 1);
        let groups: Vec<_> = table.groups().collect();
        assert_eq!(groups, vec!["alpha", "mid", "zeta"]);
    }
}
