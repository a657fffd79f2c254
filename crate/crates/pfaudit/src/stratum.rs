//! Principal strata for a binary decision and a binary adverse outcome.
//!
//! Each unit carries two potential outcomes: `Y(1)`, the outcome if the
//! decision is taken (e.g. the person is detained), and `Y(0)`, the outcome
//! if it is not. The pair `(Y(1), Y(0))` is the unit's response type, and the
//! four possible pairs partition any population into strata that describe how
//! the outcome responds to the decision. Only one potential outcome is ever
//! observed: the realized outcome is `Y(D)` for the decision `D` actually
//! taken, so stratum membership is latent in observational data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Response type `(Y(1), Y(0))` of a unit under a binary decision.
///
/// The discriminant encodes the potential outcomes as `2 * Y(1) + Y(0)`,
/// which fixes the canonical ordering used by tables, reports, and iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrincipalStratum {
    /// `(0, 0)`: no adverse outcome whether or not the decision is taken.
    Safe = 0,
    /// `(0, 1)`: the decision prevents an adverse outcome that would
    /// otherwise occur.
    Preventable = 1,
    /// `(1, 0)`: the decision itself brings the adverse outcome about.
    Backlash = 2,
    /// `(1, 1)`: the adverse outcome occurs either way.
    Dangerous = 3,
}

impl PrincipalStratum {
    /// All strata in canonical order.
    pub const ALL: [PrincipalStratum; 4] = [
        PrincipalStratum::Safe,
        PrincipalStratum::Preventable,
        PrincipalStratum::Backlash,
        PrincipalStratum::Dangerous,
    ];

    /// Strata compatible with monotonicity (a decision that never causes the
    /// adverse outcome), i.e. everything except [`PrincipalStratum::Backlash`].
    pub const MONOTONE: [PrincipalStratum; 3] = [
        PrincipalStratum::Safe,
        PrincipalStratum::Preventable,
        PrincipalStratum::Dangerous,
    ];

    /// Stratum with potential outcomes `Y(1) = y_with` and `Y(0) = y_without`.
    pub fn from_potentials(y_with: bool, y_without: bool) -> Self {
        match (y_with, y_without) {
            (false, false) => PrincipalStratum::Safe,
            (false, true) => PrincipalStratum::Preventable,
            (true, false) => PrincipalStratum::Backlash,
            (true, true) => PrincipalStratum::Dangerous,
        }
    }

    /// The outcome observed when `decision` is applied to a unit of this
    /// stratum: `Y(1)` if the decision is taken, `Y(0)` otherwise.
    pub fn realized_outcome(self, decision: bool) -> bool {
        if decision {
            self.y_with_decision()
        } else {
            self.y_without_decision()
        }
    }

    /// Potential outcome `Y(1)`.
    pub fn y_with_decision(self) -> bool {
        matches!(
            self,
            PrincipalStratum::Backlash | PrincipalStratum::Dangerous
        )
    }

    /// Potential outcome `Y(0)`.
    pub fn y_without_decision(self) -> bool {
        matches!(
            self,
            PrincipalStratum::Preventable | PrincipalStratum::Dangerous
        )
    }

    /// Position in the canonical ordering (`Safe = 0`, ..., `Dangerous = 3`).
    pub fn index(self) -> usize {
        self as usize
    }

    /// Lowercase name used in files and reports.
    pub fn name(self) -> &'static str {
        match self {
            PrincipalStratum::Safe => "safe",
            PrincipalStratum::Preventable => "preventable",
            PrincipalStratum::Backlash => "backlash",
            PrincipalStratum::Dangerous => "dangerous",
        }
    }
}

impl fmt::Display for PrincipalStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrincipalStratum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "safe" => Ok(PrincipalStratum::Safe),
            "preventable" => Ok(PrincipalStratum::Preventable),
            "backlash" => Ok(PrincipalStratum::Backlash),
            "dangerous" => Ok(PrincipalStratum::Dangerous),
            other => Err(format!(
                "unknown stratum \"{other}\" (expected safe, preventable, backlash, or dangerous)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potentials_round_trip() {
        for stratum in PrincipalStratum::ALL {
            let again = PrincipalStratum::from_potentials(
                stratum.realized_outcome(true),
                stratum.realized_outcome(false),
            );
            assert_eq!(again, stratum);
        }
    }

    #[test]
    fn realized_outcomes_match_definitions() {
        assert!(!PrincipalStratum::Safe.realized_outcome(true));
        assert!(!PrincipalStratum::Safe.realized_outcome(false));
        assert!(!PrincipalStratum::Preventable.realized_outcome(true));
        assert!(PrincipalStratum::Preventable.realized_outcome(false));
        assert!(PrincipalStratum::Backlash.realized_outcome(true));
        assert!(!PrincipalStratum::Backlash.realized_outcome(false));
        assert!(PrincipalStratum::Dangerous.realized_outcome(true));
        assert!(PrincipalStratum::Dangerous.realized_outcome(false));
    }

    #[test]
    fn canonical_order_encodes_potentials() {
        for stratum in PrincipalStratum::ALL {
            let code =
                2 * stratum.y_with_decision() as usize + stratum.y_without_decision() as usize;
            assert_eq!(stratum.index(), code);
        }
    }

    #[test]
    fn names_round_trip() {
        for stratum in PrincipalStratum::ALL {
            assert_eq!(stratum.name().parse::<PrincipalStratum>(), Ok(stratum));
        }
        assert!("hazardous".parse::<PrincipalStratum>().is_err());
    }

    #[test]
    fn serde_uses_lowercase_names() {
        let json = serde_json::to_string(&PrincipalStratum::Preventable).unwrap();
        assert_eq!(json, "\"preventable\"");
        let back: PrincipalStratum = serde_json::from_str("\"dangerous\"").unwrap();
        assert_eq!(back, PrincipalStratum::Dangerous);
    }
}
