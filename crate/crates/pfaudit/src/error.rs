//! Error types shared across the crate.
//!
//! Validation walks the whole input and collects every problem it finds
//! before reporting, so callers see all row-level issues at once instead of
//! fixing them one re-run at a time.

use std::fmt;

/// A single problem found while validating tabular input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    /// Zero-based data-row index (the header does not count); `None` for
    /// schema-level issues such as a missing column.
    pub row: Option<usize>,
    /// Column the issue refers to, when one applies.
    pub column: Option<String>,
    /// Human-readable reason.
    pub reason: String,
}

impl ValidationIssue {
    pub fn schema(column: impl Into<String>, reason: impl Into<String>) -> Self {
        ValidationIssue {
            row: None,
            column: Some(column.into()),
            reason: reason.into(),
        }
    }

    pub fn row(row: usize, column: impl Into<String>, reason: impl Into<String>) -> Self {
        ValidationIssue {
            row: Some(row),
            column: Some(column.into()),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.row, &self.column) {
            (Some(r), Some(c)) => write!(f, "row {r}, column \"{c}\": {}", self.reason),
            (Some(r), None) => write!(f, "row {r}: {}", self.reason),
            (None, Some(c)) => write!(f, "column \"{c}\": {}", self.reason),
            (None, None) => write!(f, "{}", self.reason),
        }
    }
}

/// A single problem found while validating a simulation spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecIssue {
    /// Dotted path into the spec document, e.g. `strata_given_group_w.A.w0`.
    pub path: String,
    /// Human-readable reason.
    pub reason: String,
}

impl SpecIssue {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        SpecIssue {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for SpecIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

fn join_issues<T: fmt::Display>(label: &str, issues: &[T]) -> String {
    let mut s = format!(
        "{label} ({} issue{})",
        issues.len(),
        if issues.len() == 1 { "" } else { "s" }
    );
    for issue in issues {
        s.push_str("\n  - ");
        s.push_str(&issue.to_string());
    }
    s
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Input data failed validation. Every issue is collected before reporting.
    #[error("{}", join_issues("invalid dataset", .0))]
    Validation(Vec<ValidationIssue>),

    /// A simulation spec failed validation.
    #[error("{}", join_issues("invalid spec", .0))]
    Spec(Vec<SpecIssue>),

    /// A model fit failed (separation, collinear design, degenerate data).
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// None of the requested quantities can be identified from the data.
    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    /// An operation was called with arguments that violate its preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Short machine-readable kind tag used in CLI error prefixes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Validation(_) => "validation",
            Error::Spec(_) => "spec",
            Error::Estimation(_) => "estimation",
            Error::Unidentifiable(_) => "unidentifiable",
            Error::InvalidArgument(_) => "usage",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_issue_display_includes_location() {
        let issue = ValidationIssue::row(3, "decision", "expected \"0\" or \"1\", got \"yes\"");
        assert_eq!(
            issue.to_string(),
            "row 3, column \"decision\": expected \"0\" or \"1\", got \"yes\""
        );
    }

    #[test]
    fn error_lists_every_issue() {
        let err = Error::Validation(vec![
            ValidationIssue::schema("group", "column not found in header"),
            ValidationIssue::row(0, "outcome", "missing value"),
        ]);
        let msg = err.to_string();
        assert!(msg.contains("2 issues"));
        assert!(msg.contains("column \"group\""));
        assert!(msg.contains("row 0"));
    }
}
