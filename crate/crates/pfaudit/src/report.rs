//! Audit orchestration and report rendering.
//!
//! [`run_audit`] drives one complete audit over a validated dataset: the
//! three statistical criteria (marginally, and per conditioning cell when
//! requested), the plug-in stratum estimates with their diagnostics, and
//! optional bootstrap intervals. The resulting [`AuditReport`] echoes every
//! setting and input digest needed to reproduce the run.
//!
//! Reports render two ways: [`render_text`] for terminals, and
//! [`to_canonical_json`] for files and pipelines. The JSON form rounds every
//! floating-point number to 12 significant digits — far above estimation
//! noise, far below double precision — so equal analyses produce
//! byte-identical output regardless of thread count or platform printing
//! quirks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{ColumnType, Dataset};
use crate::error::Error;
use crate::identify::{
    self, BootstrapConfig, BootstrapSummary, Diagnostics, EstimatorConfig, IdentifiedEstimates,
    IntervalResult, Mode, RegressionMeta, StratumRate, Tolerances,
};
use crate::metrics::{self, ConditionalCriterion, DisparityReport};
use crate::table::ObservedTable;

/// Everything an audit run needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub estimator: EstimatorConfig,
    /// Fit group-specific outcome regressions instead of pooling groups.
    pub include_group: bool,
    pub mode: Mode,
    /// Disparity at or below which a criterion passes.
    pub epsilon: f64,
    pub tolerances: Tolerances,
    pub bootstrap: Option<BootstrapConfig>,
}

/// Echo of the settings an audit ran with.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub estimator: EstimatorConfig,
    pub include_group: bool,
    pub mode: Mode,
    pub epsilon: f64,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
}

/// Digest of the dataset an audit ran on.
#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub rows: usize,
    pub group_counts: BTreeMap<String, usize>,
    pub decision_column: String,
    pub outcome_column: String,
    pub group_column: String,
    pub covariates: Vec<CovariateEcho>,
    pub condition_columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateEcho {
    pub name: String,
    pub kind: String,
}

impl InputDigest {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut group_counts: BTreeMap<String, usize> = BTreeMap::new();
        for record in &ds.records {
            *group_counts.entry(record.group.clone()).or_insert(0) += 1;
        }
        let covariates = ds
            .schema
            .covariates
            .iter()
            .zip(&ds.schema.covariate_types)
            .map(|(name, kind)| CovariateEcho {
                name: name.clone(),
                kind: match kind {
                    ColumnType::Numeric => "numeric",
                    ColumnType::Categorical => "categorical",
                }
                .to_owned(),
            })
            .collect();
        InputDigest {
            rows: ds.records.len(),
            group_counts,
            decision_column: ds.schema.decision.clone(),
            outcome_column: ds.schema.outcome.clone(),
            group_column: ds.schema.group.clone(),
            covariates,
            condition_columns: ds.schema.condition.clone(),
        }
    }
}

/// Criteria evaluations: always marginal, plus per conditioning cell when
/// the audit conditions on W columns.
#[derive(Debug, Clone, Serialize)]
pub struct CriteriaSection {
    pub marginal: DisparityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_cell: Option<BTreeMap<String, DisparityReport>>,
}

/// Plug-in estimates with their diagnostics and optional intervals.
#[derive(Debug, Clone, Serialize)]
pub struct IdentificationSection {
    pub regression: RegressionMeta,
    pub estimates: IdentifiedEstimates,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
}

/// Complete output of one audit run.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub config: ConfigEcho,
    pub input: InputDigest,
    pub criteria: CriteriaSection,
    pub identification: IdentificationSection,
}

fn w_cell_label(columns: &[String], values: &[String]) -> String {
    columns
        .iter()
        .zip(values)
        .map(|(c, v)| format!("{c}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Run one complete audit.
pub fn run_audit(ds: &Dataset, opts: &AuditOptions) -> Result<AuditReport, Error> {
    let marginal = metrics::evaluate_all(&ds.observed_table(), opts.epsilon)?;
    let per_cell = match opts.mode {
        Mode::Marginal => None,
        Mode::ConditionalOnW => {
            let mut map = BTreeMap::new();
            for (values, indices) in ds.w_cells() {
                let table = ObservedTable::from_units(indices.iter().map(|&i| {
                    let r = &ds.records[i];
                    (r.group.as_str(), r.decision, r.outcome)
                }));
                map.insert(
                    w_cell_label(&ds.schema.condition, &values),
                    metrics::evaluate_all(&table, opts.epsilon)?,
                );
            }
            Some(map)
        }
    };

    let regression = identify::fit(ds, &opts.estimator, opts.include_group)?;
    let (estimates, diagnostics) =
        identify::identify_rates(ds, &regression, opts.mode, &opts.tolerances)?;
    if estimates.cells.iter().all(|c| c.stratum_probs.is_none()) {
        return Err(Error::Unidentifiable(
            "no cell produced identified estimates: every cell lacks regression predictions \
             in at least one decision arm"
                .to_owned(),
        ));
    }
    let bootstrap = match &opts.bootstrap {
        Some(cfg) => Some(identify::bootstrap(
            ds,
            &opts.estimator,
            opts.include_group,
            opts.mode,
            &opts.tolerances,
            &estimates,
            cfg,
        )?),
        None => None,
    };

    Ok(AuditReport {
        config: ConfigEcho {
            estimator: opts.estimator,
            include_group: opts.include_group,
            mode: opts.mode,
            epsilon: opts.epsilon,
            tolerances: opts.tolerances,
            bootstrap: opts.bootstrap,
        },
        input: InputDigest::from_dataset(ds),
        criteria: CriteriaSection { marginal, per_cell },
        identification: IdentificationSection {
            regression: regression.meta().clone(),
            estimates,
            diagnostics,
            bootstrap,
        },
    })
}

/// Round to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_numbers(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if n.is_f64() {
                if let Some(f) = n.as_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig(f)) {
                        *value = serde_json::Value::Number(rounded);
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_numbers),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

/// Serialize to pretty JSON with every floating-point number rounded to 12
/// significant digits, so identical analyses print identically everywhere.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut v = serde_json::to_value(value)?;
    round_numbers(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

fn fmt(v: f64) -> String {
    format!("{:.6}", round_sig(v))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_else(|| "undefined".to_owned())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn push_conditional(
    out: &mut String,
    indent: &str,
    name: &str,
    arm_name: &str,
    criterion: &ConditionalCriterion,
    pass: bool,
) {
    out.push_str(&format!(
        "{indent}{name:<16} gap {}  {}\n",
        fmt(criterion.max_disparity),
        verdict(pass)
    ));
    for arm in 0..2 {
        let values: Vec<String> = criterion
            .value_by_group
            .iter()
            .map(|(g, v)| format!("{g} {}", fmt_opt(v[arm])))
            .collect();
        out.push_str(&format!(
            "{indent}  {arm_name}={arm}: {}\n",
            values.join(", ")
        ));
    }
    if !criterion.undefined.is_empty() {
        let cells: Vec<String> = criterion
            .undefined
            .iter()
            .map(|(g, arm)| format!("{g} ({arm_name}={})", *arm as u8))
            .collect();
        out.push_str(&format!(
            "{indent}  excluded as undefined: {}\n",
            cells.join(", ")
        ));
    }
}

fn push_criteria(out: &mut String, indent: &str, report: &DisparityReport) {
    out.push_str(&format!(
        "{indent}{:<16} gap {}  {}\n",
        "overall parity",
        fmt(report.overall.disparity),
        verdict(report.overall_pass)
    ));
    for (g, rate) in &report.overall.rate_by_group {
        out.push_str(&format!("{indent}  {g}: {}\n", fmt(*rate)));
    }
    push_conditional(
        out,
        indent,
        "calibration",
        "decision",
        &report.calibration,
        report.calibration_pass,
    );
    push_conditional(
        out,
        indent,
        "accuracy",
        "outcome",
        &report.accuracy,
        report.accuracy_pass,
    );
    out.push_str(&format!(
        "{indent}verdict: {} (epsilon {})\n",
        verdict(report.all_pass),
        report.epsilon
    ));
}

fn rate_text(rate: &Option<StratumRate>, interval: Option<&IntervalResult>) -> String {
    let mut text = match rate {
        Some(r) => {
            let mut t = fmt(r.clipped);
            if r.raw != r.clipped {
                t.push_str(&format!(" (raw {})", fmt(r.raw)));
            }
            t
        }
        None => "withheld (denominator below floor)".to_owned(),
    };
    match interval {
        Some(IntervalResult::Interval { lower, upper, .. }) => {
            text.push_str(&format!("  CI [{}, {}]", fmt(*lower), fmt(*upper)));
        }
        Some(IntervalResult::Unavailable { failures }) => {
            text.push_str(&format!("  CI unavailable ({failures} failed replicates)"));
        }
        None => {}
    }
    text
}

fn cell_warnings(key: &str, diagnostics: &Diagnostics) -> Vec<String> {
    let mut warnings = Vec::new();
    if let Some(m) = diagnostics.monotonicity.cells.get(key) {
        if m.negative_preventable_mass {
            warnings.push("negative preventable mass (monotonicity suspect)".to_owned());
        }
        if !m.rate_out_of_range.is_empty() {
            warnings.push(format!(
                "raw rates outside [0, 1]: {}",
                m.rate_out_of_range.join(", ")
            ));
        }
    }
    if let Some(e) = diagnostics.estimation.cells.get(key) {
        if e.small_cell {
            warnings.push(format!(
                "small cell (fewer than {} units)",
                diagnostics.estimation.small_cell_threshold
            ));
        }
        if e.missing_predictions > 0 {
            warnings.push(format!(
                "{} unit-arm pairs lacked regression predictions",
                e.missing_predictions
            ));
        }
    }
    warnings
}

fn estimator_text(estimator: &EstimatorConfig) -> String {
    match estimator {
        EstimatorConfig::Frequency(f) => {
            format!("saturated frequency (alpha = {})", f.alpha)
        }
        EstimatorConfig::Logistic(l) => format!(
            "logistic regression (max {} iterations, tolerance {:e})",
            l.max_iter, l.tol
        ),
    }
}

fn mode_text(mode: Mode) -> &'static str {
    match mode {
        Mode::Marginal => "marginal",
        Mode::ConditionalOnW => "conditional on designated columns",
    }
}

/// Render a full audit report for a terminal.
pub fn render_text(report: &AuditReport) -> String {
    let mut out = String::new();
    out.push_str("principal fairness audit\n");
    out.push_str("========================\n\n");

    out.push_str("input\n");
    out.push_str(&format!("  rows: {}\n", report.input.rows));
    let groups: Vec<String> = report
        .input
        .group_counts
        .iter()
        .map(|(g, n)| format!("{g} ({n})"))
        .collect();
    out.push_str(&format!("  groups: {}\n", groups.join(", ")));
    if !report.input.condition_columns.is_empty() {
        out.push_str(&format!(
            "  conditioning columns: {}\n",
            report.input.condition_columns.join(", ")
        ));
    }

    out.push_str("\nsettings\n");
    out.push_str(&format!(
        "  estimator: {}\n",
        estimator_text(&report.config.estimator)
    ));
    out.push_str(&format!(
        "  regression pooling: {}\n",
        if report.config.include_group {
            "group-specific"
        } else {
            "group-pooled"
        }
    ));
    out.push_str(&format!("  mode: {}\n", mode_text(report.config.mode)));
    out.push_str(&format!("  epsilon: {}\n", report.config.epsilon));

    out.push_str("\ncriteria (marginal)\n");
    push_criteria(&mut out, "  ", &report.criteria.marginal);
    if let Some(per_cell) = &report.criteria.per_cell {
        for (label, cell_report) in per_cell {
            out.push_str(&format!("\ncriteria (cell {label})\n"));
            push_criteria(&mut out, "  ", cell_report);
        }
    }

    let ident = &report.identification;
    out.push_str(&format!(
        "\nidentification ({}, denominator floor {:e})\n",
        mode_text(ident.estimates.mode),
        ident.diagnostics.estimation.denominator_floor
    ));
    if !ident.regression.dropped_columns.is_empty() {
        out.push_str(&format!(
            "  dropped design columns: {}\n",
            ident.regression.dropped_columns.join(", ")
        ));
    }
    if ident.regression.converged == Some(false) {
        out.push_str("  warning: regression did not converge within its iteration budget\n");
    }
    for cell in &ident.estimates.cells {
        let key = cell.key();
        out.push_str(&format!("  cell {key}  (n = {})\n", cell.n));
        match &cell.stratum_probs {
            Some(p) => out.push_str(&format!(
                "    stratum shares: safe {}, preventable {}, dangerous {}\n",
                fmt(p.safe),
                fmt(p.preventable),
                fmt(p.dangerous)
            )),
            None => out.push_str("    stratum shares: unavailable\n"),
        }
        let intervals = ident.bootstrap.as_ref().and_then(|b| b.cells.get(&key));
        for (label, quantity, rate) in [
            ("safe", "rate_safe", &cell.rate_safe),
            ("preventable", "rate_preventable", &cell.rate_preventable),
            ("dangerous", "rate_dangerous", &cell.rate_dangerous),
        ] {
            let interval = intervals.and_then(|m| m.get(quantity));
            out.push_str(&format!(
                "    decision rate, {label:<12} {}\n",
                rate_text(rate, interval)
            ));
        }
        let warnings = cell_warnings(&key, &ident.diagnostics);
        if !warnings.is_empty() {
            out.push_str(&format!("    warnings: {}\n", warnings.join("; ")));
        }
    }
    if !ident.diagnostics.monotonicity.any_flagged {
        out.push_str("  monotonicity diagnostics: no flags\n");
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::identify::{FrequencyConfig, StatisticSelector};
    use crate::simulate;
    use rand::SeedableRng;

    fn demo_options() -> AuditOptions {
        AuditOptions {
            estimator: EstimatorConfig::Frequency(FrequencyConfig { alpha: 0.0 }),
            include_group: true,
            mode: Mode::Marginal,
            epsilon: 0.05,
            tolerances: Tolerances::default(),
            bootstrap: None,
        }
    }

    #[test]
    fn audit_of_the_worked_example_flags_its_disparities() {
        let ds = demo::example_dataset();
        let report = run_audit(&ds, &demo_options()).unwrap();
        assert_eq!(report.input.rows, 1000);
        assert_eq!(report.input.group_counts["A"], 500);
        assert!(!report.criteria.marginal.all_pass);
        assert!((report.criteria.marginal.overall.rate_by_group["A"] - 0.5).abs() < 1e-15);
        assert!((report.criteria.marginal.overall.rate_by_group["B"] - 0.44).abs() < 1e-15);
        // The worked example has backlash mass, and the diagnostics see it.
        assert!(report.identification.diagnostics.monotonicity.any_flagged);
    }

    #[test]
    fn conditional_audits_report_per_cell_criteria() {
        let spec =
            simulate::random_spec_for_implication(&mut rand_chacha::ChaCha8Rng::seed_from_u64(17));
        let ds = simulate::sample(&spec, 600, 3, false).unwrap();
        let mut opts = demo_options();
        opts.mode = Mode::ConditionalOnW;
        opts.include_group = false;
        let report = run_audit(&ds, &opts).unwrap();
        let per_cell = report.criteria.per_cell.as_ref().unwrap();
        assert!(!per_cell.is_empty());
        for label in per_cell.keys() {
            assert!(label.starts_with("w="));
        }
        let cells = &report.identification.estimates.cells;
        assert!(!cells.is_empty());
        assert!(cells.iter().all(|c| c.w.len() == 1 && c.w[0].0 == "w"));
    }

    #[test]
    fn canonical_json_rounds_floats_and_is_stable() {
        #[derive(Serialize)]
        struct Probe {
            a: f64,
            b: f64,
            nested: Vec<f64>,
            n: u64,
        }
        let text = to_canonical_json(&Probe {
            a: 0.1 + 0.2,
            b: 1.0 / 3.0,
            nested: vec![2.0f64.sqrt()],
            n: 41,
        })
        .unwrap();
        assert!(text.contains("0.3,"), "{text}");
        assert!(text.contains("0.333333333333"), "{text}");
        assert!(text.contains("1.41421356237"), "{text}");
        assert!(text.contains("41"), "{text}");
    }

    #[test]
    fn round_sig_is_idempotent_and_preserves_specials() {
        for v in [0.0, -0.0, 1.0, -2.5, 0.1 + 0.2, 1e-300, f64::INFINITY] {
            let once = round_sig(v);
            assert_eq!(once, round_sig(once));
        }
        assert_eq!(round_sig(0.3), 0.3);
        assert!((round_sig(0.1 + 0.2) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn text_render_covers_every_section() {
        let ds = demo::example_dataset();
        let mut opts = demo_options();
        opts.bootstrap = Some(BootstrapConfig {
            replicates: 10,
            seed: 0,
            level: 0.9,
            selector: StatisticSelector::All,
        });
        let report = run_audit(&ds, &opts).unwrap();
        let text = render_text(&report);
        for needle in [
            "principal fairness audit",
            "rows: 1000",
            "overall parity",
            "calibration",
            "accuracy",
            "identification",
            "cell A",
            "cell B",
            "stratum shares",
            "CI",
        ] {
            assert!(text.contains(needle), "missing {needle:?} in:\n{text}");
        }
    }

    #[test]
    fn audit_json_round_trips_through_serde_value() {
        let ds = demo::example_dataset();
        let report = run_audit(&ds, &demo_options()).unwrap();
        let json = to_canonical_json(&report).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["criteria"]["marginal"]["all_pass"].is_boolean());
        assert!(value["identification"]["estimates"]["cells"].is_array());
    }
}
