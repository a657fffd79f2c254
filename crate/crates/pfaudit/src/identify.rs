//! Plug-in identification of per-stratum decision rates from observed data.
//!
//! Stratum membership is latent, but under two assumptions the decision rate
//! within each stratum becomes a function of observable quantities. The
//! assumptions are monotonicity (the decision never causes the adverse
//! outcome, so the backlash stratum is empty) and outcome unconfoundedness
//! (each potential outcome is independent of the decision given the
//! covariates X). Everything then reduces to an outcome regression
//! `g(d, x) = Pr(outcome = 1 | decision = d, X = x)` fit once on the full
//! data, and per-cell empirical frequencies, where a reporting cell is a
//! group (marginal mode) or a group crossed with a conditioning-covariate
//! value (conditional mode).
//!
//! Writing `m_d` for the within-cell average of `g(d, x)` over units and
//! `P(..)` for within-cell empirical frequencies, the estimates are:
//!
//! - stratum shares: safe `1 - m_0`, preventable `m_0 - m_1`, dangerous
//!   `m_1` (they sum to one by construction);
//! - decision rate among the safe: `1 - P(decision = 0, outcome = 0) / (1 - m_0)`;
//! - decision rate among the preventable: `(m_0 - P(outcome = 1)) / (m_0 - m_1)`;
//! - decision rate among the dangerous: `P(decision = 1, outcome = 1) / m_1`.
//!
//! Raw estimates are reported next to clipped-to-[0, 1] versions, and a rate
//! whose denominator falls below a configurable floor is reported as
//! unidentifiable rather than divided out. When the assumptions fail the raw
//! values drift outside their logical ranges; [`monotonicity_diagnostics`]
//! turns that drift into explicit flags. The backlash stratum is never
//! reported here: it is empty under the assumptions that make these formulas
//! valid, and evidence against that is exactly what the diagnostics surface.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{ColumnType, Dataset, UnitRecord, Value};
use crate::error::Error;
use crate::logistic;

/// Which outcome-regression estimator to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorConfig {
    /// Saturated cell frequencies with additive smoothing.
    Frequency(FrequencyConfig),
    /// Logistic regression with optional decision interactions.
    Logistic(LogisticConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyConfig {
    /// Additive smoothing: a cell with `k` positives among `n` units predicts
    /// `(k + alpha) / (n + 2 alpha)`. With `alpha = 0` an empty cell has no
    /// prediction; with `alpha > 0` it predicts 0.5.
    pub alpha: f64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig { alpha: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogisticConfig {
    pub max_iter: usize,
    /// Convergence threshold on the largest coefficient update.
    pub tol: f64,
    /// Include decision-by-regressor interactions so the two decision arms
    /// get separate coefficients.
    pub interactions: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_iter: 100,
            tol: 1e-10,
            interactions: true,
        }
    }
}

/// Estimator kind tag recorded in fit metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Frequency,
    Logistic,
}

/// Fit metadata carried by every regression.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionMeta {
    pub kind: EstimatorKind,
    /// Smoothing used by the frequency estimator.
    pub alpha: Option<f64>,
    /// Whether the group label was included among the regressors.
    pub include_group: bool,
    /// Newton iterations used by the logistic estimator.
    pub iterations: Option<usize>,
    /// Whether the logistic fit met its convergence criterion.
    pub converged: Option<bool>,
    /// Design columns dropped for being constant in the data.
    pub dropped_columns: Vec<String>,
}

/// A fitted outcome regression `g(d, x) = Pr(outcome = 1 | decision = d, x)`.
#[derive(Debug, Clone)]
pub struct OutcomeRegression {
    inner: RegressionInner,
    meta: RegressionMeta,
}

#[derive(Debug, Clone)]
enum RegressionInner {
    Frequency {
        alpha: f64,
        include_group: bool,
        cells: BTreeMap<(bool, Vec<String>), CellCount>,
    },
    Logistic {
        design: DesignInfo,
        beta: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default)]
struct CellCount {
    positives: u64,
    total: u64,
}

impl OutcomeRegression {
    pub fn meta(&self) -> &RegressionMeta {
        &self.meta
    }

    /// Predicted Pr(outcome = 1) for a unit's covariates under `decision`.
    ///
    /// `None` when the estimator has no prediction for the unit (an unseen or
    /// empty frequency cell with `alpha = 0`); logistic predictions are
    /// always defined.
    pub fn predict(&self, decision: bool, record: &UnitRecord) -> Option<f64> {
        match &self.inner {
            RegressionInner::Frequency {
                alpha,
                include_group,
                cells,
            } => {
                let key = (decision, frequency_key(record, *include_group));
                let cell = cells.get(&key).copied().unwrap_or_default();
                if cell.total == 0 && *alpha == 0.0 {
                    None
                } else {
                    Some((cell.positives as f64 + alpha) / (cell.total as f64 + 2.0 * alpha))
                }
            }
            RegressionInner::Logistic { design, beta } => {
                let row = design.encode(record, decision);
                let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
                Some(logistic::sigmoid(eta))
            }
        }
    }
}

fn frequency_key(record: &UnitRecord, include_group: bool) -> Vec<String> {
    let mut key = Vec::with_capacity(record.covariates.len() + include_group as usize);
    if include_group {
        key.push(record.group.clone());
    }
    for value in &record.covariates {
        key.push(match value {
            Value::Cat(s) => s.clone(),
            Value::Num(_) => unreachable!("frequency fits reject numeric covariates"),
        });
    }
    key
}

/// Fit the saturated frequency estimator: one cell per observed combination
/// of decision, covariates, and (by default) group.
pub fn fit_frequency_regression(
    ds: &Dataset,
    alpha: f64,
    include_group: bool,
) -> Result<OutcomeRegression, Error> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be a nonnegative finite number, got {alpha}"
        )));
    }
    if let Some(k) = ds
        .schema
        .covariate_types
        .iter()
        .position(|t| *t == ColumnType::Numeric)
    {
        return Err(Error::Estimation(format!(
            "the frequency estimator needs categorical covariates but \"{}\" is numeric; \
             discretize it, override its type, or use the logistic estimator",
            ds.schema.covariates[k]
        )));
    }
    let mut cells: BTreeMap<(bool, Vec<String>), CellCount> = BTreeMap::new();
    for record in &ds.records {
        let cell = cells
            .entry((record.decision, frequency_key(record, include_group)))
            .or_default();
        cell.total += 1;
        cell.positives += record.outcome as u64;
    }
    Ok(OutcomeRegression {
        inner: RegressionInner::Frequency {
            alpha,
            include_group,
            cells,
        },
        meta: RegressionMeta {
            kind: EstimatorKind::Frequency,
            alpha: Some(alpha),
            include_group,
            iterations: None,
            converged: None,
            dropped_columns: Vec::new(),
        },
    })
}

/// Fit the logistic estimator on intercept, decision, covariates, group
/// dummies (by default), and decision interactions (when configured).
pub fn fit_logistic_regression(
    ds: &Dataset,
    config: &LogisticConfig,
    include_group: bool,
) -> Result<OutcomeRegression, Error> {
    if ds.records.is_empty() {
        return Err(Error::Estimation(
            "cannot fit a regression on an empty dataset".to_owned(),
        ));
    }
    let (design, dropped) = build_design(ds, include_group, config.interactions);
    let xs: Vec<Vec<f64>> = ds
        .records
        .iter()
        .map(|r| design.encode(r, r.decision))
        .collect();
    let ys: Vec<bool> = ds.records.iter().map(|r| r.outcome).collect();
    let fit = logistic::fit_irls(&xs, &ys, config.max_iter, config.tol)?;
    Ok(OutcomeRegression {
        inner: RegressionInner::Logistic {
            design,
            beta: fit.beta,
        },
        meta: RegressionMeta {
            kind: EstimatorKind::Logistic,
            alpha: None,
            include_group,
            iterations: Some(fit.iterations),
            converged: Some(fit.converged),
            dropped_columns: dropped,
        },
    })
}

/// Fit whichever estimator the config selects.
pub fn fit(
    ds: &Dataset,
    config: &EstimatorConfig,
    include_group: bool,
) -> Result<OutcomeRegression, Error> {
    match config {
        EstimatorConfig::Frequency(c) => fit_frequency_regression(ds, c.alpha, include_group),
        EstimatorConfig::Logistic(c) => fit_logistic_regression(ds, c, include_group),
    }
}

#[derive(Debug, Clone)]
struct DesignInfo {
    columns: Vec<DesignColumn>,
}

#[derive(Debug, Clone)]
enum DesignColumn {
    Intercept,
    Decision,
    Base(BaseColumn),
    /// Decision-by-base interaction.
    Interaction(BaseColumn),
}

#[derive(Debug, Clone)]
enum BaseColumn {
    Numeric { cov: usize },
    Level { cov: usize, level: String },
    Group { level: String },
}

impl BaseColumn {
    fn value(&self, record: &UnitRecord) -> f64 {
        match self {
            BaseColumn::Numeric { cov } => record.covariates[*cov]
                .as_number()
                .expect("numeric design column over a numeric covariate"),
            BaseColumn::Level { cov, level } => {
                (record.covariates[*cov].as_category() == Some(level.as_str())) as u8 as f64
            }
            BaseColumn::Group { level } => (record.group == *level) as u8 as f64,
        }
    }
}

impl DesignInfo {
    fn encode(&self, record: &UnitRecord, decision: bool) -> Vec<f64> {
        let d = decision as u8 as f64;
        self.columns
            .iter()
            .map(|col| match col {
                DesignColumn::Intercept => 1.0,
                DesignColumn::Decision => d,
                DesignColumn::Base(b) => b.value(record),
                DesignColumn::Interaction(b) => d * b.value(record),
            })
            .collect()
    }
}

fn build_design(
    ds: &Dataset,
    include_group: bool,
    interactions: bool,
) -> (DesignInfo, Vec<String>) {
    let mut bases = Vec::new();
    let mut dropped = Vec::new();

    for (k, name) in ds.schema.covariates.iter().enumerate() {
        match ds.schema.covariate_types[k] {
            ColumnType::Numeric => {
                let first = ds.records[0].covariates[k].as_number();
                let constant = ds
                    .records
                    .iter()
                    .all(|r| r.covariates[k].as_number() == first);
                if constant {
                    dropped.push(format!("{name} (constant)"));
                } else {
                    bases.push(BaseColumn::Numeric { cov: k });
                }
            }
            ColumnType::Categorical => {
                let mut levels: Vec<&str> = ds
                    .records
                    .iter()
                    .filter_map(|r| r.covariates[k].as_category())
                    .collect();
                levels.sort_unstable();
                levels.dedup();
                // First level is the reference; a single-level column encodes
                // nothing and is implicitly constant.
                if levels.len() < 2 {
                    dropped.push(format!("{name} (constant)"));
                }
                for level in levels.iter().skip(1) {
                    bases.push(BaseColumn::Level {
                        cov: k,
                        level: (*level).to_owned(),
                    });
                }
            }
        }
    }

    if include_group {
        if ds.groups.len() < 2 {
            dropped.push(format!("{} (constant)", ds.schema.group));
        }
        for level in ds.groups.iter().skip(1) {
            bases.push(BaseColumn::Group {
                level: level.clone(),
            });
        }
    }

    let first_decision = ds.records[0].decision;
    let decision_constant = ds.records.iter().all(|r| r.decision == first_decision);

    let mut columns = vec![DesignColumn::Intercept];
    if decision_constant {
        dropped.push(format!("{} (constant)", ds.schema.decision));
    } else {
        columns.push(DesignColumn::Decision);
    }
    columns.extend(bases.iter().cloned().map(DesignColumn::Base));
    if interactions && !decision_constant {
        columns.extend(bases.into_iter().map(DesignColumn::Interaction));
    }

    (DesignInfo { columns }, dropped)
}

/// Reporting granularity for identified rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One cell per group.
    Marginal,
    /// One cell per group and conditioning-covariate combination.
    ConditionalOnW,
}

/// Numeric guards used during identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Denominators with absolute value below this are not divided out; the
    /// affected rate is reported as unidentifiable.
    pub denominator_floor: f64,
    /// Slack for monotonicity flags: a preventable share below `-tau` or a
    /// raw rate outside `[-tau, 1 + tau]` raises a flag.
    pub monotonicity_tau: f64,
    /// Cells with fewer units than this are flagged as small.
    pub small_cell_threshold: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            denominator_floor: 1e-10,
            monotonicity_tau: 1e-9,
            small_cell_threshold: 30,
        }
    }
}

/// Estimated shares of the three monotone strata within a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumProbs {
    pub safe: f64,
    pub preventable: f64,
    pub dangerous: f64,
}

/// One identified decision rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumRate {
    /// Plug-in value as computed; may leave [0, 1] when assumptions fail.
    pub raw: f64,
    /// `raw` clipped to [0, 1] for presentation.
    pub clipped: f64,
}

impl StratumRate {
    fn new(raw: f64) -> Self {
        StratumRate {
            raw,
            clipped: raw.clamp(0.0, 1.0),
        }
    }
}

/// Plug-in rates computed from cell moments.
pub(crate) struct MomentRates {
    pub safe: Option<StratumRate>,
    pub preventable: Option<StratumRate>,
    pub dangerous: Option<StratumRate>,
    /// Strata whose denominator fell below the floor, canonical order.
    pub floored: Vec<&'static str>,
}

/// The identification formulas, shared by the data pipeline and the exact
/// distribution-level checks. Inputs are within-cell moments: the two
/// regression means and the empirical joint of decision and outcome.
pub(crate) fn rates_from_moments(
    m0: f64,
    m1: f64,
    p_d0_y0: f64,
    p_y1: f64,
    p_d1_y1: f64,
    floor: f64,
) -> MomentRates {
    let mut floored = Vec::new();
    let mut guard = |name: &'static str, denom: f64| -> bool {
        let ok = denom.abs() >= floor;
        if !ok {
            floored.push(name);
        }
        ok
    };
    let safe = guard("safe", 1.0 - m0).then(|| StratumRate::new(1.0 - p_d0_y0 / (1.0 - m0)));
    let preventable =
        guard("preventable", m0 - m1).then(|| StratumRate::new((m0 - p_y1) / (m0 - m1)));
    let dangerous = guard("dangerous", m1).then(|| StratumRate::new(p_d1_y1 / m1));
    MomentRates {
        safe,
        preventable,
        dangerous,
        floored,
    }
}

/// Identified estimates for one reporting cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellEstimates {
    pub group: String,
    /// Conditioning (column, value) pairs; empty in marginal mode.
    pub w: Vec<(String, String)>,
    /// Units in the cell.
    pub n: usize,
    /// (unit, arm) pairs without a regression prediction.
    pub missing_predictions: usize,
    /// `None` when an arm had no predictions at all in this cell.
    pub stratum_probs: Option<StratumProbs>,
    pub rate_safe: Option<StratumRate>,
    pub rate_preventable: Option<StratumRate>,
    pub rate_dangerous: Option<StratumRate>,
}

impl CellEstimates {
    /// Stable rendering of the cell key, used in diagnostics and reports.
    pub fn key(&self) -> String {
        render_cell_key(&self.group, &self.w)
    }
}

/// Render a cell key as `group` or `group|col=value,col=value`.
pub fn render_cell_key(group: &str, w: &[(String, String)]) -> String {
    if w.is_empty() {
        group.to_owned()
    } else {
        let parts: Vec<String> = w.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{group}|{}", parts.join(","))
    }
}

/// Identified per-stratum decision rates across all reporting cells.
#[derive(Debug, Clone, Serialize)]
pub struct IdentifiedEstimates {
    pub mode: Mode,
    /// Cells ordered by group, then conditioning value.
    pub cells: Vec<CellEstimates>,
}

impl IdentifiedEstimates {
    /// Look up a cell by group and conditioning values.
    pub fn cell(&self, group: &str, w: &[(String, String)]) -> Option<&CellEstimates> {
        self.cells.iter().find(|c| c.group == group && c.w == w)
    }
}

/// Monotonicity flags derived from identified estimates.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityFlags {
    pub tau: f64,
    pub cells: BTreeMap<String, MonotonicityCellFlags>,
    /// True when any cell raised any flag.
    pub any_flagged: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MonotonicityCellFlags {
    /// Estimated preventable share below `-tau`.
    pub negative_preventable_mass: bool,
    /// Strata whose raw rate lies outside `[-tau, 1 + tau]`.
    pub rate_out_of_range: Vec<String>,
}

impl MonotonicityCellFlags {
    fn flagged(&self) -> bool {
        self.negative_preventable_mass || !self.rate_out_of_range.is_empty()
    }
}

/// Estimation-quality flags that only make sense at fitting time.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationFlags {
    pub denominator_floor: f64,
    pub small_cell_threshold: usize,
    pub cells: BTreeMap<String, EstimationCellFlags>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EstimationCellFlags {
    /// Strata whose denominator fell below the floor.
    pub floored_denominator: Vec<String>,
    /// Cell has fewer units than the threshold.
    pub small_cell: bool,
    /// (unit, arm) pairs without a regression prediction.
    pub missing_predictions: usize,
}

/// All diagnostics produced alongside identification.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub monotonicity: MonotonicityFlags,
    pub estimation: EstimationFlags,
}

/// Scan identified estimates for evidence against monotonicity. Each flag is
/// raised exactly when its numeric condition holds: preventable share below
/// `-tau`, or a raw rate outside `[-tau, 1 + tau]`.
pub fn monotonicity_diagnostics(estimates: &IdentifiedEstimates, tau: f64) -> MonotonicityFlags {
    let mut cells = BTreeMap::new();
    let mut any_flagged = false;
    for cell in &estimates.cells {
        let mut flags = MonotonicityCellFlags::default();
        if let Some(probs) = &cell.stratum_probs {
            if probs.preventable < -tau {
                flags.negative_preventable_mass = true;
            }
        }
        for (name, rate) in [
            ("safe", &cell.rate_safe),
            ("preventable", &cell.rate_preventable),
            ("dangerous", &cell.rate_dangerous),
        ] {
            if let Some(r) = rate {
                if r.raw < -tau || r.raw > 1.0 + tau {
                    flags.rate_out_of_range.push(name.to_owned());
                }
            }
        }
        any_flagged |= flags.flagged();
        cells.insert(cell.key(), flags);
    }
    MonotonicityFlags {
        tau,
        cells,
        any_flagged,
    }
}

/// Estimated stratum shares for one cell, with prediction bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumProbsDetail {
    pub probs: StratumProbs,
    pub units: usize,
    pub missing_predictions: usize,
}

/// Plug-in stratum shares for one cell: the units of `group`, optionally
/// restricted to conditioning values `w` (pairs of condition column and
/// value; empty means the whole group).
pub fn stratum_probabilities(
    ds: &Dataset,
    reg: &OutcomeRegression,
    group: &str,
    w: &[(String, String)],
) -> Result<StratumProbsDetail, Error> {
    for (col, _) in w {
        if !ds.schema.condition.contains(col) {
            return Err(Error::InvalidArgument(format!(
                "\"{col}\" is not a designated conditioning column"
            )));
        }
    }
    let indices: Vec<usize> = ds
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.group == group && matches_w(ds, r, w))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::Unidentifiable(format!(
            "no units in cell {}",
            render_cell_key(group, w)
        )));
    }
    let summary = summarize_cell(ds, reg, &indices);
    match summary.probs() {
        Some(probs) => Ok(StratumProbsDetail {
            probs,
            units: indices.len(),
            missing_predictions: summary.missing,
        }),
        None => Err(Error::Unidentifiable(format!(
            "no regression predictions available in cell {}",
            render_cell_key(group, w)
        ))),
    }
}

fn matches_w(ds: &Dataset, record: &UnitRecord, w: &[(String, String)]) -> bool {
    w.iter().all(|(col, value)| {
        ds.covariate_index(col)
            .and_then(|i| record.covariates[i].as_category())
            == Some(value.as_str())
    })
}

struct CellSummary {
    n: usize,
    /// Empirical joint counts `count[decision][outcome]`.
    count: [[usize; 2]; 2],
    /// Sum and count of defined predictions per arm.
    pred_sum: [f64; 2],
    pred_n: [usize; 2],
    missing: usize,
}

impl CellSummary {
    fn mean(&self, arm: usize) -> Option<f64> {
        (self.pred_n[arm] > 0).then(|| self.pred_sum[arm] / self.pred_n[arm] as f64)
    }

    fn probs(&self) -> Option<StratumProbs> {
        let m0 = self.mean(0)?;
        let m1 = self.mean(1)?;
        Some(StratumProbs {
            safe: 1.0 - m0,
            preventable: m0 - m1,
            dangerous: m1,
        })
    }
}

fn summarize_cell(ds: &Dataset, reg: &OutcomeRegression, indices: &[usize]) -> CellSummary {
    let mut summary = CellSummary {
        n: indices.len(),
        count: [[0; 2]; 2],
        pred_sum: [0.0; 2],
        pred_n: [0; 2],
        missing: 0,
    };
    for &i in indices {
        let record = &ds.records[i];
        summary.count[record.decision as usize][record.outcome as usize] += 1;
        for (arm, decision) in [(0usize, false), (1usize, true)] {
            match reg.predict(decision, record) {
                Some(p) => {
                    summary.pred_sum[arm] += p;
                    summary.pred_n[arm] += 1;
                }
                None => summary.missing += 1,
            }
        }
    }
    summary
}

/// One reporting cell before estimation: the group label, the conditioning
/// (column, value) pairs, and the indices of the records it contains.
type CellFrame = (String, Vec<(String, String)>, Vec<usize>);

/// Identify per-stratum decision rates in every reporting cell.
///
/// Conditional mode needs designated conditioning columns and reports one
/// cell per (group, conditioning value) combination present in the data.
pub fn identify_rates(
    ds: &Dataset,
    reg: &OutcomeRegression,
    mode: Mode,
    tol: &Tolerances,
) -> Result<(IdentifiedEstimates, Diagnostics), Error> {
    if !(tol.denominator_floor > 0.0 && tol.denominator_floor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "denominator floor must be a positive finite number, got {}",
            tol.denominator_floor
        )));
    }
    if !(tol.monotonicity_tau >= 0.0 && tol.monotonicity_tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "monotonicity tolerance must be a nonnegative finite number, got {}",
            tol.monotonicity_tau
        )));
    }
    if mode == Mode::ConditionalOnW && ds.schema.condition.is_empty() {
        return Err(Error::InvalidArgument(
            "conditional mode needs at least one designated conditioning column".to_owned(),
        ));
    }

    // Reporting cells in deterministic order: group-major, then cell value.
    let mut frames: Vec<CellFrame> = Vec::new();
    match mode {
        Mode::Marginal => {
            let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, r) in ds.records.iter().enumerate() {
                by_group.entry(r.group.as_str()).or_default().push(i);
            }
            for (group, indices) in by_group {
                frames.push((group.to_owned(), Vec::new(), indices));
            }
        }
        Mode::ConditionalOnW => {
            let mut by_cell: BTreeMap<(&str, Vec<&str>), Vec<usize>> = BTreeMap::new();
            let cond = ds.condition_indices();
            for (i, r) in ds.records.iter().enumerate() {
                let w: Vec<&str> = cond
                    .iter()
                    .map(|&j| {
                        r.covariates[j]
                            .as_category()
                            .expect("conditioning columns are categorical")
                    })
                    .collect();
                by_cell.entry((r.group.as_str(), w)).or_default().push(i);
            }
            for ((group, w), indices) in by_cell {
                let w: Vec<(String, String)> = ds
                    .schema
                    .condition
                    .iter()
                    .zip(w)
                    .map(|(c, v)| (c.clone(), v.to_owned()))
                    .collect();
                frames.push((group.to_owned(), w, indices));
            }
        }
    }

    let mut cells = Vec::with_capacity(frames.len());
    let mut estimation_cells = BTreeMap::new();
    for (group, w, indices) in frames {
        let summary = summarize_cell(ds, reg, &indices);
        let n = summary.n as f64;
        let probs = summary.probs();
        let mut est_flags = EstimationCellFlags {
            small_cell: summary.n < tol.small_cell_threshold,
            missing_predictions: summary.missing,
            ..Default::default()
        };

        let (rate_safe, rate_preventable, rate_dangerous) = match (summary.mean(0), summary.mean(1))
        {
            (Some(m0), Some(m1)) => {
                let p_d0_y0 = summary.count[0][0] as f64 / n;
                let p_y1 = (summary.count[0][1] + summary.count[1][1]) as f64 / n;
                let p_d1_y1 = summary.count[1][1] as f64 / n;
                let rates =
                    rates_from_moments(m0, m1, p_d0_y0, p_y1, p_d1_y1, tol.denominator_floor);
                est_flags.floored_denominator =
                    rates.floored.iter().map(|s| (*s).to_owned()).collect();
                (rates.safe, rates.preventable, rates.dangerous)
            }
            _ => (None, None, None),
        };

        let cell = CellEstimates {
            group,
            w,
            n: summary.n,
            missing_predictions: summary.missing,
            stratum_probs: probs,
            rate_safe,
            rate_preventable,
            rate_dangerous,
        };
        estimation_cells.insert(cell.key(), est_flags);
        cells.push(cell);
    }

    let estimates = IdentifiedEstimates { mode, cells };
    let diagnostics = Diagnostics {
        monotonicity: monotonicity_diagnostics(&estimates, tol.monotonicity_tau),
        estimation: EstimationFlags {
            denominator_floor: tol.denominator_floor,
            small_cell_threshold: tol.small_cell_threshold,
            cells: estimation_cells,
        },
    };
    Ok((estimates, diagnostics))
}

/// Which quantities get bootstrap intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticSelector {
    /// Raw per-stratum decision rates.
    Rates,
    /// Stratum shares.
    Probabilities,
    /// Both.
    All,
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Two-sided interval level, e.g. 0.95.
    pub level: f64,
    pub selector: StatisticSelector,
}

/// One percentile interval, or the reason there is none.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum IntervalResult {
    Interval {
        lower: f64,
        upper: f64,
        /// Replicates in which the quantity could not be computed.
        failures: usize,
    },
    /// More than 20% of replicates failed to produce the quantity.
    Unavailable { failures: usize },
}

/// Percentile bootstrap intervals for identified quantities.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Cell key -> quantity name -> interval.
    pub cells: BTreeMap<String, BTreeMap<String, IntervalResult>>,
}

/// Unit-level percentile bootstrap around the identified estimates.
///
/// Replicate `r` draws its resample from a generator seeded with
/// (`cfg.seed`, stream `r`), so each replicate is a pure function of the
/// seed and its own index: results do not depend on thread count or
/// evaluation order. Replicates where a quantity cannot be computed (refit
/// failure, vanished cell, floored denominator) count as failures for that
/// quantity; a quantity with more than 20% failures gets no interval.
pub fn bootstrap(
    ds: &Dataset,
    estimator: &EstimatorConfig,
    include_group: bool,
    mode: Mode,
    tol: &Tolerances,
    base: &IdentifiedEstimates,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary, Error> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one replicate".to_owned(),
        ));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval level must lie strictly between 0 and 1, got {}",
            cfg.level
        )));
    }

    let quantities = quantity_names(cfg.selector);
    // Fixed universe of (cell, quantity) slots, from the full-data estimates.
    let slots: Vec<(String, &'static str)> = base
        .cells
        .iter()
        .flat_map(|cell| quantities.iter().map(move |q| (cell.key(), *q)))
        .collect();

    let n = ds.len();
    let replicate_values: Vec<BTreeMap<(String, &'static str), f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let mut records = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = rng.random_range(0..n as u64) as usize;
                records.push(ds.records[idx].clone());
            }
            let mut groups: Vec<String> = records.iter().map(|r| r.group.clone()).collect();
            groups.sort_unstable();
            groups.dedup();
            let resampled = Dataset {
                schema: ds.schema.clone(),
                records,
                groups,
            };
            let mut values = BTreeMap::new();
            if let Ok(reg) = fit(&resampled, estimator, include_group) {
                if let Ok((est, _)) = identify_rates(&resampled, &reg, mode, tol) {
                    for cell in &est.cells {
                        collect_quantities(cell, cfg.selector, &mut values);
                    }
                }
            }
            values
        })
        .collect();

    let mut cells: BTreeMap<String, BTreeMap<String, IntervalResult>> = BTreeMap::new();
    for (cell_key, quantity) in slots {
        let mut values: Vec<f64> = Vec::with_capacity(cfg.replicates);
        for replicate in &replicate_values {
            if let Some(v) = replicate.get(&(cell_key.clone(), quantity)) {
                values.push(*v);
            }
        }
        let failures = cfg.replicates - values.len();
        let result = if failures * 5 > cfg.replicates {
            IntervalResult::Unavailable { failures }
        } else {
            values.sort_by(f64::total_cmp);
            let tail = (1.0 - cfg.level) / 2.0;
            IntervalResult::Interval {
                lower: percentile(&values, tail),
                upper: percentile(&values, 1.0 - tail),
                failures,
            }
        };
        cells
            .entry(cell_key)
            .or_default()
            .insert(quantity.to_owned(), result);
    }

    Ok(BootstrapSummary {
        replicates: cfg.replicates,
        seed: cfg.seed,
        level: cfg.level,
        cells,
    })
}

fn quantity_names(selector: StatisticSelector) -> Vec<&'static str> {
    match selector {
        StatisticSelector::Rates => vec!["rate_safe", "rate_preventable", "rate_dangerous"],
        StatisticSelector::Probabilities => {
            vec!["prob_safe", "prob_preventable", "prob_dangerous"]
        }
        StatisticSelector::All => vec![
            "rate_safe",
            "rate_preventable",
            "rate_dangerous",
            "prob_safe",
            "prob_preventable",
            "prob_dangerous",
        ],
    }
}

fn collect_quantities(
    cell: &CellEstimates,
    selector: StatisticSelector,
    out: &mut BTreeMap<(String, &'static str), f64>,
) {
    let key = cell.key();
    let want_rates = matches!(selector, StatisticSelector::Rates | StatisticSelector::All);
    let want_probs = matches!(
        selector,
        StatisticSelector::Probabilities | StatisticSelector::All
    );
    if want_rates {
        for (name, rate) in [
            ("rate_safe", &cell.rate_safe),
            ("rate_preventable", &cell.rate_preventable),
            ("rate_dangerous", &cell.rate_dangerous),
        ] {
            if let Some(r) = rate {
                out.insert((key.clone(), name), r.raw);
            }
        }
    }
    if want_probs {
        if let Some(p) = &cell.stratum_probs {
            out.insert((key.clone(), "prob_safe"), p.safe);
            out.insert((key.clone(), "prob_preventable"), p.preventable);
            out.insert((key.clone(), "prob_dangerous"), p.dangerous);
        }
    }
}

/// Quantile with linear interpolation between order statistics (the common
/// spreadsheet definition): position `(len - 1) * p`, interpolated.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
