//! Unit-level datasets: schema designation, CSV ingestion, validation.
//!
//! A dataset binds a rectangular table of strings to roles: one decision
//! column, one outcome column, one group column, and one or more covariate
//! columns, of which a subset may be designated as the conditioning set `W`
//! used for cell-wise reporting. Validation checks the whole table and
//! reports every problem it finds with row and column locations.
//!
//! Typing is inferred per covariate column: a column is numeric when every
//! value parses as a finite decimal number, and categorical otherwise.
//! Explicit overrides take precedence. Missing (empty) values are rejected
//! rather than imputed, and decision and outcome values must be exactly `"0"`
//! or `"1"`: silently coercing near-misses like `"yes"` or `"TRUE"` would
//! invite misread audits.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use crate::error::{Error, ValidationIssue};
use crate::stratum::PrincipalStratum;
use crate::table::{ObservedTable, PotentialOutcomeTable};

/// A single covariate value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// Value from a numeric column.
    Num(f64),
    /// Value from a categorical column.
    Cat(String),
}

impl Value {
    /// Categorical label, or `None` for numeric values.
    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    /// Numeric value, or `None` for categorical values.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    /// Render the value the way it would appear in a CSV file.
    pub fn render(&self) -> String {
        match self {
            Value::Num(x) => format!("{x}"),
            Value::Cat(s) => s.clone(),
        }
    }
}

/// One row of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    /// Binary decision (true = the decision was taken).
    pub decision: bool,
    /// Realized binary outcome.
    pub outcome: bool,
    /// Group label.
    pub group: String,
    /// Covariate values, aligned with [`Schema::covariates`].
    pub covariates: Vec<Value>,
    /// Latent stratum; populated only by the simulator, never by ingestion.
    pub stratum: Option<PrincipalStratum>,
}

/// Resolved type of a covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

/// Requested column designation, before types are resolved against the data.
#[derive(Debug, Clone, Default)]
pub struct SchemaSpec {
    pub decision: String,
    pub outcome: String,
    pub group: String,
    pub covariates: Vec<String>,
    /// Conditioning columns `W`; must be a subset of `covariates`.
    pub condition: Vec<String>,
    /// Per-column type overrides; columns not listed are inferred.
    pub type_overrides: BTreeMap<String, ColumnType>,
}

/// Column designation with resolved covariate types.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Schema {
    pub decision: String,
    pub outcome: String,
    pub group: String,
    pub covariates: Vec<String>,
    pub covariate_types: Vec<ColumnType>,
    pub condition: Vec<String>,
}

/// A validated unit-level dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<UnitRecord>,
    /// Distinct group labels in sorted order.
    pub groups: Vec<String>,
}

impl Dataset {
    /// Number of records.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of a covariate column by name.
    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.schema.covariates.iter().position(|c| c == name)
    }

    /// Indices of the conditioning columns within `covariates`.
    pub fn condition_indices(&self) -> Vec<usize> {
        self.schema
            .condition
            .iter()
            .map(|c| {
                self.covariate_index(c)
                    .expect("condition column is a covariate")
            })
            .collect()
    }

    /// Conditioning-cell key of one record: (column, value) pairs in
    /// designated order. Empty when no conditioning columns were designated.
    pub fn w_cell_of(&self, record: &UnitRecord) -> Vec<(String, String)> {
        self.condition_indices()
            .iter()
            .zip(self.schema.condition.iter())
            .map(|(&i, name)| {
                let value = record.covariates[i]
                    .as_category()
                    .expect("conditioning columns are categorical")
                    .to_owned();
                (name.clone(), value)
            })
            .collect()
    }

    /// Record indices grouped by conditioning cell, in sorted cell order.
    pub fn w_cells(&self) -> BTreeMap<Vec<String>, Vec<usize>> {
        let idx = self.condition_indices();
        let mut cells: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
        for (i, rec) in self.records.iter().enumerate() {
            let key: Vec<String> = idx
                .iter()
                .map(|&j| {
                    rec.covariates[j]
                        .as_category()
                        .expect("conditioning columns are categorical")
                        .to_owned()
                })
                .collect();
            cells.entry(key).or_default().push(i);
        }
        cells
    }

    /// Observed counts by (group, decision, outcome).
    pub fn observed_table(&self) -> ObservedTable {
        ObservedTable::from_units(
            self.records
                .iter()
                .map(|r| (r.group.as_str(), r.decision, r.outcome)),
        )
    }

    /// Potential-outcome counts by (group, stratum, decision). Errors unless
    /// every record carries a latent stratum.
    pub fn potential_table(&self) -> Result<PotentialOutcomeTable, Error> {
        let mut table = PotentialOutcomeTable::new();
        for (i, rec) in self.records.iter().enumerate() {
            let stratum = rec.stratum.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "record {i} has no latent stratum; potential-outcome tables need simulated data"
                ))
            })?;
            table.add(&rec.group, stratum, rec.decision, 1);
        }
        Ok(table)
    }
}

/// Validate raw rows against a schema designation and build a [`Dataset`].
///
/// `rows` come straight from the CSV reader and may be ragged; every problem
/// found (schema resolution, ragged rows, bad values, type conflicts) is
/// collected into the error list with its location.
pub fn validate_dataset(
    header: &[String],
    rows: &[Vec<String>],
    spec: &SchemaSpec,
) -> Result<Dataset, Vec<ValidationIssue>> {
    let mut issues = Vec::new();

    let resolution = resolve_columns(header, spec, &mut issues);
    if rows.is_empty() {
        issues.push(ValidationIssue {
            row: None,
            column: None,
            reason: "no data rows".to_owned(),
        });
    }
    let Some(cols) = resolution else {
        return Err(issues);
    };

    let expected_len = header.len();
    let mut ragged = false;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != expected_len {
            ragged = true;
            issues.push(ValidationIssue {
                row: Some(i),
                column: None,
                reason: format!(
                    "expected {expected_len} fields to match the header, got {}",
                    row.len()
                ),
            });
        }
    }
    if ragged {
        // Ragged rows poison column typing; report what we have so far.
        return Err(issues);
    }

    // Resolve covariate types: explicit override, else numeric when every
    // value parses as a finite decimal.
    let mut types = Vec::with_capacity(cols.covariates.len());
    for (k, &ci) in cols.covariates.iter().enumerate() {
        let name = &spec.covariates[k];
        let declared = spec.type_overrides.get(name).copied();
        let inferred = if rows.iter().all(|r| parses_numeric(&r[ci])) {
            ColumnType::Numeric
        } else {
            ColumnType::Categorical
        };
        types.push(declared.unwrap_or(inferred));
    }

    // Conditioning columns must be categorical; numeric W cells would make
    // cell-wise reporting depend on an arbitrary binning.
    for cond in &spec.condition {
        if let Some(k) = spec.covariates.iter().position(|c| c == cond) {
            if types[k] == ColumnType::Numeric {
                issues.push(ValidationIssue::schema(
                    cond.clone(),
                    "conditioning columns must be categorical; discretize the column or override its type",
                ));
            }
        }
    }

    let mut records = Vec::with_capacity(rows.len());
    let mut groups = BTreeSet::new();
    for (i, row) in rows.iter().enumerate() {
        let mut ok = true;

        let decision = parse_binary(&row[cols.decision], i, &spec.decision, &mut issues);
        let outcome = parse_binary(&row[cols.outcome], i, &spec.outcome, &mut issues);
        ok &= decision.is_some() && outcome.is_some();

        let group = &row[cols.group];
        if group.is_empty() {
            issues.push(ValidationIssue::row(i, spec.group.clone(), "missing value"));
            ok = false;
        }

        let mut covariates = Vec::with_capacity(cols.covariates.len());
        for (k, &ci) in cols.covariates.iter().enumerate() {
            let value = &row[ci];
            if value.is_empty() {
                issues.push(ValidationIssue::row(
                    i,
                    spec.covariates[k].clone(),
                    "missing value",
                ));
                ok = false;
                continue;
            }
            match types[k] {
                ColumnType::Numeric => match parse_finite(value) {
                    Some(x) => covariates.push(Value::Num(x)),
                    None => {
                        issues.push(ValidationIssue::row(
                            i,
                            spec.covariates[k].clone(),
                            format!("\"{value}\" is not a finite number in a numeric column"),
                        ));
                        ok = false;
                    }
                },
                ColumnType::Categorical => covariates.push(Value::Cat(value.clone())),
            }
        }

        if ok {
            groups.insert(group.clone());
            records.push(UnitRecord {
                decision: decision.unwrap(),
                outcome: outcome.unwrap(),
                group: group.clone(),
                covariates,
                stratum: None,
            });
        }
    }

    if !issues.is_empty() {
        return Err(issues);
    }

    Ok(Dataset {
        schema: Schema {
            decision: spec.decision.clone(),
            outcome: spec.outcome.clone(),
            group: spec.group.clone(),
            covariates: spec.covariates.clone(),
            covariate_types: types,
            condition: spec.condition.clone(),
        },
        records,
        groups: groups.into_iter().collect(),
    })
}

struct ResolvedColumns {
    decision: usize,
    outcome: usize,
    group: usize,
    covariates: Vec<usize>,
}

fn resolve_columns(
    header: &[String],
    spec: &SchemaSpec,
    issues: &mut Vec<ValidationIssue>,
) -> Option<ResolvedColumns> {
    // Designated names must be distinct before we even look at the header.
    let mut designated: Vec<&String> = vec![&spec.decision, &spec.outcome, &spec.group];
    designated.extend(spec.covariates.iter());
    let mut seen = BTreeSet::new();
    for name in &designated {
        if !seen.insert(name.as_str()) {
            issues.push(ValidationIssue::schema(
                (*name).clone(),
                "column designated for more than one role",
            ));
        }
    }
    for cond in &spec.condition {
        if !spec.covariates.contains(cond) {
            issues.push(ValidationIssue::schema(
                cond.clone(),
                "conditioning column is not among the designated covariates",
            ));
        }
    }
    if spec.covariates.is_empty() {
        issues.push(ValidationIssue {
            row: None,
            column: None,
            reason: "at least one covariate column must be designated".to_owned(),
        });
    }

    let find = |name: &String, issues: &mut Vec<ValidationIssue>| -> Option<usize> {
        let hits: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => Some(*i),
            [] => {
                issues.push(ValidationIssue::schema(
                    name.clone(),
                    "column not found in header",
                ));
                None
            }
            _ => {
                issues.push(ValidationIssue::schema(
                    name.clone(),
                    "column appears more than once in header",
                ));
                None
            }
        }
    };

    let decision = find(&spec.decision, issues);
    let outcome = find(&spec.outcome, issues);
    let group = find(&spec.group, issues);
    let covariates: Vec<Option<usize>> = spec.covariates.iter().map(|c| find(c, issues)).collect();

    if issues.is_empty() {
        Some(ResolvedColumns {
            decision: decision.unwrap(),
            outcome: outcome.unwrap(),
            group: group.unwrap(),
            covariates: covariates.into_iter().map(Option::unwrap).collect(),
        })
    } else {
        None
    }
}

fn parse_binary(
    value: &str,
    row: usize,
    column: &str,
    issues: &mut Vec<ValidationIssue>,
) -> Option<bool> {
    match value {
        "0" => Some(false),
        "1" => Some(true),
        "" => {
            issues.push(ValidationIssue::row(row, column, "missing value"));
            None
        }
        other => {
            issues.push(ValidationIssue::row(
                row,
                column,
                format!("expected \"0\" or \"1\", got \"{other}\""),
            ));
            None
        }
    }
}

fn parses_numeric(value: &str) -> bool {
    !value.is_empty() && parse_finite(value).is_some()
}

fn parse_finite(value: &str) -> Option<f64> {
    value.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Read and validate a CSV dataset from any reader.
///
/// The file must be UTF-8 with a header row, comma separators, and standard
/// quoting. Ragged rows are reported as validation issues with their row
/// index.
pub fn read_csv_dataset<R: io::Read>(reader: R, spec: &SchemaSpec) -> Result<Dataset, Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_owned()).collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(record.iter().map(|s| s.to_owned()).collect::<Vec<_>>());
    }
    validate_dataset(&header, &rows, spec).map_err(Error::Validation)
}

/// Read and validate a CSV dataset from a file path.
pub fn read_csv_dataset_path(path: impl AsRef<Path>, spec: &SchemaSpec) -> Result<Dataset, Error> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_csv_dataset(io::BufReader::new(file), spec)
}

/// Write a dataset as CSV: group, covariates, decision, outcome, and a final
/// `stratum` column when `include_latent` is set and the records carry strata.
pub fn write_csv_dataset<W: io::Write>(
    ds: &Dataset,
    writer: W,
    include_latent: bool,
) -> Result<(), Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ds.schema.group.clone()];
    header.extend(ds.schema.covariates.iter().cloned());
    header.push(ds.schema.decision.clone());
    header.push(ds.schema.outcome.clone());
    if include_latent {
        header.push("stratum".to_owned());
    }
    wtr.write_record(&header)?;
    for (i, rec) in ds.records.iter().enumerate() {
        let mut row = vec![rec.group.clone()];
        row.extend(rec.covariates.iter().map(Value::render));
        row.push(if rec.decision { "1" } else { "0" }.to_owned());
        row.push(if rec.outcome { "1" } else { "0" }.to_owned());
        if include_latent {
            let stratum = rec.stratum.ok_or_else(|| {
                Error::InvalidArgument(format!("record {i} has no latent stratum to write"))
            })?;
            row.push(stratum.name().to_owned());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
