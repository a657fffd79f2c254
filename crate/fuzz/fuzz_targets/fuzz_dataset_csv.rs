//! Feed arbitrary bytes through CSV ingestion and, when a dataset survives
//! validation, through the criteria evaluation. The schema is derived from
//! the input's own header line so the fuzzer explores the full ingestion
//! surface instead of dying on a fixed column set. Nothing here may panic:
//! every malformed input must come back as a typed error.

#![no_main]

use libfuzzer_sys::fuzz_target;
use pfaudit::dataset::{read_csv_dataset, SchemaSpec};
use pfaudit::metrics;
use pfaudit::table::ObservedTable;

fuzz_target!(|data: &[u8]| {
    let header_line = data.split(|&b| b == b'\n').next().unwrap_or(&[]);
    let Ok(header) = std::str::from_utf8(header_line) else {
        return;
    };
    let columns: Vec<String> = header
        .split(',')
        .map(|c| c.trim_matches(['"', '\r']).to_owned())
        .collect();
    if columns.len() < 3 {
        return;
    }

    // First column is the group, last two are decision and outcome, the rest
    // are covariates; designate the first covariate (if any) for
    // conditioning so the conditional code paths get fuzzed too.
    let covariates: Vec<String> = columns[1..columns.len() - 2].to_vec();
    let condition: Vec<String> = covariates.first().cloned().into_iter().collect();
    let spec = SchemaSpec {
        decision: columns[columns.len() - 2].clone(),
        outcome: columns[columns.len() - 1].clone(),
        group: columns[0].clone(),
        covariates,
        condition,
        type_overrides: Default::default(),
    };

    let Ok(ds) = read_csv_dataset(data, &spec) else {
        return;
    };
    let observed = ObservedTable::from_units(
        ds.records
            .iter()
            .map(|r| (r.group.as_str(), r.decision, r.outcome)),
    );
    let _ = metrics::evaluate_all(&observed, 0.05);
    let _ = ds.w_cells();
});
