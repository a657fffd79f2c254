//! Command-line front end: dataset audits, synthetic-population sampling,
//! randomized verification of the structural results, and the built-in
//! worked example.
//!
//! Every run is a pure function of its flags and input files — no
//! environment variables, no hidden state, and all randomness flows from
//! explicit seeds — so identical invocations produce byte-identical output.
//! Errors print a single machine-parsable line, `error[<kind>]: detail`, and
//! the exit code classifies what went wrong: 0 success, 1 usage or I/O, 2
//! invalid data or spec, 3 identification impossible everywhere, 4 a
//! structural check failed (which signals an implementation bug, not a data
//! property).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pfaudit::dataset::{self, SchemaSpec};
use pfaudit::demo;
use pfaudit::error::Error;
use pfaudit::identify::{
    BootstrapConfig, EstimatorConfig, FrequencyConfig, LogisticConfig, Mode, StatisticSelector,
    Tolerances,
};
use pfaudit::metrics;
use pfaudit::report::{self, AuditOptions};
use pfaudit::simulate::{self, DgpSpec};
use pfaudit::stratum::PrincipalStratum;

/// Audit decision data for principal fairness.
#[derive(Parser)]
#[command(
    name = "pfaudit",
    version,
    about = "Fairness auditing through latent response types",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a CSV dataset: statistical criteria plus plug-in stratum
    /// estimates with diagnostics.
    Audit(AuditArgs),
    /// Draw a unit-level dataset from a population spec.
    Simulate(SimulateArgs),
    /// Check the structural results by exact enumeration, on one spec or on
    /// randomized suites.
    Verify(VerifyArgs),
    /// Print the built-in worked example: latent counts, the observed view,
    /// and the criteria it fails.
    DemoTables,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EstimatorChoice {
    /// Saturated cell frequencies (exact for categorical covariates).
    Freq,
    /// Logistic outcome regression (supports numeric covariates).
    Logistic,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct AuditArgs {
    /// CSV dataset to audit.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Column holding the binary decision (values 0/1).
    #[arg(long = "decision-col", value_name = "NAME")]
    decision_col: String,
    /// Column holding the realized binary outcome (values 0/1).
    #[arg(long = "outcome-col", value_name = "NAME")]
    outcome_col: String,
    /// Column holding the protected group label.
    #[arg(long = "group-col", value_name = "NAME")]
    group_col: String,
    /// Comma-separated covariate columns for the outcome regression.
    #[arg(
        long = "covariate-cols",
        value_name = "LIST",
        value_delimiter = ',',
        required = true
    )]
    covariate_cols: Vec<String>,
    /// Comma-separated conditioning columns (a subset of the covariates);
    /// when given, estimates and criteria are produced per cell.
    #[arg(long = "condition-cols", value_name = "LIST", value_delimiter = ',')]
    condition_cols: Vec<String>,
    /// Outcome-regression estimator.
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Freq)]
    estimator: EstimatorChoice,
    /// Additive smoothing for the frequency estimator.
    #[arg(long, value_name = "ALPHA")]
    alpha: Option<f64>,
    /// Disparity at or below which a criterion passes.
    #[arg(long, value_name = "EPS", default_value_t = 0.05)]
    epsilon: f64,
    /// Bootstrap replicates for percentile intervals (omit to skip).
    #[arg(long, value_name = "B")]
    bootstrap: Option<usize>,
    /// Seed for the bootstrap.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Pool groups in the outcome regression instead of fitting
    /// group-specific regressions.
    #[arg(long = "exclude-group-from-design")]
    exclude_group_from_design: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Population spec (JSON).
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    /// Number of units to draw (must be positive).
    #[arg(long, value_name = "N")]
    n: usize,
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Include the latent response-type column in the output.
    #[arg(long = "with-latent")]
    with_latent: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SuiteKind {
    /// Randomly generated populations satisfying each result's premises.
    Random,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check one population spec (JSON) instead of random suites.
    #[arg(long, value_name = "PATH", conflicts_with = "suite")]
    spec: Option<PathBuf>,
    /// Run randomized suites.
    #[arg(long, value_enum)]
    suite: Option<SuiteKind>,
    /// Cases per theorem in suite mode.
    #[arg(long, value_name = "K", default_value_t = 100)]
    count: u64,
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Comma-separated theorem numbers to check (1 = within-cell
    /// implication, 2 = marginal equivalence, 3 = plug-in identification).
    #[arg(
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "1,2,3"
    )]
    theorems: Vec<u8>,
    /// Numeric tolerance for the checked conclusions.
    #[arg(long, value_name = "TOL", default_value_t = 1e-9)]
    tol: f64,
    /// Write a JSON verification report here.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => return handle_parse_error(err),
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {}", err.kind(), single_line(&err.to_string()));
            ExitCode::from(exit_code(&err))
        }
    }
}

fn handle_parse_error(err: clap::Error) -> ExitCode {
    use clap::error::ErrorKind;
    match err.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = err.print();
            ExitCode::SUCCESS
        }
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = err.print();
            ExitCode::from(1)
        }
        _ => {
            let message = err.to_string();
            let message = message.strip_prefix("error: ").unwrap_or(&message);
            eprintln!("error[usage]: {}", single_line(message));
            ExitCode::from(1)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        "usage" | "io" => 1,
        "unidentifiable" => 3,
        _ => 2,
    }
}

fn single_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Audit(args) => cmd_audit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::DemoTables => {
            print!("{}", demo_tables_text());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn emit(output: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match output {
        Some(path) => fs::write(path, content).map_err(|e| with_path(path, e))?,
        None => print!("{content}"),
    }
    Ok(())
}

/// Wrap a bare OS error with the path it concerns, keeping the message on
/// one line.
fn with_path(path: &std::path::Path, err: io::Error) -> io::Error {
    io::Error::new(err.kind(), format!("{}: {err}", path.display()))
}

fn read_file(path: &std::path::Path) -> Result<String, Error> {
    Ok(fs::read_to_string(path).map_err(|e| with_path(path, e))?)
}

fn cmd_audit(args: AuditArgs) -> Result<ExitCode, Error> {
    if matches!(args.estimator, EstimatorChoice::Logistic) && args.alpha.is_some() {
        return Err(Error::InvalidArgument(
            "--alpha applies to the frequency estimator only".to_owned(),
        ));
    }
    let schema = SchemaSpec {
        decision: args.decision_col,
        outcome: args.outcome_col,
        group: args.group_col,
        covariates: args.covariate_cols,
        condition: args.condition_cols,
        type_overrides: BTreeMap::new(),
    };
    let ds = dataset::read_csv_dataset_path(&args.input, &schema)?;
    let estimator = match args.estimator {
        EstimatorChoice::Freq => EstimatorConfig::Frequency(FrequencyConfig {
            alpha: args.alpha.unwrap_or(0.0),
        }),
        EstimatorChoice::Logistic => EstimatorConfig::Logistic(LogisticConfig::default()),
    };
    let opts = AuditOptions {
        estimator,
        include_group: !args.exclude_group_from_design,
        mode: if schema.condition.is_empty() {
            Mode::Marginal
        } else {
            Mode::ConditionalOnW
        },
        epsilon: args.epsilon,
        tolerances: Tolerances::default(),
        bootstrap: args.bootstrap.map(|replicates| BootstrapConfig {
            replicates,
            seed: args.seed,
            level: 0.95,
            selector: StatisticSelector::All,
        }),
    };
    let audit = report::run_audit(&ds, &opts)?;
    let rendered = match args.format {
        Format::Json => {
            let mut json = report::to_canonical_json(&audit)?;
            json.push('\n');
            json
        }
        Format::Text => report::render_text(&audit),
    };
    emit(&args.output, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let text = read_file(&args.spec)?;
    let spec: DgpSpec = serde_json::from_str(&text)?;
    let ds = simulate::sample(&spec, args.n, args.seed, args.with_latent)?;
    match &args.output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| with_path(path, e))?;
            dataset::write_csv_dataset(&ds, io::BufWriter::new(file), args.with_latent)?;
        }
        None => {
            dataset::write_csv_dataset(&ds, io::stdout().lock(), args.with_latent)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize)]
struct CheckRecord {
    theorem: u8,
    label: &'static str,
    source: String,
    premises_hold: bool,
    /// `None` when the premises fail: nothing is asserted.
    passed: Option<bool>,
    detail: String,
}

#[derive(Debug, Clone, Serialize)]
struct VerificationReport {
    tolerance: f64,
    checks: Vec<CheckRecord>,
    asserted: usize,
    failures: usize,
    all_passed: bool,
}

fn theorem_label(theorem: u8) -> &'static str {
    match theorem {
        1 => "within-cell implication",
        2 => "marginal equivalence",
        _ => "plug-in identification",
    }
}

fn check_one_spec(
    spec: &DgpSpec,
    source: &str,
    theorem: u8,
    tol: f64,
    tolerances: &Tolerances,
) -> Result<CheckRecord, Error> {
    let record = match theorem {
        1 => {
            let check = simulate::check_implication(spec, tol)?;
            CheckRecord {
                theorem,
                label: theorem_label(theorem),
                source: source.to_owned(),
                premises_hold: check.premises_hold,
                passed: check.conclusion_holds,
                detail: if check.premises_hold {
                    format!("max criterion disparity {:.3e}", check.max_disparity)
                } else {
                    check.premise_failures.join("; ")
                },
            }
        }
        2 => {
            let check = simulate::check_equivalence(spec, tol)?;
            CheckRecord {
                theorem,
                label: theorem_label(theorem),
                source: source.to_owned(),
                premises_hold: check.premises_hold,
                passed: check.equivalence_holds,
                detail: if check.premises_hold {
                    format!(
                        "pf gap {:.3e}, criteria gap {:.3e}",
                        check.pf_gap, check.criteria_gap
                    )
                } else {
                    check.premise_failures.join("; ")
                },
            }
        }
        _ => {
            let check = simulate::check_identification(spec, tolerances)?;
            let premises_hold = check.premises.monotone && check.premises.covariate_decisions;
            let deviation = check
                .marginal_max_deviation
                .max(check.conditional_max_deviation);
            let mut failures = Vec::new();
            if !check.premises.monotone {
                failures.push("the backlash stratum has mass");
            }
            if !check.premises.covariate_decisions {
                failures.push("decisions are not covariate-based");
            }
            CheckRecord {
                theorem,
                label: theorem_label(theorem),
                source: source.to_owned(),
                premises_hold,
                passed: premises_hold.then_some(deviation <= tol),
                detail: if premises_hold {
                    format!("max deviation {deviation:.3e}")
                } else {
                    failures.join("; ")
                },
            }
        }
    };
    Ok(record)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let mut theorems = args.theorems.clone();
    theorems.sort_unstable();
    theorems.dedup();
    if theorems.is_empty() {
        return Err(Error::InvalidArgument(
            "--theorems must name at least one of 1, 2, 3".to_owned(),
        ));
    }
    for &theorem in &theorems {
        if !(1..=3).contains(&theorem) {
            return Err(Error::InvalidArgument(format!(
                "unknown theorem {theorem}; expected 1, 2, or 3"
            )));
        }
    }
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "--tol must be a nonnegative finite number, got {}",
            args.tol
        )));
    }

    let tolerances = Tolerances::default();
    let mut checks = Vec::new();
    match (&args.spec, args.suite) {
        (Some(path), None) => {
            let text = read_file(path)?;
            let spec: DgpSpec = serde_json::from_str(&text)?;
            let source = format!("spec {}", path.display());
            for &theorem in &theorems {
                checks.push(check_one_spec(
                    &spec,
                    &source,
                    theorem,
                    args.tol,
                    &tolerances,
                )?);
            }
        }
        (None, Some(SuiteKind::Random)) => {
            for &theorem in &theorems {
                let runs = simulate::run_theorem_cases(
                    theorem,
                    args.count,
                    args.seed,
                    args.tol,
                    &tolerances,
                )?;
                for run in runs {
                    checks.push(CheckRecord {
                        theorem: run.theorem,
                        label: theorem_label(run.theorem),
                        source: format!("random case {}", run.case),
                        premises_hold: true,
                        passed: Some(run.passed),
                        detail: run.detail,
                    });
                }
            }
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "give --spec PATH or --suite random".to_owned(),
            ));
        }
        (Some(_), Some(_)) => unreachable!("flag conflict is rejected at parse time"),
    }

    let asserted = checks.iter().filter(|c| c.passed.is_some()).count();
    let failures = checks.iter().filter(|c| c.passed == Some(false)).count();
    for check in &checks {
        let status = match check.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "premises unmet (nothing asserted)",
        };
        println!(
            "theorem {} ({}), {}: {} - {}",
            check.theorem, check.label, check.source, status, check.detail
        );
    }
    println!(
        "verification: {} checks, {} asserted, {} failed - {}",
        checks.len(),
        asserted,
        failures,
        if failures == 0 { "OK" } else { "FAILED" }
    );

    if args.output.is_some() {
        let verification = VerificationReport {
            tolerance: args.tol,
            checks,
            asserted,
            failures,
            all_passed: failures == 0,
        };
        let mut json = report::to_canonical_json(&verification)?;
        json.push('\n');
        emit(&args.output, &json)?;
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

fn demo_tables_text() -> String {
    let table = demo::example_population();
    let rates = metrics::principal_rates(&table);
    let mut out = String::new();
    out.push_str("worked example: a stylized detention population\n");
    out.push_str("================================================\n\n");

    out.push_str("latent population (counts by response type)\n");
    out.push_str("  group  type          detained  released  detention rate\n");
    for group in ["A", "B"] {
        for stratum in PrincipalStratum::ALL {
            let detained = table.count(group, stratum, true);
            let released = table.count(group, stratum, false);
            let rate =
                rates.by_group[group][stratum.index()].expect("every example stratum is populated");
            out.push_str(&format!(
                "  {:<7}{:<16}{:>6}{:>10}{:>16.6}\n",
                group,
                stratum.name(),
                detained,
                released,
                rate
            ));
        }
    }
    let disparity = metrics::pf_disparity(&rates);
    out.push_str(&format!(
        "  largest within-type rate disparity across groups: {:.6}\n",
        disparity.max
    ));
    out.push_str("  every response type is treated identically across groups\n\n");

    let observed = table.marginalize();
    out.push_str("observed data (counts per group)\n");
    out.push_str(
        "  columns: detained & outcome, released & outcome, detained & none, released & none\n",
    );
    for group in ["A", "B"] {
        out.push_str(&format!(
            "  {}: {}, {}, {}, {}\n",
            group,
            observed.count(group, true, true),
            observed.count(group, false, true),
            observed.count(group, true, false),
            observed.count(group, false, false),
        ));
    }
    out.push('\n');

    let report =
        metrics::evaluate_all(&observed, 0.01).expect("the example tables are well-formed");
    out.push_str("criteria on the observed data (epsilon = 0.01)\n");
    out.push_str(&format!(
        "  overall detention rate:        A {:.6}, B {:.6}  (gap {:.6})  {}\n",
        report.overall.rate_by_group["A"],
        report.overall.rate_by_group["B"],
        report.overall.disparity,
        if report.overall_pass { "PASS" } else { "FAIL" },
    ));
    let cal = &report.calibration;
    out.push_str(&format!(
        "  outcome rate among detained:   A {:.6}, B {:.6}  (gap {:.6})\n",
        cal.value_by_group["A"][1].expect("defined in the example"),
        cal.value_by_group["B"][1].expect("defined in the example"),
        cal.disparity_by_arm[1],
    ));
    out.push_str(&format!(
        "  outcome rate among released:   A {:.6}, B {:.6}  (gap {:.6})\n",
        cal.value_by_group["A"][0].expect("defined in the example"),
        cal.value_by_group["B"][0].expect("defined in the example"),
        cal.disparity_by_arm[0],
    ));
    out.push_str(&format!(
        "  calibration verdict: {}\n",
        if report.calibration_pass {
            "PASS"
        } else {
            "FAIL"
        }
    ));
    let acc = &report.accuracy;
    out.push_str(&format!(
        "  detention rate given outcome:  A {:.6}, B {:.6}  (gap {:.6})\n",
        acc.value_by_group["A"][1].expect("defined in the example"),
        acc.value_by_group["B"][1].expect("defined in the example"),
        acc.disparity_by_arm[1],
    ));
    out.push_str(&format!(
        "  detention rate given none:     A {:.6}, B {:.6}  (gap {:.6})\n",
        acc.value_by_group["A"][0].expect("defined in the example"),
        acc.value_by_group["B"][0].expect("defined in the example"),
        acc.disparity_by_arm[0],
    ));
    out.push_str(&format!(
        "  accuracy verdict: {}\n",
        if report.accuracy_pass { "PASS" } else { "FAIL" }
    ));
    out.push_str(
        "  equal treatment within every response type, yet all three observed criteria fail\n",
    );
    out
}
