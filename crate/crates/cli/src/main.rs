use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kmte::simulate::{
    rejection_study, write_rejection_csv, write_rejection_json, DesignId, StudyConfig, StudyTest,
};
use kmte::{
    load_csv, run_test, ColumnMap, Dataset, Error, GridMode, MultiplierLaw, ProcessKind,
    PropensityCorrection, StatSelection, TestConfig, TestReport,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "kmte",
    version,
    about = "Treatment effect heterogeneity tests for censored durations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on a CSV dataset and print a JSON report.
    Test(TestArgs),
    /// Run the Monte Carlo rejection study and write CSV and JSON tables.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "q")]
    q_col: String,
    #[arg(long, default_value = "delta")]
    delta_col: String,
    #[arg(long, default_value = "t")]
    t_col: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', required = true)]
    x_cols: Vec<String>,
    /// Binary instrument column (required for ldte).
    #[arg(long)]
    z_col: Option<String>,
    #[arg(long, default_value = "dte", value_parser = parse_with::<ProcessKind>)]
    test: ProcessKind,
    #[arg(long, default_value = "both", value_parser = parse_with::<StatSelection>)]
    stat: StatSelection,
    /// Truncation point; `inf` for none.
    #[arg(long, default_value_t = f64::INFINITY)]
    tau_bar: f64,
    /// Series degree of the propensity basis (default depends on n).
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sample-pairs", value_parser = parse_grid)]
    grid: GridMode,
    #[arg(long, default_value = "mammen", value_parser = parse_with::<MultiplierLaw>)]
    multiplier: MultiplierLaw,
    /// Report `(1 + #) / (B + 1)` p-values.
    #[arg(long)]
    smoothed_p: bool,
    /// How propensity estimation enters the influence functions.
    #[arg(long, default_value = "projected", value_parser = parse_with::<PropensityCorrection>)]
    propensity_correction: PropensityCorrection,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the bootstrap replicates to this CSV file.
    #[arg(long)]
    dump_replicates: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_value = "i,ii,iii", value_parser = parse_with::<DesignId>)]
    designs: Vec<DesignId>,
    #[arg(long, value_delimiter = ',', default_value = "100,300,500")]
    ns: Vec<usize>,
    /// Censoring percentages.
    #[arg(long, value_delimiter = ',', default_value = "0,10,30")]
    censoring: Vec<f64>,
    /// Tests such as `dte`, `dte-ks`, `hom-cvm`.
    #[arg(long, value_delimiter = ',', default_value = "dte,hom", value_parser = parse_with::<StudyTest>)]
    tests: Vec<StudyTest>,
    #[arg(long = "R", default_value_t = 1000)]
    r: usize,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mammen", value_parser = parse_with::<MultiplierLaw>)]
    multiplier: MultiplierLaw,
    /// Output path prefix; `.csv` and `.json` are appended.
    #[arg(long, default_value = "rejection")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<GridMode, String> {
    match s {
        "sample-pairs" => Ok(GridMode::SamplePairs),
        "full-product" => Ok(GridMode::FullProduct),
        other => Err(format!("unknown grid mode `{other}`")),
    }
}

fn io_error(path: &std::path::Path, source: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .map(|pool| pool.install(f)),
    }
}

fn cmd_test(args: TestArgs) -> Result<(), Error> {
    let columns = ColumnMap {
        q: args.q_col.clone(),
        delta: args.delta_col.clone(),
        t: args.t_col.clone(),
        x: args.x_cols.clone(),
        z: args.z_col.clone(),
    };
    if args.test == ProcessKind::Ldte && args.z_col.is_none() {
        return Err(Error::InstrumentRequired);
    }
    let data: Dataset = load_csv(&args.input, &columns)?;
    let config = TestConfig {
        kind: args.test,
        stat: args.stat,
        tau_bar: args.tau_bar,
        degree: args.degree,
        b: args.b,
        alpha: args.alpha,
        seed: args.seed,
        grid: args.grid,
        law: args.multiplier,
        smoothed_p: args.smoothed_p,
        correction: args.propensity_correction,
        ..TestConfig::default()
    };
    let outcome = with_threads(args.threads, || run_test(&data, &config))??;
    if let Some(path) = &args.dump_replicates {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["statistic_type", "replicate", "value"])?;
        for (kind, r) in &outcome.results {
            for (i, v) in r.replicates.iter().enumerate() {
                w.write_record([kind.as_str(), &i.to_string(), &format!("{v:e}")])?;
            }
        }
        w.flush().map_err(|e| io_error(path, e))?;
    }
    let report = TestReport::from_outcome(&outcome);
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InvalidData(format!("serializing report: {e}")))?;
    println!("{text}");
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let config = StudyConfig {
        designs: args.designs,
        ns: args.ns,
        censoring: args.censoring,
        tests: args.tests,
        r: args.r,
        b: args.b,
        alpha: args.alpha,
        seed: args.seed,
        law: args.multiplier,
    };
    let rows = with_threads(args.threads, || rejection_study(&config))??;
    let csv_path = args.out.with_extension("csv");
    let json_path = args.out.with_extension("json");
    let file = File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    write_rejection_csv(&rows, BufWriter::new(file))?;
    let file = File::create(&json_path).map_err(|e| io_error(&json_path, e))?;
    let mut w = BufWriter::new(file);
    write_rejection_json(&rows, &mut w)?;
    w.flush().map_err(|e| io_error(&json_path, e))?;
    println!(
        "{}",
        json!({ "rows": rows.len(), "csv": csv_path, "json": json_path })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!(
                "{}",
                json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
            );
            ExitCode::FAILURE
        }
    }
}
