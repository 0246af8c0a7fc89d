use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fuelclust::config::{parse_k_range, Overrides, PipelineConfig};
use fuelclust::error::{Error, Result};
use fuelclust::ingest::{ColumnMap, ValidationReport};
use fuelclust::pipeline::{self, Summary};
use fuelclust::validity::SilhouetteMode;

#[derive(Parser)]
#[command(name = "fuelclust", version, about = "Cluster trip fuel efficiency with Gaussian mixtures")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the input file and write validation.json.
    Validate(RunArgs),
    /// Score k over a range and pick the best by average rank.
    SelectK(RunArgs),
    /// Fit, refine and write the full report bundle.
    Analyze(RunArgs),
    /// Print the summary of a finished analysis.
    Report {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat TOML config; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Header overrides, e.g. `fuel_efficiency=l_per_100km,trip_id=id`.
    #[arg(long)]
    columns: Option<ColumnMap>,
    /// Inclusive k range, e.g. `2..9`.
    #[arg(long, value_parser = parse_k_range)]
    k_range: Option<(usize, usize)>,
    /// Fit this many clusters instead of selecting k.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    si_mode: Option<SilhouetteMode>,
    #[arg(long)]
    min_run_size: Option<usize>,
    /// Skip the gap-based cluster splitting.
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let overrides = Overrides {
            input: self.input.clone(),
            columns: self.columns.clone(),
            k_range: self.k_range,
            k: self.k,
            seed: self.seed,
            si_mode: self.si_mode,
            min_run_size: self.min_run_size,
            no_refine: self.no_refine,
            out_dir: self.out_dir.clone(),
        };
        PipelineConfig::resolve(self.config.as_deref(), &overrides)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Validate(args) => validate(&args),
        Command::SelectK(args) => select_k(&args),
        Command::Analyze(args) => analyze(&args),
        Command::Report { out_dir } => report(&out_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_violations(report: &ValidationReport) {
    for v in &report.violations {
        eprintln!("row {}: trip `{}`: {:?}", v.row, v.trip_id, v.kind);
    }
}

/// Loads the input and writes validation.json; `None` means bad rows.
fn checked_input(config: &PipelineConfig) -> Result<Option<fuelclust::TripTable>> {
    let (table, report) = pipeline::load_input(config)?;
    pipeline::write_validation(&report, &config.out_dir)?;
    if report.is_clean() {
        Ok(Some(table))
    } else {
        print_violations(&report);
        eprintln!(
            "{} of {} rows failed validation",
            report.violations.len(),
            report.rows_checked
        );
        Ok(None)
    }
}

fn validate(args: &RunArgs) -> Result<u8> {
    let config = args.resolve()?;
    let (_, report) = pipeline::load_input(&config)?;
    pipeline::write_validation(&report, &config.out_dir)?;
    println!(
        "{} rows checked, {} valid, {} violations",
        report.rows_checked,
        report.valid_count,
        report.violations.len()
    );
    print_violations(&report);
    Ok(if report.is_clean() { 0 } else { 1 })
}

fn select_k(args: &RunArgs) -> Result<u8> {
    let config = args.resolve()?;
    let Some(table) = checked_input(&config)? else {
        return Ok(1);
    };
    let selection = pipeline::run_selection(&table.samples()?, &config)?;
    pipeline::write_selection(&selection, &config.out_dir)?;
    config.save(config.out_dir.join("config.toml"))?;
    eprint!("{}", selection.ranks.to_csv());
    println!("{}", selection.selected_k);
    Ok(0)
}

fn analyze(args: &RunArgs) -> Result<u8> {
    let config = args.resolve()?;
    let Some(table) = checked_input(&config)? else {
        return Ok(1);
    };
    let analysis = pipeline::analyze(&table, &config)?;
    analysis.write(&table, &config, &config.out_dir)?;
    print_summary(&analysis.summary());
    Ok(0)
}

fn report(out_dir: &Path) -> Result<u8> {
    let summary = pipeline::read_summary(out_dir).map_err(|e| match e {
        Error::Json(e) => Error::Config(format!("unreadable summary in {}: {e}", out_dir.display())),
        e => e,
    })?;
    print_summary(&summary);
    Ok(0)
}

fn print_summary(s: &Summary) {
    match s.selected_k {
        Some(k) => println!("trips: {}  selected k: {k}  final k: {}", s.trips, s.final_k),
        None => println!("trips: {}  forced k: {}  final k: {}", s.trips, s.fitted_k, s.final_k),
    }
    println!(
        "log-likelihood: {:.4}  converged: {}  splits: {}",
        s.log_likelihood, s.converged, s.splits
    );
    println!(
        "{:>7} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}  label",
        "cluster", "num", "min", "max", "mean", "median", "std", "outliers"
    );
    for c in &s.clusters {
        println!(
            "{:>7} {:>6} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8}  {}",
            c.cluster_id, c.num, c.min, c.max, c.mean, c.median, c.std, c.outliers, c.label
        );
    }
    if let Some(w) = &s.label_warning {
        println!("note: {w}");
    }
    for (name, g) in [("drivers", &s.drivers), ("routes", &s.routes)] {
        println!(
            "{name}: {} groups, {} flagged (max deviation {:.3}), {} dominated by one cluster",
            g.groups,
            g.flagged.len(),
            g.max_deviation,
            g.dominated.len()
        );
    }
}
