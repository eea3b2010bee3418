//! `climacast` — remote climate time-series prediction experiments.
//!
//! Subcommands: `gen-synthetic`, `ingest-check`, `tune`, `sweep`, `analyze`.
//! Exit codes: 0 success, 1 config error, 2 data error, 3 partial failures
//! (reports are still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use climacast_core::data::Variable;
use climacast_core::experiment::{
    build_report, load_records_csv, run_gen_synthetic, run_ingest_check, run_sweep, run_tune,
    write_analysis_outputs, write_outputs, write_tune_outputs, ExperimentConfig, ExperimentError,
    ReportOptions, SweepReport,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "climacast",
    version,
    about = "Predict an unobserved climate series at a target location from a remote observation point"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config JSON; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    target_lat: Option<f64>,
    #[arg(long)]
    target_lon: Option<f64>,
    /// temp | pres | synthetic
    #[arg(long)]
    variable: Option<String>,
    /// Comma-separated test years, e.g. 2019,2020,2021.
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<i32>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic field for the configured sweep geometry.
    GenSynthetic(CommonArgs),
    /// Check that every series the sweep needs loads and covers its years.
    IngestCheck(CommonArgs),
    /// Grid-search (density, input scaling, spectral radius, ridge beta).
    Tune(CommonArgs),
    /// Run the observation-point sweep and write the reports.
    Sweep(CommonArgs),
    /// Recompute aggregates and regression from an existing records.csv.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Records file; defaults to <output_dir>/records.csv.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(lat) = common.target_lat {
        cfg.target_location.lat = lat;
    }
    if let Some(lon) = common.target_lon {
        cfg.target_location.lon = lon;
    }
    if let Some(variable) = &common.variable {
        cfg.variable = variable
            .parse::<Variable>()
            .map_err(ExperimentError::Config)?;
    }
    if let Some(years) = &common.years {
        cfg.years = years.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code_for(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) => EXIT_CONFIG,
        ExperimentError::Data(_) | ExperimentError::Io { .. } => EXIT_DATA,
    }
}

fn print_sweep_summary(report: &SweepReport) {
    println!("records: {}", report.records.len());
    if let Some(b) = report.baseline_nrmse {
        println!("baseline NRMSE (historical average): {b:.4}");
    }
    if let Some(range) = &report.predictable_range {
        if range.range.empty {
            println!("predictable range ({}): empty", range.method);
        } else {
            println!(
                "predictable range ({}): {:+.1} to {:+.1} deg (margin {})",
                range.method, range.range.lo_deg, range.range.hi_deg, range.margin
            );
        }
    }
    if let Some(r) = &report.regression {
        println!(
            "shared-intercept regression: slope_{} = {:.4}, slope_{} = {:.4}, intercept = {:.4}",
            r.method_a, r.slope_a, r.method_b, r.slope_b, r.intercept
        );
    } else if let Some(note) = &report.regression_note {
        println!("regression skipped: {note}");
    }
    if !report.failures.is_empty() {
        println!("failures: {}", report.failures.len());
        for f in report.failures.iter().take(10) {
            let method = f.method.map(|m| m.to_string()).unwrap_or_else(|| "all".into());
            println!(
                "  ({:.6}, {:.6}) year {} [{}]: {}",
                f.obs_location.lat, f.obs_location.lon, f.year, method, f.message
            );
        }
        if report.failures.len() > 10 {
            println!("  ... and {} more (see summary.json)", report.failures.len() - 10);
        }
    }
}

fn run(command: Command) -> Result<u8, ExperimentError> {
    match command {
        Command::GenSynthetic(common) => {
            let cfg = load_config(&common)?;
            let n = run_gen_synthetic(&cfg)?;
            println!(
                "wrote {n} synthetic series under {}",
                cfg.data_root.join("synthetic").display()
            );
            Ok(0)
        }
        Command::IngestCheck(common) => {
            let cfg = load_config(&common)?;
            let report = run_ingest_check(&cfg)?;
            if report.problems.is_empty() {
                println!("{} locations ok", report.n_locations);
                Ok(0)
            } else {
                for (loc, msg) in &report.problems {
                    eprintln!("({:.6}, {:.6}): {msg}", loc.lat, loc.lon);
                }
                eprintln!(
                    "{} of {} locations have problems",
                    report.problems.len(),
                    report.n_locations
                );
                Ok(EXIT_DATA)
            }
        }
        Command::Tune(common) => {
            let cfg = load_config(&common)?;
            let result = run_tune(&cfg)?;
            write_tune_outputs(&result, &cfg.output_dir)?;
            println!(
                "evaluated {} combinations -> {}",
                result.table.len(),
                cfg.output_dir.join("score_table.csv").display()
            );
            match &result.best {
                Some(b) => {
                    println!(
                        "best: density={} input_scaling={} spectral_radius={} ridge_beta={} (mean NRMSE {:.4})",
                        b.density, b.input_scaling, b.spectral_radius, b.ridge_beta, b.mean_nrmse
                    );
                    Ok(0)
                }
                None => {
                    eprintln!("every combination failed on every calibration set");
                    Ok(EXIT_PARTIAL)
                }
            }
        }
        Command::Sweep(common) => {
            let cfg = load_config(&common)?;
            let report = run_sweep(&cfg)?;
            write_outputs(&report, &cfg.output_dir)?;
            print_sweep_summary(&report);
            println!("wrote reports to {}", cfg.output_dir.display());
            Ok(if report.failures.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Command::Analyze { common, records } => {
            let cfg = load_config(&common)?;
            let records_path = records.unwrap_or_else(|| cfg.output_dir.join("records.csv"));
            let (records, axis) = load_records_csv(&records_path)?;
            let opts = ReportOptions {
                axis,
                range_margin: cfg.range_margin,
                regression_max_offset_deg: cfg.regression_max_offset_deg,
                regression_per_year_points: cfg.regression_per_year_points,
            };
            let report = build_report(records, Vec::new(), &opts);
            write_analysis_outputs(&report, &cfg.output_dir)?;
            print_sweep_summary(&report);
            println!("wrote analysis to {}", cfg.output_dir.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not errors; anything else is config misuse
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code_for(&e))
        }
    }
}
