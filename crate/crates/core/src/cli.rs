//! Command-line front end for the `pwin` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentFile};
use crate::detectors::DetectorError;
use crate::harness::{extract_curves, run_experiment, summarize, write_curves_csv, Experiment, RunResult, Summary};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("writing {path}: {reason}")]
    Output { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Detector(_) | CliError::Output { .. } => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pwin", version, about = "Particle-window object search experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one detector over every scene and trial.
    Run(CommonArgs),
    /// Compare all detectors over the budget grid.
    Compare(CommonArgs),
    /// Sweep the acceptance threshold to trace detection rate against FPPI.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated `t_high` values; defaults to five points around
        /// the configured threshold.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        t_high: Vec<f64>,
    },
    /// Write per-iteration curves for every detector.
    Curves(CommonArgs),
    /// Parse and validate a config, including its scenes.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub quiet: bool,
    /// Restrict to the named detector.
    #[arg(long)]
    pub detector: Option<String>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::ValidateConfig { config } => {
            let file = ExperimentFile::load(&config)?;
            let exp = file.build(None)?;
            println!(
                "{}: ok ({} windows, {} scenes, {} detectors)",
                config.display(),
                exp.space.window_count(),
                exp.scenes.len(),
                exp.detectors.len()
            );
            Ok(())
        }
        Command::Run(args) => cmd_run(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Sweep { common, t_high } => cmd_sweep(&common, &t_high),
        Command::Curves(args) => cmd_curves(&args),
    }
}

fn load(args: &CommonArgs) -> Result<(ExperimentFile, Experiment), CliError> {
    let file = ExperimentFile::load(&args.config)?;
    let mut exp = file.build(args.seed)?;
    if let Some(name) = &args.detector {
        exp.detectors.retain(|d| &d.name == name);
        if exp.detectors.is_empty() {
            return Err(CliError::Usage(format!("no detector named {name:?} in {}", args.config.display())));
        }
    }
    Ok((file, exp))
}

fn out_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.into(), reason: e.to_string() })?;
    Ok(dir.join(name))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = out_path(dir, name)?;
    let f = File::create(&path).map_err(|e| CliError::Output { path: path.clone(), reason: e.to_string() })?;
    Ok((path, BufWriter::new(f)))
}

fn output_err(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |reason| CliError::Output { path: path.into(), reason }
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
    let (path, mut w) = create(dir, name)?;
    let err = output_err(&path);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| err(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
    let (path, w) = create(dir, name)?;
    let err = output_err(&path);
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(|e| err(e.to_string()))?;
    }
    csv.flush().map_err(|e| err(e.to_string()))
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    detector: &'a str,
    budget: usize,
    runs: usize,
    detection_rate: f64,
    rate_std: f64,
    fppi: f64,
    mean_windows: f64,
    mean_cost: f64,
}

fn summary_rows(sums: &[Summary]) -> Vec<SummaryRow<'_>> {
    sums.iter()
        .map(|s| SummaryRow {
            detector: &s.detector,
            budget: s.budget,
            runs: s.runs,
            detection_rate: s.metrics.detection_rate(),
            rate_std: s.rate_std,
            fppi: s.metrics.fppi(),
            mean_windows: s.metrics.windows_used as f64 / s.runs as f64,
            mean_cost: s.metrics.cost / s.runs as f64,
        })
        .collect()
}

#[derive(Serialize)]
struct TimingRow<'a> {
    command: &'a str,
    runs: usize,
    seconds: f64,
}

fn write_timing(dir: &Path, command: &str, runs: usize, start: Instant) -> Result<(), CliError> {
    write_csv(dir, "timing.csv", &[TimingRow { command, runs, seconds: start.elapsed().as_secs_f64() }])
}

fn print_summary(sums: &[Summary]) {
    println!("{:<12} {:>8} {:>6} {:>8} {:>6} {:>10}", "detector", "budget", "runs", "rate", "fppi", "cost");
    for r in summary_rows(sums) {
        println!(
            "{:<12} {:>8} {:>6} {:>8.3} {:>6.2} {:>10.1}",
            r.detector, r.budget, r.runs, r.detection_rate, r.fppi, r.mean_cost
        );
    }
}

/// One line per run; the trace is included when it was kept.
#[derive(Serialize)]
struct TraceLine<'a> {
    #[serde(flatten)]
    run: &'a RunResult,
    detection_rate: f64,
    fppi: f64,
}

fn trace_lines(results: &[RunResult]) -> Vec<TraceLine<'_>> {
    results
        .iter()
        .map(|r| TraceLine { run: r, detection_rate: r.metrics.detection_rate(), fppi: r.metrics.fppi() })
        .collect()
}

fn cmd_run(args: &CommonArgs) -> Result<(), CliError> {
    let (_, exp) = load(args)?;
    if exp.detectors.len() != 1 {
        return Err(CliError::Usage(format!(
            "run needs exactly one detector; the config lists {}, pick one with --detector",
            exp.detectors.len()
        )));
    }
    let start = Instant::now();
    let results = run_experiment(&exp, true, args.jobs)?;
    let sums = summarize(&results);
    write_jsonl(&args.out, "traces.jsonl", &trace_lines(&results))?;
    write_csv(&args.out, "summary.csv", &summary_rows(&sums))?;
    write_curves(&args.out, &results)?;
    write_timing(&args.out, "run", results.len(), start)?;
    if !args.quiet {
        print_summary(&sums);
    }
    Ok(())
}

fn write_curves(dir: &Path, results: &[RunResult]) -> Result<(), CliError> {
    let (path, mut w) = create(dir, "curves.csv")?;
    let err = output_err(&path);
    writeln!(
        w,
        "run,i,n_rejected,n_accepted,n_unvisited,n_ambiguity,p_uniform,p_gaussian,n_uniform,n_gaussian"
    )
    .map_err(|e| err(e.to_string()))?;
    for r in results {
        if let Some(t) = &r.trace {
            let label = format!("{}/scene{}/trial{}/budget{}", r.detector, r.scene, r.trial, r.budget);
            write_curves_csv(&mut w, &label, &extract_curves(t)).map_err(|e| err(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| err(e.to_string()))
}

fn budgets_of(file: &ExperimentFile, exp: &Experiment) -> Vec<usize> {
    if file.budgets.is_empty() {
        let mut b: Vec<usize> = exp.detectors.iter().map(|d| d.config.budget).collect();
        b.sort_unstable();
        b.dedup();
        b
    } else {
        file.budgets.clone()
    }
}

#[derive(Serialize)]
struct EfficiencyRow<'a> {
    detector: &'a str,
    reference: &'a str,
    reference_budget: usize,
    reference_rate: f64,
    /// Smallest budget on the grid where the detector matches the
    /// reference rate; empty when none does.
    matching_budget: Option<usize>,
    window_ratio: Option<f64>,
    cost_ratio: Option<f64>,
}

fn cmd_compare(args: &CommonArgs) -> Result<(), CliError> {
    let (file, mut exp) = load(args)?;
    if exp.detectors.len() < 2 {
        return Err(CliError::Usage("compare needs at least two detectors".into()));
    }
    exp.budgets = budgets_of(&file, &exp);
    let start = Instant::now();
    let results = run_experiment(&exp, false, args.jobs)?;
    let sums = summarize(&results);
    let find = |d: &str, b: usize| sums.iter().find(|s| s.detector == d && s.budget == b).expect("summary cell");

    // Rows are budgets, columns detectors, cells mean detection rates.
    let (path, w) = create(&args.out, "compare.csv")?;
    let err = output_err(&path);
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["budget".to_string()];
    header.extend(exp.detectors.iter().map(|d| d.name.clone()));
    csv.write_record(&header).map_err(|e| err(e.to_string()))?;
    for &b in &exp.budgets {
        let mut row = vec![b.to_string()];
        row.extend(exp.detectors.iter().map(|d| find(&d.name, b).metrics.detection_rate().to_string()));
        csv.write_record(&row).map_err(|e| err(e.to_string()))?;
    }
    csv.flush().map_err(|e| err(e.to_string()))?;

    let reference = exp
        .detectors
        .iter()
        .find(|d| d.kind == crate::detectors::DetectorKind::Mpw)
        .unwrap_or(&exp.detectors[0])
        .name
        .clone();
    let mut grid = exp.budgets.clone();
    grid.sort_unstable();
    let mut eff = Vec::new();
    for &rb in &exp.budgets {
        let r = find(&reference, rb);
        let rate = r.metrics.detection_rate();
        for d in exp.detectors.iter().filter(|d| d.name != reference) {
            let m = grid.iter().copied().find(|&b| find(&d.name, b).metrics.detection_rate() >= rate);
            eff.push(EfficiencyRow {
                detector: &d.name,
                reference: &reference,
                reference_budget: rb,
                reference_rate: rate,
                matching_budget: m,
                window_ratio: m.map(|b| {
                    let s = find(&d.name, b);
                    (s.metrics.windows_used as f64 / s.runs as f64) / (r.metrics.windows_used as f64 / r.runs as f64)
                }),
                cost_ratio: m.map(|b| find(&d.name, b).metrics.cost / r.metrics.cost),
            });
        }
    }
    write_csv(&args.out, "efficiency.csv", &eff)?;
    write_csv(&args.out, "summary.csv", &summary_rows(&sums))?;
    write_jsonl(&args.out, "runs.jsonl", &trace_lines(&results))?;
    write_timing(&args.out, "compare", results.len(), start)?;
    if !args.quiet {
        print_summary(&sums);
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    detector: &'a str,
    t_high: f64,
    budget: usize,
    detection_rate: f64,
    fppi: f64,
    mean_windows: f64,
}

fn cmd_sweep(args: &CommonArgs, t_high: &[f64]) -> Result<(), CliError> {
    let (file, base) = load(args)?;
    let t0 = file.params.t_high;
    let t_low = file.params.t_low;
    let values: Vec<f64> = if t_high.is_empty() {
        let step = (t0 - t_low) / 4.0;
        (-2..=2).map(|k| t0 + k as f64 * step).collect()
    } else {
        t_high.to_vec()
    };
    if let Some(v) = values.iter().find(|&&v| !(v > t_low)) {
        return Err(CliError::Usage(format!("t_high value {v} is not above t_low {t_low}")));
    }
    let start = Instant::now();
    let mut rows_out = Vec::new();
    let mut runs = 0;
    for &th in &values {
        let mut exp = base.clone();
        exp.budgets = budgets_of(&file, &exp);
        for d in &mut exp.detectors {
            d.config.rules.t_high = th;
        }
        let results = run_experiment(&exp, false, args.jobs)?;
        runs += results.len();
        for s in summarize(&results) {
            rows_out.push((th, s));
        }
    }
    let rows: Vec<SweepRow> = rows_out
        .iter()
        .map(|(th, s)| SweepRow {
            detector: &s.detector,
            t_high: *th,
            budget: s.budget,
            detection_rate: s.metrics.detection_rate(),
            fppi: s.metrics.fppi(),
            mean_windows: s.metrics.windows_used as f64 / s.runs as f64,
        })
        .collect();
    write_csv(&args.out, "sweep.csv", &rows)?;
    write_timing(&args.out, "sweep", runs, start)?;
    if !args.quiet {
        println!("{:<12} {:>8} {:>8} {:>8} {:>6}", "detector", "t_high", "budget", "rate", "fppi");
        for r in &rows {
            println!("{:<12} {:>8.3} {:>8} {:>8.3} {:>6.2}", r.detector, r.t_high, r.budget, r.detection_rate, r.fppi);
        }
    }
    Ok(())
}

fn cmd_curves(args: &CommonArgs) -> Result<(), CliError> {
    let (_, exp) = load(args)?;
    let start = Instant::now();
    let results = run_experiment(&exp, true, args.jobs)?;
    write_curves(&args.out, &results)?;
    write_timing(&args.out, "curves", results.len(), start)?;
    if !args.quiet {
        println!("wrote curves for {} runs to {}", results.len(), args.out.join("curves.csv").display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_CONFIG);
        assert_eq!(CliError::Detector(DetectorError::EmptySpace).exit_code(), EXIT_RUNTIME);
        assert_eq!(main_with_args(["pwin", "validate-config", "--config", "/nonexistent/x.cfg"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["pwin", "bogus"]), EXIT_CONFIG);
    }
}
