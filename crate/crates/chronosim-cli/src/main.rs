//! `chronosim` — runs clock-dilation scenarios from builtin presets or
//! config files and writes CSV/JSON/plot-script outputs.
//!
//! Exit codes: 0 success, 1 validation failure (bad flags, unknown
//! scenario, unreadable or invalid config), 2 compute failure (a driver
//! aborted or marked rows failed, or outputs could not be written),
//! 3 verdict failure (the scenario ran but a named check came out false).
//! A batch exits with the highest code any target produced.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use chronosim_core::error::Error;
use chronosim_core::scenario::{
    builtin_config, config_from_file, emit_outputs, list_scenarios, run_scenario, ResultRecord,
    RunOptions, ScenarioConfig,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_COMPUTE: u8 = 2;
const EXIT_VERDICT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "chronosim",
    version,
    about = "Relativistic quantum clock simulator",
    long_about = "Runs time-dilation scenarios for quantum clocks: builtin studies by name, \
                  or custom sweeps from key/value config files."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios and write results.csv, summary.json, plot.gp.
    Run {
        /// Builtin scenario names or paths to config files.
        #[arg(required = true, value_name = "SCENARIO|FILE")]
        targets: Vec<String>,

        /// Output root; each scenario writes into <out>/<name>/.
        /// Overrides CHRONOSIM_OUT and the config's own output.dir.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,

        /// Override grid.n for every target.
        #[arg(long, value_name = "N")]
        grid_n: Option<usize>,

        /// Override the driver's default check tolerance.
        #[arg(long, value_name = "X")]
        tol: Option<f64>,
    },

    /// List builtin scenarios.
    List,

    /// Parse and validate a config file without running it.
    Validate {
        /// Path to a config file.
        #[arg(value_name = "FILE")]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not failures.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run { targets, out, grid_n, tol } => run(&targets, out.as_deref(), grid_n, tol),
        Command::List => list(),
        Command::Validate { config } => validate(&config),
    };
    ExitCode::from(code)
}

fn list() -> u8 {
    let width = list_scenarios().iter().map(|s| s.name.len()).max().unwrap_or(0);
    for info in list_scenarios() {
        println!("{:width$}  {}", info.name, info.summary);
    }
    0
}

fn validate(path: &Path) -> u8 {
    match config_from_file(path) {
        Ok(cfg) => {
            println!("{}: ok (config hash {})", path.display(), cfg.config_hash());
            0
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            EXIT_VALIDATION
        }
    }
}

fn run(targets: &[String], out: Option<&Path>, grid_n: Option<usize>, tol: Option<f64>) -> u8 {
    let options = RunOptions { grid_n, tol };
    let env_out = std::env::var_os("CHRONOSIM_OUT").map(PathBuf::from);
    let mut worst = 0u8;
    for target in targets {
        let code = run_one(target, out, env_out.as_deref(), &options);
        worst = worst.max(code);
    }
    worst
}

fn resolve(target: &str) -> Result<ScenarioConfig, Error> {
    if let Some(cfg) = builtin_config(target) {
        return Ok(cfg);
    }
    if Path::new(target).exists() {
        return config_from_file(Path::new(target));
    }
    Err(Error::Validation {
        field: "scenario".to_string(),
        message: format!(
            "`{target}` is neither a builtin scenario nor an existing config file; \
             `chronosim list` shows the builtins"
        ),
    })
}

fn run_one(target: &str, out: Option<&Path>, env_out: Option<&Path>, options: &RunOptions) -> u8 {
    let cfg = match resolve(target) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{target}: {e}");
            return EXIT_VALIDATION;
        }
    };
    let record = match run_scenario(&cfg, options) {
        Ok(record) => record,
        Err(e) => {
            eprintln!("{target}: {e}");
            return EXIT_VALIDATION;
        }
    };
    let root = out
        .map(Path::to_path_buf)
        .or_else(|| env_out.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let dir = root.join(&record.scenario);
    // Failed rows are still data: emit whatever the run produced before
    // reporting the failure.
    let emitted = match emit_outputs(std::slice::from_ref(&record), &dir) {
        Ok(files) => files,
        Err(e) => {
            eprintln!("{target}: {e}");
            return EXIT_COMPUTE;
        }
    };
    let (code, status) = describe(&record);
    println!("{}: {status} -> {}", record.scenario, emitted.results_csv.display());
    code
}

fn describe(record: &ResultRecord) -> (u8, String) {
    let failed_rows = record.rows.iter().filter(|r| r.failed).count();
    if record.compute_failed() {
        let detail = record
            .compute_error
            .clone()
            .unwrap_or_else(|| format!("{failed_rows} of {} rows failed", record.rows.len()));
        return (EXIT_COMPUTE, format!("compute failure ({detail})"));
    }
    if !record.all_verdicts_hold() {
        let broken: Vec<&str> = record
            .verdicts
            .iter()
            .filter(|(_, &ok)| !ok)
            .map(|(k, _)| k.as_str())
            .collect();
        return (EXIT_VERDICT, format!("check failed [{}]", broken.join(", ")));
    }
    let rows = record.rows.len();
    let checks = record.verdicts.len();
    let mut summary = format!("ok ({rows} row{}", if rows == 1 { "" } else { "s" });
    if checks > 0 {
        let _ = std::fmt::Write::write_fmt(
            &mut summary,
            format_args!(", {checks} check{} passed", if checks == 1 { "" } else { "s" }),
        );
    }
    summary.push(')');
    (0, summary)
}
