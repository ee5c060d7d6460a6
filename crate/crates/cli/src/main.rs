use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eit_size_cli::commands::lines_table;
use eit_size_cli::records::write_csv;
use eit_size_cli::{cmd_freq, cmd_lines, cmd_report, cmd_solve, cmd_sweep, CliError, ExperimentConfig, LineScenario};

#[derive(Parser)]
#[command(name = "eit-size", version, about = "Size estimates of inclusions from boundary power measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one homogeneous/inclusion pair and print its record as JSON.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a sweep plan and write the records as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a theoretical bound line and plot-ready endpoints.
    Lines {
        #[arg(long)]
        k: f64,
        #[arg(long, value_enum, default_value = "uniform")]
        scenario: Scenario,
        /// Cosine mode.
        #[arg(long, default_value_t = 1)]
        n: u32,
        /// Nondimensional contact impedance.
        #[arg(long, default_value_t = 0.2)]
        zeta: f64,
        /// Largest gap of the printed segment.
        #[arg(long, default_value_t = 0.1)]
        gap_max: f64,
    },
    /// Empirical constants and power-law fit of record files.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Keep only records with this contrast.
        #[arg(long)]
        k: Option<f64>,
    },
    /// Frequency of the config's Neumann data.
    Freq {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Uniform,
    Cosine,
    Cem,
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut w = open_out(out)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Solve { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rec = cmd_solve(&cfg)?;
            emit_json(&rec, out.or(cfg.outputs.json.as_deref()))
        }
        Command::Sweep { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let records = cmd_sweep(&cfg, seed)?;
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            log::info!("{} records, {failed} failed", records.len());
            write_csv(open_out(out.or(cfg.outputs.csv.as_deref()))?, &records)
        }
        Command::Lines {
            k,
            scenario,
            n,
            zeta,
            gap_max,
        } => {
            let scenario = match scenario {
                Scenario::Uniform => LineScenario::Uniform,
                Scenario::Cosine => LineScenario::Cosine { n },
                Scenario::Cem => LineScenario::Cem { zeta },
            };
            let line = cmd_lines(k, scenario)?;
            let mut w = open_out(out)?;
            w.write_all(lines_table(k, scenario, &line, gap_max).as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| CliError::Io(e.to_string()))
        }
        Command::Report { csv, k } => emit_json(&cmd_report(&csv, k)?, out),
        Command::Freq { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            emit_json(&cmd_freq(&cfg)?, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EIT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
