use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use planlab::bounds_grid::{self, BoundsGrid};
use planlab::experiment::{generate_maps, load_instance};
use planlab::{check_properties, run_experiment, ExperimentConfig, HarnessError};
use planlab_core::error_model::estimate_errors;
use planlab_core::oracle::shortest_plan;
use planlab_core::solver::{solve, PathSelectionProblem};
use planlab_core::sokoban::GeneratorConfig;
use planlab_core::TrajectoryRecord;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "planlab", version, about = "Budgeted planning-agent simulations on Sokoban")]
#[command(after_help = "Set PLANLAB_WORKERS to bound the worker pool size.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instance files with a given oracle-optimal length.
    GenMaps {
        #[arg(long)]
        t_star: u32,
        #[arg(long, default_value_t = 10)]
        count: u32,
        #[arg(long, default_value_t = 2)]
        slack: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        boxes: usize,
        #[arg(long, default_value_t = 7)]
        width: i32,
        #[arg(long, default_value_t = 7)]
        height: i32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Evaluate the experiment's properties; exit 3 if any fails.
        #[arg(long)]
        check: bool,
    },
    /// Print closed-form bounds over a grid as CSV.
    Bounds {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Solve a path-selection problem.
    Solve { problem: PathBuf },
    /// Oracle utilities.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Estimate error rates from a JSONL trajectory log.
    EstimateErrors { log: PathBuf },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Shortest plan for an instance file.
    Solve { instance: PathBuf },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
        file: path.display().to_string(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

fn config_error(path: &Path, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config {
        file: path.display().to_string(),
        message: message.to_string(),
    }
}

fn execute(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::GenMaps {
            t_star,
            count,
            slack,
            seed,
            boxes,
            width,
            height,
            out,
        } => {
            let generator = GeneratorConfig {
                slack,
                boxes,
                width,
                height,
                ..Default::default()
            };
            std::fs::create_dir_all(&out).map_err(|source| HarnessError::Io { path: out.clone(), source })?;
            for (i, inst) in generate_maps(seed, t_star, count, &generator)?.iter().enumerate() {
                let path = out.join(format!("map_T{t_star}_{i:03}.json"));
                std::fs::write(&path, inst.to_json()).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
                println!("{}", path.display());
            }
        }
        Command::Run { config, check } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let out = run_experiment(&cfg)?;
            for r in &out.table.rows {
                println!("{}: {:.4} ± {:.4} (n={})", r.key, r.mean, r.stderr, r.n);
            }
            println!("results written to {}", out.output_dir.display());
            if check {
                let results = check_properties(&cfg, &out);
                for r in &results {
                    println!("{r}");
                }
                if results.iter().any(|r| !r.passed) {
                    return Ok(ExitCode::from(EXIT_CHECK));
                }
            }
        }
        Command::Bounds { grid } => {
            let grid: BoundsGrid = parse_json(&grid)?;
            let rows = grid.rows().map_err(|m| config_error(Path::new("bounds grid"), m))?;
            bounds_grid::write_csv(&rows, std::io::stdout().lock())?;
        }
        Command::Solve { problem } => {
            let p: PathSelectionProblem = parse_json(&problem)?;
            let solution = solve(&p).map_err(|e| config_error(&problem, e))?;
            println!("{}", serde_json::to_string_pretty(&solution)?);
        }
        Command::Oracle {
            command: OracleCommand::Solve { instance },
        } => {
            let inst = load_instance(&instance)?;
            match shortest_plan(&inst.initial) {
                Ok(plan) => {
                    let actions: String = plan.actions.iter().map(|a| a.as_char()).collect();
                    println!("{}", serde_json::json!({ "length": plan.length, "actions": actions }));
                }
                Err(e) => println!("{}", serde_json::json!({ "unsolvable": e.to_string() })),
            }
        }
        Command::EstimateErrors { log } => {
            let file = std::fs::File::open(&log).map_err(|source| HarnessError::Io { path: log.clone(), source })?;
            let mut records = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|source| HarnessError::Io { path: log.clone(), source })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: TrajectoryRecord =
                    serde_json::from_str(&line).map_err(|e| config_error(&log, format!("line {}: {e}", i + 1)))?;
                records.push(record);
            }
            println!("{}", serde_json::to_string_pretty(&estimate_errors(&records))?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
