use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annihilator_core::scenario::{traces_csv, Overrides, Pipeline, Runner, Scenario};
use annihilator_core::Error;
use clap::{Args, Parser, Subcommand};

/// Outer annihilators and Smirnov-class detectors on scenario configs.
#[derive(Parser)]
#[command(name = "annihilator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build γ (or β) and run the weak-annihilation traces.
    Annihilate(Common),
    /// Run every detector and combine them into per-region verdicts.
    Classify(Common),
    /// Run the strong and weak Smirnov detectors only.
    Smirnov(Common),
    /// Emit the raw ε-ladder of one detector on one dictionary vector as CSV.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detector: String,
        #[arg(long)]
        vector: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report, traces and plot tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated, strictly decreasing ε values.
    #[arg(long, value_name = "CSV")]
    eps_ladder: Option<String>,
    /// Sample count of plot tables; implies writing them.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Numeric(format!("{}: {e}", path.display()))
}

fn parse_ladder(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Failure::Config(format!("--eps-ladder: cannot parse '{t}'")))
        })
        .collect()
}

fn prepare(common: &Common) -> Result<(Scenario, Runner, Option<PathBuf>), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let scenario = Scenario::from_json(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let overrides = Overrides {
        eps_ladder: common.eps_ladder.as_deref().map(parse_ladder).transpose()?,
        grid: common.grid,
        seed: common.seed,
    };
    let runner = Runner::new(&scenario, &overrides)?;
    let out = common
        .out
        .clone()
        .or_else(|| scenario.config().outputs.dir.as_ref().map(PathBuf::from));
    Ok((scenario, runner, out))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn run_pipeline(common: &Common, pipeline: Pipeline) -> Result<(), Failure> {
    let (scenario, runner, out) = prepare(common)?;
    let report = runner.report(pipeline)?;
    let json = report.to_json_string();
    print!("{json}");
    if let Some(dir) = out {
        fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        write(&dir, "report.json", &json)?;
        write(&dir, "traces.csv", &traces_csv(&report.traces))?;
        if scenario.config().outputs.plots || common.grid.is_some() {
            for (name, table) in runner.plot_tables()? {
                write(&dir, &name, &table)?;
            }
        }
    }
    Ok(())
}

fn run_trace(common: &Common, detector: &str, vector: &str) -> Result<(), Failure> {
    let (_, runner, out) = prepare(common)?;
    let csv = traces_csv(&runner.trace(detector, vector)?);
    match out {
        Some(dir) => {
            fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
            write(&dir, &format!("trace_{detector}_{vector}.csv"), &csv)
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Annihilate(c) => run_pipeline(c, Pipeline::Annihilate),
        Command::Classify(c) => run_pipeline(c, Pipeline::Classify),
        Command::Smirnov(c) => run_pipeline(c, Pipeline::Smirnov),
        Command::Trace {
            common,
            detector,
            vector,
        } => run_trace(common, detector, vector),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
