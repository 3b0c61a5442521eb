use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use quad_wrench::apps::{metrics, write_wrench_map_csv, MetricsConfig};
use quad_wrench::harness::{execute, report, RunOutput};
use quad_wrench::presets::{self, PRESETS};
use quad_wrench::{Error, RunConfig, TimeSeriesLog};

#[derive(Parser)]
#[command(name = "quad-wrench", version, about = "Simulate a quadrotor and estimate the external wrench acting on it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimators {
    Usque,
    Observer,
    Both,
}

impl Estimators {
    fn as_str(self) -> &'static str {
        match self {
            Self::Usque => "usque",
            Self::Observer => "observer",
            Self::Both => "both",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write timeseries.csv, summary.json and config.toml.
    Run {
        /// Built-in scenario (see `presets`).
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        /// Scenario file in TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        estimators: Option<Estimators>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: out/<scenario name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set noise.position_std_m=[0.01,0.01,0.01]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the built-in scenarios.
    Presets {
        /// Print the TOML of one preset instead.
        #[arg(long)]
        show: Option<String>,
    },
    /// Recompute the summary of an existing timeseries.csv.
    Metrics {
        csv: PathBuf,
        #[arg(long, default_value_t = MetricsConfig::default().steady_window_s)]
        steady_window_s: f64,
        #[arg(long, default_value_t = MetricsConfig::default().rmse_skip_s)]
        rmse_skip_s: f64,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with its exit code: 2 for bad input, 1 for runtime errors.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config() { 2 } else { 1 };
        Failure { code, message: format!("{}: {e}", e.module()) }
    }
}

fn config_failure(message: String) -> Failure {
    Failure { code: 2, message: format!("config: {message}") }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 1, message: format!("log: {}: {e}", path.display()) }
}

fn write_run(dir: &Path, output: &RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join("timeseries.csv");
    let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
    output.log.write_csv(BufWriter::new(file))?;
    if let Some(cells) = &output.wrench_map {
        let path = dir.join("wrench_map.csv");
        let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
        write_wrench_map_csv(cells, BufWriter::new(file))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn run(
    preset: Option<String>,
    config: Option<PathBuf>,
    estimators: Option<Estimators>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mut overrides: Vec<String>,
) -> Result<(), Failure> {
    let text = match (&preset, &config) {
        (Some(name), _) => presets::find(name)?.toml.to_string(),
        (None, Some(path)) => {
            fs::read_to_string(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(config_failure("either --preset or --config is required".into())),
    };
    if let Some(e) = estimators {
        overrides.push(format!("scenario.estimators=\"{}\"", e.as_str()));
    }
    if let Some(s) = seed {
        overrides.push(format!("scenario.seed={s}"));
    }
    let cfg = RunConfig::from_toml_with_overrides(&text, &overrides)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.scenario.name));
    fs::create_dir_all(&dir).map_err(|e| config_failure(format!("output directory {}: {e}", dir.display())))?;
    write_text(&dir.join("config.toml"), &cfg.to_toml()?)?;

    let outputs = execute(&cfg)?;
    match outputs.as_slice() {
        [single] if single.label.is_none() => write_run(&dir, single)?,
        many => {
            for o in many {
                write_run(&dir.join(o.label.as_deref().unwrap_or("run")), o)?;
            }
        }
    }
    let rep = report(&cfg, &outputs);
    let json = serde_json::to_string_pretty(&rep).map_err(Error::from)?;
    write_text(&dir.join("summary.json"), &json)?;

    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{} (seed {}) -> {}", cfg.scenario.name, cfg.scenario.seed, dir.display());
    for o in &outputs {
        for e in &o.summary.estimators {
            let label = o.label.as_deref().map(|l| format!("[{l}] ")).unwrap_or_default();
            let rise = e.rise_time_s.map(|r| format!("{r:.2} s")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                stdout,
                "  {label}{:<8} rise {rise:>7}  force rmse {:.4} N  torque rmse {:.5} N·m",
                e.estimator, e.force_rmse_n, e.torque_rmse_nm
            );
        }
        if let Some(t) = &o.tracking {
            let conv = t.convergence_time_s.map(|c| format!("{c:.1} s")).unwrap_or_else(|| "never".into());
            let _ = writeln!(stdout, "  tracking: below {:.2} m after {conv}", t.threshold_m);
        }
    }
    Ok(())
}

fn list_presets(show: Option<String>) -> Result<(), Failure> {
    let mut stdout = std::io::stdout().lock();
    if let Some(name) = show {
        let _ = write!(stdout, "{}", presets::find(&name)?.toml);
        return Ok(());
    }
    for p in &PRESETS {
        let _ = writeln!(stdout, "{:<18} {}", p.name, p.description());
    }
    Ok(())
}

fn recompute(csv: PathBuf, steady_window_s: f64, rmse_skip_s: f64, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = File::open(&csv).map_err(|e| config_failure(format!("{}: {e}", csv.display())))?;
    let log = TimeSeriesLog::read_csv(std::io::BufReader::new(file))?;
    let summary = metrics(&log, &MetricsConfig { steady_window_s, rmse_skip_s })?;
    let json = summary.to_json()?;
    match out {
        Some(path) => write_text(&path, &json)?,
        None => {
            let _ = writeln!(std::io::stdout().lock(), "{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { preset, config, estimators, seed, out, overrides } => {
            run(preset, config, estimators, seed, out, overrides)
        }
        Command::Presets { show } => list_presets(show),
        Command::Metrics { csv, steady_window_s, rmse_skip_s, out } => recompute(csv, steady_window_s, rmse_skip_s, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("quad-wrench: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
