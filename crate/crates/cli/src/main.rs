//! `gridcast` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridcast_core::bench::{self, BenchConfig, Metric};
use gridcast_core::data::{self, TimeSeries};
use gridcast_core::multistep::{
    self, build_hybrid, train_horizon_ensemble, HorizonEnsemble, HybridForecaster, Method, MethodParams, ModelSpec,
};
use gridcast_core::Error;

#[derive(Parser)]
#[command(name = "gridcast", version, about = "Multi-horizon power-demand forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a household power file into a series container.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = data::DEFAULT_COLUMN)]
        column: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one ensemble of per-step models.
    Train {
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 30)]
        window: usize,
        #[arg(long, default_value_t = 120)]
        horizon: usize,
        /// Training samples, taken from `--start` on.
        #[arg(long)]
        train_size: usize,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Series container or household file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = data::DEFAULT_COLUMN)]
        column: String,
        /// Hyperparameter override, e.g. `--set hidden=20`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads, 0 = all CPUs.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the h forecasts (kW) whose window ends just before `--at`.
    Forecast {
        /// Ensemble or hybrid file.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = data::DEFAULT_COLUMN)]
        column: String,
        /// Index of the first forecast value in the series.
        #[arg(long)]
        at: usize,
    },
    /// Run a benchmark from a config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Config override, e.g. `--set lstm.epochs=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Report the variance of absolute instead of signed errors.
        #[arg(long)]
        abs_error_variance: bool,
    },
    /// Build a per-step hybrid from trained ensembles.
    Hybrid {
        #[arg(long, num_args = 2.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long, default_value = data::DEFAULT_COLUMN)]
        column: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Training(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        if e.is_training_failure() {
            return Failure::Training(msg);
        }
        match e.root() {
            Error::Config(_) | Error::InvalidParameter(_) => Failure::Usage(msg),
            _ => Failure::Data(msg),
        }
    }
}

fn split_pair(s: &str) -> Result<(&str, &str), Failure> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Failure::Usage(format!("expected KEY=VALUE, got `{s}`")))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            fs::create_dir_all(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
        }
        _ => Ok(()),
    }
}

enum Forecaster {
    Ensemble(HorizonEnsemble),
    Hybrid(HybridForecaster),
}

fn load_forecaster(path: &Path) -> Result<Forecaster, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or("").trim_end();
    let parsed = if first == multistep::HYBRID_HEADER {
        HybridForecaster::from_text(&text).map(Forecaster::Hybrid)
    } else {
        HorizonEnsemble::from_text(&text).map(Forecaster::Ensemble)
    };
    parsed.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Ingest { input, column, out } => {
            let series = data::load_any(&input, &column)?;
            ensure_parent(&out)?;
            series.save(&out)?;
            eprintln!(
                "{} samples ({} imputed) written to {}",
                series.len(),
                series.imputed_count(),
                out.display()
            );
        }
        Command::Train {
            method,
            window,
            horizon,
            train_size,
            start,
            seed,
            data: path,
            column,
            set,
            workers,
            out,
        } => {
            let mut params = MethodParams::defaults(method, window);
            for s in &set {
                let (k, v) = split_pair(s)?;
                params.set(k, v)?;
            }
            let spec = ModelSpec::new(params, window, seed)?;
            let series = data::load_any(&path, &column)?;
            let train = series.slice(start..start.saturating_add(train_size))?;
            let ens = train_horizon_ensemble(&spec, &train, horizon, workers)?;
            ensure_parent(&out)?;
            ens.save(&out)?;
            eprintln!(
                "{method}: {} model(s), {:.1} s training, written to {}",
                ens.models().len(),
                ens.total_train_seconds(),
                out.display()
            );
        }
        Command::Forecast {
            model,
            data: path,
            column,
            at,
        } => {
            let series = data::load_any(&path, &column)?;
            let rows = match load_forecaster(&model)? {
                Forecaster::Ensemble(e) => e.forecast_at(series.values(), &[at])?,
                Forecaster::Hybrid(h) => h.forecast_at(series.values(), &[at])?,
            };
            let line: Vec<String> = rows[0].iter().map(|v| v.to_string()).collect();
            println!("{}", line.join(","));
        }
        Command::Bench {
            config,
            out_dir,
            set,
            abs_error_variance,
        } => {
            let mut cfg = BenchConfig::load(&config)?;
            for s in &set {
                let (k, v) = split_pair(s)?;
                cfg.set(k, v)?;
            }
            if abs_error_variance {
                cfg.abs_error_variance = true;
            }
            cfg.validate()?;
            let report = bench::run_benchmark(&cfg)?;
            fs::create_dir_all(&out_dir).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;
            bench::emit_csv(&report, out_dir.join("report.csv"))?;
            bench::emit_plot(&report, Metric::Mae, out_dir.join("mae.svg"))?;
            bench::emit_plot(&report, Metric::Variance, out_dir.join("variance.svg"))?;
            print!("{}", report.summary());
        }
        Command::Hybrid {
            models,
            validation,
            column,
            out,
        } => {
            let mut ensembles = Vec::with_capacity(models.len());
            for m in &models {
                ensembles.push(HorizonEnsemble::load(m)?);
            }
            let series: TimeSeries = data::load_any(&validation, &column)?;
            let hybrid = build_hybrid(ensembles, series.values())?;
            ensure_parent(&out)?;
            hybrid.save(&out)?;
            let names: Vec<&str> = hybrid.assignment().iter().map(|m| m.name()).collect();
            eprintln!("assignment: {}", names.join(" "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Training(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
