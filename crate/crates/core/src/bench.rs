//! Per-step error metrics, the benchmark runner, and report output.
//!
//! # Config file
//!
//! Flat `key = value` lines; `#` starts a comment. Keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `data` | required | household file or series container, relative to the config file |
//! | `column` | `Global_active_power` | column to read from a household file |
//! | `methods` | `arma,svr,nar,lstm` | comma-separated, evaluated in this order |
//! | `window` | 30 | lag window n |
//! | `horizon` | 120 | forecast steps h |
//! | `train_size` | 5000 | training samples per method |
//! | `<method>.train_size` | `train_size` | per-method override |
//! | `test_size` | rest of the series | samples in the test region |
//! | `start_offset` | 0 | first series index used |
//! | `stride` | h | distance between test forecast origins |
//! | `seed` | 1 | base seed; step k uses seed + k |
//! | `hybrid` | true | build the per-step hybrid (needs two or more methods) |
//! | `abs_error_variance` | false | variance of absolute rather than signed errors |
//! | `workers` | 0 | worker threads, 0 = all CPUs; `GRIDCAST_WORKERS` caps it |
//! | `<method>.<param>` | | hyperparameters, e.g. `nar.hidden = 40` |
//!
//! Layout along the series, after `start_offset`: every method trains on the
//! `train_size` samples that end where the validation block begins. The
//! validation block (only with `hybrid`) holds 10% of the region before the
//! test data. The test region follows it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{self, TimeSeries};
use crate::error::{Error, Result};
use crate::multistep::{
    self, actuals_at, build_hybrid, train_horizon_ensemble, HorizonEnsemble, Method, MethodParams, ModelSpec,
};

pub const CSV_HEADER: &str = "method,step,mae_kw,error_variance_kw2";
/// Share of the pre-test region held out for hybrid selection.
pub const VALIDATION_FRACTION: f64 = 0.1;

fn check_shapes(forecasts: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<usize> {
    if forecasts.len() != actuals.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} forecast rows vs {} actual rows",
            forecasts.len(),
            actuals.len()
        )));
    }
    let Some(first) = forecasts.first() else {
        return Err(Error::Empty);
    };
    let h = first.len();
    for (m, (f, a)) in forecasts.iter().zip(actuals).enumerate() {
        if f.len() != h || a.len() != h {
            return Err(Error::ShapeMismatch(format!(
                "row {m}: {} forecasts and {} actuals, expected {h}",
                f.len(),
                a.len()
            )));
        }
    }
    Ok(h)
}

/// Mean absolute error of every step over the M forecast origins.
pub fn mae_per_step(forecasts: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<Vec<f64>> {
    let h = check_shapes(forecasts, actuals)?;
    let m = forecasts.len() as f64;
    Ok((0..h)
        .map(|k| {
            forecasts
                .iter()
                .zip(actuals)
                .map(|(f, a)| (f[k] - a[k]).abs())
                .sum::<f64>()
                / m
        })
        .collect())
}

/// Sample variance (N − 1) of the signed errors forecast − actual per step.
pub fn error_variance_per_step(forecasts: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<Vec<f64>> {
    variance_with(forecasts, actuals, |e| e)
}

/// Sample variance of the absolute errors per step.
pub fn abs_error_variance_per_step(forecasts: &[Vec<f64>], actuals: &[Vec<f64>]) -> Result<Vec<f64>> {
    variance_with(forecasts, actuals, f64::abs)
}

fn variance_with(forecasts: &[Vec<f64>], actuals: &[Vec<f64>], map: fn(f64) -> f64) -> Result<Vec<f64>> {
    let h = check_shapes(forecasts, actuals)?;
    let m = forecasts.len();
    if m < 2 {
        return Err(Error::TooFewForecasts(m));
    }
    Ok((0..h)
        .map(|k| {
            let errs: Vec<f64> = forecasts.iter().zip(actuals).map(|(f, a)| map(f[k] - a[k])).collect();
            let mean = errs.iter().sum::<f64>() / m as f64;
            errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (m - 1) as f64
        })
        .collect())
}

/// Benchmark run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub data: PathBuf,
    pub column: String,
    pub methods: Vec<Method>,
    pub window: usize,
    pub horizon: usize,
    pub train_size: usize,
    pub train_sizes: BTreeMap<Method, usize>,
    pub test_size: Option<usize>,
    pub start_offset: usize,
    pub stride: Option<usize>,
    pub seed: u64,
    pub hybrid: bool,
    pub abs_error_variance: bool,
    pub workers: usize,
    params: BTreeMap<Method, MethodParams>,
    /// Hyperparameter keys set explicitly, replayed if the window changes.
    overrides: Vec<(Method, String, String)>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl BenchConfig {
    pub fn new(data: impl Into<PathBuf>) -> Self {
        let window = 30;
        BenchConfig {
            data: data.into(),
            column: data::DEFAULT_COLUMN.to_string(),
            methods: Method::ALL.to_vec(),
            window,
            horizon: 120,
            train_size: 5000,
            train_sizes: BTreeMap::new(),
            test_size: None,
            start_offset: 0,
            stride: None,
            seed: 1,
            hybrid: true,
            abs_error_variance: false,
            workers: 0,
            params: Method::ALL
                .iter()
                .map(|&m| (m, MethodParams::defaults(m, window)))
                .collect(),
            overrides: Vec::new(),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "data" => self.data = PathBuf::from(value),
            "column" => self.column = value.to_string(),
            "methods" => {
                let methods = value
                    .split(',')
                    .map(|m| m.parse::<Method>().map_err(|e| Error::Config(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                if methods.is_empty() {
                    return Err(Error::Config("no methods listed".into()));
                }
                self.methods = methods;
            }
            "window" => {
                self.window = parse_num(key, value)?;
                for &m in &Method::ALL {
                    self.params.insert(m, MethodParams::defaults(m, self.window));
                }
                for (m, k, v) in self.overrides.clone() {
                    self.params.get_mut(&m).expect("all methods present").set(&k, &v)?;
                }
            }
            "horizon" => self.horizon = parse_num(key, value)?,
            "train_size" => self.train_size = parse_num(key, value)?,
            "test_size" => self.test_size = Some(parse_num(key, value)?),
            "start_offset" => self.start_offset = parse_num(key, value)?,
            "stride" => self.stride = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "hybrid" => self.hybrid = parse_bool(key, value)?,
            "abs_error_variance" => self.abs_error_variance = parse_bool(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            other => {
                let (prefix, rest) = other
                    .split_once('.')
                    .ok_or_else(|| Error::Config(format!("unknown key `{other}`")))?;
                let method: Method = prefix
                    .parse()
                    .map_err(|_| Error::Config(format!("unknown key `{other}`")))?;
                if rest == "train_size" {
                    self.train_sizes.insert(method, parse_num(key, value)?);
                } else {
                    self.params.get_mut(&method).expect("all methods present").set(rest, value)?;
                    self.overrides.push((method, rest.to_string(), value.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Parses config text; a relative `data` path is resolved against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = BenchConfig::new(PathBuf::new());
        let mut saw_data = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_config_prefix(&e))))?;
            saw_data |= key.trim() == "data";
        }
        if !saw_data {
            return Err(Error::Config("missing `data` key".into()));
        }
        if cfg.data.is_relative() {
            cfg.data = base_dir.join(&cfg.data);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.horizon == 0 {
            return Err(Error::Config("window and horizon must be ≥ 1".into()));
        }
        if self.stride == Some(0) {
            return Err(Error::Config("stride must be ≥ 1".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method {m} listed twice")));
            }
            self.spec(*m).map_err(|e| Error::Config(format!("{m}: {e}")))?;
            if self.train_size_of(*m) < self.window + self.horizon {
                return Err(Error::Config(format!(
                    "{m}: train size must be at least window + horizon"
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self, method: Method) -> &MethodParams {
        &self.params[&method]
    }

    pub fn set_params(&mut self, params: MethodParams) {
        self.params.insert(params.method(), params);
    }

    pub fn train_size_of(&self, method: Method) -> usize {
        self.train_sizes.get(&method).copied().unwrap_or(self.train_size)
    }

    pub fn spec(&self, method: Method) -> Result<ModelSpec> {
        ModelSpec::new(self.params[&method].clone(), self.window, self.seed)
    }

    pub fn stride_or_default(&self) -> usize {
        self.stride.unwrap_or(self.horizon)
    }

    fn hybrid_enabled(&self) -> bool {
        self.hybrid && self.methods.len() >= 2
    }

    /// Validation block length: 10% of the region before the test data.
    pub fn validation_len(&self) -> usize {
        if !self.hybrid_enabled() {
            return 0;
        }
        let max_train = self.methods.iter().map(|&m| self.train_size_of(m)).max().unwrap_or(0);
        (max_train as f64 * VALIDATION_FRACTION / (1.0 - VALIDATION_FRACTION)).ceil() as usize
    }

    /// Every setting as (key, value), in a fixed order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("data".to_string(), self.data.display().to_string()),
            ("column".into(), self.column.clone()),
            (
                "methods".into(),
                self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            ),
            ("window".into(), self.window.to_string()),
            ("horizon".into(), self.horizon.to_string()),
            ("train_size".into(), self.train_size.to_string()),
        ];
        for (m, s) in &self.train_sizes {
            out.push((format!("{m}.train_size"), s.to_string()));
        }
        out.push((
            "test_size".into(),
            self.test_size.map_or_else(|| "rest".into(), |t| t.to_string()),
        ));
        out.push(("start_offset".into(), self.start_offset.to_string()));
        out.push(("stride".into(), self.stride_or_default().to_string()));
        out.push(("seed".into(), self.seed.to_string()));
        out.push(("hybrid".into(), self.hybrid.to_string()));
        out.push(("abs_error_variance".into(), self.abs_error_variance.to_string()));
        out.push(("workers".into(), self.workers.to_string()));
        for m in &self.methods {
            for (k, v) in self.params[m].pairs() {
                out.push((format!("{m}.{k}"), v));
            }
        }
        out
    }
}

fn strip_config_prefix(e: &Error) -> String {
    match e {
        Error::Config(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Test metrics of one forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub name: String,
    pub mae: Vec<f64>,
    pub error_variance: Vec<f64>,
    /// Training seconds summed over subproblems.
    pub train_seconds: f64,
}

impl MethodResult {
    pub fn mean_mae(&self) -> f64 {
        self.mae.iter().sum::<f64>() / self.mae.len() as f64
    }

    pub fn mean_variance(&self) -> f64 {
        self.error_variance.iter().sum::<f64>() / self.error_variance.len() as f64
    }
}

/// Hybrid selection outcome on the validation block.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSummary {
    pub assignment: Vec<Method>,
    pub validation: Vec<(Method, Vec<f64>)>,
    /// MAE of the hybrid's own forecasts on the validation block.
    pub validation_mae: Vec<f64>,
    pub validation_origins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub horizon: usize,
    /// Minutes per forecast step.
    pub step_minutes: f64,
    pub forecast_count: usize,
    pub results: Vec<MethodResult>,
    pub config: Vec<(String, String)>,
    pub hybrid: Option<HybridSummary>,
    /// Model warnings, e.g. near-unit-root ARMA fits.
    pub warnings: Vec<String>,
}

impl EvaluationReport {
    pub fn result(&self, name: &str) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} forecast origins, h = {} ({} min per step)",
            self.forecast_count, self.horizon, self.step_minutes
        );
        let _ = writeln!(
            out,
            "{:<8} {:>12} {:>12} {:>12} {:>12} {:>10}",
            "method", "mean MAE", "MAE step 1", "MAE step h", "mean var", "train s"
        );
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<8} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>10.1}",
                r.name,
                r.mean_mae(),
                r.mae[0],
                r.mae[r.mae.len() - 1],
                r.mean_variance(),
                r.train_seconds
            );
        }
        if let Some(h) = &self.hybrid {
            let names: Vec<&str> = h.assignment.iter().map(|m| m.name()).collect();
            let _ = writeln!(out, "hybrid assignment: {}", names.join(" "));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn method_err(method: impl ToString, e: Error) -> Error {
    Error::MethodFailed {
        method: method.to_string(),
        source: Box::new(e),
    }
}

/// Loads the data, trains one ensemble per configured method, evaluates
/// them on the test region, and optionally builds the hybrid.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let series = data::load_any(&cfg.data, &cfg.column)?;
    run_benchmark_on(cfg, &series)
}

/// [`run_benchmark`] on an already loaded series; `cfg.data` is ignored.
pub fn run_benchmark_on(cfg: &BenchConfig, series: &TimeSeries) -> Result<EvaluationReport> {
    cfg.validate()?;
    let (n, h) = (cfg.window, cfg.horizon);
    let values = series.values();
    let max_train = cfg.methods.iter().map(|&m| cfg.train_size_of(m)).max().unwrap_or(0);
    let val_len = cfg.validation_len();
    let val_start = cfg.start_offset + max_train;
    let test_start = val_start + val_len;
    let test_end = match cfg.test_size {
        Some(t) => test_start + t,
        None => values.len(),
    };
    let needed = (test_start + h + 1).max(test_end);
    if values.len() < needed || test_end < test_start + h + 1 {
        return Err(Error::SeriesTooShort {
            needed,
            available: values.len(),
        });
    }

    let stride = cfg.stride_or_default();
    let origins: Vec<usize> = (test_start..=test_end - h).step_by(stride).collect();
    if origins.len() < 2 {
        return Err(Error::TooFewForecasts(origins.len()));
    }
    let actuals = actuals_at(values, &origins, h);
    let variance = if cfg.abs_error_variance {
        abs_error_variance_per_step
    } else {
        error_variance_per_step
    };

    let mut results = Vec::new();
    let mut ensembles: Vec<HorizonEnsemble> = Vec::new();
    let mut warnings = Vec::new();
    for &method in &cfg.methods {
        let spec = cfg.spec(method).map_err(|e| method_err(method, e))?;
        let train = series.slice(val_start - cfg.train_size_of(method)..val_start)?;
        let ens = train_horizon_ensemble(&spec, &train, h, cfg.workers).map_err(|e| method_err(method, e))?;
        if let Some(multistep::FittedModel::Arma(a)) = ens.models().first() {
            warnings.extend(a.warnings.iter().map(|w| format!("arma: {w}")));
        }
        let forecasts = ens.forecast_at(values, &origins).map_err(|e| method_err(method, e))?;
        results.push(MethodResult {
            name: method.name().to_string(),
            mae: mae_per_step(&forecasts, &actuals)?,
            error_variance: variance(&forecasts, &actuals)?,
            train_seconds: ens.total_train_seconds(),
        });
        ensembles.push(ens);
    }

    let hybrid = if cfg.hybrid_enabled() {
        let validation = &values[val_start - n..test_start];
        let hyb = build_hybrid(ensembles, validation).map_err(|e| method_err("hybrid", e))?;
        let val_origins = multistep::validation_origins(validation.len(), n, h);
        let val_actuals = actuals_at(validation, &val_origins, h);
        let val_forecasts = hyb.forecast_at(validation, &val_origins)?;
        let forecasts = hyb.forecast_at(values, &origins)?;
        results.push(MethodResult {
            name: "hybrid".into(),
            mae: mae_per_step(&forecasts, &actuals)?,
            error_variance: variance(&forecasts, &actuals)?,
            train_seconds: 0.0,
        });
        Some(HybridSummary {
            assignment: hyb.assignment().to_vec(),
            validation: hyb.validation_table(),
            validation_mae: mae_per_step(&val_forecasts, &val_actuals)?,
            validation_origins: hyb.validation_origins(),
        })
    } else {
        None
    };

    Ok(EvaluationReport {
        horizon: h,
        step_minutes: series.step_secs() as f64 / 60.0,
        forecast_count: origins.len(),
        results,
        config: cfg.pairs(),
        hybrid,
        warnings,
    })
}

/// CSV text: header, then one row per (method, step), steps 1-based.
pub fn to_csv(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in &report.results {
        for (k, (mae, var)) in r.mae.iter().zip(&r.error_variance).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", r.name, k + 1, mae, var);
        }
    }
    out
}

pub fn emit_csv(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv(report))?;
    Ok(())
}

/// Parses [`to_csv`] output back into (method, mae, variance) triples, in
/// file order.
pub fn parse_csv(text: &str) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == CSV_HEADER => {}
        _ => return Err(Error::format(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut out: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [name, step, mae, var] = fields.as_slice() else {
            return Err(Error::format(line_no, "expected 4 fields"));
        };
        let step: usize = step.parse().map_err(|_| Error::format(line_no, "bad step"))?;
        let mae: f64 = mae.parse().map_err(|_| Error::format(line_no, "bad MAE"))?;
        let var: f64 = var.parse().map_err(|_| Error::format(line_no, "bad variance"))?;
        if out.last().is_none_or(|(n, _, _)| n != name) {
            out.push((name.to_string(), Vec::new(), Vec::new()));
        }
        let entry = out.last_mut().expect("pushed above");
        if step != entry.1.len() + 1 {
            return Err(Error::format(line_no, format!("step {step} out of order")));
        }
        entry.1.push(mae);
        entry.2.push(var);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mae,
    Variance,
}

const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else if a >= 0.001 {
        format!("{v:.4}")
    } else {
        format!("{v:.2e}")
    }
}

/// SVG document plotting `metric` against the forecast step in minutes,
/// one polyline per method.
pub fn plot_svg(report: &EvaluationReport, metric: Metric) -> Result<String> {
    if report.results.is_empty() {
        return Err(Error::Empty);
    }
    let (w, ht) = (760.0, 460.0);
    let (left, right, top, bottom) = (90.0, 140.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, ht - top - bottom);
    let series: Vec<(&str, &[f64])> = report
        .results
        .iter()
        .map(|r| {
            let v = match metric {
                Metric::Mae => &r.mae,
                Metric::Variance => &r.error_variance,
            };
            (r.name.as_str(), v.as_slice())
        })
        .collect();
    let h = report.horizon.max(1);
    let x_of_step = |k: usize| k as f64 * report.step_minutes;
    let (mut x0, mut x1) = (x_of_step(1), x_of_step(h));
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let y1 = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + ph - (y / y1) * ph;

    let (title, ylabel) = match metric {
        Metric::Mae => ("Mean absolute error per forecast step", "MAE (kW)"),
        Metric::Variance => ("Error variance per forecast step", "error variance (kW²)"),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{ht}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{title}</text>"#,
        left + pw / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="black"/>"#, top + ph);
    for i in 0..=5 {
        let xv = x0 + (x1 - x0) * i as f64 / 5.0;
        let yv = y1 * i as f64 / 5.0;
        let (xp, yp) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{xp:.1}" y1="{:.1}" x2="{xp:.1}" y2="{:.1}" stroke="black"/><text x="{xp:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{yp:.1}" x2="{left}" y2="{yp:.1}" stroke="black"/><line x1="{left}" y1="{yp:.1}" x2="{:.1}" y2="{yp:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left - 5.0,
            left + pw,
            left - 8.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">forecast step (minutes)</text>"#,
        left + pw / 2.0,
        ht - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{ylabel}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (name, v)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(k, &y)| format!("{:.2},{:.2}", px(x_of_step(k + 1)), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-method="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 15.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0
        );
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn emit_plot(report: &EvaluationReport, metric: Metric, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, plot_svg(report, metric)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn mae_examples() {
        let a = rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(mae_per_step(&a, &a).unwrap(), vec![0.0, 0.0]);
        let f = rows(&[&[2.0, 3.0], &[4.0, 5.0]]);
        assert_eq!(mae_per_step(&f, &a).unwrap(), vec![1.0, 1.0]);
        let zeros = rows(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let f = rows(&[&[1.0, -3.0], &[-1.0, 1.0]]);
        assert_eq!(mae_per_step(&f, &zeros).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(mae_per_step(&[], &[]), Err(Error::Empty)));
        assert!(matches!(
            mae_per_step(&f, &zeros[..1]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            mae_per_step(&rows(&[&[1.0]]), &rows(&[&[1.0, 2.0]])),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn variance_examples() {
        let a = rows(&[&[1.0, 2.0], &[3.0, 4.0], &[0.5, 0.0]]);
        let f: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| x + 1.0).collect()).collect();
        assert_eq!(error_variance_per_step(&f, &a).unwrap(), vec![0.0, 0.0]);
        let zeros = rows(&[&[0.0], &[0.0]]);
        let f = rows(&[&[1.0], &[-1.0]]);
        assert_eq!(error_variance_per_step(&f, &zeros).unwrap(), vec![2.0]);
        assert_eq!(abs_error_variance_per_step(&f, &zeros).unwrap(), vec![0.0]);
        assert!(matches!(
            error_variance_per_step(&rows(&[&[1.0]]), &rows(&[&[1.0]])),
            Err(Error::TooFewForecasts(1))
        ));
    }

    fn matrix() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (2usize..12, 1usize..6).prop_flat_map(|(m, h)| {
            (
                prop::collection::vec(prop::collection::vec(-50.0f64..50.0, h), m),
                prop::collection::vec(prop::collection::vec(-50.0f64..50.0, h), m),
            )
        })
    }

    proptest! {
        #[test]
        fn perfect_forecasts_score_zero((_, a) in matrix()) {
            prop_assert!(mae_per_step(&a, &a).unwrap().iter().all(|&v| v == 0.0));
            prop_assert!(error_variance_per_step(&a, &a).unwrap().iter().all(|&v| v == 0.0));
        }

        #[test]
        fn metrics_scale((f, a) in matrix(), c in 0.1f64..10.0) {
            let scale = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.iter().map(|x| x * c).collect()).collect::<Vec<Vec<f64>>>();
            let (mae, var) = (mae_per_step(&f, &a).unwrap(), error_variance_per_step(&f, &a).unwrap());
            let (mae_c, var_c) = (
                mae_per_step(&scale(&f), &scale(&a)).unwrap(),
                error_variance_per_step(&scale(&f), &scale(&a)).unwrap(),
            );
            for k in 0..mae.len() {
                prop_assert!((mae_c[k] - c * mae[k]).abs() <= 1e-9 * (1.0 + c * mae[k]));
                prop_assert!((var_c[k] - c * c * var[k]).abs() <= 1e-9 * (1.0 + c * c * var[k]));
            }
        }

        #[test]
        fn variance_ignores_shift((f, a) in matrix(), shift in -20.0f64..20.0) {
            let g: Vec<Vec<f64>> = f.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect();
            let (v, w) = (error_variance_per_step(&f, &a).unwrap(), error_variance_per_step(&g, &a).unwrap());
            for k in 0..v.len() {
                prop_assert!((v[k] - w[k]).abs() <= 1e-9 * (1.0 + v[k]));
            }
        }

        #[test]
        fn origin_order_is_irrelevant((f, a) in matrix()) {
            let (mut fr, mut ar) = (f.clone(), a.clone());
            fr.reverse();
            ar.reverse();
            let (m1, m2) = (mae_per_step(&f, &a).unwrap(), mae_per_step(&fr, &ar).unwrap());
            let (v1, v2) = (error_variance_per_step(&f, &a).unwrap(), error_variance_per_step(&fr, &ar).unwrap());
            for k in 0..m1.len() {
                prop_assert!((m1[k] - m2[k]).abs() <= 1e-12 * (1.0 + m1[k]));
                prop_assert!((v1[k] - v2[k]).abs() <= 1e-9 * (1.0 + v1[k]));
            }
        }
    }

    fn report(names: &[&str], h: usize) -> EvaluationReport {
        EvaluationReport {
            horizon: h,
            step_minutes: 1.0,
            forecast_count: 10,
            results: names
                .iter()
                .enumerate()
                .map(|(i, n)| MethodResult {
                    name: n.to_string(),
                    mae: (0..h).map(|k| 0.1 * (i + 1) as f64 + 0.013 * k as f64 + 1.0 / 3.0).collect(),
                    error_variance: (0..h).map(|k| 0.07 / (k + 1) as f64 + i as f64 * 1e-17).collect(),
                    train_seconds: 1.0,
                })
                .collect(),
            config: Vec::new(),
            hybrid: None,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let rep = report(&["svr", "arma"], 3);
        let text = to_csv(&rep);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("svr,1,"));
        assert!(lines[4].starts_with("arma,1,"));
        assert_eq!(to_csv(&rep), text);
        let parsed = parse_csv(&text).unwrap();
        for ((name, mae, var), r) in parsed.iter().zip(&rep.results) {
            assert_eq!(name, &r.name);
            assert_eq!(mae, &r.mae);
            assert_eq!(var, &r.error_variance);
        }
        assert!(parse_csv("nope\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nsvr,2,1,1\n")).is_err());
    }

    #[test]
    fn plot_shapes() {
        let rep = report(&["arma"], 2);
        let svg = plot_svg(&rep, Metric::Mae).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 2);
        assert_eq!(plot_svg(&rep, Metric::Mae).unwrap(), svg);

        let rep = report(&["arma", "svr", "nar"], 5);
        for metric in [Metric::Mae, Metric::Variance] {
            let svg = plot_svg(&rep, metric).unwrap();
            assert_eq!(svg.matches("<polyline").count(), 3);
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        }
        let mut empty = rep.clone();
        empty.results.clear();
        assert!(matches!(plot_svg(&empty, Metric::Mae), Err(Error::Empty)));
    }

    #[test]
    fn config_parsing() {
        let text = "data = series.txt\nmethods = arma, nar\nwindow = 10\nhorizon = 4\n\
                    train_size = 300 # comment\nnar.hidden = 5\nnar.train_size = 400\nseed = 9\n";
        let cfg = BenchConfig::parse(text, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.data, PathBuf::from("/tmp/x/series.txt"));
        assert_eq!(cfg.methods, vec![Method::Arma, Method::Nar]);
        assert_eq!(cfg.train_size_of(Method::Nar), 400);
        assert_eq!(cfg.train_size_of(Method::Arma), 300);
        assert!(matches!(cfg.params(Method::Nar), MethodParams::Nar { hidden: 5, .. }));
        assert_eq!(cfg.validation_len(), 45);
        assert_eq!(cfg.stride_or_default(), 4);

        // window set after a hyperparameter keeps the override
        let cfg = BenchConfig::parse("data = a\nnar.hidden = 5\nwindow = 12\n", Path::new(".")).unwrap();
        assert!(matches!(cfg.params(Method::Nar), MethodParams::Nar { hidden: 5, .. }));

        for bad in [
            "methods = arma\n",
            "data = a\nbogus = 1\n",
            "data = a\nwindow = x\n",
            "data = a\nnar.nonsense = 1\n",
            "data = a\nno equals sign\n",
            "data = a\nmethods = arma,arma\n",
            "data = a\nhybrid = maybe\n",
        ] {
            assert!(matches!(BenchConfig::parse(bad, Path::new(".")), Err(Error::Config(_))), "{bad}");
        }
    }

    fn synthetic(len: usize) -> TimeSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = (0..len)
            .map(|i| {
                let t = i as f64;
                2.0 + (t * 0.13).sin() + 0.5 * (t * 0.031).cos() + 0.2 * rng.random_range(-1.0..1.0)
            })
            .collect();
        TimeSeries::new(v).unwrap()
    }

    fn small_config(methods: &str) -> BenchConfig {
        let mut cfg = BenchConfig::new("unused");
        for (k, v) in [
            ("methods", methods),
            ("window", "6"),
            ("horizon", "3"),
            ("train_size", "300"),
            ("nar.hidden", "4"),
            ("nar.max_iters", "10"),
            ("lstm.cells", "3"),
            ("lstm.epochs", "2"),
            ("arma.order", "2,1"),
        ] {
            cfg.set(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn arma_only_report_shape() {
        let cfg = small_config("arma");
        let rep = run_benchmark_on(&cfg, &synthetic(600)).unwrap();
        assert_eq!(rep.results.len(), 1);
        assert_eq!(rep.results[0].mae.len(), 3);
        assert_eq!(rep.results[0].error_variance.len(), 3);
        assert!(rep.hybrid.is_none());
        assert_eq!(rep.forecast_count, (600 - 300 - 3) / 3 + 1);
    }

    #[test]
    fn benchmark_is_deterministic_and_hybrid_is_minimal() {
        let cfg = small_config("arma,svr,nar");
        let data = synthetic(800);
        let a = run_benchmark_on(&cfg, &data).unwrap();
        let b = run_benchmark_on(&cfg, &data).unwrap();
        assert_eq!(to_csv(&a), to_csv(&b));
        assert_eq!(a.results.len(), 4);
        let hyb = a.hybrid.as_ref().unwrap();
        for k in 0..3 {
            let min = hyb.validation.iter().map(|(_, v)| v[k]).fold(f64::INFINITY, f64::min);
            assert_eq!(hyb.validation_mae[k], min);
        }
        for r in &a.results {
            assert!(r.mae.iter().chain(&r.error_variance).all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn too_short_series_is_reported() {
        let cfg = small_config("arma");
        assert!(matches!(
            run_benchmark_on(&cfg, &synthetic(302)),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(matches!(
            run_benchmark_on(&cfg, &synthetic(305)),
            Err(Error::TooFewForecasts(1))
        ));
    }
}
