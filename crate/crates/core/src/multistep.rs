//! Direct multi-step forecasting: one independent model per horizon step,
//! trained in parallel, plus a hybrid forecaster that picks the best method
//! for each step on a validation block.
//!
//! ARMA is the exception to the direct strategy. It is fitted once and its
//! recursive forecast serves every step.
//!
//! # Ensemble file
//!
//! ```text
//! # gridcast ensemble v1
//! method nar
//! strategy direct
//! window 30
//! horizon 12
//! normalizer <mean> <std>
//! base_seed 7
//! train_len 2000
//! param hidden 40
//! ...
//! model 1
//! <model block>
//! model 2
//! ...
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a file gives
//! back bit-identical parameters. Model blocks:
//!
//! * `arma p q`, then `phi`, `theta`, `tail_values`, `tail_residuals` (each
//!   a count followed by the values), `intercept`, `noise_variance`,
//!   `effective_len`, `warnings <count>` and one `warning <text>` per entry.
//! * `svr rbf <gamma>` or `svr linear`, then `c`, `epsilon`, `bias`, `dim`,
//!   `converged`, `support <count>` and one `sv <index> <beta> <x...>` line
//!   per support vector.
//! * `mlp <inputs> <hidden>` or `lstm <cells> <activation>`, followed by
//!   `params <count>` and the flat parameter vector, eight values per line.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::arma::{self, ArmaModel};
use crate::bench::mae_per_step;
use crate::data::{Normalizer, SupervisedSet, TimeSeries};
use crate::error::{Error, Result};
use crate::lstm::{self, CellActivation, LstmModel, LstmTrainConfig};
use crate::nar::{self, LmConfig, MlpModel};
use crate::svr::{self, Kernel, SmoConfig, SvrModel, SvrParams};

pub const ENSEMBLE_HEADER: &str = "# gridcast ensemble v1";
pub const HYBRID_HEADER: &str = "# gridcast hybrid v1";
/// Fewest validation forecast origins the hybrid selector accepts.
pub const MIN_VALIDATION_ORIGINS: usize = 30;
pub const WORKERS_ENV: &str = "GRIDCAST_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Arma,
    Svr,
    Nar,
    Lstm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Arma, Method::Svr, Method::Nar, Method::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Arma => "arma",
            Method::Svr => "svr",
            Method::Nar => "nar",
            Method::Lstm => "lstm",
        }
    }

    /// Tie-break rank for hybrid selection, lower wins.
    pub fn tie_rank(self) -> u8 {
        match self {
            Method::Nar => 0,
            Method::Svr => 1,
            Method::Lstm => 2,
            Method::Arma => 3,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arma" => Ok(Method::Arma),
            "svr" | "svm" => Ok(Method::Svr),
            "nar" => Ok(Method::Nar),
            "lstm" => Ok(Method::Lstm),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Hyperparameters of one method family.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodParams {
    Arma {
        /// Fixed order, or `None` for AIC selection up to `max_order`.
        order: Option<(usize, usize)>,
        max_order: usize,
    },
    Svr {
        params: SvrParams,
        smo: SmoConfig,
    },
    Nar {
        hidden: usize,
        lm: LmConfig,
    },
    Lstm {
        cells: usize,
        activation: CellActivation,
        train: LstmTrainConfig,
    },
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl MethodParams {
    pub fn defaults(method: Method, window: usize) -> Self {
        match method {
            Method::Arma => MethodParams::Arma {
                order: None,
                max_order: arma::MAX_SELECT_ORDER,
            },
            Method::Svr => MethodParams::Svr {
                params: SvrParams::for_window(window),
                smo: SmoConfig::default(),
            },
            Method::Nar => MethodParams::Nar {
                hidden: nar::DEFAULT_HIDDEN,
                lm: LmConfig::default(),
            },
            Method::Lstm => MethodParams::Lstm {
                cells: lstm::DEFAULT_CELLS,
                activation: CellActivation::default(),
                train: LstmTrainConfig::default(),
            },
        }
    }

    pub fn method(&self) -> Method {
        match self {
            MethodParams::Arma { .. } => Method::Arma,
            MethodParams::Svr { .. } => Method::Svr,
            MethodParams::Nar { .. } => Method::Nar,
            MethodParams::Lstm { .. } => Method::Lstm,
        }
    }

    /// Sets one hyperparameter by its unprefixed key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self {
            MethodParams::Arma { order, max_order } => match key {
                "order" => {
                    *order = if value.trim() == "auto" {
                        None
                    } else {
                        let (p, q) = value
                            .split_once(',')
                            .ok_or_else(|| Error::Config(format!("order `{value}` is not `p,q`")))?;
                        Some((parse_value(key, p)?, parse_value(key, q)?))
                    };
                }
                "max_order" => *max_order = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("unknown arma key `{key}`"))),
            },
            MethodParams::Svr { params, smo } => match key {
                "c" => params.c = parse_value(key, value)?,
                "epsilon" => params.epsilon = parse_value(key, value)?,
                "kernel" => {
                    params.kernel = match value.trim() {
                        "linear" => Kernel::Linear,
                        "rbf" => match params.kernel {
                            Kernel::Rbf { gamma } => Kernel::Rbf { gamma },
                            Kernel::Linear => Kernel::Rbf { gamma: 1.0 },
                        },
                        other => return Err(Error::Config(format!("unknown kernel `{other}`"))),
                    }
                }
                "gamma" => params.kernel = Kernel::Rbf { gamma: parse_value(key, value)? },
                "tol" => smo.tol = parse_value(key, value)?,
                "max_passes" => smo.max_passes = parse_value(key, value)?,
                "max_iters" => smo.max_iters = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("unknown svr key `{key}`"))),
            },
            MethodParams::Nar { hidden, lm } => match key {
                "hidden" => *hidden = parse_value(key, value)?,
                "max_iters" => lm.max_iters = parse_value(key, value)?,
                "mu" => lm.mu_init = parse_value(key, value)?,
                "mu_inc" => lm.mu_inc = parse_value(key, value)?,
                "mu_dec" => lm.mu_dec = parse_value(key, value)?,
                "mu_min" => lm.mu_min = parse_value(key, value)?,
                "mu_max" => lm.mu_max = parse_value(key, value)?,
                "grad_tol" => lm.grad_tol = parse_value(key, value)?,
                "alpha" => lm.alpha_init = parse_value(key, value)?,
                "beta" => lm.beta_init = parse_value(key, value)?,
                _ => return Err(Error::Config(format!("unknown nar key `{key}`"))),
            },
            MethodParams::Lstm {
                cells,
                activation,
                train,
            } => match key {
                "cells" => *cells = parse_value(key, value)?,
                "activation" => {
                    *activation = CellActivation::from_name(value.trim())
                        .ok_or_else(|| Error::Config(format!("unknown activation `{value}`")))?
                }
                "epochs" => train.epochs = parse_value(key, value)?,
                "batch" => train.batch_size = parse_value(key, value)?,
                "eta" => train.eta = parse_value(key, value)?,
                "eps" => train.eps = parse_value(key, value)?,
                "max_grad_norm" => {
                    train.max_grad_norm = if value.trim() == "none" {
                        None
                    } else {
                        Some(parse_value(key, value)?)
                    }
                }
                _ => return Err(Error::Config(format!("unknown lstm key `{key}`"))),
            },
        }
        Ok(())
    }

    /// All hyperparameters as (key, value) pairs accepted by [`Self::set`].
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        match self {
            MethodParams::Arma { order, max_order } => vec![
                (
                    "order",
                    order.map_or_else(|| "auto".to_string(), |(p, q)| format!("{p},{q}")),
                ),
                ("max_order", max_order.to_string()),
            ],
            MethodParams::Svr { params, smo } => {
                let mut v = vec![("c", format!("{:e}", params.c)), ("epsilon", format!("{:e}", params.epsilon))];
                match params.kernel {
                    Kernel::Rbf { gamma } => {
                        v.push(("kernel", "rbf".into()));
                        v.push(("gamma", format!("{gamma:e}")));
                    }
                    Kernel::Linear => v.push(("kernel", "linear".into())),
                }
                v.push(("tol", format!("{:e}", smo.tol)));
                v.push(("max_passes", smo.max_passes.to_string()));
                v.push(("max_iters", smo.max_iters.to_string()));
                v
            }
            MethodParams::Nar { hidden, lm } => vec![
                ("hidden", hidden.to_string()),
                ("max_iters", lm.max_iters.to_string()),
                ("mu", format!("{:e}", lm.mu_init)),
                ("mu_inc", format!("{:e}", lm.mu_inc)),
                ("mu_dec", format!("{:e}", lm.mu_dec)),
                ("mu_min", format!("{:e}", lm.mu_min)),
                ("mu_max", format!("{:e}", lm.mu_max)),
                ("grad_tol", format!("{:e}", lm.grad_tol)),
                ("alpha", format!("{:e}", lm.alpha_init)),
                ("beta", format!("{:e}", lm.beta_init)),
            ],
            MethodParams::Lstm {
                cells,
                activation,
                train,
            } => vec![
                ("cells", cells.to_string()),
                ("activation", activation.name().into()),
                ("epochs", train.epochs.to_string()),
                ("batch", train.batch_size.to_string()),
                ("eta", format!("{:e}", train.eta)),
                ("eps", format!("{:e}", train.eps)),
                (
                    "max_grad_norm",
                    train.max_grad_norm.map_or_else(|| "none".into(), |m| format!("{m:e}")),
                ),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodParams::Arma { order, max_order } => {
                if *max_order > arma::MAX_SELECT_ORDER {
                    return Err(Error::InvalidParameter(format!(
                        "ARMA order grid is limited to {}",
                        arma::MAX_SELECT_ORDER
                    )));
                }
                if matches!(order, Some((0, 0))) || (order.is_none() && *max_order == 0) {
                    return Err(Error::InvalidParameter("ARMA needs p + q ≥ 1".into()));
                }
                Ok(())
            }
            MethodParams::Svr { params, smo } => {
                params.validate()?;
                smo.validate()
            }
            MethodParams::Nar { hidden, lm } => {
                if *hidden == 0 {
                    return Err(Error::InvalidParameter("NAR needs ≥ 1 hidden neuron".into()));
                }
                lm.validate()
            }
            MethodParams::Lstm { cells, train, .. } => {
                if *cells == 0 {
                    return Err(Error::InvalidParameter("LSTM needs ≥ 1 memory cell".into()));
                }
                train.validate()
            }
        }
    }
}

/// What to train for every horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    params: MethodParams,
    window: usize,
    base_seed: u64,
}

impl ModelSpec {
    pub fn new(params: MethodParams, window: usize, base_seed: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("window must be ≥ 1".into()));
        }
        params.validate()?;
        Ok(ModelSpec {
            params,
            window,
            base_seed,
        })
    }

    pub fn with_defaults(method: Method, window: usize, base_seed: u64) -> Result<Self> {
        Self::new(MethodParams::defaults(method, window), window, base_seed)
    }

    pub fn method(&self) -> Method {
        self.params.method()
    }

    pub fn params(&self) -> &MethodParams {
        &self.params
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Seed of the subproblem at step k.
    pub fn step_seed(&self, k: usize) -> u64 {
        self.base_seed.wrapping_add(k as u64)
    }

    /// True when one recursive model serves all steps.
    pub fn is_recursive(&self) -> bool {
        self.method() == Method::Arma
    }
}

/// A fitted single-step predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Arma(ArmaModel),
    Svr(SvrModel),
    Nar(MlpModel),
    Lstm(LstmModel),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Arma(_) => Method::Arma,
            FittedModel::Svr(_) => Method::Svr,
            FittedModel::Nar(_) => Method::Nar,
            FittedModel::Lstm(_) => Method::Lstm,
        }
    }

    /// Prediction for one normalized window. ARMA returns its one-step
    /// recursive forecast.
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Arma(m) => Ok(m.forecast_from(window, 1)?[0]),
            FittedModel::Svr(m) => m.predict(window),
            FittedModel::Nar(m) => m.forward(window),
            FittedModel::Lstm(m) => m.forward(window),
        }
    }
}

/// h per-step models of one method sharing one normalizer.
#[derive(Debug, Clone)]
pub struct HorizonEnsemble {
    spec: ModelSpec,
    horizon: usize,
    normalizer: Normalizer,
    train_len: usize,
    /// One model per step, or a single ARMA model.
    models: Vec<FittedModel>,
    /// Training seconds per subproblem; empty for loaded ensembles.
    wall_times: Vec<f64>,
}

impl PartialEq for HorizonEnsemble {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.horizon == other.horizon
            && self.normalizer == other.normalizer
            && self.train_len == other.train_len
            && self.models == other.models
    }
}

/// Effective pool size: `requested` (0 = available CPUs), capped by
/// `GRIDCAST_WORKERS` when that is set to a positive integer.
pub fn resolve_workers(requested: usize) -> usize {
    let base = if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    };
    let cap = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0);
    cap.map_or(base, |c| base.min(c))
}

fn train_direct_step(spec: &ModelSpec, z: &[f64], k: usize) -> Result<FittedModel> {
    let set = SupervisedSet::from_values(z, spec.window, k)?;
    let seed = spec.step_seed(k);
    match &spec.params {
        MethodParams::Svr { params, smo } => Ok(FittedModel::Svr(svr::fit_svr(&set, *params, *smo)?.model)),
        MethodParams::Nar { hidden, lm } => {
            let init = nar::nguyen_widrow_init(spec.window, *hidden, seed);
            Ok(FittedModel::Nar(nar::lm_br_train(&init, &set, lm)?.model))
        }
        MethodParams::Lstm {
            cells,
            activation,
            train,
        } => {
            let init = LstmModel::init(*cells, *activation, seed);
            let cfg = LstmTrainConfig { seed, ..*train };
            Ok(FittedModel::Lstm(lstm::train_lstm(&init, &set, &cfg)?.model))
        }
        MethodParams::Arma { .. } => unreachable!("ARMA is trained recursively"),
    }
}

fn train_arma(params: &MethodParams, z: &[f64]) -> Result<FittedModel> {
    let MethodParams::Arma { order, max_order } = params else {
        unreachable!()
    };
    let (p, q) = match order {
        Some(o) => *o,
        None => arma::select_order(z, *max_order, *max_order)?,
    };
    Ok(FittedModel::Arma(ArmaModel::fit(z, p, q)?))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Trains the h subproblems of `spec` on the raw series `train`, using at
/// most `workers` threads (see [`resolve_workers`]). The normalizer is fitted
/// on `train`. Results do not depend on the worker count.
pub fn train_horizon_ensemble(
    spec: &ModelSpec,
    train: &TimeSeries,
    horizon: usize,
    workers: usize,
) -> Result<HorizonEnsemble> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be ≥ 1".into()));
    }
    let needed = spec.window + horizon;
    if train.len() < needed {
        return Err(Error::SeriesTooShort {
            needed,
            available: train.len(),
        });
    }
    let normalizer = Normalizer::fit(train.values())?;
    let z = normalizer.normalize_all(train.values());

    let (models, wall_times) = if spec.is_recursive() {
        let (model, secs) = timed(|| train_arma(&spec.params, &z));
        let model = model.map_err(|e| Error::StepFailed {
            step: 1,
            source: Box::new(e),
        })?;
        (vec![model], vec![secs])
    } else {
        let workers = resolve_workers(workers);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
        let results: Vec<(Result<FittedModel>, f64)> = pool.install(|| {
            (1..=horizon)
                .into_par_iter()
                .map(|k| timed(|| train_direct_step(spec, &z, k)))
                .collect()
        });
        let mut models = Vec::with_capacity(horizon);
        let mut times = Vec::with_capacity(horizon);
        for (k, (result, secs)) in results.into_iter().enumerate() {
            let model = result.map_err(|e| Error::StepFailed {
                step: k + 1,
                source: Box::new(e),
            })?;
            models.push(model);
            times.push(secs);
        }
        (models, times)
    };

    Ok(HorizonEnsemble {
        spec: spec.clone(),
        horizon,
        normalizer,
        train_len: train.len(),
        models,
        wall_times,
    })
}

impl HorizonEnsemble {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn method(&self) -> Method {
        self.spec.method()
    }

    pub fn window(&self) -> usize {
        self.spec.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    pub fn is_recursive(&self) -> bool {
        self.spec.is_recursive()
    }

    pub fn models(&self) -> &[FittedModel] {
        &self.models
    }

    /// Number of supervised pairs the model of step k was trained on.
    pub fn set_size(&self, k: usize) -> usize {
        if self.is_recursive() {
            self.train_len
        } else {
            (self.train_len + 1).saturating_sub(self.window() + k)
        }
    }

    pub fn wall_times(&self) -> &[f64] {
        &self.wall_times
    }

    pub fn total_train_seconds(&self) -> f64 {
        self.wall_times.iter().sum()
    }

    /// Replaces the normalizer, e.g. to evaluate in normalized units.
    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Self {
        self.normalizer = normalizer;
        self
    }

    /// Retrains only step k (1-based) on `train`, which should be the series
    /// the ensemble was built from.
    pub fn retrain_step(&mut self, train: &TimeSeries, k: usize) -> Result<()> {
        let valid = if self.is_recursive() { k == 1 } else { (1..=self.horizon).contains(&k) };
        if !valid {
            return Err(Error::InvalidParameter(format!("no step {k} in this ensemble")));
        }
        let z = self.normalizer.normalize_all(train.values());
        let (model, secs) = if self.is_recursive() {
            timed(|| train_arma(&self.spec.params, &z))
        } else {
            timed(|| train_direct_step(&self.spec, &z, k))
        };
        let model = model.map_err(|e| Error::StepFailed {
            step: k,
            source: Box::new(e),
        })?;
        self.models[k - 1] = model;
        if let Some(t) = self.wall_times.get_mut(k - 1) {
            *t = secs;
        }
        Ok(())
    }

    /// Forecast vector in normalized units from a normalized window.
    pub fn forecast_normalized(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.window() {
            return Err(Error::DimensionMismatch {
                expected: self.window(),
                got: window.len(),
            });
        }
        match self.models.as_slice() {
            [FittedModel::Arma(m)] if self.is_recursive() => m.forecast_from(window, self.horizon),
            models => models.iter().map(|m| m.predict(window)).collect(),
        }
    }

    /// h-step forecast in original units from the last n raw values.
    pub fn forecast(&self, window: &[f64]) -> Result<Vec<f64>> {
        let z = self.normalizer.normalize_all(window);
        let out = self.forecast_normalized(&z)?;
        Ok(out.into_iter().map(|v| self.normalizer.denormalize(v)).collect())
    }

    /// Forecasts at every origin of `series`: origin i uses the window
    /// `series[i−n..i]`. Rows follow `origins`.
    pub fn forecast_at(&self, series: &[f64], origins: &[usize]) -> Result<Vec<Vec<f64>>> {
        let n = self.window();
        origins
            .par_iter()
            .map(|&i| {
                if i < n || i > series.len() {
                    return Err(Error::InsufficientHistory {
                        needed: n,
                        available: i.min(series.len()),
                    });
                }
                self.forecast(&series[i - n..i])
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_ensemble(&mut out, self);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = TextReader::new(text);
        r.expect_header(ENSEMBLE_HEADER)?;
        let ens = read_ensemble(&mut r)?;
        r.expect_eof()?;
        Ok(ens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }
}

/// Per-step argmin of the error table; ties go to the lower
/// [`Method::tie_rank`]. NaN entries never win.
pub fn select_per_step(table: &[(Method, Vec<f64>)]) -> Result<Vec<Method>> {
    let Some((_, first)) = table.first() else {
        return Err(Error::Empty);
    };
    let h = first.len();
    if let Some((m, v)) = table.iter().find(|(_, v)| v.len() != h) {
        return Err(Error::ShapeMismatch(format!("{m} has {} steps, expected {h}", v.len())));
    }
    let mut ranked: Vec<&(Method, Vec<f64>)> = table.iter().collect();
    ranked.sort_by_key(|(m, _)| m.tie_rank());
    Ok((0..h)
        .map(|k| {
            let mut best = ranked[0];
            for cand in &ranked[1..] {
                let (c, b) = (cand.1[k], best.1[k]);
                if c < b || (b.is_nan() && !c.is_nan()) {
                    best = cand;
                }
            }
            best.0
        })
        .collect())
}

/// Per-step method choice over several ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridForecaster {
    assignment: Vec<Method>,
    ensembles: Vec<HorizonEnsemble>,
    /// Validation MAE per step, aligned with `ensembles`.
    validation_mae: Vec<Vec<f64>>,
    validation_origins: usize,
}

/// Validation origins (stride 1) of a series for window n and horizon h.
pub fn validation_origins(len: usize, window: usize, horizon: usize) -> Vec<usize> {
    if len < window + horizon {
        return Vec::new();
    }
    (window..=len - horizon).collect()
}

/// Actual h-vectors following each origin.
pub fn actuals_at(series: &[f64], origins: &[usize], horizon: usize) -> Vec<Vec<f64>> {
    origins.iter().map(|&i| series[i..i + horizon].to_vec()).collect()
}

/// Scores every ensemble on `validation` (raw units, windows taken inside
/// the series) and assigns each step its lowest-MAE method.
pub fn build_hybrid(ensembles: Vec<HorizonEnsemble>, validation: &[f64]) -> Result<HybridForecaster> {
    if ensembles.len() < 2 {
        return Err(Error::MismatchedEnsembles("need at least two ensembles".into()));
    }
    let (n, h) = (ensembles[0].window(), ensembles[0].horizon());
    for e in &ensembles[1..] {
        if e.window() != n || e.horizon() != h {
            return Err(Error::MismatchedEnsembles(format!(
                "{} has n = {}, h = {}; {} has n = {n}, h = {h}",
                e.method(),
                e.window(),
                e.horizon(),
                ensembles[0].method()
            )));
        }
    }
    for (i, e) in ensembles.iter().enumerate() {
        if ensembles[..i].iter().any(|o| o.method() == e.method()) {
            return Err(Error::MismatchedEnsembles(format!("{} given twice", e.method())));
        }
    }
    let origins = validation_origins(validation.len(), n, h);
    if origins.len() < MIN_VALIDATION_ORIGINS {
        return Err(Error::InsufficientValidation {
            needed: MIN_VALIDATION_ORIGINS,
            available: origins.len(),
        });
    }
    let actuals = actuals_at(validation, &origins, h);
    let mut validation_mae = Vec::with_capacity(ensembles.len());
    for e in &ensembles {
        let forecasts = e.forecast_at(validation, &origins).map_err(|err| Error::MethodFailed {
            method: e.method().name().into(),
            source: Box::new(err),
        })?;
        validation_mae.push(mae_per_step(&forecasts, &actuals)?);
    }
    let table: Vec<(Method, Vec<f64>)> = ensembles
        .iter()
        .zip(&validation_mae)
        .map(|(e, m)| (e.method(), m.clone()))
        .collect();
    let assignment = select_per_step(&table)?;
    Ok(HybridForecaster {
        assignment,
        ensembles,
        validation_mae,
        validation_origins: origins.len(),
    })
}

impl HybridForecaster {
    pub fn assignment(&self) -> &[Method] {
        &self.assignment
    }

    pub fn ensembles(&self) -> &[HorizonEnsemble] {
        &self.ensembles
    }

    pub fn window(&self) -> usize {
        self.ensembles[0].window()
    }

    pub fn horizon(&self) -> usize {
        self.ensembles[0].horizon()
    }

    pub fn validation_origins(&self) -> usize {
        self.validation_origins
    }

    /// (method, per-step validation MAE) for every constituent.
    pub fn validation_table(&self) -> Vec<(Method, Vec<f64>)> {
        self.ensembles
            .iter()
            .zip(&self.validation_mae)
            .map(|(e, m)| (e.method(), m.clone()))
            .collect()
    }

    /// Validation MAE of the assigned method at every step.
    pub fn selected_validation_mae(&self) -> Vec<f64> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(k, m)| self.validation_mae[self.index_of(*m)][k])
            .collect()
    }

    fn index_of(&self, method: Method) -> usize {
        self.ensembles
            .iter()
            .position(|e| e.method() == method)
            .expect("assigned methods have ensembles")
    }

    /// Component k comes from the ensemble assigned to step k.
    pub fn forecast(&self, window: &[f64]) -> Result<Vec<f64>> {
        let mut per_ensemble: Vec<Option<Vec<f64>>> = vec![None; self.ensembles.len()];
        let mut out = Vec::with_capacity(self.horizon());
        for (k, m) in self.assignment.iter().enumerate() {
            let i = self.index_of(*m);
            if per_ensemble[i].is_none() {
                per_ensemble[i] = Some(self.ensembles[i].forecast(window)?);
            }
            out.push(per_ensemble[i].as_ref().expect("filled above")[k]);
        }
        Ok(out)
    }

    pub fn forecast_at(&self, series: &[f64], origins: &[usize]) -> Result<Vec<Vec<f64>>> {
        let n = self.window();
        origins
            .par_iter()
            .map(|&i| {
                if i < n || i > series.len() {
                    return Err(Error::InsufficientHistory {
                        needed: n,
                        available: i.min(series.len()),
                    });
                }
                self.forecast(&series[i - n..i])
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HYBRID_HEADER}");
        let _ = writeln!(out, "ensembles {}", self.ensembles.len());
        let names: Vec<&str> = self.assignment.iter().map(|m| m.name()).collect();
        let _ = writeln!(out, "assignment {}", names.join(" "));
        let _ = writeln!(out, "validation_origins {}", self.validation_origins);
        for (e, mae) in self.ensembles.iter().zip(&self.validation_mae) {
            let _ = writeln!(out, "validation_mae {} {}", e.method(), join_floats(mae));
        }
        for e in &self.ensembles {
            write_ensemble(&mut out, e);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = TextReader::new(text);
        r.expect_header(HYBRID_HEADER)?;
        let count: usize = r.scalar("ensembles")?;
        let (line, toks) = r.field("assignment")?;
        let assignment = toks
            .iter()
            .map(|t| t.parse::<Method>().map_err(|_| Error::format(line, format!("unknown method `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        let validation_origins = r.scalar("validation_origins")?;
        let mut validation_mae = Vec::with_capacity(count);
        let mut mae_methods = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, toks) = r.field("validation_mae")?;
            let method = toks
                .first()
                .and_then(|t| t.parse::<Method>().ok())
                .ok_or_else(|| Error::format(line, "missing method"))?;
            mae_methods.push(method);
            validation_mae.push(parse_floats(line, &toks[1..])?);
        }
        let mut ensembles = Vec::with_capacity(count);
        for _ in 0..count {
            r.expect_header(ENSEMBLE_HEADER)?;
            ensembles.push(read_ensemble(&mut r)?);
        }
        r.expect_eof()?;
        if ensembles.iter().map(HorizonEnsemble::method).ne(mae_methods.iter().copied()) {
            return Err(Error::format(r.line(), "validation table does not match ensembles"));
        }
        let hyb = HybridForecaster {
            assignment,
            ensembles,
            validation_mae,
            validation_origins,
        };
        if hyb.assignment.len() != hyb.horizon()
            || hyb.assignment.iter().any(|m| !hyb.ensembles.iter().any(|e| e.method() == *m))
        {
            return Err(Error::format(r.line(), "assignment does not match ensembles"));
        }
        Ok(hyb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }
}

// ---- text container ----

fn join_floats(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:e}")).collect();
    parts.join(" ")
}

fn parse_floats(line: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| Error::format(line, format!("bad number `{t}`"))))
        .collect()
}

fn write_counted(out: &mut String, key: &str, xs: &[f64]) {
    if xs.is_empty() {
        let _ = writeln!(out, "{key} 0");
    } else {
        let _ = writeln!(out, "{key} {} {}", xs.len(), join_floats(xs));
    }
}

fn write_block(out: &mut String, xs: &[f64]) {
    let _ = writeln!(out, "params {}", xs.len());
    for chunk in xs.chunks(8) {
        let _ = writeln!(out, "{}", join_floats(chunk));
    }
}

fn write_ensemble(out: &mut String, e: &HorizonEnsemble) {
    let _ = writeln!(out, "{ENSEMBLE_HEADER}");
    let _ = writeln!(out, "method {}", e.method());
    let _ = writeln!(out, "strategy {}", if e.is_recursive() { "recursive" } else { "direct" });
    let _ = writeln!(out, "window {}", e.window());
    let _ = writeln!(out, "horizon {}", e.horizon);
    let _ = writeln!(out, "normalizer {:e} {:e}", e.normalizer.mean(), e.normalizer.std());
    let _ = writeln!(out, "base_seed {}", e.spec.base_seed);
    let _ = writeln!(out, "train_len {}", e.train_len);
    for (k, v) in e.spec.params.pairs() {
        let _ = writeln!(out, "param {k} {v}");
    }
    for (k, m) in e.models.iter().enumerate() {
        let _ = writeln!(out, "model {}", k + 1);
        match m {
            FittedModel::Arma(a) => {
                let _ = writeln!(out, "arma {} {}", a.p, a.q);
                write_counted(out, "phi", &a.phi);
                write_counted(out, "theta", &a.theta);
                let _ = writeln!(out, "intercept {:e}", a.intercept);
                let _ = writeln!(out, "noise_variance {:e}", a.noise_variance);
                let _ = writeln!(out, "effective_len {}", a.effective_len);
                write_counted(out, "tail_values", &a.tail_values);
                write_counted(out, "tail_residuals", &a.tail_residuals);
                let _ = writeln!(out, "warnings {}", a.warnings.len());
                for w in &a.warnings {
                    let _ = writeln!(out, "warning {}", w.replace('\n', " "));
                }
            }
            FittedModel::Svr(s) => {
                match s.kernel {
                    Kernel::Rbf { gamma } => {
                        let _ = writeln!(out, "svr rbf {gamma:e}");
                    }
                    Kernel::Linear => {
                        let _ = writeln!(out, "svr linear");
                    }
                }
                let _ = writeln!(out, "c {:e}", s.c);
                let _ = writeln!(out, "epsilon {:e}", s.epsilon);
                let _ = writeln!(out, "bias {:e}", s.bias);
                let _ = writeln!(out, "dim {}", s.dim);
                let _ = writeln!(out, "converged {}", s.converged);
                let _ = writeln!(out, "support {}", s.beta.len());
                for (j, (&idx, &b)) in s.support_indices.iter().zip(&s.beta).enumerate() {
                    let x = &s.support_inputs[j * s.dim..(j + 1) * s.dim];
                    let _ = writeln!(out, "sv {idx} {b:e} {}", join_floats(x));
                }
            }
            FittedModel::Nar(m) => {
                let _ = writeln!(out, "mlp {} {}", m.n_in(), m.n_hidden());
                write_block(out, m.params());
            }
            FittedModel::Lstm(m) => {
                let _ = writeln!(out, "lstm {} {}", m.cells(), m.activation().name());
                write_block(out, m.params());
            }
        }
    }
    let _ = writeln!(out, "end");
}

/// Line cursor over a text container; blank lines are skipped and line
/// numbers are 1-based.
struct TextReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> TextReader<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        TextReader { lines, pos: 0 }
    }

    fn line(&self) -> usize {
        self.lines
            .get(self.pos)
            .or(self.lines.last())
            .map_or(1, |(n, _)| *n)
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        let item = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::format(self.line() + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok(item)
    }

    fn expect_header(&mut self, header: &str) -> Result<()> {
        let (n, l) = self.next()?;
        if l.trim() != header {
            return Err(Error::format(n, format!("expected `{header}`")));
        }
        Ok(())
    }

    fn expect_eof(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            None => Ok(()),
            Some((n, _)) => Err(Error::format(*n, "trailing content")),
        }
    }

    /// Next line, which must start with `key`; returns the other tokens.
    fn field(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self.next()?;
        let mut toks = l.split_whitespace();
        if toks.next() != Some(key) {
            return Err(Error::format(n, format!("expected `{key}`")));
        }
        Ok((n, toks.collect()))
    }

    /// Next line as `key rest-of-line`.
    fn text_field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next()?;
        let rest = l
            .strip_prefix(key)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| Error::format(n, format!("expected `{key}`")))?;
        Ok((n, rest.trim_start()))
    }

    fn peek_key(&self) -> Option<&'a str> {
        self.lines.get(self.pos).and_then(|(_, l)| l.split_whitespace().next())
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, toks) = self.field(key)?;
        match toks.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| Error::format(n, format!("bad value `{v}` for `{key}`"))),
            _ => Err(Error::format(n, format!("`{key}` takes one value"))),
        }
    }

    fn counted(&mut self, key: &str) -> Result<Vec<f64>> {
        let (n, toks) = self.field(key)?;
        let count: usize = toks
            .first()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::format(n, format!("`{key}` needs a count")))?;
        if toks.len() != count + 1 {
            return Err(Error::format(n, format!("`{key}` declares {count} values, has {}", toks.len() - 1)));
        }
        parse_floats(n, &toks[1..])
    }

    fn block(&mut self) -> Result<Vec<f64>> {
        let count: usize = self.scalar("params")?;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (n, l) = self.next()?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            out.extend(parse_floats(n, &toks)?);
        }
        if out.len() != count {
            return Err(Error::format(self.line(), format!("expected {count} parameters, read {}", out.len())));
        }
        Ok(out)
    }
}

fn read_model(r: &mut TextReader<'_>, method: Method) -> Result<FittedModel> {
    let at = r.line();
    let wrap = |e: Error| match e {
        Error::Format { .. } => e,
        other => Error::format(at, other.to_string()),
    };
    match method {
        Method::Arma => {
            let (n, toks) = r.field("arma")?;
            let [p, q] = toks.as_slice() else {
                return Err(Error::format(n, "`arma` takes p and q"));
            };
            let p: usize = p.parse().map_err(|_| Error::format(n, "bad p"))?;
            let q: usize = q.parse().map_err(|_| Error::format(n, "bad q"))?;
            let phi = r.counted("phi")?;
            let theta = r.counted("theta")?;
            let intercept = r.scalar("intercept")?;
            let noise_variance = r.scalar("noise_variance")?;
            let effective_len = r.scalar("effective_len")?;
            let tail_values = r.counted("tail_values")?;
            let tail_residuals = r.counted("tail_residuals")?;
            let count: usize = r.scalar("warnings")?;
            let mut warnings = Vec::with_capacity(count);
            for _ in 0..count {
                warnings.push(r.text_field("warning")?.1.to_string());
            }
            if phi.len() != p || theta.len() != q || tail_values.len() < p || tail_residuals.len() < q {
                return Err(Error::format(n, "ARMA block sizes disagree with its order"));
            }
            Ok(FittedModel::Arma(ArmaModel {
                p,
                q,
                phi,
                theta,
                intercept,
                noise_variance,
                tail_values,
                tail_residuals,
                effective_len,
                warnings,
            }))
        }
        Method::Svr => {
            let (n, toks) = r.field("svr")?;
            let kernel = match toks.as_slice() {
                ["linear"] => Kernel::Linear,
                ["rbf", g] => Kernel::Rbf {
                    gamma: g.parse().map_err(|_| Error::format(n, "bad gamma"))?,
                },
                _ => return Err(Error::format(n, "unknown kernel")),
            };
            let c = r.scalar("c")?;
            let epsilon = r.scalar("epsilon")?;
            let bias = r.scalar("bias")?;
            let dim: usize = r.scalar("dim")?;
            let converged = r.scalar("converged")?;
            let count: usize = r.scalar("support")?;
            let mut support_indices = Vec::with_capacity(count);
            let mut beta = Vec::with_capacity(count);
            let mut support_inputs = Vec::with_capacity(count * dim);
            for _ in 0..count {
                let (n, toks) = r.field("sv")?;
                if toks.len() != dim + 2 {
                    return Err(Error::format(n, format!("support vector needs {} fields", dim + 2)));
                }
                support_indices.push(toks[0].parse().map_err(|_| Error::format(n, "bad index"))?);
                beta.push(toks[1].parse().map_err(|_| Error::format(n, "bad coefficient"))?);
                support_inputs.extend(parse_floats(n, &toks[2..])?);
            }
            Ok(FittedModel::Svr(SvrModel {
                kernel,
                c,
                epsilon,
                bias,
                dim,
                support_inputs,
                support_indices,
                beta,
                converged,
            }))
        }
        Method::Nar => {
            let (n, toks) = r.field("mlp")?;
            let [a, b] = toks.as_slice() else {
                return Err(Error::format(n, "`mlp` takes inputs and hidden"));
            };
            let n_in = a.parse().map_err(|_| Error::format(n, "bad input count"))?;
            let hidden = b.parse().map_err(|_| Error::format(n, "bad hidden count"))?;
            let params = r.block()?;
            MlpModel::from_params(n_in, hidden, params).map(FittedModel::Nar).map_err(wrap)
        }
        Method::Lstm => {
            let (n, toks) = r.field("lstm")?;
            let [a, b] = toks.as_slice() else {
                return Err(Error::format(n, "`lstm` takes cells and activation"));
            };
            let cells = a.parse().map_err(|_| Error::format(n, "bad cell count"))?;
            let act = CellActivation::from_name(b).ok_or_else(|| Error::format(n, "unknown activation"))?;
            let params = r.block()?;
            LstmModel::from_params(cells, act, params).map(FittedModel::Lstm).map_err(wrap)
        }
    }
}

/// Reads one ensemble after its header line, through its `end` line.
fn read_ensemble(r: &mut TextReader<'_>) -> Result<HorizonEnsemble> {
    let (n, toks) = r.field("method")?;
    let method: Method = toks
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(n, "unknown method"))?;
    let (n, strategy) = r.text_field("strategy")?;
    let recursive = match strategy {
        "recursive" => true,
        "direct" => false,
        _ => return Err(Error::format(n, "strategy must be direct or recursive")),
    };
    if recursive != (method == Method::Arma) {
        return Err(Error::format(n, format!("{method} cannot use the {strategy} strategy")));
    }
    let window: usize = r.scalar("window")?;
    let horizon: usize = r.scalar("horizon")?;
    let (n, toks) = r.field("normalizer")?;
    let stats = parse_floats(n, &toks)?;
    let normalizer = match stats.as_slice() {
        [mean, std] => Normalizer::new(*mean, *std).map_err(|e| Error::format(n, e.to_string()))?,
        _ => return Err(Error::format(n, "normalizer takes mean and std")),
    };
    let base_seed = r.scalar("base_seed")?;
    let train_len = r.scalar("train_len")?;
    let mut params = MethodParams::defaults(method, window);
    while r.peek_key() == Some("param") {
        let (n, toks) = r.field("param")?;
        let [key, value] = toks.as_slice() else {
            return Err(Error::format(n, "`param` takes a key and a value"));
        };
        params.set(key, value).map_err(|e| Error::format(n, e.to_string()))?;
    }
    let at = r.line();
    let spec = ModelSpec::new(params, window, base_seed).map_err(|e| Error::format(at, e.to_string()))?;
    let count = if recursive { 1 } else { horizon };
    if horizon == 0 {
        return Err(Error::format(at, "horizon must be ≥ 1"));
    }
    let mut models = Vec::with_capacity(count);
    for k in 1..=count {
        let (n, step) = r.field("model")?;
        if step.as_slice() != [k.to_string().as_str()] {
            return Err(Error::format(n, format!("expected model {k}")));
        }
        models.push(read_model(r, method)?);
    }
    let (n, rest) = r.field("end")?;
    if !rest.is_empty() {
        return Err(Error::format(n, "unexpected tokens after `end`"));
    }
    Ok(HorizonEnsemble {
        spec,
        horizon,
        normalizer,
        train_len,
        models,
        wall_times: Vec::new(),
    })
}
