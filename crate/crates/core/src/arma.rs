//! ARMA(p, q) baseline estimated by the Hannan–Rissanen two-stage least
//! squares procedure, with recursive multi-step forecasting.
//!
//! The model is
//!
//! ```text
//! x_t = c + Σ_{j=1..p} φ_j x_{t−j} + Σ_{j=1..q} θ_j e_{t−j} + e_t
//! ```
//!
//! Stage one fits a long AR(m) by OLS, m = max(20, 2(p+q)), and keeps its
//! residuals as proxies for the unobserved innovations. Stage two regresses
//! x_t on p lags of x and q lags of those proxies.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{self, least_squares};

/// Order used when automatic selection is disabled.
pub const DEFAULT_ORDER: (usize, usize) = (3, 2);
/// Largest order accepted by [`select_order`].
pub const MAX_SELECT_ORDER: usize = 5;
/// AR characteristic roots at or inside this modulus trigger a warning.
const ROOT_WARN_MODULUS: f64 = 1.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub noise_variance: f64,
    /// Most recent training values, oldest first.
    pub tail_values: Vec<f64>,
    /// Most recent in-sample residuals, oldest first.
    pub tail_residuals: Vec<f64>,
    /// Number of residuals the noise variance was estimated from.
    pub effective_len: usize,
    pub warnings: Vec<String>,
}

impl ArmaModel {
    /// Hannan–Rissanen estimate of an ARMA(p, q) on `train`.
    pub fn fit(train: &[f64], p: usize, q: usize) -> Result<Self> {
        if p + q == 0 {
            return Err(Error::InvalidParameter("ARMA needs p + q ≥ 1".into()));
        }
        let needed = 10 * (p + q + 1);
        if train.len() < needed {
            return Err(Error::SeriesTooShort {
                needed,
                available: train.len(),
            });
        }
        let n = train.len();

        let (long_order, proxies) = if q > 0 {
            let m = 20.max(2 * (p + q));
            (m, long_ar_residuals(train, m)?)
        } else {
            (0, Vec::new())
        };

        let first = p.max(if q > 0 { long_order + q } else { 0 });
        let n_params = 1 + p + q;
        if n < first + n_params + 1 {
            return Err(Error::SeriesTooShort {
                needed: first + n_params + 1,
                available: n,
            });
        }

        let mut rows = Vec::with_capacity(n - first);
        let mut y = Vec::with_capacity(n - first);
        for t in first..n {
            let mut row = Vec::with_capacity(n_params);
            row.push(1.0);
            row.extend((1..=p).map(|j| train[t - j]));
            row.extend((1..=q).map(|j| proxies[t - j]));
            rows.push(row);
            y.push(train[t]);
        }
        let coef = least_squares(&rows, &y).ok_or(Error::SingularNormalEquations)?;

        let residuals: Vec<f64> = rows
            .iter()
            .zip(&y)
            .map(|(row, &target)| target - dot(row, &coef))
            .collect();
        let noise_variance = residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64;

        let keep = p.max(long_order).min(n);
        let mut model = ArmaModel {
            p,
            q,
            intercept: coef[0],
            phi: coef[1..1 + p].to_vec(),
            theta: coef[1 + p..].to_vec(),
            noise_variance,
            tail_values: train[n - keep..].to_vec(),
            tail_residuals: residuals[residuals.len() - q..].to_vec(),
            effective_len: residuals.len(),
            warnings: Vec::new(),
        };
        if let Some(modulus) = model.min_ar_root_modulus() {
            if modulus <= ROOT_WARN_MODULUS {
                model.warnings.push(format!(
                    "AR characteristic root with modulus {modulus:.4} (≤ {ROOT_WARN_MODULUS}); model may be non-stationary"
                ));
            }
        }
        Ok(model)
    }

    /// Akaike information criterion N·ln σ² + 2(p+q+1).
    pub fn aic(&self) -> f64 {
        self.effective_len as f64 * self.noise_variance.ln() + 2.0 * (self.p + self.q + 1) as f64
    }

    /// Smallest modulus among the roots of 1 − φ₁z − … − φ_p z^p, or `None`
    /// for p = 0.
    pub fn min_ar_root_modulus(&self) -> Option<f64> {
        if self.p == 0 {
            return None;
        }
        // roots are reciprocals of the companion-matrix eigenvalues
        let p = self.p;
        let companion = Mat::from_fn(p, p, |i, j| {
            if i == 0 {
                self.phi[j]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let eig = companion.eigenvalues();
        linalg::settle();
        let eig = eig.ok()?;
        let largest = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Some(if largest > 0.0 { 1.0 / largest } else { f64::INFINITY })
    }

    /// Process mean c / (1 − Σφ).
    pub fn process_mean(&self) -> f64 {
        self.intercept / (1.0 - self.phi.iter().sum::<f64>())
    }

    /// Conditional one-step residuals over `values`, with innovations before
    /// the first p samples taken as zero.
    pub fn filter_residuals(&self, values: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; values.len()];
        for t in self.p..values.len() {
            let mut pred = self.intercept;
            for (j, phi) in self.phi.iter().enumerate() {
                pred += phi * values[t - j - 1];
            }
            for (j, theta) in self.theta.iter().enumerate() {
                if t > j {
                    pred += theta * e[t - j - 1];
                }
            }
            e[t] = values[t] - pred;
        }
        e
    }

    /// Recursive forecast: future innovations are zero, forecasts feed back
    /// as AR inputs, the last q `residuals` drive the MA part.
    pub fn forecast_with(&self, values: &[f64], residuals: &[f64], h: usize) -> Result<Vec<f64>> {
        if values.len() < self.p {
            return Err(Error::InsufficientHistory {
                needed: self.p,
                available: values.len(),
            });
        }
        if residuals.len() < self.q {
            return Err(Error::InsufficientHistory {
                needed: self.q,
                available: residuals.len(),
            });
        }
        if h == 0 {
            return Err(Error::InvalidParameter("horizon must be ≥ 1".into()));
        }
        let mut x: Vec<f64> = values[values.len() - self.p..].to_vec();
        let mut e: Vec<f64> = residuals[residuals.len() - self.q..].to_vec();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let mut next = self.intercept;
            for (j, phi) in self.phi.iter().enumerate() {
                next += phi * x[x.len() - 1 - j];
            }
            for (j, theta) in self.theta.iter().enumerate() {
                next += theta * e[e.len() - 1 - j];
            }
            out.push(next);
            x.push(next);
            e.push(0.0);
        }
        Ok(out)
    }

    /// Forecast continuing the training sample.
    pub fn forecast(&self, h: usize) -> Result<Vec<f64>> {
        self.forecast_with(&self.tail_values, &self.tail_residuals, h)
    }

    /// Forecast from an arbitrary recent `history`; residuals are
    /// reconstructed by filtering the history through the model.
    pub fn forecast_from(&self, history: &[f64], h: usize) -> Result<Vec<f64>> {
        let needed = self.p.max(1);
        if history.len() < needed {
            return Err(Error::InsufficientHistory {
                needed,
                available: history.len(),
            });
        }
        let residuals = self.filter_residuals(history);
        let residuals = if residuals.len() < self.q {
            let mut padded = vec![0.0; self.q - residuals.len()];
            padded.extend(residuals);
            padded
        } else {
            residuals
        };
        self.forecast_with(history, &residuals, h)
    }
}

/// Residuals of a long AR(m) fitted by OLS; entries before index m are zero.
fn long_ar_residuals(x: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 * m + 2 {
        return Err(Error::SeriesTooShort {
            needed: 2 * m + 2,
            available: n,
        });
    }
    let rows: Vec<Vec<f64>> = (m..n)
        .map(|t| {
            let mut row = Vec::with_capacity(m + 1);
            row.push(1.0);
            row.extend((1..=m).map(|j| x[t - j]));
            row
        })
        .collect();
    let coef = least_squares(&rows, &x[m..]).ok_or(Error::SingularNormalEquations)?;
    let mut resid = vec![0.0; n];
    for (t, row) in (m..n).zip(&rows) {
        resid[t] = x[t] - dot(row, &coef);
    }
    Ok(resid)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// AIC-minimizing (p, q) over 0..=p_max × 0..=q_max, p + q ≥ 1. Candidates
/// that fail to fit are skipped; ties keep the earlier grid point.
pub fn select_order(train: &[f64], p_max: usize, q_max: usize) -> Result<(usize, usize)> {
    if p_max > MAX_SELECT_ORDER || q_max > MAX_SELECT_ORDER {
        return Err(Error::InvalidParameter(format!(
            "order grid limited to {MAX_SELECT_ORDER}"
        )));
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for p in 0..=p_max {
        for q in 0..=q_max {
            if p + q == 0 {
                continue;
            }
            let Ok(model) = ArmaModel::fit(train, p, q) else {
                continue;
            };
            let aic = model.aic();
            if !aic.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, b)| aic < b) {
                best = Some(((p, q), aic));
            }
        }
    }
    best.map(|(order, _)| order).ok_or(Error::NoFeasibleOrder)
}
