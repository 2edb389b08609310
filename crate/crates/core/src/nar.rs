//! One-hidden-layer feed-forward network for a single horizon subproblem,
//! trained by Levenberg–Marquardt with Bayesian (evidence-framework)
//! regularization of the weights.
//!
//! Under the direct strategy every subproblem is trained open loop, so the
//! network input is exactly the lag window; the fed-back previous output of
//! a closed-loop NAR equals the last window element during training.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SupervisedSet;
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_HIDDEN: usize = 40;

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Parameters are stored flat as
/// `[w_hidden (hidden × n_in, row per neuron) | b_hidden | w_out | b_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    n_in: usize,
    n_hidden: usize,
    params: Vec<f64>,
}

impl MlpModel {
    pub fn param_count_for(n_in: usize, n_hidden: usize) -> usize {
        n_hidden * n_in + 2 * n_hidden + 1
    }

    pub fn zeros(n_in: usize, n_hidden: usize) -> Self {
        MlpModel {
            n_in,
            n_hidden,
            params: vec![0.0; Self::param_count_for(n_in, n_hidden)],
        }
    }

    pub fn from_params(n_in: usize, n_hidden: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count_for(n_in, n_hidden);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("network parameters must be finite".into()));
        }
        Ok(MlpModel {
            n_in,
            n_hidden,
            params,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn w_hidden(&self) -> &[f64] {
        &self.params[..self.n_hidden * self.n_in]
    }

    pub fn w_hidden_mut(&mut self) -> &mut [f64] {
        let end = self.n_hidden * self.n_in;
        &mut self.params[..end]
    }

    pub fn b_hidden(&self) -> &[f64] {
        let start = self.n_hidden * self.n_in;
        &self.params[start..start + self.n_hidden]
    }

    pub fn b_hidden_mut(&mut self) -> &mut [f64] {
        let start = self.n_hidden * self.n_in;
        &mut self.params[start..start + self.n_hidden]
    }

    pub fn w_out(&self) -> &[f64] {
        let start = self.n_hidden * (self.n_in + 1);
        &self.params[start..start + self.n_hidden]
    }

    pub fn w_out_mut(&mut self) -> &mut [f64] {
        let start = self.n_hidden * (self.n_in + 1);
        &mut self.params[start..start + self.n_hidden]
    }

    pub fn b_out(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub fn set_b_out(&mut self, b: f64) {
        let last = self.params.len() - 1;
        self.params[last] = b;
    }

    /// y = w_out · σ(W x + b) + b_out.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.n_in,
                got: x.len(),
            });
        }
        Ok(forward_flat(&self.params, self.n_in, self.n_hidden, x))
    }
}

#[inline]
fn forward_flat(params: &[f64], n_in: usize, n_hidden: usize, x: &[f64]) -> f64 {
    let w = &params[..n_hidden * n_in];
    let b = &params[n_hidden * n_in..n_hidden * (n_in + 1)];
    let v = &params[n_hidden * (n_in + 1)..n_hidden * (n_in + 2)];
    let mut y = params[params.len() - 1];
    for j in 0..n_hidden {
        let row = &w[j * n_in..(j + 1) * n_in];
        let a: f64 = b[j] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        y += v[j] * sigmoid(a);
    }
    y
}

/// Nguyen–Widrow initialization: each hidden weight row is uniform then
/// rescaled to norm 0.7·H^{1/n_in}, hidden biases uniform in ±that norm,
/// output layer uniform in ±0.1.
pub fn nguyen_widrow_init(n_in: usize, n_hidden: usize, seed: u64) -> MlpModel {
    assert!(n_in >= 1 && n_hidden >= 1, "network needs at least one input and one neuron");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MlpModel::zeros(n_in, n_hidden);
    let scale = 0.7 * (n_hidden as f64).powf(1.0 / n_in as f64);
    for j in 0..n_hidden {
        let row = &mut m.w_hidden_mut()[j * n_in..(j + 1) * n_in];
        loop {
            for w in row.iter_mut() {
                *w = rng.random_range(-1.0..1.0);
            }
            let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 1e-8 {
                row.iter_mut().for_each(|w| *w *= scale / norm);
                break;
            }
        }
    }
    for b in m.b_hidden_mut() {
        *b = rng.random_range(-scale..scale);
    }
    for v in m.w_out_mut() {
        *v = rng.random_range(-0.1..0.1);
    }
    let b_out = rng.random_range(-0.1..0.1);
    m.set_b_out(b_out);
    m
}

/// Errors e_i = target_i − output_i.
fn errors(params: &[f64], n_in: usize, n_hidden: usize, data: &SupervisedSet) -> Vec<f64> {
    data.inputs()
        .zip(data.targets())
        .map(|(x, t)| t - forward_flat(params, n_in, n_hidden, x))
        .collect()
}

/// Jacobian of the signed errors, ∂e_i/∂w_j, by backpropagation.
pub fn mlp_jacobian(model: &MlpModel, data: &SupervisedSet) -> Result<Mat<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.window() != model.n_in {
        return Err(Error::DimensionMismatch {
            expected: model.n_in,
            got: data.window(),
        });
    }
    Ok(jacobian_flat(&model.params, model.n_in, model.n_hidden, data))
}

fn jacobian_flat(params: &[f64], n_in: usize, n_hidden: usize, data: &SupervisedSet) -> Mat<f64> {
    let n_w = params.len();
    let w = &params[..n_hidden * n_in];
    let b = &params[n_hidden * n_in..n_hidden * (n_in + 1)];
    let v = &params[n_hidden * (n_in + 1)..n_hidden * (n_in + 2)];
    let b_hidden_at = n_hidden * n_in;
    let w_out_at = n_hidden * (n_in + 1);
    let mut jac = Mat::<f64>::zeros(data.len(), n_w);
    for (i, x) in data.inputs().enumerate() {
        for j in 0..n_hidden {
            let row = &w[j * n_in..(j + 1) * n_in];
            let a: f64 = b[j] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            let s = sigmoid(a);
            // e = t − y, so every entry is −∂y/∂w
            let d = -v[j] * s * (1.0 - s);
            for (k, xk) in x.iter().enumerate() {
                jac[(i, j * n_in + k)] = d * xk;
            }
            jac[(i, b_hidden_at + j)] = d;
            jac[(i, w_out_at + j)] = -s;
        }
        jac[(i, n_w - 1)] = -1.0;
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub mu_init: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub alpha_init: f64,
    pub beta_init: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            mu_init: 1e-3,
            mu_inc: 10.0,
            mu_dec: 0.1,
            mu_min: 1e-20,
            mu_max: 1e10,
            max_iters: 200,
            grad_tol: 1e-7,
            alpha_init: 0.0,
            beta_init: 1.0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_init > 0.0
            && self.mu_inc > 1.0
            && self.mu_dec > 0.0
            && self.mu_dec < 1.0
            && self.mu_min > 0.0
            && self.mu_min <= self.mu_init
            && self.mu_init <= self.mu_max
            && self.max_iters >= 1
            && self.grad_tol >= 0.0
            && self.alpha_init >= 0.0
            && self.beta_init > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("inconsistent Levenberg–Marquardt settings".into()))
        }
    }
}

/// Damping and evidence hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmState {
    pub mu: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    /// Weight-decay hyperparameter.
    pub alpha: f64,
    /// Data-fit hyperparameter.
    pub beta: f64,
    /// Effective number of parameters.
    pub gamma_eff: f64,
}

/// One outer LM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmIteration {
    /// F = β·E_D + α·E_W at the start of the iteration.
    pub objective_before: f64,
    /// F at the accepted point under the same α, β; `None` when no damping
    /// value produced a decrease.
    pub objective_after: Option<f64>,
    pub mu: f64,
    /// Hyperparameters after the evidence update of this iteration.
    pub alpha: f64,
    pub beta: f64,
    pub gamma_eff: f64,
    pub sse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStop {
    MaxIters,
    MuMax,
    GradientTolerance,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub model: MlpModel,
    pub state: LmState,
    pub trace: Vec<LmIteration>,
    pub stop: LmStop,
}

impl LmOutcome {
    pub fn final_mse(&self, data: &SupervisedSet) -> f64 {
        let e = errors(&self.model.params, self.model.n_in, self.model.n_hidden, data);
        e.iter().map(|e| e * e).sum::<f64>() / e.len() as f64
    }
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

/// Levenberg–Marquardt with Bayesian regularization.
///
/// Minimizes F = β·E_D + α·E_W (E_D = Σe², E_W = Σw²). Each iteration solves
/// (β JᵀJ + (α + μ) I) Δw = −(β Jᵀe + α w) and accepts the step only if F
/// decreases; after an accepted step the evidence framework re-estimates
/// γ = N_w − α·tr(H⁻¹) with H = β JᵀJ + α I, α = γ / (2 E_W) and
/// β = (N − γ) / (2 E_D).
pub fn lm_br_train(init: &MlpModel, data: &SupervisedSet, cfg: &LmConfig) -> Result<LmOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.window() != init.n_in {
        return Err(Error::DimensionMismatch {
            expected: init.n_in,
            got: data.window(),
        });
    }
    let (n_in, n_hidden) = (init.n_in, init.n_hidden);
    let n_w = init.params.len();
    let n = data.len() as f64;

    let mut w = init.params.clone();
    let mut e = errors(&w, n_in, n_hidden, data);
    let mut state = LmState {
        mu: cfg.mu_init,
        mu_inc: cfg.mu_inc,
        mu_dec: cfg.mu_dec,
        alpha: cfg.alpha_init,
        beta: cfg.beta_init,
        gamma_eff: n_w as f64,
    };
    let mut e_d = sum_sq(&e);
    let mut e_w = sum_sq(&w);
    let mut f = state.beta * e_d + state.alpha * e_w;
    let mut trace: Vec<LmIteration> = Vec::new();
    let objective_trace = |trace: &[LmIteration]| trace.iter().map(|t| t.objective_before).collect();
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective {
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let mut jtj = Mat::<f64>::zeros(n_w, n_w);
    let mut stop = LmStop::MaxIters;
    for _ in 0..cfg.max_iters {
        let jac = jacobian_flat(&w, n_in, n_hidden, data);
        linalg::gemm(jtj.as_mut(), false, jac.transpose(), jac.as_ref());
        let ev = Mat::from_fn(e.len(), 1, |i, _| e[i]);
        let mut jte = Mat::<f64>::zeros(n_w, 1);
        linalg::gemm(jte.as_mut(), false, jac.transpose(), ev.as_ref());
        let grad: Vec<f64> = (0..n_w)
            .map(|k| state.beta * jte[(k, 0)] + state.alpha * w[k])
            .collect();
        let grad_norm = 2.0 * sum_sq(&grad).sqrt();
        if grad_norm < cfg.grad_tol {
            stop = LmStop::GradientTolerance;
            break;
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();

        let mut accepted = None;
        let mut any_solved = false;
        loop {
            let damped = Mat::from_fn(n_w, n_w, |r, c| {
                let v = state.beta * jtj[(r, c)];
                if r == c {
                    v + state.alpha + state.mu
                } else {
                    v
                }
            });
            if let Some(dw) = linalg::solve_spd(damped.as_ref(), &rhs, 0.0) {
                any_solved = true;
                let w_new: Vec<f64> = w.iter().zip(&dw).map(|(a, b)| a + b).collect();
                let e_new = errors(&w_new, n_in, n_hidden, data);
                let (e_d_new, e_w_new) = (sum_sq(&e_new), sum_sq(&w_new));
                let f_new = state.beta * e_d_new + state.alpha * e_w_new;
                if f_new.is_finite() && f_new < f {
                    accepted = Some((w_new, e_new, e_d_new, e_w_new, f_new));
                    state.mu = (state.mu * state.mu_dec).max(cfg.mu_min);
                    break;
                }
            }
            state.mu *= state.mu_inc;
            if state.mu > cfg.mu_max {
                break;
            }
        }

        let Some((w_new, e_new, e_d_new, e_w_new, f_new)) = accepted else {
            if !any_solved {
                return Err(Error::SingularSystem);
            }
            // keep the invariant mu ≤ mu_max on the reported state
            state.mu = cfg.mu_max;
            trace.push(LmIteration {
                objective_before: f,
                objective_after: None,
                mu: state.mu,
                alpha: state.alpha,
                beta: state.beta,
                gamma_eff: state.gamma_eff,
                sse: e_d,
            });
            stop = LmStop::MuMax;
            break;
        };

        // evidence update from the Gauss–Newton Hessian at the pre-step point
        let gamma = if state.alpha > 0.0 {
            let hess = Mat::from_fn(n_w, n_w, |r, c| {
                let v = state.beta * jtj[(r, c)];
                if r == c {
                    v + state.alpha
                } else {
                    v
                }
            });
            match linalg::trace_of_inverse(hess.as_ref(), 0.0) {
                Some(tr) => n_w as f64 - state.alpha * tr,
                None => state.gamma_eff,
            }
        } else {
            n_w as f64
        };
        let gamma = gamma.clamp(0.0, n_w as f64);
        let tiny = 1e-300;
        state.gamma_eff = gamma;
        state.alpha = gamma / (2.0 * e_w_new.max(tiny));
        state.beta = (n - gamma).max(1.0) / (2.0 * e_d_new.max(tiny));

        trace.push(LmIteration {
            objective_before: f,
            objective_after: Some(f_new),
            mu: state.mu,
            alpha: state.alpha,
            beta: state.beta,
            gamma_eff: state.gamma_eff,
            sse: e_d_new,
        });

        w = w_new;
        e = e_new;
        e_d = e_d_new;
        e_w = e_w_new;
        f = state.beta * e_d + state.alpha * e_w;
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective {
                iterations: trace.len(),
                trace: objective_trace(&trace),
            });
        }
    }

    let model = MlpModel::from_params(n_in, n_hidden, w).map_err(|_| Error::NonFiniteObjective {
        iterations: trace.len(),
        trace: objective_trace(&trace),
    })?;
    Ok(LmOutcome {
        model,
        state,
        trace,
        stop,
    })
}
