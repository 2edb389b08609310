//! ε-insensitive support vector regression trained by sequential minimal
//! optimization.
//!
//! The dual is written over one signed coefficient per training point,
//! β_i = α_i − α_i*:
//!
//! ```text
//! maximize  W(β) = Σ β_i y_i − ε Σ |β_i| − ½ Σ_ij β_i β_j K(x_i, x_j)
//! s.t.      Σ β_i = 0,  −C ≤ β_i ≤ C
//! ```
//!
//! Each SMO iteration picks the maximal violating pair (i, j), moves
//! β_i ← β_i + t, β_j ← β_j − t and maximizes the resulting concave
//! piecewise-quadratic in t exactly, so both constraints hold after every
//! update and W never decreases.

use crate::data::SupervisedSet;
use crate::error::{Error, Result};

/// Training sets up to this size keep the whole kernel matrix in memory.
pub const FULL_KERNEL_CACHE_LIMIT: usize = 8_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// exp(−γ‖a−b‖²)
    Rbf { gamma: f64 },
    /// ⟨a, b⟩
    Linear,
}

impl Kernel {
    #[inline]
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }
}

/// exp(−γ‖a−b‖²).
pub fn kernel_rbf(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::InvalidParameter("gamma must be ≥ 0".into()));
    }
    Kernel::Rbf { gamma }.eval(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
}

impl SvrParams {
    /// C = 1, ε = 0.1 and an RBF kernel with γ = 1/window.
    pub fn for_window(window: usize) -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            kernel: Kernel::Rbf {
                gamma: 1.0 / window.max(1) as f64,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParameter("C must be > 0".into()));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be ≥ 0".into()));
        }
        if let Kernel::Rbf { gamma } = self.kernel {
            if !(gamma >= 0.0) || !gamma.is_finite() {
                return Err(Error::InvalidParameter("gamma must be ≥ 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    /// Stop once the maximal KKT violation drops to this value.
    pub tol: f64,
    /// Consecutive non-improving iterations tolerated before giving up.
    pub max_passes: usize,
    pub max_iters: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tol: 1e-3,
            max_passes: 10,
            max_iters: 1_000_000,
        }
    }
}

impl SmoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_passes == 0 || self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "SMO needs tol > 0 and iteration caps ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub c: f64,
    pub epsilon: f64,
    pub bias: f64,
    pub dim: usize,
    /// Row-major support vectors, one per non-zero coefficient.
    pub support_inputs: Vec<f64>,
    /// Position of each support vector in the training set.
    pub support_indices: Vec<usize>,
    pub beta: Vec<f64>,
    pub converged: bool,
}

impl SvrModel {
    pub fn support_count(&self) -> usize {
        self.beta.len()
    }

    pub fn support(&self, k: usize) -> &[f64] {
        &self.support_inputs[k * self.dim..(k + 1) * self.dim]
    }

    /// f(x) = Σ β_i K(x, s_i) + b.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut f = self.bias;
        for (k, b) in self.beta.iter().enumerate() {
            f += b * self.kernel.eval_unchecked(x, self.support(k));
        }
        f
    }

    /// Dense coefficient vector over the `len` training points.
    pub fn dense_beta(&self, len: usize) -> Result<Vec<f64>> {
        let mut beta = vec![0.0; len];
        for (&i, &b) in self.support_indices.iter().zip(&self.beta) {
            *beta.get_mut(i).ok_or_else(|| {
                Error::ShapeMismatch(format!("support index {i} outside training set of {len}"))
            })? = b;
        }
        Ok(beta)
    }
}

/// Outcome of one SMO run.
#[derive(Debug, Clone)]
pub struct SvrFit {
    pub model: SvrModel,
    pub iterations: usize,
    /// Dual objective after every iteration, starting with W(0) = 0.
    pub objective_trace: Vec<f64>,
    /// Maximal KKT violation at exit.
    pub violation: f64,
    pub converged: bool,
}

/// Value of the dual objective at `beta`.
pub fn dual_objective(kernel: Kernel, epsilon: f64, data: &SupervisedSet, beta: &[f64]) -> Result<f64> {
    if beta.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: beta.len(),
        });
    }
    let mut w = 0.0;
    for i in 0..data.len() {
        if beta[i] == 0.0 {
            continue;
        }
        w += beta[i] * data.targets()[i] - epsilon * beta[i].abs();
        let mut quad = 0.0;
        for j in 0..data.len() {
            if beta[j] != 0.0 {
                quad += beta[j] * kernel.eval_unchecked(data.input(i), data.input(j));
            }
        }
        w -= 0.5 * beta[i] * quad;
    }
    Ok(w)
}

/// Dual objective at a fitted model's coefficients.
pub fn svr_dual_objective(model: &SvrModel, data: &SupervisedSet) -> Result<f64> {
    if data.window() != model.dim && !data.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: data.window(),
        });
    }
    let beta = model.dense_beta(data.len())?;
    dual_objective(model.kernel, model.epsilon, data, &beta)
}

enum KernelRows<'a> {
    Full { n: usize, k: Vec<f64> },
    OnTheFly { data: &'a SupervisedSet, kernel: Kernel },
}

impl KernelRows<'_> {
    fn new(data: &SupervisedSet, kernel: Kernel) -> KernelRows<'_> {
        let n = data.len();
        if n > FULL_KERNEL_CACHE_LIMIT {
            return KernelRows::OnTheFly { data, kernel };
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval_unchecked(data.input(i), data.input(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        KernelRows::Full { n, k }
    }

    fn row<'b>(&'b self, i: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        match self {
            KernelRows::Full { n, k } => &k[i * n..(i + 1) * n],
            KernelRows::OnTheFly { data, kernel } => {
                buf.clear();
                let xi = data.input(i);
                buf.extend(data.inputs().map(|xj| kernel.eval_unchecked(xi, xj)));
                buf
            }
        }
    }
}

/// Fits an ε-SVR by SMO.
///
/// Hitting `max_iters` or `max_passes` stagnant iterations does not fail:
/// the best model so far is returned with `converged == false`.
pub fn fit_svr(data: &SupervisedSet, params: SvrParams, cfg: SmoConfig) -> Result<SvrFit> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    cfg.validate()?;

    let n = data.len();
    let y = data.targets();
    let (c, eps) = (params.c, params.epsilon);
    let rows = KernelRows::new(data, params.kernel);
    let diag: Vec<f64> = (0..n)
        .map(|i| params.kernel.eval_unchecked(data.input(i), data.input(i)))
        .collect();

    let mut beta = vec![0.0; n];
    // g_i = y_i − Σ_k β_k K_ik
    let mut grad = y.to_vec();
    let mut objective = 0.0f64;
    let mut trace = vec![0.0];
    let mut stagnant = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut violation;
    let (mut buf_i, mut buf_j) = (Vec::new(), Vec::new());

    loop {
        let (i, j, v) = select_pair(&beta, &grad, c, eps);
        violation = v;
        if violation <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters || stagnant >= cfg.max_passes {
            break;
        }
        iterations += 1;

        let row_i = rows.row(i, &mut buf_i);
        let kij = row_i[j];
        let eta = diag[i] + diag[j] - 2.0 * kij;
        let step = PairStep {
            bi: beta[i],
            bj: beta[j],
            gi: grad[i],
            gj: grad[j],
            eta,
            c,
            eps,
        };
        let (t, gain) = step.maximize();
        if t == 0.0 || !(gain > 0.0) {
            stagnant += 1;
            trace.push(objective);
            continue;
        }
        if gain <= 1e-15 * objective.abs().max(1.0) {
            stagnant += 1;
        } else {
            stagnant = 0;
        }

        beta[i] = step.new_bi(t);
        beta[j] = step.new_bj(t);
        // row_i borrowed buf_i; take a fresh borrow for j
        let row_i = rows.row(i, &mut buf_i);
        let row_j = rows.row(j, &mut buf_j);
        for k in 0..n {
            grad[k] -= t * (row_i[k] - row_j[k]);
        }
        objective += gain;
        trace.push(objective);
    }

    let bias = compute_bias(&beta, &grad, c, eps);
    let mut support_inputs = Vec::new();
    let mut support_indices = Vec::new();
    let mut coef = Vec::new();
    for (i, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            support_inputs.extend_from_slice(data.input(i));
            support_indices.push(i);
            coef.push(b);
        }
    }
    let model = SvrModel {
        kernel: params.kernel,
        c,
        epsilon: eps,
        bias,
        dim: data.window(),
        support_inputs,
        support_indices,
        beta: coef,
        converged,
    };
    Ok(SvrFit {
        model,
        iterations,
        objective_trace: trace,
        violation,
        converged,
    })
}

/// Directional derivative of W when β_i increases.
#[inline]
fn up_slope(b: f64, g: f64, eps: f64) -> f64 {
    if b >= 0.0 {
        g - eps
    } else {
        g + eps
    }
}

/// Negated directional derivative of W when β_j decreases.
#[inline]
fn down_slope(b: f64, g: f64, eps: f64) -> f64 {
    if b <= 0.0 {
        g + eps
    } else {
        g - eps
    }
}

/// Maximal violating pair: i maximizes the up-slope among β_i < C, j
/// minimizes the down-slope among β_j > −C. Returns (i, j, violation);
/// ties resolve to the lowest index.
fn select_pair(beta: &[f64], grad: &[f64], c: f64, eps: f64) -> (usize, usize, f64) {
    let (mut i, mut up) = (usize::MAX, f64::NEG_INFINITY);
    let (mut j, mut dn) = (usize::MAX, f64::INFINITY);
    for k in 0..beta.len() {
        if beta[k] < c {
            let s = up_slope(beta[k], grad[k], eps);
            if s > up {
                up = s;
                i = k;
            }
        }
        if beta[k] > -c {
            let s = down_slope(beta[k], grad[k], eps);
            if s < dn {
                dn = s;
                j = k;
            }
        }
    }
    if i == usize::MAX || j == usize::MAX {
        return (0, 0, f64::NEG_INFINITY);
    }
    (i, j, up - dn)
}

fn compute_bias(beta: &[f64], grad: &[f64], c: f64, eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut free = 0usize;
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..beta.len() {
        let b = beta[k];
        if b != 0.0 && b.abs() < c {
            sum += grad[k] - eps * b.signum();
            free += 1;
        }
        if b < c {
            lower = lower.max(up_slope(b, grad[k], eps));
        }
        if b > -c {
            upper = upper.min(down_slope(b, grad[k], eps));
        }
    }
    if free > 0 {
        return sum / free as f64;
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}

/// One pairwise subproblem: maximize
/// φ(t) = t(g_i − g_j) − ½ηt² − ε(|β_i+t| − |β_i| + |β_j−t| − |β_j|)
/// over the feasible t ≥ 0.
struct PairStep {
    bi: f64,
    bj: f64,
    gi: f64,
    gj: f64,
    eta: f64,
    c: f64,
    eps: f64,
}

impl PairStep {
    fn upper(&self) -> f64 {
        (self.c - self.bi).min(self.bj + self.c).max(0.0)
    }

    fn gain(&self, t: f64) -> f64 {
        t * (self.gi - self.gj) - 0.5 * self.eta * t * t
            - self.eps
                * ((self.bi + t).abs() - self.bi.abs() + (self.bj - t).abs() - self.bj.abs())
    }

    fn new_bi(&self, t: f64) -> f64 {
        if t == -self.bi {
            0.0
        } else if t == self.c - self.bi {
            self.c
        } else {
            (self.bi + t).clamp(-self.c, self.c)
        }
    }

    fn new_bj(&self, t: f64) -> f64 {
        if t == self.bj {
            0.0
        } else if t == self.bj + self.c {
            -self.c
        } else {
            (self.bj - t).clamp(-self.c, self.c)
        }
    }

    /// Exact maximizer and its gain.
    fn maximize(&self) -> (f64, f64) {
        let hi = self.upper();
        if hi <= 0.0 {
            return (0.0, 0.0);
        }
        let mut knots = vec![0.0, hi];
        for kink in [-self.bi, self.bj] {
            if kink > 0.0 && kink < hi {
                knots.push(kink);
            }
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let mut candidates = knots.clone();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.eta > 0.0 {
                let mid = 0.5 * (a + b);
                let si = (self.bi + mid).signum();
                let sj = (self.bj - mid).signum();
                let t = ((self.gi - self.gj) - self.eps * (si - sj)) / self.eta;
                if t > a && t < b {
                    candidates.push(t);
                }
            }
        }
        let mut best = (0.0, 0.0);
        for t in candidates {
            let g = self.gain(t);
            if g > best.1 {
                best = (t, g);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> SupervisedSet {
        let xs = [0.0, 0.4, 0.9, 1.5, 2.0, 2.6, 3.1, 3.8];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let ys = xs.iter().map(|x: &f64| x.sin() + 0.1 * x).collect();
        SupervisedSet::from_rows(&rows, ys, 1).unwrap()
    }

    fn toy_params() -> SvrParams {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            kernel: Kernel::Rbf { gamma: 1.0 },
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_rbf(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        assert_eq!(kernel_rbf(&[1.0, 2.0], &[-5.0, 9.0], 0.0).unwrap(), 1.0);
        let v = kernel_rbf(&[0.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((v - 0.367879).abs() < 1e-6);
        assert!(matches!(
            kernel_rbf(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_targets_stay_in_tube() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3, (i as f64).cos()]).collect();
        let set = SupervisedSet::from_rows(&rows, vec![2.5; 10], 1).unwrap();
        let fit = fit_svr(&set, SvrParams { epsilon: 0.1, ..toy_params() }, SmoConfig::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.model.support_count(), 0);
        assert_eq!(fit.model.bias, 2.5);
        assert_eq!(fit.model.predict(&[7.0, -1.0]).unwrap(), 2.5);
    }

    #[test]
    fn constraints_and_tube_after_fit() {
        let set = toy();
        let cfg = SmoConfig {
            tol: 1e-6,
            ..SmoConfig::default()
        };
        let fit = fit_svr(&set, toy_params(), cfg).unwrap();
        let m = &fit.model;
        let beta = m.dense_beta(set.len()).unwrap();
        assert!(beta.iter().all(|b| b.abs() <= m.c));
        assert!(beta.iter().sum::<f64>().abs() < 1e-8);
        for (i, x) in set.inputs().enumerate() {
            let r = (m.predict(x).unwrap() - set.targets()[i]).abs();
            let slack = (r - m.epsilon).max(0.0);
            if beta[i].abs() < m.c {
                assert!(slack <= cfg.tol, "point {i}: residual {r}");
            }
        }
    }

    #[test]
    fn objective_is_non_decreasing() {
        let fit = fit_svr(&toy(), SvrParams { c: 0.3, ..toy_params() }, SmoConfig::default()).unwrap();
        assert_eq!(fit.objective_trace[0], 0.0);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let direct = svr_dual_objective(&fit.model, &toy()).unwrap();
        assert!((direct - fit.objective_trace.last().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn zero_model_objective_and_prediction() {
        let m = SvrModel {
            kernel: Kernel::Rbf { gamma: 1.0 },
            c: 1.0,
            epsilon: 0.1,
            bias: -0.25,
            dim: 1,
            support_inputs: vec![],
            support_indices: vec![],
            beta: vec![],
            converged: true,
        };
        assert_eq!(svr_dual_objective(&m, &toy()).unwrap(), 0.0);
        assert_eq!(m.predict(&[3.0]).unwrap(), -0.25);
        assert!(matches!(m.predict(&[3.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_input() {
        let empty = SupervisedSet::from_rows(&[], vec![], 1).unwrap();
        assert!(matches!(
            fit_svr(&empty, toy_params(), SmoConfig::default()),
            Err(Error::EmptyDataset)
        ));
        assert!(fit_svr(&toy(), SvrParams { c: 0.0, ..toy_params() }, SmoConfig::default()).is_err());
        assert!(fit_svr(&toy(), SvrParams { epsilon: -1.0, ..toy_params() }, SmoConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_returns_flagged_model() {
        let cfg = SmoConfig {
            tol: 1e-12,
            max_passes: 10,
            max_iters: 1,
        };
        let fit = fit_svr(&toy(), toy_params(), cfg).unwrap();
        assert!(!fit.converged);
        assert!(!fit.model.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn fit_is_deterministic() {
        let a = fit_svr(&toy(), toy_params(), SmoConfig::default()).unwrap();
        let b = fit_svr(&toy(), toy_params(), SmoConfig::default()).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn linear_kernel_fits_a_line() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| 0.5 * r[0] - 0.2).collect();
        let set = SupervisedSet::from_rows(&rows, ys, 1).unwrap();
        let params = SvrParams {
            c: 10.0,
            epsilon: 0.01,
            kernel: Kernel::Linear,
        };
        let cfg = SmoConfig {
            tol: 1e-8,
            ..SmoConfig::default()
        };
        let m = fit_svr(&set, params, cfg).unwrap().model;
        for (x, y) in set.inputs().zip(set.targets()) {
            assert!((m.predict(x).unwrap() - y).abs() <= 0.01 + 1e-6);
        }
    }

    proptest! {
        #[test]
        fn prediction_is_continuous(x in -1.0f64..5.0, dx in -1e-7f64..1e-7) {
            let m = fit_svr(&toy(), toy_params(), SmoConfig::default()).unwrap().model;
            let a = m.predict(&[x]).unwrap();
            let b = m.predict(&[x + dx]).unwrap();
            // |f'| ≤ Σ|β|·sqrt(2γ/e) < 8 here
            prop_assert!((a - b).abs() <= 8.0 * dx.abs() + 1e-15);
        }

        #[test]
        fn constraints_hold_on_random_problems(
            ys in prop::collection::vec(-2.0f64..2.0, 6..20),
            c in 0.05f64..5.0,
            eps in 0.0f64..0.5,
        ) {
            let rows: Vec<Vec<f64>> = (0..ys.len()).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 * 0.1]).collect();
            let set = SupervisedSet::from_rows(&rows, ys, 1).unwrap();
            let params = SvrParams { c, epsilon: eps, kernel: Kernel::Rbf { gamma: 0.5 } };
            let fit = fit_svr(&set, params, SmoConfig::default()).unwrap();
            let beta = fit.model.dense_beta(set.len()).unwrap();
            prop_assert!(beta.iter().all(|b| b.abs() <= c));
            prop_assert!(beta.iter().sum::<f64>().abs() < 1e-8);
            for w in fit.objective_trace.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }
    }
}
