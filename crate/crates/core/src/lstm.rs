//! Single-layer LSTM regressor with a linear output neuron, trained by full
//! backpropagation through time and ADAGRAD.
//!
//! The lag window is fed one sample per time step into the memory cells,
//! starting from a zero state; the prediction is read from the last hidden
//! output. Gates use the logistic sigmoid, block input and cell output use
//! softsign by default (hyperbolic tangent selectable). No peepholes.
//!
//! Parameter layout, with H cells and gate order (input, forget, output,
//! block input):
//!
//! ```text
//! [ W: 4H | U: H rows × 4H (row k = weights from h_{t−1}[k]) | b: 4H | w_out: H | b_out ]
//! ```

use faer::{MatMut, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SupervisedSet;
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::nar::sigmoid;

pub const DEFAULT_CELLS: usize = 50;
const GATES: usize = 4;
const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const BLOCK: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellActivation {
    #[default]
    Softsign,
    Tanh,
}

impl CellActivation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            CellActivation::Softsign => z / (1.0 + z.abs()),
            CellActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output s.
    #[inline]
    fn slope_from_output(self, s: f64) -> f64 {
        match self {
            CellActivation::Softsign => {
                let r = 1.0 - s.abs();
                r * r
            }
            CellActivation::Tanh => 1.0 - s * s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellActivation::Softsign => "softsign",
            CellActivation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "softsign" => Some(CellActivation::Softsign),
            "tanh" => Some(CellActivation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    cells: usize,
    activation: CellActivation,
    params: Vec<f64>,
}

/// Hidden output and cell state after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(cells: usize) -> Self {
        LstmState {
            h: vec![0.0; cells],
            c: vec![0.0; cells],
        }
    }
}

/// Gate activations of one step, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub block_input: Vec<f64>,
    pub state: LstmState,
}

impl LstmModel {
    pub fn param_count_for(cells: usize) -> usize {
        GATES * cells * cells + 9 * cells + 1
    }

    pub fn zeros(cells: usize, activation: CellActivation) -> Self {
        LstmModel {
            cells,
            activation,
            params: vec![0.0; Self::param_count_for(cells)],
        }
    }

    /// Uniform ±0.08 input, recurrent and output weights; zero biases except
    /// the forget gate, which starts at 1.
    pub fn init(cells: usize, activation: CellActivation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(cells, activation);
        for w in m.w_mut() {
            *w = rng.random_range(-0.08..0.08);
        }
        for u in m.u_mut() {
            *u = rng.random_range(-0.08..0.08);
        }
        m.b_mut()[FORGET * cells..(FORGET + 1) * cells].fill(1.0);
        for v in m.w_out_mut() {
            *v = rng.random_range(-0.08..0.08);
        }
        m
    }

    pub fn from_params(cells: usize, activation: CellActivation, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count_for(cells);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("LSTM parameters must be finite".into()));
        }
        Ok(LstmModel {
            cells,
            activation,
            params,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn activation(&self) -> CellActivation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let h = self.cells;
        let u = GATES * h;
        let b = u + GATES * h * h;
        let v = b + GATES * h;
        (u, b, v, v + h)
    }

    pub fn w(&self) -> &[f64] {
        &self.params[..GATES * self.cells]
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        let end = GATES * self.cells;
        &mut self.params[..end]
    }

    pub fn u(&self) -> &[f64] {
        let (u, b, _, _) = self.offsets();
        &self.params[u..b]
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        let (u, b, _, _) = self.offsets();
        &mut self.params[u..b]
    }

    pub fn b(&self) -> &[f64] {
        let (_, b, v, _) = self.offsets();
        &self.params[b..v]
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        let (_, b, v, _) = self.offsets();
        &mut self.params[b..v]
    }

    pub fn w_out(&self) -> &[f64] {
        let (_, _, v, o) = self.offsets();
        &self.params[v..o]
    }

    pub fn w_out_mut(&mut self) -> &mut [f64] {
        let (_, _, v, o) = self.offsets();
        &mut self.params[v..o]
    }

    pub fn b_out(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub fn set_b_out(&mut self, b: f64) {
        let last = self.params.len() - 1;
        self.params[last] = b;
    }

    /// One time step: gates i, f, o = σ(W x + U h + b), block input
    /// g = s(W x + U h + b), c = f∘c_prev + i∘g, h = o∘s(c).
    pub fn step_traced(&self, x: f64, prev: &LstmState) -> Result<StepTrace> {
        let hn = self.cells;
        for len in [prev.h.len(), prev.c.len()] {
            if len != hn {
                return Err(Error::DimensionMismatch {
                    expected: hn,
                    got: len,
                });
            }
        }
        let mut z: Vec<f64> = self.b().iter().zip(self.w()).map(|(b, w)| b + w * x).collect();
        let u = self.u();
        for (k, hk) in prev.h.iter().enumerate() {
            let row = &u[k * GATES * hn..(k + 1) * GATES * hn];
            for (zj, uj) in z.iter_mut().zip(row) {
                *zj += hk * uj;
            }
        }
        let block = |g: usize| &z[g * hn..(g + 1) * hn];
        let input_gate: Vec<f64> = block(INPUT).iter().map(|&v| sigmoid(v)).collect();
        let forget_gate: Vec<f64> = block(FORGET).iter().map(|&v| sigmoid(v)).collect();
        let output_gate: Vec<f64> = block(OUTPUT).iter().map(|&v| sigmoid(v)).collect();
        let block_input: Vec<f64> = block(BLOCK).iter().map(|&v| self.activation.apply(v)).collect();
        let c: Vec<f64> = (0..hn)
            .map(|j| forget_gate[j] * prev.c[j] + input_gate[j] * block_input[j])
            .collect();
        let h: Vec<f64> = (0..hn)
            .map(|j| output_gate[j] * self.activation.apply(c[j]))
            .collect();
        Ok(StepTrace {
            input_gate,
            forget_gate,
            output_gate,
            block_input,
            state: LstmState { h, c },
        })
    }

    pub fn step(&self, x: f64, prev: &LstmState) -> Result<LstmState> {
        Ok(self.step_traced(x, prev)?.state)
    }

    /// Runs the window from a zero state and applies the output layer.
    pub fn forward(&self, window: &[f64]) -> Result<f64> {
        if window.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        let mut state = LstmState::zeros(self.cells);
        for &x in window {
            state = self.step(x, &state)?;
        }
        Ok(self.readout(&state.h))
    }

    fn readout(&self, h: &[f64]) -> f64 {
        self.b_out() + self.w_out().iter().zip(h).map(|(w, h)| w * h).sum::<f64>()
    }

    /// Predictions for every row of `data`, evaluated as one batch.
    pub fn predict_set(&self, data: &SupervisedSet) -> Vec<f64> {
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len());
        for chunk in idx.chunks(256) {
            let pass = BatchPass::run(self, data, chunk);
            out.extend(pass.predictions);
        }
        out
    }
}

/// Forward activations of a batch, kept for the backward pass. Buffers are
/// column-major with one column per unit and one row per batch sample.
struct BatchPass {
    batch: usize,
    /// Per step: B × 4H post-activation gates (i | f | o | g).
    gates: Vec<Vec<f64>>,
    /// Per step: B × H cell state, s(c) and hidden output.
    cell: Vec<Vec<f64>>,
    cell_out: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    /// B × n inputs.
    inputs: Vec<f64>,
    predictions: Vec<f64>,
}

impl BatchPass {
    fn run(model: &LstmModel, data: &SupervisedSet, rows: &[usize]) -> BatchPass {
        let hn = model.cells;
        let bsz = rows.len();
        let steps = data.window();
        let act = model.activation;
        let mut inputs = vec![0.0; bsz * steps];
        for (b, &r) in rows.iter().enumerate() {
            for (t, &x) in data.input(r).iter().enumerate() {
                inputs[t * bsz + b] = x;
            }
        }
        let u = MatRef::from_row_major_slice(model.u(), hn, GATES * hn);
        let (w, bias) = (model.w(), model.b());

        let mut gates = Vec::with_capacity(steps);
        let mut cell: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut cell_out = Vec::with_capacity(steps);
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let zero_state = vec![0.0; bsz * hn];
        for t in 0..steps {
            let mut z = vec![0.0; bsz * GATES * hn];
            if t > 0 {
                let h_prev = MatRef::from_column_major_slice(&hidden[t - 1], bsz, hn);
                let zm = MatMut::from_column_major_slice_mut(&mut z, bsz, GATES * hn);
                gemm(zm, false, h_prev, u);
            }
            let xt = &inputs[t * bsz..(t + 1) * bsz];
            for (col, zc) in z.chunks_exact_mut(bsz).enumerate() {
                let (bc, wc) = (bias[col], w[col]);
                if col / hn == BLOCK {
                    for (zv, x) in zc.iter_mut().zip(xt) {
                        *zv = act.apply(*zv + bc + wc * x);
                    }
                } else {
                    for (zv, x) in zc.iter_mut().zip(xt) {
                        *zv = sigmoid(*zv + bc + wc * x);
                    }
                }
            }
            let c_prev = if t > 0 { &cell[t - 1] } else { &zero_state };
            let mut c = vec![0.0; bsz * hn];
            let mut sc = vec![0.0; bsz * hn];
            let mut h = vec![0.0; bsz * hn];
            for j in 0..hn {
                let col = |g: usize| &z[(g * hn + j) * bsz..(g * hn + j + 1) * bsz];
                let (ig, fg, og, blk) = (col(INPUT), col(FORGET), col(OUTPUT), col(BLOCK));
                let span = j * bsz..(j + 1) * bsz;
                let cp = &c_prev[span.clone()];
                let cj = &mut c[span.clone()];
                let scj = &mut sc[span.clone()];
                let hj = &mut h[span];
                for b in 0..bsz {
                    let cv = fg[b] * cp[b] + ig[b] * blk[b];
                    let s = act.apply(cv);
                    cj[b] = cv;
                    scj[b] = s;
                    hj[b] = og[b] * s;
                }
            }
            gates.push(z);
            cell.push(c);
            cell_out.push(sc);
            hidden.push(h);
        }
        let last = &hidden[steps - 1];
        let mut predictions = vec![model.b_out(); bsz];
        for (j, &wj) in model.w_out().iter().enumerate() {
            for (p, hv) in predictions.iter_mut().zip(&last[j * bsz..(j + 1) * bsz]) {
                *p += wj * hv;
            }
        }
        BatchPass {
            batch: bsz,
            gates,
            cell,
            cell_out,
            hidden,
            inputs,
            predictions,
        }
    }
}

/// Loss and gradient of ½·mean((prediction − target)²).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Exact gradient over `data` by backpropagation through all time steps.
pub fn lstm_bptt(model: &LstmModel, data: &SupervisedSet) -> Result<Gradient> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(bptt_rows(model, data, &rows))
}

pub(crate) fn bptt_rows(model: &LstmModel, data: &SupervisedSet, rows: &[usize]) -> Gradient {
    let hn = model.cells;
    let steps = data.window();
    let act = model.activation;
    let pass = BatchPass::run(model, data, rows);
    let bsz = pass.batch;

    let mut grad = vec![0.0; model.params.len()];
    let (u_at, b_at, v_at, out_at) = model.offsets();

    let mut loss = 0.0;
    let dp: Vec<f64> = rows
        .iter()
        .zip(&pass.predictions)
        .map(|(&r, &p)| {
            let err = p - data.targets()[r];
            loss += 0.5 * err * err;
            err / bsz as f64
        })
        .collect();
    loss /= bsz as f64;

    let last = &pass.hidden[steps - 1];
    for j in 0..hn {
        grad[v_at + j] = dp.iter().zip(&last[j * bsz..(j + 1) * bsz]).map(|(d, h)| d * h).sum();
    }
    grad[out_at] = dp.iter().sum();

    let mut dh = vec![0.0; bsz * hn];
    for (j, &wj) in model.w_out().iter().enumerate() {
        for (d, p) in dh[j * bsz..(j + 1) * bsz].iter_mut().zip(&dp) {
            *d = p * wj;
        }
    }
    let mut dc = vec![0.0; bsz * hn];
    let mut dz = vec![0.0; bsz * GATES * hn];
    let zero_state = vec![0.0; bsz * hn];
    let u = MatRef::from_row_major_slice(model.u(), hn, GATES * hn);

    for t in (0..steps).rev() {
        let g = &pass.gates[t];
        let sc = &pass.cell_out[t];
        let c_prev = if t > 0 { &pass.cell[t - 1] } else { &zero_state };
        for j in 0..hn {
            let span = |g: usize| (g * hn + j) * bsz..(g * hn + j + 1) * bsz;
            let (ig, fg, og, blk) = (&g[span(INPUT)], &g[span(FORGET)], &g[span(OUTPUT)], &g[span(BLOCK)]);
            let cell_span = j * bsz..(j + 1) * bsz;
            let (cp, s, dhj) = (&c_prev[cell_span.clone()], &sc[cell_span.clone()], &dh[cell_span.clone()]);
            let dcj = &mut dc[cell_span];
            for b in 0..bsz {
                let dcv = dcj[b] + dhj[b] * og[b] * act.slope_from_output(s[b]);
                dz[(INPUT * hn + j) * bsz + b] = dcv * blk[b] * ig[b] * (1.0 - ig[b]);
                dz[(FORGET * hn + j) * bsz + b] = dcv * cp[b] * fg[b] * (1.0 - fg[b]);
                dz[(OUTPUT * hn + j) * bsz + b] = dhj[b] * s[b] * og[b] * (1.0 - og[b]);
                dz[(BLOCK * hn + j) * bsz + b] = dcv * ig[b] * act.slope_from_output(blk[b]);
                dcj[b] = dcv * fg[b];
            }
        }
        let xt = &pass.inputs[t * bsz..(t + 1) * bsz];
        for (col, dzc) in dz.chunks_exact(bsz).enumerate() {
            let mut gw = 0.0;
            let mut gb = 0.0;
            for (d, x) in dzc.iter().zip(xt) {
                gw += d * x;
                gb += d;
            }
            grad[col] += gw;
            grad[b_at + col] += gb;
        }
        if t > 0 {
            let h_prev = MatRef::from_column_major_slice(&pass.hidden[t - 1], bsz, hn);
            let dzm = MatRef::from_column_major_slice(&dz, bsz, GATES * hn);
            let gu = MatMut::from_column_major_slice_mut(&mut grad[u_at..b_at], GATES * hn, hn).transpose_mut();
            gemm(gu, true, h_prev.transpose(), dzm);
            let dhm = MatMut::from_column_major_slice_mut(&mut dh, bsz, hn);
            gemm(dhm, false, dzm, u.transpose());
        }
    }
    Gradient { loss, grad }
}

/// Per-parameter adaptive learning rates from accumulated squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    pub accumulators: Vec<f64>,
    pub eta: f64,
    pub eps: f64,
}

impl AdagradState {
    pub fn new(len: usize, eta: f64, eps: f64) -> Self {
        AdagradState {
            accumulators: vec![0.0; len],
            eta,
            eps,
        }
    }

    /// G ← G + g²; w ← w − η g / (√G + ε).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.accumulators.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters, {} gradients, {} accumulators",
                params.len(),
                grads.len(),
                self.accumulators.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        for ((w, &g), acc) in params.iter_mut().zip(grads).zip(self.accumulators.iter_mut()) {
            *acc += g * g;
            if g != 0.0 {
                *w -= self.eta * g / (acc.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub eps: f64,
    pub seed: u64,
    /// Rescale each batch gradient to at most this L2 norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        LstmTrainConfig {
            epochs: 30,
            batch_size: 32,
            eta: 0.01,
            eps: 1e-8,
            seed: 0,
            max_grad_norm: None,
        }
    }
}

impl LstmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.eta > 0.0) || !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(
                "LSTM training needs batch ≥ 1, eta > 0, eps > 0".into(),
            ));
        }
        if matches!(self.max_grad_norm, Some(m) if !(m > 0.0)) {
            return Err(Error::InvalidParameter("max gradient norm must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LstmFit {
    pub model: LstmModel,
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Mini-batch ADAGRAD over shuffled epochs; returns the parameters at the end
/// of the epoch with the lowest mean loss.
pub fn train_lstm(init: &LstmModel, data: &SupervisedSet, cfg: &LstmTrainConfig) -> Result<LstmFit> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = init.clone();
    let mut opt = AdagradState::new(model.params.len(), cfg.eta, cfg.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = bptt_rows(&model, data, batch);
            if !g.loss.is_finite() {
                epoch_losses.push(f64::NAN);
                return Err(Error::NonFiniteObjective {
                    iterations: epoch,
                    trace: epoch_losses,
                });
            }
            total += g.loss * batch.len() as f64;
            if let Some(limit) = cfg.max_grad_norm {
                let norm = g.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > limit {
                    let scale = limit / norm;
                    g.grad.iter_mut().for_each(|v| *v *= scale);
                }
            }
            opt.step(&mut model.params, &g.grad).map_err(|_| Error::NonFiniteObjective {
                iterations: epoch,
                trace: epoch_losses.clone(),
            })?;
        }
        let mean = total / data.len() as f64;
        epoch_losses.push(mean);
        if best.as_ref().is_none_or(|(_, l, _)| mean < *l) {
            best = Some((epoch, mean, model.params.clone()));
        }
    }

    let best_epoch = best.as_ref().map(|(e, _, _)| *e);
    if let Some((_, _, params)) = best {
        model.params = params;
    }
    Ok(LstmFit {
        model,
        epoch_losses,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(cells: usize, seed: u64, scale: f64) -> LstmModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..LstmModel::param_count_for(cells))
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        LstmModel::from_params(cells, CellActivation::Softsign, params).unwrap()
    }

    fn random_set(window: usize, len: usize, seed: u64) -> SupervisedSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..window).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let ys = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        SupervisedSet::from_rows(&rows, ys, 1).unwrap()
    }

    #[test]
    fn zero_model_step() {
        let m = LstmModel::zeros(3, CellActivation::Softsign);
        let tr = m.step_traced(0.7, &LstmState::zeros(3)).unwrap();
        assert!(tr.input_gate.iter().all(|&v| v == 0.5));
        assert!(tr.forget_gate.iter().all(|&v| v == 0.5));
        assert!(tr.output_gate.iter().all(|&v| v == 0.5));
        assert!(tr.block_input.iter().all(|&v| v == 0.0));
        assert!(tr.state.c.iter().all(|&v| v == 0.0));
        assert!(tr.state.h.iter().all(|&v| v == 0.0));
        assert!(matches!(
            m.step(0.0, &LstmState::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn saturated_gates_hold_memory() {
        let mut m = random_model(4, 2, 0.5);
        let hn = 4;
        m.b_mut()[FORGET * hn..(FORGET + 1) * hn].fill(30.0);
        m.b_mut()[INPUT * hn..(INPUT + 1) * hn].fill(-30.0);
        let prev = LstmState {
            h: vec![0.1, -0.2, 0.3, 0.0],
            c: vec![0.9, -1.3, 0.2, 2.0],
        };
        let next = m.step(0.5, &prev).unwrap();
        for (a, b) in next.c.iter().zip(&prev.c) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn step_matches_scalar_arithmetic() {
        let m = random_model(3, 5, 0.8);
        let prev = LstmState {
            h: vec![0.2, -0.4, 0.1],
            c: vec![0.5, 0.3, -0.7],
        };
        let x = 0.9;
        let tr = m.step_traced(x, &prev).unwrap();
        let hn = 3;
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let ss = |z: f64| z / (1.0 + z.abs());
        for j in 0..hn {
            let pre = |g: usize| {
                let col = g * hn + j;
                let mut z = m.b()[col] + m.w()[col] * x;
                for k in 0..hn {
                    z += m.u()[k * GATES * hn + col] * prev.h[k];
                }
                z
            };
            let (i, f, o, g) = (s(pre(0)), s(pre(1)), s(pre(2)), ss(pre(3)));
            let c = f * prev.c[j] + i * g;
            let h = o * ss(c);
            assert!((tr.input_gate[j] - i).abs() < 1e-12);
            assert!((tr.forget_gate[j] - f).abs() < 1e-12);
            assert!((tr.output_gate[j] - o).abs() < 1e-12);
            assert!((tr.block_input[j] - g).abs() < 1e-12);
            assert!((tr.state.c[j] - c).abs() < 1e-12);
            assert!((tr.state.h[j] - h).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_recursion_and_bounds_hold() {
        let m = random_model(6, 7, 2.0);
        let mut state = LstmState::zeros(6);
        for t in 0..40 {
            let x = (t as f64 * 0.7).sin() * 3.0;
            let tr = m.step_traced(x, &state).unwrap();
            for j in 0..6 {
                let expect = tr.forget_gate[j] * state.c[j] + tr.input_gate[j] * tr.block_input[j];
                assert_eq!(tr.state.c[j], expect);
                for g in [tr.input_gate[j], tr.forget_gate[j], tr.output_gate[j]] {
                    assert!(g > 0.0 && g < 1.0);
                }
                assert!(tr.state.h[j].abs() < 1.0);
                assert!(tr.block_input[j].abs() < 1.0);
            }
            state = tr.state;
        }
    }

    #[test]
    fn forward_definitions() {
        let mut m = LstmModel::zeros(5, CellActivation::Softsign);
        m.set_b_out(-1.25);
        assert_eq!(m.forward(&[0.3, 0.1, -2.0]).unwrap(), -1.25);

        let m = random_model(4, 11, 0.6);
        let one = m.forward(&[0.4]).unwrap();
        let st = m.step(0.4, &LstmState::zeros(4)).unwrap();
        let manual = m.b_out() + m.w_out().iter().zip(&st.h).map(|(a, b)| a * b).sum::<f64>();
        assert_eq!(one, manual);

        let window = [0.3, -1.0, 0.8, 1.7, -0.2];
        let mut rev = window;
        rev.reverse();
        assert_ne!(m.forward(&window).unwrap(), m.forward(&rev).unwrap());
    }

    #[test]
    fn batch_pass_matches_single_forward() {
        let m = random_model(4, 13, 0.7);
        let set = random_set(6, 9, 14);
        let preds = m.predict_set(&set);
        for (i, x) in set.inputs().enumerate() {
            assert!((preds[i] - m.forward(x).unwrap()).abs() < 1e-12);
        }
    }

    fn loss(m: &LstmModel, set: &SupervisedSet) -> f64 {
        let mut total = 0.0;
        for (x, y) in set.inputs().zip(set.targets()) {
            let e = m.forward(x).unwrap() - y;
            total += 0.5 * e * e;
        }
        total / set.len() as f64
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let m = random_model(3, 21, 0.9);
        let set = random_set(5, 4, 22);
        let g = lstm_bptt(&m, &set).unwrap();
        assert!((g.loss - loss(&m, &set)).abs() < 1e-14);
        let h = 1e-6;
        for k in 0..m.params.len() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            plus.params[k] += h;
            minus.params[k] -= h;
            let fd = (loss(&plus, &set) - loss(&minus, &set)) / (2.0 * h);
            let denom = g.grad[k].abs().max(fd.abs()).max(1e-7);
            assert!((g.grad[k] - fd).abs() / denom < 1e-5, "param {k}: {} vs {fd}", g.grad[k]);
        }
    }

    #[test]
    fn bptt_linearity_and_zero_error() {
        let m = random_model(3, 31, 0.5);
        let set = random_set(4, 2, 32);
        let both = lstm_bptt(&m, &set).unwrap();
        let a = lstm_bptt(&m, &set.select(&[0])).unwrap();
        let b = lstm_bptt(&m, &set.select(&[1])).unwrap();
        for k in 0..both.grad.len() {
            assert!((both.grad[k] - 0.5 * (a.grad[k] + b.grad[k])).abs() < 1e-12);
        }

        let rows: Vec<Vec<f64>> = set.inputs().map(<[f64]>::to_vec).collect();
        let exact = SupervisedSet::from_rows(&rows, m.predict_set(&set), 1).unwrap();
        let g = lstm_bptt(&m, &exact).unwrap();
        assert!(g.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adagrad_closed_form() {
        let mut opt = AdagradState::new(1, 0.1, 0.0);
        let mut w = [0.0];
        for k in 1..=100 {
            let before = w[0];
            opt.step(&mut w, &[1.0]).unwrap();
            let moved = before - w[0];
            assert!((moved - 0.1 / (k as f64).sqrt()).abs() < 1e-15);
            assert_eq!(opt.accumulators[0], k as f64);
        }
    }

    #[test]
    fn adagrad_edge_cases() {
        let mut opt = AdagradState::new(3, 0.1, 1e-8);
        let mut w = [1.0, 2.0, 3.0];
        opt.step(&mut w, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w, [1.0, 2.0, 3.0]);
        assert_eq!(opt.accumulators, vec![0.0; 3]);
        assert!(matches!(opt.step(&mut w, &[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            opt.step(&mut w, &[1.0, f64::NAN, 0.0]),
            Err(Error::NonFiniteGradient(1))
        ));
        assert_eq!(w, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn adagrad_descends_quadratic() {
        let mut opt = AdagradState::new(1, 0.5, 1e-8);
        let mut w = [1.0f64];
        let mut prev_acc = 0.0;
        for _ in 0..500 {
            let before = w[0].abs();
            let g = [w[0]];
            opt.step(&mut w, &g).unwrap();
            assert!(w[0].abs() < before);
            assert!(opt.accumulators[0] >= prev_acc);
            prev_acc = opt.accumulators[0];
        }
        assert!(w[0].abs() < 1e-3);
    }

    fn lag_one_set(len: usize, seed: u64) -> SupervisedSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0f64];
        for _ in 0..len + 10 {
            let last = *x.last().unwrap();
            x.push(0.9 * last + 0.4 * rng.random_range(-1.0..1.0));
        }
        // target equals the last window element
        let rows: Vec<Vec<f64>> = (0..len).map(|i| x[i..i + 8].to_vec()).collect();
        let ys = rows.iter().map(|r| r[7]).collect();
        SupervisedSet::from_rows(&rows, ys, 1).unwrap()
    }

    #[test]
    fn learns_lag_one_identity() {
        let train = lag_one_set(500, 1);
        let test = lag_one_set(200, 2);
        let init = LstmModel::init(10, CellActivation::Softsign, 3);
        let cfg = LstmTrainConfig {
            epochs: 50,
            eta: 0.05,
            seed: 4,
            ..LstmTrainConfig::default()
        };
        let fit = train_lstm(&init, &train, &cfg).unwrap();
        let preds = fit.model.predict_set(&test);
        let mse = preds
            .iter()
            .zip(test.targets())
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / test.len() as f64;
        assert!(mse < 0.01, "test mse = {mse}");
    }

    #[test]
    fn training_edge_cases() {
        let set = random_set(4, 20, 40);
        let init = LstmModel::init(3, CellActivation::Softsign, 41);
        let cfg = LstmTrainConfig {
            epochs: 0,
            ..LstmTrainConfig::default()
        };
        let fit = train_lstm(&init, &set, &cfg).unwrap();
        assert_eq!(fit.model, init);
        assert!(fit.epoch_losses.is_empty());

        let cfg = LstmTrainConfig {
            epochs: 4,
            batch_size: 6,
            seed: 9,
            ..LstmTrainConfig::default()
        };
        let a = train_lstm(&init, &set, &cfg).unwrap();
        let b = train_lstm(&init, &set, &cfg).unwrap();
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn tanh_variant_gradients() {
        let mut m = random_model(2, 51, 0.7);
        m.activation = CellActivation::Tanh;
        let set = random_set(3, 3, 52);
        let g = lstm_bptt(&m, &set).unwrap();
        let h = 1e-6;
        for k in 0..m.params.len() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            plus.params[k] += h;
            minus.params[k] -= h;
            let fd = (loss(&plus, &set) - loss(&minus, &set)) / (2.0 * h);
            let denom = g.grad[k].abs().max(fd.abs()).max(1e-7);
            assert!((g.grad[k] - fd).abs() / denom < 1e-5);
        }
    }
}
