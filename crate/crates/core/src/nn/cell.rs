//! LSTM and conditional gated LSTM cells.
//!
//! Both cells share the content path: with `z = [h_{t-1}, x_t]`,
//! content pre-activations `a_g = W_xg · z + b_xg` for the forget, input and
//! output gates and for the candidate. The LSTM gates are `σ(a_g)`. The
//! conditional cell re-weights each gate pre-activation by a projection of
//! the control vector, `σ(a_g ⊙ (W_cg · c + b_cg))`, and leaves the candidate
//! `tanh(a_cand)` and the cell/hidden update untouched:
//!
//! ```text
//! cell_t = f ⊙ cell_{t-1} + i ⊙ tanh(a_cand)
//! h_t    = o ⊙ tanh(cell_t)
//! ```

use rand::Rng;

use super::params::{BlockInfo, Dense, Parameters, Role};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

/// How a control pre-activation combines with a content pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateComposition {
    /// `σ(a ⊙ m)`: the product sits inside the sigmoid.
    #[default]
    Inside,
    /// `σ(a) ⊙ σ(m)`: ablation variant.
    Product,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub cell: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            h: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.len()
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(&self.cell).all(|v| v.is_finite())
    }
}

/// Standard LSTM weights. Every gate maps `[h, x]` (length `hidden + input`)
/// to `hidden` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub forget: Dense,
    pub input: Dense,
    pub output: Dense,
    pub candidate: Dense,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let d = Dense::zeros(hidden, hidden + input);
        LstmParams {
            forget: d.clone(),
            input: d.clone(),
            output: d.clone(),
            candidate: d,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, forget bias `+1`, other biases 0.
    pub fn init<R: Rng + ?Sized>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let fan_in = hidden + input;
        LstmParams {
            forget: Dense::uniform(hidden, fan_in, 1.0, rng),
            input: Dense::uniform(hidden, fan_in, 0.0, rng),
            output: Dense::uniform(hidden, fan_in, 0.0, rng),
            candidate: Dense::uniform(hidden, fan_in, 0.0, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forget.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.forget.in_dim() - self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.forget.w.shape();
        for (name, d) in [
            ("input", &self.input),
            ("output", &self.output),
            ("candidate", &self.candidate),
        ] {
            if d.w.shape() != shape || d.b.len() != shape.0 {
                return Err(Error::shape(
                    format!("{name} gate {shape:?} like the forget gate"),
                    format!("{:?}", d.w.shape()),
                ));
            }
        }
        if shape.1 < shape.0 {
            return Err(Error::shape(
                format!("gate input width >= hidden ({})", shape.0),
                format!("{}", shape.1),
            ));
        }
        Ok(())
    }

    fn gates(&self) -> [&Dense; 4] {
        [&self.forget, &self.input, &self.output, &self.candidate]
    }

    fn gates_mut(&mut self) -> [&mut Dense; 4] {
        [
            &mut self.forget,
            &mut self.input,
            &mut self.output,
            &mut self.candidate,
        ]
    }

    fn push_blocks<'a>(&'a self, out: &mut Vec<(BlockInfo, &'a [f64])>) {
        for (d, g) in self.gates().into_iter().zip(["f", "i", "o", "g"]) {
            d.push_blocks(
                &format!("w_x{g}"),
                &format!("b_x{g}"),
                (Role::Weight, Role::Bias),
                out,
            );
        }
    }

    fn push_blocks_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for d in self.gates_mut() {
            d.push_blocks_mut(out);
        }
    }
}

impl Parameters for LstmParams {
    fn blocks(&self) -> Vec<(BlockInfo, &[f64])> {
        let mut out = Vec::with_capacity(8);
        self.push_blocks(&mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(8);
        self.push_blocks_mut(&mut out);
        out
    }
}

/// Conditional gated LSTM: LSTM content weights plus one control projection
/// (`hidden × control_dim`) per gate. The candidate has no control term.
#[derive(Debug, Clone, PartialEq)]
pub struct CglstmParams {
    pub content: LstmParams,
    pub control_forget: Dense,
    pub control_input: Dense,
    pub control_output: Dense,
    pub composition: GateComposition,
}

impl CglstmParams {
    /// Wraps LSTM weights with control projections at the reduction point
    /// `W_c = 0`, `b_c = 1`, where the cell computes exactly the LSTM.
    pub fn from_lstm(content: LstmParams, control_dim: usize) -> Self {
        let hidden = content.hidden();
        let neutral = Dense {
            w: Matrix::zeros(hidden, control_dim),
            b: vec![1.0; hidden],
        };
        CglstmParams {
            content,
            control_forget: neutral.clone(),
            control_input: neutral.clone(),
            control_output: neutral,
            composition: GateComposition::Inside,
        }
    }

    pub fn init<R: Rng + ?Sized>(
        hidden: usize,
        input: usize,
        control_dim: usize,
        rng: &mut R,
    ) -> Self {
        CglstmParams::from_lstm(LstmParams::init(hidden, input, rng), control_dim)
    }

    pub fn with_composition(mut self, composition: GateComposition) -> Self {
        self.composition = composition;
        self
    }

    pub fn hidden(&self) -> usize {
        self.content.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.content.input_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.control_forget.in_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.content.validate()?;
        let shape = (self.hidden(), self.control_dim());
        for (name, d) in [
            ("forget", &self.control_forget),
            ("input", &self.control_input),
            ("output", &self.control_output),
        ] {
            if d.w.shape() != shape || d.b.len() != shape.0 {
                return Err(Error::shape(
                    format!("{name} control projection {shape:?}"),
                    format!("{:?}", d.w.shape()),
                ));
            }
        }
        Ok(())
    }

    fn control_gates(&self) -> [&Dense; 3] {
        [&self.control_forget, &self.control_input, &self.control_output]
    }
}

impl Parameters for CglstmParams {
    fn blocks(&self) -> Vec<(BlockInfo, &[f64])> {
        let mut out = Vec::with_capacity(14);
        self.content.push_blocks(&mut out);
        for (d, g) in self.control_gates().into_iter().zip(["f", "i", "o"]) {
            d.push_blocks(
                &format!("w_c{g}"),
                &format!("b_c{g}"),
                (Role::ControlWeight, Role::ControlBias),
                &mut out,
            );
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(14);
        self.content.push_blocks_mut(&mut out);
        self.control_forget.push_blocks_mut(&mut out);
        self.control_input.push_blocks_mut(&mut out);
        self.control_output.push_blocks_mut(&mut out);
        out
    }
}

/// Activations of one step, enough to differentiate it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub(crate) z: Vec<f64>,
    pub(crate) control: Vec<f64>,
    /// content pre-activations: forget, input, output, candidate
    pub(crate) content_pre: [Vec<f64>; 4],
    /// control pre-activations: forget, input, output
    pub(crate) control_pre: Option<([Vec<f64>; 3], GateComposition)>,
    pub(crate) gates: [Vec<f64>; 3],
    pub(crate) candidate: Vec<f64>,
    pub(crate) cell_prev: Vec<f64>,
    pub(crate) cell: Vec<f64>,
    pub(crate) tanh_cell: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

impl StepCache {
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn cell(&self) -> &[f64] {
        &self.cell
    }

    /// Gate values `[forget, input, output]`.
    pub fn gates(&self) -> &[Vec<f64>; 3] {
        &self.gates
    }

    /// Candidate activation `tanh(a_cand)`.
    pub fn candidate(&self) -> &[f64] {
        &self.candidate
    }

    /// Recomputes `(cell, h)` from the cached pre-activations.
    pub fn replay(&self) -> (Vec<f64>, Vec<f64>) {
        let gates: Vec<Vec<f64>> = (0..3)
            .map(|g| match &self.control_pre {
                None => self.content_pre[g].iter().map(|&a| sigmoid(a)).collect(),
                Some((m, comp)) => self.content_pre[g]
                    .iter()
                    .zip(&m[g])
                    .map(|(&a, &m)| compose(a, m, *comp))
                    .collect(),
            })
            .collect();
        let hidden = self.h.len();
        let mut cell = vec![0.0; hidden];
        let mut h = vec![0.0; hidden];
        for j in 0..hidden {
            let cand = self.content_pre[3][j].tanh();
            cell[j] = gates[0][j] * self.cell_prev[j] + gates[1][j] * cand;
            h[j] = gates[2][j] * cell[j].tanh();
        }
        (cell, h)
    }
}

#[inline]
fn compose(a: f64, m: f64, comp: GateComposition) -> f64 {
    match comp {
        GateComposition::Inside => sigmoid(a * m),
        GateComposition::Product => sigmoid(a) * sigmoid(m),
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(
            format!("{what} of length {expected}"),
            format!("length {got}"),
        ));
    }
    Ok(())
}

fn step_impl(
    content: &LstmParams,
    control: Option<([&Dense; 3], GateComposition, &[f64])>,
    state: &CellState,
    x: &[f64],
) -> Result<StepCache> {
    let hidden = content.hidden();
    check_len("hidden state", hidden, state.h.len())?;
    check_len("cell state", hidden, state.cell.len())?;
    check_len("input", content.input_dim(), x.len())?;

    let mut z = Vec::with_capacity(hidden + x.len());
    z.extend_from_slice(&state.h);
    z.extend_from_slice(x);

    let mut content_pre: [Vec<f64>; 4] = Default::default();
    for (pre, d) in content_pre.iter_mut().zip(content.gates()) {
        *pre = vec![0.0; hidden];
        d.forward_into(&z, pre);
    }

    let (control_pre, control_vec) = match control {
        None => (None, Vec::new()),
        Some((dense, comp, c)) => {
            let mut m: [Vec<f64>; 3] = Default::default();
            for (mg, d) in m.iter_mut().zip(dense) {
                *mg = vec![0.0; hidden];
                d.forward_into(c, mg);
            }
            (Some((m, comp)), c.to_vec())
        }
    };

    let mut gates: [Vec<f64>; 3] = Default::default();
    for (g, gate) in gates.iter_mut().enumerate() {
        *gate = match &control_pre {
            None => content_pre[g].iter().map(|&a| sigmoid(a)).collect(),
            Some((m, comp)) => content_pre[g]
                .iter()
                .zip(&m[g])
                .map(|(&a, &m)| compose(a, m, *comp))
                .collect(),
        };
    }

    let mut candidate = vec![0.0; hidden];
    let mut cell = vec![0.0; hidden];
    let mut tanh_cell = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        candidate[j] = content_pre[3][j].tanh();
        cell[j] = gates[0][j] * state.cell[j] + gates[1][j] * candidate[j];
        tanh_cell[j] = cell[j].tanh();
        h[j] = gates[2][j] * tanh_cell[j];
    }

    Ok(StepCache {
        z,
        control: control_vec,
        content_pre,
        control_pre,
        gates,
        candidate,
        cell_prev: state.cell.clone(),
        cell,
        tanh_cell,
        h,
    })
}

/// Backward through one step. `dh` is the total gradient reaching `h_t`
/// and `dcell` the gradient reaching `cell_t` from step `t + 1`. Parameter
/// gradients accumulate into `grad_content` / `grad_control`; input
/// gradients into `dx` / `dc`. Returns `(dh_{t-1}, dcell_{t-1})`.
#[allow(clippy::too_many_arguments)]
fn step_backward_impl(
    content: &LstmParams,
    control: Option<[&Dense; 3]>,
    cache: &StepCache,
    dh: &[f64],
    dcell_next: &[f64],
    grad_content: &mut LstmParams,
    grad_control: Option<[&mut Dense; 3]>,
    dx: &mut [f64],
    dc: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let hidden = cache.h.len();
    let [f, i, o] = &cache.gates;

    let mut d_gate: [Vec<f64>; 3] = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];
    let mut d_cand_pre = vec![0.0; hidden];
    let mut dcell_prev = vec![0.0; hidden];
    for j in 0..hidden {
        let tc = cache.tanh_cell[j];
        let dcell = dcell_next[j] + dh[j] * o[j] * (1.0 - tc * tc);
        d_gate[2][j] = dh[j] * tc;
        d_gate[0][j] = dcell * cache.cell_prev[j];
        d_gate[1][j] = dcell * cache.candidate[j];
        let cand = cache.candidate[j];
        d_cand_pre[j] = dcell * i[j] * (1.0 - cand * cand);
        dcell_prev[j] = dcell * f[j];
    }

    // gate pre-activation gradients on the content side (da) and control side (dm)
    let mut da: [Vec<f64>; 3] = Default::default();
    let mut dm: [Vec<f64>; 3] = Default::default();
    for g in 0..3 {
        let gate = &cache.gates[g];
        let a = &cache.content_pre[g];
        match &cache.control_pre {
            None => {
                da[g] = (0..hidden)
                    .map(|j| d_gate[g][j] * gate[j] * (1.0 - gate[j]))
                    .collect();
            }
            Some((m, GateComposition::Inside)) => {
                let dp: Vec<f64> = (0..hidden)
                    .map(|j| d_gate[g][j] * gate[j] * (1.0 - gate[j]))
                    .collect();
                da[g] = (0..hidden).map(|j| dp[j] * m[g][j]).collect();
                dm[g] = (0..hidden).map(|j| dp[j] * a[j]).collect();
            }
            Some((m, GateComposition::Product)) => {
                let mut dag = vec![0.0; hidden];
                let mut dmg = vec![0.0; hidden];
                for j in 0..hidden {
                    let sa = sigmoid(a[j]);
                    let sm = sigmoid(m[g][j]);
                    dag[j] = d_gate[g][j] * sm * sa * (1.0 - sa);
                    dmg[j] = d_gate[g][j] * sa * sm * (1.0 - sm);
                }
                da[g] = dag;
                dm[g] = dmg;
            }
        }
    }

    let mut dz = vec![0.0; cache.z.len()];
    let pre_grads = [&da[0], &da[1], &da[2], &d_cand_pre];
    for ((d, gd), dpre) in content
        .gates()
        .into_iter()
        .zip(grad_content.gates_mut())
        .zip(pre_grads)
    {
        d.backward(&cache.z, dpre, gd, Some(&mut dz));
    }

    if let (Some(dense), Some(grads)) = (control, grad_control) {
        for ((d, gd), dmg) in dense.into_iter().zip(grads).zip(&dm) {
            d.backward(&cache.control, dmg, gd, Some(&mut *dc));
        }
    }

    let (dh_prev, dx_part) = dz.split_at(hidden);
    for (o, v) in dx.iter_mut().zip(dx_part) {
        *o += v;
    }
    (dh_prev.to_vec(), dcell_prev)
}

/// A recurrent cell that can be unrolled and differentiated.
pub trait Recurrent: Parameters {
    fn hidden(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Control vector length; 0 for cells without a control path.
    fn control_dim(&self) -> usize;

    fn step_cached(&self, state: &CellState, x: &[f64], control: &[f64]) -> Result<StepCache>;

    #[allow(clippy::too_many_arguments)]
    fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dcell: &[f64],
        grad: &mut Self,
        dx: &mut [f64],
        dc: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>);
}

impl Recurrent for LstmParams {
    fn hidden(&self) -> usize {
        LstmParams::hidden(self)
    }

    fn input_dim(&self) -> usize {
        LstmParams::input_dim(self)
    }

    fn control_dim(&self) -> usize {
        0
    }

    fn step_cached(&self, state: &CellState, x: &[f64], control: &[f64]) -> Result<StepCache> {
        check_len("control", 0, control.len())?;
        step_impl(self, None, state, x)
    }

    fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dcell: &[f64],
        grad: &mut Self,
        dx: &mut [f64],
        dc: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        step_backward_impl(self, None, cache, dh, dcell, grad, None, dx, dc)
    }
}

impl Recurrent for CglstmParams {
    fn hidden(&self) -> usize {
        CglstmParams::hidden(self)
    }

    fn input_dim(&self) -> usize {
        CglstmParams::input_dim(self)
    }

    fn control_dim(&self) -> usize {
        CglstmParams::control_dim(self)
    }

    fn step_cached(&self, state: &CellState, x: &[f64], control: &[f64]) -> Result<StepCache> {
        check_len("control", self.control_dim(), control.len())?;
        step_impl(
            &self.content,
            Some((self.control_gates(), self.composition, control)),
            state,
            x,
        )
    }

    fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dcell: &[f64],
        grad: &mut Self,
        dx: &mut [f64],
        dc: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let CglstmParams {
            content,
            control_forget,
            control_input,
            control_output,
            ..
        } = grad;
        step_backward_impl(
            &self.content,
            Some(self.control_gates()),
            cache,
            dh,
            dcell,
            content,
            Some([control_forget, control_input, control_output]),
            dx,
            dc,
        )
    }
}

pub fn lstm_step(p: &LstmParams, state: &CellState, x: &[f64]) -> Result<CellState> {
    let cache = p.step_cached(state, x, &[])?;
    Ok(CellState {
        h: cache.h,
        cell: cache.cell,
    })
}

pub fn cglstm_step(
    p: &CglstmParams,
    state: &CellState,
    x: &[f64],
    control: &[f64],
) -> Result<CellState> {
    let cache = p.step_cached(state, x, control)?;
    Ok(CellState {
        h: cache.h,
        cell: cache.cell,
    })
}
