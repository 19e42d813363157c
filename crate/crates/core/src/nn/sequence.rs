use super::cell::{CellState, Recurrent, StepCache};
use crate::error::{Error, Result};

/// Control input for an unrolled sequence.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    /// No control path (plain LSTM).
    None,
    /// One vector shared by every step.
    Fixed(&'a [f64]),
    /// One vector per step.
    PerStep(&'a [Vec<f64>]),
}

impl<'a> Control<'a> {
    fn at(&self, t: usize) -> &'a [f64] {
        match *self {
            Control::None => &[],
            Control::Fixed(c) => c,
            Control::PerStep(cs) => &cs[t],
        }
    }

    fn slots(&self) -> usize {
        match self {
            Control::None => 0,
            Control::Fixed(_) => 1,
            Control::PerStep(cs) => cs.len(),
        }
    }
}

/// Per-step activations of an unrolled forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    steps: Vec<StepCache>,
    init: CellState,
    control_slots: usize,
}

impl GradientTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[StepCache] {
        &self.steps
    }

    pub fn initial_state(&self) -> &CellState {
        &self.init
    }

    /// Hidden states recomputed from the cached pre-activations.
    pub fn replay(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.replay().1).collect()
    }

    pub fn final_state(&self) -> CellState {
        let last = self.steps.last().expect("tape is never empty");
        CellState {
            h: last.h.clone(),
            cell: last.cell.clone(),
        }
    }
}

/// Gradients of a sequence loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceGrads<P> {
    pub params: P,
    pub inputs: Vec<Vec<f64>>,
    /// One entry for a fixed control vector, one per step otherwise.
    pub control: Vec<Vec<f64>>,
    pub h0: Vec<f64>,
    pub cell0: Vec<f64>,
}

/// Unrolls `p` over `inputs`; returns the hidden state of every step.
pub fn sequence_forward<P: Recurrent>(
    p: &P,
    inputs: &[Vec<f64>],
    control: Control<'_>,
    init: &CellState,
) -> Result<(Vec<Vec<f64>>, GradientTape)> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("sequence has no steps".into()));
    }
    if let Control::PerStep(cs) = control {
        if cs.len() != inputs.len() {
            return Err(Error::shape(
                format!("{} control vectors", inputs.len()),
                format!("{}", cs.len()),
            ));
        }
    }
    let mut steps = Vec::with_capacity(inputs.len());
    let mut hs = Vec::with_capacity(inputs.len());
    let mut state = init.clone();
    for (t, x) in inputs.iter().enumerate() {
        let cache = p.step_cached(&state, x, control.at(t))?;
        state = CellState {
            h: cache.h.clone(),
            cell: cache.cell.clone(),
        };
        hs.push(cache.h.clone());
        steps.push(cache);
    }
    Ok((
        hs,
        GradientTape {
            steps,
            init: init.clone(),
            control_slots: control.slots(),
        },
    ))
}

/// Backpropagation through time. `dh[t]` is `dL/dh_t` from the loss.
pub fn sequence_backward<P: Recurrent>(
    p: &P,
    tape: &GradientTape,
    dh: &[Vec<f64>],
) -> Result<SequenceGrads<P>> {
    if dh.len() != tape.len() {
        return Err(Error::shape(
            format!("{} per-step loss gradients", tape.len()),
            format!("{}", dh.len()),
        ));
    }
    let hidden = p.hidden();
    if let Some(t) = dh.iter().position(|d| d.len() != hidden) {
        return Err(Error::shape(
            format!("loss gradient of length {hidden} at step {t}"),
            format!("length {}", dh[t].len()),
        ));
    }
    let mut grad = p.zeros_like();
    let mut inputs = vec![vec![0.0; p.input_dim()]; tape.len()];
    let mut control = vec![vec![0.0; p.control_dim()]; tape.control_slots];
    let mut dh_next = vec![0.0; hidden];
    let mut dcell_next = vec![0.0; hidden];
    for t in (0..tape.len()).rev() {
        let total: Vec<f64> = dh[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let dc: &mut [f64] = match tape.control_slots {
            0 => &mut [],
            1 => &mut control[0],
            _ => &mut control[t],
        };
        let (dhp, dcp) =
            p.step_backward(&tape.steps[t], &total, &dcell_next, &mut grad, &mut inputs[t], dc);
        dh_next = dhp;
        dcell_next = dcp;
    }
    Ok(SequenceGrads {
        params: grad,
        inputs,
        control,
        h0: dh_next,
        cell0: dcell_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::cell::{cglstm_step, CglstmParams, LstmParams};
    use crate::nn::params::Parameters;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(rng: &mut ChaCha8Rng, t: usize, n: usize) -> Vec<Vec<f64>> {
        (0..t)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn single_step_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CglstmParams::init(4, 3, 2, &mut rng);
        let xs = seq(&mut rng, 1, 3);
        let c = [0.3, -0.2];
        let init = CellState::zeros(4);
        let (hs, _) = sequence_forward(&p, &xs, Control::Fixed(&c), &init).unwrap();
        assert_eq!(hs[0], cglstm_step(&p, &init, &xs[0], &c).unwrap().h);
    }

    #[test]
    fn forward_is_pure_and_replayable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::init(5, 2, &mut rng);
        let xs = seq(&mut rng, 9, 2);
        let init = CellState::zeros(5);
        let (a, tape) = sequence_forward(&p, &xs, Control::None, &init).unwrap();
        let (b, _) = sequence_forward(&p, &xs, Control::None, &init).unwrap();
        assert_eq!(a, b);
        assert_eq!(tape.replay(), a);
    }

    #[test]
    fn empty_and_mismatched() {
        let p = LstmParams::zeros(2, 1);
        let init = CellState::zeros(2);
        assert!(matches!(
            sequence_forward(&p, &[], Control::None, &init),
            Err(Error::EmptyInput(_))
        ));
        let (_, tape) = sequence_forward(&p, &vec![vec![0.0]; 3], Control::None, &init).unwrap();
        assert!(sequence_backward(&p, &tape, &vec![vec![0.0; 2]; 2]).is_err());
        let cg = CglstmParams::from_lstm(p, 2);
        let cs = vec![vec![0.0; 2]; 2];
        assert!(sequence_forward(&cg, &vec![vec![0.0]; 3], Control::PerStep(&cs), &init).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = CglstmParams::init(3, 2, 2, &mut rng);
        let xs = seq(&mut rng, 4, 2);
        let (_, tape) =
            sequence_forward(&p, &xs, Control::Fixed(&[0.5, 0.5]), &CellState::zeros(3)).unwrap();
        let g = sequence_backward(&p, &tape, &vec![vec![0.0; 3]; 4]).unwrap();
        assert!(g.params.flatten().iter().all(|&v| v == 0.0));
        assert!(g.inputs.iter().flatten().all(|&v| v == 0.0));
        assert!(g.control.iter().flatten().all(|&v| v == 0.0));
    }

    /// hidden = 1, input = 1, one step from a zero state, loss L = h.
    /// With a = w_x·x + b for each content gate and z = [0, x]:
    ///   f = σ(a_f), i = σ(a_i), o = σ(a_o), g = tanh(a_g)
    ///   cell = i·g, h = o·tanh(cell)
    ///   dL/db_o = tanh(cell)·o(1-o)
    ///   dL/db_i = o(1-tanh²(cell))·g·i(1-i)
    ///   dL/db_g = o(1-tanh²(cell))·i·(1-g²)
    ///   dL/db_f = 0 (cell_prev = 0)
    /// and each dL/dw_x = x · dL/db, dL/dw_h = 0.
    #[test]
    fn hand_derived_single_unit() {
        let mut p = LstmParams::zeros(1, 1);
        // columns: [h_prev, x]
        p.forget.w.set(0, 1, 0.3);
        p.forget.b[0] = 0.1;
        p.input.w.set(0, 1, -0.4);
        p.input.b[0] = 0.2;
        p.output.w.set(0, 1, 0.5);
        p.output.b[0] = -0.3;
        p.candidate.w.set(0, 1, 0.8);
        p.candidate.b[0] = 0.05;
        let x = 0.7;
        let (_, tape) =
            sequence_forward(&p, &[vec![x]], Control::None, &CellState::zeros(1)).unwrap();
        let g = sequence_backward(&p, &tape, &[vec![1.0]]).unwrap();

        // frozen values of the closed forms above
        let db_o = 0.063_811_424_195_626_09;
        let db_i = 0.065_064_073_486_972_1;
        let db_g = 0.161_872_575_009_430_97;
        let blocks = g.params.blocks();
        let get = |name: &str| {
            blocks
                .iter()
                .find(|(b, _)| b.name == name)
                .map(|(_, d)| d.to_vec())
                .unwrap()
        };
        assert_eq!(get("b_xf"), vec![0.0]);
        assert!((get("b_xo")[0] - db_o).abs() < 1e-15);
        assert!((get("b_xi")[0] - db_i).abs() < 1e-15);
        assert!((get("b_xg")[0] - db_g).abs() < 1e-15);
        assert!((get("w_xg")[1] - x * db_g).abs() < 1e-15);
        assert_eq!(get("w_xg")[0], 0.0);
    }
}
