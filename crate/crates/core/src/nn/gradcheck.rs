//! Central finite-difference verification of analytic gradients.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::affine::{affine_condition, AffineParams};
use super::cell::{CellState, CglstmParams, GateComposition, LstmParams, Recurrent};
use super::params::{Dense, Parameters};
use super::sequence::{sequence_backward, sequence_forward, Control};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_err < self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    /// Fixed-format table: block, #params, max relative error, pass/fail.
    pub fn table(&self) -> String {
        let mut out = format!("{:<14} {:>8} {:>12}  {}\n", "block", "params", "max_rel_err", "status");
        for b in &self.blocks {
            let status = if b.max_rel_err < self.tolerance { "pass" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>12.3e}  {}",
                b.name, b.count, b.max_rel_err, status
            );
        }
        out
    }
}

/// `|a − fd| / max(|a|, |fd|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn central_difference(
    name: &str,
    index: usize,
    eps: f64,
    mut eval: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let plus = eval(eps)?;
    let minus = eval(-eps)?;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss perturbing {name}[{index}]: L+ = {plus}, L- = {minus}"
        )));
    }
    Ok((plus - minus) / (2.0 * eps))
}

/// Compares `analytic` against central differences of `loss` for every
/// scalar in every block of `params`.
pub fn check_parameters<P: Parameters>(
    params: &P,
    analytic: &P,
    eps: f64,
    loss: impl Fn(&P) -> Result<f64>,
) -> Result<Vec<BlockReport>> {
    super::params::check_same_layout(params, analytic)?;
    let infos: Vec<_> = params
        .blocks()
        .into_iter()
        .map(|(info, d)| (info, d.len()))
        .collect();
    let grads: Vec<Vec<f64>> = analytic.blocks().into_iter().map(|(_, d)| d.to_vec()).collect();
    let mut work = params.clone();
    let mut reports = Vec::with_capacity(infos.len());
    for (b, (info, len)) in infos.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..*len {
            let orig = work.blocks_mut()[b][k];
            let fd = central_difference(&info.name, k, eps, |delta| {
                work.blocks_mut()[b][k] = orig + delta;
                let l = loss(&work);
                work.blocks_mut()[b][k] = orig;
                l
            })?;
            worst = worst.max(relative_error(grads[b][k], fd));
        }
        reports.push(BlockReport {
            name: info.name.clone(),
            count: *len,
            max_rel_err: worst,
        });
    }
    Ok(reports)
}

/// Same as [`check_parameters`] for a plain input vector.
pub fn check_vector(
    name: &str,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    loss: impl Fn(&[f64]) -> Result<f64>,
) -> Result<BlockReport> {
    if x.len() != analytic.len() {
        return Err(Error::shape(
            format!("{} gradient entries for {name}", x.len()),
            format!("{}", analytic.len()),
        ));
    }
    let mut work = x.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let orig = work[k];
        let fd = central_difference(name, k, eps, |delta| {
            work[k] = orig + delta;
            let l = loss(&work);
            work[k] = orig;
            l
        })?;
        worst = worst.max(relative_error(analytic[k], fd));
    }
    Ok(BlockReport {
        name: name.to_string(),
        count: x.len(),
        max_rel_err: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Cglstm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub input: usize,
    pub control: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub eps: f64,
    pub tolerance: f64,
    pub composition: GateComposition,
    /// Corrupts one analytic gradient entry; used to prove the check bites.
    pub inject_fault: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            cell: CellKind::Cglstm,
            hidden: 4,
            input: 3,
            control: 2,
            seq_len: 5,
            seed: 42,
            eps: DEFAULT_EPS,
            tolerance: DEFAULT_TOLERANCE,
            composition: GateComposition::Inside,
            inject_fault: false,
        }
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Loss `½ Σ_t ‖h_t − y_t‖²` over an unrolled cell.
fn sequence_loss<P: Recurrent>(
    p: &P,
    xs: &[Vec<f64>],
    control: Control<'_>,
    init: &CellState,
    targets: &[Vec<f64>],
) -> Result<f64> {
    let (hs, _) = sequence_forward(p, xs, control, init)?;
    Ok(hs
        .iter()
        .zip(targets)
        .flat_map(|(h, y)| h.iter().zip(y).map(|(a, b)| 0.5 * (a - b) * (a - b)))
        .sum())
}

fn check_cell<P: Recurrent>(
    p: &P,
    xs: &[Vec<f64>],
    control: &[f64],
    init: &CellState,
    targets: &[Vec<f64>],
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport> {
    fn ctl(dim: usize, c: &[f64]) -> Control<'_> {
        if dim == 0 {
            Control::None
        } else {
            Control::Fixed(c)
        }
    }
    let ctl = |c| ctl(p.control_dim(), c);
    let (hs, tape) = sequence_forward(p, xs, ctl(control), init)?;
    let dh: Vec<Vec<f64>> = hs
        .iter()
        .zip(targets)
        .map(|(h, y)| h.iter().zip(y).map(|(a, b)| a - b).collect())
        .collect();
    let mut grads = sequence_backward(p, &tape, &dh)?;
    if cfg.inject_fault {
        let first = &mut grads.params.blocks_mut()[0];
        first[0] = first[0] * 1.01 + 1e-3;
    }

    let eps = cfg.eps;
    let mut blocks = check_parameters(p, &grads.params, eps, |q| {
        sequence_loss(q, xs, ctl(control), init, targets)
    })?;

    let flat_x: Vec<f64> = xs.iter().flatten().copied().collect();
    let flat_dx: Vec<f64> = grads.inputs.iter().flatten().copied().collect();
    let width = p.input_dim();
    blocks.push(check_vector("input", &flat_x, &flat_dx, eps, |v| {
        let xs: Vec<Vec<f64>> = v.chunks(width).map(|c| c.to_vec()).collect();
        sequence_loss(p, &xs, ctl(control), init, targets)
    })?);
    if p.control_dim() > 0 {
        blocks.push(check_vector("control", control, &grads.control[0], eps, |c| {
            sequence_loss(p, xs, Control::Fixed(c), init, targets)
        })?);
    }
    blocks.push(check_vector("h0", &init.h, &grads.h0, eps, |h| {
        let s = CellState {
            h: h.to_vec(),
            cell: init.cell.clone(),
        };
        sequence_loss(p, xs, ctl(control), &s, targets)
    })?);
    blocks.push(check_vector("cell0", &init.cell, &grads.cell0, eps, |c| {
        let s = CellState {
            h: init.h.clone(),
            cell: c.to_vec(),
        };
        sequence_loss(p, xs, ctl(control), &s, targets)
    })?);
    Ok(GradcheckReport {
        blocks,
        tolerance: cfg.tolerance,
    })
}

/// Builds a random cell, sequence and target from `cfg.seed` and checks
/// every parameter and input gradient of the sequence loss.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.hidden == 0 || cfg.input == 0 || cfg.seq_len == 0 {
        return Err(Error::Config("gradcheck needs hidden, input and seq_len > 0".into()));
    }
    if !(cfg.eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {}", cfg.eps)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lstm = LstmParams::init(cfg.hidden, cfg.input, &mut rng);
    let xs: Vec<Vec<f64>> = (0..cfg.seq_len)
        .map(|_| rand_vec(&mut rng, cfg.input, 1.0))
        .collect();
    let targets: Vec<Vec<f64>> = (0..cfg.seq_len)
        .map(|_| rand_vec(&mut rng, cfg.hidden, 0.8))
        .collect();
    let init = CellState {
        h: rand_vec(&mut rng, cfg.hidden, 0.5),
        cell: rand_vec(&mut rng, cfg.hidden, 0.5),
    };
    match cfg.cell {
        CellKind::Lstm => check_cell(&lstm, &xs, &[], &init, &targets, cfg),
        CellKind::Cglstm => {
            if cfg.control == 0 {
                return Err(Error::Config("CGLSTM gradcheck needs control > 0".into()));
            }
            let mut p = CglstmParams::from_lstm(lstm, cfg.control).with_composition(cfg.composition);
            // away from the reduction point so control gradients are exercised
            for d in [&mut p.control_forget, &mut p.control_input, &mut p.control_output] {
                *d = Dense::uniform(cfg.hidden, cfg.control, 1.0, &mut rng);
                for b in d.b.iter_mut() {
                    *b += rng.random_range(-0.5..=0.5);
                }
            }
            let control = rand_vec(&mut rng, cfg.control, 1.0);
            check_cell(&p, &xs, &control, &init, &targets, cfg)
        }
    }
}

/// Gradient check of `½‖affine(x, c) − y‖²` with respect to the affine
/// parameters, the feature input, and the control input.
pub fn gradcheck_affine(
    feature_dim: usize,
    control_dim: usize,
    seed: u64,
    eps: f64,
    tolerance: f64,
) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = AffineParams::init(feature_dim, control_dim, &mut rng);
    p.scale.w = Dense::uniform(feature_dim, control_dim, 0.0, &mut rng).w;
    p.shift.w = Dense::uniform(feature_dim, control_dim, 0.0, &mut rng).w;
    let x = rand_vec(&mut rng, feature_dim, 1.0);
    let c = rand_vec(&mut rng, control_dim, 1.0);
    let y = rand_vec(&mut rng, feature_dim, 1.0);
    let loss = |p: &AffineParams, x: &[f64], c: &[f64]| -> Result<f64> {
        let out = affine_condition(p, x, c)?;
        Ok(out.iter().zip(&y).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum())
    };
    let out = affine_condition(&p, &x, &c)?;
    let dy: Vec<f64> = out.iter().zip(&y).map(|(a, b)| a - b).collect();
    let mut grad = p.zeros_like();
    let mut dx = vec![0.0; feature_dim];
    let mut dc = vec![0.0; control_dim];
    p.backward(&x, &c, &dy, &mut grad, &mut dx, &mut dc);

    let mut blocks = check_parameters(&p, &grad, eps, |q| loss(q, &x, &c))?;
    blocks.push(check_vector("feature", &x, &dx, eps, |v| loss(&p, v, &c))?);
    blocks.push(check_vector("control", &c, &dc, eps, |v| loss(&p, &x, v))?);
    Ok(GradcheckReport { blocks, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstm_passes() {
        let cfg = GradcheckConfig {
            cell: CellKind::Lstm,
            ..GradcheckConfig::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert!(r.passed(), "{}", r.table());
        assert_eq!(r.blocks.len(), 8 + 3);
    }

    #[test]
    fn cglstm_passes_including_control_blocks() {
        let r = gradcheck(&GradcheckConfig::default()).unwrap();
        assert!(r.passed(), "{}", r.table());
        for name in ["w_cf", "b_cf", "w_ci", "b_ci", "w_co", "b_co", "control"] {
            assert!(r.blocks.iter().any(|b| b.name == name), "{name} missing");
        }
    }

    #[test]
    fn product_composition_passes() {
        let cfg = GradcheckConfig {
            composition: GateComposition::Product,
            ..GradcheckConfig::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert!(r.passed(), "{}", r.table());
    }

    #[test]
    fn affine_passes() {
        let r = gradcheck_affine(5, 3, 42, DEFAULT_EPS, DEFAULT_TOLERANCE).unwrap();
        assert!(r.passed(), "{}", r.table());
    }

    #[test]
    fn injected_fault_is_caught() {
        let cfg = GradcheckConfig {
            inject_fault: true,
            ..GradcheckConfig::default()
        };
        let r = gradcheck(&cfg).unwrap();
        assert!(!r.passed());
        assert!(r.table().contains("FAIL"));
    }

    #[test]
    fn looser_step_still_passes() {
        let cfg = GradcheckConfig {
            eps: 1e-3,
            ..GradcheckConfig::default()
        };
        assert!(gradcheck(&cfg).unwrap().passed());
    }

    #[test]
    fn non_finite_loss_names_coordinates() {
        let p = Dense::zeros(1, 1);
        let err = check_parameters(&p, &p, 1e-5, |q| {
            Ok(if q.w.get(0, 0) > 0.0 { f64::NAN } else { 0.0 })
        })
        .unwrap_err()
        .to_string();
        assert!(err.contains("w[0]"), "{err}");
    }
}
