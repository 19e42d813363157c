use rand::Rng;

use super::params::{BlockInfo, Dense, Parameters, Role};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Feature-wise scale and shift driven by a conditioning vector:
/// `affine(x, c) = x ⊙ scale(c) + shift(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub scale: Dense,
    pub shift: Dense,
}

impl AffineParams {
    pub fn new(scale: Dense, shift: Dense) -> Result<Self> {
        if scale.w.shape() != shift.w.shape() {
            return Err(Error::shape(
                format!("shift projection {:?}", scale.w.shape()),
                format!("{:?}", shift.w.shape()),
            ));
        }
        Ok(AffineParams { scale, shift })
    }

    /// The identity map: `scale ≡ 1`, `shift ≡ 0`.
    pub fn identity(feature_dim: usize, control_dim: usize) -> Self {
        AffineParams {
            scale: Dense {
                w: Matrix::zeros(feature_dim, control_dim),
                b: vec![1.0; feature_dim],
            },
            shift: Dense::zeros(feature_dim, control_dim),
        }
    }

    /// Starts at identity biases with small uniform projection weights.
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, control_dim: usize, rng: &mut R) -> Self {
        let mut scale = Dense::uniform(feature_dim, control_dim, 1.0, rng);
        let mut shift = Dense::uniform(feature_dim, control_dim, 0.0, rng);
        scale.w.scale(0.1);
        shift.w.scale(0.1);
        AffineParams { scale, shift }
    }

    pub fn feature_dim(&self) -> usize {
        self.scale.out_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.scale.in_dim()
    }

    /// Gradients of `affine(x, c)` given `dy`; accumulates into `grad`, `dx`, `dc`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        c: &[f64],
        dy: &[f64],
        grad: &mut AffineParams,
        dx: &mut [f64],
        dc: &mut [f64],
    ) {
        let s = self.scale.forward(c).expect("checked in forward");
        let ds: Vec<f64> = dy.iter().zip(x).map(|(d, xi)| d * xi).collect();
        for ((o, d), si) in dx.iter_mut().zip(dy).zip(&s) {
            *o += d * si;
        }
        self.scale.backward(c, &ds, &mut grad.scale, Some(dc));
        self.shift.backward(c, dy, &mut grad.shift, Some(dc));
    }
}

pub fn affine_condition(p: &AffineParams, x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.feature_dim() {
        return Err(Error::shape(
            format!("feature of length {}", p.feature_dim()),
            format!("length {}", x.len()),
        ));
    }
    if c.len() != p.control_dim() {
        return Err(Error::shape(
            format!("control of length {}", p.control_dim()),
            format!("length {}", c.len()),
        ));
    }
    let s = p.scale.forward(c)?;
    let mut out = p.shift.forward(c)?;
    for ((o, xi), si) in out.iter_mut().zip(x).zip(&s) {
        *o += xi * si;
    }
    Ok(out)
}

impl Parameters for AffineParams {
    fn blocks(&self) -> Vec<(BlockInfo, &[f64])> {
        let mut out = Vec::new();
        let roles = (Role::ControlWeight, Role::ControlBias);
        self.scale.push_blocks("w1", "b1", roles, &mut out);
        self.shift.push_blocks("w2", "b2", roles, &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.scale.push_blocks_mut(&mut out);
        self.shift.push_blocks_mut(&mut out);
        out
    }
}
