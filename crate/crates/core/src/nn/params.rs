use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
    ControlWeight,
    ControlBias,
    Embedding,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Weight => "weight",
            Role::Bias => "bias",
            Role::ControlWeight => "control-weight",
            Role::ControlBias => "control-bias",
            Role::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "weight" => Role::Weight,
            "bias" => Role::Bias,
            "control-weight" => Role::ControlWeight,
            "control-bias" => Role::ControlBias,
            "embedding" => Role::Embedding,
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name, shape and role of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: Role,
}

/// A bundle of trainable tensors, visited in a fixed order.
///
/// `blocks` and `blocks_mut` must list the same tensors in the same order;
/// optimizers, gradient checks and checkpoints rely on it.
pub trait Parameters: Clone {
    fn blocks(&self) -> Vec<(BlockInfo, &[f64])>;

    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for b in z.blocks_mut() {
            b.fill(0.0);
        }
        z
    }

    /// Total number of scalar parameters.
    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, d)| d.len()).sum()
    }

    /// All parameters concatenated in block order.
    fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, d)| d.iter().copied()).collect()
    }
}

pub fn param_count<P: Parameters>(params: &P) -> usize {
    params.param_count()
}

/// Checks that two bundles have identical block layouts.
pub fn check_same_layout<P: Parameters>(a: &P, b: &P) -> Result<()> {
    let (ba, bb) = (a.blocks(), b.blocks());
    if ba.len() != bb.len() {
        return Err(Error::shape(
            format!("{} parameter blocks", ba.len()),
            format!("{} blocks", bb.len()),
        ));
    }
    for ((ia, da), (ib, db)) in ba.iter().zip(&bb) {
        if da.len() != db.len() || ia.shape != ib.shape {
            return Err(Error::shape(
                format!("{} with shape {:?}", ia.name, ia.shape),
                format!("{} with shape {:?}", ib.name, ib.shape),
            ));
        }
    }
    Ok(())
}

/// Affine map `w · x + b` with `w` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Dense {
            w: Matrix::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    pub fn new(w: Matrix, b: Vec<f64>) -> Result<Self> {
        if w.rows() != b.len() {
            return Err(Error::shape(
                format!("bias of length {}", w.rows()),
                format!("length {}", b.len()),
            ));
        }
        Ok(Dense { w, b })
    }

    /// Weights uniform in `±1/sqrt(in_dim)`, bias set to `bias`.
    pub fn uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, bias: f64, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Dense {
            w: Matrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-bound..=bound)),
            b: vec![bias; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    /// `w · x + b`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::shape(
                format!("input of length {}", self.in_dim()),
                format!("length {}", x.len()),
            ));
        }
        let mut out = vec![0.0; self.out_dim()];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        self.w.matvec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
    }

    /// Accumulates `dL/dw`, `dL/db` into `grad` and `wᵀ · dy` into `dx`.
    #[inline]
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        grad.w.add_outer(dy, x);
        for (g, d) in grad.b.iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            self.w.t_matvec_acc(dy, dx);
        }
    }

    pub(crate) fn push_blocks<'a>(
        &'a self,
        w_name: &str,
        b_name: &str,
        roles: (Role, Role),
        out: &mut Vec<(BlockInfo, &'a [f64])>,
    ) {
        out.push((
            BlockInfo {
                name: w_name.to_string(),
                shape: vec![self.w.rows(), self.w.cols()],
                role: roles.0,
            },
            self.w.as_slice(),
        ));
        out.push((
            BlockInfo {
                name: b_name.to_string(),
                shape: vec![self.b.len()],
                role: roles.1,
            },
            &self.b,
        ));
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w.as_mut_slice());
        out.push(&mut self.b);
    }
}

/// `proj(x) = w · x + b`.
pub fn proj(params: &Dense, x: &[f64]) -> Result<Vec<f64>> {
    params.forward(x)
}

impl Parameters for Dense {
    fn blocks(&self) -> Vec<(BlockInfo, &[f64])> {
        let mut out = Vec::new();
        self.push_blocks("w", "b", (Role::Weight, Role::Bias), &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.push_blocks_mut(&mut out);
        out
    }
}

/// Lookup table with one trainable row per id.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Matrix,
}

impl Embedding {
    pub fn uniform<R: Rng + ?Sized>(count: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        Embedding {
            table: Matrix::from_fn(count, dim, |_, _| rng.random_range(-scale..=scale)),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn len(&self) -> usize {
        self.table.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.table.rows() == 0
    }

    pub fn lookup(&self, id: usize) -> Result<&[f64]> {
        if id >= self.len() {
            return Err(Error::Domain(format!(
                "id {id} out of range for a table of {}",
                self.len()
            )));
        }
        Ok(self.table.row(id))
    }
}
