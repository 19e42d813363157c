//! Checkpoints: one XSPC tensor per parameter block plus `manifest.txt`.
//!
//! Each manifest line is `name shape role`, with the shape written as
//! `x`-separated dims, e.g. `w_xf 64x177 weight`. Tensors are stored as f32.

use std::fmt::Write as _;
use std::path::Path;

use super::params::{Parameters, Role};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::xspc::Tensor;

pub const MANIFEST: &str = "manifest.txt";

pub fn manifest_text<P: Parameters>(params: &P) -> String {
    let mut out = String::new();
    for (info, _) in params.blocks() {
        let shape: Vec<String> = info.shape.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "{} {} {}", info.name, shape.join("x"), info.role);
    }
    out
}

pub fn save_checkpoint<P: Parameters>(dir: impl AsRef<Path>, params: &P) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (info, data) in params.blocks() {
        let t = Tensor::new(info.shape.clone(), data.iter().map(|&v| v as f32).collect())?;
        t.write(dir.join(format!("{}.xspc", info.name)))?;
    }
    // manifest last: a directory with a manifest is complete
    write_atomic(&dir.join(MANIFEST), manifest_text(params).as_bytes())
}

/// Loads a checkpoint into a copy of `template`, checking names, shapes and roles.
pub fn load_checkpoint<P: Parameters>(dir: impl AsRef<Path>, template: &P) -> Result<P> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let expected = template.blocks();
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != expected.len() {
        return Err(Error::shape(
            format!("{} manifest entries", expected.len()),
            format!("{}", lines.len()),
        ));
    }
    let mut tensors = Vec::with_capacity(lines.len());
    for (line, (info, _)) in lines.iter().zip(&expected) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, shape, role] = fields[..] else {
            return Err(Error::Parse {
                offset: 0,
                detail: format!("manifest line {line:?}: expected `name shape role`"),
            });
        };
        let dims: Vec<usize> = shape
            .split('x')
            .map(|d| d.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                offset: 0,
                detail: format!("manifest line {line:?}: bad shape"),
            })?;
        if name != info.name || dims != info.shape || Role::parse(role) != Some(info.role) {
            return Err(Error::shape(
                format!("{} {:?} {}", info.name, info.shape, info.role),
                format!("{name} {dims:?} {role}"),
            ));
        }
        let t = Tensor::read(dir.join(format!("{name}.xspc")))?;
        if t.dims() != dims.as_slice() {
            return Err(Error::shape(format!("{name} dims {dims:?}"), format!("{:?}", t.dims())));
        }
        tensors.push(t.to_f64());
    }
    let mut out = template.clone();
    for (dst, src) in out.blocks_mut().into_iter().zip(tensors) {
        dst.copy_from_slice(&src);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::cell::CglstmParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_through_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = CglstmParams::init(3, 2, 2, &mut ChaCha8Rng::seed_from_u64(1));
        save_checkpoint(dir.path(), &p).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.starts_with("w_xf 3x5 weight\nb_xf 3 bias\n"));
        assert!(manifest.contains("w_cf 3x2 control-weight"));
        let q = load_checkpoint(dir.path(), &p).unwrap();
        for (a, b) in p.flatten().iter().zip(q.flatten()) {
            assert_eq!(*a as f32, b as f32);
        }
    }

    #[test]
    fn wrong_template_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = CglstmParams::init(3, 2, 2, &mut ChaCha8Rng::seed_from_u64(1));
        save_checkpoint(dir.path(), &p).unwrap();
        let other = CglstmParams::init(4, 2, 2, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(load_checkpoint(dir.path(), &other).is_err());
        assert!(load_checkpoint(dir.path(), &p.content).is_err());
    }
}
