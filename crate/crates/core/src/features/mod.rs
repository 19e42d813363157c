//! Audio ingestion, preprocessing, and the pitch/energy contours that drive
//! the excitation generator.

mod extract;
mod preprocess;
mod wav;

use std::fmt::Write as _;
use std::path::Path;

pub use extract::{
    extract_energy, extract_pitch, PitchConfig, DEFAULT_F0_MAX, DEFAULT_F0_MIN,
    DEFAULT_VOICING_THRESHOLD,
};
pub use preprocess::{
    normalize_energy, normalize_peak, trim_block, trim_margin, trim_silence, DEFAULT_PEAK,
    DEFAULT_TRIM_DB,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use crate::dsp::FrameParams;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::xspc::Tensor;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !(s.abs() <= 1.0)) {
            return Err(Error::Domain(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Per-frame f0 in Hz; `0` marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    f0: Vec<f64>,
    params: FrameParams,
}

impl PitchContour {
    pub fn new(f0: Vec<f64>, params: FrameParams) -> Result<Self> {
        if let Some(i) = f0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(format!(
                "f0[{i}] = {} must be 0 (unvoiced) or a positive frequency",
                f0[i]
            )));
        }
        Ok(PitchContour { f0, params })
    }

    pub fn values(&self) -> &[f64] {
        &self.f0
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0.is_empty() {
            return 0.0;
        }
        self.f0.iter().filter(|&&f| f > 0.0).count() as f64 / self.f0.len() as f64
    }
}

/// Per-frame total energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyContour {
    e: Vec<f64>,
    params: FrameParams,
}

impl EnergyContour {
    pub fn new(e: Vec<f64>, params: FrameParams) -> Result<Self> {
        if let Some(i) = e.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(format!(
                "energy[{i}] = {} must be finite and >= 0",
                e[i]
            )));
        }
        Ok(EnergyContour { e, params })
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Result<EnergyContour> {
        EnergyContour::new(self.e.iter().map(|v| v * s).collect(), self.params)
    }
}

/// Two-column `frame_index,value` CSV with a header row.
pub fn contour_to_csv(values: &[f64]) -> String {
    let mut out = String::from("frame_index,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

pub fn contour_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut offset = 0;
    for (line_no, line) in text.lines().enumerate() {
        let start = offset;
        offset += line.len() + 1;
        let line = line.trim();
        if line.is_empty() || (line_no == 0 && line.starts_with("frame_index")) {
            continue;
        }
        let mut cols = line.split(',');
        let (idx, val) = match (cols.next(), cols.next(), cols.next()) {
            (Some(i), Some(v), None) => (i.trim(), v.trim()),
            _ => {
                return Err(Error::Parse {
                    offset: start,
                    detail: format!("line {}: expected two columns", line_no + 1),
                })
            }
        };
        let idx: usize = idx.parse().map_err(|_| Error::Parse {
            offset: start,
            detail: format!("line {}: bad frame index {idx:?}", line_no + 1),
        })?;
        if idx != values.len() {
            return Err(Error::Parse {
                offset: start,
                detail: format!(
                    "line {}: frame index {idx}, expected {}",
                    line_no + 1,
                    values.len()
                ),
            });
        }
        let v: f64 = val.parse().map_err(|_| Error::Parse {
            offset: start,
            detail: format!("line {}: bad value {val:?}", line_no + 1),
        })?;
        values.push(v);
    }
    Ok(values)
}

/// Loads a contour from an XSPC rank-1 tensor, or from CSV when the file
/// name ends in `.csv`.
pub fn read_contour(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        contour_from_csv(&text)
    } else {
        Tensor::read(path)?.into_vector()
    }
}

pub fn write_contour_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    write_atomic(path.as_ref(), contour_to_csv(values).as_bytes())
}
