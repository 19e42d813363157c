//! Frame-level DSP: framing parameters, STFT magnitude, mel projection.

mod mel;
mod params;
mod stft;

pub use mel::{build_mel_filterbank, hz_to_mel, linear_to_mel, mel_to_hz, MelFilterbank};
pub use params::FrameParams;
pub use stft::{hann_window, stft_magnitude};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramKind {
    LinearMagnitude,
    LinearEnergy,
    MelEnergy,
}

/// Non-negative `frames × bins` matrix tagged with what its bins mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Matrix,
    kind: SpectrogramKind,
}

impl Spectrogram {
    pub fn new(data: Matrix, kind: SpectrogramKind) -> Result<Self> {
        if let Some(i) = data.as_slice().iter().position(|v| !(*v >= 0.0)) {
            let (r, c) = (i / data.cols().max(1), i % data.cols().max(1));
            return Err(Error::Domain(format!(
                "spectrogram entry ({r}, {c}) = {} is negative or NaN",
                data.as_slice()[i]
            )));
        }
        Ok(Spectrogram { data, kind })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn kind(&self) -> SpectrogramKind {
        self.kind
    }

    pub fn n_frames(&self) -> usize {
        self.data.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.cols()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }

    /// Squares a magnitude spectrogram into linear energy.
    pub fn to_energy(&self) -> Result<Spectrogram> {
        match self.kind {
            SpectrogramKind::LinearMagnitude => {
                let mut data = self.data.clone();
                data.as_mut_slice().iter_mut().for_each(|v| *v *= *v);
                Ok(Spectrogram {
                    data,
                    kind: SpectrogramKind::LinearEnergy,
                })
            }
            other => Err(Error::Config(format!(
                "only a linear magnitude spectrogram can be squared, got {other:?}"
            ))),
        }
    }
}
