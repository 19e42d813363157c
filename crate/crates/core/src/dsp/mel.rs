//! Mel scale and the linear-to-mel projection matrix.
//!
//! The mel map is the closed form `m = 2595 · log10(1 + f / 700)`. Filters are
//! peak-1 triangles whose corners are snapped to FFT bins, so every filter
//! takes exactly the value 1 at its own center bin and 0 at the centers of
//! its neighbours.

use super::{FrameParams, Spectrogram, SpectrogramKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub fn hz_to_mel(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::Domain(format!("frequency must be >= 0 Hz, got {f}")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::Domain(format!("mel value must be >= 0, got {m}")));
    }
    Ok(700.0 * (10f64.powf(m / 2595.0) - 1.0))
}

/// Linear-to-mel projection, `n_bins × n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Matrix,
    params: FrameParams,
    centers: Vec<usize>,
}

impl MelFilterbank {
    pub fn new(params: &FrameParams) -> Result<Self> {
        build_mel_filterbank(params)
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    /// FFT bin of each filter's peak.
    pub fn center_bins(&self) -> &[usize] {
        &self.centers[1..self.centers.len() - 1]
    }

    /// Lower and upper corner bins of filter `k`.
    pub fn support(&self, k: usize) -> (usize, usize) {
        (self.centers[k], self.centers[k + 2])
    }

    pub fn n_bins(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.weights.cols()
    }

    /// Projects a single linear frame into mel space.
    pub fn project_frame(&self, frame: &[f64]) -> Result<Vec<f64>> {
        self.weights.vecmat(frame)
    }
}

pub fn build_mel_filterbank(params: &FrameParams) -> Result<MelFilterbank> {
    params.validate()?;
    let n_bins = params.n_bins();
    let n_mels = params.n_mels;
    let mel_lo = hz_to_mel(params.fmin)?;
    let mel_hi = hz_to_mel(params.fmax)?;
    let step = (mel_hi - mel_lo) / (n_mels + 1) as f64;
    let bin_per_hz = params.n_fft as f64 / params.sample_rate as f64;

    let mut centers = Vec::with_capacity(n_mels + 2);
    for k in 0..n_mels + 2 {
        let hz = mel_to_hz(mel_lo + step * k as f64)?;
        let bin = ((hz * bin_per_hz).round() as usize).min(n_bins - 1);
        centers.push(bin);
    }
    for k in 0..n_mels + 1 {
        if centers[k + 1] <= centers[k] {
            // corner k belongs to filter k (left edge) and filter k-1 (center)
            let filter = k.min(n_mels - 1);
            return Err(Error::Config(format!(
                "mel filter {filter} collapses: corner bins {} and {} coincide \
                 ({n_mels} mel bands is too many for n_fft={} between {} and {} Hz)",
                centers[k], centers[k + 1], params.n_fft, params.fmin, params.fmax
            )));
        }
    }

    let mut weights = Matrix::zeros(n_bins, n_mels);
    for k in 0..n_mels {
        let (lo, mid, hi) = (centers[k], centers[k + 1], centers[k + 2]);
        for b in lo + 1..hi {
            let w = if b <= mid {
                (b - lo) as f64 / (mid - lo) as f64
            } else {
                (hi - b) as f64 / (hi - mid) as f64
            };
            weights.set(b, k, w);
        }
    }

    Ok(MelFilterbank {
        weights,
        params: *params,
        centers,
    })
}

/// `spec · W`, frame by frame.
pub fn linear_to_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<Spectrogram> {
    if spec.n_bins() != fb.n_bins() {
        return Err(Error::shape(
            format!("{} x {} spectrogram", spec.n_frames(), fb.n_bins()),
            format!("{} x {}", spec.n_frames(), spec.n_bins()),
        ));
    }
    let mut out = Matrix::zeros(spec.n_frames(), fb.n_mels());
    for (t, frame) in spec.data().iter_rows().enumerate() {
        fb.weights.t_matvec_acc(frame, out.row_mut(t));
    }
    Spectrogram::new(out, SpectrogramKind::MelEnergy)
}
