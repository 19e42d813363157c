use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FrameParams, Spectrogram, SpectrogramKind};
use crate::error::Result;
use crate::linalg::Matrix;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed, zero-padded magnitude STFT without centering.
///
/// Frame `i` covers samples `[i·hop, i·hop + window)`.
pub fn stft_magnitude(samples: &[f64], params: &FrameParams) -> Result<Spectrogram> {
    params.validate()?;
    let n_frames = params.require_frames(samples.len())?;
    let n_bins = params.n_bins();
    let window = hann_window(params.window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.n_fft);

    let mut buf = vec![Complex::new(0.0, 0.0); params.n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Matrix::zeros(n_frames, n_bins);
    for t in 0..n_frames {
        let start = t * params.hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (s, w)) in samples[start..start + params.window]
            .iter()
            .zip(&window)
            .enumerate()
        {
            buf[i].re = s * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (o, c) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
            *o = c.norm();
        }
    }
    Spectrogram::new(out, SpectrogramKind::LinearMagnitude)
}
