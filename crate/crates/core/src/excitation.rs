//! Excitation spectrogram generator.
//!
//! A deterministic resonator: voiced frames put their energy on the harmonic
//! comb `i · f0` (split equally over the harmonics), unvoiced frames spread
//! it uniformly over every linear bin. The linear frames are then projected
//! through the mel filterbank.

use crate::dsp::{FrameParams, MelFilterbank, Spectrogram, SpectrogramKind};
use crate::error::{Error, Result};
use crate::features::{EnergyContour, PitchContour};
use crate::linalg::Matrix;

/// What an unvoiced frame's energy is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnvoicedDivisor {
    /// `n_fft / 2 + 1`, the number of linear bins. Conserves frame energy.
    #[default]
    Bins,
    /// `n_fft`, the literal textbook divisor. Leaves about half the energy out.
    Fft,
}

impl UnvoicedDivisor {
    pub fn value(self, params: &FrameParams) -> f64 {
        match self {
            UnvoicedDivisor::Bins => params.n_bins() as f64,
            UnvoicedDivisor::Fft => params.n_fft as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExcitationConfig {
    pub unvoiced_divisor: UnvoicedDivisor,
}

/// Number of harmonics of `f0` at or below Nyquist.
pub fn harmonic_count(f0: f64, params: &FrameParams) -> usize {
    if !(f0 > 0.0) || !f0.is_finite() {
        return 0;
    }
    (params.nyquist() / f0).floor() as usize
}

/// Harmonics `i · f0`, `i = 1..=N_h`, snapped to the nearest FFT bin.
///
/// Returns `(bin, count)` pairs in ascending bin order; `count > 1` when
/// several harmonics round onto the same bin. `f0` must be positive and no
/// higher than Nyquist: unvoiced frames take the uniform branch instead.
pub fn harmonic_bins(f0: f64, params: &FrameParams) -> Result<Vec<(usize, usize)>> {
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::Domain(format!(
            "harmonics need f0 > 0, got {f0}; unvoiced frames use the uniform branch"
        )));
    }
    let n_h = harmonic_count(f0, params);
    if n_h == 0 {
        return Err(Error::Domain(format!(
            "f0 = {f0} Hz is above Nyquist ({} Hz): no harmonics",
            params.nyquist()
        )));
    }
    let scale = params.n_fft as f64 / params.sample_rate as f64;
    let last = params.n_bins() - 1;
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(n_h);
    for i in 1..=n_h {
        let bin = ((i as f64 * f0 * scale).round() as usize).min(last);
        match out.last_mut() {
            Some((b, c)) if *b == bin => *c += 1,
            _ => out.push((bin, 1)),
        }
    }
    Ok(out)
}

/// One linear excitation frame of `n_bins` energies summing to `e`.
pub fn excitation_linear_frame(
    f0: f64,
    e: f64,
    params: &FrameParams,
    config: &ExcitationConfig,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.n_bins()];
    fill_linear_frame(f0, e, params, config, &mut out)?;
    Ok(out)
}

fn fill_linear_frame(
    f0: f64,
    e: f64,
    params: &FrameParams,
    config: &ExcitationConfig,
    out: &mut [f64],
) -> Result<()> {
    if !(e >= 0.0) || !e.is_finite() {
        return Err(Error::Domain(format!("frame energy must be >= 0, got {e}")));
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    if e == 0.0 {
        return Ok(());
    }
    if f0 == 0.0 {
        let v = e / config.unvoiced_divisor.value(params);
        out.iter_mut().for_each(|x| *x = v);
        return Ok(());
    }
    let bins = harmonic_bins(f0, params)?;
    let per = e / harmonic_count(f0, params) as f64;
    for (b, count) in bins {
        out[b] = per * count as f64;
    }
    Ok(())
}

fn check_inputs(pitch: &PitchContour, energy: &EnergyContour, params: &FrameParams) -> Result<()> {
    if pitch.len() != energy.len() {
        return Err(Error::shape(
            format!("{} energy frames to match pitch", pitch.len()),
            format!("{} energy frames", energy.len()),
        ));
    }
    if pitch.params() != energy.params() || pitch.params() != params {
        return Err(Error::shape(
            format!("contours and filterbank on the same frame params ({params:?})"),
            format!("pitch {:?}, energy {:?}", pitch.params(), energy.params()),
        ));
    }
    Ok(())
}

/// Linear-frequency excitation (`frames × n_bins`, energy units).
pub fn generate_linear_excitation(
    pitch: &PitchContour,
    energy: &EnergyContour,
    params: &FrameParams,
    config: &ExcitationConfig,
) -> Result<Spectrogram> {
    check_inputs(pitch, energy, params)?;
    let mut data = Matrix::zeros(pitch.len(), params.n_bins());
    for (t, (&f0, &e)) in pitch.values().iter().zip(energy.values()).enumerate() {
        fill_linear_frame(f0, e, params, config, data.row_mut(t))
            .map_err(|err| Error::Domain(format!("frame {t}: {err}")))?;
    }
    Spectrogram::new(data, SpectrogramKind::LinearEnergy)
}

/// Mel excitation spectrogram with one frame per contour frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpectrogram {
    mel: Spectrogram,
    params: FrameParams,
}

impl ExcitationSpectrogram {
    pub fn mel(&self) -> &Spectrogram {
        &self.mel
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn n_frames(&self) -> usize {
        self.mel.n_frames()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.mel.frame(t)
    }
}

pub fn generate_excitation(
    pitch: &PitchContour,
    energy: &EnergyContour,
    fb: &MelFilterbank,
    config: &ExcitationConfig,
) -> Result<ExcitationSpectrogram> {
    let params = fb.params();
    check_inputs(pitch, energy, params)?;
    let mut mel = Matrix::zeros(pitch.len(), fb.n_mels());
    let mut linear = vec![0.0; params.n_bins()];
    for (t, (&f0, &e)) in pitch.values().iter().zip(energy.values()).enumerate() {
        fill_linear_frame(f0, e, params, config, &mut linear)
            .map_err(|err| Error::Domain(format!("frame {t}: {err}")))?;
        fb.weights().t_matvec_acc(&linear, mel.row_mut(t));
    }
    Ok(ExcitationSpectrogram {
        mel: Spectrogram::new(mel, SpectrogramKind::MelEnergy)?,
        params: *params,
    })
}
