use crate::error::{Error, Result};

/// Framing parameters shared by every frame-level computation.
///
/// Defaults: 16 kHz audio, 12.5 ms hop (200 samples), 50 ms window
/// (800 samples), 1024-point FFT, 80 mel bands over 0 Hz..Nyquist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            sample_rate: 16_000,
            hop: 200,
            window: 800,
            n_fft: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8_000.0,
        }
    }
}

impl FrameParams {
    /// Default parameters for another sample rate, keeping the 12.5 ms hop
    /// and 50 ms window and choosing the smallest power-of-two FFT that
    /// covers the window.
    pub fn for_rate(sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let hop = (sample_rate as usize * 125).div_ceil(10_000).max(1);
        let window = (sample_rate as usize * 50).div_ceil(1000).max(hop);
        FrameParams {
            sample_rate,
            hop,
            window,
            n_fft: window.next_power_of_two(),
            n_mels: 80,
            fmin: 0.0,
            fmax: sample_rate as f64 / 2.0,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        if !(self.hop <= self.window && self.window <= self.n_fft) {
            return Err(Error::Config(format!(
                "need hop <= window <= n_fft, got hop={} window={} n_fft={}",
                self.hop, self.window, self.n_fft
            )));
        }
        if !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_fft must be a power of two, got {}",
                self.n_fft
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        let nyquist = self.nyquist();
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    /// Center frequency of FFT bin `b` in Hz.
    pub fn bin_frequency(&self, b: usize) -> f64 {
        b as f64 * self.sample_rate as f64 / self.n_fft as f64
    }

    /// `1 + floor((len - window) / hop)`, or `None` when the clip is shorter
    /// than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.window).then(|| 1 + (len - self.window) / self.hop)
    }

    pub(crate) fn require_frames(&self, len: usize) -> Result<usize> {
        self.frame_count(len).ok_or_else(|| {
            Error::EmptyInput(format!(
                "{len} samples is shorter than one {}-sample window",
                self.window
            ))
        })
    }
}
