use super::{AudioClip, EnergyContour, PitchContour};
use crate::dsp::{hann_window, FrameParams};
use crate::error::{Error, Result};

pub const DEFAULT_F0_MIN: f64 = 50.0;
pub const DEFAULT_F0_MAX: f64 = 500.0;
pub const DEFAULT_VOICING_THRESHOLD: f64 = 0.3;

/// Pitch-extractor settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            f0_min: DEFAULT_F0_MIN,
            f0_max: DEFAULT_F0_MAX,
            voicing_threshold: DEFAULT_VOICING_THRESHOLD,
        }
    }
}

fn frames<'a>(
    samples: &'a [f64],
    params: &FrameParams,
) -> Result<impl Iterator<Item = &'a [f64]> + 'a> {
    params.validate()?;
    let n = params.require_frames(samples.len())?;
    let (hop, window) = (params.hop, params.window);
    Ok((0..n).map(move |i| &samples[i * hop..i * hop + window]))
}

/// Per-frame energy: sum of squared Hann-windowed samples.
pub fn extract_energy(clip: &AudioClip, params: &FrameParams) -> Result<EnergyContour> {
    let window = hann_window(params.window);
    let e = frames(clip.samples(), params)?
        .map(|frame| {
            frame
                .iter()
                .zip(&window)
                .map(|(s, w)| (s * w) * (s * w))
                .sum()
        })
        .collect();
    EnergyContour::new(e, *params)
}

/// Autocorrelation pitch tracker.
///
/// For every frame of length `N` the normalized autocorrelation
/// `r(τ) = Σ x[n]x[n+τ] / Σ x[n]² · N / (N − τ)` is evaluated over lags
/// `[rate / f0_max, rate / f0_min]`. The shortest local maximum within 10% of
/// the best peak is taken, to avoid octave-down errors, and refined by a
/// parabola through its neighbours. Frames whose peak falls below
/// `voicing_threshold` are unvoiced (`f0 = 0`).
pub fn extract_pitch(
    clip: &AudioClip,
    params: &FrameParams,
    config: &PitchConfig,
) -> Result<PitchContour> {
    let PitchConfig {
        f0_min,
        f0_max,
        voicing_threshold,
    } = *config;
    let rate = params.sample_rate as f64;
    if !(f0_min > 0.0 && f0_min < f0_max && f0_max <= rate / 2.0) {
        return Err(Error::Config(format!(
            "need 0 < f0_min < f0_max <= {}, got [{f0_min}, {f0_max}]",
            rate / 2.0
        )));
    }
    let lag_min = ((rate / f0_max).floor() as usize).max(2);
    let lag_max = (rate / f0_min).ceil() as usize;
    if lag_max + 2 >= params.window {
        return Err(Error::Config(format!(
            "f0_min = {f0_min} Hz needs lags up to {lag_max}, longer than the {}-sample window allows",
            params.window
        )));
    }

    let f0 = frames(clip.samples(), params)?
        .map(|frame| {
            frame_pitch(frame, lag_min, lag_max, voicing_threshold)
                .map(|lag| (rate / lag).clamp(f0_min, f0_max))
                .unwrap_or(0.0)
        })
        .collect();
    PitchContour::new(f0, *params)
}

/// Autocorrelation at `lag` over the frame energy, unbiased for the shrinking
/// overlap: 1 for a stationary periodic frame at its period.
fn normalized_autocorr(frame: &[f64], energy: f64, lag: usize) -> f64 {
    let n = frame.len();
    let num: f64 = frame[..n - lag].iter().zip(&frame[lag..]).map(|(x, y)| x * y).sum();
    num / energy * n as f64 / (n - lag) as f64
}

/// Returns the refined period in samples for a voiced frame.
fn frame_pitch(frame: &[f64], lag_min: usize, lag_max: usize, threshold: f64) -> Option<f64> {
    let energy: f64 = frame.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return None;
    }
    // r[k] holds lag lag_min - 1 + k so every candidate has both neighbours
    let r: Vec<f64> = (lag_min - 1..=lag_max + 1).map(|l| normalized_autocorr(frame, energy, l)).collect();
    let best = r[1..r.len() - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(best >= threshold) {
        return None;
    }
    let k = (1..r.len() - 1)
        .find(|&k| r[k] >= 0.9 * best && r[k] >= r[k - 1] && r[k] >= r[k + 1])
        .unwrap_or_else(|| {
            (1..r.len() - 1)
                .max_by(|&a, &b| r[a].total_cmp(&r[b]))
                .unwrap()
        });
    let (ym, y0, yp) = (r[k - 1], r[k], r[k + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let shift = if denom < 0.0 {
        (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some((lag_min - 1 + k) as f64 + shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn sine(freq: f64, amp: f64, n: usize) -> AudioClip {
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
            .collect();
        AudioClip::new(s, 16_000).unwrap()
    }

    #[test]
    fn zero_clip_zero_energy() {
        let clip = AudioClip::new(vec![0.0; 4000], 16_000).unwrap();
        let e = extract_energy(&clip, &FrameParams::default()).unwrap();
        assert_eq!(e.len(), 17);
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn steady_tone_has_flat_energy() {
        let clip = sine(330.0, 0.5, 16_000);
        let e = extract_energy(&clip, &FrameParams::default()).unwrap();
        let v = e.values();
        let reference = v[1];
        for &x in &v[1..v.len() - 1] {
            assert!((x - reference).abs() <= 0.05 * reference);
        }
    }

    #[test]
    fn sine_200_hz() {
        let clip = sine(200.0, 0.8, 16_000);
        let p = extract_pitch(&clip, &FrameParams::default(), &PitchConfig::default()).unwrap();
        let f0 = p.values();
        for &f in &f0[1..f0.len() - 1] {
            assert!((f - 200.0).abs() <= 2.0, "{f}");
        }
    }

    #[test]
    fn off_grid_pitch_is_interpolated() {
        // period 16000/173 = 92.49 samples
        let clip = sine(173.0, 0.8, 8_000);
        let p = extract_pitch(&clip, &FrameParams::default(), &PitchConfig::default()).unwrap();
        for &f in p.values() {
            assert!((f - 173.0).abs() <= 2.0, "{f}");
        }
    }

    #[test]
    fn noise_is_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0f64, 0.2).unwrap();
        let s = (0..16_000)
            .map(|_| normal.sample(&mut rng).clamp(-1.0, 1.0))
            .collect();
        let clip = AudioClip::new(s, 16_000).unwrap();
        let p = extract_pitch(&clip, &FrameParams::default(), &PitchConfig::default()).unwrap();
        let unvoiced = p.values().iter().filter(|&&f| f == 0.0).count();
        assert!(unvoiced * 10 >= p.len() * 9, "{unvoiced}/{}", p.len());
    }

    #[test]
    fn silence_is_unvoiced() {
        let clip = AudioClip::new(vec![0.0; 3000], 16_000).unwrap();
        let p = extract_pitch(&clip, &FrameParams::default(), &PitchConfig::default()).unwrap();
        assert!(p.values().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn bad_range_is_config_error() {
        let clip = sine(200.0, 0.5, 3000);
        let p = FrameParams::default();
        for (lo, hi) in [(300.0, 200.0), (0.0, 200.0), (50.0, 9000.0), (10.0, 200.0)] {
            let cfg = PitchConfig {
                f0_min: lo,
                f0_max: hi,
                ..PitchConfig::default()
            };
            assert!(matches!(extract_pitch(&clip, &p, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn short_clip_is_empty_input() {
        let clip = sine(200.0, 0.5, 500);
        let p = FrameParams::default();
        assert!(matches!(extract_energy(&clip, &p), Err(Error::EmptyInput(_))));
        assert!(matches!(
            extract_pitch(&clip, &p, &PitchConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }
}
