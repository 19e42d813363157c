use super::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_PEAK: f64 = 0.95;
pub const DEFAULT_TRIM_DB: f64 = -40.0;

/// Scales the clip so that its largest absolute sample equals [`DEFAULT_PEAK`].
pub fn normalize_energy(clip: &AudioClip) -> Result<AudioClip> {
    normalize_peak(clip, DEFAULT_PEAK)
}

pub fn normalize_peak(clip: &AudioClip, target: f64) -> Result<AudioClip> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config(format!("peak target {target} outside (0, 1]")));
    }
    if clip.is_empty() {
        return Err(Error::EmptyInput("cannot normalize an empty clip".into()));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Err(Error::Degenerate("cannot normalize an all-zero clip".into()));
    }
    let gain = target / peak;
    let samples = clip.samples().iter().map(|s| s * gain).collect();
    AudioClip::new(samples, clip.sample_rate())
}

/// Analysis block used by [`trim_silence`]: 10 ms.
pub fn trim_block(sample_rate: u32) -> usize {
    ((sample_rate as f64 * 0.010).round() as usize).max(1)
}

/// Samples kept (or zero-padded) on each side of speech: six analysis
/// blocks, i.e. 60 ms.
pub fn trim_margin(sample_rate: u32) -> usize {
    6 * trim_block(sample_rate)
}

/// Removes leading and trailing silence, keeping 60 ms next to speech.
///
/// A 10 ms block counts as speech when its mean-square level, relative to the
/// clip's peak amplitude, reaches `threshold_db`. Blocks are measured over a
/// fixed length, a short final block being treated as zero-extended. The
/// kept region is widened by [`trim_margin`] on both sides, padding with
/// zeros where the clip runs out. The kept region ends on a block boundary,
/// so a clip whose length is not a multiple of the block gains the missing
/// tail of its last speech block as zeros.
pub fn trim_silence(clip: &AudioClip, threshold_db: f64) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptyInput("cannot trim an empty clip".into()));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Err(Error::Degenerate("clip is entirely silent".into()));
    }
    let block = trim_block(clip.sample_rate());
    let margin = trim_margin(clip.sample_rate());
    let floor = peak * peak * 10f64.powf(threshold_db / 10.0);
    let samples = clip.samples();

    let is_speech = |b: usize| {
        let start = b * block;
        let end = (start + block).min(samples.len());
        let energy: f64 = samples[start..end].iter().map(|s| s * s).sum();
        energy / block as f64 >= floor
    };
    let n_blocks = samples.len().div_ceil(block);
    let first = (0..n_blocks).find(|&b| is_speech(b));
    let last = (0..n_blocks).rev().find(|&b| is_speech(b));
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(Error::Degenerate(format!(
                "no block reaches {threshold_db} dB relative to peak"
            )))
        }
    };

    let start = first * block;
    // a partial final block counts as zero-extended here too
    let end = (last + 1) * block;
    let lead = margin.saturating_sub(start);
    let trail = (end + margin).saturating_sub(samples.len());
    let lo = start.saturating_sub(margin);
    let hi = (end + margin).min(samples.len());

    let mut out = Vec::with_capacity(lead + (hi - lo) + trail);
    out.resize(lead, 0.0);
    out.extend_from_slice(&samples[lo..hi]);
    out.resize(out.len() + trail, 0.0);
    AudioClip::new(out, clip.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * 220.0 * i as f64 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn scales_by_ratio() {
        let clip = AudioClip::new(vec![0.1, -0.5, 0.25], 16_000).unwrap();
        let out = normalize_energy(&clip).unwrap();
        for (a, b) in out.samples().iter().zip(clip.samples()) {
            assert!((a - b * 1.9).abs() < 1e-15);
        }
    }

    #[test]
    fn peaked_clip_is_a_fixed_point() {
        let clip = AudioClip::new(vec![0.95, -0.3, 0.0], 16_000).unwrap();
        let out = normalize_energy(&clip).unwrap();
        for (a, b) in out.samples().iter().zip(clip.samples()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_clip_is_degenerate() {
        let clip = AudioClip::new(vec![0.0; 10], 16_000).unwrap();
        assert!(matches!(normalize_energy(&clip), Err(Error::Degenerate(_))));
        assert!(matches!(trim_silence(&clip, -40.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn silence_tone_silence() {
        let mut s = vec![0.0; 16_000];
        s.extend(tone(16_000, 0.5));
        s.extend(vec![0.0; 16_000]);
        let clip = AudioClip::new(s, 16_000).unwrap();
        let out = trim_silence(&clip, DEFAULT_TRIM_DB).unwrap();
        assert_eq!(out.samples().len(), 960 + 16_000 + 960);
        assert_eq!(&out.samples()[960..960 + 16_000], &clip.samples()[16_000..32_000]);
    }

    #[test]
    fn no_silence_gets_padded() {
        let clip = AudioClip::new(tone(4_000, 0.5), 16_000).unwrap();
        let out = trim_silence(&clip, DEFAULT_TRIM_DB).unwrap();
        assert_eq!(out.samples().len(), 4_000 + 2 * 960);
        assert!(out.samples()[..960].iter().all(|&v| v == 0.0));
        assert!(out.samples()[960 + 4_000..].iter().all(|&v| v == 0.0));
        assert_eq!(&out.samples()[960..960 + 4_000], clip.samples());
    }

    #[test]
    fn faint_tail_below_threshold_is_cut() {
        let mut s = tone(3_200, 0.5);
        s.extend(vec![1e-4; 8_000]);
        let clip = AudioClip::new(s, 16_000).unwrap();
        let out = trim_silence(&clip, DEFAULT_TRIM_DB).unwrap();
        assert_eq!(out.samples().len(), 960 + 3_200 + 960);
    }
}
