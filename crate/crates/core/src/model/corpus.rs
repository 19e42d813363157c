use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{PhonemeSequence, SpeakerEmbedding};
use crate::dsp::{build_mel_filterbank, FrameParams};
use crate::error::{Error, Result};
use crate::excitation::{generate_excitation, ExcitationConfig, ExcitationSpectrogram};
use crate::features::{EnergyContour, PitchContour};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub n_speakers: usize,
    pub n_utts: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Symbol inventory size; ids below `n_consonants` are unvoiced.
    pub n_symbols: usize,
    pub n_consonants: usize,
    pub control_dim: usize,
    /// Standard deviation of the additive target noise.
    pub noise: f64,
    pub params: FrameParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_speakers: 8,
            n_utts: 40,
            min_frames: 40,
            max_frames: 120,
            n_symbols: 24,
            n_consonants: 8,
            control_dim: 16,
            noise: 0.05,
            params: FrameParams::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_speakers < 2 {
            return bad(format!("n_speakers must be at least 2, got {}", self.n_speakers));
        }
        if self.n_utts == 0 {
            return bad("n_utts must be positive".into());
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad(format!(
                "frame range [{}, {}] is empty or starts at 0",
                self.min_frames, self.max_frames
            ));
        }
        if self.n_consonants == 0 || self.n_consonants >= self.n_symbols {
            return bad(format!(
                "need 0 < n_consonants < n_symbols, got {} of {}",
                self.n_consonants, self.n_symbols
            ));
        }
        if self.control_dim == 0 {
            return bad("control_dim must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be finite and non-negative, got {}", self.noise));
        }
        Ok(())
    }

    pub fn is_voiced(&self, symbol: usize) -> bool {
        symbol >= self.n_consonants
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub embedding: SpeakerEmbedding,
    /// Positive per-mel-channel gain, smooth across channels.
    pub envelope: Vec<f64>,
    pub base_f0: f64,
    /// Period in frames of the speaker's energy modulation.
    pub energy_period: f64,
    /// Relative depth of the energy modulation.
    pub energy_depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub phonemes: PhonemeSequence,
    pub speaker: usize,
    pub pitch: PitchContour,
    pub energy: EnergyContour,
    pub excitation: ExcitationSpectrogram,
    /// `envelope ⊙ excitation + noise`, frames × n_mels. Entries may be
    /// slightly negative where the excitation is zero.
    pub target: Matrix,
}

impl Utterance {
    pub fn n_frames(&self) -> usize {
        self.target.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub config: CorpusConfig,
    pub seed: u64,
    pub speakers: Vec<Speaker>,
    pub utterances: Vec<Utterance>,
}

impl SyntheticCorpus {
    pub fn n_mels(&self) -> usize {
        self.config.params.n_mels
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.n_frames()).sum()
    }

    /// Noise-free target of an utterance: `envelope ⊙ excitation`.
    pub fn clean_target(&self, utt: &Utterance) -> Matrix {
        let env = &self.speakers[utt.speaker].envelope;
        Matrix::from_fn(utt.n_frames(), env.len(), |t, k| env[k] * utt.excitation.frame(t)[k])
    }

    /// Expected MSE of a perfect predictor.
    pub fn noise_floor(&self) -> f64 {
        self.config.noise * self.config.noise
    }
}

pub fn synth_corpus_generate(
    n_speakers: usize,
    n_utts: usize,
    seed: u64,
    params: FrameParams,
) -> Result<SyntheticCorpus> {
    synth_corpus_with(
        &CorpusConfig {
            n_speakers,
            n_utts,
            params,
            ..CorpusConfig::default()
        },
        seed,
    )
}

/// Smooth positive gain curve with unit mean, and its cosine coefficients.
fn smooth_envelope(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let coeffs: Vec<f64> = (1..=4)
        .map(|j| rng.random_range(-0.5..0.5) / j as f64)
        .collect();
    let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let raw: Vec<f64> = (0..n)
        .map(|k| {
            let x = k as f64 / n.max(2).saturating_sub(1).max(1) as f64;
            let s: f64 = coeffs
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(j, (a, p))| a * (std::f64::consts::PI * (j + 1) as f64 * x + p).cos())
                .sum();
            s.exp()
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    (raw.into_iter().map(|v| v / mean).collect(), coeffs)
}

pub fn synth_corpus_with(config: &CorpusConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let params = config.params;
    let fb = build_mel_filterbank(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // stand-in for a reference encoder: a fixed random projection of each
    // speaker's voice traits
    let n_traits = 6;
    let projection = Matrix::from_fn(config.control_dim, n_traits, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v / (n_traits as f64).sqrt()
    });
    let mut speakers = Vec::with_capacity(config.n_speakers);
    for _ in 0..config.n_speakers {
        let (envelope, coeffs) = smooth_envelope(&mut rng, params.n_mels);
        let base_f0 = rng.random_range(90.0..240.0);
        let energy_period = rng.random_range(6.0..20.0);
        let energy_depth = rng.random_range(0.1..0.5);
        let mut traits = vec![
            (base_f0 - 165.0) / 75.0,
            (energy_period - 13.0) / 7.0,
            (energy_depth - 0.3) / 0.2,
        ];
        traits.extend(coeffs.iter().take(n_traits - 3).map(|c| 2.0 * c));
        let embedding = projection
            .matvec(&traits)?
            .into_iter()
            .map(|v| (v + 0.1 * rng.random_range(-1.0..1.0)).tanh())
            .collect();
        speakers.push(Speaker {
            embedding: SpeakerEmbedding::new(embedding)?,
            envelope,
            base_f0,
            energy_period,
            energy_depth,
        });
    }

    // lexical tone: each voiced symbol scales the speaker's base pitch
    let tones: Vec<f64> = (0..config.n_symbols)
        .map(|_| rng.random_range(0.75..1.3))
        .collect();

    let mut utterances = Vec::with_capacity(config.n_utts);
    for u in 0..config.n_utts {
        let speaker = u % config.n_speakers;
        let spk = &speakers[speaker];
        let n_frames = rng.random_range(config.min_frames..=config.max_frames);

        let mut ids = Vec::new();
        let mut durations = Vec::new();
        let mut f0 = Vec::with_capacity(n_frames);
        let mut levels = Vec::with_capacity(n_frames);
        while f0.len() < n_frames {
            let id = rng.random_range(0..config.n_symbols);
            let voiced = config.is_voiced(id);
            let d = if voiced {
                rng.random_range(6..=16)
            } else {
                rng.random_range(3..=8)
            };
            let d = d.min(n_frames - f0.len());
            let (pitch, level) = if voiced {
                (
                    spk.base_f0 * tones[id] * rng.random_range(0.97..1.03),
                    rng.random_range(20.0..100.0),
                )
            } else {
                (0.0, rng.random_range(5.0..30.0))
            };
            ids.push(id);
            durations.push(d);
            f0.extend(std::iter::repeat_n(pitch, d));
            levels.extend(std::iter::repeat_n(level, d));
        }

        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let energy: Vec<f64> = levels
            .iter()
            .enumerate()
            .map(|(t, l)| {
                let w = std::f64::consts::TAU * t as f64 / spk.energy_period + phase;
                l * (1.0 + spk.energy_depth * w.sin())
            })
            .collect();

        let pitch = PitchContour::new(f0, params)?;
        let energy = EnergyContour::new(energy, params)?;
        let excitation = generate_excitation(&pitch, &energy, &fb, &ExcitationConfig::default())?;
        let target = Matrix::from_fn(n_frames, params.n_mels, |t, k| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            spk.envelope[k] * excitation.frame(t)[k] + config.noise * noise
        });
        utterances.push(Utterance {
            phonemes: PhonemeSequence::new(ids, durations)?,
            speaker,
            pitch,
            energy,
            excitation,
            target,
        });
    }

    Ok(SyntheticCorpus {
        config: config.clone(),
        seed,
        speakers,
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> CorpusConfig {
        CorpusConfig {
            n_speakers: 3,
            n_utts: 6,
            noise,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn alignment_invariants() {
        let c = synth_corpus_with(&small(0.05), 3).unwrap();
        assert_eq!(c.utterances.len(), 6);
        for u in &c.utterances {
            let n = u.phonemes.total_frames();
            assert!((40..=120).contains(&n));
            assert_eq!(u.target.rows(), n);
            assert_eq!(u.target.cols(), 80);
            assert_eq!(u.pitch.len(), n);
            assert_eq!(u.energy.len(), n);
            assert_eq!(u.excitation.n_frames(), n);
            for (t, &k) in u.phonemes.frame_symbols().iter().enumerate() {
                let voiced = c.config.is_voiced(u.phonemes.ids()[k]);
                assert_eq!(u.pitch.values()[t] > 0.0, voiced);
            }
        }
        for s in &c.speakers {
            assert!(s.envelope.iter().all(|&v| v > 0.0));
            assert!((s.envelope.iter().sum::<f64>() / 80.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_corpus_with(&small(0.05), 9).unwrap();
        let b = synth_corpus_with(&small(0.05), 9).unwrap();
        let c = synth_corpus_with(&small(0.05), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.utterances[0].target, c.utterances[0].target);
    }

    #[test]
    fn noiseless_target_is_multiplicative() {
        let c = synth_corpus_with(&small(0.0), 4).unwrap();
        for u in &c.utterances {
            assert_eq!(u.target, c.clean_target(u));
        }
    }

    #[test]
    fn degenerate_sizes() {
        let mut cfg = small(0.05);
        cfg.n_speakers = 1;
        assert!(matches!(synth_corpus_with(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = small(0.05);
        cfg.n_utts = 0;
        assert!(matches!(synth_corpus_with(&cfg, 0), Err(Error::Config(_))));
        assert!(synth_corpus_generate(2, 2, 0, FrameParams::default()).is_ok());
    }
}
