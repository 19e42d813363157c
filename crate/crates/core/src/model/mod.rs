//! Desk-scale multi-speaker decoder: length regulation, a synthetic
//! source-filter corpus, and an autoregressive recurrent decoder trained
//! under four conditioning variants.

mod corpus;
mod decoder;
mod train;

pub use corpus::{synth_corpus_generate, synth_corpus_with, CorpusConfig, Speaker, SyntheticCorpus, Utterance};
pub use decoder::{
    decoder_backward, decoder_forward, DecoderCell, DecoderGrads, DecoderOutput, DecoderParams,
    DecoderTape, ModelDims, Variant,
};
pub use train::{
    compare_systems, mse, param_table, train, utterance_forward, Comparison, TrainConfig, TrainReport,
};

use crate::error::{Error, Result};

/// Symbol ids with per-symbol frame counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSequence {
    ids: Vec<usize>,
    durations: Vec<usize>,
}

impl PhonemeSequence {
    pub fn new(ids: Vec<usize>, durations: Vec<usize>) -> Result<Self> {
        if ids.len() != durations.len() {
            return Err(Error::shape(
                format!("{} durations", ids.len()),
                format!("{}", durations.len()),
            ));
        }
        if let Some(k) = durations.iter().position(|&d| d == 0) {
            return Err(Error::Domain(format!("duration of symbol {k} is 0")));
        }
        Ok(PhonemeSequence { ids, durations })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn durations(&self) -> &[usize] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.durations.iter().sum()
    }

    /// Symbol index owning each frame.
    pub fn frame_symbols(&self) -> Vec<usize> {
        self.durations
            .iter()
            .enumerate()
            .flat_map(|(k, &d)| std::iter::repeat_n(k, d))
            .collect()
    }
}

/// Fixed-size finite speaker vector used as control input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding(Vec<f64>);

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("speaker embedding has no entries".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("speaker embedding entry {k} is {}", values[k])));
        }
        Ok(SpeakerEmbedding(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Repeats each symbol's feature vector over its duration and appends the
/// in-symbol position `(t + 0.5) / d`.
pub fn length_regulate(seq: &PhonemeSequence, symbol_features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if symbol_features.len() != seq.len() {
        return Err(Error::shape(
            format!("{} symbol feature vectors", seq.len()),
            format!("{}", symbol_features.len()),
        ));
    }
    let mut out = Vec::with_capacity(seq.total_frames());
    for (feat, &d) in symbol_features.iter().zip(&seq.durations) {
        for t in 0..d {
            let mut frame = Vec::with_capacity(feat.len() + 1);
            frame.extend_from_slice(feat);
            frame.push((t as f64 + 0.5) / d as f64);
            out.push(frame);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_within_symbols() {
        let seq = PhonemeSequence::new(vec![4, 9], vec![2, 3]).unwrap();
        let frames = length_regulate(&seq, &[vec![1.0], vec![2.0]]).unwrap();
        let pos: Vec<f64> = frames.iter().map(|f| f[1]).collect();
        let expected = [0.25, 0.75, 1.0 / 6.0, 0.5, 5.0 / 6.0];
        assert_eq!(frames.len(), 5);
        for (p, e) in pos.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        let feats: Vec<f64> = frames.iter().map(|f| f[0]).collect();
        assert_eq!(feats, [1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(seq.frame_symbols(), [0, 0, 1, 1, 1]);
    }

    #[test]
    fn unit_durations_pass_through() {
        let seq = PhonemeSequence::new(vec![0, 1, 2], vec![1, 1, 1]).unwrap();
        let feats = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]];
        let frames = length_regulate(&seq, &feats).unwrap();
        for (f, src) in frames.iter().zip(&feats) {
            assert_eq!(&f[..2], src.as_slice());
            assert_eq!(f[2], 0.5);
        }
    }

    #[test]
    fn invalid_sequences() {
        assert!(PhonemeSequence::new(vec![1], vec![1, 2]).is_err());
        assert!(PhonemeSequence::new(vec![1, 2], vec![1, 0]).is_err());
        let seq = PhonemeSequence::new(vec![1, 2], vec![1, 1]).unwrap();
        assert!(matches!(length_regulate(&seq, &[vec![0.0]]), Err(Error::Shape { .. })));
        assert!(SpeakerEmbedding::new(vec![0.0, f64::NAN]).is_err());
    }
}
