use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::excitation::ExcitationSpectrogram;
use crate::linalg::Matrix;
use crate::nn::{
    affine_condition, sequence_backward, sequence_forward, AffineParams, BlockInfo, CellState,
    CglstmParams, Control, Dense, Embedding, GradientTape, LstmParams, Parameters, Role,
};

/// Decoder conditioning variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// LSTM decoder, speaker applied to content by an affine layer.
    LstmAffineBaseline,
    /// Baseline plus the excitation spectrogram at the decoder input.
    ExcitationOnly,
    /// Conditional gated LSTM with the speaker as control input.
    Cglstm,
    CglstmExcitation,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::LstmAffineBaseline,
        Variant::ExcitationOnly,
        Variant::Cglstm,
        Variant::CglstmExcitation,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::LstmAffineBaseline => "lstm-affine-baseline",
            Variant::ExcitationOnly => "excitation-only",
            Variant::Cglstm => "cglstm",
            Variant::CglstmExcitation => "cglstm+excitation",
        }
    }

    /// Name of the matching system in the four-system comparison.
    pub fn system(self) -> &'static str {
        match self {
            Variant::LstmAffineBaseline => "Baseline",
            Variant::ExcitationOnly => "System-1",
            Variant::Cglstm => "System-2",
            Variant::CglstmExcitation => "System-3",
        }
    }

    pub fn uses_excitation(self) -> bool {
        matches!(self, Variant::ExcitationOnly | Variant::CglstmExcitation)
    }

    pub fn uses_cglstm(self) -> bool {
        matches!(self, Variant::Cglstm | Variant::CglstmExcitation)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s || v.system().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let tags: Vec<&str> = Variant::ALL.iter().map(|v| v.tag()).collect();
                Error::Config(format!("unknown variant {s:?}; expected one of {}", tags.join(", ")))
            })
    }
}

/// Layer sizes shared by all variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_symbols: usize,
    pub n_speakers: usize,
    pub symbol_dim: usize,
    pub control_dim: usize,
    pub hidden: usize,
    pub n_mels: usize,
    /// Width of the linear projection applied to excitation frames.
    pub prenet_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            n_symbols: 24,
            n_speakers: 8,
            symbol_dim: 15,
            control_dim: 16,
            hidden: 64,
            n_mels: 80,
            prenet_dim: 8,
        }
    }
}

impl ModelDims {
    /// Symbol features plus the in-symbol position.
    pub fn content_dim(&self) -> usize {
        self.symbol_dim + 1
    }

    pub fn input_dim(&self, variant: Variant) -> usize {
        let exc = if variant.uses_excitation() { self.prenet_dim } else { 0 };
        self.content_dim() + exc + self.n_mels
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_symbols", self.n_symbols),
            ("n_speakers", self.n_speakers),
            ("symbol_dim", self.symbol_dim),
            ("control_dim", self.control_dim),
            ("hidden", self.hidden),
            ("n_mels", self.n_mels),
            ("prenet_dim", self.prenet_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderCell {
    Lstm(LstmParams),
    Cglstm(CglstmParams),
}

impl DecoderCell {
    fn hidden(&self) -> usize {
        match self {
            DecoderCell::Lstm(p) => p.hidden(),
            DecoderCell::Cglstm(p) => p.hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub variant: Variant,
    pub dims: ModelDims,
    pub symbols: Embedding,
    pub speakers: Embedding,
    pub affine: Option<AffineParams>,
    pub prenet: Option<Dense>,
    pub cell: DecoderCell,
    pub output: Dense,
}

const STREAM_SYMBOLS: u64 = 1;
const STREAM_SPEAKERS: u64 = 2;
const STREAM_CELL: u64 = 3;
const STREAM_PRENET: u64 = 4;
const STREAM_OUTPUT: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl DecoderParams {
    /// Seeded initialization. Every component draws from its own stream, so
    /// variants with equal shapes share identical content weights; the
    /// affine layer starts at identity and the CGLSTM at its LSTM
    /// reduction point.
    pub fn init(
        variant: Variant,
        dims: ModelDims,
        speakers: Option<&[SpeakerEmbedding]>,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        let symbols = Embedding::uniform(dims.n_symbols, dims.symbol_dim, 0.5, &mut stream(seed, STREAM_SYMBOLS));
        let speakers = match speakers {
            Some(table) => {
                if table.len() != dims.n_speakers {
                    return Err(Error::shape(
                        format!("{} speaker embeddings", dims.n_speakers),
                        format!("{}", table.len()),
                    ));
                }
                let mut m = Matrix::zeros(dims.n_speakers, dims.control_dim);
                for (s, e) in table.iter().enumerate() {
                    if e.dim() != dims.control_dim {
                        return Err(Error::shape(
                            format!("speaker embedding of length {}", dims.control_dim),
                            format!("length {} for speaker {s}", e.dim()),
                        ));
                    }
                    m.row_mut(s).copy_from_slice(e.as_slice());
                }
                Embedding { table: m }
            }
            None => Embedding::uniform(
                dims.n_speakers,
                dims.control_dim,
                1.0,
                &mut stream(seed, STREAM_SPEAKERS),
            ),
        };
        let content = LstmParams::init(dims.hidden, dims.input_dim(variant), &mut stream(seed, STREAM_CELL));
        let (affine, cell) = if variant.uses_cglstm() {
            (None, DecoderCell::Cglstm(CglstmParams::from_lstm(content, dims.control_dim)))
        } else {
            (
                Some(AffineParams::identity(dims.content_dim(), dims.control_dim)),
                DecoderCell::Lstm(content),
            )
        };
        let prenet = variant.uses_excitation().then(|| {
            Dense::uniform(dims.prenet_dim, dims.n_mels, 0.0, &mut stream(seed, STREAM_PRENET))
        });
        let output = Dense::uniform(dims.n_mels, dims.hidden, 0.0, &mut stream(seed, STREAM_OUTPUT));
        Ok(DecoderParams {
            variant,
            dims,
            symbols,
            speakers,
            affine,
            prenet,
            cell,
            output,
        })
    }

    pub fn symbol_features(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        ids.iter().map(|&id| self.symbols.lookup(id).map(<[f64]>::to_vec)).collect()
    }

    pub fn speaker(&self, id: usize) -> Result<SpeakerEmbedding> {
        SpeakerEmbedding::new(self.speakers.lookup(id)?.to_vec())
    }
}

fn embedding_block<'a>(name: &str, e: &'a Embedding, out: &mut Vec<(BlockInfo, &'a [f64])>) {
    out.push((
        BlockInfo {
            name: name.to_string(),
            shape: vec![e.table.rows(), e.table.cols()],
            role: Role::Embedding,
        },
        e.table.as_slice(),
    ));
}

impl Parameters for DecoderParams {
    fn blocks(&self) -> Vec<(BlockInfo, &[f64])> {
        let mut out = Vec::new();
        embedding_block("symbols", &self.symbols, &mut out);
        embedding_block("speakers", &self.speakers, &mut out);
        if let Some(a) = &self.affine {
            out.extend(a.blocks());
        }
        if let Some(p) = &self.prenet {
            p.push_blocks("w_pre", "b_pre", (Role::Weight, Role::Bias), &mut out);
        }
        match &self.cell {
            DecoderCell::Lstm(p) => out.extend(p.blocks()),
            DecoderCell::Cglstm(p) => out.extend(p.blocks()),
        }
        self.output.push_blocks("w_out", "b_out", (Role::Weight, Role::Bias), &mut out);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.symbols.table.as_mut_slice(), self.speakers.table.as_mut_slice()];
        if let Some(a) = &mut self.affine {
            out.extend(a.blocks_mut());
        }
        if let Some(p) = &mut self.prenet {
            p.push_blocks_mut(&mut out);
        }
        match &mut self.cell {
            DecoderCell::Lstm(p) => out.extend(p.blocks_mut()),
            DecoderCell::Cglstm(p) => out.extend(p.blocks_mut()),
        }
        self.output.push_blocks_mut(&mut out);
        out
    }
}

/// Activations of one teacher-forced decoder pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTape {
    content: Vec<Vec<f64>>,
    speaker: Vec<f64>,
    excitation: Vec<Vec<f64>>,
    seq: GradientTape,
    hidden: Vec<Vec<f64>>,
}

impl DecoderTape {
    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    pub fn sequence(&self) -> &GradientTape {
        &self.seq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    /// Frames × n_mels prediction.
    pub prediction: Matrix,
    pub tape: DecoderTape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrads {
    /// Gradients of every block except the embedding tables, which are
    /// reached through `content` and `speaker`.
    pub params: DecoderParams,
    pub content: Vec<Vec<f64>>,
    pub speaker: Vec<f64>,
}

/// Teacher-forced decoder pass. Frame `t` sees
/// `[content_t, prenet(excitation_t), teacher_{t-1}]` with a zero frame
/// before the first.
pub fn decoder_forward(
    params: &DecoderParams,
    frames: &[Vec<f64>],
    excitation: Option<&ExcitationSpectrogram>,
    speaker: &SpeakerEmbedding,
    teacher: &Matrix,
) -> Result<DecoderOutput> {
    let dims = &params.dims;
    if frames.is_empty() {
        return Err(Error::EmptyInput("utterance has no frames".into()));
    }
    if teacher.rows() != frames.len() || teacher.cols() != dims.n_mels {
        return Err(Error::shape(
            format!("teacher mel {}x{}", frames.len(), dims.n_mels),
            format!("{}x{}", teacher.rows(), teacher.cols()),
        ));
    }
    if let Some(t) = frames.iter().position(|f| f.len() != dims.content_dim()) {
        return Err(Error::shape(
            format!("content frames of length {}", dims.content_dim()),
            format!("length {} at frame {t}", frames[t].len()),
        ));
    }
    if speaker.dim() != dims.control_dim {
        return Err(Error::shape(
            format!("speaker embedding of length {}", dims.control_dim),
            format!("length {}", speaker.dim()),
        ));
    }
    let exc_frames: Vec<Vec<f64>> = match (&params.prenet, excitation) {
        (Some(_), None) => {
            return Err(Error::Config(format!(
                "variant {} needs an excitation spectrogram",
                params.variant
            )))
        }
        (None, Some(_)) => {
            return Err(Error::Config(format!(
                "variant {} takes no excitation spectrogram",
                params.variant
            )))
        }
        (None, None) => Vec::new(),
        (Some(_), Some(e)) => {
            if e.n_frames() != frames.len() || e.mel().n_bins() != dims.n_mels {
                return Err(Error::shape(
                    format!("excitation {}x{}", frames.len(), dims.n_mels),
                    format!("{}x{}", e.n_frames(), e.mel().n_bins()),
                ));
            }
            (0..e.n_frames()).map(|t| e.frame(t).to_vec()).collect()
        }
    };

    let c = speaker.as_slice();
    let mut inputs = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let mut z = Vec::with_capacity(dims.input_dim(params.variant));
        match &params.affine {
            Some(a) => z.extend(affine_condition(a, frame, c)?),
            None => z.extend_from_slice(frame),
        }
        if let Some(p) = &params.prenet {
            z.extend(p.forward(&exc_frames[t])?);
        }
        if t == 0 {
            z.extend(std::iter::repeat_n(0.0, dims.n_mels));
        } else {
            z.extend_from_slice(teacher.row(t - 1));
        }
        inputs.push(z);
    }

    let init = CellState::zeros(params.cell.hidden());
    let (hidden, seq) = match &params.cell {
        DecoderCell::Lstm(p) => sequence_forward(p, &inputs, Control::None, &init)?,
        DecoderCell::Cglstm(p) => sequence_forward(p, &inputs, Control::Fixed(c), &init)?,
    };

    let mut prediction = Matrix::zeros(frames.len(), dims.n_mels);
    for (t, h) in hidden.iter().enumerate() {
        params.output.forward_into(h, prediction.row_mut(t));
    }
    Ok(DecoderOutput {
        prediction,
        tape: DecoderTape {
            content: frames.to_vec(),
            speaker: c.to_vec(),
            excitation: exc_frames,
            seq,
            hidden,
        },
    })
}

/// Backward pass given `dL/dprediction`.
pub fn decoder_backward(params: &DecoderParams, tape: &DecoderTape, dpred: &Matrix) -> Result<DecoderGrads> {
    let dims = &params.dims;
    if dpred.rows() != tape.len() || dpred.cols() != dims.n_mels {
        return Err(Error::shape(
            format!("prediction gradient {}x{}", tape.len(), dims.n_mels),
            format!("{}x{}", dpred.rows(), dpred.cols()),
        ));
    }
    let mut grad = params.zeros_like();
    let hidden = params.cell.hidden();
    let mut dh = vec![vec![0.0; hidden]; tape.len()];
    for (t, (h, dht)) in tape.hidden.iter().zip(dh.iter_mut()).enumerate() {
        params.output.backward(h, dpred.row(t), &mut grad.output, Some(dht));
    }

    let (dinputs, mut dspeaker) = match (&params.cell, &mut grad.cell) {
        (DecoderCell::Lstm(p), DecoderCell::Lstm(g)) => {
            let sg = sequence_backward(p, &tape.seq, &dh)?;
            *g = sg.params;
            (sg.inputs, vec![0.0; dims.control_dim])
        }
        (DecoderCell::Cglstm(p), DecoderCell::Cglstm(g)) => {
            let mut sg = sequence_backward(p, &tape.seq, &dh)?;
            *g = sg.params;
            (sg.inputs, sg.control.swap_remove(0))
        }
        _ => unreachable!("gradient bundle mirrors the parameter bundle"),
    };

    let cd = dims.content_dim();
    let mut dcontent = Vec::with_capacity(tape.len());
    for (t, dz) in dinputs.iter().enumerate() {
        let dc_part = &dz[..cd];
        match (&params.affine, &mut grad.affine) {
            (Some(a), Some(ga)) => {
                let mut dx = vec![0.0; cd];
                a.backward(&tape.content[t], &tape.speaker, dc_part, ga, &mut dx, &mut dspeaker);
                dcontent.push(dx);
            }
            _ => dcontent.push(dc_part.to_vec()),
        }
        if let (Some(p), Some(gp)) = (&params.prenet, &mut grad.prenet) {
            let dp = &dz[cd..cd + dims.prenet_dim];
            p.backward(&tape.excitation[t], dp, gp, None);
        }
    }
    Ok(DecoderGrads {
        params: grad,
        content: dcontent,
        speaker: dspeaker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth_corpus_with;
    use crate::model::{length_regulate, CorpusConfig};
    use crate::nn::param_count;

    #[test]
    fn variant_tags_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
            assert_eq!(v.system().parse::<Variant>().unwrap(), v);
        }
        assert!("gru".parse::<Variant>().is_err());
    }

    #[test]
    fn block_names_are_unique() {
        for v in Variant::ALL {
            let p = DecoderParams::init(v, ModelDims::default(), None, 1).unwrap();
            let names: Vec<String> = p.blocks().into_iter().map(|(b, _)| b.name).collect();
            let mut dedup = names.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), names.len(), "{v}");
            assert_eq!(p.blocks().len(), p.clone().blocks_mut().len());
        }
    }

    #[test]
    fn closed_form_param_counts() {
        let d = ModelDims::default();
        let base = DecoderParams::init(Variant::LstmAffineBaseline, d, None, 1).unwrap();
        let cg = DecoderParams::init(Variant::Cglstm, d, None, 1).unwrap();
        let (h, c) = (d.hidden, d.control_dim);
        let affine = 2 * (d.content_dim() * c + d.content_dim());
        assert_eq!(param_count(&cg) + affine, param_count(&base) + 3 * (h * c + h));
    }

    #[test]
    fn shapes_and_errors() {
        let corpus = synth_corpus_with(
            &CorpusConfig {
                n_speakers: 2,
                n_utts: 2,
                ..CorpusConfig::default()
            },
            5,
        )
        .unwrap();
        let dims = ModelDims {
            n_speakers: 2,
            hidden: 8,
            ..ModelDims::default()
        };
        let u = &corpus.utterances[0];
        for v in Variant::ALL {
            let p = DecoderParams::init(v, dims, None, 2).unwrap();
            let frames = length_regulate(&u.phonemes, &p.symbol_features(u.phonemes.ids()).unwrap()).unwrap();
            let spk = p.speaker(u.speaker).unwrap();
            let exc = v.uses_excitation().then_some(&u.excitation);
            let out = decoder_forward(&p, &frames, exc, &spk, &u.target).unwrap();
            assert_eq!(out.prediction.shape(), u.target.shape());
            let again = decoder_forward(&p, &frames, exc, &spk, &u.target).unwrap();
            assert_eq!(out, again);
            if v.uses_excitation() {
                assert!(matches!(
                    decoder_forward(&p, &frames, None, &spk, &u.target),
                    Err(Error::Config(_))
                ));
            }
            assert!(matches!(
                decoder_forward(&p, &[], exc, &spk, &Matrix::zeros(0, 80)),
                Err(Error::EmptyInput(_))
            ));
        }
    }
}
