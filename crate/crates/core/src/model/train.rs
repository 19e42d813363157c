use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{SyntheticCorpus, Utterance};
use super::decoder::{decoder_backward, decoder_forward, DecoderOutput, DecoderParams, ModelDims, Variant};
use super::length_regulate;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{adam_update, AdamConfig, AdamState, Parameters};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub control_dim: usize,
    pub symbol_dim: usize,
    pub prenet_dim: usize,
    pub lr: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling per update; 0 disables clipping.
    pub clip: f64,
    /// Per-mel-channel weights of the training loss; empty means uniform.
    /// Reported losses are always the unweighted MSE.
    pub loss_weights: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let d = ModelDims::default();
        TrainConfig {
            variant: Variant::CglstmExcitation,
            hidden: d.hidden,
            control_dim: d.control_dim,
            symbol_dim: d.symbol_dim,
            prenet_dim: d.prenet_dim,
            lr: 8e-3,
            lr_decay: 0.94,
            epochs: 40,
            seed: 1,
            clip: 1.0,
            loss_weights: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn dims_for(&self, corpus: &SyntheticCorpus) -> Result<ModelDims> {
        let c = &corpus.config;
        if self.control_dim != c.control_dim {
            return Err(Error::Config(format!(
                "control_dim {} does not match the corpus speaker embeddings ({})",
                self.control_dim, c.control_dim
            )));
        }
        if !self.loss_weights.is_empty() && self.loss_weights.len() != c.params.n_mels {
            return Err(Error::Config(format!(
                "{} loss weights for {} mel channels",
                self.loss_weights.len(),
                c.params.n_mels
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if !(self.clip >= 0.0) {
            return Err(Error::Config(format!("clip must be non-negative, got {}", self.clip)));
        }
        let dims = ModelDims {
            n_symbols: c.n_symbols,
            n_speakers: c.n_speakers,
            symbol_dim: self.symbol_dim,
            control_dim: self.control_dim,
            hidden: self.hidden,
            n_mels: c.params.n_mels,
            prenet_dim: self.prenet_dim,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn init_params(&self, corpus: &SyntheticCorpus) -> Result<DecoderParams> {
        let dims = self.dims_for(corpus)?;
        let table: Vec<_> = corpus.speakers.iter().map(|s| s.embedding.clone()).collect();
        DecoderParams::init(self.variant, dims, Some(&table), self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub variant: Variant,
    pub seed: u64,
    /// Corpus MSE after each epoch; entry 0 is the loss at initialization.
    pub losses: Vec<f64>,
    pub param_count: usize,
    pub noise_floor: f64,
    pub params: DecoderParams,
}

impl TrainReport {
    pub fn final_mse(&self) -> f64 {
        *self.losses.last().expect("report holds the initial loss")
    }

    pub fn csv_rows(&self, out: &mut String) {
        for (epoch, mse) in self.losses.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.variant.tag(), epoch, mse);
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("variant,epoch,mse\n");
        self.csv_rows(&mut out);
        out
    }
}

pub fn mse(prediction: &Matrix, target: &Matrix) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape(format!("{:?}", target.shape()), format!("{:?}", prediction.shape())));
    }
    let n = prediction.as_slice().len();
    if n == 0 {
        return Err(Error::EmptyInput("no frames to score".into()));
    }
    let sum: f64 = prediction
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

/// Teacher-forced decoder pass over one corpus utterance.
pub fn utterance_forward(params: &DecoderParams, utt: &Utterance) -> Result<(Vec<Vec<f64>>, DecoderOutput)> {
    let feats = params.symbol_features(utt.phonemes.ids())?;
    let frames = length_regulate(&utt.phonemes, &feats)?;
    let speaker = params.speaker(utt.speaker)?;
    let exc = params.variant.uses_excitation().then_some(&utt.excitation);
    let out = decoder_forward(params, &frames, exc, &speaker, &utt.target)?;
    Ok((frames, out))
}

/// Weighted per-utterance MSE and its gradient with respect to every block.
fn utterance_gradient(params: &DecoderParams, utt: &Utterance, weights: &[f64]) -> Result<(f64, DecoderParams)> {
    let (_, out) = utterance_forward(params, utt)?;
    let pred = &out.prediction;
    let n = pred.as_slice().len() as f64;
    let cols = pred.cols();
    let mut loss = 0.0;
    let mut dpred = Matrix::zeros(pred.rows(), cols);
    for (k, ((d, p), t)) in dpred
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(utt.target.as_slice())
        .enumerate()
    {
        let w = if weights.is_empty() { 1.0 } else { weights[k % cols] };
        let e = p - t;
        loss += w * e * e / n;
        *d = 2.0 * w * e / n;
    }
    let g = decoder_backward(params, &out.tape, &dpred)?;
    let mut grad = g.params;
    let sd = params.dims.symbol_dim;
    for (&k, dc) in utt.phonemes.frame_symbols().iter().zip(&g.content) {
        let id = utt.phonemes.ids()[k];
        for (a, b) in grad.symbols.table.row_mut(id).iter_mut().zip(&dc[..sd]) {
            *a += b;
        }
    }
    for (a, b) in grad.speakers.table.row_mut(utt.speaker).iter_mut().zip(&g.speaker) {
        *a += b;
    }
    Ok((loss, grad))
}

/// Unweighted MSE over every frame and channel of the corpus.
fn evaluate(params: &DecoderParams, corpus: &SyntheticCorpus) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for utt in &corpus.utterances {
        let (_, out) = utterance_forward(params, utt)?;
        let n = out.prediction.as_slice().len();
        sum += mse(&out.prediction, &utt.target)? * n as f64;
        count += n;
    }
    Ok(sum / count as f64)
}

fn clip_norm<P: Parameters>(grad: &mut P, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for b in grad.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Per-utterance Adam updates in a seeded shuffled order; the corpus MSE
/// is recorded after every epoch.
pub fn train(corpus: &SyntheticCorpus, config: &TrainConfig) -> Result<TrainReport> {
    if corpus.utterances.is_empty() {
        return Err(Error::EmptyInput("corpus has no utterances".into()));
    }
    let mut params = config.init_params(corpus)?;
    let mut adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(6);

    let diverged = |epoch: usize, what: String| Error::Training { epoch, detail: what };
    let initial = evaluate(&params, corpus)?;
    if !initial.is_finite() {
        return Err(diverged(0, format!("initial loss is {initial}")));
    }
    let mut losses = vec![initial];
    let mut order: Vec<usize> = (0..corpus.utterances.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (loss, mut grad) = utterance_gradient(&params, &corpus.utterances[i], &config.loss_weights)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, format!("loss {loss} on utterance {i}")));
            }
            clip_norm(&mut grad, config.clip);
            adam_update(&mut params, &grad, &mut state, &adam)?;
        }
        let l = evaluate(&params, corpus)?;
        if !l.is_finite() {
            return Err(diverged(epoch, format!("corpus loss is {l}")));
        }
        losses.push(l);
        adam.lr *= config.lr_decay;
    }
    Ok(TrainReport {
        variant: config.variant,
        seed: config.seed,
        losses,
        param_count: params.param_count(),
        noise_floor: corpus.noise_floor(),
        params,
    })
}

/// All four variants trained from the same seed and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub seed: u64,
    pub epochs: usize,
    pub reports: Vec<TrainReport>,
}

impl Comparison {
    pub fn report(&self, v: Variant) -> Option<&TrainReport> {
        self.reports.iter().find(|r| r.variant == v)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("variant,epoch,mse\n");
        for r in &self.reports {
            r.csv_rows(&mut out);
        }
        out
    }

    /// Flat `key = value` summary of final losses and parameter counts.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        if let Some(r) = self.reports.first() {
            let _ = writeln!(out, "noise_floor = {}", r.noise_floor);
        }
        for r in &self.reports {
            let tag = r.variant.tag();
            let _ = writeln!(out, "{tag}.system = {}", r.variant.system());
            let _ = writeln!(out, "{tag}.param_count = {}", r.param_count);
            let _ = writeln!(out, "{tag}.initial_mse = {}", r.losses[0]);
            let _ = writeln!(out, "{tag}.final_mse = {}", r.final_mse());
        }
        out
    }
}

/// Trains every variant on its own thread from the same corpus and seed.
pub fn compare_systems(corpus: &SyntheticCorpus, base: &TrainConfig) -> Result<Comparison> {
    let results: Vec<Result<TrainReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = Variant::ALL
            .into_iter()
            .map(|variant| {
                let config = TrainConfig {
                    variant,
                    ..base.clone()
                };
                scope.spawn(move || train(corpus, &config))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    });
    Ok(Comparison {
        seed: base.seed,
        epochs: base.epochs,
        reports: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Parameter count of every variant for the given sizes.
pub fn param_table(dims: ModelDims) -> Result<Vec<(Variant, usize)>> {
    Variant::ALL
        .into_iter()
        .map(|v| Ok((v, DecoderParams::init(v, dims, None, 0)?.param_count())))
        .collect()
}
