//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a flat `key = value` file whose
//! keys are long flag names. Values from the file are applied first, so flags
//! on the command line win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::dsp::{build_mel_filterbank, FrameParams};
use crate::error::{Error, Result};
use crate::excitation::{
    generate_excitation, generate_linear_excitation, ExcitationConfig, UnvoicedDivisor,
};
use crate::features::{
    extract_energy, extract_pitch, normalize_peak, read_contour, read_wav, trim_silence,
    write_contour_csv, EnergyContour, PitchConfig, PitchContour, DEFAULT_F0_MAX, DEFAULT_F0_MIN,
    DEFAULT_PEAK, DEFAULT_TRIM_DB, DEFAULT_VOICING_THRESHOLD,
};
use crate::fsutil::write_atomic;
use crate::linalg::Matrix;
use crate::model::{
    compare_systems, synth_corpus_with, train, Comparison, CorpusConfig, TrainConfig, Variant,
};
use crate::nn::checkpoint::save_checkpoint;
use crate::nn::gradcheck::{gradcheck, CellKind, GradcheckConfig, DEFAULT_EPS, DEFAULT_TOLERANCE};
use crate::nn::GateComposition;
use crate::xspc::Tensor;

#[derive(Debug, Parser)]
#[command(name = "cgexcite", version, about = "Excitation spectrograms and conditional gated LSTM decoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract pitch and energy contours from a PCM16 mono WAV file.
    Features(FeaturesArgs),
    /// Build a mel excitation spectrogram from pitch and energy contours.
    Excite(ExciteArgs),
    /// Export the mel filterbank matrix (n_bins x n_mels).
    Mkfb(MkfbArgs),
    /// Finite-difference check of the recurrent cell gradients.
    Gradcheck(GradcheckArgs),
    /// Train one decoder variant on the synthetic corpus.
    Train(TrainArgs),
    /// Train all four decoder variants and report their losses.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FrameArgs {
    /// Expected sample rate in Hz.
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
    /// Hop in samples [default: 12.5 ms at --rate]
    #[arg(long)]
    pub hop: Option<usize>,
    /// Window in samples [default: 50 ms at --rate]
    #[arg(long)]
    pub window: Option<usize>,
    /// FFT size [default: next power of two >= window]
    #[arg(long)]
    pub n_fft: Option<usize>,
    #[arg(long, default_value_t = 80)]
    pub n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    pub fmin: f64,
    /// Upper mel edge in Hz [default: Nyquist]
    #[arg(long)]
    pub fmax: Option<f64>,
}

impl FrameArgs {
    pub fn params(&self) -> Result<FrameParams> {
        let mut p = FrameParams::for_rate(self.rate)?;
        if let Some(hop) = self.hop {
            p.hop = hop;
        }
        if let Some(window) = self.window {
            p.window = window;
            if self.n_fft.is_none() {
                p.n_fft = window.next_power_of_two();
            }
        }
        if let Some(n_fft) = self.n_fft {
            p.n_fft = n_fft;
        }
        p.n_mels = self.n_mels;
        p.fmin = self.fmin;
        if let Some(fmax) = self.fmax {
            p.fmax = fmax;
        }
        p.validated()
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArg {
    /// Flat key = value file of flag defaults; command-line flags win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturesArgs {
    /// Input WAV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving pitch.xspc, energy.xspc, pitch.csv and energy.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long, default_value_t = DEFAULT_F0_MIN)]
    pub f0_min: f64,
    #[arg(long, default_value_t = DEFAULT_F0_MAX)]
    pub f0_max: f64,
    #[arg(long, default_value_t = DEFAULT_VOICING_THRESHOLD)]
    pub voicing_threshold: f64,
    /// Peak amplitude after normalization.
    #[arg(long, default_value_t = DEFAULT_PEAK)]
    pub peak: f64,
    /// Silence threshold relative to peak, in dB.
    #[arg(long, default_value_t = DEFAULT_TRIM_DB, allow_negative_numbers = true)]
    pub trim_db: f64,
    /// Skip silence trimming.
    #[arg(long)]
    pub no_trim: bool,
    /// Skip peak normalization.
    #[arg(long)]
    pub no_normalize: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args)]
pub struct ExciteArgs {
    /// Pitch contour (XSPC rank 1, or CSV when the name ends in .csv).
    #[arg(long)]
    pub pitch: PathBuf,
    /// Energy contour (XSPC rank 1, or CSV when the name ends in .csv).
    #[arg(long)]
    pub energy: PathBuf,
    /// Output mel excitation, frames x n_mels.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the linear excitation, frames x n_bins.
    #[arg(long, value_name = "PATH")]
    pub linear: Option<PathBuf>,
    /// Also write a log-compressed 8-bit PGM image, one row per frame.
    #[arg(long, value_name = "PATH")]
    pub pgm: Option<PathBuf>,
    /// Divide unvoiced energy by n_fft instead of n_bins.
    #[arg(long)]
    pub paper_literal_divisor: bool,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args)]
pub struct MkfbArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CellChoice {
    Lstm,
    Cglstm,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompositionChoice {
    Inside,
    Product,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = CellChoice::Both)]
    pub cell: CellChoice,
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub input: usize,
    #[arg(long, default_value_t = 2)]
    pub control: usize,
    #[arg(long, default_value_t = 5)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    /// Largest accepted relative error per block.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// How control and content pre-activations combine in the CGLSTM gates.
    #[arg(long, value_enum, default_value_t = CompositionChoice::Inside)]
    pub composition: CompositionChoice,
    #[arg(long, hide = true)]
    pub debug_inject_fault: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Seed for the corpus, initialization and shuffling.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub speakers: usize,
    #[arg(long, default_value_t = 40)]
    pub utts: usize,
    #[arg(long, default_value_t = 40)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 120)]
    pub max_frames: usize,
    /// Standard deviation of the additive target noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub control_dim: usize,
    #[arg(long, default_value_t = 15)]
    pub symbol_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub prenet_dim: usize,
    #[arg(long, default_value_t = 8e-3)]
    pub lr: f64,
    /// Learning-rate multiplier applied after every epoch.
    #[arg(long, default_value_t = 0.94)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    /// Global gradient-norm clip.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Output directory for losses.csv and manifest.txt; train also writes checkpoint/.
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl ExperimentArgs {
    fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            n_speakers: self.speakers,
            n_utts: self.utts,
            min_frames: self.min_frames,
            max_frames: self.max_frames,
            control_dim: self.control_dim,
            noise: self.noise,
            ..CorpusConfig::default()
        }
    }

    fn train_config(&self, variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            hidden: self.hidden,
            control_dim: self.control_dim,
            symbol_dim: self.symbol_dim,
            prenet_dim: self.prenet_dim,
            lr: self.lr,
            lr_decay: self.lr_decay,
            epochs: self.epochs,
            seed: self.seed,
            clip: self.clip,
            loss_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// lstm-affine-baseline, excitation-only, cglstm or cglstm+excitation.
    #[arg(long, default_value_t = Variant::CglstmExcitation)]
    pub variant: Variant,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub config: ConfigArg,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Features(_) => "features",
            Command::Excite(_) => "excite",
            Command::Mkfb(_) => "mkfb",
            Command::Gradcheck(_) => "gradcheck",
            Command::Train(_) => "train",
            Command::Compare(_) => "compare",
        }
    }

    fn config_path(&self) -> Option<&Path> {
        let c = match self {
            Command::Features(a) => &a.config,
            Command::Excite(a) => &a.config,
            Command::Mkfb(a) => &a.config,
            Command::Gradcheck(a) => &a.config,
            Command::Train(a) => &a.config,
            Command::Compare(a) => &a.config,
        };
        c.config.as_deref()
    }
}

/// Parses a flat `key = value` file. `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (n, line) in text.lines().enumerate() {
        let start = offset;
        offset += line.len() + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            offset: start,
            detail: format!("line {}: expected key = value", n + 1),
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Parse {
                offset: start,
                detail: format!("line {}: invalid key {key:?}", n + 1),
            });
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_to_args(entries: &[(String, String)]) -> Vec<OsString> {
    entries
        .iter()
        .filter(|(_, v)| v != "false")
        .map(|(k, v)| {
            if v == "true" {
                format!("--{k}").into()
            } else {
                format!("--{k}={v}").into()
            }
        })
        .collect()
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

fn parse_args(args: &[OsString]) -> std::result::Result<Cli, clap::Error> {
    let matches = command().try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

enum Failure {
    Clap(clap::Error),
    App(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::App(e)
    }
}

/// Parses `args` (program name first), applying any `--config` file.
fn load(args: Vec<OsString>) -> std::result::Result<Cli, Failure> {
    let cli = parse_args(&args).map_err(Failure::Clap)?;
    let Some(path) = cli.command.config_path() else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let injected = config_to_args(&parse_config(&text)?);
    let name = cli.command.name();
    let at = args
        .iter()
        .position(|a| a.to_str() == Some(name))
        .map_or(1, |i| i + 1);
    let mut merged = args[..at].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[at..]);
    parse_args(&merged).map_err(Failure::Clap)
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let result = load(args).and_then(|cli| execute(&cli).map_err(Failure::App));
    match result {
        Ok(code) => code,
        Err(Failure::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(Failure::App(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command. `Ok` carries the exit code: 0, or 1 when a check failed.
pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Features(a) => cmd_features(a),
        Command::Excite(a) => cmd_excite(a),
        Command::Mkfb(a) => cmd_mkfb(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn not_found(path: &Path, what: &str) -> Error {
    Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::NotFound, what.to_string()),
    )
}

fn check_input(path: &Path) -> Result<()> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_file() {
        return Err(not_found(path, "not a regular file"));
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    if path.is_dir() {
        return Err(not_found(path, "output path is a directory"));
    }
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => return Ok(()),
    };
    if !parent.is_dir() {
        return Err(not_found(path, "parent directory does not exist"));
    }
    Ok(())
}

fn prepare_dir(path: &Path) -> Result<()> {
    if path.exists() && !path.is_dir() {
        return Err(not_found(path, "not a directory"));
    }
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_features(a: &FeaturesArgs) -> Result<i32> {
    check_input(&a.input)?;
    let params = a.frame.params()?;
    let pitch_cfg = PitchConfig {
        f0_min: a.f0_min,
        f0_max: a.f0_max,
        voicing_threshold: a.voicing_threshold,
    };
    prepare_dir(&a.out_dir)?;

    let mut clip = read_wav(&a.input)?;
    if clip.sample_rate() != params.sample_rate {
        return Err(Error::UnsupportedFormat {
            field: "sample_rate".into(),
            detail: format!(
                "file is {} Hz but {} Hz is configured; pass --rate {} to accept it",
                clip.sample_rate(),
                params.sample_rate,
                clip.sample_rate()
            ),
        });
    }
    if !a.no_normalize {
        clip = normalize_peak(&clip, a.peak)?;
    }
    if !a.no_trim {
        clip = trim_silence(&clip, a.trim_db)?;
    }
    let pitch = extract_pitch(&clip, &params, &pitch_cfg)?;
    let energy = extract_energy(&clip, &params)?;

    let dir = &a.out_dir;
    Tensor::vector(pitch.values()).write(dir.join("pitch.xspc"))?;
    Tensor::vector(energy.values()).write(dir.join("energy.xspc"))?;
    write_contour_csv(dir.join("pitch.csv"), pitch.values())?;
    write_contour_csv(dir.join("energy.csv"), energy.values())?;
    println!(
        "frames = {}\nvoiced_fraction = {:.4}",
        pitch.len(),
        pitch.voiced_fraction()
    );
    Ok(0)
}

/// Binary PGM (P5) of `ln(1 + x)` scaled to 0..=255, one row per matrix row.
pub fn pgm_bytes(m: &Matrix) -> Vec<u8> {
    let logs: Vec<f64> = m.as_slice().iter().map(|&x| x.max(0.0).ln_1p()).collect();
    let max = logs.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", m.cols(), m.rows()).into_bytes();
    out.extend(logs.iter().map(|&v| {
        if max > 0.0 {
            (255.0 * v / max).round() as u8
        } else {
            0
        }
    }));
    out
}

fn cmd_excite(a: &ExciteArgs) -> Result<i32> {
    check_input(&a.pitch)?;
    check_input(&a.energy)?;
    check_output(&a.out)?;
    for p in a.linear.iter().chain(&a.pgm) {
        check_output(p)?;
    }
    let params = a.frame.params()?;
    let fb = build_mel_filterbank(&params)?;

    let f0 = read_contour(&a.pitch)?;
    let e = read_contour(&a.energy)?;
    if f0.len() != e.len() {
        return Err(Error::shape(
            "pitch and energy contours with equal frame counts",
            format!("pitch has {} frames, energy has {} frames", f0.len(), e.len()),
        ));
    }
    let pitch = PitchContour::new(f0, params)?;
    let energy = EnergyContour::new(e, params)?;
    let config = ExcitationConfig {
        unvoiced_divisor: if a.paper_literal_divisor {
            UnvoicedDivisor::Fft
        } else {
            UnvoicedDivisor::Bins
        },
    };
    let mel = generate_excitation(&pitch, &energy, &fb, &config)?;
    let linear = match &a.linear {
        Some(_) => Some(generate_linear_excitation(&pitch, &energy, &params, &config)?),
        None => None,
    };

    let mel_data = mel.mel().data();
    Tensor::from_matrix(mel_data).write(&a.out)?;
    if let (Some(path), Some(lin)) = (&a.linear, &linear) {
        Tensor::from_matrix(lin.data()).write(path)?;
    }
    if let Some(path) = &a.pgm {
        write_atomic(path, &pgm_bytes(mel_data))?;
    }
    println!(
        "frames = {}\nn_mels = {}\nvoiced_fraction = {:.4}",
        mel.n_frames(),
        fb.n_mels(),
        pitch.voiced_fraction()
    );
    Ok(0)
}

fn cmd_mkfb(a: &MkfbArgs) -> Result<i32> {
    check_output(&a.out)?;
    let fb = build_mel_filterbank(&a.frame.params()?)?;
    Tensor::from_matrix(fb.weights()).write(&a.out)?;
    println!("shape = {} x {}", fb.n_bins(), fb.n_mels());
    Ok(0)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let cells: &[CellKind] = match a.cell {
        CellChoice::Lstm => &[CellKind::Lstm],
        CellChoice::Cglstm => &[CellKind::Cglstm],
        CellChoice::Both => &[CellKind::Lstm, CellKind::Cglstm],
    };
    let mut all_passed = true;
    for &cell in cells {
        let report = gradcheck(&GradcheckConfig {
            cell,
            hidden: a.hidden,
            input: a.input,
            control: a.control,
            seq_len: a.seq_len,
            seed: a.seed,
            eps: a.eps,
            tolerance: a.tolerance,
            composition: match a.composition {
                CompositionChoice::Inside => GateComposition::Inside,
                CompositionChoice::Product => GateComposition::Product,
            },
            inject_fault: a.debug_inject_fault,
        })?;
        let name = match cell {
            CellKind::Lstm => "lstm",
            CellKind::Cglstm => "cglstm",
        };
        println!("cell = {name}\n{}", report.table());
        all_passed &= report.passed();
    }
    println!("{}", if all_passed { "PASS" } else { "FAIL" });
    Ok(if all_passed { 0 } else { 1 })
}

fn summary(cmp: &Comparison) -> String {
    let mut out = format!(
        "{:<22} {:<9} {:>8} {:>12} {:>12}\n",
        "variant", "system", "params", "initial_mse", "final_mse"
    );
    for r in &cmp.reports {
        let _ = writeln!(
            out,
            "{:<22} {:<9} {:>8} {:>12.6} {:>12.6}",
            r.variant.tag(),
            r.variant.system(),
            r.param_count,
            r.losses[0],
            r.final_mse()
        );
    }
    out
}

fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<()> {
    write_atomic(&dir.join("losses.csv"), cmp.csv().as_bytes())?;
    write_atomic(&dir.join("manifest.txt"), cmp.manifest().as_bytes())
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let ex = &a.experiment;
    let config = ex.train_config(a.variant);
    let corpus_cfg = ex.corpus_config();
    corpus_cfg.validate()?;
    prepare_dir(&ex.out_dir)?;
    let corpus = synth_corpus_with(&corpus_cfg, ex.seed)?;
    let report = train(&corpus, &config)?;
    save_checkpoint(ex.out_dir.join("checkpoint"), &report.params)?;
    let cmp = Comparison {
        seed: ex.seed,
        epochs: ex.epochs,
        reports: vec![report],
    };
    write_comparison(&ex.out_dir, &cmp)?;
    print!("{}", summary(&cmp));
    Ok(0)
}

fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let ex = &a.experiment;
    let corpus_cfg = ex.corpus_config();
    corpus_cfg.validate()?;
    prepare_dir(&ex.out_dir)?;
    let corpus = synth_corpus_with(&corpus_cfg, ex.seed)?;
    let cmp = compare_systems(&corpus, &ex.train_config(Variant::CglstmExcitation))?;
    write_comparison(&ex.out_dir, &cmp)?;
    print!("{}", summary(&cmp));
    Ok(0)
}
