//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::Command;
use std::time::{Duration, Instant};

use cgexcite::dsp::{build_mel_filterbank, FrameParams};
use cgexcite::excitation::{
    excitation_linear_frame, generate_excitation, harmonic_bins, harmonic_count, ExcitationConfig,
};
use cgexcite::features::{extract_pitch, AudioClip, EnergyContour, PitchConfig, PitchContour};
use cgexcite::model::{compare_systems, param_table, synth_corpus_with, CorpusConfig, ModelDims, TrainConfig, Variant};
use cgexcite::nn::gradcheck::{gradcheck, CellKind, GradcheckConfig};
use cgexcite::nn::{cglstm_step, lstm_step, CellState, CglstmParams, LstmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_EPS: f64 = 1e-5;
const REDUCTION_TOL: f64 = 1e-12;
const CONSERVATION_TOL: f64 = 1e-9;
const LINEARITY_TOL: f64 = 1e-12;
const PARAM_SPREAD: f64 = 0.15;
const PITCH_TOL_HZ: f64 = 2.0;
const NOISE_UNVOICED: f64 = 0.90;
const EXPERIMENT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0f64;
    let mut all = true;
    for seed in 1..=5 {
        for cell in [CellKind::Lstm, CellKind::Cglstm] {
            let report = gradcheck(&GradcheckConfig {
                cell,
                hidden: 4,
                input: 3,
                control: 2,
                seq_len: 5,
                seed,
                eps: GRADCHECK_EPS,
                tolerance: GRADCHECK_TOL,
                ..GradcheckConfig::default()
            });
            match report {
                Ok(r) => {
                    worst = worst.max(r.max_rel_err());
                    all &= r.passed();
                }
                Err(e) => return outcome(false, format!("seed {seed}: {e}")),
            }
        }
    }
    outcome(all, format!("max rel err {worst:.2e} over LSTM and CGLSTM, seeds 1..5"))
}

fn lstm_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (h, i, c) = (rng.random_range(1..9), rng.random_range(1..7), rng.random_range(1..5));
        let lstm = LstmParams::init(h, i, &mut rng);
        let cg = CglstmParams::from_lstm(lstm.clone(), c);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-3.0..3.0)).collect() };
        let state = CellState { h: v(h), cell: v(h) };
        let (x, ctl) = (v(i), v(c));
        let a = lstm_step(&lstm, &state, &x).unwrap();
        let b = cglstm_step(&cg, &state, &x, &ctl).unwrap();
        for (p, q) in a.h.iter().zip(&b.h).chain(a.cell.iter().zip(&b.cell)) {
            worst = worst.max((p - q).abs());
        }
    }
    outcome(worst <= REDUCTION_TOL, format!("max |diff| {worst:.1e} over 1000 triples"))
}

fn energy_conservation() -> Outcome {
    let p = FrameParams::default();
    let cfg = ExcitationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut voiced = 0;
    for _ in 0..1000 {
        let f0 = if rng.random_bool(0.6) { rng.random_range(40.0..8000.0) } else { 0.0 };
        let e = rng.random_range(1e-3..1e4);
        let frame = excitation_linear_frame(f0, e, &p, &cfg).unwrap();
        let total: f64 = frame.iter().sum();
        worst = worst.max((total - e).abs() / e);
        if f0 > 0.0 {
            voiced += 1;
            let expected: Vec<usize> = harmonic_bins(f0, &p).unwrap().iter().map(|&(b, _)| b).collect();
            let nonzero: Vec<usize> = (0..frame.len()).filter(|&b| frame[b] != 0.0).collect();
            if nonzero != expected {
                return outcome(false, format!("f0 {f0}: non-zero bins differ from the harmonic set"));
            }
        } else if frame.contains(&0.0) {
            return outcome(false, "unvoiced frame has an empty bin");
        }
    }
    outcome(
        worst <= CONSERVATION_TOL,
        format!("max rel err {worst:.1e}, {voiced} voiced / {} unvoiced frames", 1000 - voiced),
    )
}

fn harmonic_enumeration() -> Outcome {
    let p = FrameParams::default();
    let counts = [100.0, 7999.0, 8000.0, 8001.0].map(|f| harmonic_count(f, &p));
    let above_rejected = excitation_linear_frame(8001.0, 1.0, &p, &ExcitationConfig::default()).is_err();
    outcome(
        counts == [80, 1, 1, 0] && above_rejected,
        format!("N_h(100, 7999, 8000, 8001) = {counts:?}, 8001 Hz rejected: {above_rejected}"),
    )
}

fn linearity() -> Outcome {
    let p = FrameParams::default();
    let fb = build_mel_filterbank(&p).unwrap();
    let cfg = ExcitationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let f0: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.7) { rng.random_range(60.0..500.0) } else { 0.0 })
            .collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..200.0)).collect();
        let s = rng.random_range(0.01..100.0);
        let pitch = PitchContour::new(f0, p).unwrap();
        let energy = EnergyContour::new(e, p).unwrap();
        let a = generate_excitation(&pitch, &energy, &fb, &cfg).unwrap();
        let b = generate_excitation(&pitch, &energy.scaled(s).unwrap(), &fb, &cfg).unwrap();
        for t in 0..n {
            for (x, y) in a.frame(t).iter().zip(b.frame(t)) {
                worst = worst.max((s * x - y).abs() / y.abs().max(1.0));
            }
        }
    }
    outcome(worst <= LINEARITY_TOL, format!("max rel err {worst:.1e} over 100 cases"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn trend() -> Outcome {
    let mut finals: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut floor = 0.0;
    for seed in EXPERIMENT_SEEDS {
        let corpus = match synth_corpus_with(&CorpusConfig::default(), seed) {
            Ok(c) => c,
            Err(e) => return outcome(false, e.to_string()),
        };
        floor = corpus.noise_floor();
        let base = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let cmp = match compare_systems(&corpus, &base) {
            Ok(c) => c,
            Err(e) => return outcome(false, e.to_string()),
        };
        for (k, v) in Variant::ALL.into_iter().enumerate() {
            finals[k].push(cmp.report(v).unwrap().final_mse());
        }
        let row: Vec<String> = Variant::ALL
            .into_iter()
            .map(|v| format!("{}={:.5}", v.system(), cmp.report(v).unwrap().final_mse()))
            .collect();
        println!("      seed {seed}: {}", row.join(" "));
    }
    let med: Vec<f64> = finals.into_iter().map(median).collect();
    let base = med[0];
    let passed = med[1..].iter().all(|&m| m < base) && med.iter().all(|&m| m > 0.9 * floor);
    outcome(
        passed,
        format!(
            "median final MSE Baseline {:.5}, System-1 {:.5}, System-2 {:.5}, System-3 {:.5} (noise floor {floor:.5})",
            med[0], med[1], med[2], med[3]
        ),
    )
}

fn param_balance() -> Outcome {
    let table = param_table(ModelDims::default()).unwrap();
    let counts: Vec<usize> = table.iter().map(|&(_, n)| n).collect();
    let max = *counts.iter().max().unwrap() as f64;
    let min = *counts.iter().min().unwrap() as f64;
    let spread = max / min - 1.0;
    let listing: Vec<String> = table.iter().map(|(v, n)| format!("{}={n}", v.system())).collect();
    outcome(spread <= PARAM_SPREAD, format!("{} (spread {:.1}%)", listing.join(" "), 100.0 * spread))
}

fn pitch_sanity() -> Outcome {
    let p = FrameParams::default();
    let cfg = PitchConfig::default();
    let tone: Vec<f64> = (0..16_000)
        .map(|i| 0.5 * (std::f64::consts::TAU * 200.0 * i as f64 / 16_000.0).sin())
        .collect();
    let pitch = extract_pitch(&AudioClip::new(tone, 16_000).unwrap(), &p, &cfg).unwrap();
    let interior = &pitch.values()[1..pitch.len() - 1];
    let worst = interior.iter().map(|f| (f - 200.0).abs()).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let noise: Vec<f64> = (0..16_000)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            (0.2 * v).clamp(-1.0, 1.0)
        })
        .collect();
    let np = extract_pitch(&AudioClip::new(noise, 16_000).unwrap(), &p, &cfg).unwrap();
    let unvoiced = 1.0 - np.voiced_fraction();
    outcome(
        worst <= PITCH_TOL_HZ && unvoiced >= NOISE_UNVOICED,
        format!("200 Hz tone max error {worst:.3} Hz; white noise {:.1}% unvoiced", 100.0 * unvoiced),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_cgexcite"))
            .args(["compare", "--seed", "9", "--epochs", "3", "--utts", "8", "--hidden", "16"])
            .arg("--out-dir")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(out.join("losses.csv")).map_err(|e| e.to_string())
    };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => outcome(a == b, format!("two compare runs, {} CSV bytes, identical: {}", a.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient-correctness", Duration::from_secs(10), gradient_correctness),
        ("lstm-reduction-identity", Duration::from_secs(1), lstm_reduction),
        ("excitation-energy-conservation", Duration::from_secs(1), energy_conservation),
        ("harmonic-enumeration", Duration::from_secs(1), harmonic_enumeration),
        ("excitation-linearity", Duration::from_secs(1), linearity),
        ("reconstruction-error-trend", Duration::from_secs(600), trend),
        ("parameter-balance", Duration::from_secs(1), param_balance),
        ("pitch-extractor-sanity", Duration::from_secs(5), pitch_sanity),
        ("compare-determinism", Duration::from_secs(60), determinism),
    ];
    let mut failures = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let passed = result.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "{} {name}: {} [{:.2} s, budget {} s{}]",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
