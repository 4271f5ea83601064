//! Acceptance suite: one PASS/FAIL line per criterion with the achieved
//! numbers. Runs without the libtest harness so the lines always reach stdout.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use qegm_cli::commands::{compare_command, generate_data, Context, BASELINE_NAME, QEGM_NAME};
use qegm_cli::config::ExperimentConfig;
use qegm_core::data::{label_rare_kappa_sigma, stratified_split, TailDirection, ThresholdMeta};
use qegm_core::metrics::{coverage_curve, kl_divergence_smoothed, rare_recall, tail_kl, wasserstein_1d, Predictor, RarityScore, TailRegion};
use qegm_core::model::{LossConfig, Mode, ModelConfig, QegmModel};
use qegm_core::neural::GaussianHead;
use qegm_core::randomness::{draw_noise, standard_normal, NoiseDraw, RandomnessSource};
use qegm_core::sim::{GateOp, Statevector};
use qegm_core::vqc::{amplitude_qubits, AnsatzSpec, Encoding, QuantumLayer, QuantumParams, Slot};
use qegm_core::{Entropy, MixtureSpec};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn uniform(src: &mut RandomnessSource) -> f64 {
    src.uniform().unwrap()
}

fn random_gate(n: usize, src: &mut RandomnessSource) -> GateOp {
    let q = (uniform(src) * n as f64) as usize % n;
    let a = (uniform(src) - 0.5) * 4.0 * PI;
    match (uniform(src) * 4.0) as usize {
        0 | 1 => GateOp::ry(q, a),
        2 => GateOp::rz(q, a),
        _ if n > 1 => GateOp::cnot(q, (q + 1 + (uniform(src) * (n - 1) as f64) as usize % (n - 1)) % n),
        _ => GateOp::rz(q, a),
    }
}

fn max_diff(a: &Statevector, b: &Statevector) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn simulator() -> Outcome {
    let mut src = RandomnessSource::seeded(101);
    let mut worst_norm: f64 = 0.0;
    let mut worst_inverse: f64 = 0.0;
    let mut worst_cnot: f64 = 0.0;
    for trial in 0..300 {
        let n = 1 + trial % 6;
        let mut s = Statevector::zero(n).unwrap();
        for _ in 0..100 {
            s.apply(&random_gate(n, &mut src)).unwrap();
            worst_norm = worst_norm.max((s.norm_sqr().sqrt() - 1.0).abs());
        }
        let q = trial % n;
        let a = (uniform(&mut src) - 0.5) * 8.0 * PI;
        for (f, b) in [(GateOp::ry(q, a), GateOp::ry(q, -a)), (GateOp::rz(q, a), GateOp::rz(q, -a))] {
            let back = s.clone().applied(&f).unwrap().applied(&b).unwrap();
            worst_inverse = worst_inverse.max(max_diff(&s, &back));
        }
        if n > 1 {
            let g = GateOp::cnot(q, (q + 1) % n);
            let back = s.clone().applied(&g).unwrap().applied(&g).unwrap();
            worst_cnot = worst_cnot.max(max_diff(&s, &back));
        }
    }
    ensure!(worst_norm < 1e-10, "norm deviation {worst_norm:e}");
    ensure!(worst_inverse < 1e-12, "rotation inverse deviation {worst_inverse:e}");
    ensure!(worst_cnot < 1e-12, "CNOT involution deviation {worst_cnot:e}");

    let shots = 100_000;
    let mut s = Statevector::zero(3).unwrap();
    for g in [GateOp::ry(0, 1.1), GateOp::ry(1, 2.3), GateOp::cnot(0, 2), GateOp::ry(2, 0.4)] {
        s.apply(&g).unwrap();
    }
    let probs = s.probabilities();
    let mut counts = vec![0usize; probs.len()];
    for d in s.sample_bitstrings(shots, &mut RandomnessSource::seeded(7)).unwrap() {
        counts[d.index] += 1;
    }
    let mut worst_z: f64 = 0.0;
    for (&p, &c) in probs.iter().zip(&counts) {
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        let dev = (c as f64 / shots as f64 - p).abs();
        if sigma > 0.0 {
            worst_z = worst_z.max(dev / sigma);
        } else {
            ensure!(c == 0, "zero-probability outcome sampled");
        }
    }
    ensure!(worst_z <= 4.0, "Born frequencies off by {worst_z:.2}σ");
    Ok(format!(
        "norm dev {worst_norm:.1e}, inverse dev {worst_inverse:.1e}, CNOT dev {worst_cnot:.1e}, Born max {worst_z:.2}σ"
    ))
}

fn readout(layer: &QuantumLayer, z: &[f64], p: &QuantumParams, up: &[f64]) -> f64 {
    layer.forward(z, p).unwrap().0.iter().zip(up).map(|(a, b)| a * b).sum()
}

fn parameter_shift() -> Outcome {
    let mut src = RandomnessSource::seeded(202);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for trial in 0..100 {
        let spec = AnsatzSpec {
            n_qubits: 1 + trial % 4,
            depth: 1 + (trial / 4) % 3,
            encoding: Encoding::FeatureMap,
        };
        let n = spec.n_qubits;
        let layer = QuantumLayer::new(spec).unwrap();
        let params = QuantumParams::random(&spec, PI, &mut src).unwrap();
        let z: Vec<f64> = (0..n).map(|_| 2.0 * uniform(&mut src) - 1.0).collect();
        let up: Vec<f64> = (0..n).map(|_| uniform(&mut src) - 0.5).collect();
        let grad = layer.parameter_shift_grad(&z, &params, &up).unwrap();
        for k in 0..spec.n_params() {
            let mut p = params.clone();
            p.angles_mut()[k] += h;
            let plus = readout(&layer, &z, &p, &up);
            p.angles_mut()[k] -= 2.0 * h;
            let minus = readout(&layer, &z, &p, &up);
            worst = worst.max((grad[k] - (plus - minus) / (2.0 * h)).abs());
        }
    }
    ensure!(worst <= 1e-6, "shift vs finite differences {worst:e}");

    let spec = AnsatzSpec {
        n_qubits: 1,
        depth: 1,
        encoding: Encoding::FeatureMap,
    };
    let layer = QuantumLayer::new(spec).unwrap();
    let mut analytic: f64 = 0.0;
    for theta in [0.0, 0.4, FRAC_PI_2, 2.5, -1.3] {
        let mut p = QuantumParams::zeros(&spec);
        p.set(0, 0, Slot::Y, theta);
        let g = layer.parameter_shift_grad(&[0.0], &p, &[1.0]).unwrap();
        analytic = analytic.max((g[p.index(0, 0, Slot::Y)] + theta.sin()).abs());
    }
    ensure!(analytic <= 1e-12, "−sin θ deviation {analytic:e}");
    Ok(format!("max |shift − FD| {worst:.2e} over 100 circuits, −sin θ dev {analytic:.1e}"))
}

fn end_to_end_gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    for mode in [Mode::Quantum, Mode::ClassicalBaseline] {
        let mut cfg = ModelConfig::new(2, 2, mode);
        cfg.depth = 1;
        cfg.hidden = vec![6];
        cfg.init_angle_scale = 1.0;
        let mut model = QegmModel::new(&cfg, &mut RandomnessSource::seeded(303)).unwrap();
        if mode == Mode::Quantum {
            ensure!(model.quantum().unwrap().layer.spec().n_qubits == 2, "expected two qubits");
        }
        let batch = vec![vec![0.2, -1.1], vec![-0.8, 0.5], vec![1.9, 1.4], vec![-2.2, 0.1]];
        let rare = [false, false, true, true];
        let mut src = RandomnessSource::seeded(4);
        let noise: Vec<NoiseDraw> = (0..4).map(|_| draw_noise(&mut src, 2, 0.3).unwrap()).collect();
        let loss = LossConfig {
            lambda_rec: 1.0,
            lambda_tail: 2.0,
        };
        let (_, grads) = model.loss_and_grads(&batch, &rare, &noise, &loss).unwrap();
        let analytic: Vec<f64> = grads.slices().concat();
        let h = 1e-5;
        let mut flat = 0;
        for (group, size) in model.parameter_sizes().into_iter().enumerate() {
            for k in 0..size {
                model.parameters_mut()[group][k] += h;
                let plus = model.loss_and_grads(&batch, &rare, &noise, &loss).unwrap().0.hybrid;
                model.parameters_mut()[group][k] -= 2.0 * h;
                let minus = model.loss_and_grads(&batch, &rare, &noise, &loss).unwrap().0.hybrid;
                model.parameters_mut()[group][k] += h;
                let fd = (plus - minus) / (2.0 * h);
                worst = worst.max((analytic[flat] - fd).abs() / fd.abs().max(1e-3));
                flat += 1;
            }
        }
    }
    ensure!(worst <= 1e-4, "relative gradient error {worst:e}");
    Ok(format!("max relative error {worst:.2e} (quantum and baseline)"))
}

struct Fixed {
    mean: f64,
    std: f64,
}

impl Predictor for Fixed {
    fn predict(&self, _x: &[f64]) -> qegm_core::Result<GaussianHead> {
        Ok(GaussianHead {
            mean: vec![self.mean],
            log_variance: vec![2.0 * self.std.ln()],
        })
    }
}

struct DropLastTwo;

impl Predictor for DropLastTwo {
    fn predict(&self, x: &[f64]) -> qegm_core::Result<GaussianHead> {
        Ok(GaussianHead {
            mean: vec![if x[0] >= 17.0 { 0.0 } else { x[0] }],
            log_variance: vec![0.0],
        })
    }
}

fn normals(n: usize, mean: f64, std: f64, seed: u64) -> Vec<f64> {
    let mut src = RandomnessSource::seeded(seed);
    (0..n).map(|_| mean + std * standard_normal(&mut src).unwrap()).collect()
}

fn metric_oracles() -> Outcome {
    let kl = kl_divergence_smoothed(&[0.75, 0.25], &[0.5, 0.5], 1e-9).unwrap();
    ensure!((kl - 0.13081).abs() <= 1e-5, "two-bin KL {kl}");
    let score = RarityScore::Mixture {
        mixture: MixtureSpec {
            weights: vec![1.0],
            means: vec![0.0],
            variances: vec![1.0],
        },
        mean: 0.0,
        std: 1.0,
    };
    let region = TailRegion {
        threshold: score.score(2.0),
        score,
        column: 0,
    };
    let real: Vec<Vec<f64>> = normals(20_000, 0.0, 1.0, 1).into_iter().map(|v| vec![v]).collect();
    let same = tail_kl(&real, &real, &region, 8, 1e-9).unwrap();
    ensure!(same.abs() <= 1e-12, "identical-input tail KL {same}");

    let held: Vec<Vec<f64>> = (0..16).map(|i| vec![3.0 + i as f64]).collect();
    let r = rare_recall(&held, &DropLastTwo, |x| x[0] > 2.5).unwrap();
    ensure!(
        r.true_positives == 14 && r.false_negatives == 2 && r.recall == 0.875,
        "recall {r:?}"
    );

    let alphas = [0.5, 0.8, 0.9, 0.95];
    let test: Vec<Vec<f64>> = normals(10_000, 0.4, 1.3, 2).into_iter().map(|v| vec![v]).collect();
    let curve = coverage_curve(&Fixed { mean: 0.4, std: 1.3 }, &test, &alphas).unwrap();
    let worst_cov = curve.iter().map(|p| (p.empirical - p.alpha).abs()).fold(0.0, f64::max);
    ensure!(worst_cov <= 0.02, "coverage deviation {worst_cov}");

    let w = wasserstein_1d(&normals(100_000, 0.0, 1.0, 3), &normals(100_000, 1.0, 1.0, 4)).unwrap();
    ensure!((w - 1.0).abs() <= 0.05, "W1 {w}");
    Ok(format!(
        "two-bin KL {kl:.5}, identical {same}, recall {}/{} = {}, max |Ĉ−α| {worst_cov:.4}, W1 {w:.4}",
        r.true_positives,
        r.true_positives + r.false_negatives,
        r.recall
    ))
}

fn formulas() -> Outcome {
    let n16 = amplitude_qubits(16);
    let via_spec = AnsatzSpec::for_latent(16, 3, Encoding::Amplitude).unwrap().n_qubits;
    ensure!(n16 == 4 && via_spec == 4, "d=16 gives {n16}/{via_spec} qubits");
    let counts = AnsatzSpec {
        n_qubits: 6,
        depth: 5,
        encoding: Encoding::FeatureMap,
    }
    .gate_counts();
    ensure!(counts == (30, 25), "gate counts {counts:?}");

    // mean 0.01, population std 0.02: τ = 0.01 + 2.5·0.02 = 0.06
    let series = [-0.01, 0.03, -0.01, 0.03];
    let (mask, meta) = label_rare_kappa_sigma(&series, 2.5, TailDirection::Lower).unwrap();
    let ThresholdMeta::KappaSigma { mean, std, tau, .. } = meta else {
        return Err("unexpected threshold kind".into());
    };
    ensure!(
        (mean - 0.01).abs() < 1e-15 && (std - 0.02).abs() < 1e-15 && (tau - 0.06).abs() < 1e-15,
        "κσ arithmetic μ={mean} σ={std} τ={tau}"
    );
    ensure!(!mask.iter().any(|&m| m) && meta.is_rare(-0.07) && !meta.is_rare(-0.05), "κσ rule");

    let rare: Vec<bool> = (0..1000).map(|i| i % 25 == 0).collect();
    let split = stratified_split(&rare, [0.7, 0.15, 0.15], &mut RandomnessSource::seeded(5)).unwrap();
    ensure!(split.sizes() == [700, 150, 150], "split sizes {:?}", split.sizes());
    Ok(format!(
        "d=16 → n={n16}; n=6, L=5 → {} rotations, {} CNOTs; τ={tau:.6}; split {:?}",
        counts.0,
        counts.1,
        split.sizes()
    ))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn benchmark() -> Outcome {
    let config = ExperimentConfig::load(&workspace_root().join("configs/benchmark.toml")).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ctx = Context {
        config,
        out: out.path().to_path_buf(),
        seed: None,
        force: false,
    };
    generate_data(&ctx).map_err(|e| e.to_string())?;
    let (_, cmp) = compare_command(&ctx, &[]).map_err(|e| e.to_string())?;
    let q = cmp.model(QEGM_NAME).ok_or("missing qegm summary")?;
    let b = cmp.model(BASELINE_NAME).ok_or("missing baseline summary")?;
    let per_seed = |m: &qegm_cli::commands::ModelSummary| {
        m.runs
            .iter()
            .map(|r| format!("{:.3}/{:.3}", r.metrics.tail_kl, r.metrics.rare_recall))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!(
        "seeds {:?}; median tail_kl qegm {:.4} vs baseline {:.4}; median rare_recall qegm {:.4} vs baseline {:.4}; \
         per-seed kl/recall qegm [{}] baseline [{}]",
        cmp.seeds,
        q.median.tail_kl,
        b.median.tail_kl,
        q.median.rare_recall,
        b.median.rare_recall,
        per_seed(q),
        per_seed(b)
    );
    ensure!(cmp.seeds.len() == 5, "expected 5 seeds: {detail}");
    ensure!(q.median.tail_kl <= b.median.tail_kl, "tail KL ordering fails: {detail}");
    ensure!(q.median.rare_recall >= b.median.rare_recall, "recall ordering fails: {detail}");
    Ok(detail)
}

fn noise_variance() -> Outcome {
    let mut src = RandomnessSource::simulated_qrng(707);
    let eps: Vec<f64> = (0..100_000)
        .map(|_| draw_noise(&mut src, 1, 1.0).unwrap().epsilon[0])
        .collect();
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let var = eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / eps.len() as f64;
    ensure!((var - 0.5).abs() <= 0.02, "pooled variance {var}");
    Ok(format!("pooled variance {var:.4} over 1e5 draws"))
}

const REPRO_CONFIG: &str = r#"
[dataset]
seed = 5
label = { rule = "quantile", level = 0.05, by_mixture_score = true }
source = { kind = "mixture", n_samples = 800 }

[model]
mode = "quantum"
latent_dim = 2
n_qubits = 2
hidden = [8]
depth = 2
noise_sigma = 0.5

[training]
epochs = 2
batch_size = 32
seed = 4

[metrics]
bins = 4
generated_samples = 2000

[compare]
seeds = [0, 1]
"#;

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, REPRO_CONFIG).map_err(|e| e.to_string())?;
    for out in ["first", "second"] {
        for cmd in ["generate-data", "train", "evaluate", "compare"] {
            let o = Command::new(env!("CARGO_BIN_EXE_qegm"))
                .arg(cmd)
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(dir.path().join(out))
                .env_remove(qegm_cli::OUT_ENV)
                .output()
                .map_err(|e| e.to_string())?;
            ensure!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let a = files(&dir.path().join("first"));
    let b = files(&dir.path().join("second"));
    ensure!(a.keys().eq(b.keys()), "different file sets");
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure!(differing.is_empty(), "files differ: {differing:?}");
    Ok(format!("{} files byte-identical across two full pipeline runs", a.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome, u64); 8] = [
        (1, "simulator correctness", simulator, 10),
        (2, "parameter-shift exactness", parameter_shift, 30),
        (3, "end-to-end gradient check", end_to_end_gradients, 60),
        (4, "metric oracles", metric_oracles, 60),
        (5, "formula reproduction", formulas, 10),
        (6, "benchmark ordering", benchmark, 600),
        (7, "noise variance law", noise_variance, 10),
        (8, "reproducibility", reproducibility, 300),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run, limit) in criteria {
        if !only.is_empty() && !only.iter().any(|f| name.contains(f.as_str()) || f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(limit) => Err(format!("{d}; exceeded {limit} s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{:.1} s]", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {detail} [{:.1} s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
