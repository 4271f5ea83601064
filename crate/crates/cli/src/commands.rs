use std::path::{Path, PathBuf};

use qegm_core::checkpoint::Checkpoint;
use qegm_core::data::{load_csv, DataSource, LabeledDataset};
use qegm_core::metrics::{evaluate, MetricsReport, Provenance, TailRegion, CODE_VERSION};
use qegm_core::model::{Mode, QegmModel};
use qegm_core::neural::AdamState;
use qegm_core::randomness::{derive_seed, RandomnessSource, SourceKind};
use qegm_core::train::{train, TrainReport};
use qegm_core::{sha256_hex, Error};
use serde::Serialize;

use crate::config::{ExperimentConfig, SourceSection};
use crate::error::{CliError, CliResult};
use crate::store::{self, StoredDataset};

// Stream identifiers for seed derivation.
const STREAM_SAMPLES: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_INIT: u64 = 10;
const STREAM_NOISE: u64 = 11;
const STREAM_GENERATE: u64 = 12;

/// Resolved invocation shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub force: bool,
}

/// Builds the labeled, split and standardized dataset a config describes.
pub fn build_dataset(cfg: &ExperimentConfig) -> CliResult<(LabeledDataset, DataSource)> {
    let d = &cfg.dataset;
    let (mut ds, source) = match &d.source {
        SourceSection::Mixture { n_samples, mixture } => {
            let series = mixture.sample(*n_samples, &mut RandomnessSource::seeded(derive_seed(d.seed, STREAM_SAMPLES)))?;
            (
                LabeledDataset::from_series("x", series),
                DataSource::Mixture {
                    mixture: mixture.clone(),
                },
            )
        }
        SourceSection::Csv {
            path,
            label_column,
            ..
        } => {
            let path = cfg.resolve(path);
            let bytes = store::read_bytes(&path)?;
            let table = load_csv(&path, &d.source.csv_schema().unwrap_or_default())?;
            let label = table.columns.iter().position(|c| c == label_column).ok_or_else(|| {
                Error::Config(format!("label column {label_column:?} not found in {}", path.display()))
            })?;
            (
                LabeledDataset::unlabeled(table, label)?,
                DataSource::Csv {
                    path: path.display().to_string(),
                    sha256: sha256_hex(&bytes),
                },
            )
        }
    };
    ds.label(&d.label, d.source.mixture())?;
    ds.stratify(d.split, &mut RandomnessSource::seeded(derive_seed(d.seed, STREAM_SPLIT)))?;
    ds.standardize()?;
    Ok((ds, source))
}

pub fn generate_data(ctx: &Context) -> CliResult<PathBuf> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = ctx.seed {
        cfg.dataset.seed = s;
    }
    let (ds, source) = build_dataset(&cfg)?;
    let dir = store::data_dir(&ctx.out);
    store::prepare_dir(&dir, ctx.force)?;
    store::write_dataset(&dir, &ds, source, cfg.dataset.seed, &cfg.hash())?;
    store::write_config(&dir, &cfg)?;
    Ok(dir)
}

fn noise_source(cfg: &ExperimentConfig, mode: Mode, seed: u64, stream: u64) -> CliResult<RandomnessSource> {
    let kind = cfg.model.noise_source.unwrap_or(match mode {
        Mode::Quantum => SourceKind::SimulatedQrng,
        Mode::ClassicalBaseline => SourceKind::SeededPrng,
    });
    let path = cfg.model.entropy_file.as_ref().map(|p| cfg.resolve(p));
    Ok(RandomnessSource::new(kind, derive_seed(seed, stream), path.as_deref())?)
}

/// One training run held in memory.
pub struct TrainedRun {
    pub model: QegmModel,
    pub optimizer: AdamState,
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
}

/// Trains the configured model with `cfg.training.seed`.
pub fn train_run(cfg: &ExperimentConfig, data: &StoredDataset) -> CliResult<TrainedRun> {
    let seed = cfg.training.seed;
    let model_cfg = cfg.model.model_config(data.dataset.dim());
    let mut model = QegmModel::new(&model_cfg, &mut RandomnessSource::seeded(derive_seed(seed, STREAM_INIT)))?;
    let mut optimizer = AdamState::new(cfg.training.learning_rate, &model.parameter_sizes());
    let mut noise = noise_source(cfg, model_cfg.mode, seed, STREAM_NOISE)?;
    let report = train(&mut model, &mut optimizer, &data.dataset, &cfg.loss, &cfg.training, &mut noise)?;
    let checkpoint = Checkpoint::capture(
        &model,
        &model_cfg,
        &optimizer,
        &cfg.hash(),
        &data.manifest_hash,
        seed,
        report.best_epoch,
    );
    Ok(TrainedRun {
        model,
        optimizer,
        report,
        checkpoint,
    })
}

fn loss_curve_csv(report: &TrainReport) -> Vec<u8> {
    store::csv_bytes(
        &[
            "epoch",
            "train_hybrid",
            "train_rec",
            "train_tail",
            "val_hybrid",
            "val_rec",
            "val_tail",
            "train_circuit_evaluations",
        ],
        report.epochs.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.train.hybrid.to_string(),
                e.train.rec.to_string(),
                e.train.tail.to_string(),
                e.val.hybrid.to_string(),
                e.val.rec.to_string(),
                e.val.tail.to_string(),
                e.train_circuit_evaluations.to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct Timing {
    wall_clock_seconds: f64,
}

fn write_run(dir: &Path, run: &mut TrainedRun) -> CliResult<()> {
    run.checkpoint.save(&dir.join(store::CHECKPOINT_FILE))?;
    run.report.checkpoint = Some(store::CHECKPOINT_FILE.to_string());
    store::write_json(&dir.join(store::TRAIN_REPORT_FILE), &run.report)?;
    store::write_bytes(&dir.join(store::LOSS_CURVE_FILE), &loss_curve_csv(&run.report))?;
    store::write_json(
        &dir.join(store::TIMING_FILE),
        &Timing {
            wall_clock_seconds: run.report.wall_clock_seconds,
        },
    )
}

pub fn train_command(ctx: &Context) -> CliResult<(PathBuf, TrainReport)> {
    let mut cfg = ctx.config.clone();
    if let Some(s) = ctx.seed {
        cfg.training.seed = s;
    }
    let data = store::load_dataset(&store::data_dir(&ctx.out))?;
    let dir = ctx.out.join(store::TRAIN_DIR);
    store::prepare_dir(&dir, ctx.force)?;
    let mut run = train_run(&cfg, &data)?;
    write_run(&dir, &mut run)?;
    store::write_config(&dir, &cfg)?;
    Ok((dir, run.report))
}

/// Metrics of a restored checkpoint; synthetic samples come from `generation_seed`.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    data: &StoredDataset,
    checkpoint: &Checkpoint,
    generation_seed: u64,
) -> CliResult<MetricsReport> {
    if checkpoint.model_config.data_dim != data.dataset.dim() {
        return Err(Error::Validation(format!(
            "checkpoint expects {} data columns but the dataset has {}",
            checkpoint.model_config.data_dim,
            data.dataset.dim()
        ))
        .into());
    }
    if checkpoint.dataset_manifest_hash != data.manifest_hash {
        return Err(Error::Validation(
            "checkpoint was trained on a different dataset (manifest hash mismatch)".into(),
        )
        .into());
    }
    let (model, _) = checkpoint.restore()?;
    let region = TailRegion::for_dataset(&data.dataset, mixture_of(&data.manifest.source))?;
    let mut src = noise_source(cfg, checkpoint.model_config.mode, generation_seed, STREAM_GENERATE)?;
    let provenance = Provenance {
        seed: checkpoint.seed,
        config_hash: checkpoint.config_hash.clone(),
        dataset_manifest_hash: data.manifest_hash.clone(),
        code_version: CODE_VERSION.to_string(),
    };
    Ok(evaluate(
        &model,
        &data.dataset,
        &region,
        &cfg.evaluation_options(),
        derive_seed(generation_seed, STREAM_GENERATE),
        &mut src,
        provenance,
    )?)
}

fn mixture_of(source: &DataSource) -> Option<&qegm_core::MixtureSpec> {
    match source {
        DataSource::Mixture { mixture } => Some(mixture),
        DataSource::Csv { .. } => None,
    }
}

fn coverage_csv<'a>(rows: impl IntoIterator<Item = (&'a str, String, &'a MetricsReport)>) -> Vec<u8> {
    let mut out = Vec::new();
    for (model, seed, report) in rows {
        for p in &report.coverage_curve {
            out.push(vec![model.to_string(), seed.clone(), p.alpha.to_string(), p.empirical.to_string()]);
        }
    }
    store::csv_bytes(&["model", "seed", "alpha", "empirical"], out)
}

pub fn evaluate_command(ctx: &Context, checkpoint: Option<&Path>) -> CliResult<(PathBuf, MetricsReport)> {
    let cfg = ctx.config.clone();
    let data = store::load_dataset(&store::data_dir(&ctx.out))?;
    let ck_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out.join(store::TRAIN_DIR).join(store::CHECKPOINT_FILE));
    let ck = load_checkpoint(&ck_path)?;
    let seed = ctx.seed.unwrap_or(ck.seed);
    let dir = ctx.out.join(store::EVAL_DIR);
    store::prepare_dir(&dir, ctx.force)?;
    let report = evaluate_checkpoint(&cfg, &data, &ck, seed)?;
    let name = match ck.model_config.mode {
        Mode::Quantum => QEGM_NAME,
        Mode::ClassicalBaseline => BASELINE_NAME,
    };
    store::write_json(&dir.join(store::METRICS_FILE), &report)?;
    store::write_bytes(
        &dir.join(store::COVERAGE_FILE),
        &coverage_csv([(name, seed.to_string(), &report)]),
    )?;
    store::write_config(&dir, &cfg)?;
    Ok((dir, report))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

/// Per-run metric values that enter the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub tail_kl: f64,
    pub rare_recall: f64,
    pub coverage_error: f64,
    pub wasserstein_1d: f64,
}

impl MetricRow {
    fn from_report(r: &MetricsReport) -> Self {
        MetricRow {
            tail_kl: r.tail_kl,
            rare_recall: r.rare_recall.recall,
            coverage_error: r.coverage_error,
            wasserstein_1d: r.wasserstein_1d,
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.tail_kl, self.rare_recall, self.coverage_error, self.wasserstein_1d]
    }

    fn from_values(v: [f64; 4]) -> Self {
        MetricRow {
            tail_kl: v[0],
            rare_recall: v[1],
            coverage_error: v[2],
            wasserstein_1d: v[3],
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRow {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub runs: Vec<SeedRow>,
    pub median: MetricRow,
}

/// `median(model) − median(reference)` for every metric.
#[derive(Debug, Clone, Serialize)]
pub struct Delta {
    pub model: String,
    pub reference: String,
    #[serde(flatten)]
    pub delta: MetricRow,
    /// Tail KL no higher than the reference.
    pub tail_kl_not_worse: bool,
    /// Rare recall no lower than the reference.
    pub rare_recall_not_worse: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub dataset_manifest_hash: String,
    pub config_hash: String,
    pub code_version: String,
    pub models: Vec<ModelSummary>,
    pub deltas: Vec<Delta>,
}

impl Comparison {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn table_csv(&self) -> Vec<u8> {
        let header = ["model", "seed", "tail_kl", "rare_recall", "coverage_error", "wasserstein_1d"];
        let fmt = |name: &str, seed: String, m: &MetricRow| {
            let mut row = vec![name.to_string(), seed];
            row.extend(m.values().iter().map(|v| v.to_string()));
            row
        };
        let mut rows = Vec::new();
        for m in &self.models {
            for r in &m.runs {
                rows.push(fmt(&m.name, r.seed.to_string(), &r.metrics));
            }
            rows.push(fmt(&m.name, "median".into(), &m.median));
        }
        for d in &self.deltas {
            rows.push(fmt(&format!("{}-{}", d.model, d.reference), "delta".into(), &d.delta));
        }
        store::csv_bytes(&header, rows)
    }
}

/// Builds the table from per-model, per-seed reports. The last model is the
/// reference for deltas.
pub fn summarize(
    seeds: &[u64],
    results: &[(String, Vec<MetricsReport>)],
    config_hash: &str,
    dataset_manifest_hash: &str,
) -> Comparison {
    let models: Vec<ModelSummary> = results
        .iter()
        .map(|(name, reports)| {
            let runs: Vec<SeedRow> = seeds
                .iter()
                .zip(reports)
                .map(|(&seed, r)| SeedRow {
                    seed,
                    metrics: MetricRow::from_report(r),
                })
                .collect();
            let med = std::array::from_fn(|k| median(&runs.iter().map(|r| r.metrics.values()[k]).collect::<Vec<_>>()));
            ModelSummary {
                name: name.clone(),
                runs,
                median: MetricRow::from_values(med),
            }
        })
        .collect();
    let reference = models.last().expect("at least two models");
    let deltas = models[..models.len() - 1]
        .iter()
        .map(|m| {
            let (a, b) = (m.median.values(), reference.median.values());
            let delta = MetricRow::from_values(std::array::from_fn(|k| a[k] - b[k]));
            Delta {
                model: m.name.clone(),
                reference: reference.name.clone(),
                tail_kl_not_worse: m.median.tail_kl <= reference.median.tail_kl,
                rare_recall_not_worse: m.median.rare_recall >= reference.median.rare_recall,
                delta,
            }
        })
        .collect();
    Comparison {
        seeds: seeds.to_vec(),
        dataset_manifest_hash: dataset_manifest_hash.to_string(),
        config_hash: config_hash.to_string(),
        code_version: CODE_VERSION.to_string(),
        models,
        deltas,
    }
}

pub const QEGM_NAME: &str = "qegm";
pub const BASELINE_NAME: &str = "baseline";

/// Parses `NAME=PATH`.
pub fn parse_named_checkpoint(arg: &str) -> CliResult<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(CliError::Usage(format!("--checkpoint expects NAME=PATH, got {arg:?}"))),
    }
}

/// Without checkpoints, trains QEGM and the baseline for every seed. With
/// checkpoints, evaluates each one once per seed.
pub fn compare_command(ctx: &Context, checkpoints: &[(String, PathBuf)]) -> CliResult<(PathBuf, Comparison)> {
    let cfg = ctx.config.clone();
    let seeds = ctx.seed.map_or_else(|| cfg.compare.seeds.clone(), |s| vec![s]);
    if checkpoints.len() == 1 {
        return Err(CliError::Usage("compare needs at least two checkpoints".into()));
    }
    let mut names: Vec<&str> = checkpoints.iter().map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("checkpoint names must be unique".into()));
    }
    let data = store::load_dataset(&store::data_dir(&ctx.out))?;
    let dir = ctx.out.join(store::COMPARE_DIR);

    let mut results: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    if checkpoints.is_empty() {
        store::prepare_dir(&dir, ctx.force)?;
        for (name, mode) in [(QEGM_NAME, Mode::Quantum), (BASELINE_NAME, Mode::ClassicalBaseline)] {
            let mut reports = Vec::new();
            for &seed in &seeds {
                let mut run_cfg = cfg.clone();
                run_cfg.model.mode = mode;
                run_cfg.training.seed = seed;
                let run_dir = dir.join("runs").join(name).join(format!("seed-{seed}"));
                store::prepare_dir(&run_dir, false)?;
                let mut run = train_run(&run_cfg, &data)?;
                write_run(&run_dir, &mut run)?;
                let report = evaluate_checkpoint(&run_cfg, &data, &run.checkpoint, seed)?;
                store::write_json(&run_dir.join(store::METRICS_FILE), &report)?;
                reports.push(report);
            }
            results.push((name.to_string(), reports));
        }
    } else {
        let loaded = checkpoints
            .iter()
            .map(|(name, path)| Ok((name.clone(), load_checkpoint(path)?)))
            .collect::<CliResult<Vec<_>>>()?;
        for (name, ck) in &loaded {
            if ck.dataset_manifest_hash != data.manifest_hash {
                return Err(CliError::ComparisonInvalid(format!(
                    "checkpoint {name:?} was trained on dataset {} but the current dataset is {}",
                    ck.dataset_manifest_hash, data.manifest_hash
                )));
            }
        }
        store::prepare_dir(&dir, ctx.force)?;
        for (name, ck) in &loaded {
            let reports = seeds
                .iter()
                .map(|&seed| evaluate_checkpoint(&cfg, &data, ck, seed))
                .collect::<CliResult<Vec<_>>>()?;
            results.push((name.clone(), reports));
        }
    }

    let comparison = summarize(&seeds, &results, &cfg.hash(), &data.manifest_hash);
    store::write_bytes(&dir.join("comparison.csv"), &comparison.table_csv())?;
    store::write_json(&dir.join("comparison.json"), &comparison)?;
    let coverage_rows = results
        .iter()
        .flat_map(|(name, reports)| seeds.iter().zip(reports).map(move |(s, r)| (name.as_str(), s.to_string(), r)));
    store::write_bytes(&dir.join(store::COVERAGE_FILE), &coverage_csv(coverage_rows))?;
    store::write_config(&dir, &cfg)?;
    Ok((dir, comparison))
}
