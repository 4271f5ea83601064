//! On-disk layout of datasets, checkpoints and reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back reproduces the in-memory values exactly and reruns are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use qegm_core::data::{DataSource, DatasetManifest, LabeledDataset, Split};
use qegm_core::{sha256_hex, Error};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const DATA_DIR: &str = "data";
pub const TRAIN_DIR: &str = "train";
pub const EVAL_DIR: &str = "eval";
pub const COMPARE_DIR: &str = "compare";

pub const SAMPLES_FILE: &str = "samples.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CONFIG_HASH_FILE: &str = "config.sha256";

pub const DATASET_FORMAT: u32 = 1;

/// Creates `dir`, refusing to touch an existing one unless `force` is set.
pub fn prepare_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        if !force {
            return Err(CliError::Exists(dir.to_path_buf()));
        }
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_bytes(path, &json_bytes(value))
}

/// Writes the resolved config and its hash into a run directory.
pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> CliResult<()> {
    write_bytes(&dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    write_bytes(&dir.join(CONFIG_HASH_FILE), format!("{}\n", cfg.hash()).as_bytes())
}

/// Builds a CSV file in memory.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn split_name(split: &Split, n: usize) -> Vec<&'static str> {
    let mut names = vec![""; n];
    for (set, name) in [(&split.train, "train"), (&split.val, "val"), (&split.test, "test")] {
        for &i in set {
            names[i] = name;
        }
    }
    names
}

pub fn samples_csv(ds: &LabeledDataset) -> CliResult<Vec<u8>> {
    let split = ds.split()?;
    let names = split_name(split, ds.len());
    let mut header = vec!["index"];
    header.extend(ds.columns.iter().map(String::as_str));
    header.extend(["rare", "split"]);
    let rows = (0..ds.len()).map(|i| {
        let mut row = vec![i.to_string()];
        row.extend(ds.raw[i].iter().map(|v| v.to_string()));
        row.push(u8::from(ds.rare_mask[i]).to_string());
        row.push(names[i].to_string());
        row
    });
    Ok(csv_bytes(&header, rows))
}

/// Writes samples, split and manifest; returns the manifest hash.
pub fn write_dataset(
    dir: &Path,
    ds: &LabeledDataset,
    source: DataSource,
    seed: u64,
    config_hash: &str,
) -> CliResult<String> {
    let samples = samples_csv(ds)?;
    let split = ds.split()?;
    let rare_counts = [&split.train, &split.val, &split.test].map(|s| s.iter().filter(|&&i| ds.rare_mask[i]).count());
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT,
        source,
        seed,
        n_samples: ds.len(),
        columns: ds.columns.clone(),
        label_column: ds.label_column,
        threshold: ds.threshold()?.clone(),
        split_sizes: split.sizes(),
        rare_counts,
        scaler: ds.scaler()?.clone(),
        samples_sha256: sha256_hex(&samples),
        config_hash: config_hash.to_string(),
    };
    write_bytes(&dir.join(SAMPLES_FILE), &samples)?;
    write_json(&dir.join(SPLIT_FILE), split)?;
    let manifest_bytes = json_bytes(&manifest);
    write_bytes(&dir.join(MANIFEST_FILE), &manifest_bytes)?;
    Ok(sha256_hex(&manifest_bytes))
}

pub struct StoredDataset {
    pub dataset: LabeledDataset,
    pub manifest: DatasetManifest,
    pub manifest_hash: String,
}

fn invalid(path: &Path, message: impl std::fmt::Display) -> CliError {
    CliError::Core(Error::Validation(format!("{}: {message}", path.display())))
}

/// Reads a dataset directory written by [`write_dataset`], checking the
/// samples digest and the split against the manifest.
pub fn load_dataset(dir: &Path) -> CliResult<StoredDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_bytes = read_bytes(&manifest_path)?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| invalid(&manifest_path, e))?;
    if manifest.format_version != DATASET_FORMAT {
        return Err(invalid(&manifest_path, format!("unsupported format {}", manifest.format_version)));
    }
    let samples_path = dir.join(SAMPLES_FILE);
    let samples = read_bytes(&samples_path)?;
    if sha256_hex(&samples) != manifest.samples_sha256 {
        return Err(invalid(&samples_path, "contents do not match the manifest digest"));
    }
    let split_path = dir.join(SPLIT_FILE);
    let split: Split = serde_json::from_slice(&read_bytes(&split_path)?).map_err(|e| invalid(&split_path, e))?;
    if split.sizes() != manifest.split_sizes {
        return Err(invalid(&split_path, "split sizes do not match the manifest"));
    }

    let d = manifest.columns.len();
    let mut reader = csv::Reader::from_reader(samples.as_slice());
    let mut raw = Vec::with_capacity(manifest.n_samples);
    let mut rare_mask = Vec::with_capacity(manifest.n_samples);
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| invalid(&samples_path, e))?;
        if record.len() != d + 3 {
            return Err(invalid(&samples_path, format!("row {i} has {} fields", record.len())));
        }
        let row = (1..=d)
            .map(|j| record[j].parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(&samples_path, format!("row {i}: {e}")))?;
        raw.push(row);
        rare_mask.push(&record[d + 1] == "1");
    }
    if raw.len() != manifest.n_samples {
        return Err(invalid(&samples_path, "row count does not match the manifest"));
    }
    let scaler = manifest.scaler.clone();
    let dataset = LabeledDataset {
        columns: manifest.columns.clone(),
        label_column: manifest.label_column,
        samples: raw.iter().map(|r| scaler.transform(r)).collect(),
        raw,
        rare_mask,
        threshold: Some(manifest.threshold.clone()),
        split: Some(split),
        scaler: Some(scaler),
    };
    Ok(StoredDataset {
        dataset,
        manifest,
        manifest_hash: sha256_hex(&manifest_bytes),
    })
}

pub fn data_dir(out: &Path) -> PathBuf {
    out.join(DATA_DIR)
}
