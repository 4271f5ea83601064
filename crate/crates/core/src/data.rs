//! Synthetic mixtures, CSV ingestion, rare-event labeling, standardization and
//! stratified splitting.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::randomness::{standard_normal, Entropy};

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MixtureSpec {
    /// Three components at −3, 0, +3 with variances 1, 0.5, 1.5 and 70% of
    /// the mass in the centre, split evenly between the two tails.
    pub fn benchmark() -> Self {
        MixtureSpec {
            weights: vec![0.15, 0.70, 0.15],
            means: vec![-3.0, 0.0, 3.0],
            variances: vec![1.0, 0.5, 1.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        if self.means.len() != k || self.variances.len() != k {
            return Err(Error::Validation(format!(
                "mixture lengths differ: {} weights, {} means, {} variances",
                k,
                self.means.len(),
                self.variances.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("mixture weights must sum to 1, got {total}")));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("mixture means must be finite".into()));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation("mixture variances must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (m, v))| w * (-(x - m).powi(2) / (2.0 * v)).exp() / (norm * v.sqrt()))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (m, v))| w * 0.5 * erfc(-(x - m) / (2.0 * v).sqrt()))
            .sum()
    }

    /// `n` i.i.d. draws: a component by weight, then a Gaussian draw from it.
    pub fn sample<E: Entropy + ?Sized>(&self, n: usize, src: &mut E) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Validation("sample count must be at least 1".into()));
        }
        let last = self.weights.len() - 1;
        (0..n)
            .map(|_| {
                let u = src.uniform()?;
                let mut acc = 0.0;
                let mut k = last;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                Ok(self.means[k] + self.variances[k].sqrt() * standard_normal(src)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDirection {
    Lower,
    Upper,
}

/// What a quantile rule ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantileTarget {
    /// The raw value itself.
    Value,
    /// Rarity score `−ln p(x)` under a known mixture density.
    MixtureScore { mixture: MixtureSpec },
}

impl QuantileTarget {
    pub fn key(&self, x: f64) -> f64 {
        match self {
            QuantileTarget::Value => x,
            QuantileTarget::MixtureScore { mixture } => -mixture.density(x).ln(),
        }
    }
}

/// Fitted labeling rule, applied to raw (unstandardized) values of the label column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdMeta {
    /// `τ = μ + κσ`; lower tail marks `x < −τ`, upper tail marks `x > τ`.
    KappaSigma {
        kappa: f64,
        mean: f64,
        std: f64,
        tau: f64,
        direction: TailDirection,
    },
    /// Exactly `⌈level·N⌉` samples marked; the rule for new values compares
    /// against `cutoff` inclusively.
    Quantile {
        level: f64,
        cutoff: f64,
        direction: TailDirection,
        target: QuantileTarget,
    },
}

impl ThresholdMeta {
    pub fn is_rare(&self, x: f64) -> bool {
        match self {
            ThresholdMeta::KappaSigma { tau, direction, .. } => match direction {
                TailDirection::Lower => x < -tau,
                TailDirection::Upper => x > *tau,
            },
            ThresholdMeta::Quantile {
                cutoff,
                direction,
                target,
                ..
            } => {
                let key = target.key(x);
                match direction {
                    TailDirection::Upper => key >= *cutoff,
                    TailDirection::Lower => key <= *cutoff,
                }
            }
        }
    }
}

fn mean_std(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// κσ crash rule with population standard deviation.
pub fn label_rare_kappa_sigma(
    series: &[f64],
    kappa: f64,
    direction: TailDirection,
) -> Result<(Vec<bool>, ThresholdMeta)> {
    if series.len() < 2 {
        return Err(Error::Validation("κσ labeling needs at least two observations".into()));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Validation(format!("kappa must be positive, got {kappa}")));
    }
    let (mean, std) = mean_std(series);
    if std == 0.0 || !std.is_finite() {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let meta = ThresholdMeta::KappaSigma {
        kappa,
        mean,
        std,
        tau: mean + kappa * std,
        direction,
    };
    let mask = series.iter().map(|&x| meta.is_rare(x)).collect();
    Ok((mask, meta))
}

/// Number of samples a quantile rule marks: `⌈level·N⌉`.
pub fn quantile_count(level: f64, n: usize) -> usize {
    // guard against 0.01·1000 landing a hair above 10
    ((level * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Marks exactly `⌈level·N⌉` samples with the most extreme keys; ties go to
/// the lower index.
pub fn label_rare_quantile_on(
    series: &[f64],
    level: f64,
    direction: TailDirection,
    target: QuantileTarget,
) -> Result<(Vec<bool>, ThresholdMeta)> {
    if series.is_empty() {
        return Err(Error::Validation("quantile labeling needs a non-empty series".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!("quantile level must be in (0, 1), got {level}")));
    }
    let keys: Vec<f64> = series.iter().map(|&x| target.key(x)).collect();
    if keys.iter().any(|k| k.is_nan()) {
        return Err(Error::Validation("series contains NaN".into()));
    }
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = match direction {
            TailDirection::Upper => keys[b].total_cmp(&keys[a]),
            TailDirection::Lower => keys[a].total_cmp(&keys[b]),
        };
        ord.then(a.cmp(&b))
    });
    let k = quantile_count(level, series.len()).max(1);
    let mut mask = vec![false; series.len()];
    for &i in &order[..k] {
        mask[i] = true;
    }
    let meta = ThresholdMeta::Quantile {
        level,
        cutoff: keys[order[k - 1]],
        direction,
        target,
    };
    Ok((mask, meta))
}

/// Upper-tail quantile rule on raw values.
pub fn label_rare_quantile(series: &[f64], level: f64) -> Result<(Vec<bool>, ThresholdMeta)> {
    label_rare_quantile_on(series, level, TailDirection::Upper, QuantileTarget::Value)
}

/// Train/validation/test index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn apportion(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let a = round_half_up(ratios[0] * total as f64).min(total);
    let b = round_half_up(ratios[1] * total as f64).min(total - a);
    [a, b, total - a - b]
}

fn shuffle<E: Entropy + ?Sized>(items: &mut [usize], src: &mut E) -> Result<()> {
    for i in (1..items.len()).rev() {
        let j = ((src.uniform()? * (i + 1) as f64) as usize).min(i);
        items.swap(i, j);
    }
    Ok(())
}

/// Shuffles rare and common strata independently and apportions them so the
/// overall split sizes are exactly `round(ratio·N)` and each split keeps
/// roughly the global rare fraction.
pub fn stratified_split<E: Entropy + ?Sized>(
    rare_mask: &[bool],
    ratios: [f64; 3],
    src: &mut E,
) -> Result<Split> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("split ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let n = rare_mask.len();
    let mut rare: Vec<usize> = (0..n).filter(|&i| rare_mask[i]).collect();
    let mut common: Vec<usize> = (0..n).filter(|&i| !rare_mask[i]).collect();
    let totals = apportion(n, ratios);
    let rare_counts = apportion(rare.len(), ratios);
    let common_counts: Vec<usize> = totals
        .iter()
        .zip(&rare_counts)
        .map(|(&t, &r)| t.checked_sub(r).unwrap_or(0))
        .collect();
    if rare_counts.contains(&0)
        || common_counts.contains(&0)
        || common_counts.iter().sum::<usize>() != common.len()
    {
        return Err(Error::Stratification(format!(
            "cannot place rare and common samples in every split: {} rare, {} common, target sizes {:?}",
            rare.len(),
            common.len(),
            totals
        )));
    }
    shuffle(&mut rare, src)?;
    shuffle(&mut common, src)?;
    let mut parts: Vec<Vec<usize>> = Vec::with_capacity(3);
    let (mut r0, mut c0) = (0, 0);
    for s in 0..3 {
        let mut part: Vec<usize> = rare[r0..r0 + rare_counts[s]]
            .iter()
            .chain(&common[c0..c0 + common_counts[s]])
            .copied()
            .collect();
        part.sort_unstable();
        r0 += rare_counts[s];
        c0 += common_counts[s];
        parts.push(part);
    }
    let test = parts.pop().expect("three parts");
    let val = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok(Split { train, val, test })
}

/// Per-feature affine standardization `x' = (x − μ)/σ` with population σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], columns: &[String]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Validation("cannot standardize an empty sample set".into()));
        };
        let d = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.as_ref()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        if let Some(j) = std.iter().position(|&s| !(s > 0.0)) {
            let name = columns.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::Degenerate(format!("feature {name:?} has zero variance")));
        }
        Ok(Scaler { mean, std })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn inverse_value(&self, column: usize, value: f64) -> f64 {
        value * self.std[column] + self.mean[column]
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalColumn {
    pub name: String,
    /// Known categories; when absent they are collected from the file.
    #[serde(default)]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default)]
    pub categorical: Vec<CategoricalColumn>,
}

/// One-hot encoder for a single categorical column.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    pub column: String,
    pub categories: Vec<String>,
}

impl OneHot {
    pub fn encode(&self, value: &str) -> Result<Vec<f64>> {
        let hit = self
            .categories
            .iter()
            .position(|c| c == value)
            .ok_or_else(|| Error::UnseenCategory {
                column: self.column.clone(),
                value: value.to_string(),
            })?;
        Ok((0..self.categories.len()).map(|i| if i == hit { 1.0 } else { 0.0 }).collect())
    }

    pub fn column_names(&self) -> impl Iterator<Item = String> + '_ {
        self.categories.iter().map(move |c| format!("{}={}", self.column, c))
    }
}

/// Reads a UTF-8, comma-separated file with a header row. Numeric cells must
/// parse as finite numbers; categorical columns are one-hot encoded in place.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse {
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for cat in &schema.categorical {
        if !headers.contains(&cat.name) {
            return Err(Error::Validation(format!("categorical column {:?} not in header", cat.name)));
        }
    }
    let is_cat: Vec<Option<usize>> = headers
        .iter()
        .map(|h| schema.categorical.iter().position(|c| &c.name == h))
        .collect();

    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        records.push((line, record));
    }

    let encoders: Vec<OneHot> = schema
        .categorical
        .iter()
        .map(|c| {
            let categories = match &c.categories {
                Some(known) => known.clone(),
                None => {
                    let col = headers.iter().position(|h| h == &c.name).expect("checked above");
                    records
                        .iter()
                        .map(|(_, r)| r[col].trim().to_string())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect()
                }
            };
            OneHot {
                column: c.name.clone(),
                categories,
            }
        })
        .collect();

    let mut columns = Vec::new();
    for (h, cat) in headers.iter().zip(&is_cat) {
        match cat {
            Some(k) => columns.extend(encoders[*k].column_names()),
            None => columns.push(h.clone()),
        }
    }

    let mut rows = Vec::with_capacity(records.len());
    for (line, record) in &records {
        let mut row = Vec::with_capacity(columns.len());
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            match is_cat[j] {
                Some(k) => row.extend(encoders[k].encode(cell)?),
                None => {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        line: *line,
                        message: format!("column {:?}: {cell:?} is not a number", headers[j]),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            line: *line,
                            message: format!("column {:?}: non-finite value {cell:?}", headers[j]),
                        });
                    }
                    row.push(v);
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Validation("CSV file has no data rows".into()));
    }
    Ok(Table { columns, rows })
}

/// Samples with rare-event labels, a stratified split and train-fitted
/// standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub columns: Vec<String>,
    pub label_column: usize,
    pub raw: Vec<Vec<f64>>,
    /// Standardized rows; filled by [`LabeledDataset::standardize`].
    pub samples: Vec<Vec<f64>>,
    pub rare_mask: Vec<bool>,
    pub threshold: Option<ThresholdMeta>,
    pub split: Option<Split>,
    pub scaler: Option<Scaler>,
}

/// How to derive the rare mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelRule {
    KappaSigma {
        kappa: f64,
        #[serde(default = "default_lower")]
        direction: TailDirection,
    },
    Quantile {
        level: f64,
        #[serde(default = "default_upper")]
        direction: TailDirection,
        /// Rank by rarity score under the generating mixture instead of by value.
        #[serde(default)]
        by_mixture_score: bool,
    },
}

fn default_lower() -> TailDirection {
    TailDirection::Lower
}

fn default_upper() -> TailDirection {
    TailDirection::Upper
}

impl LabeledDataset {
    pub fn unlabeled(table: Table, label_column: usize) -> Result<Self> {
        if label_column >= table.columns.len() {
            return Err(Error::Index {
                what: "label column",
                index: label_column,
                limit: table.columns.len(),
            });
        }
        let n = table.rows.len();
        Ok(LabeledDataset {
            columns: table.columns,
            label_column,
            raw: table.rows,
            samples: Vec::new(),
            rare_mask: vec![false; n],
            threshold: None,
            split: None,
            scaler: None,
        })
    }

    pub fn from_series(name: &str, series: Vec<f64>) -> Self {
        let n = series.len();
        LabeledDataset {
            columns: vec![name.to_string()],
            label_column: 0,
            raw: series.into_iter().map(|x| vec![x]).collect(),
            samples: Vec::new(),
            rare_mask: vec![false; n],
            threshold: None,
            split: None,
            scaler: None,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn label_series(&self) -> Vec<f64> {
        self.raw.iter().map(|r| r[self.label_column]).collect()
    }

    pub fn label(&mut self, rule: &LabelRule, mixture: Option<&MixtureSpec>) -> Result<()> {
        let series = self.label_series();
        let (mask, meta) = match rule {
            LabelRule::KappaSigma { kappa, direction } => label_rare_kappa_sigma(&series, *kappa, *direction)?,
            LabelRule::Quantile {
                level,
                direction,
                by_mixture_score,
            } => {
                let target = if *by_mixture_score {
                    let mixture = mixture.ok_or_else(|| {
                        Error::Config("mixture-score labeling needs a known mixture density".into())
                    })?;
                    QuantileTarget::MixtureScore {
                        mixture: mixture.clone(),
                    }
                } else {
                    QuantileTarget::Value
                };
                label_rare_quantile_on(&series, *level, *direction, target)?
            }
        };
        self.rare_mask = mask;
        self.threshold = Some(meta);
        Ok(())
    }

    pub fn stratify<E: Entropy + ?Sized>(&mut self, ratios: [f64; 3], src: &mut E) -> Result<()> {
        self.split = Some(stratified_split(&self.rare_mask, ratios, src)?);
        Ok(())
    }

    /// Fits the scaler on the training split and transforms every row.
    pub fn standardize(&mut self) -> Result<()> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::State("standardize requires a split".into()))?;
        let train: Vec<&[f64]> = split.train.iter().map(|&i| self.raw[i].as_slice()).collect();
        let scaler = Scaler::fit(&train, &self.columns)?;
        self.samples = self.raw.iter().map(|r| scaler.transform(r)).collect();
        self.scaler = Some(scaler);
        Ok(())
    }

    pub fn split(&self) -> Result<&Split> {
        self.split.as_ref().ok_or_else(|| Error::State("dataset has no split".into()))
    }

    pub fn scaler(&self) -> Result<&Scaler> {
        self.scaler
            .as_ref()
            .ok_or_else(|| Error::State("dataset is not standardized".into()))
    }

    pub fn threshold(&self) -> Result<&ThresholdMeta> {
        self.threshold
            .as_ref()
            .ok_or_else(|| Error::State("dataset is not labeled".into()))
    }

    pub fn rows(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }

    pub fn rare_fraction(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        indices.iter().filter(|&&i| self.rare_mask[i]).count() as f64 / indices.len() as f64
    }

    /// Whether a standardized row lies in the rare region of the labeling rule.
    pub fn is_rare_standardized(&self, row: &[f64]) -> Result<bool> {
        let raw = self.scaler()?.inverse_value(self.label_column, row[self.label_column]);
        Ok(self.threshold()?.is_rare(raw))
    }
}

/// Provenance record written next to generated dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub source: DataSource,
    pub seed: u64,
    pub n_samples: usize,
    pub columns: Vec<String>,
    pub label_column: usize,
    pub threshold: ThresholdMeta,
    pub split_sizes: [usize; 3],
    pub rare_counts: [usize; 3],
    pub scaler: Scaler,
    pub samples_sha256: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Mixture { mixture: MixtureSpec },
    Csv { path: String, sha256: String },
}
