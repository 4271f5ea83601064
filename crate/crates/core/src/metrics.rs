//! Tail-sensitive evaluation: tail KL divergence, rare-event recall,
//! predictive-interval coverage and the 1-D Wasserstein distance.
//!
//! Every metric is a pure function of its inputs. Tail metrics look at the
//! label column of standardized rows.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{LabeledDataset, MixtureSpec, QuantileTarget, Scaler, ThresholdMeta};
use crate::error::{Error, Result};
use crate::model::{GenerateOptions, QegmModel};
use crate::neural::GaussianHead;
use crate::randomness::Entropy;

pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_SMOOTHING: f64 = 1e-9;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Anything that maps an input to a Gaussian predictive head.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> Result<GaussianHead>;
}

/// Rarity score `s(v) = −ln p(v)` on standardized label-column values.
#[derive(Debug, Clone, PartialEq)]
pub enum RarityScore {
    /// Known generating density, given in raw units.
    Mixture { mixture: MixtureSpec, mean: f64, std: f64 },
    /// Gaussian kernel density estimate over standardized points.
    Kde { points: Vec<f64>, bandwidth: f64 },
}

/// Silverman's rule `0.9·min(σ, IQR/1.34)·n^(−1/5)`.
pub fn silverman_bandwidth(points: &[f64]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().sum::<f64>() / n;
    let std = (points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    0.9 * spread * n.powf(-0.2)
}

impl RarityScore {
    pub fn kde(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation("a density estimate needs at least two points".into()));
        }
        let bandwidth = silverman_bandwidth(&points);
        if !(bandwidth > 0.0) {
            return Err(Error::Degenerate("density estimate has zero bandwidth".into()));
        }
        Ok(RarityScore::Kde { points, bandwidth })
    }

    pub fn score(&self, v: f64) -> f64 {
        match self {
            RarityScore::Mixture { mixture, mean, std } => -mixture.density(v * std + mean).ln(),
            RarityScore::Kde { points, bandwidth } => {
                let norm = points.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt();
                let s: f64 = points
                    .iter()
                    .map(|p| (-0.5 * ((v - p) / bandwidth).powi(2)).exp())
                    .sum();
                -(s / norm).ln()
            }
        }
    }
}

/// `T = { x : s(x) ≥ τ }` on one column of standardized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRegion {
    pub score: RarityScore,
    pub threshold: f64,
    pub column: usize,
}

/// Serializable description of a [`TailRegion`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRegionSummary {
    pub score: String,
    pub threshold: f64,
    pub column: usize,
    #[serde(default)]
    pub kde_bandwidth: Option<f64>,
    #[serde(default)]
    pub kde_points: Option<usize>,
}

impl TailRegion {
    pub fn contains(&self, row: &[f64]) -> bool {
        self.score.score(row[self.column]) >= self.threshold
    }

    /// Region matching a labeled dataset.
    ///
    /// When the labels come from a mixture-score quantile the region is that
    /// same rule. Otherwise the score is the known mixture density if given,
    /// or a kernel density fitted on the training split, with the threshold
    /// set so the training tail mass equals the training rare fraction.
    pub fn for_dataset(dataset: &LabeledDataset, mixture: Option<&MixtureSpec>) -> Result<Self> {
        let scaler: &Scaler = dataset.scaler()?;
        let column = dataset.label_column;
        let (mean, std) = (scaler.mean[column], scaler.std[column]);
        if let ThresholdMeta::Quantile {
            cutoff,
            target: QuantileTarget::MixtureScore { mixture },
            direction: crate::data::TailDirection::Upper,
            ..
        } = dataset.threshold()?
        {
            return Ok(TailRegion {
                score: RarityScore::Mixture {
                    mixture: mixture.clone(),
                    mean,
                    std,
                },
                threshold: *cutoff,
                column,
            });
        }
        let split = dataset.split()?;
        let train: Vec<f64> = split.train.iter().map(|&i| dataset.samples[i][column]).collect();
        let score = match mixture {
            Some(m) => RarityScore::Mixture {
                mixture: m.clone(),
                mean,
                std,
            },
            None => RarityScore::kde(train.clone())?,
        };
        let mut scores: Vec<f64> = train.iter().map(|&v| score.score(v)).collect();
        scores.sort_by(f64::total_cmp);
        let frac = dataset.rare_fraction(&split.train);
        let threshold = quantile_sorted(&scores, 1.0 - frac);
        Ok(TailRegion {
            score,
            threshold,
            column,
        })
    }

    pub fn summary(&self) -> TailRegionSummary {
        match &self.score {
            RarityScore::Mixture { .. } => TailRegionSummary {
                score: "mixture_neg_log_density".into(),
                threshold: self.threshold,
                column: self.column,
                kde_bandwidth: None,
                kde_points: None,
            },
            RarityScore::Kde { points, bandwidth } => TailRegionSummary {
                score: "kde_neg_log_density".into(),
                threshold: self.threshold,
                column: self.column,
                kde_bandwidth: Some(*bandwidth),
                kde_points: Some(points.len()),
            },
        }
    }
}

/// Type-7 (linear interpolation) quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `Σ P ln(P/Q)` after normalizing both histograms, adding `smoothing` to every
/// bin and renormalizing.
pub fn kl_divergence_smoothed(p: &[f64], q: &[f64], smoothing: f64) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::shape("histograms", p.len(), q.len()));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Validation(format!("smoothing must be >= 0, got {smoothing}")));
    }
    let normalize = |h: &[f64]| -> Vec<f64> {
        let total: f64 = h.iter().sum();
        let k = h.len() as f64;
        h.iter()
            .map(|v| {
                let f = if total > 0.0 { v / total } else { 0.0 };
                (f + smoothing) / (1.0 + k * smoothing)
            })
            .collect()
    };
    let (p, q) = (normalize(p), normalize(q));
    Ok(p.iter()
        .zip(&q)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum())
}

fn histogram(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; edges.len() + 1];
    for v in values {
        counts[edges.partition_point(|e| e <= v)] += 1.0;
    }
    counts
}

/// KL divergence between real and model samples restricted to `region`.
///
/// Bin edges are the equal-probability quantiles of the real tail samples;
/// the outermost bins are open-ended.
pub fn tail_kl<R: AsRef<[f64]>, M: AsRef<[f64]>>(
    real: &[R],
    model: &[M],
    region: &TailRegion,
    bins: usize,
    smoothing: f64,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Validation(format!("tail KL needs at least 2 bins, got {bins}")));
    }
    let restrict = |rows: &mut dyn Iterator<Item = &[f64]>| -> Vec<f64> {
        rows.filter(|r| region.contains(r)).map(|r| r[region.column]).collect()
    };
    let mut real_tail = restrict(&mut real.iter().map(|r| r.as_ref()));
    if real_tail.is_empty() {
        return Err(Error::UndefinedMetric("no real samples fall in the tail region".into()));
    }
    let model_tail = restrict(&mut model.iter().map(|r| r.as_ref()));
    real_tail.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins)
        .map(|k| quantile_sorted(&real_tail, k as f64 / bins as f64))
        .collect();
    kl_divergence_smoothed(&histogram(&real_tail, &edges), &histogram(&model_tail, &edges), smoothing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub recall: f64,
    pub true_positives: usize,
    pub false_negatives: usize,
}

impl Recall {
    pub fn from_counts(true_positives: usize, false_negatives: usize) -> Result<Self> {
        let total = true_positives + false_negatives;
        if total == 0 {
            return Err(Error::UndefinedMetric("recall over an empty rare set".into()));
        }
        Ok(Recall {
            recall: true_positives as f64 / total as f64,
            true_positives,
            false_negatives,
        })
    }
}

/// A held-out rare sample counts as a true positive when the mean of its
/// noise-free reconstruction also satisfies `is_rare`.
pub fn rare_recall<R, P, F>(held_out_rare: &[R], model: &P, is_rare: F) -> Result<Recall>
where
    R: AsRef<[f64]>,
    P: Predictor + ?Sized,
    F: Fn(&[f64]) -> bool,
{
    if held_out_rare.is_empty() {
        return Err(Error::UndefinedMetric("recall over an empty rare set".into()));
    }
    let (mut tp, mut fns) = (0, 0);
    for x in held_out_rare {
        let x = x.as_ref();
        if !is_rare(x) {
            return Err(Error::Validation("held-out set contains a sample outside the rare rule".into()));
        }
        if is_rare(&model.predict(x)?.mean) {
            tp += 1;
        } else {
            fns += 1;
        }
    }
    Recall::from_counts(tp, fns)
}

/// Detection-style recall: a rare sample is detected when the model's NLL of
/// it exceeds `nll_threshold`.
pub fn rare_recall_detection<R, P>(held_out_rare: &[R], model: &P, nll_threshold: f64) -> Result<Recall>
where
    R: AsRef<[f64]>,
    P: Predictor + ?Sized,
{
    let (mut tp, mut fns) = (0, 0);
    for x in held_out_rare {
        let x = x.as_ref();
        if model.predict(x)?.nll(x) > nll_threshold {
            tp += 1;
        } else {
            fns += 1;
        }
    }
    Recall::from_counts(tp, fns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub alpha: f64,
    pub empirical: f64,
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Validation("coverage needs at least one level".into()));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) || alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!(
            "coverage levels must be strictly increasing in (0, 1), got {alphas:?}"
        )));
    }
    Ok(())
}

/// `Ĉ(α) = (1/N) Σ 1{y_i ∈ I_α(x_i)}` where `I_α` is `mean ± z_{(1+α)/2}·σ` in
/// every dimension and the target is the input itself.
pub fn coverage_curve<R, P>(model: &P, test_set: &[R], alphas: &[f64]) -> Result<Vec<CoveragePoint>>
where
    R: AsRef<[f64]>,
    P: Predictor + ?Sized,
{
    check_alphas(alphas)?;
    if test_set.is_empty() {
        return Err(Error::UndefinedMetric("coverage over an empty test set".into()));
    }
    let normal = Normal::standard();
    let quantiles: Vec<f64> = alphas.iter().map(|a| normal.inverse_cdf(0.5 * (1.0 + a))).collect();
    let mut covered = vec![0usize; alphas.len()];
    for y in test_set {
        let y = y.as_ref();
        let head = model.predict(y)?;
        if head.dim() != y.len() {
            return Err(Error::shape("predictive head", y.len(), head.dim()));
        }
        let sd = head.std_dev();
        for (c, q) in covered.iter_mut().zip(&quantiles) {
            let inside = y
                .iter()
                .zip(head.mean.iter().zip(&sd))
                .all(|(v, (m, s))| (v - m).abs() <= q * s);
            if inside {
                *c += 1;
            }
        }
    }
    let n = test_set.len() as f64;
    Ok(alphas
        .iter()
        .zip(covered)
        .map(|(&alpha, c)| CoveragePoint {
            alpha,
            empirical: c as f64 / n,
        })
        .collect())
}

/// Exact `W₁` between two empirical distributions: the integral of
/// `|F_a − F_b|` over the merged order statistics.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("Wasserstein distance needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation("Wasserstein inputs must be finite".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Mean of per-feature `W₁` distances.
pub fn wasserstein_per_feature<R: AsRef<[f64]>, M: AsRef<[f64]>>(real: &[R], model: &[M]) -> Result<f64> {
    let d = real
        .first()
        .map(|r| r.as_ref().len())
        .ok_or_else(|| Error::Validation("Wasserstein distance needs two non-empty samples".into()))?;
    let mut total = 0.0;
    for j in 0..d {
        let a: Vec<f64> = real.iter().map(|r| r.as_ref()[j]).collect();
        let b: Vec<f64> = model
            .iter()
            .map(|r| {
                r.as_ref()
                    .get(j)
                    .copied()
                    .ok_or_else(|| Error::shape("model sample", d, r.as_ref().len()))
            })
            .collect::<Result<_>>()?;
        total += wasserstein_1d(&a, &b)?;
    }
    Ok(total / d as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_manifest_hash: String,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub bins: usize,
    pub smoothing: f64,
    pub region: TailRegionSummary,
    pub generated_samples: usize,
    pub generation_seed: u64,
    pub shots: Option<usize>,
    pub sample_head: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tail_kl: f64,
    pub rare_recall: Recall,
    pub coverage_curve: Vec<CoveragePoint>,
    /// Mean `|Ĉ(α) − α|` over the curve.
    pub coverage_error: f64,
    pub wasserstein_1d: f64,
    pub estimator: EstimatorSettings,
    pub provenance: Provenance,
}

/// Mean absolute calibration gap of a coverage curve.
pub fn coverage_error(curve: &[CoveragePoint]) -> f64 {
    curve.iter().map(|p| (p.empirical - p.alpha).abs()).sum::<f64>() / curve.len().max(1) as f64
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationOptions {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_generated")]
    pub generated_samples: usize,
    #[serde(default)]
    pub shots: Option<usize>,
    #[serde(default = "default_sample_head")]
    pub sample_head: bool,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}
fn default_alphas() -> Vec<f64> {
    vec![0.5, 0.8, 0.9, 0.95]
}
fn default_generated() -> usize {
    10_000
}
fn default_sample_head() -> bool {
    true
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            bins: default_bins(),
            smoothing: default_smoothing(),
            alphas: default_alphas(),
            generated_samples: default_generated(),
            shots: None,
            sample_head: default_sample_head(),
        }
    }
}

impl EvaluationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("bins must be at least 2, got {}", self.bins)));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config(format!("smoothing must be >= 0, got {}", self.smoothing)));
        }
        if self.generated_samples == 0 {
            return Err(Error::Config("generated_samples must be at least 1".into()));
        }
        if self.shots == Some(0) {
            return Err(Error::Config("shots must be at least 1".into()));
        }
        check_alphas(&self.alphas).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Every metric of `model` on the test split of `dataset`.
///
/// Synthetic samples for the distributional metrics are drawn from `src`.
/// Held-out rare samples are the test rows carrying the rare label; a
/// reconstruction counts as rare under the dataset's labeling rule.
pub fn evaluate<E: Entropy + ?Sized>(
    model: &QegmModel,
    dataset: &LabeledDataset,
    region: &TailRegion,
    opts: &EvaluationOptions,
    generation_seed: u64,
    src: &mut E,
    provenance: Provenance,
) -> Result<MetricsReport> {
    opts.validate()?;
    if model.data_dim() != dataset.dim() {
        return Err(Error::shape("model data dimension", dataset.dim(), model.data_dim()));
    }
    let split = dataset.split()?;
    let test = dataset.rows(&split.test);
    let generated = model.generate(
        opts.generated_samples,
        src,
        &GenerateOptions {
            shots: opts.shots,
            sample_head: opts.sample_head,
        },
    )?;
    let tail_kl = tail_kl(&test, &generated, region, opts.bins, opts.smoothing)?;

    let (mut tp, mut fns) = (0, 0);
    for &i in split.test.iter().filter(|&&i| dataset.rare_mask[i]) {
        if dataset.is_rare_standardized(&model.reconstruct(&dataset.samples[i])?.mean)? {
            tp += 1;
        } else {
            fns += 1;
        }
    }
    let rare_recall = Recall::from_counts(tp, fns)?;
    let coverage = coverage_curve(model, &test, &opts.alphas)?;
    let wasserstein = wasserstein_per_feature(&test, &generated)?;
    Ok(MetricsReport {
        tail_kl,
        rare_recall,
        coverage_error: coverage_error(&coverage),
        coverage_curve: coverage,
        wasserstein_1d: wasserstein,
        estimator: EstimatorSettings {
            bins: opts.bins,
            smoothing: opts.smoothing,
            region: region.summary(),
            generated_samples: opts.generated_samples,
            generation_seed,
            shots: opts.shots,
            sample_head: opts.sample_head,
        },
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Identity;

    impl Predictor for Identity {
        fn predict(&self, x: &[f64]) -> Result<GaussianHead> {
            Ok(GaussianHead {
                mean: x.to_vec(),
                log_variance: vec![0.0; x.len()],
            })
        }
    }

    struct Constant(f64, f64);

    impl Predictor for Constant {
        fn predict(&self, x: &[f64]) -> Result<GaussianHead> {
            Ok(GaussianHead {
                mean: vec![self.0; x.len()],
                log_variance: vec![self.1; x.len()],
            })
        }
    }

    fn everything() -> TailRegion {
        TailRegion {
            score: RarityScore::Mixture {
                mixture: MixtureSpec {
                    weights: vec![1.0],
                    means: vec![0.0],
                    variances: vec![1.0],
                },
                mean: 0.0,
                std: 1.0,
            },
            threshold: f64::NEG_INFINITY,
            column: 0,
        }
    }

    #[test]
    fn two_bin_kl_by_direct_summation() {
        let kl = kl_divergence_smoothed(&[0.75, 0.25], &[0.5, 0.5], DEFAULT_SMOOTHING).unwrap();
        let direct = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((kl - direct).abs() < 1e-8);
        assert!((kl - 0.13081).abs() < 1e-5);
    }

    #[test]
    fn tail_kl_identical_is_zero() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin() * 3.0]).collect();
        let kl = tail_kl(&xs, &xs, &everything(), DEFAULT_BINS, DEFAULT_SMOOTHING).unwrap();
        assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn tail_kl_errors_without_real_tail() {
        let mut region = everything();
        region.threshold = f64::INFINITY;
        let xs = vec![vec![1.0]];
        assert!(matches!(
            tail_kl(&xs, &xs, &region, 4, DEFAULT_SMOOTHING),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(tail_kl(&xs, &xs, &everything(), 1, DEFAULT_SMOOTHING).is_err());
    }

    #[test]
    fn disjoint_supports_large_and_monotone_in_smoothing() {
        let real: Vec<Vec<f64>> = (0..100).map(|i| vec![3.0 + i as f64 / 100.0]).collect();
        let model: Vec<Vec<f64>> = (0..100).map(|i| vec![-4.0 + i as f64 / 100.0]).collect();
        let mut prev = f64::INFINITY;
        for eps in [1e-12, 1e-9, 1e-6, 1e-3] {
            let kl = tail_kl(&real, &model, &everything(), 8, eps).unwrap();
            assert!(kl.is_finite() && kl > 1.0);
            assert!(kl < prev);
            prev = kl;
        }
    }

    #[test]
    fn recall_cases() {
        let rule = |x: &[f64]| x[0] < -2.5;
        let rare: Vec<Vec<f64>> = vec![vec![-3.0], vec![-4.0], vec![-2.6]];
        assert_eq!(rare_recall(&rare, &Identity, rule).unwrap().recall, 1.0);
        assert_eq!(rare_recall(&rare, &Constant(0.0, 0.0), rule).unwrap().recall, 0.0);
        let r = Recall::from_counts(14, 2).unwrap();
        assert_eq!(r.recall, 0.875);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(rare_recall(&empty, &Identity, rule), Err(Error::UndefinedMetric(_))));
        assert!(rare_recall(&[vec![0.0]], &Identity, rule).is_err());
    }

    #[test]
    fn coverage_of_degenerate_head_counts_exact_matches() {
        let ys = vec![vec![0.0], vec![1.0], vec![0.0], vec![2.0]];
        let curve = coverage_curve(&Constant(0.0, f64::NEG_INFINITY), &ys, &[0.5, 0.9]).unwrap();
        assert_eq!(curve[0].empirical, 0.5);
        assert!(coverage_curve(&Identity, &ys, &[0.9, 0.5]).is_err());
        assert!(coverage_curve(&Identity, &ys, &[0.0]).is_err());
    }

    #[test]
    fn wasserstein_basics() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert!((wasserstein_1d(&[0.0], &[2.5]).unwrap() - 2.5).abs() < 1e-15);
        assert!((wasserstein_1d(&[0.0, 0.0], &[2.5]).unwrap() - 2.5).abs() < 1e-15);
        // half the mass moves by 1
        assert!((wasserstein_1d(&[0.0, 1.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn silverman_on_known_sample() {
        let pts: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = silverman_bandwidth(&pts);
        // σ ≈ 28.87, IQR/1.34 ≈ 36.94, so σ wins
        let sigma = (pts.iter().map(|x| (x - 49.5f64).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!((h - 0.9 * sigma * 100f64.powf(-0.2)).abs() < 1e-12);
    }
}
