use proptest::prelude::*;
use qegm_core::data::MixtureSpec;
use qegm_core::metrics::{
    coverage_curve, kl_divergence_smoothed, rare_recall, tail_kl, wasserstein_1d, Predictor, RarityScore, TailRegion,
};
use qegm_core::neural::GaussianHead;
use qegm_core::randomness::{standard_normal, RandomnessSource};

/// Predicts the data-generating law N(μ, s²) whatever the input.
struct TrueModel {
    mean: f64,
    std: f64,
}

impl Predictor for TrueModel {
    fn predict(&self, _x: &[f64]) -> qegm_core::Result<GaussianHead> {
        Ok(GaussianHead {
            mean: vec![self.mean],
            log_variance: vec![2.0 * self.std.ln()],
        })
    }
}

/// Reproduces inputs whose fractional part is below one half and sends the
/// rest to zero.
struct HalfShrink;

impl Predictor for HalfShrink {
    fn predict(&self, x: &[f64]) -> qegm_core::Result<GaussianHead> {
        let m = if x[0].fract() < 0.5 { x[0] } else { 0.0 };
        Ok(GaussianHead {
            mean: vec![m],
            log_variance: vec![0.0],
        })
    }
}

fn normal_rows(n: usize, mean: f64, std: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut src = RandomnessSource::seeded(seed);
    (0..n).map(|_| vec![mean + std * standard_normal(&mut src).unwrap()]).collect()
}

/// `|v| ≥ 2` under a standard normal score.
fn two_sigma_region() -> TailRegion {
    let score = RarityScore::Mixture {
        mixture: MixtureSpec {
            weights: vec![1.0],
            means: vec![0.0],
            variances: vec![1.0],
        },
        mean: 0.0,
        std: 1.0,
    };
    let threshold = score.score(2.0);
    TailRegion {
        score,
        threshold,
        column: 0,
    }
}

#[test]
fn coverage_of_the_true_model_matches_nominal_levels() {
    let alphas = [0.5, 0.8, 0.9, 0.95];
    let model = TrueModel { mean: 1.5, std: 0.7 };
    let test = normal_rows(10_000, 1.5, 0.7, 8);
    let curve = coverage_curve(&model, &test, &alphas).unwrap();
    for p in &curve {
        assert!((p.empirical - p.alpha).abs() <= 0.02, "α={} Ĉ={}", p.alpha, p.empirical);
    }
}

#[test]
fn wasserstein_between_unit_shifted_normals_is_one() {
    let a: Vec<f64> = normal_rows(100_000, 0.0, 1.0, 1).into_iter().map(|r| r[0]).collect();
    let b: Vec<f64> = normal_rows(100_000, 1.0, 1.0, 2).into_iter().map(|r| r[0]).collect();
    let w = wasserstein_1d(&a, &b).unwrap();
    assert!((w - 1.0).abs() <= 0.05, "W1 = {w}");
}

#[test]
fn two_bin_kl_matches_hand_value() {
    // 0.75 ln 1.5 + 0.25 ln 0.5, with counts normalised internally
    let direct = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
    let kl = kl_divergence_smoothed(&[30.0, 10.0], &[7.0, 7.0], 1e-9).unwrap();
    assert!((kl - direct).abs() < 1e-8);
    assert!((kl - 0.13081).abs() < 1e-5, "{kl}");
}

#[test]
fn recall_fourteen_of_sixteen() {
    let held_out: Vec<Vec<f64>> = (0..16).map(|i| vec![3.0 + i as f64]).collect();
    // the model pulls the last two back inside the common region
    struct Shrink;
    impl Predictor for Shrink {
        fn predict(&self, x: &[f64]) -> qegm_core::Result<GaussianHead> {
            let m = if x[0] >= 17.0 { 0.0 } else { x[0] };
            Ok(GaussianHead {
                mean: vec![m],
                log_variance: vec![0.0],
            })
        }
    }
    let r = rare_recall(&held_out, &Shrink, |x| x[0] > 2.5).unwrap();
    assert_eq!((r.true_positives, r.false_negatives), (14, 2));
    assert_eq!(r.recall, 0.875);
}

#[test]
fn tail_kl_on_a_matched_model_is_small_and_on_a_shifted_model_large() {
    let region = two_sigma_region();
    let real = normal_rows(50_000, 0.0, 1.0, 3);
    let same = normal_rows(50_000, 0.0, 1.0, 4);
    let wide = normal_rows(50_000, 0.0, 2.0, 5);
    let near = tail_kl(&real, &same, &region, 8, 1e-9).unwrap();
    let far = tail_kl(&real, &wide, &region, 8, 1e-9).unwrap();
    assert!(near < 0.01, "matched tail KL {near}");
    assert!(far > 10.0 * near, "{far} vs {near}");
    assert_eq!(tail_kl(&real, &real, &region, 8, 1e-9).unwrap(), 0.0);
}

#[test]
fn metrics_are_deterministic() {
    let region = two_sigma_region();
    let real = normal_rows(5000, 0.0, 1.0, 6);
    let model = normal_rows(5000, 0.1, 1.2, 7);
    let a = tail_kl(&real, &model, &region, 16, 1e-9).unwrap();
    let b = tail_kl(&real, &model, &region, 16, 1e-9).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let c1 = coverage_curve(&TrueModel { mean: 0.0, std: 1.0 }, &real, &[0.5, 0.9]).unwrap();
    let c2 = coverage_curve(&TrueModel { mean: 0.0, std: 1.0 }, &real, &[0.5, 0.9]).unwrap();
    assert_eq!(c1, c2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tail_kl_is_non_negative(
        real in prop::collection::vec(-6.0f64..6.0, 20..200),
        model in prop::collection::vec(-6.0f64..6.0, 0..200),
        bins in 2usize..12,
    ) {
        let region = two_sigma_region();
        let real: Vec<Vec<f64>> = real.into_iter().map(|v| vec![v]).collect();
        let model: Vec<Vec<f64>> = model.into_iter().map(|v| vec![v]).collect();
        prop_assume!(real.iter().any(|r| region.contains(r)));
        let kl = tail_kl(&real, &model, &region, bins, 1e-9).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(tail_kl(&real, &real, &region, bins, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn recall_is_order_invariant_and_bounded(
        values in prop::collection::vec(3.01f64..10.0, 1..60),
        seed in any::<u64>(),
    ) {
        let held: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        let mut shuffled = held.clone();
        let mut src = RandomnessSource::seeded(seed);
        for i in (1..shuffled.len()).rev() {
            let j = ((qegm_core::Entropy::uniform(&mut src).unwrap() * (i + 1) as f64) as usize).min(i);
            shuffled.swap(i, j);
        }
        let is_rare = |x: &[f64]| x[0] > 3.0;
        let a = rare_recall(&held, &HalfShrink, is_rare).unwrap();
        let b = rare_recall(&shuffled, &HalfShrink, is_rare).unwrap();
        let kept = values.iter().filter(|v| v.fract() < 0.5).count();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.true_positives, kept);
        prop_assert_eq!(a.recall, kept as f64 / values.len() as f64);
        prop_assert!((0.0..=1.0).contains(&a.recall));
    }

    #[test]
    fn wasserstein_equal_sizes_matches_sorted_pairing(
        a in prop::collection::vec(-50.0f64..50.0, 1..100),
        seed in any::<u64>(),
    ) {
        let n = a.len();
        let mut src = RandomnessSource::seeded(seed);
        let b: Vec<f64> = (0..n).map(|_| 10.0 * standard_normal(&mut src).unwrap()).collect();
        let (mut sa, mut sb) = (a.clone(), b.clone());
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let oracle = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
        let w = wasserstein_1d(&a, &b).unwrap();
        prop_assert!((w - oracle).abs() <= 1e-9 * oracle.max(1.0), "{} vs {}", w, oracle);
    }

    #[test]
    fn coverage_is_monotone_in_alpha(
        values in prop::collection::vec(-4.0f64..4.0, 1..200),
        mut alphas in prop::collection::btree_set(1u32..999, 1..10),
    ) {
        let test: Vec<Vec<f64>> = values.into_iter().map(|v| vec![v]).collect();
        let alphas: Vec<f64> = std::mem::take(&mut alphas).into_iter().map(|a| a as f64 / 1000.0).collect();
        let curve = coverage_curve(&TrueModel { mean: 0.3, std: 1.1 }, &test, &alphas).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[0].empirical <= w[1].empirical);
        }
    }
}
