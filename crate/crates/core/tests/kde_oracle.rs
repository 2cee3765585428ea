mod oracles;

use ndarray::{array, Array2};
use oracles::{naive_kde_log_density, relative_error};
use proptest::prelude::*;
use pude::data::{gen_synthetic, SynthSpec};
use pude::kde::{fit, KdeConfig, KdeRatioScorer};

fn support_and_query(max_d: usize) -> impl Strategy<Value = (Array2<f64>, f64, Vec<f64>)> {
    (1..=max_d, 1usize..40, 0.2f64..3.0).prop_flat_map(|(d, n, h)| {
        (
            prop::collection::vec(-4.0f64..4.0, n * d),
            Just(h),
            prop::collection::vec(-5.0f64..5.0, d),
        )
            .prop_map(move |(v, h, q)| (Array2::from_shape_vec((n, d), v).unwrap(), h, q))
    })
}

proptest! {
    #[test]
    fn log_density_matches_naive_sum((support, h, q) in support_and_query(6)) {
        let model = fit(support.clone(), h).unwrap();
        let got = model.log_density(ndarray::ArrayView1::from(&q)).unwrap();
        let want = naive_kde_log_density(&support, h, &q);
        prop_assert!(relative_error(got, want, 1e-300) <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn batch_equals_single_queries((support, h, q) in support_and_query(4)) {
        let model = fit(support, h).unwrap();
        let d = q.len();
        let queries = Array2::from_shape_fn((3, d), |(i, j)| q[j] + i as f64);
        let batch = model.log_density_batch(queries.view()).unwrap();
        for (i, row) in queries.rows().into_iter().enumerate() {
            prop_assert_eq!(batch[i], model.log_density(row).unwrap());
        }
    }

    #[test]
    fn shared_bandwidth_ratio_is_bounded_by_log_support_fraction(
        (support, h, q) in support_and_query(3),
        extra in 1usize..30,
    ) {
        // f̂ over LP ∪ U is a mixture containing f̂_p with weight |LP|/|X|.
        let d = support.ncols();
        let more = Array2::from_shape_fn((extra, d), |(i, j)| (i * d + j) as f64 * 0.37 - 3.0);
        let all = ndarray::concatenate(ndarray::Axis(0), &[support.view(), more.view()]).unwrap();
        let cfg = KdeConfig { bandwidth_p: h, bandwidth_q: h, ..KdeConfig::default() };
        let scorer = KdeRatioScorer::fit(support.view(), all.view(), &cfg, 0).unwrap();
        let s = scorer.ratio_score(ndarray::ArrayView1::from(&q)).unwrap();
        let bound = (all.nrows() as f64 / support.nrows() as f64).ln();
        prop_assert!(s <= bound + 1e-9, "{s} > {bound}");
    }
}

#[test]
fn one_dimensional_density_integrates_to_one() {
    let support = array![[-1.3], [0.0], [0.4], [2.5], [2.6]];
    let h = 0.7;
    let model = fit(support.clone(), h).unwrap();
    let (lo, hi) = (-1.3 - 6.0 * h, 2.6 + 6.0 * h);
    let steps = 20_000;
    let dx = (hi - lo) / steps as f64;
    let f = |x: f64| model.log_density(array![x].view()).unwrap().exp();
    let integral: f64 = (0..steps)
        .map(|i| 0.5 * dx * (f(lo + i as f64 * dx) + f(lo + (i + 1) as f64 * dx)))
        .sum();
    assert!((integral - 1.0).abs() < 1e-3, "{integral}");
}

#[test]
fn ratio_sign_at_cluster_centres() {
    let u = gen_synthetic(&SynthSpec::two_gaussian(2, 0.5, 2000, 11)).unwrap();
    let mut lp_spec = SynthSpec::two_gaussian(2, 1.0, 50, 12);
    lp_spec.id_prefix = "lp".into();
    let lp = gen_synthetic(&lp_spec).unwrap();
    let rows = |c: &pude::Corpus| {
        Array2::from_shape_fn((c.len(), 2), |(i, j)| c.docs()[i].vector[j] as f64)
    };
    let (lp, u) = (rows(&lp), rows(&u));
    let all = ndarray::concatenate(ndarray::Axis(0), &[lp.view(), u.view()]).unwrap();
    let scorer = KdeRatioScorer::fit(lp.view(), all.view(), &KdeConfig::default(), 0).unwrap();
    assert!(scorer.ratio_score(array![2.0, 0.0].view()).unwrap() > 0.0);
    assert!(scorer.ratio_score(array![-2.0, 0.0].view()).unwrap() < 0.0);
}
