//! Property tests for the invariants the library promises regardless of
//! inputs: splits, policies, weights, calibration quantiles and sets.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coppkit::conformal::{copp_predict, standard_cp, Calibration, Candidates, FnScore, Grid};
use coppkit::data::{split_dataset, Action, ActionKind, BanditDataset, LoggedSample, OutcomeKind, SplitSpec};
use coppkit::envs::{gen_synthetic, SyntheticEnv};
use coppkit::models::{fit_gaussian_conditional, QuantileNet, QuantilePair, TrainOpts, SIGMA_FLOOR};
use coppkit::policy::{Policy, PolicySpec};
use coppkit::weights::{exact_weight, FnWeight, ScaledWeight, UnitWeight, WeightFn};

fn dataset(n: usize) -> BanditDataset {
    let samples = (0..n)
        .map(|i| LoggedSample::new(vec![i as f64], Action::Discrete(i % 4), (i as f64).sin()))
        .collect();
    BanditDataset::new(samples, ActionKind::Discrete(4), OutcomeKind::Continuous).unwrap()
}

fn linear_score() -> FnScore<impl Fn(&[f64], f64) -> f64 + Send + Sync> {
    FnScore(|x: &[f64], y: f64| (y - 0.5 * x[0]).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn splits_are_disjoint_and_sized(total in 2usize..300, frac in 0.05f64..0.95, seed: u64) {
        let d = dataset(total);
        let m = ((total as f64 * frac) as usize).clamp(1, total - 1);
        let n = total - m;
        let (train, cal) = split_dataset(&d, SplitSpec { m, n, seed }).unwrap();
        prop_assert_eq!(train.len(), m);
        prop_assert_eq!(cal.len(), n);
        let mut ids: Vec<u64> = train.iter().chain(cal.iter()).map(|s| s.x[0] as u64).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), total);
    }

    #[test]
    fn oversized_splits_are_rejected(total in 1usize..50, extra in 1usize..10) {
        let d = dataset(total);
        let spec = SplitSpec { m: total, n: extra, seed: 0 };
        prop_assert!(split_dataset(&d, spec).is_err());
    }

    #[test]
    fn discrete_policy_rows_sum_to_one(eps in 0.0f64..=(1.0 / 3.0), x in -10.0f64..10.0) {
        let p = PolicySpec::toy_discrete(eps).unwrap();
        p.validate().unwrap();
        let probs = p.probs(&[x]).unwrap();
        prop_assert_eq!(probs.len(), 4);
        prop_assert!(probs.iter().all(|&q| q >= 0.0));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_family_eps_is_rejected(eps in prop_oneof![-1.0f64..-1e-9, 0.3334f64..2.0]) {
        prop_assert!(PolicySpec::toy_discrete(eps).is_err());
    }

    #[test]
    fn quantile_is_invariant_to_weight_scale(
        pairs in prop::collection::vec((-50.0f64..50.0, 0.0f64..5.0), 1..60),
        w_test in 0.0f64..5.0,
        level in 0.01f64..0.99,
        k in -20i32..20,
    ) {
        let (scores, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(weights.iter().sum::<f64>() + w_test > 0.0);
        // a power of two rescales every partial sum exactly
        let c = 2f64.powi(k);
        let base = Calibration::from_scores(scores.clone(), weights.clone()).unwrap();
        let scaled = Calibration::from_scores(scores, weights.iter().map(|w| w * c).collect()).unwrap();
        prop_assert_eq!(base.quantile(w_test, level).unwrap(), scaled.quantile(w_test * c, level).unwrap());
    }

    #[test]
    fn quantile_is_monotone_in_level(
        pairs in prop::collection::vec((-50.0f64..50.0, 0.01f64..5.0), 1..60),
        w_test in 0.0f64..5.0,
        a in 0.01f64..0.99,
        b in 0.01f64..0.99,
    ) {
        let (scores, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let cal = Calibration::from_scores(scores, weights).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cal.quantile(w_test, lo).unwrap() <= cal.quantile(w_test, hi).unwrap());
    }

    #[test]
    fn quantile_is_monotone_in_test_weight(
        pairs in prop::collection::vec((-50.0f64..50.0, 0.01f64..5.0), 1..60),
        w1 in 0.0f64..10.0,
        w2 in 0.0f64..10.0,
        level in 0.01f64..0.99,
    ) {
        let (scores, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let cal = Calibration::from_scores(scores, weights).unwrap();
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        prop_assert!(cal.quantile(lo, level).unwrap() <= cal.quantile(hi, level).unwrap());
    }

    #[test]
    fn smaller_alpha_gives_larger_sets(
        cal_pts in prop::collection::vec((-3.0f64..3.0, -5.0f64..5.0), 2..40),
        x in -3.0f64..3.0,
        a1 in 0.02f64..0.9,
        a2 in 0.02f64..0.9,
    ) {
        let score = linear_score();
        let w = FnWeight(|x: &[f64], y: f64| (0.3 * x[0] - 0.2 * y).exp());
        let scores: Vec<f64> = cal_pts.iter().map(|&(cx, cy)| coppkit::conformal::ScoreFn::score(&score, &[cx], cy)).collect();
        let weights: Vec<f64> = cal_pts.iter().map(|&(cx, cy)| w.eval(&[cx], cy).unwrap()).collect();
        let cal = Calibration::from_scores(scores, weights).unwrap();
        let grid = Grid::new(-8.0, 8.0, 80).unwrap();
        let (small, large) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let wide = copp_predict(&[x], Candidates::Grid(&grid), &score, &w, &cal, small).unwrap();
        let narrow = copp_predict(&[x], Candidates::Grid(&grid), &score, &w, &cal, large).unwrap();
        for &y in &grid.points {
            prop_assert!(!narrow.contains(y) || wide.contains(y));
        }
        prop_assert!(narrow.size() <= wide.size());
    }

    #[test]
    fn unit_weights_reduce_to_standard_cp(
        cal_pts in prop::collection::vec((-3.0f64..3.0, -5.0f64..5.0), 1..40),
        x in -3.0f64..3.0,
        alpha in 0.02f64..0.9,
        c in 0.1f64..10.0,
    ) {
        let score = linear_score();
        let scores: Vec<f64> = cal_pts.iter().map(|&(cx, cy)| (cy - 0.5 * cx).abs()).collect();
        let unit = Calibration::unweighted(scores.clone()).unwrap();
        let grid = Grid::new(-8.0, 8.0, 50).unwrap();
        let standard = standard_cp(&[x], Candidates::Grid(&grid), &score, &unit, alpha).unwrap();
        let copp = copp_predict(&[x], Candidates::Grid(&grid), &score, &UnitWeight, &unit, alpha).unwrap();
        prop_assert_eq!(&standard, &copp);
        // any constant weight is the same as no weight
        let w = ScaledWeight { inner: UnitWeight, factor: c };
        let scaled = Calibration::from_scores(scores, vec![c; cal_pts.len()]).unwrap();
        let labels = copp_predict(&[x], Candidates::Labels(7), &score, &w, &scaled, alpha).unwrap();
        let plain = standard_cp(&[x], Candidates::Labels(7), &score, &unit, alpha).unwrap();
        prop_assert_eq!(labels, plain);
    }

    #[test]
    fn identical_policies_have_unit_exact_weight(eps in 0.0f64..=(1.0 / 3.0), x in -6.0f64..6.0, y in -40.0f64..40.0) {
        let p = PolicySpec::toy_discrete(eps).unwrap();
        let w = exact_weight(&SyntheticEnv::toy_discrete(), p.clone(), p).unwrap();
        let v = w.eval(&[x], y).unwrap();
        // far tails underflow to the denominator floor, which is reported
        if w.floor_hits() == 0 {
            prop_assert_eq!(v, 1.0);
        } else {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn exact_weights_are_nonnegative(e_t in 0.0f64..=(1.0 / 3.0), e_b in 0.01f64..=(1.0 / 3.0), x in -6.0f64..6.0, y in -40.0f64..40.0) {
        let w = exact_weight(
            &SyntheticEnv::toy_discrete(),
            PolicySpec::toy_discrete(e_t).unwrap(),
            PolicySpec::toy_discrete(e_b).unwrap(),
        )
        .unwrap();
        let v = w.eval(&[x], y).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn quantile_pairs_never_cross(
        lo_coef in -5.0f64..5.0, lo_b in -5.0f64..5.0,
        hi_coef in -5.0f64..5.0, hi_b in -5.0f64..5.0,
        x in -100.0f64..100.0,
    ) {
        let pair = QuantilePair {
            lo: QuantileNet::linear(0.05, &[lo_coef], lo_b).unwrap(),
            hi: QuantileNet::linear(0.95, &[hi_coef], hi_b).unwrap(),
        };
        let (lo, hi) = pair.predict(&[x]);
        prop_assert!(lo <= hi);
    }

    #[test]
    fn dataset_csv_round_trips(
        rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 2), 0usize..3, -1e6f64..1e6), 1..30),
    ) {
        let samples = rows.into_iter().map(|(x, a, y)| LoggedSample::new(x, Action::Discrete(a), y)).collect();
        let d = BanditDataset::new(samples, ActionKind::Discrete(3), OutcomeKind::Continuous).unwrap();
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf).unwrap();
        let back = BanditDataset::read_csv_from(buf.as_slice(), ActionKind::Discrete(3), OutcomeKind::Continuous).unwrap();
        prop_assert_eq!(d, back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predicted_sd_respects_floor(params in prop::collection::vec(-1e3f64..1e3, 1..200), x in -50.0f64..50.0, a in 0usize..4) {
        let env = SyntheticEnv::toy_discrete();
        let data = gen_synthetic(&env, &PolicySpec::toy_discrete(0.3).unwrap(), 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let opts = TrainOpts { epochs: 1, ..TrainOpts::default() };
        let mut model = fit_gaussian_conditional(&data, &[4], &opts).unwrap();
        // scramble the scale network into arbitrary territory
        let p = model.sigma.params_mut();
        for (i, v) in p.iter_mut().enumerate() {
            *v = params[i % params.len()];
        }
        let (_, sd) = model.mean_sd(&[x], &Action::Discrete(a));
        prop_assert!(sd >= SIGMA_FLOOR * (1.0 - 1e-12), "sd = {sd}");
    }
}
