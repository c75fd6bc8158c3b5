use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{EnvConfig, ExperimentConfig, MethodId, WeightEstimator};
use super::metrics::{coverage, mean_length, per_label_coverage};
use super::report::{CellFailure, Report, SeedRow};
use crate::baselines::{sba_interval, wis_cdf, wis_interval};
use crate::conformal::{
    class_balanced_copp, copp_predict, standard_cp, union_cp, ActionCalibration, Calibration,
    CalibrationRecord, Candidates, CqrScore, CumprobScore, ScoreFn,
};
use crate::data::{Action, BanditDataset, LoggedSample, SplitSpec};
use crate::envs::{gen_synthetic, oracle_interval, to_bandit, BlobOutcome, GaussianBlobs, SyntheticEnv};
use crate::error::{Error, Result};
use crate::models::{
    arch, fit_behavior_policy, fit_gaussian_conditional, fit_label_model, fit_quantile_pair,
    fit_softmax, ActionEncoding, TrainOpts,
};
use crate::policy::{Policy, PolicySpec};
use crate::sets::PredictionSet;
use crate::weights::{exact_sum_weight, exact_weight, fit_direct_weight, mc_weight, WeightFn};

/// Run every seed of `cfg` (in parallel) and aggregate. Model-fitting
/// failures mark the seed failed; per-cell failures mark the cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let per_seed: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut out = SeedOutcome::default();
            if let Err(e) = run_seed(cfg, seed, &mut out) {
                out.failures.push(CellFailure {
                    seed,
                    method: None,
                    eps_star: None,
                    message: e.to_string(),
                });
            }
            out
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for o in per_seed {
        rows.extend(o.rows);
        failures.extend(o.failures);
        warnings.extend(o.warnings);
    }
    Ok(Report::assemble(cfg.clone(), rows, failures, warnings))
}

#[derive(Default)]
struct SeedOutcome {
    rows: Vec<SeedRow>,
    failures: Vec<CellFailure>,
    warnings: Vec<String>,
}

/// Independent stream `id` of the seed's generator.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn train_opts(cfg: &ExperimentConfig, seed: u64, k: u64) -> TrainOpts {
    cfg.train.clone().with_seed(seed.wrapping_mul(1_000_003).wrapping_add(k))
}

fn predict_all<F>(test: &BanditDataset, f: F) -> Result<Vec<PredictionSet>>
where
    F: Fn(usize, &LoggedSample) -> Result<PredictionSet> + Sync,
{
    test.samples().par_iter().enumerate().map(|(i, s)| f(i, s)).collect()
}

struct Cell<'a> {
    seed: u64,
    eps: f64,
    test: &'a BanditDataset,
    num_labels: Option<usize>,
}

impl Cell<'_> {
    fn record(&self, out: &mut SeedOutcome, method: MethodId, result: Result<(Vec<PredictionSet>, u64)>) {
        let row = result.and_then(|(sets, floor_hits)| {
            let truths: Vec<f64> = self.test.iter().map(|s| s.y).collect();
            let (cov, cov_se) = coverage(&sets, &truths)?;
            let len = mean_length(&sets)?;
            let unbounded = sets.iter().filter(|s| s.unbounded).count() as f64 / sets.len() as f64;
            let per_label = match self.num_labels {
                Some(l) => Some(
                    per_label_coverage(&sets, &truths, l)?
                        .into_iter()
                        .map(|(c, n)| (if n == 0 { None } else { Some(c) }, n))
                        .collect(),
                ),
                None => None,
            };
            Ok(SeedRow {
                method,
                eps_star: self.eps,
                seed: self.seed,
                coverage: cov,
                coverage_se: cov_se,
                length: len.mean,
                hull_length: len.hull_mean,
                unbounded_fraction: unbounded,
                floor_hits,
                per_label,
            })
        });
        match row {
            Ok(r) => {
                let tag = format!("{} eps_star={} seed={}", method, self.eps, self.seed);
                if r.floor_hits > 0 {
                    out.warnings.push(format!("{tag}: {} weight denominators hit the floor", r.floor_hits));
                }
                if r.unbounded_fraction > 0.0 {
                    out.warnings
                        .push(format!("{tag}: {:.4} of prediction sets are unbounded", r.unbounded_fraction));
                }
                out.rows.push(r);
            }
            Err(e) => out.failures.push(CellFailure {
                seed: self.seed,
                method: Some(method),
                eps_star: Some(self.eps),
                message: e.to_string(),
            }),
        }
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, out: &mut SeedOutcome) -> Result<()> {
    match &cfg.env {
        EnvConfig::ToyDiscrete { eps_b } => {
            let targets = cfg
                .eps_star
                .iter()
                .map(|&e| PolicySpec::toy_discrete(e))
                .collect::<Result<Vec<_>>>()?;
            run_synthetic(cfg, seed, SyntheticEnv::toy_discrete(), PolicySpec::toy_discrete(*eps_b)?, targets, out)
        }
        EnvConfig::ToyContinuous {} => {
            let targets = cfg.eps_star.iter().map(|&e| PolicySpec::toy_continuous(e)).collect();
            run_synthetic(cfg, seed, SyntheticEnv::toy_continuous(), PolicySpec::toy_continuous(0.0), targets, out)
        }
        EnvConfig::Blobs {
            classes,
            dim,
            radius,
            priors,
            eps_b,
            classifier_m,
        } => {
            let blobs = GaussianBlobs::ring(*classes, *dim, *radius, priors.clone())?;
            run_blobs(cfg, seed, &blobs, *eps_b, *classifier_m, out)
        }
    }
}

fn needs(cfg: &ExperimentConfig, ms: &[MethodId]) -> bool {
    cfg.methods.iter().any(|m| ms.contains(m))
}

fn score_records<S: ScoreFn>(score: &S, data: &BanditDataset) -> Vec<CalibrationRecord> {
    data.iter()
        .map(|s| CalibrationRecord {
            score: score.score(&s.x, s.y),
            x: s.x.clone(),
            y: s.y,
        })
        .collect()
}

fn copp_sets<W: WeightFn + ?Sized, S: ScoreFn>(
    test: &BanditDataset,
    cands: Candidates<'_>,
    score: &S,
    w: &W,
    records: &[CalibrationRecord],
    alpha: f64,
) -> Result<(Vec<PredictionSet>, u64)> {
    let calib = Calibration::new(records, w)?;
    let sets = predict_all(test, |_, s| copp_predict(&s.x, cands, score, w, &calib, alpha))?;
    Ok((sets, w.floor_hits()))
}

fn run_synthetic(
    cfg: &ExperimentConfig,
    seed: u64,
    env: SyntheticEnv,
    behavior: PolicySpec,
    targets: Vec<PolicySpec>,
    out: &mut SeedOutcome,
) -> Result<()> {
    use MethodId::*;
    let alpha = cfg.alpha;
    let data = gen_synthetic(&env, &behavior, cfg.m + cfg.n, &mut stream(seed, 0))?;
    let (train, cal) = crate::data::split_dataset(&data, SplitSpec { m: cfg.m, n: cfg.n, seed })?;

    let score = if needs(cfg, &[CoppGt, CoppEst, CoppRegressionWeights, StandardCp]) {
        let pair = fit_quantile_pair(&train, alpha / 2.0, 1.0 - alpha / 2.0, arch::QUANTILE, &train_opts(cfg, seed, 1), None)?;
        Some(CqrScore { pair })
    } else {
        None
    };
    let behavior_hat = if needs(cfg, &[CoppEst, CoppRegressionWeights, Wis]) {
        Some(fit_behavior_policy(&train, arch::BEHAVIOR, &train_opts(cfg, seed, 2))?)
    } else {
        None
    };
    let outcome_hat = if needs(cfg, &[CoppEst, Sba]) {
        Some(fit_gaussian_conditional(&train, arch::OUTCOME, &train_opts(cfg, seed, 3))?)
    } else {
        None
    };
    let per_action = if needs(cfg, &[UnionCp]) {
        let k = env.action_kind().num_actions().expect("validated discrete");
        let mut v = Vec::new();
        for a in 0..k {
            let is_a = |s: &LoggedSample| s.a == Action::Discrete(a);
            let Some(tr) = train.filter(is_a) else { continue };
            let pair = fit_quantile_pair(&tr, alpha / 2.0, 1.0 - alpha / 2.0, arch::QUANTILE, &train_opts(cfg, seed, 100 + a as u64), None)?;
            let score = CqrScore { pair };
            let calib = match cal.filter(is_a) {
                Some(c) => Some(Calibration::unweighted(c.iter().map(|s| score.score(&s.x, s.y)).collect())?),
                None => None,
            };
            v.push(ActionCalibration { score, calib });
        }
        if v.iter().all(|ac| ac.calib.is_none()) {
            return Err(Error::Size("no action has calibration data".into()));
        }
        v
    } else {
        Vec::new()
    };

    let cal_ys: Vec<f64> = cal.iter().map(|s| s.y).collect();
    let grid = cfg.grid.build(&cal_ys)?;
    let cands = Candidates::Grid(&grid);
    let records = score.as_ref().map(|s| score_records(s, &cal)).unwrap_or_default();
    let std_calib = match &score {
        Some(_) => Some(Calibration::unweighted(records.iter().map(|r| r.score).collect())?),
        None => None,
    };

    for (e, (&eps, target)) in cfg.eps_star.iter().zip(&targets).enumerate() {
        let test = gen_synthetic(&env, target, cfg.n_test, &mut stream(seed, 1 + e as u64))?;
        let cell = Cell {
            seed,
            eps,
            test: &test,
            num_labels: None,
        };
        for &method in &cfg.methods {
            let result: Result<(Vec<PredictionSet>, u64)> = match method {
                CoppGt => exact_weight(&env, target, &behavior)
                    .and_then(|w| copp_sets(&test, cands, score.as_ref().unwrap(), &w, &records, alpha)),
                CoppEst => {
                    let (m, b) = (outcome_hat.as_ref().unwrap(), behavior_hat.as_ref().unwrap());
                    let exact_sum = match cfg.weight_estimator {
                        WeightEstimator::Auto => env.action_kind().num_actions().is_some(),
                        WeightEstimator::ExactSum => true,
                        WeightEstimator::MonteCarlo => false,
                    };
                    let w: Result<Box<dyn WeightFn + '_>> = if exact_sum {
                        exact_sum_weight(m, b, target).map(|w| Box::new(w) as Box<dyn WeightFn>)
                    } else {
                        mc_weight(m, b, target, cfg.h, seed ^ 0x5eed).map(|w| Box::new(w) as Box<dyn WeightFn>)
                    };
                    w.and_then(|w| copp_sets(&test, cands, score.as_ref().unwrap(), &*w, &records, alpha))
                }
                CoppRegressionWeights => fit_direct_weight(
                    &train,
                    target,
                    behavior_hat.as_ref().unwrap(),
                    arch::OUTCOME,
                    &train_opts(cfg, seed, 10 + e as u64),
                )
                .and_then(|w| copp_sets(&test, cands, score.as_ref().unwrap(), &w, &records, alpha)),
                StandardCp => {
                    let (s, c) = (score.as_ref().unwrap(), std_calib.as_ref().unwrap());
                    predict_all(&test, |_, t| standard_cp(&t.x, cands, s, c, alpha)).map(|v| (v, 0))
                }
                UnionCp => predict_all(&test, |_, t| union_cp(&t.x, cands, &per_action, alpha)).map(|v| (v, 0)),
                Wis => wis_cdf(&cal, target, behavior_hat.as_ref().unwrap()).and_then(|(cdf, floors)| {
                    let set = wis_interval(&cdf, alpha)?;
                    Ok((vec![set; test.len()], floors as u64))
                }),
                Sba => {
                    let m = outcome_hat.as_ref().unwrap();
                    predict_all(&test, |i, t| {
                        let mut rng = stream(seed, (1u64 << 40) + ((e as u64) << 32) + i as u64);
                        sba_interval(&t.x, target, m, cfg.ell, alpha, &mut rng)
                    })
                    .map(|v| (v, 0))
                }
                Oracle => predict_all(&test, |_, t| {
                    let (lo, hi) = oracle_interval(&env, target, &t.x, alpha)?;
                    Ok(PredictionSet::interval(lo, hi))
                })
                .map(|v| (v, 0)),
                ClassBalancedCopp => Err(Error::Type("class-balanced sets need discrete outcomes".into())),
            };
            cell.record(out, method, result);
        }
    }
    Ok(())
}

fn run_blobs(
    cfg: &ExperimentConfig,
    seed: u64,
    blobs: &GaussianBlobs,
    eps_b: f64,
    classifier_m: usize,
    out: &mut SeedOutcome,
) -> Result<()> {
    use MethodId::*;
    let alpha = cfg.alpha;
    let k = blobs.num_classes();
    let mut rng = stream(seed, 0);
    let clf_rows = blobs.generate(classifier_m, &mut rng)?;
    let classifier = fit_softmax(
        &clf_rows.features,
        &clf_rows.labels,
        k,
        ActionEncoding::None,
        arch::BEHAVIOR,
        &train_opts(cfg, seed, 4),
    )?;
    let behavior = PolicySpec::ClassifierEpsilon {
        eps: eps_b,
        classifier: classifier.clone(),
    };
    let pool = blobs.generate(cfg.m + cfg.n, &mut rng)?;
    let data = to_bandit(&pool, &behavior, &mut rng)?;
    let (train, cal) = crate::data::split_dataset(&data, SplitSpec { m: cfg.m, n: cfg.n, seed })?;

    let label_model = fit_label_model(&train, arch::OUTCOME, &train_opts(cfg, seed, 3))?;
    let behavior_hat = fit_behavior_policy(&train, arch::BEHAVIOR, &train_opts(cfg, seed, 2))?;
    // P̂^{π_b}(y | x) = Σ_a π̂_b(a|x) P̂(y | x, a)
    let score = CumprobScore::new(|x: &[f64]| {
        let pb = behavior_hat.probs(x).expect("discrete behaviour model");
        let mut p = vec![0.0; 2];
        for (a, w) in pb.iter().enumerate() {
            for (acc, q) in p.iter_mut().zip(label_model.proba(x, &Action::Discrete(a))) {
                *acc += w * q;
            }
        }
        p
    });
    let records = score_records(&score, &cal);
    let std_calib = Calibration::unweighted(records.iter().map(|r| r.score).collect())?;
    let truth = BlobOutcome { blobs: blobs.clone() };
    let cands = Candidates::Labels(2);

    for (e, &eps) in cfg.eps_star.iter().enumerate() {
        let target = PolicySpec::ClassifierEpsilon {
            eps,
            classifier: classifier.clone(),
        };
        let mut trng = stream(seed, 1 + e as u64);
        let test_rows = blobs.generate(cfg.n_test, &mut trng)?;
        let test = to_bandit(&test_rows, &target, &mut trng)?;
        let cell = Cell {
            seed,
            eps,
            test: &test,
            num_labels: Some(2),
        };
        for &method in &cfg.methods {
            let result: Result<(Vec<PredictionSet>, u64)> = match method {
                CoppGt => exact_sum_weight(&truth, &behavior, &target)
                    .and_then(|w| copp_sets(&test, cands, &score, &w, &records, alpha)),
                CoppEst => exact_sum_weight(&label_model, &behavior_hat, &target)
                    .and_then(|w| copp_sets(&test, cands, &score, &w, &records, alpha)),
                StandardCp => predict_all(&test, |_, t| standard_cp(&t.x, cands, &score, &std_calib, alpha)).map(|v| (v, 0)),
                ClassBalancedCopp => exact_sum_weight(&truth, &behavior, &target).and_then(|w| {
                    let per_label = (0..2)
                        .map(|y| {
                            let sub: Vec<CalibrationRecord> =
                                records.iter().filter(|r| r.y == y as f64).cloned().collect();
                            if sub.is_empty() {
                                Ok(None)
                            } else {
                                Calibration::new(&sub, &w).map(Some)
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let sets = predict_all(&test, |_, t| class_balanced_copp(&t.x, 2, &score, &w, &per_label, alpha))?;
                    Ok((sets, w.floor_hits()))
                }),
                other => Err(Error::Type(format!("method {other} needs continuous outcomes"))),
            };
            cell.record(out, method, result);
        }
    }
    Ok(())
}
