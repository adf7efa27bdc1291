use effect_risk::bounds::{
    interquantile_average, lower_bound_two_sided_range, lower_bound_variance, upper_bound_cate_cvar, CateSample,
    CorrelationSpec, RangeBoundParams,
};
use effect_risk::inference::{
    cvar_score, estimate, estimate_cate_cvar, estimate_curve, estimate_level_difference, estimate_lower_bound_mixture,
    estimate_lower_bound_shift, partial_id_interval, phi_score, rmse_shift_constant, subgroup_profile, CrossFit,
    EstimatorConfig, RowValues, SigmaSource, Target, VariantTag,
};
use effect_risk::nuisance::{
    arm_fn, covariate_fn, out_of_fold_quantile, FoldMode, FoldNuisance, LearnerConfig, NuisanceLearner,
    ObservationTable, OracleNuisance, RegressorSpec,
};
use effect_risk::risk::{two_sided_z, AlphaLevel, SampleVec};
use effect_risk::simlab::{generate, DgpKind, DgpSpec, LinearCateParams, SyntheticSample};
use effect_risk::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn al(a: f64) -> AlphaLevel {
    AlphaLevel::new(a).unwrap()
}

fn sample(n: usize, seed: u64) -> SyntheticSample {
    generate(&DgpSpec {
        kind: DgpKind::LinearCate(LinearCateParams::default()),
        n,
        seed,
    })
    .unwrap()
}

fn cfg(seed: u64) -> EstimatorConfig {
    EstimatorConfig::with_seed(seed)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn oracle_estimate_is_mean_of_scores_with_fold_quantiles() {
    let s = sample(600, 1);
    let oracle = s.truth.oracle();
    let c = cfg(11);
    let a = al(0.25);
    let r = estimate_cate_cvar(&s.table, a, &oracle, &c).unwrap();
    let plan = effect_risk::nuisance::make_fold_plan(600, 5, 11, FoldMode::Shuffled).unwrap();
    let nf = oracle.fit(&s.table).unwrap();
    let betas: Vec<f64> = (1..=5)
        .map(|k| out_of_fold_quantile(&s.truth.tau, &s.table.subset(&plan.complement(k)).unwrap(), a).unwrap())
        .collect();
    let phi: Vec<f64> = (0..600)
        .map(|i| {
            let t = &s.table;
            phi_score(
                t.row(i),
                t.treatment(i),
                t.outcome(i),
                &nf,
                betas[plan.fold_of(i) - 1],
                a,
            )
            .unwrap()
        })
        .collect();
    let mean = phi.iter().sum::<f64>() / 600.0;
    assert!((r.psi_hat - mean).abs() < 1e-12);
}

#[test]
fn zero_outcome_gives_quantile_terms_only() {
    let s = sample(400, 2);
    let table = s.table.with_outcome(vec![0.0; 400]).unwrap();
    let learner = OracleNuisance::new(covariate_fn(|_| 0.5), arm_fn(|_, _| 0.0), s.truth.tau.clone());
    let cf = CrossFit::fit(&table, &learner, 4, FoldMode::Literal, 0).unwrap();
    let a = al(0.3);
    let r = cf.report(&Target::Upper { alpha: a }, 0.9).unwrap();
    let mut total = 0.0;
    for i in 0..400 {
        let k = cf.plan().fold_of(i);
        let beta = cf.beta_hat(k, a).unwrap();
        let tau = (s.truth.tau)(table.row(i));
        total += if tau <= beta { beta * (1.0 - 1.0 / 0.3) } else { beta };
    }
    assert!((r.psi_hat - total / 400.0).abs() < 1e-12);
}

#[test]
fn report_interval_invariants() {
    let s = sample(500, 3);
    let learner = LearnerConfig::experimental(0.5);
    let cf = CrossFit::fit(&s.table, &learner, 5, FoldMode::Shuffled, 3).unwrap();
    for gamma in [0.5, 0.9, 0.99] {
        for a in [0.05, 0.3, 1.0] {
            let r = cf.report(&Target::Upper { alpha: al(a) }, gamma).unwrap();
            assert!(r.ci_lo <= r.psi_hat && r.psi_hat <= r.ci_hi);
            let width = r.ci_hi - r.ci_lo;
            assert!((width - 2.0 * two_sided_z(gamma) * r.se).abs() < 1e-12);
            assert_eq!(r.n, 500);
            assert_eq!(r.folds, 5);
            assert_eq!(r.meta.seed, 3);
        }
    }
}

#[test]
fn small_alpha_is_refused() {
    let s = sample(100, 4);
    let err = estimate_cate_cvar(&s.table, al(0.05), &s.truth.oracle(), &cfg(0)).unwrap_err();
    assert!(
        matches!(&err, Error::InvalidInput(m) if m.contains("alpha too small for n")),
        "{err}"
    );
    assert!(estimate_cate_cvar(&s.table, al(0.1), &s.truth.oracle(), &cfg(0)).is_ok());
}

struct FailingLearner;

impl NuisanceLearner for FailingLearner {
    fn fit(&self, train: &ObservationTable) -> effect_risk::Result<FoldNuisance> {
        if train.n() < 400 {
            LearnerConfig::experimental(0.5).fit(train)
        } else {
            Err(Error::InvalidInput("boom".into()))
        }
    }

    fn name(&self) -> String {
        "failing".into()
    }
}

#[test]
fn fold_failures_carry_the_fold_index() {
    let s = sample(500, 5);
    // folds 1..=5 have 100 rows each; every training set has 400 rows
    let err = estimate_cate_cvar(&s.table, al(0.5), &FailingLearner, &cfg(0)).unwrap_err();
    assert!(matches!(err, Error::Fold { fold: 1, .. }), "{err}");
}

#[test]
fn level_difference_at_equal_levels_is_zero() {
    let s = sample(400, 6);
    let r = estimate_level_difference(&s.table, al(0.3), al(0.3), &LearnerConfig::experimental(0.5), &cfg(1)).unwrap();
    assert_eq!(r.psi_hat, 0.0);
    assert_eq!(r.se, 0.0);
    assert!(estimate_level_difference(&s.table, al(0.4), al(0.3), &s.truth.oracle(), &cfg(1)).is_err());
}

#[test]
fn interquantile_scores_use_level_weights() {
    let s = sample(400, 7);
    let cf = CrossFit::fit(&s.table, &s.truth.oracle(), 5, FoldMode::Shuffled, 7).unwrap();
    let iq = cf
        .scores(&Target::Interquantile {
            lo: al(0.25),
            hi: al(0.75),
        })
        .unwrap();
    let lo = cf.scores(&Target::Upper { alpha: al(0.25) }).unwrap();
    let hi = cf.scores(&Target::Upper { alpha: al(0.75) }).unwrap();
    for i in 0..400 {
        assert!((iq.phi[i] - (1.5 * hi.phi[i] - 0.5 * lo.phi[i])).abs() < 1e-12);
    }
}

#[test]
fn interquantile_with_full_upper_level_approaches_ate_scores() {
    let s = sample(2000, 8);
    let cf = CrossFit::fit(&s.table, &s.truth.oracle(), 5, FoldMode::Shuffled, 8).unwrap();
    let iq = cf
        .report(
            &Target::Interquantile {
                lo: al(0.005),
                hi: al(1.0),
            },
            0.9,
        )
        .unwrap();
    let ate = cf.report(&Target::Upper { alpha: al(1.0) }, 0.9).unwrap();
    assert!(
        (iq.psi_hat - ate.psi_hat).abs() < 0.02,
        "{} vs {}",
        iq.psi_hat,
        ate.psi_hat
    );
}

#[test]
fn shift_subtracts_constant_exactly() {
    let s = sample(400, 9);
    let l = LearnerConfig::experimental(0.5);
    let base = estimate_cate_cvar(&s.table, al(0.2), &l, &cfg(2)).unwrap();
    let zero = estimate_lower_bound_shift(&s.table, al(0.2), 0.0, &l, &cfg(2)).unwrap();
    assert_eq!(zero.psi_hat, base.psi_hat);
    assert_eq!(zero.se, base.se);
    let one = estimate_lower_bound_shift(&s.table, al(0.2), 1.0, &l, &cfg(2)).unwrap();
    assert!((one.psi_hat - (base.psi_hat - 1.0)).abs() < 1e-12);
    assert!((one.se - base.se).abs() < 1e-12);
    assert!((one.ci_lo - (base.ci_lo - 1.0)).abs() < 1e-12);
    assert!((one.ci_hi - (base.ci_hi - 1.0)).abs() < 1e-12);
}

#[test]
fn rmse_shift_matches_noise_level() {
    // noise 1 in both arms: constant (1 + 1) / (2 * 0.25) = 4
    let s = sample(6000, 10);
    let c = rmse_shift_constant(&s.table, al(0.25), &RegressorSpec::boosted(100, 3, 0.1), 5, 1).unwrap();
    assert!((c - 4.0).abs() < 0.3, "{c}");
}

#[test]
fn mixture_with_zero_spread_is_upper() {
    let s = sample(500, 11);
    let l = LearnerConfig::experimental(0.5);
    let up = estimate_cate_cvar(&s.table, al(0.2), &l, &cfg(3)).unwrap();
    let mix =
        estimate_lower_bound_mixture(&s.table, al(0.2), RangeBoundParams::new(0.0).unwrap(), &l, &cfg(3)).unwrap();
    assert_eq!(up.psi_hat, mix.psi_hat);
    assert_eq!(up.se, mix.se);
}

#[test]
fn mixture_estimate_is_below_upper_estimate() {
    let mut below = 0;
    for seed in 0..20 {
        let s = sample(1000, 100 + seed);
        let cf = CrossFit::fit(&s.table, &LearnerConfig::experimental(0.5), 5, FoldMode::Shuffled, seed).unwrap();
        let up = cf.report(&Target::Upper { alpha: al(0.2) }, 0.9).unwrap();
        let mix = cf
            .report(
                &Target::LowerMixture {
                    alpha: al(0.2),
                    b: RangeBoundParams::new(0.5).unwrap(),
                },
                0.9,
            )
            .unwrap();
        below += usize::from(mix.psi_hat <= up.psi_hat);
    }
    assert_eq!(below, 20);
}

#[test]
fn variance_bound_with_zero_variance_is_upper() {
    let s = sample(500, 12);
    let cf = CrossFit::fit(&s.table, &LearnerConfig::experimental(0.5), 5, FoldMode::Shuffled, 4).unwrap();
    let up = cf.scores(&Target::Upper { alpha: al(0.3) }).unwrap();
    let var = cf
        .scores(&Target::LowerVariance {
            alpha: al(0.3),
            sigma: SigmaSource::Known(covariate_fn(|_| 0.0)),
        })
        .unwrap();
    for (a, b) in up.phi.iter().zip(&var.phi) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn variance_bound_loosens_as_correlation_falls() {
    let learner = LearnerConfig {
        variance: Some(RegressorSpec::ols()),
        ..LearnerConfig::experimental(0.5)
    };
    for seed in 0..5 {
        let s = sample(800, 200 + seed);
        let cf = CrossFit::fit(&s.table, &learner, 5, FoldMode::Shuffled, seed).unwrap();
        let at = |rho: f64| {
            cf.report(
                &Target::LowerVariance {
                    alpha: al(0.25),
                    sigma: SigmaSource::ArmVariances(CorrelationSpec::new(rho).unwrap()),
                },
                0.9,
            )
            .unwrap()
        };
        let (lo, mid, hi) = (at(-1.0), at(0.0), at(1.0));
        assert!(lo.psi_hat <= mid.psi_hat && mid.psi_hat <= hi.psi_hat);
        assert_eq!(
            lo.variant,
            VariantTag::LowerVariance {
                rho: Some(-1.0),
                corrected: true
            }
        );
    }
}

#[test]
fn variance_bound_without_fitted_variances_is_an_error() {
    let s = sample(300, 13);
    let r = estimate(
        &s.table,
        &LearnerConfig::experimental(0.5),
        &Target::LowerVariance {
            alpha: al(0.5),
            sigma: SigmaSource::ArmVariances(CorrelationSpec::new(0.0).unwrap()),
        },
        &cfg(0),
    );
    assert!(matches!(r, Err(Error::InvalidInput(_))));
    let bad = estimate(
        &s.table,
        &s.truth.oracle(),
        &Target::LowerVariance {
            alpha: al(0.5),
            sigma: SigmaSource::Known(covariate_fn(|_| f64::NAN)),
        },
        &cfg(0),
    );
    assert!(matches!(bad, Err(Error::InvalidInput(_))));
}

#[test]
fn partial_identification_interval() {
    let s = sample(500, 14);
    let cf = CrossFit::fit(&s.table, &s.truth.oracle(), 5, FoldMode::Shuffled, 0).unwrap();
    let up = cf.report(&Target::Upper { alpha: al(0.3) }, 0.9).unwrap();
    let (lo, hi) = partial_id_interval(&up, &up, 0.9).unwrap();
    assert!((lo - up.ci_lo).abs() < 1e-12 && (hi - up.ci_hi).abs() < 1e-12);
    let mut a = up.clone();
    let mut b = up.clone();
    a.se = 0.0;
    b.se = 0.0;
    a.psi_hat = -1.0;
    assert_eq!(partial_id_interval(&a, &b, 0.9).unwrap(), (-1.0, up.psi_hat));
    let other = sample(500, 15);
    let cf2 = CrossFit::fit(&other.table, &other.truth.oracle(), 5, FoldMode::Shuffled, 0).unwrap();
    let up2 = cf2.report(&Target::Upper { alpha: al(0.3) }, 0.9).unwrap();
    assert!(partial_id_interval(&up, &up2, 0.9).is_err());
}

#[test]
fn subgroup_profile_properties() {
    let s = sample(2000, 16);
    // tau = 0.5 + x1 - x2 is monotone in (x1, -x2); use a CATE monotone in x1 alone
    let learner = OracleNuisance::new(
        s.truth.e.clone(),
        s.truth.mu.clone(),
        covariate_fn(|x: &[f64]| 3.0 * x[0]),
    );
    let cf = CrossFit::fit(&s.table, &learner, 5, FoldMode::Shuffled, 0).unwrap();
    let all = subgroup_profile(&cf, al(1.0)).unwrap();
    assert!(all.in_group.iter().all(|&g| g));
    assert!(all.mean_out.is_none());
    let p = subgroup_profile(&cf, al(0.2)).unwrap();
    for k in 1..=5 {
        let beta = cf.beta_hat(k, al(0.2)).unwrap();
        for i in cf.plan().members(k) {
            assert_eq!(p.in_group[i], 3.0 * s.table.row(i)[0] <= beta);
        }
    }
    // binomial tolerance: sd of the fraction is sqrt(0.16 / 2000) ~ 0.009
    assert!((p.fraction - 0.2).abs() < 0.04, "{}", p.fraction);
    let (mi, mo) = (p.mean_in.unwrap(), p.mean_out.unwrap());
    assert!(mi[0] < 0.15 && mo[0] > 0.5);
    assert!((mi[1] - 0.5).abs() < 0.1);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = sample(1000, 17);
    let learner = LearnerConfig::experimental(0.5);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let cf = CrossFit::fit(&s.table, &learner, 5, FoldMode::Shuffled, 9).unwrap();
            estimate_curve(&cf, &[0.1, 0.2, 0.5, 1.0], |a| Target::Upper { alpha: a }, 0.9, true).unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn curve_skips_small_levels_and_rearranges() {
    let s = sample(200, 18);
    let cf = CrossFit::fit(&s.table, &s.truth.oracle(), 5, FoldMode::Shuffled, 0).unwrap();
    let alphas = [0.01, 0.04, 0.05, 0.3, 0.6, 1.0];
    let r = estimate_curve(&cf, &alphas, |a| Target::Upper { alpha: a }, 0.9, true).unwrap();
    assert_eq!(r.skipped.iter().map(|k| k.alpha).collect::<Vec<_>>(), vec![0.01, 0.04]);
    assert_eq!(r.alphas(), vec![0.05, 0.3, 0.6, 1.0]);
    assert!(r.values().windows(2).all(|w| w[0] <= w[1]));
    assert!(estimate_curve(&cf, &[0.5, 0.3], |a| Target::Upper { alpha: a }, 0.9, true).is_err());
}

// -- Monte Carlo properties -------------------------------------------------

#[test]
fn misspecified_cate_stays_a_valid_upper_bound_in_population() {
    // tau~(x) = 0.75 + 0.5 x1 - 1.5 x2, true e = 1/2, mu = 0
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let p = LinearCateParams::default();
    let (tau, mu0) = (p.tau(), p.mu0());
    let wrong = |x: &[f64]| 0.75 + 0.5 * x[0] - 1.5 * x[1];
    let alpha = 0.25;
    let draws: Vec<([f64; 2], u8, f64)> = (0..n)
        .map(|_| {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let a = u8::from(rng.random::<bool>());
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (x, a, mu0(&x) + f64::from(a) * tau(&x) + z)
        })
        .collect();
    let beta = effect_risk::risk::empirical_quantile(
        &SampleVec::new(draws.iter().map(|d| wrong(&d.0)).collect()).unwrap(),
        al(alpha),
    );
    let phi: Vec<f64> = draws
        .iter()
        .map(|(x, a, y)| {
            let v = RowValues {
                a: *a,
                y: *y,
                e: 0.5,
                mu0: 0.0,
                mu1: 0.0,
                tau: wrong(x),
                var: None,
            };
            cvar_score(&v, beta, alpha)
        })
        .collect();
    let mean = phi.iter().sum::<f64>() / n as f64;
    let sd = (phi.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let truth = p.tau_distribution().unwrap().cvar(al(alpha));
    assert!(mean >= truth - 3.0 * sd / (n as f64).sqrt(), "{mean} vs {truth}");
}

fn abs_errors(n: usize, reps: u64, learner: impl Fn(&SyntheticSample) -> OracleNuisance, alpha: f64) -> Vec<f64> {
    let truth = LinearCateParams::default().tau_distribution().unwrap().cvar(al(alpha));
    (0..reps)
        .map(|r| {
            let s = sample(n, 1000 * n as u64 + r);
            let est = estimate_cate_cvar(&s.table, al(alpha), &learner(&s), &cfg(r)).unwrap();
            (est.psi_hat - truth).abs()
        })
        .collect()
}

#[test]
fn double_robustness_either_nuisance_wrong() {
    let wrong_mu =
        |s: &SyntheticSample| OracleNuisance::new(s.truth.e.clone(), arm_fn(|_, _| 0.0), s.truth.tau.clone());
    let wrong_e = |s: &SyntheticSample| {
        OracleNuisance::new(
            covariate_fn(|x: &[f64]| 0.3 + 0.4 * x[0]),
            s.truth.mu.clone(),
            s.truth.tau.clone(),
        )
    };
    for learner in [&wrong_mu as &dyn Fn(&SyntheticSample) -> OracleNuisance, &wrong_e] {
        let small = median(abs_errors(500, 100, learner, 0.3));
        let large = median(abs_errors(4000, 100, learner, 0.3));
        assert!(large < small, "{large} vs {small}");
    }
}

#[test]
fn interval_width_scales_with_root_n() {
    let widths = |n: usize| {
        median(
            (0..200)
                .map(|r| {
                    let s = sample(n, 50_000 + 10 * n as u64 + r);
                    let e = estimate_cate_cvar(&s.table, al(0.25), &s.truth.oracle(), &cfg(r)).unwrap();
                    e.ci_hi - e.ci_lo
                })
                .collect(),
        )
    };
    let ratio = widths(2000) / widths(500);
    assert!((0.45..=0.55).contains(&ratio), "{ratio}");
}

#[test]
fn oracle_estimates_track_population_bounds() {
    // each estimator with true nuisances against the matching bound on the
    // sample's true CATE values; errors are O(n^{-1/2})
    let s = sample(4000, 21);
    let tau = CateSample::from_values(s.truth.tau_values.clone()).unwrap();
    let cf = CrossFit::fit(&s.table, &s.truth.oracle(), 5, FoldMode::Shuffled, 0).unwrap();
    let check = |target: Target, want: f64| {
        let r = cf.report(&target, 0.9).unwrap();
        assert!(
            (r.psi_hat - want).abs() < 4.0 * r.se,
            "{target:?}: {} vs {want} (se {})",
            r.psi_hat,
            r.se
        );
    };
    check(Target::Upper { alpha: al(0.2) }, upper_bound_cate_cvar(&tau, al(0.2)));
    check(
        Target::Interquantile {
            lo: al(0.2),
            hi: al(0.6),
        },
        interquantile_average(&tau, al(0.2), al(0.6)).unwrap(),
    );
    let b = RangeBoundParams::new(1.0).unwrap();
    check(
        Target::LowerMixture { alpha: al(0.2), b },
        lower_bound_two_sided_range(&tau, b, al(0.2)),
    );
    let with_s2 = CateSample::with_sigma2(tau.tau().clone(), vec![2.0; 4000]).unwrap();
    check(
        Target::LowerVariance {
            alpha: al(0.2),
            sigma: SigmaSource::Known(covariate_fn(|_| 2.0)),
        },
        lower_bound_variance(&with_s2, al(0.2)).unwrap(),
    );
}

#[test]
fn level_difference_to_ate_is_nonnegative_and_shrinks() {
    let mut diffs = Vec::new();
    for r in 0..40 {
        let s = sample(1000, 3000 + r);
        let d =
            estimate_level_difference(&s.table, al(0.2), al(1.0), &LearnerConfig::experimental(0.5), &cfg(r)).unwrap();
        diffs.push(d.psi_hat);
    }
    let m = diffs.iter().sum::<f64>() / 40.0;
    let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / 39.0).sqrt();
    assert!(m >= -2.0 * sd / 40f64.sqrt());
    let s = sample(2000, 4000);
    let cf = CrossFit::fit(&s.table, &s.truth.oracle(), 5, FoldMode::Shuffled, 0).unwrap();
    let widths: Vec<f64> = [0.5, 0.9, 0.99, 1.0]
        .iter()
        .map(|&a| {
            let r = cf.report(&Target::Difference { lo: al(a), hi: al(1.0) }, 0.9).unwrap();
            r.ci_hi - r.ci_lo
        })
        .collect();
    assert!(widths.windows(2).all(|w| w[1] <= w[0]), "{widths:?}");
    assert_eq!(widths[3], 0.0);
}

/// Mean of the variance-bound score when the arm variances handed to the
/// estimator are scaled by `1 + eps`.
fn variance_score_mean(s: &SyntheticSample, eps: f64, corrected: bool, rho: f64) -> f64 {
    let var = s.truth.var.clone();
    let scaled = arm_fn(move |x, a| (1.0 + eps) * var(x, a));
    let mut learner = s.truth.oracle().with_variance(scaled);
    if corrected {
        learner = learner.treat_variance_as_estimated();
    }
    let cf = CrossFit::fit(&s.table, &learner, 5, FoldMode::Shuffled, 0).unwrap();
    cf.report(
        &Target::LowerVariance {
            alpha: al(0.25),
            sigma: SigmaSource::ArmVariances(CorrelationSpec::new(rho).unwrap()),
        },
        0.9,
    )
    .unwrap()
    .psi_hat
}

#[test]
fn variance_correction_removes_first_order_sensitivity() {
    let kind = DgpKind::LinearCate(LinearCateParams {
        noise: 1.5,
        ..LinearCateParams::default()
    });
    let s = generate(&DgpSpec {
        kind,
        n: 200_000,
        seed: 22,
    })
    .unwrap();
    for rho in [-1.0, 0.0, 0.5] {
        for eps in [-0.2, 0.2] {
            let plain = variance_score_mean(&s, eps, false, rho) - variance_score_mean(&s, 0.0, false, rho);
            let fixed = variance_score_mean(&s, eps, true, rho) - variance_score_mean(&s, 0.0, true, rho);
            assert!(plain.abs() > 0.01, "rho {rho} eps {eps}: plug-in shift {plain}");
            assert!(
                fixed.abs() < 0.25 * plain.abs(),
                "rho {rho} eps {eps}: {fixed} vs {plain}"
            );
        }
    }
}
