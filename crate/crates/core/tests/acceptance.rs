//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rayon::prelude::*;

use common::*;
use robcd::confidence::{
    build_cd, default_grid, profile, Alternative, PivotKind, ProfileOptions,
};
use robcd::models::{
    auc_from_rates, ExpFamilyModel, ExponentialAuc, LinearRegression, Model, NaturalFamily,
    NormalAuc, TwoSampleNormal,
};
use robcd::robustness::{calibrate_gamma, taif, CalibrationOptions, TaifOptions};
use robcd::scoring::{InfoSource, ScoringProblem};
use robcd::simcore::{run_study, Contamination, MethodSpec, SimDesign, SimReport};
use robcd::{Dataset, ScoreRule};

fn report(n: u32, name: &str, ok: bool, detail: String, start: Instant, budget: Duration) -> bool {
    let elapsed = start.elapsed();
    let ok = ok && elapsed <= budget;
    // Straight to the process stderr so the verdict shows even when output is captured.
    let line = format!(
        "criterion {n} [{name}]: {} ({detail}; {:.1}s of {}s budget)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    ok
}

fn calibrated(model: &dyn Model, theta: &[f64], layout: &Dataset) -> f64 {
    calibrate_gamma(
        model,
        &DVector::from_vec(theta.to_vec()),
        layout,
        0.9,
        &CalibrationOptions::default(),
    )
    .unwrap()
    .gamma
}

fn sample_layout(sizes: &[usize]) -> Dataset {
    Dataset::samples(sizes.iter().map(|&n| vec![1.0; n]).collect()).unwrap()
}

#[test]
fn criterion_1_log_score_degeneracy() {
    let start = Instant::now();
    let cases: Vec<Case> = vec![
        (Box::new(TwoSampleNormal), vec![2.0, 0.0, 1.0, 1.5], vec![60, 90]),
        (Box::new(ExponentialAuc), vec![3.7778, 2.0 / 3.0], vec![50, 100]),
        (Box::new(NormalAuc), vec![0.0, 1.0, 1.0, 1.5], vec![80, 120]),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (i, (model, theta, sizes)) in cases.iter().enumerate() {
        let data = simulate(model.as_ref(), theta, sizes, 101 + i as u64);
        let (x, y) = (data.group_values(0), data.group_values(1));
        let p = ScoringProblem::new(model.as_ref(), ScoreRule::Logarithmic, &data).unwrap();
        let fit = p.fit(None).unwrap();
        let grid = default_grid(model.as_ref(), &fit, 201).unwrap();
        let opts = ProfileOptions::default();
        let cd = build_cd(&p, &fit, PivotKind::Root, &grid, &opts).unwrap();
        let oracle = match i {
            0 => oracle_two_sample_normal(&x, &y, &grid),
            1 => oracle_exponential_auc(&x, &y, &grid),
            _ => oracle_normal_auc(&x, &y, &grid),
        };
        let dc = cd
            .cdf
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let trace_nu = |info| {
            let opts = ProfileOptions { info, ..ProfileOptions::default() };
            profile(&p, &fit, &grid, &opts).unwrap().nu
        };
        let dnu = trace_nu(InfoSource::Analytic)
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        // Away from the estimate the empirical matrices drift with the
        // constrained parameters, so only the centre is a sampling check.
        let dnu_emp = (trace_nu(InfoSource::Empirical)[grid.len() / 2] - 1.0).abs();
        ok &= dc <= 1e-3 && dnu <= 0.05;
        details.push(format!(
            "{}: |dC| {dc:.1e}, |nu-1| {dnu:.1e} (empirical info at the estimate {dnu_emp:.3})",
            model.name()
        ));
    }
    assert!(report(1, "log-score degeneracy", ok, details.join("; "), start, Duration::from_secs(60)));
}

fn two_sample_design(gamma: f64, contamination: Option<Contamination>) -> SimDesign {
    SimDesign {
        model: "two-sample-normal".into(),
        theta: vec![2.0, 0.0, 1.0, 1.0],
        sample_sizes: vec![10, 20],
        n_reps: 2000,
        seed: 20240501,
        contamination,
        methods: vec![
            MethodSpec {
                rule: ScoreRule::Logarithmic,
                pivot: PivotKind::Root,
                label: Some("log".into()),
            },
            MethodSpec {
                rule: ScoreRule::tsallis(gamma).unwrap(),
                pivot: PivotKind::Root,
                label: Some("robust".into()),
            },
        ],
        levels: vec![0.5, 0.8, 0.9, 0.95, 0.99],
        h0: None,
        interest: None,
    }
}

fn coverage(r: &SimReport, label: &str) -> f64 {
    r.method(label).unwrap().coverage_at(0.95).unwrap().coverage
}

#[test]
fn criterion_2_two_sample_normal_study() {
    let start = Instant::now();
    let theta = [2.0, 0.0, 1.0, 1.0];
    let gamma = calibrated(&TwoSampleNormal, &theta, &sample_layout(&[10, 20]));
    let clean = run_study(&two_sample_design(gamma, None)).unwrap();
    let shifted = run_study(&two_sample_design(
        gamma,
        Some(Contamination {
            sample_index: 0,
            obs_index: None,
            shift: -7.0,
        }),
    ))
    .unwrap();
    let band = 10.0 * (0.95 * 0.05 / 2000.0f64).sqrt();
    let c_clean = coverage(&clean, "robust");
    let (c_rob, c_log) = (coverage(&shifted, "robust"), coverage(&shifted, "log"));
    let ok = (c_clean - 0.95).abs() <= band && c_rob >= c_log + 0.02;
    let by_level = |label: &str| {
        shifted.method(label).unwrap().coverage.iter()
            .map(|c| format!("{}:{:.3}", c.level, c.coverage))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!(
        "gamma {gamma:.4}; clean robust {c_clean:.4} (band ±{band:.4}); contaminated robust {c_rob:.4} vs log {c_log:.4}; \
         contaminated by level robust [{}] log [{}]",
        by_level("robust"),
        by_level("log")
    );
    assert!(report(2, "two-sample normal study", ok, detail, start, Duration::from_secs(600)));
}

#[test]
fn criterion_3_auc_study() {
    let start = Instant::now();
    let l2 = 2.0 / 3.0;
    let l1_exact = 0.85 / 0.15 * l2;
    let exact = (auc_from_rates(l1_exact, l2) - 0.85).abs();
    let rounded = auc_from_rates(3.7778, l2);
    let theta = [3.7778, l2];
    let gamma = calibrated(&ExponentialAuc, &theta, &sample_layout(&[20, 40]));
    let design = SimDesign {
        model: "auc-exponential".into(),
        theta: theta.to_vec(),
        sample_sizes: vec![20, 40],
        n_reps: 2000,
        seed: 20240502,
        contamination: Some(Contamination {
            sample_index: 0,
            obs_index: None,
            shift: 3.0,
        }),
        methods: vec![
            MethodSpec {
                rule: ScoreRule::Logarithmic,
                pivot: PivotKind::Root,
                label: Some("log".into()),
            },
            MethodSpec {
                rule: ScoreRule::tsallis(gamma).unwrap(),
                pivot: PivotKind::Root,
                label: Some("robust".into()),
            },
        ],
        levels: vec![0.95],
        h0: Some(robcd::simcore::Hypothesis {
            psi0: 0.85,
            alternative: Alternative::Less,
        }),
        interest: None,
    };
    let r = run_study(&design).unwrap();
    let ks_rob = r.method("robust").unwrap().ks.unwrap();
    let ks_log = r.method("log").unwrap().ks.unwrap();
    let ok = exact <= 1e-12 && (rounded - 0.85).abs() < 5e-5 && ks_rob < ks_log;
    let detail = format!(
        "psi at lambda1 = 0.85/0.15 * lambda2 off by {exact:.1e}, psi(3.7778) = {rounded:.6}; gamma {gamma:.4}; KS robust {ks_rob:.4} vs log {ks_log:.4}"
    );
    assert!(report(3, "AUC study", ok, detail, start, Duration::from_secs(600)));
}

#[test]
fn criterion_4_gamma_calibration() {
    let start = Instant::now();
    let theta = [1.0, 1.0, 0.0, 1.0];
    let n = 500;
    let layout = regression_layout(n, 4);
    let model = LinearRegression::new(2, 3).unwrap();
    let cal = calibrate_gamma(
        &model,
        &DVector::from_vec(theta.to_vec()),
        &layout,
        0.9,
        &CalibrationOptions::default(),
    )
    .unwrap();
    let gamma = cal.gamma;
    let rule = ScoreRule::tsallis(gamma).unwrap();
    type Pair = (DVector<f64>, DVector<f64>);
    let estimates: Vec<Option<Pair>> = (0..5000u64)
        .into_par_iter()
        .map(|r| {
            let data = simulate_regression(&theta, &layout, 40_000 + r);
            let ml = ScoringProblem::new(&model, ScoreRule::Logarithmic, &data).ok()?.fit(None).ok()?;
            let ts = ScoringProblem::new(&model, rule, &data).ok()?.fit(None).ok()?;
            (ml.converged && ts.converged).then_some((ml.theta_hat, ts.theta_hat))
        })
        .collect();
    let ok_reps: Vec<_> = estimates.into_iter().flatten().collect();
    let var = |sel: &dyn Fn(&Pair) -> f64| {
        let v: Vec<f64> = ok_reps.iter().map(sel).collect();
        let m = mean(&v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let ratios: Vec<f64> = (0..4)
        .map(|j| var(&|e| e.0[j]) / var(&|e| e.1[j]))
        .collect();
    let are = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = (1.15..=1.30).contains(&gamma) && (are - 0.9).abs() <= 0.02 && ok_reps.len() >= 4900;
    let detail = format!(
        "gamma {gamma:.4}; Monte-Carlo ARE {are:.4} (per coordinate {:?}) over {} replicates",
        ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
        ok_reps.len()
    );
    assert!(report(4, "gamma calibration", ok, detail, start, Duration::from_secs(300)));
}

#[test]
fn criterion_5_taif_dichotomy() {
    let start = Instant::now();
    let theta = [2.0, 0.0, 1.0, 1.0];
    let data = simulate(&TwoSampleNormal, &theta, &[10, 20], 55);
    let gamma = calibrated(&TwoSampleNormal, &theta, &sample_layout(&[10, 20]));
    let mut ok = true;
    let mut details = Vec::new();
    for rule in [ScoreRule::Logarithmic, ScoreRule::tsallis(gamma).unwrap()] {
        let p = ScoringProblem::new(&TwoSampleNormal, rule, &data).unwrap();
        let fit = p.fit(None).unwrap();
        for kind in [PivotKind::Wald, PivotKind::Root] {
            let opts = TaifOptions {
                oracle_stride: 10,
                ..TaifOptions::default()
            };
            let prof = taif(&p, &fit, kind, &opts).unwrap();
            let oracle = prof.oracle.as_ref().unwrap();
            let expect_bounded = rule.gamma().is_some();
            ok &= prof.bounded_verdict == expect_bounded;
            ok &= oracle.max_rel_err <= 0.05 && oracle.skipped == 0;
            details.push(format!(
                "{} {kind:?}: bounded {} (growth {:.2e}), oracle rel err {:.1e}",
                rule.label(),
                prof.bounded_verdict,
                prof.shell_growth.unwrap_or(f64::NAN),
                oracle.max_rel_err
            ));
        }
    }
    assert!(report(5, "TAIF boundedness dichotomy", ok, details.join("; "), start, Duration::from_secs(120)));
}

fn rule_strategy() -> impl Strategy<Value = ScoreRule> {
    prop_oneof![
        Just(ScoreRule::Logarithmic),
        (1.05f64..2.0).prop_map(|g| ScoreRule::Tsallis { gamma: g }),
    ]
}

fn gradient_models() -> Vec<(Box<dyn Model>, Dataset, Vec<f64>)> {
    let mut out: Vec<(Box<dyn Model>, Dataset, Vec<f64>)> = two_sample_cases()
        .into_iter()
        .map(|(m, th, sizes)| {
            let d = simulate(m.as_ref(), &th, &sizes, 7);
            (m, d, th)
        })
        .collect();
    let layout = regression_layout(40, 8);
    let th = vec![1.0, 1.0, 0.0, 1.0];
    out.push((
        Box::new(LinearRegression::new(2, 3).unwrap()),
        simulate_regression(&th, &layout, 9),
        th,
    ));
    let normal = ExpFamilyModel::new(NaturalFamily::Normal, 0).unwrap();
    let th = vec![1.0, -0.5];
    let d = simulate(&normal, &th, &[30], 10);
    out.push((Box::new(normal), d, th));
    let gamma = ExpFamilyModel::new(NaturalFamily::Gamma, 0).unwrap();
    let th = vec![2.0, -1.5];
    let d = simulate(&gamma, &th, &[30], 11);
    out.push((Box::new(gamma), d, th));
    out
}

fn perturbed(model: &dyn Model, theta: &[f64], jitter: &[f64]) -> DVector<f64> {
    let mut th = DVector::from_vec(theta.to_vec());
    for (j, b) in model.bounds().iter().enumerate() {
        let cand = th[j] * (1.0 + 0.2 * jitter[j]) + 0.1 * jitter[j];
        if b.contains(cand) {
            th[j] = cand;
        }
    }
    th
}

#[test]
fn criterion_6_property_suites() {
    let start = Instant::now();
    let runner = |cases: u32| {
        TestRunner::new_with_rng(
            Config {
                cases,
                failure_persistence: None,
                ..Config::default()
            },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        )
    };
    let mut details = Vec::new();
    let mut ok = true;

    let models = gradient_models();
    let mut worst_grad = 0.0f64;
    let res = runner(64).run(
        &(0..models.len(), rule_strategy(), prop::collection::vec(-1.0f64..1.0, 4)),
        |(i, rule, jitter)| {
            let (m, data, th) = &models[i];
            let theta = perturbed(m.as_ref(), th, &jitter);
            prop_assume!(m.admissible(&theta));
            let err = gradient_rel_error(m.as_ref(), rule, data, &theta);
            prop_assert!(err <= 1e-4, "{} {rule:?}: {err}", m.name());
            Ok(())
        },
    );
    for (m, data, th) in &models {
        for rule in [ScoreRule::Logarithmic, ScoreRule::Tsallis { gamma: 1.3 }] {
            let theta = DVector::from_vec(th.clone());
            worst_grad = worst_grad.max(gradient_rel_error(m.as_ref(), rule, data, &theta));
        }
    }
    ok &= res.is_ok();
    details.push(format!("gradient vs FD {} (max rel err {worst_grad:.1e})", verdict(&res)));

    let mut worst_int = 0.0f64;
    let res = runner(48).run(
        &(0..models.len(), 1.05f64..2.5, prop::collection::vec(-1.0f64..1.0, 4)),
        |(i, gamma, jitter)| {
            let (m, data, th) = &models[i];
            let theta = perturbed(m.as_ref(), th, &jitter);
            prop_assume!(m.admissible(&theta));
            if let Some(err) = integral_error(m.as_ref(), &data.obs(0), &theta, gamma) {
                prop_assert!(err <= 1e-8, "{}: {err}", m.name());
            }
            Ok(())
        },
    );
    for (m, data, th) in &models {
        if let Some(e) = integral_error(m.as_ref(), &data.obs(0), &DVector::from_vec(th.clone()), 1.5) {
            worst_int = worst_int.max(e);
        }
    }
    ok &= res.is_ok();
    details.push(format!("closed-form integrals {} (max abs err {worst_int:.1e})", verdict(&res)));

    let (ek, ej) = regression_kj_error(1.22, 500, 20, 3);
    ok &= ek <= 0.05 && ej <= 0.05;
    details.push(format!("regression K/J rel err {ek:.3}/{ej:.3}"));

    let cases = two_sample_cases();
    let res = runner(24).run(
        &(0..cases.len(), rule_strategy(), any::<bool>(), 0u64..1000, 0.05f64..0.95),
        |(i, rule, root, seed, probe)| {
            let (m, th, sizes) = &cases[i];
            let data = simulate(m.as_ref(), th, sizes, seed);
            let kind = if root { PivotKind::Root } else { PivotKind::Wald };
            check_cd_identities(m.as_ref(), rule, kind, &data, probe)
                .map_err(|e| TestCaseError::fail(format!("{} {rule:?} {kind:?}: {e}", m.name())))
        },
    );
    ok &= res.is_ok();
    details.push(format!("CD/CI/p-value identities {}", verdict(&res)));
    assert!(report(6, "property suites", ok, details.join("; "), start, Duration::from_secs(120)));
}

fn verdict<T: std::fmt::Debug>(r: &Result<(), T>) -> String {
    match r {
        Ok(()) => "ok".into(),
        Err(e) => format!("failed: {e:?}"),
    }
}

#[test]
fn criterion_7_planted_outlier_case_study() {
    let start = Instant::now();
    let data = planted_outlier_regression(2, 3, 60.0);
    let [(p_rob, b_rob), (p_log, b_log)] = planted_p_values(&data, 1.22);
    let ok = p_rob < 0.05 && p_log > 0.05;
    let detail = format!(
        "age effect: robust p {p_rob:.4} (estimate {b_rob:.3}), log p {p_log:.4} (estimate {b_log:.3})"
    );
    assert!(report(7, "planted-outlier case study", ok, detail, start, Duration::from_secs(60)));
}
