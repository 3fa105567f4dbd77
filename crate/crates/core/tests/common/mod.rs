#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use robcd::confidence::{build_cd, default_grid, refit_on_local_optimum, Alternative, PivotKind, ProfileOptions};
use robcd::models::{
    ExponentialAuc, LinearRegression, Model, NormalAuc, TwoSampleNormal,
};
use robcd::quadrature;
use robcd::scoring::{InfoSource, ScoringProblem};
use robcd::{Dataset, Obs, ScoreRule};

pub fn phi_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn phi_inv(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Data drawn from `model` at `theta` into a layout of independent samples.
pub fn simulate(model: &dyn Model, theta: &[f64], sizes: &[usize], seed: u64) -> Dataset {
    let layout = Dataset::samples(sizes.iter().map(|&n| vec![0.0; n]).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .simulate(&DVector::from_vec(theta.to_vec()), &layout, &mut rng)
        .unwrap()
}

pub fn regression_layout(n: usize, seed: u64) -> Dataset {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 3, |_, j| match j {
        0 => 1.0,
        1 => rng.sample(StandardNormal),
        _ => rng.random::<f64>(),
    });
    Dataset::regression(vec![0.0; n], &x, vec![]).unwrap()
}

pub fn simulate_regression(theta: &[f64], layout: &Dataset, seed: u64) -> Dataset {
    let model = LinearRegression::new(2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .simulate(&DVector::from_vec(theta.to_vec()), layout, &mut rng)
        .unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn ml_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn norm_loglik(v: &[f64], mu: f64, var: f64) -> f64 {
    let ss: f64 = v.iter().map(|x| (x - mu) * (x - mu)).sum();
    -0.5 * v.len() as f64 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * ss / var
}

fn root_to_cd(l_hat: f64, l_prof: f64, psi_hat: f64, psi: f64) -> f64 {
    let r = (2.0 * (l_hat - l_prof)).max(0.0).sqrt();
    let r = if psi_hat > psi { r } else { -r };
    phi_cdf(-r)
}

/// Profile-likelihood CD for μ_x − μ_y, by coordinate ascent on
/// (μ_y, σ²_x, σ²_y) at each fixed ψ.
pub fn oracle_two_sample_normal(x: &[f64], y: &[f64], psis: &[f64]) -> Vec<f64> {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let l_hat = norm_loglik(x, mean(x), ml_var(x)) + norm_loglik(y, mean(y), ml_var(y));
    let psi_hat = mean(x) - mean(y);
    psis.iter()
        .map(|&psi| {
            let mut my = mean(y);
            for _ in 0..100_000 {
                let vx = x.iter().map(|v| (v - psi - my).powi(2)).sum::<f64>() / nx;
                let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / ny;
                let next = (x.iter().map(|v| v - psi).sum::<f64>() / vx + y.iter().sum::<f64>() / vy)
                    / (nx / vx + ny / vy);
                let done = (next - my).abs() < 1e-15 * (1.0 + my.abs());
                my = next;
                if done {
                    break;
                }
            }
            let vx = x.iter().map(|v| (v - psi - my).powi(2)).sum::<f64>() / nx;
            let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / ny;
            let l = norm_loglik(x, psi + my, vx) + norm_loglik(y, my, vy);
            root_to_cd(l_hat, l, psi_hat, psi)
        })
        .collect()
}

fn exp_loglik(v: &[f64], rate: f64) -> f64 {
    v.len() as f64 * rate.ln() - rate * v.iter().sum::<f64>()
}

/// Profile-likelihood CD for λ₁/(λ₁+λ₂): with λ₁ = cλ₂, c = ψ/(1−ψ), the
/// constrained rate is λ₂ = (n₁+n₂)/(cS₁+S₂).
pub fn oracle_exponential_auc(x: &[f64], y: &[f64], psis: &[f64]) -> Vec<f64> {
    let (l1, l2) = (1.0 / mean(x), 1.0 / mean(y));
    let l_hat = exp_loglik(x, l1) + exp_loglik(y, l2);
    let psi_hat = l1 / (l1 + l2);
    let (s1, s2) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let n = (x.len() + y.len()) as f64;
    psis.iter()
        .map(|&psi| {
            let c = psi / (1.0 - psi);
            let r2 = n / (c * s1 + s2);
            let l = exp_loglik(x, c * r2) + exp_loglik(y, r2);
            root_to_cd(l_hat, l, psi_hat, psi)
        })
        .collect()
}

/// Nelder–Mead minimizer with restarts.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, tol: f64) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut best = x0.to_vec();
    let mut fbest = f(&best);
    for _restart in 0..6 {
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for i in 0..d {
            let mut p = best.clone();
            p[i] += step;
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        for _ in 0..20_000 {
            let mut idx: Vec<usize> = (0..=d).collect();
            idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            values = idx.iter().map(|&i| values[i]).collect();
            if (values[d] - values[0]).abs() <= tol * (1.0 + values[0].abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..d)
                .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect()
            };
            let xr = along(-1.0);
            let fr = f(&xr);
            if fr < values[0] {
                let xe = along(-2.0);
                let fe = f(&xe);
                if fe < fr {
                    simplex[d] = xe;
                    values[d] = fe;
                } else {
                    simplex[d] = xr;
                    values[d] = fr;
                }
            } else if fr < values[d - 1] {
                simplex[d] = xr;
                values[d] = fr;
            } else {
                let xc = if fr < values[d] { along(-0.5) } else { along(0.5) };
                let fc = f(&xc);
                if fc < values[d].min(fr) {
                    simplex[d] = xc;
                    values[d] = fc;
                } else {
                    for i in 1..=d {
                        let p: Vec<f64> = (0..d)
                            .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                            .collect();
                        values[i] = f(&p);
                        simplex[i] = p;
                    }
                }
            }
        }
        let i = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        let improved = fbest - values[i];
        best = simplex[i].clone();
        fbest = values[i];
        if improved.abs() <= tol * (1.0 + fbest.abs()) {
            break;
        }
    }
    (best, fbest)
}

/// Profile-likelihood CD for Φ((μ₂−μ₁)/√(σ²₁+σ²₂)), nuisance (μ₁, log σ²₁,
/// log σ²₂) maximized by Nelder–Mead.
pub fn oracle_normal_auc(x: &[f64], y: &[f64], psis: &[f64]) -> Vec<f64> {
    let (m1, m2, v1, v2) = (mean(x), mean(y), ml_var(x), ml_var(y));
    let l_hat = norm_loglik(x, m1, v1) + norm_loglik(y, m2, v2);
    let psi_hat = phi_cdf((m2 - m1) / (v1 + v2).sqrt());
    psis.iter()
        .map(|&psi| {
            let z = phi_inv(psi);
            let nll = |p: &[f64]| {
                let (a, b) = (p[1].exp(), p[2].exp());
                -(norm_loglik(x, p[0], a) + norm_loglik(y, p[0] + z * (a + b).sqrt(), b))
            };
            let (_, f) = nelder_mead(nll, &[m1, v1.ln(), v2.ln()], 0.1, 1e-15);
            root_to_cd(l_hat, -f, psi_hat, psi)
        })
        .collect()
}

/// Largest |analytic − FD| / max(|FD|, floor) over observations, for the
/// per-observation gradient.
pub fn gradient_rel_error(
    model: &dyn Model,
    rule: ScoreRule,
    data: &Dataset,
    theta: &DVector<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for o in data.iter() {
        let Some(g) = model.obs_gradient(&rule, &o, theta) else {
            continue;
        };
        let mut fd = DVector::zeros(theta.len());
        for j in 0..theta.len() {
            let h = 1e-5 * (1.0 + theta[j].abs());
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            fd[j] = (model.obs_score(&rule, &o, &tp).unwrap()
                - model.obs_score(&rule, &o, &tm).unwrap())
                / (2.0 * h);
        }
        let err = (&g - &fd).norm() / fd.norm().max(1e-3);
        worst = worst.max(err);
    }
    worst
}

/// |closed form − quadrature| of ∫f^γ at one observation, when the model
/// has a closed form.
pub fn integral_error(model: &dyn Model, obs: &Obs, theta: &DVector<f64>, gamma: f64) -> Option<f64> {
    let closed = model.tsallis_integral(obs, theta, gamma)?;
    let (lo, hi) = model.support(obs);
    let f = |y: f64| {
        let o = Obs { y, ..*obs };
        (gamma * model.log_density(&o, theta)).exp()
    };
    let quad = quadrature::integrate(f, lo, hi, 1e-13).unwrap();
    Some((closed - quad).abs())
}

/// Relative Frobenius distance between analytic K, J and their empirical
/// counterparts averaged over `reps` simulated regression datasets of size n.
pub fn regression_kj_error(gamma: f64, n: usize, reps: u64, seed: u64) -> (f64, f64) {
    let model = LinearRegression::new(2, 3).unwrap();
    let theta = [1.0, 1.0, 0.0, 1.0];
    let th = DVector::from_vec(theta.to_vec());
    let layout = regression_layout(n, seed);
    let rule = ScoreRule::tsallis(gamma).unwrap();
    let (k_an, j_an) = model.expected_info(&rule, &layout, &th).unwrap();
    let mut k_emp = DMatrix::zeros(4, 4);
    let mut j_emp = DMatrix::zeros(4, 4);
    for r in 0..reps {
        let data = simulate_regression(&theta, &layout, seed * 1000 + r);
        let p = ScoringProblem::new(&model, rule, &data).unwrap();
        k_emp += p.empirical_k(&th).unwrap() / reps as f64;
        // Raw (uncentred) outer products: the expectation at the truth.
        let mut j = DMatrix::zeros(4, 4);
        for g in p.obs_gradients(&th).unwrap() {
            j += &g * g.transpose();
        }
        j_emp += j / reps as f64;
    }
    (
        (&k_an - &k_emp).norm() / k_an.norm(),
        (&j_an - &j_emp).norm() / j_an.norm(),
    )
}

/// CD invariants on one dataset: monotone C in [0,1], cc = |1−2C|, nested
/// intervals, complementary p-values.
pub fn check_cd_identities(
    model: &dyn Model,
    rule: ScoreRule,
    kind: PivotKind,
    data: &Dataset,
    probe: f64,
) -> Result<(), String> {
    let p = ScoringProblem::new(model, rule, data).map_err(|e| e.to_string())?;
    let fit = p.fit(None).map_err(|e| e.to_string())?;
    let grid = default_grid(model, &fit, 101).map_err(|e| e.to_string())?;
    let cd = build_cd(&p, &fit, kind, &grid, &ProfileOptions::default()).map_err(|e| e.to_string())?;
    for w in cd.cdf.windows(2) {
        if w[1] < w[0] {
            return Err(format!("C decreases: {} -> {}", w[0], w[1]));
        }
    }
    for (c, cc) in cd.cdf.iter().zip(&cd.cc) {
        if !(0.0..=1.0).contains(c) || (cc - (1.0 - 2.0 * c).abs()).abs() > 1e-12 {
            return Err(format!("cc identity fails at C = {c}, cc = {cc}"));
        }
    }
    let mut prev: Option<(f64, f64)> = None;
    for level in [0.5, 0.8, 0.9, 0.95] {
        let iv = cd.ci(level).map_err(|e| e.to_string())?;
        if let Some((lo, hi)) = prev {
            if iv.lo > lo || iv.hi < hi {
                return Err(format!("interval at {level} does not contain the previous one"));
            }
        }
        prev = Some((iv.lo, iv.hi));
    }
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let psi0 = a + probe * (b - a);
    let sum = cd.p_value(psi0, Alternative::Less) + cd.p_value(psi0, Alternative::Greater);
    if (sum - 1.0).abs() > 1e-12 {
        return Err(format!("less + greater p-values = {sum}"));
    }
    if (cd.p_value(cd.psi_tilde, Alternative::TwoSided) - 1.0).abs() > 1e-12 {
        return Err("two-sided p-value at the estimate is not 1".into());
    }
    Ok(())
}

/// A model with its true θ and sample sizes.
pub type Case = (Box<dyn Model>, Vec<f64>, Vec<usize>);

/// Models with two samples, their true θ and sizes for property runs.
pub fn two_sample_cases() -> Vec<Case> {
    vec![
        (Box::new(TwoSampleNormal), vec![2.0, 0.0, 1.0, 1.0], vec![15, 25]),
        (Box::new(ExponentialAuc), vec![3.7778, 2.0 / 3.0], vec![20, 40]),
        (Box::new(NormalAuc), vec![0.0, 1.0, 1.0, 1.5], vec![20, 30]),
    ]
}

pub fn info_sources() -> [InfoSource; 2] {
    [InfoSource::Analytic, InfoSource::Empirical]
}

/// Kidney-function style regression: response on an intercept, an inverse
/// marker level and age, with a few elderly subjects far above the trend.
pub fn planted_outlier_regression(seed: u64, n_out: usize, lift: f64) -> Dataset {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let n = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 3);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let inv_cr = 0.4 + 1.4 * rng.random::<f64>();
        let age = if i < n - n_out {
            25.0 + 60.0 * rng.random::<f64>()
        } else {
            78.0 + 6.0 * rng.random::<f64>()
        };
        let noise: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = inv_cr;
        x[(i, 2)] = age;
        y[i] = 20.0 + 50.0 * inv_cr - 0.25 * age + 8.0 * noise;
        if i >= n - n_out {
            y[i] += lift;
        }
    }
    let names = vec!["intercept".into(), "inv_cr".into(), "age".into()];
    Dataset::regression(y, &x, names).unwrap()
}

/// Two-sided root-CD p-values for a zero age effect, robust then classical.
pub fn planted_p_values(data: &Dataset, gamma: f64) -> [(f64, f64); 2] {
    let model = LinearRegression::new(2, 3).unwrap();
    [ScoreRule::tsallis(gamma).unwrap(), ScoreRule::Logarithmic].map(|rule| {
        let p = ScoringProblem::new(&model, rule, data).unwrap();
        let fit = p.fit(None).unwrap();
        let (_, cd) = refit_on_local_optimum(&p, fit, |fit| {
            let grid = default_grid(&model, fit, 201)?;
            build_cd(&p, fit, PivotKind::Root, &grid, &ProfileOptions::default())
        })
        .unwrap();
        (cd.p_value(0.0, Alternative::TwoSided), cd.psi_tilde)
    })
}
