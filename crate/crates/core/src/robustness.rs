//! Influence function, tail-area influence function (TAIF) and calibration
//! of the Tsallis γ to a target efficiency.
//!
//! Contamination is always placed in one independent sample (`group`) with
//! fixed covariates `x`: the sample's empirical distribution F̂ is replaced
//! by (1−ε)F̂ + εΔ_y while the other samples are untouched.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Normal};

use crate::confidence::PivotKind;
use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::linalg::checked_inverse;
use crate::models::{Model, WaldScale};
use crate::optimize::SolverOptions;
use crate::rule::ScoreRule;
use crate::scoring::{partition, Fit, FitOptions, InfoSource, ScoringProblem};

/// Where contamination is placed: a sample index and, for regression, the
/// covariate row of the contaminating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub group: usize,
    pub x: Vec<f64>,
}

impl Probe {
    /// First sample, with covariates at the column means of the design.
    pub fn default_for(data: &Dataset) -> Self {
        let p = data.n_covariates();
        let mut x = vec![0.0; p];
        for o in data.iter() {
            for (a, b) in x.iter_mut().zip(o.x) {
                *a += b / data.len() as f64;
            }
        }
        Probe { group: 0, x }
    }

    fn obs(&self, y: f64) -> Obs<'_> {
        Obs {
            y,
            group: self.group,
            x: &self.x,
        }
    }
}

/// Derivative in ε of Σᵢ wᵢ(ε) h(yᵢ) under the mixture: n_g h(y) − Σ_{i∈g} wᵢ h(yᵢ).
fn mixture_derivative<T, F>(data: &Dataset, probe: &Probe, y: f64, h: F) -> Result<T>
where
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    F: Fn(&Obs) -> Result<T>,
{
    let n_g = data.group_weight(probe.group);
    let mut acc = h(&probe.obs(y))? * n_g;
    for (i, o) in data.iter().enumerate() {
        if o.group == probe.group {
            acc = acc - h(&o)? * data.weight(i);
        }
    }
    Ok(acc)
}

/// IF(y) = −K⁻¹ (n_g s(y;θ) − Σ_{i∈g} wᵢ s(yᵢ;θ)), the first-order change in
/// θ̃ per unit ε. With a single sample at its optimum this is the familiar
/// −K₁⁻¹ s(y;θ) for the per-observation sensitivity K₁.
pub fn influence_function(
    problem: &ScoringProblem,
    theta: &DVector<f64>,
    probe: &Probe,
    y: f64,
    source: InfoSource,
) -> Result<DVector<f64>> {
    let (k, _) = problem.estimate_kj(theta, source)?;
    let k_inv = checked_inverse(&k, "sensitivity matrix K")?;
    influence_with(problem, theta, &k_inv, probe, y)
}

fn influence_with(
    problem: &ScoringProblem,
    theta: &DVector<f64>,
    k_inv: &DMatrix<f64>,
    probe: &Probe,
    y: f64,
) -> Result<DVector<f64>> {
    let ds = mixture_derivative(problem.data, probe, y, |o| problem.obs_gradient(o, theta))?;
    Ok(-(k_inv * ds))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCheck {
    pub y: Vec<f64>,
    pub chain_rule: Vec<f64>,
    /// ε-mixture refit values; `None` where the refit failed.
    pub oracle: Vec<Option<f64>>,
    /// Largest |chain − oracle| / max(|oracle|, 1% of the interior sup).
    pub max_rel_err: f64,
    pub skipped: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaifProfile {
    pub pivot_kind: PivotKind,
    pub psi_fixed: f64,
    pub group: usize,
    pub y_grid: Vec<f64>,
    pub taif_values: Vec<f64>,
    /// True for the decade-spaced points far outside the data range.
    pub is_shell: Vec<bool>,
    pub sup_abs: f64,
    pub interior_max: f64,
    pub shell_max: f64,
    /// shell_max / interior_max.
    pub shell_ratio: f64,
    /// |TAIF| at the outermost shell over |TAIF| at the innermost one.
    pub shell_growth: Option<f64>,
    /// Finite everywhere and no growth across the shells.
    pub bounded_verdict: bool,
    pub oracle: Option<OracleCheck>,
}

#[derive(Clone, Debug, Default)]
pub struct TaifOptions {
    /// Fixed ψ; defaults to the lower 5% Wald point ψ̃ − 1.645·se.
    pub psi: Option<f64>,
    pub probe: Option<Probe>,
    /// Explicit y grid; otherwise 401 points over centre ± 20 scale units
    /// plus shells at ±scale·10^{2..5}.
    pub y_grid: Option<Vec<f64>>,
    /// Run the ε-mixture refit oracle on every `oracle_stride`-th interior
    /// point (0 disables it).
    pub oracle_stride: usize,
}

fn phi(x: f64) -> f64 {
    Normal::standard().pdf(x)
}

fn coord(scale: WaldScale, psi: f64) -> f64 {
    match scale {
        WaldScale::Identity => psi,
        WaldScale::Logit => (psi / (1.0 - psi)).ln(),
    }
}

/// Tight solver for refits whose differences are divided by ε.
fn tight() -> SolverOptions {
    SolverOptions {
        grad_tol: 1e-12,
        ..SolverOptions::default()
    }
}

fn fd_gradient<F: Fn(&DVector<f64>) -> Result<f64>>(
    model: &dyn Model,
    theta: &DVector<f64>,
    f: F,
) -> Result<DVector<f64>> {
    let bounds = model.bounds();
    let mut g = DVector::zeros(theta.len());
    for j in 0..theta.len() {
        let mut h = 1e-5 * (1.0 + theta[j].abs());
        while !(bounds[j].contains(theta[j] + h) && bounds[j].contains(theta[j] - h)) {
            h *= 0.1;
        }
        let mut tp = theta.clone();
        tp[j] += h;
        let mut tm = theta.clone();
        tm[j] -= h;
        g[j] = (f(&tp)? - f(&tm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Everything the TAIF needs about the pivot at fixed ψ on the original data.
struct PivotState {
    q: f64,
    /// Wald: ∇_θ q. Root: unused.
    grad_q: DVector<f64>,
    theta_psi: DVector<f64>,
    w: f64,
    nu: f64,
    grad_nu: DVector<f64>,
    /// Inverse λ-Hessian of the profile objective at λ̃_ψ.
    h_lambda_inv: DMatrix<f64>,
    jac_lambda: DMatrix<f64>,
}

/// Wald q(ψ;θ) with the standard error re-evaluated at θ on the original
/// data layout.
fn wald_q(problem: &ScoringProblem, psi: f64, theta: &DVector<f64>, source: InfoSource) -> Result<f64> {
    let model = problem.model;
    let (k, j) = problem.estimate_kj(theta, source)?;
    let part = partition(model, theta, &k, &j)?;
    let p = model.interest(theta);
    let se = match model.wald_scale() {
        WaldScale::Identity => part.g_psipsi.sqrt(),
        WaldScale::Logit => part.g_psipsi.sqrt() / (p * (1.0 - p)),
    };
    let scale = model.wald_scale();
    Ok((coord(scale, psi) - coord(scale, p)) / se)
}

fn nu_of(problem: &ScoringProblem, theta: &DVector<f64>, source: InfoSource) -> Result<f64> {
    Ok(problem.partitioned_info(theta, source)?.nu())
}

fn root_q(w: f64, nu: f64, psi: f64, psi_tilde: f64) -> f64 {
    let r = (w.max(0.0) / nu).sqrt();
    if psi_tilde > psi {
        -r
    } else {
        r
    }
}

fn lambda_gradient(
    problem: &ScoringProblem,
    psi: f64,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let model = problem.model;
    let theta = model.compose(psi, lambda);
    let g = problem.score_gradient(&theta)?;
    let jac = model.compose_jacobian(psi, lambda);
    Ok((jac.transpose() * g).rows(1, lambda.len()).into_owned())
}

fn pivot_state(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    psi: f64,
    source: InfoSource,
) -> Result<PivotState> {
    let model = problem.model;
    let theta = &fit.theta_hat;
    let d = theta.len();
    match kind {
        PivotKind::Wald => {
            let q = wald_q(problem, psi, theta, source)?;
            let grad_q = fd_gradient(model, theta, |t| wald_q(problem, psi, t, source))?;
            Ok(PivotState {
                q,
                grad_q,
                theta_psi: theta.clone(),
                w: 0.0,
                nu: 1.0,
                grad_nu: DVector::zeros(d),
                h_lambda_inv: DMatrix::zeros(0, 0),
                jac_lambda: DMatrix::zeros(0, 0),
            })
        }
        PivotKind::Root => {
            let psi_tilde = model.interest(theta);
            let (lambda, score, converged) =
                problem.profile_point(psi, &model.nuisance(theta), &tight())?;
            if !converged {
                log::debug!("tight profile solve at psi = {psi} stopped short of tolerance");
            }
            let theta_psi = model.compose(psi, &lambda);
            let w = 2.0 * (score - fit.score_at_opt);
            let nu = nu_of(problem, &theta_psi, source)?;
            let grad_nu = fd_gradient(model, &theta_psi, |t| nu_of(problem, t, source))?;
            let m = lambda.len();
            let mut h = DMatrix::zeros(m, m);
            let bounds = model.nuisance_bounds();
            for c in 0..m {
                let mut step = 1e-5 * (1.0 + lambda[c].abs());
                while !(bounds[c].contains(lambda[c] + step) && bounds[c].contains(lambda[c] - step)) {
                    step *= 0.1;
                }
                let mut lp = lambda.clone();
                lp[c] += step;
                let mut lm = lambda.clone();
                lm[c] -= step;
                let col = (lambda_gradient(problem, psi, &lp)? - lambda_gradient(problem, psi, &lm)?)
                    / (2.0 * step);
                h.set_column(c, &col);
            }
            let h = (&h + h.transpose()) * 0.5;
            let h_lambda_inv = checked_inverse(&h, "profile Hessian")?;
            let jac_full = model.compose_jacobian(psi, &lambda);
            let jac_lambda = jac_full.columns(1, m).into_owned();
            Ok(PivotState {
                q: root_q(w, nu, psi, psi_tilde),
                grad_q: DVector::zeros(d),
                theta_psi,
                w,
                nu,
                grad_nu,
                h_lambda_inv,
                jac_lambda,
            })
        }
    }
}

/// dq/dε at contamination point y by the chain rule.
#[allow(clippy::too_many_arguments)]
fn taif_chain(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    psi: f64,
    state: &PivotState,
    k_inv: &DMatrix<f64>,
    probe: &Probe,
    y: f64,
) -> Result<f64> {
    let dq = match kind {
        PivotKind::Wald => {
            let inf = influence_with(problem, &fit.theta_hat, k_inv, probe, y)?;
            state.grad_q.dot(&inf)
        }
        PivotKind::Root => {
            let data = problem.data;
            let th = &fit.theta_hat;
            let tp = &state.theta_psi;
            let ds_opt = mixture_derivative(data, probe, y, |o| problem.obs_score(o, th))?;
            let ds_psi = mixture_derivative(data, probe, y, |o| problem.obs_score(o, tp))?;
            let dw = 2.0 * (ds_psi - ds_opt);
            let dg = mixture_derivative(data, probe, y, |o| problem.obs_gradient(o, tp))?;
            let dg_lambda = state.jac_lambda.transpose() * dg;
            let dlambda = -(&state.h_lambda_inv * dg_lambda);
            let dtheta_psi = &state.jac_lambda * dlambda;
            let dnu = state.grad_nu.dot(&dtheta_psi);
            let r = (state.w.max(0.0) / state.nu).sqrt();
            if r == 0.0 {
                return Err(Error::Numeric("root TAIF is undefined at psi = psi_tilde".into()));
            }
            let dr = (dw / state.nu - state.w * dnu / (state.nu * state.nu)) / (2.0 * r);
            let psi_tilde = problem.model.interest(th);
            if psi_tilde > psi {
                -dr
            } else {
                dr
            }
        }
    };
    Ok(phi(state.q) * dq)
}

/// q(ψ) recomputed from scratch on the ε-mixture data.
fn mixture_q(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    psi: f64,
    source: InfoSource,
    mixed: &Dataset,
    lambda_start: &DVector<f64>,
) -> Result<f64> {
    let model = problem.model;
    let mp = problem.with_data(mixed);
    let opts = FitOptions {
        solver: tight(),
        ..FitOptions::default()
    };
    let refit = mp.fit_with(Some(&fit.theta_hat), &opts)?;
    if !(refit.converged || refit.grad_norm < 1e-9 * (1.0 + refit.theta_hat.norm())) {
        return Err(Error::Optimization("mixture refit".into()));
    }
    match kind {
        PivotKind::Wald => wald_q(problem, psi, &refit.theta_hat, source),
        PivotKind::Root => {
            let (lambda, score, _) = mp.profile_point(psi, lambda_start, &tight())?;
            let w = 2.0 * (score - refit.score_at_opt);
            let nu = nu_of(problem, &model.compose(psi, &lambda), source)?;
            Ok(root_q(w, nu, psi, model.interest(&refit.theta_hat)))
        }
    }
}

/// TAIF by refitting on (1−ε)F̂ + εΔ_y at ε and ε/2 with one Richardson
/// step. ε shrinks for far-out y so the second-order term stays small.
pub fn taif_oracle(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    psi: f64,
    probe: &Probe,
    y: f64,
    source: InfoSource,
) -> Result<f64> {
    let model = problem.model;
    let (loc, scale) = model.location_scale(&fit.theta_hat, &probe.obs(y));
    let z = (y - loc) / scale;
    let n_g = problem.data.group_weight(probe.group);
    let eps = (1e-4f64).min(1e-3 / (n_g * (1.0 + z * z)));
    let lambda_start = match kind {
        PivotKind::Root => {
            problem
                .profile_point(psi, &model.nuisance(&fit.theta_hat), &tight())?
                .0
        }
        PivotKind::Wald => DVector::zeros(0),
    };
    let q0 = mixture_q(problem, fit, kind, psi, source, problem.data, &lambda_start)?;
    let mut diffs = [0.0; 2];
    for (slot, e) in [eps, eps / 2.0].into_iter().enumerate() {
        let mixed = problem.data.epsilon_mixture(probe.group, y, &probe.x, e)?;
        let q = mixture_q(problem, fit, kind, psi, source, &mixed, &lambda_start)?;
        diffs[slot] = (q - q0) / e;
    }
    Ok(phi(q0) * (2.0 * diffs[1] - diffs[0]))
}

fn default_y_grid(model: &dyn Model, fit: &Fit, probe: &Probe) -> (Vec<f64>, Vec<bool>) {
    let (loc, scale) = model.location_scale(&fit.theta_hat, &probe.obs(0.0));
    let (lo, hi) = model.support(&probe.obs(0.0));
    let mut ys = Vec::new();
    let mut shell = Vec::new();
    for k in (2..=5).rev() {
        ys.push(loc - scale * 10f64.powi(k));
        shell.push(true);
    }
    for i in 0..=400 {
        ys.push(loc + scale * (-20.0 + 40.0 * i as f64 / 400.0));
        shell.push(false);
    }
    for k in 2..=5 {
        ys.push(loc + scale * 10f64.powi(k));
        shell.push(true);
    }
    ys.iter()
        .zip(shell)
        .filter(|(y, _)| **y >= lo && **y <= hi)
        .map(|(y, s)| (*y, s))
        .unzip()
}

/// Tail-area influence function of the CD at fixed ψ over a y grid, with a
/// boundedness verdict and optionally the ε-mixture oracle comparison.
pub fn taif(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    opts: &TaifOptions,
) -> Result<TaifProfile> {
    let model = problem.model;
    let source = fit.info_source;
    let probe = opts.probe.clone().unwrap_or_else(|| Probe::default_for(problem.data));
    if probe.group >= problem.data.n_groups() || probe.x.len() != problem.data.n_covariates() {
        return Err(Error::InvalidInput("contamination probe does not match the data".into()));
    }
    let psi = match opts.psi {
        Some(p) => p,
        None => {
            let se = crate::confidence::wald_se(model, fit)?;
            let scale = model.wald_scale();
            let c = coord(scale, model.interest(&fit.theta_hat)) - 1.645 * se;
            match scale {
                WaldScale::Identity => c,
                WaldScale::Logit => 1.0 / (1.0 + (-c).exp()),
            }
        }
    };
    let (y_grid, is_shell) = match &opts.y_grid {
        Some(g) => (g.clone(), vec![false; g.len()]),
        None => default_y_grid(model, fit, &probe),
    };
    let state = pivot_state(problem, fit, kind, psi, source)?;
    // Empirical K so the chain rule linearizes exactly what a refit solves.
    let k_inv = checked_inverse(&problem.empirical_k(&fit.theta_hat)?, "sensitivity matrix K")?;
    let taif_values = y_grid
        .iter()
        .map(|&y| taif_chain(problem, fit, kind, psi, &state, &k_inv, &probe, y))
        .collect::<Result<Vec<f64>>>()?;
    let mut interior_max = 0.0f64;
    let mut shell_max = 0.0f64;
    for (v, &s) in taif_values.iter().zip(&is_shell) {
        if s {
            shell_max = shell_max.max(v.abs());
        } else {
            interior_max = interior_max.max(v.abs());
        }
    }
    let sup_abs = interior_max.max(shell_max);
    let shell_growth = shell_growth(&y_grid, &taif_values, &is_shell, interior_max);
    let bounded_verdict = sup_abs.is_finite() && shell_growth.is_none_or(|g| g < 2.0);

    let oracle = if opts.oracle_stride > 0 {
        use rayon::prelude::*;
        let picks: Vec<usize> = (0..y_grid.len())
            .filter(|&i| !is_shell[i])
            .step_by(opts.oracle_stride)
            .collect();
        let values: Vec<Option<f64>> = picks
            .par_iter()
            .map(|&i| match taif_oracle(problem, fit, kind, psi, &probe, y_grid[i], source) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("TAIF oracle skipped y = {}: {e}", y_grid[i]);
                    None
                }
            })
            .collect();
        let floor = 0.01 * interior_max;
        let mut max_rel_err = 0.0f64;
        for (&i, o) in picks.iter().zip(&values) {
            if let Some(o) = o {
                let err = (taif_values[i] - o).abs() / o.abs().max(floor);
                max_rel_err = max_rel_err.max(err);
            }
        }
        Some(OracleCheck {
            y: picks.iter().map(|&i| y_grid[i]).collect(),
            chain_rule: picks.iter().map(|&i| taif_values[i]).collect(),
            skipped: values.iter().filter(|v| v.is_none()).count(),
            oracle: values,
            max_rel_err,
        })
    } else {
        None
    };

    Ok(TaifProfile {
        pivot_kind: kind,
        psi_fixed: psi,
        group: probe.group,
        y_grid,
        taif_values,
        is_shell,
        sup_abs,
        interior_max,
        shell_max,
        shell_ratio: shell_max / interior_max,
        shell_growth,
        bounded_verdict,
        oracle,
    })
}

/// Ratio of |TAIF| at the outermost shells to |TAIF| at the innermost ones
/// (floored at 0.1% of the interior sup). An unbounded TAIF grows by orders
/// of magnitude across the shells; a bounded one levels off or decays.
fn shell_growth(y: &[f64], t: &[f64], is_shell: &[bool], interior_max: f64) -> Option<f64> {
    let shells: Vec<(f64, f64)> = (0..y.len())
        .filter(|&i| is_shell[i])
        .map(|i| (y[i], t[i].abs()))
        .collect();
    let centre = {
        let inner: Vec<f64> = (0..y.len()).filter(|&i| !is_shell[i]).map(|i| y[i]).collect();
        (inner.first()? + inner.last()?) / 2.0
    };
    let dist = |y: f64| (y - centre).abs();
    let near = shells.iter().map(|s| dist(s.0)).fold(f64::INFINITY, f64::min);
    let far = shells.iter().map(|s| dist(s.0)).fold(0.0, f64::max);
    if shells.is_empty() || far <= near {
        return None;
    }
    let at = |d: f64| {
        shells
            .iter()
            .filter(|s| (dist(s.0) - d).abs() <= 1e-9 * d)
            .map(|s| s.1)
            .fold(0.0, f64::max)
    };
    Some(at(far) / at(near).max(1e-3 * interior_max).max(f64::MIN_POSITIVE))
}

/// How asymptotic relative efficiency is summarized over θ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EfficiencyMeasure {
    /// Smallest per-coordinate variance ratio: no coordinate loses more
    /// than the target.
    #[default]
    Worst,
    /// Variance ratio for the interest parameter.
    Interest,
    /// tr V_log / tr V_γ.
    Trace,
}

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    pub measure: EfficiencyMeasure,
    pub info: InfoSource,
    pub tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            measure: EfficiencyMeasure::Worst,
            info: InfoSource::Analytic,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    pub are: f64,
    pub target: f64,
    pub measure: EfficiencyMeasure,
    /// The target is at or above ARE(1⁺) and the lower bracket edge was
    /// returned.
    pub at_lower_edge: bool,
    /// ARE on a 20-point γ grid over (1, 3], for the monotonicity check.
    pub are_grid: Vec<(f64, f64)>,
}

const GAMMA_LOWER: f64 = 1.0 + 1e-6;
const GAMMA_UPPER: f64 = 3.0;

/// Asymptotic relative efficiency of the Tsallis estimator at γ against the
/// maximum likelihood estimator, both evaluated at `theta_ref` with the
/// layout of `layout`.
pub fn relative_efficiency(
    model: &dyn Model,
    theta_ref: &DVector<f64>,
    layout: &Dataset,
    gamma: f64,
    measure: EfficiencyMeasure,
    info: InfoSource,
) -> Result<f64> {
    let variance = |rule: ScoreRule| -> Result<DMatrix<f64>> {
        let p = ScoringProblem::new(model, rule, layout)?;
        let (k, j) = p.estimate_kj(theta_ref, info)?;
        Ok(crate::linalg::sandwich(&k, &j)?.0)
    };
    let v_log = variance(ScoreRule::Logarithmic)?;
    let v_g = variance(ScoreRule::tsallis(gamma)?)?;
    Ok(match measure {
        EfficiencyMeasure::Worst => (0..v_log.nrows())
            .map(|i| v_log[(i, i)] / v_g[(i, i)])
            .fold(f64::INFINITY, f64::min),
        EfficiencyMeasure::Interest => {
            let g = model.interest_gradient(theta_ref);
            crate::linalg::quad_form(&v_log, &g) / crate::linalg::quad_form(&v_g, &g)
        }
        EfficiencyMeasure::Trace => v_log.trace() / v_g.trace(),
    })
}

/// γ solving ARE(γ) = target by bisection on (1, 3].
pub fn calibrate_gamma(
    model: &dyn Model,
    theta_ref: &DVector<f64>,
    layout: &Dataset,
    target: f64,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidInput(format!("target efficiency {target} not in (0, 1]")));
    }
    let are = |g: f64| relative_efficiency(model, theta_ref, layout, g, opts.measure, opts.info);
    let are_grid: Vec<(f64, f64)> = (0..20)
        .map(|i| {
            let g = GAMMA_LOWER + (GAMMA_UPPER - GAMMA_LOWER) * (i as f64 + 0.5) / 20.0;
            are(g).map(|a| (g, a))
        })
        .collect::<Result<_>>()?;
    if are_grid.windows(2).any(|w| w[1].1 > w[0].1 + 1e-12) {
        log::warn!("relative efficiency is not monotone decreasing in gamma on (1, 3]");
    }
    let (a_lo, a_hi) = (are(GAMMA_LOWER)?, are(GAMMA_UPPER)?);
    if target >= a_lo {
        return Ok(Calibration {
            gamma: GAMMA_LOWER,
            are: a_lo,
            target,
            measure: opts.measure,
            at_lower_edge: true,
            are_grid,
        });
    }
    if target < a_hi {
        return Err(Error::Numeric(format!(
            "target efficiency {target} outside the bracket: ARE(1+) = {a_lo}, ARE(3) = {a_hi}"
        )));
    }
    let (mut lo, mut hi) = (GAMMA_LOWER, GAMMA_UPPER);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if are(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    Ok(Calibration {
        gamma,
        are: are(gamma)?,
        target,
        measure: opts.measure,
        at_lower_edge: false,
        are_grid,
    })
}

/// Convenience wrapper that also accepts a fitted reference.
pub fn calibrate_at_fit(
    problem: &ScoringProblem,
    fit: &Fit,
    target: f64,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    calibrate_gamma(problem.model, &fit.theta_hat, problem.data, target, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearRegression, TwoSampleNormal};
    use nalgebra::DMatrix;

    fn two_sample() -> Dataset {
        Dataset::two_sample(
            vec![2.1, 1.4, 3.3, 2.2, 1.9, 2.8, 0.9, 2.5, 1.7, 2.0],
            vec![0.3, -0.4, 0.8, 0.1, -1.2, 0.6, 0.0, 0.2, -0.3, 1.1, -0.6, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn log_if_for_a_mean_is_the_residual() {
        let d = two_sample();
        let p = ScoringProblem::new(&TwoSampleNormal, ScoreRule::Logarithmic, &d).unwrap();
        let fit = p.fit(None).unwrap();
        let probe = Probe { group: 0, x: vec![] };
        for y in [-5.0, 0.0, 2.0, 40.0] {
            let inf = influence_function(&p, &fit.theta_hat, &probe, y, InfoSource::Empirical)
                .unwrap();
            assert!((inf[0] - (y - fit.theta_hat[0])).abs() < 1e-5 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn tsallis_if_redescends_and_vanishes_at_the_centre() {
        let d = two_sample();
        let p = ScoringProblem::new(&TwoSampleNormal, ScoreRule::Tsallis { gamma: 1.3 }, &d)
            .unwrap();
        let fit = p.fit(None).unwrap();
        let probe = Probe { group: 0, x: vec![] };
        let (mu, sd) = (fit.theta_hat[0], fit.theta_hat[2].sqrt());
        let at = |y: f64| {
            influence_function(&p, &fit.theta_hat, &probe, y, InfoSource::Analytic).unwrap()[0]
        };
        assert!(at(mu + 100.0 * sd).abs() < at(mu + 3.0 * sd).abs());
        // The sample's own average gradient is zero at the optimum, so the
        // IF vanishes exactly where s(y) does.
        assert!(at(mu).abs() < 1e-8);
    }

    #[test]
    fn calibration_edges() {
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.37).sin() });
        let d = Dataset::regression(vec![0.0; 40], &x, vec![]).unwrap();
        let m = LinearRegression::new(1, 2).unwrap();
        let th = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let c = calibrate_gamma(&m, &th, &d, 1.0, &Default::default()).unwrap();
        assert!(c.at_lower_edge && c.gamma < 1.0 + 1e-5);
        let c = calibrate_gamma(&m, &th, &d, 0.9, &Default::default()).unwrap();
        assert!((c.are - 0.9).abs() < 1e-6);
        assert!(c.are_grid.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(calibrate_gamma(&m, &th, &d, 0.01, &Default::default()).is_err());
    }

    #[test]
    fn chain_rule_matches_refits() {
        let d = two_sample();
        for rule in [ScoreRule::Logarithmic, ScoreRule::Tsallis { gamma: 1.25 }] {
            let p = ScoringProblem::new(&TwoSampleNormal, rule, &d).unwrap();
            let fit = p.fit(None).unwrap();
            for kind in [PivotKind::Wald, PivotKind::Root] {
                let opts = TaifOptions {
                    y_grid: Some(vec![-3.0, 0.5, 2.0, 6.0]),
                    oracle_stride: 1,
                    ..Default::default()
                };
                let prof = taif(&p, &fit, kind, &opts).unwrap();
                let o = prof.oracle.unwrap();
                assert_eq!(o.skipped, 0);
                assert!(o.max_rel_err < 0.02, "{rule:?} {kind:?} {:?} {:?}", o.chain_rule, o.oracle);
            }
        }
    }
}
