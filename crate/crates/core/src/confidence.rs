//! Profile estimation, scoring-rule pivots and the confidence distributions
//! (CDs) and confidence curves (CCs) built from them.
//!
//! A CD is stored on a ψ grid as C(ψ) = Φ(q(ψ)) with q = −pivot, so C is
//! increasing in ψ. Queries (intervals, p-values, evidence) interpolate q
//! monotonically between grid points and are pure functions of the stored
//! object.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::{Model, WaldScale};
use crate::monotone::{isotonic_nondecreasing, Pchip};
use crate::optimize::SolverOptions;
use crate::scoring::{partition, Fit, InfoSource, PartitionedInfo, ScoringProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PivotKind {
    /// Profile scoring-rule Wald statistic w_Sp.
    Wald,
    /// Adjusted profile scoring-rule root r_Sp.
    Root,
}

impl std::str::FromStr for PivotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wald" => Ok(PivotKind::Wald),
            "root" => Ok(PivotKind::Root),
            other => Err(Error::InvalidInput(format!("unknown pivot '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    Less,
    Greater,
    TwoSided,
}

impl std::str::FromStr for Alternative {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "two-sided" | "two_sided" => Ok(Alternative::TwoSided),
            other => Err(Error::InvalidInput(format!("unknown alternative '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileOptions {
    pub solver: SolverOptions,
    pub info: InfoSource,
    /// Use ν from the unconstrained fit at every grid point instead of
    /// re-evaluating it at θ̃_ψ.
    pub frozen_nu: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            solver: SolverOptions::default(),
            info: InfoSource::Analytic,
            frozen_nu: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileTrace {
    pub psi_grid: Vec<f64>,
    pub lambda_hat_psi: Vec<DVector<f64>>,
    pub score_profile: Vec<f64>,
    pub nu: Vec<f64>,
    /// Grid points whose constrained solve failed and were interpolated.
    pub flagged: Vec<bool>,
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn phi_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

fn phi_inv(p: f64) -> f64 {
    crate::models::normal_quantile(p)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Coordinate in which pivots are formed and curves interpolated.
fn to_coord(scale: WaldScale, psi: f64) -> f64 {
    match scale {
        WaldScale::Identity => psi,
        WaldScale::Logit => logit(psi),
    }
}

fn from_coord(scale: WaldScale, c: f64) -> f64 {
    match scale {
        WaldScale::Identity => c,
        WaldScale::Logit => expit(c),
    }
}

/// Interest summaries at the unconstrained fit.
pub fn fit_partition(model: &dyn Model, fit: &Fit) -> Result<PartitionedInfo> {
    partition(model, &fit.theta_hat, &fit.k, &fit.j)
}

/// Standard error of ψ̃ on the pivot scale of the model.
pub fn wald_se(model: &dyn Model, fit: &Fit) -> Result<f64> {
    let part = fit_partition(model, fit)?;
    let se = part.g_psipsi.sqrt();
    Ok(match model.wald_scale() {
        WaldScale::Identity => se,
        WaldScale::Logit => {
            let p = model.interest(&fit.theta_hat);
            se / (p * (1.0 - p))
        }
    })
}

/// w_Sp(ψ) = (ψ̃ − ψ)/√G^{ψψ} (on the logit scale for (0,1) parameters).
pub fn pivot_wald(model: &dyn Model, fit: &Fit, psi: f64) -> Result<f64> {
    let se = wald_se(model, fit)?;
    let scale = model.wald_scale();
    let psi_tilde = model.interest(&fit.theta_hat);
    Ok((to_coord(scale, psi_tilde) - to_coord(scale, psi)) / se)
}

/// r_Sp from W_Sp = 2(S(θ̃_ψ) − S(θ̃)) and ν.
pub fn root_from_ratio(
    score_psi: f64,
    score_opt: f64,
    nu: f64,
    psi: f64,
    psi_tilde: f64,
    theta_psi: &DVector<f64>,
) -> Result<f64> {
    let w = 2.0 * (score_psi - score_opt);
    let tol = 1e-8 * score_opt.abs() + 1e-10;
    if w < -tol {
        return Err(Error::LocalOptimum {
            psi,
            score: score_psi,
            optimum: score_opt,
            theta: theta_psi.iter().copied().collect(),
        });
    }
    if !(nu > 0.0) {
        return Err(Error::Numeric(format!("non-positive nu = {nu} at psi = {psi}")));
    }
    let r = (w.max(0.0) / nu).sqrt();
    Ok(if psi_tilde > psi {
        r
    } else if psi_tilde < psi {
        -r
    } else {
        0.0
    })
}

/// Default evaluation grid: `n` points (made odd) spanning ψ̃ ± 6 standard
/// errors on the pivot scale, clipped to the interest range, with ψ̃
/// included exactly at the centre.
pub fn default_grid(model: &dyn Model, fit: &Fit, n: usize) -> Result<Vec<f64>> {
    let n = n.max(3) | 1;
    let half = (n - 1) / 2;
    let scale = model.wald_scale();
    let psi_tilde = model.interest(&fit.theta_hat);
    let se = wald_se(model, fit)?;
    let center = to_coord(scale, psi_tilde);
    let (mut lo, mut hi) = (center - 6.0 * se, center + 6.0 * se);
    match scale {
        WaldScale::Logit => {
            lo = lo.max(logit(1e-4));
            hi = hi.min(logit(1.0 - 1e-4));
        }
        WaldScale::Identity => {
            let (rlo, rhi) = model.interest_range();
            let margin = 1e-6 * (psi_tilde.abs() + se);
            if rlo.is_finite() {
                lo = lo.max(rlo + margin);
            }
            if rhi.is_finite() {
                hi = hi.min(rhi - margin);
            }
        }
    }
    if !(lo < center && center < hi) {
        return Err(Error::Numeric(format!(
            "estimate {psi_tilde} is at the edge of the interest range"
        )));
    }
    let mut grid = Vec::with_capacity(n);
    for i in 0..half {
        grid.push(from_coord(scale, lo + (center - lo) * i as f64 / half as f64));
    }
    grid.push(psi_tilde);
    for i in 1..=half {
        grid.push(from_coord(scale, center + (hi - center) * i as f64 / half as f64));
    }
    Ok(grid)
}

fn nu_at(problem: &ScoringProblem, theta: &DVector<f64>, opts: &ProfileOptions) -> Result<f64> {
    Ok(problem.partitioned_info(theta, opts.info)?.nu())
}

struct Point {
    lambda: DVector<f64>,
    score: f64,
    nu: f64,
    ok: bool,
}

fn walk(
    problem: &ScoringProblem,
    psis: &[f64],
    start: &DVector<f64>,
    fixed_nu: Option<f64>,
    opts: &ProfileOptions,
) -> Vec<Point> {
    let mut out = Vec::with_capacity(psis.len());
    let mut prev: Vec<(f64, DVector<f64>)> = Vec::new();
    let bounds = problem.model.nuisance_bounds();
    for &psi in psis {
        // Linear extrapolation from the last two solutions when it stays
        // admissible, else the last solution.
        let mut lambda0 = prev.last().map_or_else(|| start.clone(), |p| p.1.clone());
        if prev.len() >= 2 {
            let (p1, l1) = &prev[prev.len() - 1];
            let (p0, l0) = &prev[prev.len() - 2];
            if (p1 - p0).abs() > 0.0 {
                let guess = l1 + (l1 - l0) * ((psi - p1) / (p1 - p0));
                if bounds.iter().zip(guess.iter()).all(|(b, &v)| b.contains(v)) {
                    lambda0 = guess;
                }
            }
        }
        let solved = problem
            .profile_point(psi, &lambda0, &opts.solver)
            .and_then(|(lambda, score, converged)| {
                if !converged {
                    return Err(Error::Optimization(format!("profile at psi = {psi}")));
                }
                let nu = match fixed_nu {
                    Some(v) => v,
                    None => nu_at(problem, &problem.model.compose(psi, &lambda), opts)?,
                };
                Ok(Point {
                    lambda,
                    score,
                    nu,
                    ok: true,
                })
            });
        match solved {
            Ok(p) => {
                prev.push((psi, p.lambda.clone()));
                out.push(p);
            }
            Err(e) => {
                log::debug!("profile point failed: {e}");
                out.push(Point {
                    lambda: lambda0,
                    score: f64::NAN,
                    nu: f64::NAN,
                    ok: false,
                });
            }
        }
    }
    out
}

/// Profiles the total score over λ along `psi_grid`, walking outward from
/// the grid point nearest ψ̃ on both sides in parallel with warm starts.
pub fn profile(
    problem: &ScoringProblem,
    fit: &Fit,
    psi_grid: &[f64],
    opts: &ProfileOptions,
) -> Result<ProfileTrace> {
    if psi_grid.is_empty() || psi_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("psi grid must be strictly increasing".into()));
    }
    let model = problem.model;
    let (rlo, rhi) = model.interest_range();
    if psi_grid.iter().any(|&p| !(p > rlo && p < rhi)) {
        return Err(Error::InvalidInput("psi grid leaves the interest range".into()));
    }
    let psi_tilde = model.interest(&fit.theta_hat);
    let lambda_tilde = model.nuisance(&fit.theta_hat);
    let fixed_nu = if opts.frozen_nu {
        Some(fit_partition(model, fit)?.nu())
    } else {
        None
    };
    let c = psi_grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - psi_tilde).abs().partial_cmp(&(b.1 - psi_tilde).abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let right: Vec<f64> = psi_grid[c..].to_vec();
    let left: Vec<f64> = psi_grid[..c].iter().rev().copied().collect();
    let (right_pts, left_pts) = rayon::join(
        || walk(problem, &right, &lambda_tilde, fixed_nu, opts),
        || {
            // Start the left walk from the solution at the centre.
            let mut seq = vec![psi_grid[c]];
            seq.extend(&left);
            let mut pts = walk(problem, &seq, &lambda_tilde, fixed_nu, opts);
            pts.remove(0);
            pts
        },
    );
    let mut points: Vec<Point> = left_pts.into_iter().rev().collect();
    points.extend(right_pts);

    let n = points.len();
    let good: Vec<usize> = (0..n).filter(|&i| points[i].ok).collect();
    if good.is_empty() {
        return Err(Error::Optimization("every profile point failed".into()));
    }
    let flagged: Vec<bool> = points.iter().map(|p| !p.ok).collect();
    let n_flagged = flagged.iter().filter(|&&f| f).count();
    if n_flagged > 0 {
        log::warn!("{n_flagged} of {n} profile points failed and were interpolated");
    }
    let mut lambda_hat_psi = Vec::with_capacity(n);
    let mut score_profile = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for i in 0..n {
        if points[i].ok {
            lambda_hat_psi.push(points[i].lambda.clone());
            score_profile.push(points[i].score);
            nu.push(points[i].nu);
            continue;
        }
        let below = good.iter().rev().find(|&&k| k < i).copied();
        let above = good.iter().find(|&&k| k > i).copied();
        let (a, b) = match (below, above) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, a),
            (None, Some(b)) => (b, b),
            (None, None) => unreachable!(),
        };
        let t = if a == b {
            0.0
        } else {
            (psi_grid[i] - psi_grid[a]) / (psi_grid[b] - psi_grid[a])
        };
        let lerp = |x: f64, y: f64| x + t * (y - x);
        lambda_hat_psi.push(&points[a].lambda + (&points[b].lambda - &points[a].lambda) * t);
        score_profile.push(lerp(points[a].score, points[b].score));
        nu.push(lerp(points[a].nu, points[b].nu));
    }
    Ok(ProfileTrace {
        psi_grid: psi_grid.to_vec(),
        lambda_hat_psi,
        score_profile,
        nu,
        flagged,
    })
}

/// r_Sp at ψ. Uses the trace when ψ is one of its grid points, otherwise
/// solves the constrained problem warm-started from the nearest grid point.
pub fn pivot_root(
    problem: &ScoringProblem,
    trace: &ProfileTrace,
    fit: &Fit,
    psi: f64,
    opts: &ProfileOptions,
) -> Result<f64> {
    let model = problem.model;
    let psi_tilde = model.interest(&fit.theta_hat);
    let nearest = trace
        .psi_grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - psi).abs().partial_cmp(&(b.1 - psi).abs()).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("empty profile trace".into()))?;
    if trace.psi_grid[nearest] == psi {
        return root_from_ratio(
            trace.score_profile[nearest],
            fit.score_at_opt,
            trace.nu[nearest],
            psi,
            psi_tilde,
            &model.compose(psi, &trace.lambda_hat_psi[nearest]),
        );
    }
    let (lambda, score, converged) =
        problem.profile_point(psi, &trace.lambda_hat_psi[nearest], &opts.solver)?;
    if !converged {
        return Err(Error::Optimization(format!("profile at psi = {psi}")));
    }
    let nu = if opts.frozen_nu {
        fit_partition(model, fit)?.nu()
    } else {
        nu_at(problem, &model.compose(psi, &lambda), opts)?
    };
    root_from_ratio(score, fit.score_at_opt, nu, psi, psi_tilde, &model.compose(psi, &lambda))
}

/// r_Sp at a single ψ, reached by a continuation path of constrained
/// solves from ψ̃ so that no grid is needed.
pub fn root_pivot_at(
    problem: &ScoringProblem,
    fit: &Fit,
    psi: f64,
    opts: &ProfileOptions,
) -> Result<f64> {
    let model = problem.model;
    let psi_tilde = model.interest(&fit.theta_hat);
    if psi == psi_tilde {
        return Ok(0.0);
    }
    let scale = model.wald_scale();
    let se = wald_se(model, fit)?;
    let (a, b) = (to_coord(scale, psi_tilde), to_coord(scale, psi));
    let steps = (((b - a).abs() / (0.5 * se)).ceil() as usize).clamp(1, 60);
    let mut lambda = model.nuisance(&fit.theta_hat);
    let mut last = (f64::NAN, false);
    for s in 1..=steps {
        let p = from_coord(scale, a + (b - a) * s as f64 / steps as f64);
        let p = if s == steps { psi } else { p };
        let (l, score, converged) = problem.profile_point(p, &lambda, &opts.solver)?;
        lambda = l;
        last = (score, converged);
    }
    if !last.1 {
        return Err(Error::Optimization(format!("profile at psi = {psi}")));
    }
    let nu = if opts.frozen_nu {
        fit_partition(model, fit)?.nu()
    } else {
        nu_at(problem, &model.compose(psi, &lambda), opts)?
    };
    root_from_ratio(last.0, fit.score_at_opt, nu, psi, psi_tilde, &model.compose(psi, &lambda))
}

/// Confidence interval with flags for endpoints that fell outside the grid
/// (and were replaced by the hull bound).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceObject {
    pub model: String,
    pub rule: String,
    pub gamma: Option<f64>,
    pub kind: PivotKind,
    pub interest: String,
    /// Coordinate in which q(ψ) = Φ⁻¹(C(ψ)) is interpolated.
    pub scale: WaldScale,
    pub psi_grid: Vec<f64>,
    pub pivot: Vec<f64>,
    pub cdf: Vec<f64>,
    pub cc: Vec<f64>,
    pub psi_tilde: f64,
    /// Requested equi-tailed intervals keyed by level.
    #[serde(default)]
    pub ci: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub repaired_points: usize,
    #[serde(default)]
    pub max_repair: f64,
    #[serde(default)]
    pub flagged_points: usize,
}

/// Anchored isotonic repair: C(ψ̃) = 1/2, left of ψ̃ nondecreasing and at
/// most 1/2, right of ψ̃ nondecreasing and at least 1/2.
fn repair(cdf: &[f64], center: usize) -> Vec<f64> {
    let n = cdf.len();
    let mut out = vec![0.5; n];
    let left = isotonic_nondecreasing(&cdf[..center], &vec![1.0; center]);
    for (i, v) in left.into_iter().enumerate() {
        out[i] = v.clamp(0.0, 0.5);
    }
    let right = isotonic_nondecreasing(&cdf[center + 1..], &vec![1.0; n - center - 1]);
    for (i, v) in right.into_iter().enumerate() {
        out[center + 1 + i] = v.clamp(0.5, 1.0);
    }
    out
}

impl ConfidenceObject {
    fn from_pivots(
        model: &dyn Model,
        fit: &Fit,
        kind: PivotKind,
        psi_grid: Vec<f64>,
        pivot: Vec<f64>,
        flagged_points: usize,
    ) -> Self {
        let psi_tilde = model.interest(&fit.theta_hat);
        let raw: Vec<f64> = pivot.iter().map(|p| phi_cdf(-p)).collect();
        let center = psi_grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - psi_tilde).abs().partial_cmp(&(b.1 - psi_tilde).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let violations = raw.windows(2).filter(|w| w[1] < w[0]).count();
        let cdf = if violations > 0 || raw[center] != 0.5 {
            repair(&raw, center)
        } else {
            raw.clone()
        };
        let repaired_points = raw.iter().zip(&cdf).filter(|(a, b)| a != b).count();
        let max_repair = raw.iter().zip(&cdf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if repaired_points > 0 {
            log::info!("monotonicity repair moved {repaired_points} points (max {max_repair:.3e})");
        }
        if repaired_points * 10 > psi_grid.len() {
            log::warn!(
                "{repaired_points} of {} CD values needed monotonicity repair; the profile may be irregular",
                psi_grid.len()
            );
        }
        let cc = cdf.iter().map(|c| (1.0 - 2.0 * c).abs()).collect();
        ConfidenceObject {
            model: model.name(),
            rule: fit.rule.kind_name().to_string(),
            gamma: fit.rule.gamma(),
            kind,
            interest: model.interest_name(),
            scale: model.wald_scale(),
            psi_grid,
            pivot,
            cdf,
            cc,
            psi_tilde,
            ci: BTreeMap::new(),
            repaired_points,
            max_repair,
            flagged_points,
        }
    }

    /// q at the grid points: −pivot where C was not repaired, else Φ⁻¹(C).
    fn q_values(&self) -> Vec<f64> {
        self.pivot
            .iter()
            .zip(&self.cdf)
            .map(|(&p, &c)| {
                if phi_cdf(-p) == c {
                    -p
                } else {
                    phi_inv(c.clamp(1e-300, 1.0 - 1e-16))
                }
            })
            .collect()
    }

    fn interpolant(&self) -> Pchip {
        let x = self.psi_grid.iter().map(|&p| to_coord(self.scale, p)).collect();
        Pchip::new(x, self.q_values())
    }

    fn q_at(&self, psi: f64) -> f64 {
        self.interpolant().eval(to_coord(self.scale, psi))
    }

    /// C(ψ), clamped to the end values outside the grid.
    pub fn cdf_at(&self, psi: f64) -> f64 {
        phi_cdf(self.q_at(psi))
    }

    pub fn cc_at(&self, psi: f64) -> f64 {
        (1.0 - 2.0 * self.cdf_at(psi)).abs()
    }

    /// Equi-tailed interval [C⁻¹(α/2), C⁻¹(1−α/2)] at `level` = 1 − α.
    pub fn ci(&self, level: f64) -> Result<Interval> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidInput(format!("level {level} not in (0, 1)")));
        }
        let alpha = 1.0 - level;
        let f = self.interpolant();
        let (xlo, xhi) = f.domain();
        let z = phi_inv(1.0 - alpha / 2.0);
        let (lo, lo_open) = match f.solve_increasing(-z) {
            Some(x) => (from_coord(self.scale, x), false),
            None => (from_coord(self.scale, xlo), true),
        };
        let (hi, hi_open) = match f.solve_increasing(z) {
            Some(x) => (from_coord(self.scale, x), false),
            None => (from_coord(self.scale, xhi), true),
        };
        Ok(Interval {
            lo,
            hi,
            lo_open,
            hi_open,
        })
    }

    /// Records the interval at `level` in `ci`.
    pub fn add_ci(&mut self, level: f64) -> Result<Interval> {
        let iv = self.ci(level)?;
        self.ci.insert(format!("{level}"), [iv.lo, iv.hi]);
        Ok(iv)
    }

    pub fn p_value(&self, psi0: f64, alternative: Alternative) -> f64 {
        let q = self.q_at(psi0);
        match alternative {
            Alternative::Less => phi_cdf(q),
            Alternative::Greater => phi_cdf(-q),
            Alternative::TwoSided => (2.0 * phi_cdf(-q.abs())).min(1.0),
        }
    }

    /// C(ψ₂) − C(ψ₁), the confidence attached to ψ₁ < ψ < ψ₂.
    pub fn evidence(&self, psi1: f64, psi2: f64) -> Result<f64> {
        if !(psi1 < psi2) {
            return Err(Error::InvalidInput("evidence needs psi1 < psi2".into()));
        }
        Ok(self.cdf_at(psi2) - self.cdf_at(psi1))
    }
}

/// Builds one confidence object per requested pivot on a shared grid; the
/// profile is computed once when a root pivot is requested.
pub fn build_cds(
    problem: &ScoringProblem,
    fit: &Fit,
    kinds: &[PivotKind],
    psi_grid: &[f64],
    opts: &ProfileOptions,
) -> Result<Vec<ConfidenceObject>> {
    let model = problem.model;
    let trace = if kinds.contains(&PivotKind::Root) {
        Some(profile(problem, fit, psi_grid, opts)?)
    } else {
        None
    };
    let psi_tilde = model.interest(&fit.theta_hat);
    kinds
        .iter()
        .map(|&kind| {
            let (pivot, flagged) = match kind {
                PivotKind::Wald => (
                    psi_grid
                        .iter()
                        .map(|&p| pivot_wald(model, fit, p))
                        .collect::<Result<Vec<_>>>()?,
                    0,
                ),
                PivotKind::Root => {
                    let t = trace.as_ref().unwrap();
                    let pivots = (0..psi_grid.len())
                        .map(|i| {
                            root_from_ratio(
                                t.score_profile[i],
                                fit.score_at_opt,
                                t.nu[i],
                                psi_grid[i],
                                psi_tilde,
                                &model.compose(psi_grid[i], &t.lambda_hat_psi[i]),
                            )
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (pivots, t.flagged.iter().filter(|&&f| f).count())
                }
            };
            Ok(ConfidenceObject::from_pivots(
                model,
                fit,
                kind,
                psi_grid.to_vec(),
                pivot,
                flagged,
            ))
        })
        .collect()
}

pub fn build_cd(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    psi_grid: &[f64],
    opts: &ProfileOptions,
) -> Result<ConfidenceObject> {
    Ok(build_cds(problem, fit, &[kind], psi_grid, opts)?.remove(0))
}

/// Runs `f` on `fit`; when it reports that the fit is only a local optimum,
/// refits from the better point and retries (at most three refits).
pub fn refit_on_local_optimum<T>(
    problem: &ScoringProblem,
    fit: Fit,
    mut f: impl FnMut(&Fit) -> Result<T>,
) -> Result<(Fit, T)> {
    let mut fit = fit;
    for _ in 0..3 {
        match f(&fit) {
            Err(Error::LocalOptimum { theta, psi, .. }) => {
                let next = problem.fit(Some(&DVector::from_vec(theta)))?;
                if !(next.score_at_opt < fit.score_at_opt) || !next.converged {
                    return Err(Error::Optimization(format!(
                        "refit from the profile point at psi = {psi} did not improve the fit"
                    )));
                }
                log::info!("fit was a local optimum; refitted from psi = {psi}");
                fit = next;
            }
            other => return other.map(|t| (fit, t)),
        }
    }
    let t = f(&fit)?;
    Ok((fit, t))
}

/// Exact C(ψ) of the given pivot at one ψ without a grid.
pub fn cdf_at_point(
    problem: &ScoringProblem,
    fit: &Fit,
    kind: PivotKind,
    psi: f64,
    opts: &ProfileOptions,
) -> Result<f64> {
    let pivot = match kind {
        PivotKind::Wald => pivot_wald(problem.model, fit, psi)?,
        PivotKind::Root => root_pivot_at(problem, fit, psi, opts)?,
    };
    Ok(phi_cdf(-pivot))
}
