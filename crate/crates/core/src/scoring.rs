//! Total scores, estimating equations, the M-estimation solver and the
//! sensitivity (K), variability (J), sandwich (V) and Godambe (G) matrices.
//!
//! K and J are stored as totals over the sample, so V = K⁻¹JK⁻ᵀ is the
//! asymptotic variance of θ̃ itself and G = V⁻¹.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::linalg::{self, checked_inverse, quad_form, symmetrize};
use crate::models::Model;
use crate::optimize::{self, Bound, SolverOptions};
use crate::rule::ScoreRule;

/// Where K and J come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoSource {
    /// Model expectations when the model supplies them, else empirical.
    #[default]
    Analytic,
    /// Sample averages: finite-difference Hessians of the per-observation
    /// gradients for K, centred outer products of the gradients for J.
    Empirical,
}

/// A scoring rule bound to a model and a dataset.
#[derive(Clone, Copy, Debug)]
pub struct ScoringProblem<'a> {
    pub model: &'a dyn Model,
    pub rule: ScoreRule,
    pub data: &'a Dataset,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fit {
    pub model: String,
    pub rule: ScoreRule,
    pub theta_hat: DVector<f64>,
    pub score_at_opt: f64,
    pub k: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub grad_norm: f64,
    pub info_source: InfoSource,
}

impl Fit {
    pub fn standard_errors(&self) -> DVector<f64> {
        self.v.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Interest-parameter summaries of K and G at a point.
///
/// `k` and `j` are re-expressed in the (ψ, λ) coordinates through the
/// Jacobian of θ(ψ, λ); the (ψ,ψ) entries of the inverses coincide with
/// ∇ψᵀK⁻¹∇ψ and ∇ψᵀV∇ψ in the original coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionedInfo {
    pub k: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// (ψ,ψ) entry of K⁻¹.
    pub k_psipsi: f64,
    /// (ψ,ψ) entry of G⁻¹ = V; the variance of ψ̃.
    pub g_psipsi: f64,
}

impl PartitionedInfo {
    /// ν = (K^{ψψ})⁻¹G^{ψψ}, the scale of the profile score ratio.
    pub fn nu(&self) -> f64 {
        self.g_psipsi / self.k_psipsi
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub solver: SolverOptions,
    pub info: InfoSource,
    /// Jittered restarts tried when no start converges.
    pub restarts: usize,
    /// Seed for the restart jitter.
    pub seed: u64,
    /// Warn when analytic and empirical sensitivity disagree.
    pub check_info: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            solver: SolverOptions::default(),
            info: InfoSource::Analytic,
            restarts: 3,
            seed: 0,
            check_info: true,
        }
    }
}

fn fd_step(model: &dyn Model, theta: &DVector<f64>, j: usize) -> f64 {
    let mut h = 1e-5 * (1.0 + theta[j].abs());
    let bounds = model.bounds();
    while !(bounds[j].contains(theta[j] + h) && bounds[j].contains(theta[j] - h)) {
        h *= 0.1;
        if h < 1e-300 {
            break;
        }
    }
    h
}

impl<'a> ScoringProblem<'a> {
    pub fn new(model: &'a dyn Model, rule: ScoreRule, data: &'a Dataset) -> Result<Self> {
        rule.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        model.check_data(data)?;
        Ok(ScoringProblem { model, rule, data })
    }

    /// Same model and rule on another dataset with the same layout.
    pub fn with_data<'b>(&self, data: &'b Dataset) -> ScoringProblem<'b>
    where
        'a: 'b,
    {
        ScoringProblem {
            model: self.model,
            rule: self.rule,
            data,
        }
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if !self.model.admissible(theta) {
            return Err(Error::Domain(format!(
                "parameter {:?} is not admissible for {}",
                theta.as_slice(),
                self.model.name()
            )));
        }
        Ok(())
    }

    pub fn obs_score(&self, obs: &Obs, theta: &DVector<f64>) -> Result<f64> {
        self.model.obs_score(&self.rule, obs, theta)
    }

    /// ∂S(y;θ)/∂θ for one observation, analytic when available.
    pub fn obs_gradient(&self, obs: &Obs, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(g) = self.model.obs_gradient(&self.rule, obs, theta) {
            return Ok(g);
        }
        let d = theta.len();
        let mut g = DVector::zeros(d);
        for j in 0..d {
            let h = fd_step(self.model, theta, j);
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            g[j] = (self.obs_score(obs, &tp)? - self.obs_score(obs, &tm)?) / (2.0 * h);
        }
        Ok(g)
    }

    /// Σᵢ wᵢ S(yᵢ;θ).
    pub fn total_score(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_theta(theta)?;
        let mut total = 0.0;
        for (i, obs) in self.data.iter().enumerate() {
            let w = self.data.weight(i);
            if w != 0.0 {
                total += w * self.obs_score(&obs, theta)?;
            }
        }
        if !total.is_finite() {
            return Err(Error::Domain(format!(
                "total score is not finite at {:?}",
                theta.as_slice()
            )));
        }
        Ok(total)
    }

    /// Σᵢ wᵢ s(yᵢ;θ).
    pub fn score_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        let mut total = DVector::zeros(theta.len());
        for (i, obs) in self.data.iter().enumerate() {
            let w = self.data.weight(i);
            if w != 0.0 {
                total += self.obs_gradient(&obs, theta)? * w;
            }
        }
        Ok(total)
    }

    fn value_and_gradient(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.total_score(theta)?, self.score_gradient(theta)?))
    }

    /// Per-observation gradients s(yᵢ;θ).
    pub fn obs_gradients(&self, theta: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        self.check_theta(theta)?;
        self.data.iter().map(|o| self.obs_gradient(&o, theta)).collect()
    }

    /// Empirical sensitivity Σᵢ wᵢ ∂s(yᵢ;θ)/∂θᵀ by central differences of
    /// the total gradient.
    pub fn empirical_k(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = theta.len();
        let mut k = DMatrix::zeros(d, d);
        for j in 0..d {
            let h = fd_step(self.model, theta, j);
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            let col = (self.score_gradient(&tp)? - self.score_gradient(&tm)?) / (2.0 * h);
            k.set_column(j, &col);
        }
        Ok(symmetrize(&k))
    }

    /// Empirical variability Σᵢ wᵢ (sᵢ − s̄_g)(sᵢ − s̄_g)ᵀ, centring each
    /// independent sample at its weighted mean gradient so that J stays a
    /// variance away from the unconstrained optimum.
    pub fn empirical_j(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let grads = self.obs_gradients(theta)?;
        let d = theta.len();
        let ng = self.data.n_groups();
        let mut means = vec![DVector::zeros(d); ng];
        let mut wsum = vec![0.0; ng];
        for (i, s) in grads.iter().enumerate() {
            let g = self.data.obs(i).group;
            let w = self.data.weight(i);
            means[g] += s * w;
            wsum[g] += w;
        }
        for g in 0..ng {
            if wsum[g] > 0.0 {
                means[g] /= wsum[g];
            }
        }
        let mut j = DMatrix::zeros(d, d);
        for (i, s) in grads.iter().enumerate() {
            let c = s - &means[self.data.obs(i).group];
            j += &c * c.transpose() * self.data.weight(i);
        }
        Ok(symmetrize(&j))
    }

    /// (K, J) totals at θ.
    pub fn estimate_kj(
        &self,
        theta: &DVector<f64>,
        source: InfoSource,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_theta(theta)?;
        if source == InfoSource::Analytic {
            if let Some((k, j)) = self.model.expected_info(&self.rule, self.data, theta) {
                return Ok((symmetrize(&k), symmetrize(&j)));
            }
        }
        Ok((self.empirical_k(theta)?, self.empirical_j(theta)?))
    }

    /// Interest-parameter partition of K and G at θ.
    pub fn partitioned_info(
        &self,
        theta: &DVector<f64>,
        source: InfoSource,
    ) -> Result<PartitionedInfo> {
        let (k, j) = self.estimate_kj(theta, source)?;
        partition(self.model, theta, &k, &j)
    }

    /// Minimizes the total score from each start and keeps the best
    /// converged solution.
    pub fn fit(&self, theta0: Option<&DVector<f64>>) -> Result<Fit> {
        self.fit_with(theta0, &FitOptions::default())
    }

    pub fn fit_with(&self, theta0: Option<&DVector<f64>>, opts: &FitOptions) -> Result<Fit> {
        let starts: Vec<DVector<f64>> = match theta0 {
            Some(t) => {
                self.total_score(t)?;
                vec![t.clone()]
            }
            None => self.model.initial_guesses(self.data)?,
        };
        let bounds = self.model.bounds();
        let mut best: Option<optimize::Minimum> = None;
        let consider = |m: optimize::Minimum, best: &mut Option<optimize::Minimum>| {
            let better = match best {
                None => true,
                Some(b) => (m.converged && !b.converged) || (m.converged == b.converged && m.value < b.value),
            };
            if better {
                *best = Some(m);
            }
        };
        let run = |x0: &DVector<f64>| {
            optimize::minimize_in_box(|t| self.value_and_gradient(t), &bounds, x0, &opts.solver)
        };
        let mut last_err = None;
        // The log score is convex enough in practice for the first start to
        // suffice; redescending rules can have several stationary points, so
        // every start is tried.
        let try_all = matches!(self.rule, ScoreRule::Tsallis { .. });
        for x0 in &starts {
            if self.total_score(x0).is_err() {
                continue;
            }
            match run(x0) {
                Ok(m) => {
                    let done = m.converged && !try_all;
                    consider(m, &mut best);
                    if done {
                        break;
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        if !best.as_ref().is_some_and(|b| b.converged) {
            let base = best.as_ref().map(|b| b.x.clone()).unwrap_or_else(|| starts[0].clone());
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            for _ in 0..opts.restarts {
                let Ok(u) = optimize::to_unconstrained(&bounds, &base) else {
                    break;
                };
                let jitter = u.map(|v| v + 0.1 * (1.0 + v.abs()) * (rng.random::<f64>() - 0.5));
                let x0 = optimize::from_unconstrained(&bounds, &jitter);
                match run(&x0) {
                    Ok(m) => {
                        let done = m.converged;
                        consider(m, &mut best);
                        if done {
                            break;
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
        }
        let m = match best {
            Some(m) => m,
            None => {
                return Err(last_err.unwrap_or_else(|| {
                    Error::Domain("score is not finite at any starting point".into())
                }))
            }
        };
        if !m.converged {
            log::warn!(
                "{} fit did not reach the gradient tolerance (‖∇S‖ = {:e})",
                self.rule.label(),
                m.gradient.norm()
            );
        }
        self.finish_fit(m, opts)
    }

    fn finish_fit(&self, m: optimize::Minimum, opts: &FitOptions) -> Result<Fit> {
        let theta = m.x;
        let (k, j) = self.estimate_kj(&theta, opts.info)?;
        if opts.check_info
            && opts.info == InfoSource::Analytic && self.model.expected_info(&self.rule, self.data, &theta).is_some() {
            if let Ok(emp) = self.empirical_k(&theta) {
                let rel = (&emp - &k).norm() / k.norm();
                if rel > 0.1 {
                    log::warn!(
                        "analytic and empirical sensitivity matrices differ by {:.1}%",
                        100.0 * rel
                    );
                }
            }
        }
        let (v, _) = linalg::sandwich(&k, &j)?;
        let g = symmetrize(&checked_inverse(&v, "sandwich variance V")?);
        Ok(Fit {
            model: self.model.name(),
            rule: self.rule,
            score_at_opt: m.value,
            grad_norm: m.gradient.norm(),
            converged: m.converged,
            n_iter: m.iterations,
            theta_hat: theta,
            k,
            j,
            v,
            g,
            info_source: opts.info,
        })
    }

    /// Minimizes the total score over λ at fixed ψ, starting from `lambda0`.
    /// Returns (λ̃_ψ, S(θ̃_ψ), converged).
    pub fn profile_point(
        &self,
        psi: f64,
        lambda0: &DVector<f64>,
        solver: &SolverOptions,
    ) -> Result<(DVector<f64>, f64, bool)> {
        let bounds: Vec<Bound> = self.model.nuisance_bounds();
        let objective = |lambda: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
            let theta = self.model.compose(psi, lambda);
            let (f, g) = self.value_and_gradient(&theta)?;
            let jac = self.model.compose_jacobian(psi, lambda);
            let full = jac.transpose() * g;
            Ok((f, full.rows(1, lambda.len()).into_owned()))
        };
        let m = optimize::minimize_in_box(objective, &bounds, lambda0, solver)?;
        Ok((m.x, m.value, m.converged))
    }
}

/// Partition of (K, J) at θ for the model's interest parameter.
pub fn partition(
    model: &dyn Model,
    theta: &DVector<f64>,
    k: &DMatrix<f64>,
    j: &DMatrix<f64>,
) -> Result<PartitionedInfo> {
    let (v, k_inv) = linalg::sandwich(k, j)?;
    let grad = model.interest_gradient(theta);
    let k_psipsi = quad_form(&k_inv, &grad);
    let g_psipsi = quad_form(&v, &grad);
    if !(k_psipsi > 0.0) || !(g_psipsi > 0.0) {
        return Err(Error::Numeric(format!(
            "non-positive interest variance (K^ψψ = {k_psipsi:e}, G^ψψ = {g_psipsi:e})"
        )));
    }
    let psi = model.interest(theta);
    let jac = model.compose_jacobian(psi, &model.nuisance(theta));
    let kp = symmetrize(&(jac.transpose() * k * &jac));
    let jp = symmetrize(&(jac.transpose() * j * &jac));
    let (vp, _) = linalg::sandwich(&kp, &jp)?;
    let gp = symmetrize(&checked_inverse(&vp, "partitioned sandwich")?);
    Ok(PartitionedInfo {
        k: kp,
        g: gp,
        k_psipsi,
        g_psipsi,
    })
}

/// Eigenvalues of JK⁻¹ at the fit, sorted descending.
pub fn eigenvalues_jkinv(fit: &Fit) -> Result<Vec<f64>> {
    linalg::eigenvalues_j_kinv(&fit.k, &fit.j)
}
