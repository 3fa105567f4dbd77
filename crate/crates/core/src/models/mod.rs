//! Parametric families and their scoring-rule ingredients.

mod auc;
pub mod expfam;
pub mod exponential;
pub mod normal;
mod regression;
mod two_sample;

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::optimize::Bound;
use crate::quadrature;
use crate::rule::ScoreRule;

pub use auc::{auc_from_normal, auc_from_rates, ExponentialAuc};
pub use expfam::{
    expfam_robustness_check, expfam_tsallis_gradient, expfam_tsallis_score, ExpFamilyModel,
    NaturalFamily, RobustnessReport,
};
pub use exponential::tsallis_integral_exponential;
pub use normal::tsallis_integral_normal;
pub use regression::LinearRegression;
pub use two_sample::{NormalAuc, TwoSampleNormal};
pub(crate) use two_sample::normal_quantile;

/// Scale on which Wald pivots for the interest parameter are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaldScale {
    Identity,
    /// Pivot built for logit(ψ), for parameters confined to (0, 1).
    Logit,
}

/// A parametric family f(y;θ) with a scalar interest parameter ψ(θ) and a
/// smooth reparameterization θ = θ(ψ, λ).
pub trait Model: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn param_names(&self) -> Vec<String>;
    fn bounds(&self) -> Vec<Bound>;

    fn check_data(&self, data: &Dataset) -> Result<()>;

    /// Candidate starting points, most trusted first.
    fn initial_guesses(&self, data: &Dataset) -> Result<Vec<DVector<f64>>>;

    fn log_density(&self, obs: &Obs, theta: &DVector<f64>) -> f64;

    /// Support of the response (for quadrature of ∫f^γ).
    fn support(&self, obs: &Obs) -> (f64, f64);

    /// Closed form of ∫ f(y;θ)^γ dy for the distribution of `obs`, if known.
    fn tsallis_integral(&self, _obs: &Obs, _theta: &DVector<f64>, _gamma: f64) -> Option<f64> {
        None
    }

    /// Per-observation score S(y;θ). The default evaluates the rule from
    /// the log-density and, for Tsallis, the closed-form integral or
    /// adaptive quadrature.
    fn obs_score(&self, rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> Result<f64> {
        generic_obs_score(self, rule, obs, theta)
    }

    /// Analytic ∂S(y;θ)/∂θ, when the model has one.
    fn obs_gradient(
        &self,
        _rule: &ScoreRule,
        _obs: &Obs,
        _theta: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        None
    }

    /// Model-expected sensitivity and variability totals (K, J) for the
    /// layout of `data`.
    fn expected_info(
        &self,
        _rule: &ScoreRule,
        _data: &Dataset,
        _theta: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    fn interest(&self, theta: &DVector<f64>) -> f64;
    fn interest_gradient(&self, theta: &DVector<f64>) -> DVector<f64>;

    fn interest_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn wald_scale(&self) -> WaldScale {
        WaldScale::Identity
    }

    fn interest_name(&self) -> String {
        "psi".into()
    }

    /// Nuisance vector λ of θ.
    fn nuisance(&self, theta: &DVector<f64>) -> DVector<f64>;
    /// θ from (ψ, λ).
    fn compose(&self, psi: f64, lambda: &DVector<f64>) -> DVector<f64>;
    fn nuisance_bounds(&self) -> Vec<Bound>;

    /// ∂θ/∂(ψ, λ), a d×d matrix with the ψ column first.
    fn compose_jacobian(&self, psi: f64, lambda: &DVector<f64>) -> DMatrix<f64> {
        fd_compose_jacobian(self, psi, lambda)
    }

    /// Draws a new dataset with the layout (groups, design) of `layout`.
    fn simulate(
        &self,
        theta: &DVector<f64>,
        layout: &Dataset,
        rng: &mut dyn RngCore,
    ) -> Result<Dataset>;

    /// Location and scale of the response distribution for an observation
    /// with the group and covariates of `obs`, used to place grids in y.
    fn location_scale(&self, theta: &DVector<f64>, obs: &Obs) -> (f64, f64);

    fn admissible(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.dim()
            && self
                .bounds()
                .iter()
                .zip(theta.iter())
                .all(|(b, &v)| b.contains(v))
    }
}

pub(crate) fn generic_obs_score<M: Model + ?Sized>(
    model: &M,
    rule: &ScoreRule,
    obs: &Obs,
    theta: &DVector<f64>,
) -> Result<f64> {
    let logf = model.log_density(obs, theta);
    match *rule {
        ScoreRule::Logarithmic => Ok(-logf),
        ScoreRule::Tsallis { gamma } => {
            let integral = match model.tsallis_integral(obs, theta, gamma) {
                Some(v) => v,
                None => {
                    let (lo, hi) = model.support(obs);
                    quadrature::integrate(
                        |y| {
                            let o = Obs { y, ..*obs };
                            (gamma * model.log_density(&o, theta)).exp()
                        },
                        lo,
                        hi,
                        1e-10,
                    )?
                }
            };
            Ok((gamma - 1.0) * integral - gamma * ((gamma - 1.0) * logf).exp())
        }
    }
}

fn fd_compose_jacobian<M: Model + ?Sized>(
    model: &M,
    psi: f64,
    lambda: &DVector<f64>,
) -> DMatrix<f64> {
    let d = model.dim();
    let mut jac = DMatrix::zeros(d, d);
    let h = 1e-6 * (1.0 + psi.abs());
    let col = (model.compose(psi + h, lambda) - model.compose(psi - h, lambda)) / (2.0 * h);
    jac.set_column(0, &col);
    for k in 0..lambda.len() {
        let hk = 1e-6 * (1.0 + lambda[k].abs());
        let mut lp = lambda.clone();
        lp[k] += hk;
        let mut lm = lambda.clone();
        lm[k] -= hk;
        let col = (model.compose(psi, &lp) - model.compose(psi, &lm)) / (2.0 * hk);
        jac.set_column(k + 1, &col);
    }
    jac
}

/// Median of a slice (copying).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Normal-consistent MAD scale, falling back to the sample standard
/// deviation (or 1) when the MAD vanishes.
pub(crate) fn robust_scale(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    let mad = 1.482_602_218_505_602 * median(&dev);
    if mad > 0.0 && mad.is_finite() {
        return mad;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Options that select and configure a built-in model by name.
#[derive(Clone, Debug, Default)]
pub struct ModelOptions {
    /// Interest coefficient for regression / natural-parameter index for
    /// exponential families.
    pub interest: Option<usize>,
    /// Number of design columns (regression only).
    pub n_covariates: Option<usize>,
    /// Design column names (regression only).
    pub covariate_names: Option<Vec<String>>,
}

/// Resolves a model name: `two-sample-normal`, `auc-exponential`,
/// `auc-normal`, `linear-regression`, or `expfam:<spec-file>`.
pub fn model_from_name(name: &str, opts: &ModelOptions) -> Result<Box<dyn Model>> {
    match name {
        "two-sample-normal" => Ok(Box::new(TwoSampleNormal)),
        "auc-exponential" => Ok(Box::new(ExponentialAuc)),
        "auc-normal" => Ok(Box::new(NormalAuc)),
        "linear-regression" => {
            let k = opts.interest.ok_or_else(|| {
                Error::InvalidInput("linear-regression needs an interest coefficient".into())
            })?;
            let p = opts.n_covariates.ok_or_else(|| {
                Error::InvalidInput("linear-regression needs the number of design columns".into())
            })?;
            let mut m = LinearRegression::new(k, p)?;
            if let Some(names) = &opts.covariate_names {
                m = m.with_names(names.clone())?;
            }
            Ok(Box::new(m))
        }
        other => {
            if let Some(path) = other.strip_prefix("expfam:") {
                let mut m = ExpFamilyModel::from_spec_file(Path::new(path))?;
                if let Some(k) = opts.interest {
                    m = ExpFamilyModel::new(m.family, k)?;
                }
                Ok(Box::new(m))
            } else {
                Err(Error::InvalidInput(format!("unknown model '{other}'")))
            }
        }
    }
}

/// True when the model's data layout is a set of independent samples read
/// from a (value, group) table.
pub fn is_two_sample(name: &str) -> bool {
    matches!(name, "two-sample-normal" | "auc-exponential" | "auc-normal")
}
