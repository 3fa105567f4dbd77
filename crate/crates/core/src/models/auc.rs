use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use super::exponential::{exp_info, exp_log_density, exp_piece, tsallis_integral_exponential};
use super::{median, Model, WaldScale};
use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::optimize::Bound;
use crate::rule::ScoreRule;

/// P(X₁ < X₂) for independent exponentials with rates λ₁, λ₂.
pub fn auc_from_rates(rate1: f64, rate2: f64) -> f64 {
    rate1 / (rate1 + rate2)
}

/// P(X₁ < X₂) for independent normals.
pub fn auc_from_normal(mu1: f64, mu2: f64, var1: f64, var2: f64) -> f64 {
    StdNormal::standard().cdf((mu2 - mu1) / (var1 + var2).sqrt())
}

/// Exponential stress–strength model, θ = (λ₁, λ₂), ψ = λ₁/(λ₁+λ₂).
///
/// Profiling uses (ψ, λ₂) with λ₁ = ψλ₂/(1−ψ).
#[derive(Clone, Copy, Debug, Default)]
pub struct ExponentialAuc;

impl Model for ExponentialAuc {
    fn name(&self) -> String {
        "auc-exponential".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["rate_1".into(), "rate_2".into()]
    }

    fn bounds(&self) -> Vec<Bound> {
        vec![Bound::Lower(0.0), Bound::Lower(0.0)]
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_groups() != 2 || data.n_covariates() != 0 {
            return Err(Error::InvalidInput("model needs exactly two samples".into()));
        }
        if data.responses().iter().any(|&y| y < 0.0) {
            return Err(Error::InvalidInput(
                "exponential responses must be non-negative".into(),
            ));
        }
        if data.group_values(0).iter().all(|&y| y == 0.0)
            || data.group_values(1).iter().all(|&y| y == 0.0)
        {
            return Err(Error::InvalidInput("a sample is identically zero".into()));
        }
        Ok(())
    }

    fn initial_guesses(&self, data: &Dataset) -> Result<Vec<DVector<f64>>> {
        self.check_data(data)?;
        let rate = |v: &[f64], robust: bool| {
            let m = if robust {
                median(v) / std::f64::consts::LN_2
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            };
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        };
        let (a, b) = (data.group_values(0), data.group_values(1));
        Ok(vec![
            DVector::from_vec(vec![rate(&a, true), rate(&b, true)]),
            DVector::from_vec(vec![rate(&a, false), rate(&b, false)]),
        ])
    }

    fn log_density(&self, obs: &Obs, theta: &DVector<f64>) -> f64 {
        exp_log_density(obs.y, theta[obs.group])
    }

    fn support(&self, _obs: &Obs) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn tsallis_integral(&self, obs: &Obs, theta: &DVector<f64>, gamma: f64) -> Option<f64> {
        Some(tsallis_integral_exponential(theta[obs.group], gamma))
    }

    fn obs_score(&self, rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> Result<f64> {
        Ok(exp_piece(rule, obs.y, theta[obs.group]).0)
    }

    fn obs_gradient(
        &self,
        rule: &ScoreRule,
        obs: &Obs,
        theta: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(2);
        g[obs.group] = exp_piece(rule, obs.y, theta[obs.group]).1;
        Some(g)
    }

    fn expected_info(
        &self,
        rule: &ScoreRule,
        data: &Dataset,
        theta: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let mut k = DMatrix::zeros(2, 2);
        let mut j = DMatrix::zeros(2, 2);
        for g in 0..2 {
            let n = data.group_weight(g);
            let (kk, jj) = exp_info(rule, theta[g]);
            k[(g, g)] = n * kk;
            j[(g, g)] = n * jj;
        }
        Some((k, j))
    }

    fn interest(&self, theta: &DVector<f64>) -> f64 {
        auc_from_rates(theta[0], theta[1])
    }

    fn interest_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let s = theta[0] + theta[1];
        DVector::from_vec(vec![theta[1] / (s * s), -theta[0] / (s * s)])
    }

    fn interest_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn wald_scale(&self) -> WaldScale {
        WaldScale::Logit
    }

    fn interest_name(&self) -> String {
        "AUC".into()
    }

    fn nuisance(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![theta[1]])
    }

    fn compose(&self, psi: f64, lambda: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![psi * lambda[0] / (1.0 - psi), lambda[0]])
    }

    fn nuisance_bounds(&self) -> Vec<Bound> {
        vec![Bound::Lower(0.0)]
    }

    fn compose_jacobian(&self, psi: f64, lambda: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2, 2);
        j[(0, 0)] = lambda[0] / (1.0 - psi).powi(2);
        j[(0, 1)] = psi / (1.0 - psi);
        j[(1, 1)] = 1.0;
        j
    }

    fn simulate(
        &self,
        theta: &DVector<f64>,
        layout: &Dataset,
        rng: &mut dyn RngCore,
    ) -> Result<Dataset> {
        let dists = [
            Exp::new(theta[0]).map_err(|e| Error::Domain(e.to_string()))?,
            Exp::new(theta[1]).map_err(|e| Error::Domain(e.to_string()))?,
        ];
        let y = layout
            .groups()
            .iter()
            .map(|&g| dists[g].sample(rng))
            .collect();
        layout.with_responses(y)
    }

    fn location_scale(&self, theta: &DVector<f64>, obs: &Obs) -> (f64, f64) {
        let mean = 1.0 / theta[obs.group];
        (mean, mean)
    }
}
