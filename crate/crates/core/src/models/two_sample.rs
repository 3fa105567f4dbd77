//! Two independent normal samples, θ = (μ₁, μ₂, σ₁², σ₂²).
//!
//! [`TwoSampleNormal`] targets the mean difference ψ = μ₁ − μ₂ and
//! [`NormalAuc`] the reliability ψ = Φ((μ₂−μ₁)/√(σ₁²+σ₂²)). Both share the
//! per-sample scoring pieces; the cross-sample blocks of K and J are zero.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};

use super::normal::{normal_info, normal_log_density, normal_piece, tsallis_integral_normal};
use super::{median, robust_scale, Model, WaldScale};
use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::optimize::Bound;
use crate::rule::ScoreRule;

fn check_two_groups(data: &Dataset) -> Result<()> {
    if data.n_groups() != 2 || data.n_covariates() != 0 {
        return Err(Error::InvalidInput(
            "model needs exactly two samples and no covariates".into(),
        ));
    }
    if data.group_size(0) < 2 || data.group_size(1) < 2 {
        return Err(Error::InvalidInput(
            "each sample needs at least two observations".into(),
        ));
    }
    Ok(())
}

fn guesses(data: &Dataset) -> Vec<DVector<f64>> {
    let a = data.group_values(0);
    let b = data.group_values(1);
    let robust = DVector::from_vec(vec![
        median(&a),
        median(&b),
        robust_scale(&a).powi(2),
        robust_scale(&b).powi(2),
    ]);
    let (ma, va) = super::mean_var(&a);
    let (mb, vb) = super::mean_var(&b);
    let moments = DVector::from_vec(vec![ma, mb, va.max(1e-12), vb.max(1e-12)]);
    vec![robust, moments]
}

fn piece_index(g: usize) -> (usize, usize) {
    (g, 2 + g)
}

fn score(rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> f64 {
    let (im, iv) = piece_index(obs.group);
    normal_piece(rule, obs.y, theta[im], theta[iv]).score
}

fn gradient(rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> DVector<f64> {
    let (im, iv) = piece_index(obs.group);
    let p = normal_piece(rule, obs.y, theta[im], theta[iv]);
    let mut g = DVector::zeros(4);
    g[im] = p.d_mu;
    g[iv] = p.d_var;
    g
}

fn info(rule: &ScoreRule, data: &Dataset, theta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut k = DMatrix::zeros(4, 4);
    let mut j = DMatrix::zeros(4, 4);
    for g in 0..2 {
        let n = data.group_weight(g);
        let (im, iv) = piece_index(g);
        let ni = normal_info(rule, theta[iv]);
        k[(im, im)] = n * ni.k_mu;
        k[(iv, iv)] = n * ni.k_var;
        j[(im, im)] = n * ni.j_mu;
        j[(iv, iv)] = n * ni.j_var;
    }
    (k, j)
}

fn simulate(theta: &DVector<f64>, layout: &Dataset, rng: &mut dyn RngCore) -> Result<Dataset> {
    let dists = [
        Normal::new(theta[0], theta[2].sqrt()).map_err(|e| Error::Domain(e.to_string()))?,
        Normal::new(theta[1], theta[3].sqrt()).map_err(|e| Error::Domain(e.to_string()))?,
    ];
    let y: Vec<f64> = layout
        .groups()
        .iter()
        .map(|&g| dists[g].sample(rng))
        .collect();
    layout.with_responses(y)
}

const BOUNDS: [Bound; 4] = [Bound::Free, Bound::Free, Bound::Lower(0.0), Bound::Lower(0.0)];

macro_rules! shared_normal_impl {
    () => {
        fn dim(&self) -> usize {
            4
        }

        fn bounds(&self) -> Vec<Bound> {
            BOUNDS.to_vec()
        }

        fn check_data(&self, data: &Dataset) -> Result<()> {
            check_two_groups(data)
        }

        fn initial_guesses(&self, data: &Dataset) -> Result<Vec<DVector<f64>>> {
            check_two_groups(data)?;
            Ok(guesses(data))
        }

        fn log_density(&self, obs: &Obs, theta: &DVector<f64>) -> f64 {
            let (im, iv) = piece_index(obs.group);
            normal_log_density(obs.y, theta[im], theta[iv])
        }

        fn support(&self, _obs: &Obs) -> (f64, f64) {
            (f64::NEG_INFINITY, f64::INFINITY)
        }

        fn tsallis_integral(&self, obs: &Obs, theta: &DVector<f64>, gamma: f64) -> Option<f64> {
            let (im, iv) = piece_index(obs.group);
            Some(tsallis_integral_normal(theta[im], theta[iv], gamma))
        }

        fn obs_score(&self, rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> Result<f64> {
            Ok(score(rule, obs, theta))
        }

        fn obs_gradient(
            &self,
            rule: &ScoreRule,
            obs: &Obs,
            theta: &DVector<f64>,
        ) -> Option<DVector<f64>> {
            Some(gradient(rule, obs, theta))
        }

        fn expected_info(
            &self,
            rule: &ScoreRule,
            data: &Dataset,
            theta: &DVector<f64>,
        ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
            Some(info(rule, data, theta))
        }

        fn nuisance_bounds(&self) -> Vec<Bound> {
            vec![Bound::Free, Bound::Lower(0.0), Bound::Lower(0.0)]
        }

        fn simulate(
            &self,
            theta: &DVector<f64>,
            layout: &Dataset,
            rng: &mut dyn RngCore,
        ) -> Result<Dataset> {
            simulate(theta, layout, rng)
        }

        fn location_scale(&self, theta: &DVector<f64>, obs: &Obs) -> (f64, f64) {
            let (im, iv) = piece_index(obs.group);
            (theta[im], theta[iv].sqrt())
        }
    };
}

/// Heteroscedastic two-sample comparison; ψ = μ₁ − μ₂, λ = (μ₂, σ₁², σ₂²).
#[derive(Clone, Copy, Debug, Default)]
pub struct TwoSampleNormal;

impl Model for TwoSampleNormal {
    shared_normal_impl!();

    fn name(&self) -> String {
        "two-sample-normal".into()
    }

    fn param_names(&self) -> Vec<String> {
        ["mu_x", "mu_y", "var_x", "var_y"].map(String::from).to_vec()
    }

    fn interest(&self, theta: &DVector<f64>) -> f64 {
        theta[0] - theta[1]
    }

    fn interest_gradient(&self, _theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0])
    }

    fn interest_name(&self) -> String {
        "mu_x - mu_y".into()
    }

    fn nuisance(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![theta[1], theta[2], theta[3]])
    }

    fn compose(&self, psi: f64, lambda: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![psi + lambda[0], lambda[0], lambda[1], lambda[2]])
    }

    fn compose_jacobian(&self, _psi: f64, _lambda: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 0)] = 1.0;
        j[(0, 1)] = 1.0;
        j[(1, 1)] = 1.0;
        j[(2, 2)] = 1.0;
        j[(3, 3)] = 1.0;
        j
    }
}

/// Normal stress–strength reliability P(X₁ < X₂) with λ = (μ₁, σ₁², σ₂²).
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalAuc;

fn std_normal() -> StdNormal {
    StdNormal::standard()
}

/// Φ⁻¹(p) with one Newton step so that Φ(Φ⁻¹(p)) = p to rounding.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    let n = std_normal();
    let z = n.inverse_cdf(p);
    if z.is_finite() {
        z - (n.cdf(z) - p) / n.pdf(z)
    } else {
        z
    }
}

impl Model for NormalAuc {
    shared_normal_impl!();

    fn name(&self) -> String {
        "auc-normal".into()
    }

    fn param_names(&self) -> Vec<String> {
        ["mu_1", "mu_2", "var_1", "var_2"].map(String::from).to_vec()
    }

    fn interest(&self, theta: &DVector<f64>) -> f64 {
        super::auc_from_normal(theta[0], theta[1], theta[2], theta[3])
    }

    fn interest_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let s2 = theta[2] + theta[3];
        let s = s2.sqrt();
        let delta = (theta[1] - theta[0]) / s;
        let dens = std_normal().pdf(delta);
        let dv = -dens * delta / (2.0 * s2);
        DVector::from_vec(vec![-dens / s, dens / s, dv, dv])
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
        DVector::from_vec(vec![theta[0], theta[2], theta[3]])
    }

    fn compose(&self, psi: f64, lambda: &DVector<f64>) -> DVector<f64> {
        let z = normal_quantile(psi);
        let s = (lambda[1] + lambda[2]).sqrt();
        DVector::from_vec(vec![lambda[0], lambda[0] + z * s, lambda[1], lambda[2]])
    }

    fn compose_jacobian(&self, psi: f64, lambda: &DVector<f64>) -> DMatrix<f64> {
        let z = normal_quantile(psi);
        let s = (lambda[1] + lambda[2]).sqrt();
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = s / std_normal().pdf(z);
        j[(1, 1)] = 1.0;
        j[(1, 2)] = z / (2.0 * s);
        j[(1, 3)] = z / (2.0 * s);
        j[(2, 2)] = 1.0;
        j[(3, 3)] = 1.0;
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let lambda = DVector::from_vec(vec![0.4, 1.3, 0.6]);
        for m in [&TwoSampleNormal as &dyn Model, &NormalAuc] {
            let psi = if m.interest_range().1 == 1.0 { 0.7 } else { 1.5 };
            let analytic = m.compose_jacobian(psi, &lambda);
            let fd = super::super::fd_compose_jacobian(m, psi, &lambda);
            assert!((&analytic - &fd).abs().max() < 1e-6, "{}", m.name());
        }
    }

    #[test]
    fn compose_inverts_interest() {
        let lambda = DVector::from_vec(vec![0.4, 1.3, 0.6]);
        let th = NormalAuc.compose(0.83, &lambda);
        assert!((NormalAuc.interest(&th) - 0.83).abs() < 1e-12);
        assert_eq!(NormalAuc.nuisance(&th), lambda);
        let th = TwoSampleNormal.compose(2.0, &lambda);
        assert_eq!(TwoSampleNormal.interest(&th), 2.0);
    }
}
