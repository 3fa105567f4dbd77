use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Normal};

use super::normal::{normal_info, normal_log_density, normal_piece, tsallis_integral_normal};
use super::{median, Model};
use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::optimize::Bound;
use crate::rule::ScoreRule;

/// Homoscedastic linear regression yᵢ = xᵢᵀβ + εᵢ, εᵢ ~ N(0, σ²), with
/// θ = (β₀, …, β_{p−1}, σ²) and ψ = β_k.
#[derive(Clone, Debug)]
pub struct LinearRegression {
    interest: usize,
    n_coef: usize,
    names: Option<Vec<String>>,
}

impl LinearRegression {
    /// Model with `n_coef` regression coefficients (design columns) and
    /// interest coefficient `interest`.
    pub fn new(interest: usize, n_coef: usize) -> Result<Self> {
        if interest >= n_coef {
            return Err(Error::InvalidInput(format!(
                "interest coefficient {interest} out of range for {n_coef} columns"
            )));
        }
        Ok(LinearRegression {
            interest,
            n_coef,
            names: None,
        })
    }

    /// Names the coefficients after the design columns.
    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_coef {
            return Err(Error::InvalidInput(format!(
                "{} coefficient names for {} columns",
                names.len(),
                self.n_coef
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    fn coef_name(&self, j: usize) -> String {
        match &self.names {
            Some(n) => n[j].clone(),
            None => format!("beta_{j}"),
        }
    }

    pub fn interest_index(&self) -> usize {
        self.interest
    }
}

fn mean_of(obs: &Obs, theta: &DVector<f64>) -> f64 {
    obs.x.iter().zip(theta.iter()).map(|(x, b)| x * b).sum()
}

fn weighted_ls(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Option<DVector<f64>> {
    let p = x.ncols();
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for i in 0..x.nrows() {
        let row = x.row(i);
        for r in 0..p {
            b[r] += w[i] * row[r] * y[i];
            for c in 0..p {
                a[(r, c)] += w[i] * row[r] * row[c];
            }
        }
    }
    a.lu().solve(&b)
}

/// Least absolute deviations by iteratively reweighted least squares.
fn lad(x: &DMatrix<f64>, y: &[f64], start: &DVector<f64>) -> DVector<f64> {
    let mut beta = start.clone();
    for _ in 0..100 {
        let w: Vec<f64> = (0..y.len())
            .map(|i| 1.0 / (y[i] - (x.row(i) * &beta)[0]).abs().max(1e-8))
            .collect();
        match weighted_ls(x, y, &w) {
            Some(next) => {
                let step = (&next - &beta).norm();
                beta = next;
                if step < 1e-10 * (1.0 + beta.norm()) {
                    break;
                }
            }
            None => break,
        }
    }
    beta
}

impl Model for LinearRegression {
    fn name(&self) -> String {
        "linear-regression".into()
    }

    fn dim(&self) -> usize {
        self.n_coef + 1
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_coef).map(|j| self.coef_name(j)).collect();
        names.push("var".into());
        names
    }

    fn bounds(&self) -> Vec<Bound> {
        let mut b = vec![Bound::Free; self.n_coef];
        b.push(Bound::Lower(0.0));
        b
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        let p = data.n_covariates();
        if p != self.n_coef || data.n_groups() != 1 {
            return Err(Error::InvalidInput(format!(
                "regression model expects {} design columns, data has {p}",
                self.n_coef
            )));
        }
        if data.len() <= p {
            return Err(Error::InvalidInput("more coefficients than observations".into()));
        }
        let gram = data.design().transpose() * data.design();
        if gram.clone().svd(false, false).rank(1e-10 * gram.norm()) < p {
            return Err(Error::InvalidInput("design matrix is rank deficient".into()));
        }
        Ok(())
    }

    fn initial_guesses(&self, data: &Dataset) -> Result<Vec<DVector<f64>>> {
        self.check_data(data)?;
        let x = data.design();
        let y = data.responses();
        let ones = vec![1.0; y.len()];
        let ols = weighted_ls(&x, y, &ones)
            .ok_or_else(|| Error::InvalidInput("singular design".into()))?;
        let lad = lad(&x, y, &ols);
        let with_var = |beta: &DVector<f64>, robust: bool| {
            let res: Vec<f64> = (0..y.len()).map(|i| y[i] - (x.row(i) * beta)[0]).collect();
            let var = if robust {
                let abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
                (1.482_602_218_505_602 * median(&abs)).powi(2)
            } else {
                res.iter().map(|r| r * r).sum::<f64>() / y.len() as f64
            };
            let mut th = beta.clone().resize_vertically(beta.len() + 1, 0.0);
            th[beta.len()] = if var > 0.0 { var } else { 1.0 };
            th
        };
        Ok(vec![with_var(&lad, true), with_var(&ols, false)])
    }

    fn log_density(&self, obs: &Obs, theta: &DVector<f64>) -> f64 {
        normal_log_density(obs.y, mean_of(obs, theta), theta[obs.x.len()])
    }

    fn support(&self, _obs: &Obs) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn tsallis_integral(&self, obs: &Obs, theta: &DVector<f64>, gamma: f64) -> Option<f64> {
        Some(tsallis_integral_normal(0.0, theta[obs.x.len()], gamma))
    }

    fn obs_score(&self, rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> Result<f64> {
        Ok(normal_piece(rule, obs.y, mean_of(obs, theta), theta[obs.x.len()]).score)
    }

    fn obs_gradient(
        &self,
        rule: &ScoreRule,
        obs: &Obs,
        theta: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let p = obs.x.len();
        let piece = normal_piece(rule, obs.y, mean_of(obs, theta), theta[p]);
        let mut g = DVector::zeros(p + 1);
        for (j, xj) in obs.x.iter().enumerate() {
            g[j] = piece.d_mu * xj;
        }
        g[p] = piece.d_var;
        Some(g)
    }

    fn expected_info(
        &self,
        rule: &ScoreRule,
        data: &Dataset,
        theta: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let p = data.n_covariates();
        let info = normal_info(rule, theta[p]);
        let gram = data.weighted_gram();
        let n = data.group_weight(0);
        let mut k = DMatrix::zeros(p + 1, p + 1);
        let mut j = DMatrix::zeros(p + 1, p + 1);
        k.view_mut((0, 0), (p, p)).copy_from(&(&gram * info.k_mu));
        j.view_mut((0, 0), (p, p)).copy_from(&(&gram * info.j_mu));
        k[(p, p)] = n * info.k_var;
        j[(p, p)] = n * info.j_var;
        Some((k, j))
    }

    fn interest(&self, theta: &DVector<f64>) -> f64 {
        theta[self.interest]
    }

    fn interest_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        g[self.interest] = 1.0;
        g
    }

    fn interest_name(&self) -> String {
        self.coef_name(self.interest)
    }

    fn nuisance(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta.clone().remove_row(self.interest)
    }

    fn compose(&self, psi: f64, lambda: &DVector<f64>) -> DVector<f64> {
        lambda.clone().insert_row(self.interest, psi)
    }

    fn nuisance_bounds(&self) -> Vec<Bound> {
        let mut b = vec![Bound::Free; self.n_coef - 1];
        b.push(Bound::Lower(0.0));
        b
    }

    fn compose_jacobian(&self, _psi: f64, lambda: &DVector<f64>) -> DMatrix<f64> {
        let d = lambda.len() + 1;
        let mut j = DMatrix::zeros(d, d);
        j[(self.interest, 0)] = 1.0;
        for (c, row) in (0..d).filter(|&r| r != self.interest).enumerate() {
            j[(row, c + 1)] = 1.0;
        }
        j
    }

    fn simulate(
        &self,
        theta: &DVector<f64>,
        layout: &Dataset,
        rng: &mut dyn RngCore,
    ) -> Result<Dataset> {
        let p = layout.n_covariates();
        let noise = Normal::new(0.0, theta[p].sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        let y = layout
            .iter()
            .map(|o| mean_of(&o, theta) + noise.sample(rng))
            .collect();
        layout.with_responses(y)
    }

    fn location_scale(&self, theta: &DVector<f64>, obs: &Obs) -> (f64, f64) {
        (mean_of(obs, theta), theta[obs.x.len()].sqrt())
    }
}
