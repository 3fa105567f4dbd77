//! Canonical exponential families f(y;θ) = exp(θᵀt(y) − c(θ)) with zero
//! carrier, for which ∫f^γ = exp(c(γθ) − γc(θ)) is available in closed
//! form whenever γθ stays in the natural parameter space.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Beta as BetaDist, Distribution, Exp, Gamma as GammaDist, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::{digamma, ln_gamma};

use super::Model;
use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::optimize::Bound;
use crate::rule::ScoreRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NaturalFamily {
    /// t = (y, y²), θ = (μ/σ², −1/(2σ²)).
    Normal,
    /// t = y, θ = −λ.
    Exponential,
    /// t = (log y, y), θ = (α−1, −β) for shape α and rate β.
    Gamma,
    /// t = (log y, log(1−y)), θ = (α−1, β−1).
    Beta,
}

impl NaturalFamily {
    pub fn dim(self) -> usize {
        match self {
            NaturalFamily::Exponential => 1,
            _ => 2,
        }
    }

    pub fn support(self) -> (f64, f64) {
        match self {
            NaturalFamily::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            NaturalFamily::Exponential => (0.0, f64::INFINITY),
            NaturalFamily::Gamma => (0.0, f64::INFINITY),
            NaturalFamily::Beta => (0.0, 1.0),
        }
    }

    pub fn bounds(self) -> Vec<Bound> {
        match self {
            NaturalFamily::Normal => vec![Bound::Free, Bound::Upper(0.0)],
            NaturalFamily::Exponential => vec![Bound::Upper(0.0)],
            NaturalFamily::Gamma => vec![Bound::Lower(-1.0), Bound::Upper(0.0)],
            NaturalFamily::Beta => vec![Bound::Lower(-1.0), Bound::Lower(-1.0)],
        }
    }

    pub fn in_natural_space(self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().all(|v| v.is_finite())
            && self.bounds().iter().zip(theta).all(|(b, &v)| b.contains(v))
    }

    /// Sufficient statistic; `None` outside the support.
    pub fn stat(self, y: f64) -> Option<Vec<f64>> {
        let (lo, hi) = self.support();
        let inside = match self {
            NaturalFamily::Normal => y.is_finite(),
            NaturalFamily::Exponential => y >= lo && y < hi,
            _ => y > lo && y < hi,
        };
        if !inside {
            return None;
        }
        Some(match self {
            NaturalFamily::Normal => vec![y, y * y],
            NaturalFamily::Exponential => vec![y],
            NaturalFamily::Gamma => vec![y.ln(), y],
            NaturalFamily::Beta => vec![y.ln(), (1.0 - y).ln()],
        })
    }

    /// Cumulant c(θ).
    pub fn cumulant(self, theta: &[f64]) -> Result<f64> {
        if !self.in_natural_space(theta) {
            return Err(Error::Domain(format!(
                "{theta:?} is outside the natural parameter space of the {self:?} family"
            )));
        }
        Ok(match self {
            NaturalFamily::Normal => {
                let (a, b) = (theta[0], theta[1]);
                -a * a / (4.0 * b) + 0.5 * (PI / -b).ln()
            }
            NaturalFamily::Exponential => -(-theta[0]).ln(),
            NaturalFamily::Gamma => {
                let shape = theta[0] + 1.0;
                ln_gamma(shape) - shape * (-theta[1]).ln()
            }
            NaturalFamily::Beta => ln_beta(theta[0] + 1.0, theta[1] + 1.0),
        })
    }

    /// ∇c(θ), the mean of t(Y).
    pub fn cumulant_gradient(self, theta: &[f64]) -> Result<Vec<f64>> {
        self.cumulant(theta)?;
        Ok(match self {
            NaturalFamily::Normal => {
                let (a, b) = (theta[0], theta[1]);
                vec![-a / (2.0 * b), a * a / (4.0 * b * b) - 0.5 / b]
            }
            NaturalFamily::Exponential => vec![-1.0 / theta[0]],
            NaturalFamily::Gamma => {
                let shape = theta[0] + 1.0;
                vec![digamma(shape) - (-theta[1]).ln(), -shape / theta[1]]
            }
            NaturalFamily::Beta => {
                let (a, b) = (theta[0] + 1.0, theta[1] + 1.0);
                let ab = digamma(a + b);
                vec![digamma(a) - ab, digamma(b) - ab]
            }
        })
    }

    pub fn log_density(self, y: f64, theta: &[f64]) -> Result<f64> {
        let c = self.cumulant(theta)?;
        Ok(match self.stat(y) {
            Some(t) => dot(theta, &t) - c,
            None => f64::NEG_INFINITY,
        })
    }

    /// Mean and standard deviation of Y.
    pub fn moments(self, theta: &[f64]) -> (f64, f64) {
        match self {
            NaturalFamily::Normal => {
                let var = -0.5 / theta[1];
                (theta[0] * var, var.sqrt())
            }
            NaturalFamily::Exponential => {
                let m = -1.0 / theta[0];
                (m, m)
            }
            NaturalFamily::Gamma => {
                let (shape, rate) = (theta[0] + 1.0, -theta[1]);
                (shape / rate, shape.sqrt() / rate)
            }
            NaturalFamily::Beta => {
                let (a, b) = (theta[0] + 1.0, theta[1] + 1.0);
                let m = a / (a + b);
                (m, (m * (1.0 - m) / (a + b + 1.0)).sqrt())
            }
        }
    }

    /// Natural parameter matching a sample's mean and variance.
    fn moment_start(self, y: &[f64]) -> Vec<f64> {
        let (m, v) = super::mean_var(y);
        let v = v.max(1e-8);
        match self {
            NaturalFamily::Normal => vec![m / v, -0.5 / v],
            NaturalFamily::Exponential => vec![-1.0 / m.max(1e-8)],
            NaturalFamily::Gamma => {
                let m = m.max(1e-8);
                let shape = (m * m / v).max(0.05);
                vec![shape - 1.0, -shape / m]
            }
            NaturalFamily::Beta => {
                let m = m.clamp(1e-3, 1.0 - 1e-3);
                let k = (m * (1.0 - m) / v - 1.0).max(0.1);
                vec![m * k - 1.0, (1.0 - m) * k - 1.0]
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(theta: &[f64], gamma: f64) -> Vec<f64> {
    theta.iter().map(|v| gamma * v).collect()
}

/// S(y;θ) = (γ−1)exp(c(γθ) − γc(θ)) − γ f(y;θ)^{γ−1}.
pub fn expfam_tsallis_score(ef: NaturalFamily, y: f64, theta: &[f64], gamma: f64) -> Result<f64> {
    let c = ef.cumulant(theta)?;
    let cg = ef.cumulant(&scaled(theta, gamma))?;
    let logf = ef.log_density(y, theta)?;
    Ok((gamma - 1.0) * (cg - gamma * c).exp() - gamma * ((gamma - 1.0) * logf).exp())
}

/// ∂S/∂θᵢ = γ(γ−1)[exp(c(γθ) − γc(θ))(cᵢ(γθ) − cᵢ(θ)) − f^{γ−1}(tᵢ(y) − cᵢ(θ))].
pub fn expfam_tsallis_gradient(
    ef: NaturalFamily,
    y: f64,
    theta: &[f64],
    gamma: f64,
) -> Result<Vec<f64>> {
    let gt = scaled(theta, gamma);
    let c = ef.cumulant(theta)?;
    let cg = ef.cumulant(&gt)?;
    let dc = ef.cumulant_gradient(theta)?;
    let dcg = ef.cumulant_gradient(&gt)?;
    let integral = (cg - gamma * c).exp();
    let lead = gamma * (gamma - 1.0);
    let grad = match ef.stat(y) {
        Some(t) => {
            let w = ((gamma - 1.0) * (dot(theta, &t) - c)).exp();
            (0..ef.dim())
                .map(|i| lead * (integral * (dcg[i] - dc[i]) - w * (t[i] - dc[i])))
                .collect()
        }
        None => (0..ef.dim())
            .map(|i| lead * integral * (dcg[i] - dc[i]))
            .collect(),
    };
    Ok(grad)
}

/// Per-coordinate verdict on whether f^{γ−1}(tᵢ − cᵢ) stays bounded.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoordinateBound {
    pub bounded: bool,
    /// Largest |b(y)| seen anywhere on the grid.
    pub grid_max: f64,
    /// Largest |b(y)| in the interior part of the grid.
    pub interior_max: f64,
    /// |b(y)| at the grid points closest to each support boundary.
    pub boundary_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub family: NaturalFamily,
    pub gamma: f64,
    pub coordinates: Vec<CoordinateBound>,
}

impl RobustnessReport {
    pub fn bounded(&self) -> bool {
        self.coordinates.iter().all(|c| c.bounded)
    }
}

/// Points approaching each end of the support, ordered from the interior
/// outward, followed by an interior grid.
fn boundary_grid(ef: NaturalFamily, theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (m, s) = ef.moments(theta);
    let (lo, hi) = ef.support();
    let interior: Vec<f64> = (0..=400)
        .map(|i| {
            let y = m + s * (-6.0 + 12.0 * i as f64 / 400.0);
            y.clamp(lo + 1e-3 * s.min(1.0), if hi.is_finite() { hi - 1e-3 * s.min(1.0) } else { f64::MAX })
        })
        .collect();
    let toward = |edge: f64, from: f64| -> Vec<f64> {
        if edge.is_finite() {
            (1..=15).map(|k| edge + (from - edge) * 10f64.powi(-k)).collect()
        } else {
            (1..=6)
                .map(|k| from + edge.signum() * s * 10f64.powi(k))
                .collect()
        }
    };
    (interior, vec![toward(lo, m), toward(hi, m)])
}

/// Evaluates b(y) = exp((γ−1)(θᵀt(y) − c(θ)))·(tᵢ(y) − cᵢ(θ)) on an
/// expanding grid toward the support boundary. A coordinate is bounded when
/// the values at the outermost shells are small relative to the interior
/// maximum and not growing.
pub fn expfam_robustness_check(
    ef: NaturalFamily,
    theta: &[f64],
    gamma: f64,
) -> Result<RobustnessReport> {
    ScoreRule::tsallis(gamma)?;
    let c = ef.cumulant(theta)?;
    let dc = ef.cumulant_gradient(theta)?;
    let b = |y: f64, i: usize| -> f64 {
        match ef.stat(y) {
            Some(t) => (((gamma - 1.0) * (dot(theta, &t) - c)).exp() * (t[i] - dc[i])).abs(),
            None => 0.0,
        }
    };
    let (interior, shells) = boundary_grid(ef, theta);
    let coordinates = (0..ef.dim())
        .map(|i| {
            let interior_max = interior.iter().map(|&y| b(y, i)).fold(0.0, f64::max);
            let mut grid_max = interior_max;
            let mut boundary_values = Vec::new();
            let mut bounded = true;
            for shell in &shells {
                let vals: Vec<f64> = shell.iter().map(|&y| b(y, i)).collect();
                grid_max = vals.iter().copied().fold(grid_max, f64::max);
                let n = vals.len();
                let last = vals[n - 1];
                let growing = vals[n - 1] > vals[n - 2] * (1.0 + 1e-9);
                if !last.is_finite() || growing || last > 0.1 * interior_max.max(f64::MIN_POSITIVE)
                {
                    bounded = false;
                }
                boundary_values.push(last);
            }
            CoordinateBound {
                bounded,
                grid_max,
                interior_max,
                boundary_values,
            }
        })
        .collect();
    Ok(RobustnessReport {
        family: ef,
        gamma,
        coordinates,
    })
}

#[derive(Deserialize)]
struct SpecFile {
    family: NaturalFamily,
    #[serde(default)]
    interest: usize,
}

/// One-sample model in natural parameterization; ψ is a natural-parameter
/// coordinate. No expected information is supplied, so K and J come from
/// empirical averages.
#[derive(Clone, Copy, Debug)]
pub struct ExpFamilyModel {
    pub family: NaturalFamily,
    interest: usize,
}

impl ExpFamilyModel {
    pub fn new(family: NaturalFamily, interest: usize) -> Result<Self> {
        if interest >= family.dim() {
            return Err(Error::InvalidInput(format!(
                "interest index {interest} out of range for the {family:?} family"
            )));
        }
        Ok(ExpFamilyModel { family, interest })
    }

    /// Reads `{"family": "gamma", "interest": 0}`.
    pub fn from_spec_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.display().to_string(),
            source,
        })?;
        let spec: SpecFile = serde_json::from_str(&text)?;
        Self::new(spec.family, spec.interest)
    }
}

impl Model for ExpFamilyModel {
    fn name(&self) -> String {
        format!("expfam-{:?}", self.family).to_lowercase()
    }

    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta_{i}")).collect()
    }

    fn bounds(&self) -> Vec<Bound> {
        self.family.bounds()
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_groups() != 1 || data.n_covariates() != 0 {
            return Err(Error::InvalidInput("model needs a single sample".into()));
        }
        if let Some(y) = data.responses().iter().find(|&&y| self.family.stat(y).is_none()) {
            return Err(Error::InvalidInput(format!(
                "value {y} is outside the support of the {:?} family",
                self.family
            )));
        }
        if data.len() < 2 {
            return Err(Error::InvalidInput("need at least two observations".into()));
        }
        Ok(())
    }

    fn initial_guesses(&self, data: &Dataset) -> Result<Vec<DVector<f64>>> {
        self.check_data(data)?;
        Ok(vec![DVector::from_vec(
            self.family.moment_start(data.responses()),
        )])
    }

    fn log_density(&self, obs: &Obs, theta: &DVector<f64>) -> f64 {
        self.family
            .log_density(obs.y, theta.as_slice())
            .unwrap_or(f64::NAN)
    }

    fn support(&self, _obs: &Obs) -> (f64, f64) {
        self.family.support()
    }

    fn tsallis_integral(&self, _obs: &Obs, theta: &DVector<f64>, gamma: f64) -> Option<f64> {
        let c = self.family.cumulant(theta.as_slice()).ok()?;
        let cg = self.family.cumulant(&scaled(theta.as_slice(), gamma)).ok()?;
        Some((cg - gamma * c).exp())
    }

    fn obs_score(&self, rule: &ScoreRule, obs: &Obs, theta: &DVector<f64>) -> Result<f64> {
        match *rule {
            ScoreRule::Logarithmic => Ok(-self.family.log_density(obs.y, theta.as_slice())?),
            ScoreRule::Tsallis { gamma } => {
                expfam_tsallis_score(self.family, obs.y, theta.as_slice(), gamma)
            }
        }
    }

    fn obs_gradient(
        &self,
        rule: &ScoreRule,
        obs: &Obs,
        theta: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let th = theta.as_slice();
        let g = match *rule {
            ScoreRule::Logarithmic => {
                let t = self.family.stat(obs.y)?;
                let dc = self.family.cumulant_gradient(th).ok()?;
                dc.iter().zip(&t).map(|(c, t)| c - t).collect()
            }
            ScoreRule::Tsallis { gamma } => {
                expfam_tsallis_gradient(self.family, obs.y, th, gamma).ok()?
            }
        };
        Some(DVector::from_vec(g))
    }

    fn interest(&self, theta: &DVector<f64>) -> f64 {
        theta[self.interest]
    }

    fn interest_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        g[self.interest] = 1.0;
        g
    }

    fn interest_range(&self) -> (f64, f64) {
        match self.family.bounds()[self.interest] {
            Bound::Free => (f64::NEG_INFINITY, f64::INFINITY),
            Bound::Lower(c) => (c, f64::INFINITY),
            Bound::Upper(c) => (f64::NEG_INFINITY, c),
        }
    }

    fn interest_name(&self) -> String {
        format!("theta_{}", self.interest)
    }

    fn nuisance(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta.clone().remove_row(self.interest)
    }

    fn compose(&self, psi: f64, lambda: &DVector<f64>) -> DVector<f64> {
        lambda.clone().insert_row(self.interest, psi)
    }

    fn nuisance_bounds(&self) -> Vec<Bound> {
        let mut b = self.family.bounds();
        b.remove(self.interest);
        b
    }

    fn simulate(
        &self,
        theta: &DVector<f64>,
        layout: &Dataset,
        rng: &mut dyn RngCore,
    ) -> Result<Dataset> {
        let bad = |e: String| Error::Domain(e);
        let th = theta.as_slice();
        if !self.family.in_natural_space(th) {
            return Err(bad(format!("{th:?} is not a natural parameter")));
        }
        let n = layout.len();
        let y: Vec<f64> = match self.family {
            NaturalFamily::Normal => {
                let (m, s) = self.family.moments(th);
                let d = Normal::new(m, s).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            NaturalFamily::Exponential => {
                let d = Exp::new(-th[0]).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            NaturalFamily::Gamma => {
                let d = GammaDist::new(th[0] + 1.0, -1.0 / th[1]).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            NaturalFamily::Beta => {
                let d = BetaDist::new(th[0] + 1.0, th[1] + 1.0).map_err(|e| bad(e.to_string()))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
        };
        layout.with_responses(y)
    }

    fn location_scale(&self, theta: &DVector<f64>, _obs: &Obs) -> (f64, f64) {
        self.family.moments(theta.as_slice())
    }
}
