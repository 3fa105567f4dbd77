//! Replicated simulation studies: data generation, shift contamination,
//! coverage of CD intervals, p-value uniformity and CD-median summaries.
//!
//! Each replicate draws from its own ChaCha8 stream (master seed, stream =
//! replicate index), so results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{cdf_at_point, refit_on_local_optimum, Alternative, PivotKind, ProfileOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{model_from_name, Model, ModelOptions};
use crate::rule::ScoreRule;
use crate::scoring::{FitOptions, ScoringProblem};

/// Shift added to one observation of every simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub sample_index: usize,
    /// Defaults to the last observation of the sample.
    #[serde(default)]
    pub obs_index: Option<usize>,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub rule: ScoreRule,
    pub pivot: PivotKind,
    #[serde(default)]
    pub label: Option<String>,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let pivot = match self.pivot {
                PivotKind::Wald => "wald",
                PivotKind::Root => "root",
            };
            format!("{}/{pivot}", self.rule.label())
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub psi0: f64,
    pub alternative: Alternative,
}

fn default_levels() -> Vec<f64> {
    vec![0.95]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub model: String,
    /// True parameter in the model's natural coordinates.
    pub theta: Vec<f64>,
    /// One size per sample; a single size for regression.
    pub sample_sizes: Vec<usize>,
    pub n_reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub contamination: Option<Contamination>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Defaults to H₀: ψ = ψ_true against ψ < ψ_true.
    #[serde(default)]
    pub h0: Option<Hypothesis>,
    /// Interest coefficient for regression (default 2).
    #[serde(default)]
    pub interest: Option<usize>,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_reps == 0 {
            return bad("n_reps must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        if self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return bad(format!("levels {:?} must lie in (0, 1)", self.levels));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        for m in &self.methods {
            m.rule.validate()?;
        }
        if let Some(c) = &self.contamination {
            let Some(&n) = self.sample_sizes.get(c.sample_index) else {
                return bad(format!("contamination sample {} does not exist", c.sample_index));
            };
            if c.obs_index.is_some_and(|k| k >= n) || !c.shift.is_finite() {
                return bad(format!("contamination index out of range for sample of size {n}"));
            }
        }
        Ok(())
    }

    fn is_regression(&self) -> bool {
        self.model == "linear-regression"
    }

    pub fn build_model(&self) -> Result<Box<dyn Model>> {
        let opts = if self.is_regression() {
            ModelOptions {
                interest: Some(self.interest.unwrap_or(2)),
                n_covariates: Some(self.theta.len().saturating_sub(1)),
                ..ModelOptions::default()
            }
        } else {
            ModelOptions {
                interest: self.interest,
                ..ModelOptions::default()
            }
        };
        model_from_name(&self.model, &opts)
    }

    /// Data layout every replicate is simulated into. Regression designs
    /// have an intercept, then alternating N(0,1) and U(0,1) columns drawn
    /// once per study.
    pub fn layout(&self) -> Result<Dataset> {
        if self.is_regression() {
            let n = self.sample_sizes[0];
            let p = self.theta.len().saturating_sub(1);
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(u64::MAX);
            let mut x = DMatrix::zeros(n, p);
            for j in 0..p {
                for i in 0..n {
                    x[(i, j)] = match j {
                        0 => 1.0,
                        j if j % 2 == 1 => rng.sample(StandardNormal),
                        _ => rng.random::<f64>(),
                    };
                }
            }
            Dataset::regression(vec![0.0; n], &x, vec![])
        } else {
            Dataset::samples(self.sample_sizes.iter().map(|&n| vec![0.0; n]).collect())
        }
    }
}

/// Copy of `data` with the designated observation shifted.
pub fn contaminate(data: &Dataset, spec: &Contamination) -> Result<Dataset> {
    if spec.sample_index >= data.n_groups() {
        return Err(Error::InvalidInput(format!(
            "sample {} does not exist",
            spec.sample_index
        )));
    }
    let n = data.group_size(spec.sample_index);
    let k = spec.obs_index.unwrap_or(n.saturating_sub(1));
    data.shifted(spec.sample_index, k, spec.shift)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub level: f64,
    pub coverage: f64,
    pub mc_se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub alpha: f64,
    pub rate: f64,
    pub mc_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub rule: ScoreRule,
    pub pivot: PivotKind,
    pub n_ok: usize,
    pub n_failed: usize,
    pub coverage: Vec<CoverageEntry>,
    pub p_values: Vec<f64>,
    /// CD medians (ψ̃ for every pivot, since C(ψ̃) = 1/2).
    pub medians: Vec<f64>,
    pub median_bias: f64,
    pub rejection_rates: Vec<RejectionRate>,
    pub ks: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub design: SimDesign,
    pub psi_true: f64,
    pub h0: Hypothesis,
    pub methods: Vec<MethodReport>,
}

impl SimReport {
    pub fn method(&self, label: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.label == label)
    }
}

/// Empirical proportion and its Monte-Carlo standard error √(c(1−c)/n).
pub fn coverage_estimate(hits: &[bool]) -> (f64, f64) {
    let n = hits.len() as f64;
    if hits.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let c = hits.iter().filter(|&&h| h).count() as f64 / n;
    (c, (c * (1.0 - c) / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub n: usize,
    pub ks: f64,
    /// (uniform quantile k/100, empirical quantile) for k = 1..=99.
    pub qq: Vec<(f64, f64)>,
}

/// One-sample Kolmogorov–Smirnov statistic against U(0,1) and a 99-point
/// QQ grid.
pub fn pvalue_uniformity(p_values: &[f64]) -> Result<Uniformity> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput("empty p-value sample".into()));
    }
    let mut s = p_values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let ks = s
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i as f64 + 1.0) / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max);
    let quantile = |u: f64| {
        let h = (n - 1.0) * u;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let qq = (1..=99)
        .map(|k| {
            let u = k as f64 / 100.0;
            (u, quantile(u))
        })
        .collect();
    Ok(Uniformity {
        n: s.len(),
        ks,
        qq,
    })
}

impl MethodReport {
    pub fn uniformity(&self) -> Result<Uniformity> {
        pvalue_uniformity(&self.p_values)
    }

    pub fn coverage_at(&self, level: f64) -> Option<CoverageEntry> {
        self.coverage
            .iter()
            .copied()
            .find(|c| (c.level - level).abs() < 1e-12)
    }
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    c_true: f64,
    p_value: f64,
    median: f64,
}

fn p_from_c(c: f64, alt: Alternative) -> f64 {
    match alt {
        Alternative::Less => c,
        Alternative::Greater => 1.0 - c,
        Alternative::TwoSided => (2.0 * c.min(1.0 - c)).min(1.0),
    }
}

fn run_method(
    model: &dyn Model,
    data: &Dataset,
    method: &MethodSpec,
    psi_true: f64,
    h0: &Hypothesis,
    opts: &ProfileOptions,
) -> Result<Outcome> {
    let problem = ScoringProblem::new(model, method.rule, data)?;
    // Small replicates routinely trip the sensitivity cross-check.
    let quiet = FitOptions { check_info: false, ..Default::default() };
    let fit = problem.fit_with(None, &quiet)?;
    if !fit.converged {
        return Err(Error::Optimization("replicate fit did not converge".into()));
    }
    let (fit, (c_true, c0)) = refit_on_local_optimum(&problem, fit, |fit| {
        let c_true = cdf_at_point(&problem, fit, method.pivot, psi_true, opts)?;
        let c0 = if h0.psi0 == psi_true {
            c_true
        } else {
            cdf_at_point(&problem, fit, method.pivot, h0.psi0, opts)?
        };
        Ok((c_true, c0))
    })?;
    Ok(Outcome {
        c_true,
        p_value: p_from_c(c0, h0.alternative),
        median: model.interest(&fit.theta_hat),
    })
}

/// Runs every replicate and method. Failed fits are dropped per method and
/// counted; more than 5% failures for any method is an error.
pub fn run_study(design: &SimDesign) -> Result<SimReport> {
    design.validate()?;
    let model = design.build_model()?;
    let model: &dyn Model = model.as_ref();
    let theta = DVector::from_vec(design.theta.clone());
    if theta.len() != model.dim() || !model.admissible(&theta) {
        return Err(Error::InvalidInput(format!(
            "true theta {:?} is not admissible for {}",
            design.theta,
            model.name()
        )));
    }
    let layout = design.layout()?;
    if design.is_regression() {
        model.check_data(&layout)?;
    }
    if let Some(c) = &design.contamination {
        contaminate(&layout, c)?;
    }
    let psi_true = model.interest(&theta);
    let h0 = design.h0.unwrap_or(Hypothesis {
        psi0: psi_true,
        alternative: Alternative::Less,
    });
    let opts = ProfileOptions::default();

    let outcomes: Vec<Vec<Option<Outcome>>> = (0..design.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
            rng.set_stream(rep as u64);
            let data = model.simulate(&theta, &layout, &mut rng).and_then(|d| {
                match &design.contamination {
                    Some(c) => contaminate(&d, c),
                    None => Ok(d),
                }
            });
            design
                .methods
                .iter()
                .map(|m| {
                    let data = data.as_ref().ok()?;
                    match run_method(model, data, m, psi_true, &h0, &opts) {
                        Ok(o) => Some(o),
                        Err(e) => {
                            log::debug!("replicate {rep}, {}: {e}", m.label());
                            None
                        }
                    }
                })
                .collect()
        })
        .collect();

    let mut methods = Vec::with_capacity(design.methods.len());
    for (mi, m) in design.methods.iter().enumerate() {
        let ok: Vec<Outcome> = outcomes.iter().filter_map(|r| r[mi]).collect();
        let n_failed = design.n_reps - ok.len();
        if n_failed as f64 > 0.05 * design.n_reps as f64 {
            return Err(Error::Study(format!(
                "{}: {n_failed} of {} replicates failed",
                m.label(),
                design.n_reps
            )));
        }
        let coverage = design
            .levels
            .iter()
            .map(|&level| {
                let a = (1.0 - level) / 2.0;
                let hits: Vec<bool> = ok.iter().map(|o| o.c_true >= a && o.c_true <= 1.0 - a).collect();
                let (coverage, mc_se) = coverage_estimate(&hits);
                CoverageEntry {
                    level,
                    coverage,
                    mc_se,
                }
            })
            .collect();
        let p_values: Vec<f64> = ok.iter().map(|o| o.p_value).collect();
        let rejection_rates = [0.01, 0.05, 0.10]
            .into_iter()
            .map(|alpha| {
                let hits: Vec<bool> = p_values.iter().map(|&p| p < alpha).collect();
                let (rate, mc_se) = coverage_estimate(&hits);
                RejectionRate { alpha, rate, mc_se }
            })
            .collect();
        let medians: Vec<f64> = ok.iter().map(|o| o.median).collect();
        let median_bias = medians.iter().map(|m| m - psi_true).sum::<f64>() / medians.len() as f64;
        let ks = pvalue_uniformity(&p_values).ok().map(|u| u.ks);
        methods.push(MethodReport {
            label: m.label(),
            rule: m.rule,
            pivot: m.pivot,
            n_ok: ok.len(),
            n_failed,
            coverage,
            p_values,
            medians,
            median_bias,
            rejection_rates,
            ks,
        });
    }
    Ok(SimReport {
        design: design.clone(),
        psi_true,
        h0,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n_reps: usize) -> SimDesign {
        SimDesign {
            model: "two-sample-normal".into(),
            theta: vec![2.0, 0.0, 1.0, 1.0],
            sample_sizes: vec![10, 20],
            n_reps,
            seed: 7,
            contamination: None,
            methods: vec![
                MethodSpec {
                    rule: ScoreRule::Logarithmic,
                    pivot: PivotKind::Root,
                    label: None,
                },
                MethodSpec {
                    rule: ScoreRule::Tsallis { gamma: 1.2 },
                    pivot: PivotKind::Wald,
                    label: None,
                },
            ],
            levels: vec![0.9, 0.95],
            h0: None,
            interest: None,
        }
    }

    #[test]
    fn uniform_grid_has_tiny_ks() {
        let p: Vec<f64> = (0..100).map(|i| 0.005 + 0.01 * i as f64).collect();
        let u = pvalue_uniformity(&p).unwrap();
        assert!((u.ks - 0.005).abs() < 1e-12);
        assert_eq!(u.qq.len(), 99);
        assert!((u.qq[49].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contamination_shifts_one_value() {
        let d = Dataset::two_sample(vec![1.0, 2.0, 3.0], vec![4.0]).unwrap();
        let c = Contamination {
            sample_index: 0,
            obs_index: None,
            shift: -7.0,
        };
        let out = contaminate(&d, &c).unwrap();
        assert_eq!(out.responses(), &[1.0, 2.0, -4.0, 4.0]);
        let same = contaminate(&d, &Contamination { shift: 0.0, ..c.clone() }).unwrap();
        assert_eq!(same, d);
        assert!(contaminate(&d, &Contamination { obs_index: Some(3), ..c }).is_err());
    }

    #[test]
    fn single_replicate_is_reproducible() {
        let a = serde_json::to_string(&run_study(&design(1)).unwrap()).unwrap();
        let b = serde_json::to_string(&run_study(&design(1)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_study_summaries_are_consistent() {
        let r = run_study(&design(40)).unwrap();
        for m in &r.methods {
            assert_eq!(m.p_values.len() + m.n_failed, 40);
            for c in &m.coverage {
                assert!((c.mc_se - (c.coverage * (1.0 - c.coverage) / m.n_ok as f64).sqrt()).abs() < 1e-15);
            }
            assert!(m.coverage[0].coverage <= m.coverage[1].coverage);
        }
    }

    #[test]
    fn invalid_designs_are_rejected() {
        let mut d = design(0);
        assert!(run_study(&d).is_err());
        d.n_reps = 1;
        d.levels = vec![1.0];
        assert!(run_study(&d).is_err());
        d.levels = vec![0.9];
        d.contamination = Some(Contamination {
            sample_index: 2,
            obs_index: None,
            shift: 1.0,
        });
        assert!(run_study(&d).is_err());
    }

    #[test]
    fn regression_layout_is_fixed_per_seed() {
        let d = SimDesign {
            model: "linear-regression".into(),
            theta: vec![1.0, 1.0, 0.0, 1.0],
            sample_sizes: vec![30],
            ..design(1)
        };
        let a = d.layout().unwrap();
        assert_eq!(a, d.layout().unwrap());
        assert_eq!(a.n_covariates(), 3);
        assert!(a.iter().all(|o| o.x[0] == 1.0 && (0.0..1.0).contains(&o.x[2])));
    }
}
