//! Observation containers shared by every model.
//!
//! A [`Dataset`] is a flat list of scalar responses, each tagged with the
//! independent sample (group) it belongs to and, for regression, a row of
//! fixed covariates. Optional per-observation weights support the
//! ε-contamination refits used by the influence diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single observation as seen by a model.
#[derive(Clone, Copy, Debug)]
pub struct Obs<'a> {
    pub y: f64,
    pub group: usize,
    pub x: &'a [f64],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    group: Vec<usize>,
    n_groups: usize,
    /// Row-major covariates with `p` columns (empty when p = 0).
    x: Vec<f64>,
    p: usize,
    #[serde(default)]
    covariate_names: Vec<String>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what}: non-finite value at position {i}"
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn one_sample(y: Vec<f64>) -> Result<Self> {
        Self::samples(vec![y])
    }

    pub fn two_sample(first: Vec<f64>, second: Vec<f64>) -> Result<Self> {
        Self::samples(vec![first, second])
    }

    /// Independent samples, group `g` holding `samples[g]`.
    pub fn samples(samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidInput("every sample must be non-empty".into()));
        }
        let n_groups = samples.len();
        let mut y = Vec::new();
        let mut group = Vec::new();
        for (g, s) in samples.into_iter().enumerate() {
            check_finite(&s, "sample")?;
            group.extend(std::iter::repeat_n(g, s.len()));
            y.extend(s);
        }
        Ok(Dataset {
            y,
            group,
            n_groups,
            x: Vec::new(),
            p: 0,
            covariate_names: Vec::new(),
            weights: None,
        })
    }

    /// Regression responses with a fixed design (one row per response).
    pub fn regression(y: Vec<f64>, design: &DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("no observations".into()));
        }
        if design.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "design has {} rows but there are {} responses",
                design.nrows(),
                y.len()
            )));
        }
        check_finite(&y, "response")?;
        check_finite(design.as_slice(), "design")?;
        let p = design.ncols();
        let mut x = Vec::with_capacity(y.len() * p);
        for i in 0..design.nrows() {
            x.extend(design.row(i).iter());
        }
        let names = if names.len() == p {
            names
        } else {
            (0..p).map(|j| format!("x{j}")).collect()
        };
        Ok(Dataset {
            group: vec![0; y.len()],
            y,
            n_groups: 1,
            x,
            p,
            covariate_names: names,
            weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_covariates(&self) -> usize {
        self.p
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn groups(&self) -> &[usize] {
        &self.group
    }

    pub fn obs(&self, i: usize) -> Obs<'_> {
        Obs {
            y: self.y[i],
            group: self.group[i],
            x: &self.x[i * self.p..(i + 1) * self.p],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Obs<'_>> + '_ {
        (0..self.len()).map(move |i| self.obs(i))
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Sum of weights in group `g` (the sample size when unweighted).
    pub fn group_weight(&self, g: usize) -> f64 {
        (0..self.len())
            .filter(|&i| self.group[i] == g)
            .map(|i| self.weight(i))
            .sum()
    }

    /// Number of (unweighted) observations in group `g`.
    pub fn group_size(&self, g: usize) -> usize {
        self.group.iter().filter(|&&h| h == g).count()
    }

    pub fn group_values(&self, g: usize) -> Vec<f64> {
        self.iter().filter(|o| o.group == g).map(|o| o.y).collect()
    }

    /// Flat index of the `k`-th observation of group `g`.
    pub fn flat_index(&self, g: usize, k: usize) -> Option<usize> {
        (0..self.len()).filter(|&i| self.group[i] == g).nth(k)
    }

    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.p, &self.x)
    }

    /// Weighted Σ xᵢxᵢᵀ over all observations.
    pub fn weighted_gram(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p, self.p);
        for i in 0..self.len() {
            let w = self.weight(i);
            let xi = &self.x[i * self.p..(i + 1) * self.p];
            for a in 0..self.p {
                for b in 0..self.p {
                    m[(a, b)] += w * xi[a] * xi[b];
                }
            }
        }
        m
    }

    /// Same layout (groups, design) with new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::InvalidInput("response length mismatch".into()));
        }
        check_finite(&y, "response")?;
        Ok(Dataset { y, ..self.clone() })
    }

    pub fn with_weights(&self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.len() || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("invalid weights".into()));
        }
        Ok(Dataset {
            weights: Some(w),
            ..self.clone()
        })
    }

    /// ε-mixture of group `g`: existing observations of that group are
    /// down-weighted by (1−ε) and a point mass ε·n_g is placed at `y`
    /// (with covariates `x` for regression).
    pub fn epsilon_mixture(&self, g: usize, y: f64, x: &[f64], eps: f64) -> Result<Self> {
        if g >= self.n_groups || x.len() != self.p {
            return Err(Error::InvalidInput("mixture point does not match layout".into()));
        }
        let n_g = self.group_weight(g);
        let mut out = self.clone();
        let mut w: Vec<f64> = (0..self.len())
            .map(|i| {
                let wi = self.weight(i);
                if self.group[i] == g {
                    wi * (1.0 - eps)
                } else {
                    wi
                }
            })
            .collect();
        out.y.push(y);
        out.group.push(g);
        out.x.extend_from_slice(x);
        w.push(eps * n_g);
        out.weights = Some(w);
        Ok(out)
    }

    /// Copy with observation `k` of group `g` shifted by `shift`; every
    /// other value is bit-identical.
    pub fn shifted(&self, g: usize, k: usize, shift: f64) -> Result<Self> {
        let i = self.flat_index(g, k).ok_or_else(|| {
            Error::InvalidInput(format!(
                "observation {k} of sample {g} does not exist (sample has {} values)",
                self.group_size(g)
            ))
        })?;
        let mut out = self.clone();
        out.y[i] += shift;
        Ok(out)
    }
}
