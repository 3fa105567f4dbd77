use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A proper scoring rule used as the estimation loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScoreRule {
    /// S(y;θ) = −log f(y;θ).
    #[serde(rename = "log")]
    Logarithmic,
    /// S(y;θ) = (γ−1)∫f^γ − γ f(y;θ)^{γ−1}, γ > 1.
    Tsallis { gamma: f64 },
}

impl ScoreRule {
    pub fn tsallis(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "Tsallis gamma must be finite and > 1, got {gamma}"
            )));
        }
        Ok(ScoreRule::Tsallis { gamma })
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            ScoreRule::Logarithmic => None,
            ScoreRule::Tsallis { gamma } => Some(gamma),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScoreRule::Logarithmic => "log",
            ScoreRule::Tsallis { .. } => "tsallis",
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ScoreRule::Logarithmic => "log".into(),
            ScoreRule::Tsallis { gamma } => format!("tsallis({gamma})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScoreRule::Logarithmic => Ok(()),
            ScoreRule::Tsallis { gamma } => Self::tsallis(gamma).map(|_| ()),
        }
    }
}
