//! Closed-form scoring pieces for a normal observation N(μ, v).

use std::f64::consts::PI;

use crate::rule::ScoreRule;

/// ∫ φ(y; μ, σ²)^γ dy = γ^{-1/2} (2πσ²)^{(1−γ)/2}; independent of μ.
pub fn tsallis_integral_normal(_mu: f64, var: f64, gamma: f64) -> f64 {
    gamma.powf(-0.5) * (2.0 * PI * var).powf(0.5 * (1.0 - gamma))
}

/// Score of one observation and its derivatives in (μ, v).
#[derive(Clone, Copy, Debug)]
pub struct NormalPiece {
    pub score: f64,
    pub d_mu: f64,
    pub d_var: f64,
}

pub fn normal_log_density(y: f64, mu: f64, var: f64) -> f64 {
    let r = y - mu;
    -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var)
}

pub fn normal_piece(rule: &ScoreRule, y: f64, mu: f64, var: f64) -> NormalPiece {
    let r = y - mu;
    match *rule {
        ScoreRule::Logarithmic => NormalPiece {
            score: 0.5 * (2.0 * PI * var).ln() + r * r / (2.0 * var),
            d_mu: -r / var,
            d_var: 0.5 / var - r * r / (2.0 * var * var),
        },
        ScoreRule::Tsallis { gamma } => {
            let a = gamma - 1.0;
            let c = (2.0 * PI * var).powf(-0.5 * a);
            let e = (-a * r * r / (2.0 * var)).exp();
            NormalPiece {
                score: c * (a / gamma.sqrt() - gamma * e),
                d_mu: -a * gamma * c * e * r / var,
                d_var: a * gamma * c / (2.0 * var)
                    * (e * (1.0 - r * r / var) - a * gamma.powf(-1.5)),
            }
        }
    }
}

/// Per-observation expected sensitivity and variability entries. The
/// (μ, v) cross terms vanish by symmetry.
#[derive(Clone, Copy, Debug)]
pub struct NormalInfo {
    pub k_mu: f64,
    pub k_var: f64,
    pub j_mu: f64,
    pub j_var: f64,
}

pub fn normal_info(rule: &ScoreRule, var: f64) -> NormalInfo {
    match *rule {
        ScoreRule::Logarithmic => NormalInfo {
            k_mu: 1.0 / var,
            k_var: 0.5 / (var * var),
            j_mu: 1.0 / var,
            j_var: 0.5 / (var * var),
        },
        ScoreRule::Tsallis { gamma } => {
            let a = gamma - 1.0;
            let b = 1.0 + 2.0 * a;
            let c = (2.0 * PI * var).powf(-0.5 * a);
            let m1 = gamma.powf(-0.5) - 2.0 * gamma.powf(-1.5) + 3.0 * gamma.powf(-2.5);
            let m2 = b.powf(-0.5) - 2.0 * b.powf(-1.5) + 3.0 * b.powf(-2.5);
            let lead = a * gamma * c;
            NormalInfo {
                k_mu: lead / var * gamma.powf(-1.5),
                k_var: lead / (4.0 * var * var) * m1,
                j_mu: lead * lead / var * b.powf(-1.5),
                j_var: lead * lead / (4.0 * var * var) * (m2 - a * a * gamma.powi(-3)),
            }
        }
    }
}
