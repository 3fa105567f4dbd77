//! Closed-form scoring pieces for an exponential observation with rate λ.

use crate::rule::ScoreRule;

/// ∫ (λ e^{−λy})^γ dy over [0, ∞) = λ^{γ−1}/γ.
pub fn tsallis_integral_exponential(rate: f64, gamma: f64) -> f64 {
    rate.powf(gamma - 1.0) / gamma
}

pub fn exp_log_density(y: f64, rate: f64) -> f64 {
    if y < 0.0 {
        f64::NEG_INFINITY
    } else {
        rate.ln() - rate * y
    }
}

/// (score, ∂score/∂λ) for one observation.
pub fn exp_piece(rule: &ScoreRule, y: f64, rate: f64) -> (f64, f64) {
    match *rule {
        ScoreRule::Logarithmic => (-rate.ln() + rate * y, -1.0 / rate + y),
        ScoreRule::Tsallis { gamma } => {
            let a = gamma - 1.0;
            let u = rate * y;
            let e = (-a * u).exp();
            let la = rate.powf(a);
            let score = la * (a / gamma - gamma * e);
            let d = a * rate.powf(a - 1.0) * (a / gamma - gamma * e * (1.0 - u));
            (score, d)
        }
    }
}

/// Per-observation expected (K, J) for the rate.
pub fn exp_info(rule: &ScoreRule, rate: f64) -> (f64, f64) {
    match *rule {
        ScoreRule::Logarithmic => {
            let v = 1.0 / (rate * rate);
            (v, v)
        }
        ScoreRule::Tsallis { gamma } => {
            let a = gamma - 1.0;
            let b = 1.0 + 2.0 * a;
            let k = a * rate.powf(a - 2.0) * gamma * (1.0 / gamma - 2.0 / gamma.powi(2) + 2.0 / gamma.powi(3));
            let j = a * a
                * rate.powf(2.0 * a - 2.0)
                * gamma
                * gamma
                * (1.0 / b - 2.0 / (b * b) + 2.0 / (b * b * b) - a * a / gamma.powi(4));
            (k, j)
        }
    }
}
