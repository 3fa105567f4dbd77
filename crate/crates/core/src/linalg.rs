//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest condition number accepted before a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// 2-norm condition number, from singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts a square matrix with a fully pivoted LU factorization, refusing
/// matrices whose condition number exceeds [`MAX_CONDITION`].
pub fn checked_inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite entries in {context}")));
    }
    let condition = condition_number(a);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular {
            context: context.to_string(),
            condition,
        });
    }
    a.clone()
        .full_piv_lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: context.to_string(),
            condition,
        })
}

/// Sandwich variance `K⁻¹ J K⁻ᵀ` (symmetrized) together with `K⁻¹`.
pub fn sandwich(k: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k_inv = checked_inverse(&symmetrize(k), "sensitivity matrix K")?;
    let v = symmetrize(&(&k_inv * symmetrize(j) * k_inv.transpose()));
    Ok((v, k_inv))
}

/// Eigenvalues of `J K⁻¹`, sorted in descending order.
///
/// When K is positive definite the product is similar to the symmetric
/// `L⁻¹ J L⁻ᵀ` (K = L Lᵀ), which gives real eigenvalues directly. Otherwise
/// the real parts of the general (Schur) eigenvalues are returned.
pub fn eigenvalues_j_kinv(k: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = symmetrize(k);
    let j = symmetrize(j);
    let condition = condition_number(&k);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular {
            context: "sensitivity matrix K".into(),
            condition,
        });
    }
    let mut values: Vec<f64> = match k.clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            let l_inv = l
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numeric("Cholesky factor not invertible".into()))?;
            let m = symmetrize(&(&l_inv * &j * l_inv.transpose()));
            m.symmetric_eigenvalues().iter().cloned().collect()
        }
        None => {
            let k_inv = checked_inverse(&k, "sensitivity matrix K")?;
            (&j * k_inv)
                .complex_eigenvalues()
                .iter()
                .map(|c| c.re)
                .collect()
        }
    };
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(values)
}

/// Quadratic form `gᵀ A g`.
pub fn quad_form(a: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    (g.transpose() * a * g)[(0, 0)]
}
