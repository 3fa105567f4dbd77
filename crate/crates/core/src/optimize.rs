//! Quasi-Newton minimization over box-transformed coordinates.
//!
//! Constrained coordinates are mapped to the real line (`θ = c + eᵘ` for a
//! lower bound, `θ = c − eᵘ` for an upper bound) so every iterate stays
//! admissible. The main loop is BFGS with Armijo backtracking; if it stalls
//! short of the gradient tolerance a few damped Newton steps on a
//! finite-difference Hessian finish the job.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Free,
    Lower(f64),
    Upper(f64),
}

impl Bound {
    pub fn contains(&self, v: f64) -> bool {
        v.is_finite()
            && match *self {
                Bound::Free => true,
                Bound::Lower(c) => v > c,
                Bound::Upper(c) => v < c,
            }
    }

    pub fn to_unconstrained(&self, v: f64) -> Result<f64> {
        if !self.contains(v) {
            return Err(Error::Domain(format!("value {v} violates bound {self:?}")));
        }
        Ok(match *self {
            Bound::Free => v,
            Bound::Lower(c) => (v - c).ln(),
            Bound::Upper(c) => (c - v).ln(),
        })
    }

    pub fn from_unconstrained(&self, u: f64) -> f64 {
        match *self {
            Bound::Free => u,
            Bound::Lower(c) => c + u.exp(),
            Bound::Upper(c) => c - u.exp(),
        }
    }

    /// dθ/du at the unconstrained point `u`.
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Bound::Free => 1.0,
            Bound::Lower(_) => u.exp(),
            Bound::Upper(_) => -u.exp(),
        }
    }
}

/// Maps a constrained vector to unconstrained coordinates.
pub fn to_unconstrained(bounds: &[Bound], theta: &DVector<f64>) -> Result<DVector<f64>> {
    let mut u = DVector::zeros(theta.len());
    for (i, b) in bounds.iter().enumerate() {
        u[i] = b.to_unconstrained(theta[i])?;
    }
    Ok(u)
}

pub fn from_unconstrained(bounds: &[Bound], u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        bounds.iter().zip(u.iter()).map(|(b, &x)| b.from_unconstrained(x)),
    )
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Convergence when ‖∇S(θ)‖ ≤ grad_tol·(1 + ‖θ‖).
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Largest step allowed in unconstrained coordinates.
    pub max_step: f64,
    pub newton_polish_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grad_tol: 1e-8,
            max_iter: 500,
            max_step: 4.0,
            newton_polish_iters: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `objective` (returning value and gradient in the unconstrained
/// coordinates) starting at `x0`. `is_converged` decides termination from
/// the current point and gradient, so callers can test stationarity in their
/// natural parameterization.
pub fn minimize<F, C>(
    mut objective: F,
    x0: DVector<f64>,
    opts: &SolverOptions,
    is_converged: C,
) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
    C: Fn(&DVector<f64>, &DVector<f64>) -> bool,
{
    let n = x0.len();
    let mut eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        match objective(x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
            _ => None,
        }
    };
    let (mut f, mut g) = eval(&x0).ok_or_else(|| {
        Error::Domain("objective is not finite at the starting point".into())
    })?;
    let mut x = x0;
    let mut iterations = 0;

    if n == 0 {
        return Ok(Minimum {
            x,
            value: f,
            gradient: g,
            iterations,
            converged: true,
        });
    }

    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;

    while iterations < opts.max_iter {
        if is_converged(&x, &g) {
            return Ok(Minimum {
                x,
                value: f,
                gradient: g,
                iterations,
                converged: true,
            });
        }
        iterations += 1;
        let mut p = -(&h_inv * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            first_update = true;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let pn = p.norm();
        if pn > opts.max_step {
            p *= opts.max_step / pn;
            slope = g.dot(&p);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &p * t;
            if let Some((fn_, gn)) = eval(&xn) {
                if fn_ <= f + 1e-4 * t * slope {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if first_update {
                h_inv = DMatrix::identity(n, n) * (sy / y.dot(&y));
                first_update = false;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let a = &eye - (&s * y.transpose()) * rho;
            h_inv = &a * &h_inv * a.transpose() + (&s * s.transpose()) * rho;
        }
        let progress = (f - fn_).abs();
        x = xn;
        f = fn_;
        g = gn;
        if progress <= 1e-15 * (1.0 + f.abs()) && s.norm() <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }

    // Newton polish: finite-difference Hessian of the analytic gradient.
    for _ in 0..opts.newton_polish_iters {
        if is_converged(&x, &g) {
            return Ok(Minimum {
                x,
                value: f,
                gradient: g,
                iterations,
                converged: true,
            });
        }
        if iterations >= opts.max_iter + opts.newton_polish_iters {
            break;
        }
        iterations += 1;
        let Some(hess) = fd_hessian(&mut eval, &x) else {
            break;
        };
        let step = match damped_newton_step(&hess, &g) {
            Some(s) => s,
            None => break,
        };
        let mut t = 1.0;
        let mut moved = false;
        let gnorm = g.norm();
        for _ in 0..40 {
            let xn = &x + &step * t;
            if let Some((fn_, gn)) = eval(&xn) {
                let f_ok = fn_ <= f + 1e-10 * (1.0 + f.abs());
                if f_ok && (fn_ < f || gn.norm() < gnorm) {
                    x = xn;
                    f = fn_;
                    g = gn;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let converged = is_converged(&x, &g);
    Ok(Minimum {
        x,
        value: f,
        gradient: g,
        iterations,
        converged,
    })
}

/// Minimizes `objective` (value and gradient in natural coordinates) over
/// the box described by `bounds`, starting at the admissible `x0`.
/// Convergence is declared when ‖∇f(x)‖ ≤ grad_tol·(1 + ‖x‖) in the
/// natural coordinates; the returned point and gradient are natural too.
pub fn minimize_in_box<F>(
    mut objective: F,
    bounds: &[Bound],
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let u0 = to_unconstrained(bounds, x0)?;
    let chain = |u: &DVector<f64>, g: &DVector<f64>| {
        DVector::from_iterator(
            g.len(),
            bounds.iter().zip(u.iter()).zip(g.iter()).map(|((b, &ui), &gi)| gi * b.derivative(ui)),
        )
    };
    let natural_grad = |u: &DVector<f64>, gu: &DVector<f64>| {
        DVector::from_iterator(
            gu.len(),
            bounds.iter().zip(u.iter()).zip(gu.iter()).map(|((b, &ui), &gi)| gi / b.derivative(ui)),
        )
    };
    let tol = opts.grad_tol;
    let m = minimize(
        |u| {
            let x = from_unconstrained(bounds, u);
            let (f, g) = objective(&x)?;
            Ok((f, chain(u, &g)))
        },
        u0,
        opts,
        |u, gu| {
            let x = from_unconstrained(bounds, u);
            natural_grad(u, gu).norm() <= tol * (1.0 + x.norm())
        },
    )?;
    Ok(Minimum {
        gradient: natural_grad(&m.x, &m.gradient),
        x: from_unconstrained(bounds, &m.x),
        ..m
    })
}

fn fd_hessian<E>(eval: &mut E, x: &DVector<f64>) -> Option<DMatrix<f64>>
where
    E: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = 1e-5 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += step;
        let mut xm = x.clone();
        xm[j] -= step;
        let (_, gp) = eval(&xp)?;
        let (_, gm) = eval(&xm)?;
        let col = (gp - gm) / (2.0 * step);
        h.set_column(j, &col);
    }
    Some((&h + h.transpose()) * 0.5)
}

fn damped_newton_step(hess: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let scale = hess.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    let mut mu = 0.0;
    for _ in 0..30 {
        let m = hess + DMatrix::identity(n, n) * mu;
        if let Some(ch) = m.cholesky() {
            return Some(-ch.solve(g));
        }
        mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
    }
    None
}
