//! Reference oracles: exact lower-level solutions and hypergradients.
//!
//! These are validation tools. They use dense Hessians and direct solves
//! and are not part of any decentralized algorithm.

use super::{BilevelProblem, Sample};
use crate::error::{Error, Result};
use crate::numerics::{spd_solve_vec, Cholesky};
use crate::{Matrix, Vector};

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Relative Newton step length treated as converged.
const STEP_FLOOR: f64 = 1e-14;

/// Exact hypergradient at a common upper variable.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceHypergradient {
    /// `∇Φ_i(x)` for each agent.
    pub per_agent: Vec<Vector>,
    /// `(1/n) Σ ∇Φ_i(x)`.
    pub mean: Vector,
    /// `y*(x)` used for the evaluation.
    pub y_star: Vector,
}

fn iteration_cap(kappa: f64, tol: f64) -> usize {
    let c = 10.0 * (kappa * (1.0 / tol).ln()).ceil();
    c.clamp(50.0, 1e7) as usize
}

/// Damped Newton on a strongly convex function given value, gradient and Hessian.
fn newton(
    value: impl Fn(&Vector) -> f64,
    grad: impl Fn(&Vector) -> Vector,
    hess: impl Fn(&Vector) -> Matrix,
    y0: Vector,
    tol: f64,
    cap: usize,
) -> Result<Vector> {
    let mut y = y0;
    let mut g = grad(&y);
    let mut gn = g.norm();
    for _ in 0..cap {
        if gn <= tol {
            return Ok(y);
        }
        let step = Cholesky::new(&hess(&y))?.solve_vec(&g);
        // a step below the rounding level of y cannot reduce the gradient further
        if step.norm() <= STEP_FLOOR * (1.0 + y.norm()) {
            return Ok(y);
        }
        let slope = -g.dot(&step);
        let f0 = value(&y);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand = y.clone();
            cand.axpy(-alpha, &step);
            let fc = value(&cand);
            if fc <= f0 + ARMIJO_C * alpha * slope {
                accepted = Some(cand);
                break;
            }
            // near the rounding floor values stall; accept a gradient decrease
            let gc = grad(&cand);
            if gc.norm() < gn {
                accepted = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::NoConvergence { iterations: cap, residual: gn });
        };
        y = next;
        g = grad(&y);
        gn = g.norm();
        if !gn.is_finite() {
            return Err(Error::NoConvergence { iterations: cap, residual: gn });
        }
    }
    if gn <= tol {
        Ok(y)
    } else {
        Err(Error::NoConvergence { iterations: cap, residual: gn })
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::BadParameter(format!("tol must be > 0, got {tol}")))
    }
}

impl BilevelProblem {
    fn check_x(&self, x: &Vector) -> Result<()> {
        if x.len() != self.p() {
            return Err(Error::dims("upper variable", self.p(), x.len()));
        }
        Ok(())
    }

    /// `argmin_y (1/n) Σ g_i(x_i, y)` for per-agent upper variables.
    pub fn lower_level_solve_at(&self, xs: &[Vector], tol: f64) -> Result<Vector> {
        check_tol(tol)?;
        if xs.len() != self.n() {
            return Err(Error::dims("per-agent upper variables", self.n(), xs.len()));
        }
        for x in xs {
            self.check_x(x)?;
        }
        let w = 1.0 / self.n() as f64;
        let full = Sample::Full;
        let value = |y: &Vector| self.agents().iter().zip(xs).map(|(a, x)| w * a.lower_value(x, y, &full)).sum::<f64>();
        let grad = |y: &Vector| {
            let mut g = Vector::zeros(self.q());
            for (a, x) in self.agents().iter().zip(xs) {
                g.axpy(w, &a.grad_y_g(x, y, &full));
            }
            g
        };
        let hess = |y: &Vector| {
            let mut h = Matrix::zeros(self.q(), self.q());
            for (a, x) in self.agents().iter().zip(xs) {
                h.axpy(w, &a.hess_yy_g(x, y, &full));
            }
            h
        };
        newton(value, grad, hess, Vector::zeros(self.q()), tol, iteration_cap(self.meta().kappa(), tol))
    }

    /// `y*(x) = argmin_y (1/n) Σ g_i(x, y)`, to gradient norm `tol`.
    pub fn lower_level_solve_exact(&self, x: &Vector, tol: f64) -> Result<Vector> {
        self.lower_level_solve_at(&vec![x.clone(); self.n()], tol)
    }

    /// `argmin_y g_i(x, y)` for one agent.
    pub fn local_solve(&self, i: usize, x: &Vector, tol: f64) -> Result<Vector> {
        check_tol(tol)?;
        self.check_x(x)?;
        let a = self.agent(i);
        let full = Sample::Full;
        newton(
            |y| a.lower_value(x, y, &full),
            |y| a.grad_y_g(x, y, &full),
            |y| a.hess_yy_g(x, y, &full),
            Vector::zeros(self.q()),
            tol,
            iteration_cap(self.meta().kappa(), tol),
        )
    }

    /// `Φ(x) = (1/n) Σ f_i(x, y*(x))`.
    pub fn phi(&self, x: &Vector, tol: f64) -> Result<f64> {
        let y = self.lower_level_solve_exact(x, tol)?;
        let full = Sample::Full;
        Ok(self.agents().iter().map(|a| a.upper_value(x, &y, &full)).sum::<f64>() / self.n() as f64)
    }

    /// Per-agent `∇_x f_i − J̄ H̄⁻¹ ∇_y f_i` with the averaged Jacobian and
    /// Hessian evaluated at `(x, y)`.
    pub fn global_hypergradient_at(&self, x: &Vector, y: &Vector) -> Result<Vec<Vector>> {
        self.check_x(x)?;
        let n = self.n() as f64;
        let full = Sample::Full;
        let mut h = Matrix::zeros(self.q(), self.q());
        let mut j = Matrix::zeros(self.p(), self.q());
        for a in self.agents() {
            h.axpy(1.0 / n, &a.hess_yy_g(x, y, &full));
            j.axpy(1.0 / n, &a.jac_xy_g(x, y, &full));
        }
        let chol = Cholesky::new(&h)?;
        Ok(self
            .agents()
            .iter()
            .map(|a| {
                let v = chol.solve_vec(&a.grad_y_f(x, y, &full));
                let mut g = a.grad_x_f(x, y, &full);
                g.axpy(-1.0, &j.matvec(&v));
                g
            })
            .collect())
    }

    /// `∇Φ_i(x)` for every agent, with `y*(x)` solved to `tol`.
    pub fn exact_hypergradient(&self, x: &Vector, tol: f64) -> Result<ReferenceHypergradient> {
        let y_star = self.lower_level_solve_exact(x, tol)?;
        let per_agent = self.global_hypergradient_at(x, &y_star)?;
        let mean = Vector::mean_of(&per_agent);
        Ok(ReferenceHypergradient { per_agent, mean, y_star })
    }

    /// Local surrogate `∇_x f_i − J_i H_i⁻¹ ∇_y f_i` at agent `i`'s own
    /// lower-level minimizer.
    pub fn local_hypergradient(&self, i: usize, x: &Vector, tol: f64) -> Result<Vector> {
        let y = self.local_solve(i, x, tol)?;
        let a = self.agent(i);
        let full = Sample::Full;
        let v = spd_solve_vec(&a.hess_yy_g(x, &y, &full), &a.grad_y_f(x, &y, &full))?;
        let mut g = a.grad_x_f(x, &y, &full);
        g.axpy(-1.0, &a.jac_xy_g_vp(x, &y, &v, &full));
        Ok(g)
    }
}
