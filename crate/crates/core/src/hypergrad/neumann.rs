//! Stochastic Neumann-series hypergradient.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::problem::{AgentOracles, Sample};
use crate::{Matrix, Vector};

use super::{finite, Aux, HypergradEstimate};

/// How the truncation depth `M'` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeumannDepth {
    /// `M'` uniform on `{0, …, M−1}`, so `E[εM ∏(I − εĤ)] = ε Σ_{k<M} (I − εH)^k`.
    Random,
    /// Always `M' = m`.
    Fixed(usize),
    /// The truncated series `ε Σ_{k<M} (I − εĤ)^k` with a single Hessian
    /// sample, applied by Horner's rule.
    Series,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannParams {
    /// Series length `M ≥ 1`.
    pub m: usize,
    pub epsilon: f64,
    /// Bound on `‖∇²_y g‖`; `epsilon` must be below `1/l_h`.
    pub l_h: f64,
    pub depth: NeumannDepth,
    /// Minibatch size per oracle call; 0 means full batch.
    pub batch: usize,
}

impl NeumannParams {
    pub fn new(m: usize, epsilon: f64, l_h: f64) -> Self {
        NeumannParams { m, epsilon, l_h, depth: NeumannDepth::Random, batch: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::BadParameter("Neumann length M must be >= 1".into()));
        }
        if !(self.l_h > 0.0 && self.l_h.is_finite()) {
            return Err(Error::BadParameter(format!("Hessian bound must be positive, got {}", self.l_h)));
        }
        if !(self.epsilon > 0.0 && self.epsilon * self.l_h < 1.0) {
            return Err(Error::BadParameter(format!(
                "epsilon = {} must lie in (0, 1/L) with L = {}",
                self.epsilon, self.l_h
            )));
        }
        Ok(())
    }
}

fn draw(agent: &dyn AgentOracles, rng: &mut dyn RngCore, batch: usize) -> Sample {
    if batch == 0 {
        Sample::Full
    } else {
        agent.draw_sample(rng, batch)
    }
}

/// `∇_x f(φ⁰) − J(φ¹) · εM ∏_{n=1}^{M'} (I − εĤ(φ^{n+1})) ∇_y f(φ⁰)`.
///
/// Draw order on `rng`: `M'` (random depth only), then `φ⁰, φ¹, φ², …`.
pub fn estimate_neumann(
    agent: &dyn AgentOracles,
    x: &Vector,
    y: &Vector,
    params: &NeumannParams,
    rng: &mut dyn RngCore,
) -> Result<HypergradEstimate> {
    params.validate()?;
    let eps = params.epsilon;
    let depth = match params.depth {
        NeumannDepth::Random => Some(rng.random_range(0..params.m)),
        NeumannDepth::Fixed(d) => Some(d),
        NeumannDepth::Series => None,
    };
    let phi0 = draw(agent, rng, params.batch);
    let phi1 = draw(agent, rng, params.batch);
    let b = agent.grad_y_f(x, y, &phi0);
    let r = match depth {
        Some(d) => {
            let hvps: Vec<Sample> = (0..d).map(|_| draw(agent, rng, params.batch)).collect();
            random_depth_product(|r, n| agent.hess_yy_g_vp(x, y, r, &hvps[n]), b, d, eps, params.m)
        }
        None => {
            let phi = draw(agent, rng, params.batch);
            // s ← b + (I − εĤ) s, M times
            let mut s = Vector::zeros(b.len());
            for _ in 0..params.m {
                let hs = agent.hess_yy_g_vp(x, y, &s, &phi);
                s.axpy(-eps, &hs);
                s += &b;
            }
            s.scaled(eps)
        }
    };
    let mut value = agent.grad_x_f(x, y, &phi0);
    value.axpy(-1.0, &agent.jac_xy_g_vp(x, y, &r, &phi1));
    finite(value, Aux::NeumannDepth(depth.unwrap_or(params.m)))
}

/// `εM ∏_{n=1}^{depth} (I − εĤ_n) b`, applied right to left; `hvp(r, n)` applies the `n`-th sampled Hessian.
pub(crate) fn random_depth_product(
    hvp: impl Fn(&Vector, usize) -> Vector,
    b: Vector,
    depth: usize,
    eps: f64,
    m: usize,
) -> Vector {
    let mut r = b;
    for n in (0..depth).rev() {
        let hr = hvp(&r, n);
        r.axpy(-eps, &hr);
    }
    r.scaled(eps * m as f64)
}

/// `ε Σ_{k=0}^{M−1} (I − εH)^k`, the mean of the random-depth product.
pub fn neumann_truncated_series(h: &Matrix, epsilon: f64, m: usize) -> Matrix {
    let q = h.rows();
    let step = &Matrix::identity(q) - &h.scaled(epsilon);
    let mut power = Matrix::identity(q);
    let mut sum = Matrix::zeros(q, q);
    for _ in 0..m {
        sum.axpy(1.0, &power);
        power = power.matmul(&step);
    }
    sum.scaled(epsilon)
}
