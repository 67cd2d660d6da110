//! Per-agent bilevel problems.
//!
//! Agent `i` owns an upper objective `f_i(x, y)` and a lower objective
//! `g_i(x, y)`, strongly convex in `y`. The global problem is
//! `min_x Φ(x) = (1/n) Σ f_i(x, y*(x))`, `y*(x) = argmin_y (1/n) Σ g_i(x, y)`.
//!
//! Every oracle takes a [`Sample`]: [`Sample::Full`] is the deterministic
//! (full-batch) oracle and a drawn sample is its unbiased stochastic variant.

mod data;
mod hypercleaning;
mod logistic;
mod quadratic;
mod reference;

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub use data::Dataset;
pub use hypercleaning::{make_synthetic_hypercleaning, HyperCleaningAgent, HyperCleaningSpec};
pub use logistic::{make_synthetic_logistic, LogisticAgent, LogisticSpec};
pub use quadratic::{make_quadratic_testbed, QuadraticAgent, QuadraticClosedForm, QuadraticSpec};
pub use reference::ReferenceHypergradient;

/// A realization of the agent's randomness.
///
/// `upper` indexes the upper-level (validation) data, `lower` the lower-level
/// (training) data; `seed` drives any additive noise model. The same sample
/// can be passed to several oracles to reuse one draw.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Full,
    Drawn { upper: Vec<usize>, lower: Vec<usize>, seed: u64 },
}

impl Sample {
    pub fn is_full(&self) -> bool {
        matches!(self, Sample::Full)
    }
}

/// Lipschitz and strong-convexity metadata.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessMeta {
    /// Strong convexity of each `g_i` in `y`.
    pub mu: f64,
    /// Lipschitz constants of `f_i`, `∇f_i`, `∇g_i`, `∇²g_i`.
    pub l_f0: f64,
    pub l_f1: f64,
    pub l_g1: f64,
    pub l_g2: f64,
    /// Standard deviations of the stochastic oracles.
    pub sigma_f: f64,
    pub sigma_g1: f64,
    pub sigma_g2: f64,
    /// All agents share the lower-level data distribution.
    pub homogeneous_g: bool,
}

impl SmoothnessMeta {
    /// `L = max(L_{f,1}, L_{g,1})`.
    pub fn l(&self) -> f64 {
        self.l_f1.max(self.l_g1)
    }

    pub fn kappa(&self) -> f64 {
        self.l() / self.mu
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Validation(format!("mu must be positive, got {}", self.mu)));
        }
        if self.l() < self.mu {
            return Err(Error::Validation(format!("L = {} must be >= mu = {}", self.l(), self.mu)));
        }
        let nonneg = [
            ("l_f0", self.l_f0),
            ("l_f1", self.l_f1),
            ("l_g1", self.l_g1),
            ("l_g2", self.l_g2),
            ("sigma_f", self.sigma_f),
            ("sigma_g1", self.sigma_g1),
            ("sigma_g2", self.sigma_g2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// First- and second-order oracles of one agent.
///
/// `x ∈ R^p` is the upper variable, `y ∈ R^q` the lower one. The cross
/// Jacobian `∇_{xy} g` is p×q.
pub trait AgentOracles: Send + Sync + fmt::Debug {
    /// `(p, q)`.
    fn dims(&self) -> (usize, usize);

    fn upper_value(&self, x: &Vector, y: &Vector, s: &Sample) -> f64;
    fn lower_value(&self, x: &Vector, y: &Vector, s: &Sample) -> f64;

    fn grad_x_f(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector;
    fn grad_y_f(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector;
    fn grad_x_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector;
    fn grad_y_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector;

    /// `∇_y² g · v` without forming the Hessian.
    fn hess_yy_g_vp(&self, x: &Vector, y: &Vector, v: &Vector, s: &Sample) -> Vector;
    fn hess_yy_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Matrix;
    /// `∇_{xy} g`, p×q.
    fn jac_xy_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Matrix;

    /// `∇_{xy} g · v` (length p).
    fn jac_xy_g_vp(&self, x: &Vector, y: &Vector, v: &Vector, s: &Sample) -> Vector {
        self.jac_xy_g(x, y, s).matvec(v)
    }

    /// `(upper, lower)` dataset sizes; `(0, 0)` for data-free models.
    fn dataset_sizes(&self) -> (usize, usize) {
        (0, 0)
    }

    /// Training and validation data, when the agent has any.
    fn datasets(&self) -> Option<(&Dataset, &Dataset)> {
        None
    }

    /// Draws a minibatch of `batch` indices per dataset, uniformly with replacement.
    fn draw_sample(&self, rng: &mut dyn RngCore, batch: usize) -> Sample {
        let (nu, nl) = self.dataset_sizes();
        let upper = if nu == 0 { Vec::new() } else { (0..batch).map(|_| rng.random_range(0..nu)).collect() };
        let lower = if nl == 0 { Vec::new() } else { (0..batch).map(|_| rng.random_range(0..nl)).collect() };
        Sample::Drawn { upper, lower, seed: rng.next_u64() }
    }
}

/// `n` agents sharing the upper variable `x ∈ R^p` and lower variable `y ∈ R^q`.
#[derive(Clone, Debug)]
pub struct BilevelProblem {
    p: usize,
    q: usize,
    agents: Vec<Arc<dyn AgentOracles>>,
    meta: SmoothnessMeta,
}

impl BilevelProblem {
    pub fn new(agents: Vec<Arc<dyn AgentOracles>>, meta: SmoothnessMeta) -> Result<Self> {
        let first = agents.first().ok_or_else(|| Error::BadParameter("problem needs at least one agent".into()))?;
        let (p, q) = first.dims();
        for (i, a) in agents.iter().enumerate() {
            if a.dims() != (p, q) {
                return Err(Error::dims("agent oracle dims", format!("{:?}", (p, q)), format!("agent {i}: {:?}", a.dims())));
            }
        }
        meta.validate()?;
        Ok(Self { p, q, agents, meta })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn agent(&self, i: usize) -> &dyn AgentOracles {
        self.agents[i].as_ref()
    }

    pub fn agents(&self) -> &[Arc<dyn AgentOracles>] {
        &self.agents
    }

    pub fn meta(&self) -> &SmoothnessMeta {
        &self.meta
    }

    /// Writes `agent_<i>_train.csv` and `agent_<i>_val.csv` (features, then label).
    pub fn dump_datasets(&self, dir: impl AsRef<Path>) -> Result<usize> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = 0;
        for (i, agent) in self.agents.iter().enumerate() {
            if let Some((train, val)) = agent.datasets() {
                train.write_csv(dir.join(format!("agent_{i}_train.csv")))?;
                val.write_csv(dir.join(format!("agent_{i}_val.csv")))?;
                written += 2;
            }
        }
        Ok(written)
    }
}

/// Numerically stable `log(1 + e^{-t})`.
pub(crate) fn logistic_loss(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `d/dt log(1 + e^{-t}) = -σ(-t)`.
pub(crate) fn logistic_loss_d1(t: f64) -> f64 {
    -sigmoid(-t)
}

/// `d²/dt² log(1 + e^{-t}) = σ(t) σ(-t)`.
pub(crate) fn logistic_loss_d2(t: f64) -> f64 {
    sigmoid(t) * sigmoid(-t)
}
