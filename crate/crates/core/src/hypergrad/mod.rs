//! Per-agent hypergradient estimates `∇̂f_i ≈ ∇_x f_i − J H⁻¹ ∇_y f_i`.
//!
//! | regime                        | estimator                      |
//! |-------------------------------|--------------------------------|
//! | deterministic, homogeneous    | [`estimate_aid`] (CG)          |
//! | stochastic, homogeneous       | [`estimate_neumann`]           |
//! | deterministic, heterogeneous  | [`estimate_jhip`] with full oracles |
//! | stochastic, heterogeneous     | [`estimate_jhip`] with a sample |

mod constants;
mod neumann;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::numerics::conjugate_gradient;
use crate::problem::{AgentOracles, Sample};
use crate::{Matrix, Vector};

pub use constants::{constants, preset_n, preset_t, ConstantsLedger, PRESET_LOG_FACTOR};
pub use neumann::{estimate_neumann, neumann_truncated_series, NeumannDepth, NeumannParams};

/// Which of the four estimators applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Regime {
    pub stochastic: bool,
    /// All agents share the lower-level data distribution.
    pub homogeneous: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Aid,
    Neumann,
    JhipDeterministic,
    JhipStochastic,
}

impl Regime {
    pub fn branch(&self) -> Branch {
        match (self.stochastic, self.homogeneous) {
            (false, true) => Branch::Aid,
            (true, true) => Branch::Neumann,
            (false, false) => Branch::JhipDeterministic,
            (true, false) => Branch::JhipStochastic,
        }
    }
}

/// Carry-over from one estimate to the next.
#[derive(Clone, Debug, PartialEq)]
pub enum Aux {
    None,
    /// CG iterate `v^N`, reused as the next warm start.
    Cg(Vector),
    /// Neumann truncation depth `M'` that was drawn.
    NeumannDepth(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypergradEstimate {
    pub value: Vector,
    pub aux: Aux,
}

/// Non-finite estimates surface as `Divergence`; the caller fills in the iteration.
fn finite(value: Vector, aux: Aux) -> Result<HypergradEstimate> {
    if value.is_finite() {
        Ok(HypergradEstimate { value, aux })
    } else {
        Err(Error::Divergence { iteration: 0, norm: f64::INFINITY })
    }
}

/// AID: `N` CG steps on `H v = ∇_y f` from `v0`, then `∇_x f − J v^N`.
pub fn estimate_aid(
    agent: &dyn AgentOracles,
    x: &Vector,
    y: &Vector,
    n_cg: usize,
    v0: &Vector,
) -> Result<HypergradEstimate> {
    if n_cg == 0 {
        return Err(Error::BadParameter("AID needs at least one CG step".into()));
    }
    let full = Sample::Full;
    let b = agent.grad_y_f(x, y, &full);
    let v = conjugate_gradient(|u| agent.hess_yy_g_vp(x, y, u, &full), &b, n_cg, v0)?;
    let mut value = agent.grad_x_f(x, y, &full);
    value.axpy(-1.0, &agent.jac_xy_g_vp(x, y, &v, &full));
    finite(value, Aux::Cg(v))
}

/// JHIP: `∇_x f − Z_iᵀ ∇_y f` with both gradients from `sample`.
pub fn estimate_jhip(
    agent: &dyn AgentOracles,
    x: &Vector,
    y: &Vector,
    z: &Matrix,
    sample: &Sample,
) -> Result<HypergradEstimate> {
    let (p, q) = agent.dims();
    if z.shape() != (q, p) {
        return Err(Error::dims("JHIP output", format!("{q}x{p}"), format!("{:?}", z.shape())));
    }
    let mut value = agent.grad_x_f(x, y, sample);
    value.axpy(-1.0, &z.tr_matvec(&agent.grad_y_f(x, y, sample)));
    finite(value, Aux::None)
}

/// Everything any branch may need; unused fields may be `None`.
pub struct EstimateInputs<'a> {
    pub agent: &'a dyn AgentOracles,
    pub x: &'a Vector,
    pub y: &'a Vector,
    pub n_cg: usize,
    pub v0: Option<&'a Vector>,
    pub neumann: Option<NeumannParams>,
    pub rng: Option<&'a mut dyn RngCore>,
    pub jhip_z: Option<&'a Matrix>,
    /// Sample for the stochastic JHIP gradients.
    pub sample: Option<&'a Sample>,
}

/// Dispatches to the estimator selected by `regime`.
pub fn estimate(regime: Regime, inputs: EstimateInputs<'_>) -> Result<HypergradEstimate> {
    let EstimateInputs { agent, x, y, n_cg, v0, neumann, rng, jhip_z, sample } = inputs;
    match regime.branch() {
        Branch::Aid => {
            let zeros;
            let v0 = match v0 {
                Some(v) => v,
                None => {
                    zeros = Vector::zeros(y.len());
                    &zeros
                }
            };
            estimate_aid(agent, x, y, n_cg, v0)
        }
        Branch::Neumann => {
            let params = neumann.ok_or(Error::MissingInput("Neumann parameters (M, epsilon)"))?;
            let rng = rng.ok_or(Error::MissingInput("random stream for the Neumann estimator"))?;
            estimate_neumann(agent, x, y, &params, rng)
        }
        Branch::JhipDeterministic => {
            let z = jhip_z.ok_or(Error::MissingInput("JHIP output Z_i"))?;
            estimate_jhip(agent, x, y, z, &Sample::Full)
        }
        Branch::JhipStochastic => {
            let z = jhip_z.ok_or(Error::MissingInput("JHIP output Z_i"))?;
            let sample = sample.ok_or(Error::MissingInput("sample for the stochastic JHIP gradients"))?;
            estimate_jhip(agent, x, y, z, sample)
        }
    }
}

#[cfg(test)]
mod tests;
