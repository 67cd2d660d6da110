//! Decentralized Jacobian-Hessian-inverse product (JHIP) oracle.
//!
//! Agents hold private `(H_i, J_i)` (q×q and p×q) and jointly compute the
//! q×p matrix `Z*` with `(Σ H_i) Z* = Σ J_iᵀ` by gradient tracking on
//! `h_i(Z) = ½ tr(ZᵀH_iZ) − tr(J_iZ)`. Each agent ends with its own copy
//! `Z_i ≈ Z*`, so `Z_iᵀ` approximates `J̄ H̄⁻¹`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::WeightMatrix;
use crate::numerics::{spd_solve, DMatrix, Real};
use crate::schedule::StepSchedule;

/// Iterates with a Frobenius norm above this are reported as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Default horizon `t₀` of the stochastic schedule `γ₀ / (1 + t/t₀)`.
pub const STOCHASTIC_HORIZON: f64 = 20.0;

/// Per-agent iterates `Z_i`, trackers `Y_i` and last local gradients `G_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct JhipState<T> {
    pub z: Vec<DMatrix<T>>,
    pub y: Vec<DMatrix<T>>,
    pub g: Vec<DMatrix<T>>,
    pub t: usize,
}

/// Returns agent `i`'s sample `(Ĥ_i^{(t)}, Ĵ_i^{(t)})` for step `t`.
pub type JhipSampler<'a, T> = dyn Fn(usize, usize) -> (DMatrix<T>, DMatrix<T>) + Sync + 'a;

/// Where the agents' `(H_i, J_i)` come from.
pub enum JhipMode<'a, T> {
    /// Fixed matrices. `G_i = H_i Z_i`; the constant `−J_iᵀ` cancels in the
    /// tracking differences and only enters through `Y_i^{(0)}`.
    Deterministic { h: &'a [DMatrix<T>], j: &'a [DMatrix<T>] },
    /// A fresh pair per agent and step; `G_i = Ĥ_i Z_i − Ĵ_iᵀ`.
    Stochastic { sampler: &'a JhipSampler<'a, T> },
}

impl<T: Real> JhipMode<'_, T> {
    /// `(G_i, ∇h_i)` for agent `i` at step `t`; they differ only in the deterministic mode.
    fn local(&self, i: usize, t: usize, z: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
        match self {
            JhipMode::Deterministic { h, j } => {
                let g = h[i].matmul(z);
                let full = &g - &j[i].transpose();
                (g, full)
            }
            JhipMode::Stochastic { sampler } => {
                let (hs, js) = sampler(i, t);
                let g = &hs.matmul(z) - &js.transpose();
                (g.clone(), g)
            }
        }
    }

    fn check(&self, z0: &[DMatrix<T>]) -> Result<()> {
        let (q, p) = z0.first().map(DMatrix::shape).ok_or_else(|| Error::BadParameter("JHIP needs at least one agent".into()))?;
        for z in z0 {
            if z.shape() != (q, p) {
                return Err(Error::dims("JHIP iterate", format!("{q}x{p}"), format!("{:?}", z.shape())));
            }
        }
        let pairs: Vec<(DMatrix<T>, DMatrix<T>)> = match self {
            JhipMode::Deterministic { h, j } => {
                if h.len() != z0.len() || j.len() != z0.len() {
                    return Err(Error::dims("JHIP agent count", z0.len(), format!("{} Hessians, {} Jacobians", h.len(), j.len())));
                }
                h.iter().cloned().zip(j.iter().cloned()).collect()
            }
            JhipMode::Stochastic { sampler } => vec![sampler(0, 0)],
        };
        for (h, j) in &pairs {
            if h.shape() != (q, q) {
                return Err(Error::dims("JHIP Hessian", format!("{q}x{q}"), format!("{:?}", h.shape())));
            }
            if j.shape() != (p, q) {
                return Err(Error::dims("JHIP Jacobian", format!("{p}x{q}"), format!("{:?}", j.shape())));
            }
        }
        Ok(())
    }
}

/// `Y_i^{(0)}` and `G_i^{(0)}` from `Z_i^{(0)}`.
pub fn jhip_init<T: Real>(mode: &JhipMode<'_, T>, z0: Vec<DMatrix<T>>) -> Result<JhipState<T>> {
    mode.check(&z0)?;
    let (g, y): (Vec<_>, Vec<_>) = z0.par_iter().enumerate().map(|(i, z)| mode.local(i, 0, z)).unzip();
    Ok(JhipState { z: z0, y, g, t: 0 })
}

/// One synchronous round: mix and descend `Z`, refresh `G`, mix and correct `Y`.
pub fn jhip_step<T: Real>(state: JhipState<T>, mode: &JhipMode<'_, T>, w: &WeightMatrix<T>, gamma: T) -> JhipState<T> {
    let t = state.t + 1;
    let next: Vec<_> = (0..state.z.len())
        .into_par_iter()
        .map(|i| {
            let mut z = w.mix_matrix_at(i, &state.z);
            z.axpy(-gamma, &state.y[i]);
            let (g, _) = mode.local(i, t, &z);
            let mut y = w.mix_matrix_at(i, &state.y);
            y.axpy(T::one(), &g);
            y.axpy(-T::one(), &state.g[i]);
            (z, y, g)
        })
        .collect();
    let mut z = Vec::with_capacity(next.len());
    let mut y = Vec::with_capacity(next.len());
    let mut g = Vec::with_capacity(next.len());
    for (zi, yi, gi) in next {
        z.push(zi);
        y.push(yi);
        g.push(gi);
    }
    JhipState { z, y, g, t }
}

fn max_norm<T: Real>(z: &[DMatrix<T>]) -> f64 {
    z.iter()
        .map(|m| m.frobenius_norm().to_f64().filter(|v| !v.is_nan()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// Runs `n_steps` rounds and calls `observe` after initialization and after every step.
pub fn jhip_run_observed<T: Real>(
    mode: &JhipMode<'_, T>,
    w: &WeightMatrix<T>,
    n_steps: usize,
    schedule: &StepSchedule,
    z0: Vec<DMatrix<T>>,
    mut observe: impl FnMut(&JhipState<T>),
) -> Result<JhipState<T>> {
    if n_steps == 0 {
        return Err(Error::BadParameter("JHIP needs N >= 1 steps".into()));
    }
    schedule.validate("JHIP stepsize")?;
    if z0.len() != w.n() {
        return Err(Error::dims("JHIP agent count vs network", w.n(), z0.len()));
    }
    let mut state = jhip_init(mode, z0)?;
    observe(&state);
    for t in 0..n_steps {
        state = jhip_step(state, mode, w, T::lit(schedule.step(t)));
        let norm = max_norm(&state.z);
        if norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence { iteration: state.t, norm });
        }
        observe(&state);
    }
    Ok(state)
}

/// `Z_i^{(N)}` for every agent.
pub fn jhip_run<T: Real>(
    mode: &JhipMode<'_, T>,
    w: &WeightMatrix<T>,
    n_steps: usize,
    schedule: &StepSchedule,
    z0: Vec<DMatrix<T>>,
) -> Result<Vec<DMatrix<T>>> {
    Ok(jhip_run_observed(mode, w, n_steps, schedule, z0, |_| {})?.z)
}

/// `Z* = (Σ H_i)⁻¹ Σ J_iᵀ`.
pub fn jhip_target<T: Real>(h: &[DMatrix<T>], j: &[DMatrix<T>]) -> Result<DMatrix<T>> {
    let first = h.first().ok_or_else(|| Error::BadParameter("JHIP needs at least one agent".into()))?;
    let mut hs = DMatrix::zeros(first.rows(), first.cols());
    let (p, q) = j.first().map(DMatrix::shape).ok_or_else(|| Error::BadParameter("JHIP needs at least one agent".into()))?;
    let mut jt = DMatrix::zeros(q, p);
    for (hi, ji) in h.iter().zip(j) {
        hs.axpy(T::one(), hi);
        jt.axpy(T::one(), &ji.transpose());
    }
    spd_solve(&hs, &jt)
}

/// `‖(1/n) Σ Y_i − (1/n) Σ (H_i Z_i − J_iᵀ)‖_F`.
pub fn tracking_residual<T: Real>(state: &JhipState<T>, h: &[DMatrix<T>], j: &[DMatrix<T>]) -> T {
    let n = T::count(state.z.len());
    let (q, p) = state.z[0].shape();
    let mut diff = DMatrix::zeros(q, p);
    for i in 0..state.z.len() {
        diff.axpy(T::one() / n, &state.y[i]);
        diff.axpy(-T::one() / n, &h[i].matmul(&state.z[i]));
        diff.axpy(T::one() / n, &j[i].transpose());
    }
    diff.frobenius_norm()
}

/// Default deterministic stepsize `1/L_H`.
pub fn default_gamma(l_h: f64) -> StepSchedule {
    StepSchedule::Constant(1.0 / l_h)
}

/// Default stochastic schedule `(1/L_H) / (1 + t/20)`.
pub fn default_stochastic_schedule(l_h: f64) -> StepSchedule {
    StepSchedule::Diminishing { initial: 1.0 / l_h, horizon: STOCHASTIC_HORIZON }
}
