use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergrad::Regime;
use crate::problem::{BilevelProblem, Sample};
use crate::rng::{RngPlan, Role};
use crate::schedule::StepSchedule;
use crate::{Network, Vector};

use super::DIVERGENCE_GUARD;

/// Where inner-loop gradients come from.
#[derive(Clone, Copy, Debug)]
pub enum InnerSampling<'a> {
    Full,
    /// `ξ_{i,k}^{(t)}` from the `(i, Inner, k, t)` stream; `batch = 0` is full batch.
    Drawn { plan: &'a RngPlan, k: usize, batch: usize },
}

impl InnerSampling<'_> {
    fn sample(&self, prob: &BilevelProblem, i: usize, t: usize) -> Sample {
        match *self {
            InnerSampling::Drawn { plan, k, batch } if batch > 0 => {
                let mut rng = plan.stream(i, Role::Inner, k, t);
                prob.agent(i).draw_sample(&mut rng, batch)
            }
            _ => Sample::Full,
        }
    }
}

/// Gradient tracker of the heterogeneous deterministic inner loop: the last
/// direction `v^{(T−1)}` and the local gradients it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerTracker {
    pub v: Vec<Vector>,
    pub grad: Vec<Vector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerOutput {
    /// `y_i^{(T)}`.
    pub y: Vec<Vector>,
    /// Present for the tracked branch.
    pub tracker: Option<InnerTracker>,
    /// `max_t ‖v̄^{(t)} − mean_i ∇_y g_i(x_i, y_i^{(t)})‖` for the tracked branch.
    pub tracking_residual: Option<f64>,
}

fn guard(ys: &[Vector], t: usize) -> Result<()> {
    let norm = ys.iter().map(|y| y.norm()).fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    if norm > DIVERGENCE_GUARD {
        Err(Error::Divergence { iteration: t, norm })
    } else {
        Ok(())
    }
}

fn mean_gap(a: &[Vector], b: &[Vector]) -> f64 {
    Vector::mean_of(a).distance(&Vector::mean_of(b))
}

/// `T` inner steps on the lower level with every `x_i` held fixed.
///
/// * homogeneous: local (stochastic) gradient descent, no communication;
/// * heterogeneous, deterministic: mixed steps along the tracked direction
///   `v_i^{(t)} = Σ_j w_ij v_j^{(t−1)} + ∇g_i(y_i^{(t)}) − ∇g_i(y_i^{(t−1)})`,
///   restarted from `v_i^{(0)} = ∇g_i(y_i^{(0)})` unless `tracker` is given;
/// * heterogeneous, stochastic: mixed steps along the sampled local gradient.
#[allow(clippy::too_many_arguments)]
pub fn inner_loop(
    prob: &BilevelProblem,
    w: &Network,
    xs: &[Vector],
    y_start: Vec<Vector>,
    tracker: Option<InnerTracker>,
    regime: Regime,
    t_steps: usize,
    eta_y: &StepSchedule,
    sampling: InnerSampling<'_>,
) -> Result<InnerOutput> {
    let n = prob.n();
    if t_steps == 0 {
        return Err(Error::BadParameter("inner loop needs T >= 1".into()));
    }
    if xs.len() != n || y_start.len() != n || w.n() != n {
        return Err(Error::dims("inner loop agents", n, format!("{} x, {} y, {} network", xs.len(), y_start.len(), w.n())));
    }
    let grad = |i: usize, y: &Vector, t: usize| prob.agent(i).grad_y_g(&xs[i], y, &sampling.sample(prob, i, t));
    let mut ys = y_start;

    if regime.homogeneous {
        for t in 0..t_steps {
            let eta = eta_y.step(t);
            ys = ys
                .par_iter()
                .enumerate()
                .map(|(i, y)| {
                    let mut next = y.clone();
                    next.axpy(-eta, &grad(i, y, t));
                    next
                })
                .collect();
            guard(&ys, t + 1)?;
        }
        return Ok(InnerOutput { y: ys, tracker: None, tracking_residual: None });
    }

    if regime.stochastic {
        for t in 0..t_steps {
            let eta = eta_y.step(t);
            ys = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut next = w.mix_vector_at(i, &ys);
                    next.axpy(-eta, &grad(i, &ys[i], t));
                    next
                })
                .collect();
            guard(&ys, t + 1)?;
        }
        return Ok(InnerOutput { y: ys, tracker: None, tracking_residual: None });
    }

    let mut grads: Vec<Vector> = ys.par_iter().enumerate().map(|(i, y)| grad(i, y, 0)).collect();
    let mut v: Vec<Vector> = match tracker {
        None => grads.clone(),
        Some(tr) => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut vi = w.mix_vector_at(i, &tr.v);
                vi += &grads[i];
                vi -= &tr.grad[i];
                vi
            })
            .collect(),
    };
    let mut residual = mean_gap(&v, &grads);
    for t in 0..t_steps {
        let eta = eta_y.step(t);
        let next: Vec<Vector> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut yi = w.mix_vector_at(i, &ys);
                yi.axpy(-eta, &v[i]);
                yi
            })
            .collect();
        ys = next;
        guard(&ys, t + 1)?;
        if t + 1 == t_steps {
            break;
        }
        let new_grads: Vec<Vector> = ys.par_iter().enumerate().map(|(i, y)| grad(i, y, t + 1)).collect();
        v = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut vi = w.mix_vector_at(i, &v);
                vi += &new_grads[i];
                vi -= &grads[i];
                vi
            })
            .collect();
        grads = new_grads;
        residual = residual.max(mean_gap(&v, &grads));
    }
    Ok(InnerOutput { y: ys, tracker: Some(InnerTracker { v, grad: grads }), tracking_residual: Some(residual) })
}
