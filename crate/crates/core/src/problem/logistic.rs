//! Hyperparameter tuning of ℓ2-regularized logistic regression on synthetic
//! heterogeneous data.
//!
//! The upper variable `λ ∈ R^p` sets per-coordinate regularization strengths
//! `e^λ`; the lower variable `τ ∈ R^p` holds the model weights.
//!
//! `g_i(λ, τ) = mean_{D_i} ψ(y_e x_eᵀτ) + ½ τᵀ diag(e^λ) τ`,
//! `f_i(λ, τ) = s · mean_{D'_i} ψ(y_e x_eᵀτ)`, with `ψ(t) = log(1 + e^{−t})`
//! and `s` the validation weight (1 for a mean, `|D'_i|` for a sum).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    logistic_loss, logistic_loss_d1, logistic_loss_d2, AgentOracles, BilevelProblem, Dataset, Sample,
    SmoothnessMeta,
};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Upper bound of `|ψ'''|`.
const PSI_D3_MAX: f64 = 0.096_225_044_864_937_6;

#[derive(Clone, Debug)]
pub struct LogisticAgent {
    pub train: Dataset,
    pub val: Dataset,
    /// Multiplies the validation mean.
    pub upper_scale: f64,
}

fn indices(s: &Sample) -> (Option<&[usize]>, Option<&[usize]>) {
    match s {
        Sample::Full => (None, None),
        Sample::Drawn { upper, lower, .. } => (Some(upper.as_slice()), Some(lower.as_slice())),
    }
}

fn margin(data: &Dataset, e: usize, tau: &Vector) -> f64 {
    data.labels[e] * data.row(e).iter().zip(tau.iter()).map(|(a, b)| a * b).sum::<f64>()
}

/// `mean_e ψ'(m_e) y_e x_e` over the selection.
fn loss_grad(data: &Dataset, idx: Option<&[usize]>, tau: &Vector) -> Vector {
    let mut g = Vector::zeros(tau.len());
    let w = 1.0 / data.selected_len(idx) as f64;
    data.for_each(idx, |e| {
        let coef = w * logistic_loss_d1(margin(data, e, tau)) * data.labels[e];
        for (gk, &xk) in g.as_mut_slice().iter_mut().zip(data.row(e)) {
            *gk += coef * xk;
        }
    });
    g
}

fn loss_value(data: &Dataset, idx: Option<&[usize]>, tau: &Vector) -> f64 {
    let w = 1.0 / data.selected_len(idx) as f64;
    let mut v = 0.0;
    data.for_each(idx, |e| v += w * logistic_loss(margin(data, e, tau)));
    v
}

impl AgentOracles for LogisticAgent {
    fn dims(&self) -> (usize, usize) {
        (self.train.dim(), self.train.dim())
    }

    fn upper_value(&self, _x: &Vector, y: &Vector, s: &Sample) -> f64 {
        self.upper_scale * loss_value(&self.val, indices(s).0, y)
    }

    fn lower_value(&self, x: &Vector, y: &Vector, s: &Sample) -> f64 {
        let reg: f64 = x.iter().zip(y.iter()).map(|(l, t)| 0.5 * l.exp() * t * t).sum();
        loss_value(&self.train, indices(s).1, y) + reg
    }

    fn grad_x_f(&self, x: &Vector, _y: &Vector, _s: &Sample) -> Vector {
        Vector::zeros(x.len())
    }

    fn grad_y_f(&self, _x: &Vector, y: &Vector, s: &Sample) -> Vector {
        loss_grad(&self.val, indices(s).0, y).scaled(self.upper_scale)
    }

    fn grad_x_g(&self, x: &Vector, y: &Vector, _s: &Sample) -> Vector {
        Vector::from_fn(x.len(), |k| 0.5 * x[k].exp() * y[k] * y[k])
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector {
        let mut g = loss_grad(&self.train, indices(s).1, y);
        for k in 0..g.len() {
            g[k] += x[k].exp() * y[k];
        }
        g
    }

    fn hess_yy_g_vp(&self, x: &Vector, y: &Vector, v: &Vector, s: &Sample) -> Vector {
        let idx = indices(s).1;
        let data = &self.train;
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut out = Vector::from_fn(v.len(), |k| x[k].exp() * v[k]);
        data.for_each(idx, |e| {
            let row = data.row(e);
            let xv: f64 = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let coef = w * logistic_loss_d2(margin(data, e, y)) * xv;
            for (o, &xk) in out.as_mut_slice().iter_mut().zip(row) {
                *o += coef * xk;
            }
        });
        out
    }

    fn hess_yy_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Matrix {
        let idx = indices(s).1;
        let data = &self.train;
        let q = y.len();
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut h = Matrix::from_diagonal(&x.iter().map(|l| l.exp()).collect::<Vec<_>>());
        data.for_each(idx, |e| {
            let row = data.row(e);
            let coef = w * logistic_loss_d2(margin(data, e, y));
            if coef == 0.0 {
                return;
            }
            for i in 0..q {
                let ci = coef * row[i];
                for j in i..q {
                    h[(i, j)] += ci * row[j];
                }
            }
        });
        for i in 0..q {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    fn jac_xy_g(&self, x: &Vector, y: &Vector, _s: &Sample) -> Matrix {
        Matrix::from_diagonal(&(0..x.len()).map(|k| x[k].exp() * y[k]).collect::<Vec<_>>())
    }

    fn jac_xy_g_vp(&self, x: &Vector, y: &Vector, v: &Vector, _s: &Sample) -> Vector {
        Vector::from_fn(x.len(), |k| x[k].exp() * y[k] * v[k])
    }

    fn dataset_sizes(&self) -> (usize, usize) {
        (self.val.len(), self.train.len())
    }

    fn datasets(&self) -> Option<(&Dataset, &Dataset)> {
        Some((&self.train, &self.val))
    }
}

/// Generator parameters for the synthetic logistic problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticSpec {
    pub n: usize,
    pub p: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Label noise rate `m` in `y = sign(xᵀτ* + m ε)`.
    pub noise_rate: f64,
    /// Weight `s` of the validation mean; `val_samples` gives the plain sum.
    pub upper_weight: f64,
    /// Agent `i` (0-based) draws features with standard deviation `feature_scale · (i + 1)`.
    pub feature_scale: f64,
    pub seed: u64,
}

impl LogisticSpec {
    pub fn new(n: usize, p: usize, samples_per_agent: usize, noise_rate: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            train_samples: samples_per_agent,
            val_samples: samples_per_agent,
            noise_rate,
            upper_weight: 1.0,
            feature_scale: 1.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.train_samples == 0 || self.val_samples == 0 {
            return Err(Error::BadParameter("logistic problem needs n, p and sample counts >= 1".into()));
        }
        if !(self.feature_scale > 0.0 && self.feature_scale.is_finite()) {
            return Err(Error::BadParameter(format!("feature scale must be > 0, got {}", self.feature_scale)));
        }
        if !(self.upper_weight > 0.0 && self.upper_weight.is_finite()) {
            return Err(Error::BadParameter(format!("upper weight must be > 0, got {}", self.upper_weight)));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(Error::BadParameter(format!("noise rate must be >= 0, got {}", self.noise_rate)));
        }
        Ok(())
    }

    pub fn agents(&self) -> Result<Vec<LogisticAgent>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let tau_star: Vec<f64> = (0..self.p).map(|_| rng.sample(StandardNormal)).collect();
        let draw = |count: usize, std: f64, rng: &mut ChaCha8Rng| {
            let features = Matrix::from_fn(count, self.p, |_, _| std * rng.sample::<f64, _>(StandardNormal));
            let labels = (0..count)
                .map(|e| {
                    let eps: f64 = rng.sample(StandardNormal);
                    let score: f64 =
                        features.row(e).iter().zip(&tau_star).map(|(a, b)| a * b).sum::<f64>() + self.noise_rate * eps;
                    if score >= 0.0 { 1.0 } else { -1.0 }
                })
                .collect();
            Dataset::new(features, labels)
        };
        Ok((0..self.n)
            .map(|i| {
                // agent i (1-based) draws features with variance (scale · i)²
                let std = self.feature_scale * (i + 1) as f64;
                let train = draw(self.train_samples, std, &mut rng);
                let val = draw(self.val_samples, std, &mut rng);
                LogisticAgent { train, val, upper_scale: self.upper_weight }
            })
            .collect())
    }

    /// Conservative bounds at the reference point `λ = 0`.
    pub fn meta(&self, agents: &[LogisticAgent]) -> SmoothnessMeta {
        let mut gram_train: f64 = 0.0;
        let mut gram_val: f64 = 0.0;
        let mut max_norm: f64 = 0.0;
        let mut l_f0: f64 = 0.0;
        for a in agents {
            gram_train = gram_train.max(a.train.gram_norm());
            gram_val = gram_val.max(a.upper_scale * a.val.gram_norm());
            max_norm = max_norm.max(a.train.max_row_norm()).max(a.val.max_row_norm());
            l_f0 = l_f0.max(a.upper_scale * a.val.mean_row_norm());
        }
        let scale = agents.iter().map(|a| a.upper_scale).fold(1.0, f64::max);
        SmoothnessMeta {
            mu: 1.0,
            l_f0,
            l_f1: 0.25 * gram_val,
            l_g1: 0.25 * gram_train + 1.0,
            l_g2: PSI_D3_MAX * max_norm.powi(3) + 1.0,
            sigma_f: scale * max_norm,
            sigma_g1: max_norm,
            sigma_g2: 0.25 * max_norm * max_norm,
            homogeneous_g: self.n == 1,
        }
    }

    pub fn build(&self) -> Result<BilevelProblem> {
        let agents = self.agents()?;
        let meta = self.meta(&agents);
        let boxed = agents.into_iter().map(|a| Arc::new(a) as Arc<dyn AgentOracles>).collect();
        BilevelProblem::new(boxed, meta)
    }
}

/// Synthetic heterogeneous logistic regression (`q = p`); agent `i` draws
/// features with standard deviation `i`.
pub fn make_synthetic_logistic(
    n: usize,
    p: usize,
    q: usize,
    samples_per_agent: usize,
    noise_rate: f64,
    seed: u64,
) -> Result<BilevelProblem> {
    if p != q {
        return Err(Error::BadParameter(format!("logistic problem pairs one hyperparameter per weight: p = {p} != q = {q}")));
    }
    LogisticSpec::new(n, p, samples_per_agent, noise_rate, seed).build()
}
