//! Data hyper-cleaning on synthetic Gaussian class clusters.
//!
//! Each training sample `e` gets a weight hyperparameter `λ_e`. Agent `i`
//! owns the block `x[i·S .. (i+1)·S]` of the global upper variable.
//!
//! `g_i(λ, τ) = mean_{e ∈ D_i} σ(λ_e) ψ(y_e x_eᵀτ) + c_r ‖τ‖²`,
//! `f_i(λ, τ) = mean_{e ∈ D'_i} ψ(y_e x_eᵀτ)` on clean validation data.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    logistic_loss, logistic_loss_d1, logistic_loss_d2, sigmoid, AgentOracles, BilevelProblem, Dataset, Sample,
    SmoothnessMeta,
};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

const PSI_D3_MAX: f64 = 0.096_225_044_864_937_6;

#[derive(Clone, Debug)]
pub struct HyperCleaningAgent {
    pub train: Dataset,
    pub val: Dataset,
    /// Offset of this agent's weights in the global upper variable.
    pub offset: usize,
    /// Length of the global upper variable.
    pub p: usize,
    pub c_r: f64,
    /// Training labels before corruption.
    pub clean_labels: Vec<f64>,
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

fn sigmoid_d1(t: f64) -> f64 {
    sigmoid(t) * sigmoid(-t)
}

impl HyperCleaningAgent {
    fn weight(&self, x: &Vector, e: usize) -> f64 {
        sigmoid(x[self.offset + e])
    }

    /// Indices of corrupted training samples.
    pub fn corrupted(&self) -> Vec<usize> {
        (0..self.train.len()).filter(|&e| self.train.labels[e] != self.clean_labels[e]).collect()
    }
}

impl AgentOracles for HyperCleaningAgent {
    fn dims(&self) -> (usize, usize) {
        (self.p, self.train.dim())
    }

    fn upper_value(&self, _x: &Vector, y: &Vector, s: &Sample) -> f64 {
        let idx = indices(s).0;
        let w = 1.0 / self.val.selected_len(idx) as f64;
        let mut v = 0.0;
        self.val.for_each(idx, |e| v += w * logistic_loss(margin(&self.val, e, y)));
        v
    }

    fn lower_value(&self, x: &Vector, y: &Vector, s: &Sample) -> f64 {
        let idx = indices(s).1;
        let w = 1.0 / self.train.selected_len(idx) as f64;
        let mut v = self.c_r * y.norm_squared();
        self.train.for_each(idx, |e| v += w * self.weight(x, e) * logistic_loss(margin(&self.train, e, y)));
        v
    }

    fn grad_x_f(&self, x: &Vector, _y: &Vector, _s: &Sample) -> Vector {
        Vector::zeros(x.len())
    }

    fn grad_y_f(&self, _x: &Vector, y: &Vector, s: &Sample) -> Vector {
        let idx = indices(s).0;
        let data = &self.val;
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut g = Vector::zeros(y.len());
        data.for_each(idx, |e| {
            let coef = w * logistic_loss_d1(margin(data, e, y)) * data.labels[e];
            for (gk, &xk) in g.as_mut_slice().iter_mut().zip(data.row(e)) {
                *gk += coef * xk;
            }
        });
        g
    }

    fn grad_x_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector {
        let idx = indices(s).1;
        let w = 1.0 / self.train.selected_len(idx) as f64;
        let mut g = Vector::zeros(x.len());
        self.train.for_each(idx, |e| {
            let k = self.offset + e;
            g[k] += w * sigmoid_d1(x[k]) * logistic_loss(margin(&self.train, e, y));
        });
        g
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector {
        let idx = indices(s).1;
        let data = &self.train;
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut g = y.scaled(2.0 * self.c_r);
        data.for_each(idx, |e| {
            let coef = w * self.weight(x, e) * logistic_loss_d1(margin(data, e, y)) * data.labels[e];
            for (gk, &xk) in g.as_mut_slice().iter_mut().zip(data.row(e)) {
                *gk += coef * xk;
            }
        });
        g
    }

    fn hess_yy_g_vp(&self, x: &Vector, y: &Vector, v: &Vector, s: &Sample) -> Vector {
        let idx = indices(s).1;
        let data = &self.train;
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut out = v.scaled(2.0 * self.c_r);
        data.for_each(idx, |e| {
            let row = data.row(e);
            let xv: f64 = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let coef = w * self.weight(x, e) * logistic_loss_d2(margin(data, e, y)) * xv;
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
        let mut h = Matrix::identity(q).scaled(2.0 * self.c_r);
        data.for_each(idx, |e| {
            let row = data.row(e);
            let coef = w * self.weight(x, e) * logistic_loss_d2(margin(data, e, y));
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

    fn jac_xy_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Matrix {
        let idx = indices(s).1;
        let data = &self.train;
        let q = y.len();
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut j = Matrix::zeros(x.len(), q);
        data.for_each(idx, |e| {
            let k = self.offset + e;
            let coef = w * sigmoid_d1(x[k]) * logistic_loss_d1(margin(data, e, y)) * data.labels[e];
            for (c, &xc) in data.row(e).iter().enumerate() {
                j[(k, c)] += coef * xc;
            }
        });
        j
    }

    fn jac_xy_g_vp(&self, x: &Vector, y: &Vector, v: &Vector, s: &Sample) -> Vector {
        let idx = indices(s).1;
        let data = &self.train;
        let w = 1.0 / data.selected_len(idx) as f64;
        let mut out = Vector::zeros(x.len());
        data.for_each(idx, |e| {
            let k = self.offset + e;
            let xv: f64 = data.row(e).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            out[k] += w * sigmoid_d1(x[k]) * logistic_loss_d1(margin(data, e, y)) * data.labels[e] * xv;
        });
        out
    }

    fn dataset_sizes(&self) -> (usize, usize) {
        (self.val.len(), self.train.len())
    }

    fn datasets(&self) -> Option<(&Dataset, &Dataset)> {
        Some((&self.train, &self.val))
    }
}

/// Generator parameters for synthetic hyper-cleaning.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperCleaningSpec {
    pub n: usize,
    /// Feature dimension (the lower variable's length).
    pub features: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub corruption_rate: f64,
    pub c_r: f64,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    pub seed: u64,
}

impl HyperCleaningSpec {
    pub fn new(n: usize, features: usize, samples_per_agent: usize, corruption_rate: f64, c_r: f64, seed: u64) -> Self {
        Self {
            n,
            features,
            train_samples: samples_per_agent,
            val_samples: samples_per_agent,
            corruption_rate,
            c_r,
            separation: 2.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.features == 0 || self.train_samples == 0 || self.val_samples == 0 {
            return Err(Error::BadParameter("hyper-cleaning needs n, features and sample counts >= 1".into()));
        }
        if !(self.c_r > 0.0 && self.c_r.is_finite()) {
            return Err(Error::BadParameter(format!("c_r must be > 0, got {}", self.c_r)));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::BadParameter(format!("corruption rate must lie in [0, 1], got {}", self.corruption_rate)));
        }
        Ok(())
    }

    pub fn agents(&self) -> Result<Vec<HyperCleaningAgent>> {
        self.validate()?;
        let d = self.features;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        direction.iter_mut().for_each(|v| *v *= self.separation / len);
        let p = self.n * self.train_samples;
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            // agent-dependent shift and spread
            let shift: Vec<f64> = (0..d).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let spread = 1.0 + 0.5 * i as f64 / self.n.max(2) as f64;
            let draw = |count: usize, rng: &mut ChaCha8Rng| {
                let labels: Vec<f64> = (0..count).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
                let features = Matrix::from_fn(count, d, |e, c| {
                    labels[e] * direction[c] + shift[c] + spread * rng.sample::<f64, _>(StandardNormal)
                });
                Dataset::new(features, labels)
            };
            let mut train = draw(self.train_samples, &mut rng);
            let val = draw(self.val_samples, &mut rng);
            let clean_labels = train.labels.clone();
            let flips = (self.corruption_rate * self.train_samples as f64).round() as usize;
            let mut order: Vec<usize> = (0..self.train_samples).collect();
            for k in 0..flips {
                let j = rng.random_range(k..order.len());
                order.swap(k, j);
                train.labels[order[k]] = -train.labels[order[k]];
            }
            out.push(HyperCleaningAgent {
                train,
                val,
                offset: i * self.train_samples,
                p,
                c_r: self.c_r,
                clean_labels,
            });
        }
        Ok(out)
    }

    pub fn meta(&self, agents: &[HyperCleaningAgent]) -> SmoothnessMeta {
        let mut gram_train: f64 = 0.0;
        let mut gram_val: f64 = 0.0;
        let mut r: f64 = 0.0;
        let mut l_f0: f64 = 0.0;
        for a in agents {
            gram_train = gram_train.max(a.train.gram_norm());
            gram_val = gram_val.max(a.val.gram_norm());
            r = r.max(a.train.max_row_norm()).max(a.val.max_row_norm());
            l_f0 = l_f0.max(a.val.mean_row_norm());
        }
        let mu = 2.0 * self.c_r;
        SmoothnessMeta {
            mu,
            l_f0,
            l_f1: 0.25 * gram_val,
            l_g1: 0.25 * gram_train + mu + 0.25 * r + 0.1,
            // |ψ'''| r³ + |σ'ψ''| r² + |σ''ψ'| r summed over the three cross orders
            l_g2: PSI_D3_MAX * r.powi(3) + 0.125 * r * r + 0.1 * r + 0.1,
            sigma_f: r,
            sigma_g1: r,
            sigma_g2: 0.25 * r * r,
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

/// Synthetic hyper-cleaning with `n·samples_per_agent` sample weights as the
/// upper variable and a `features`-dimensional linear classifier below.
pub fn make_synthetic_hypercleaning(
    n: usize,
    features: usize,
    samples_per_agent: usize,
    corruption_rate: f64,
    c_r: f64,
    seed: u64,
) -> Result<BilevelProblem> {
    HyperCleaningSpec::new(n, features, samples_per_agent, corruption_rate, c_r, seed).build()
}
