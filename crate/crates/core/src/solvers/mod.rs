//! DBO, DBOGT and DSBO: synchronous decentralized bilevel solvers.
//!
//! Every outer iteration runs the inner loop from the previous `y^{(T)}`,
//! forms one hypergradient estimate per agent and takes a mixed step on `x`.
//! DBOGT steps along a tracked direction `u` instead of the raw estimate.
//! All per-agent work of a round runs on the worker pool and is collected
//! in agent order, so results do not depend on the number of workers.

mod config;
mod inner;
mod metrics;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergrad::{estimate_aid, estimate_jhip, estimate_neumann, Aux, Branch, NeumannParams};
use crate::jhip::{jhip_run, JhipMode};
use crate::numerics::spd_solve_vec;
use crate::problem::{BilevelProblem, Sample};
use crate::rng::{RngPlan, Role};
use crate::{Matrix, Network, Vector};

pub use config::{Algorithm, RunConfig, INNER_HORIZON};
pub use inner::{inner_loop, InnerOutput, InnerSampling, InnerTracker};
pub use metrics::{CsvRow, MetricsRow, RunMetrics, CSV_HEADER};

/// Iterates with a norm above this abort the run.
pub const DIVERGENCE_GUARD: f64 = 1e12;
/// Gradient-norm tolerance of the oracle lower-level solves behind the metrics.
pub const ORACLE_TOL: f64 = 1e-10;

/// Runs `config.algorithm` on its own worker pool.
pub fn run(prob: &BilevelProblem, w: &Network, config: &RunConfig) -> Result<RunMetrics> {
    config.validate(prob.meta())?;
    if w.n() != prob.n() {
        return Err(Error::dims("network size vs agents", prob.n(), w.n()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::BadParameter(format!("worker pool: {e}")))?;
    pool.install(|| Runner::new(prob, w, config).run())
}

fn run_as(algorithm: Algorithm, prob: &BilevelProblem, w: &Network, config: &RunConfig) -> Result<RunMetrics> {
    if config.algorithm != algorithm {
        return Err(Error::Validation(format!("config is for {}, not {algorithm}", config.algorithm)));
    }
    run(prob, w, config)
}

/// Decentralized bilevel optimization with deterministic estimates.
pub fn dbo_run(prob: &BilevelProblem, w: &Network, config: &RunConfig) -> Result<RunMetrics> {
    run_as(Algorithm::Dbo, prob, w, config)
}

/// DBO with gradient tracking on the outer direction.
pub fn dbogt_run(prob: &BilevelProblem, w: &Network, config: &RunConfig) -> Result<RunMetrics> {
    run_as(Algorithm::Dbogt, prob, w, config)
}

/// Stochastic DBO.
pub fn dsbo_run(prob: &BilevelProblem, w: &Network, config: &RunConfig) -> Result<RunMetrics> {
    run_as(Algorithm::Dsbo, prob, w, config)
}

fn max_norm(items: &[Vector]) -> f64 {
    items.iter().map(Vector::norm).fold(0.0, |a, b| if b.is_finite() { a.max(b) } else { f64::INFINITY })
}

fn at_iteration(e: Error, k: usize) -> Error {
    match e {
        Error::Divergence { norm, .. } => Error::Divergence { iteration: k, norm },
        other => other,
    }
}

struct Runner<'a> {
    prob: &'a BilevelProblem,
    w: &'a Network,
    cfg: &'a RunConfig,
    plan: RngPlan,
    xs: Vec<Vector>,
    ys: Vec<Vector>,
    tracker: Option<InnerTracker>,
    /// CG warm starts.
    cg_v: Vec<Vector>,
    /// JHIP warm starts.
    jhip_z: Vec<Matrix>,
    /// DBOGT direction and the estimates it was last corrected with.
    u: Option<(Vec<Vector>, Vec<Vector>)>,
    acc: Accumulators,
}

#[derive(Default)]
struct Accumulators {
    s: f64,
    e: f64,
    t: f64,
    a: f64,
    b: f64,
}

impl<'a> Runner<'a> {
    fn new(prob: &'a BilevelProblem, w: &'a Network, cfg: &'a RunConfig) -> Self {
        let (n, p, q) = (prob.n(), prob.p(), prob.q());
        Runner {
            prob,
            w,
            cfg,
            plan: RngPlan::new(cfg.seed),
            xs: vec![Vector::zeros(p); n],
            ys: vec![Vector::zeros(q); n],
            tracker: None,
            cg_v: vec![Vector::zeros(q); n],
            jhip_z: vec![Matrix::zeros(q, p); n],
            u: None,
            acc: Accumulators::default(),
        }
    }

    fn run(mut self) -> Result<RunMetrics> {
        let mut rows = Vec::with_capacity(self.cfg.k);
        for k in 0..self.cfg.k {
            rows.push(self.iterate(k).map_err(|e| at_iteration(e, k))?);
        }
        let final_grad_norm = if self.cfg.record_oracle_metrics {
            let xbar = Vector::mean_of(&self.xs);
            Some(self.prob.exact_hypergradient(&xbar, ORACLE_TOL)?.mean.norm())
        } else {
            None
        };
        Ok(RunMetrics {
            algorithm: self.cfg.algorithm,
            rows,
            final_x: self.xs,
            final_grad_norm,
            kappa: self.prob.meta().kappa(),
        })
    }

    fn iterate(&mut self, k: usize) -> Result<MetricsRow> {
        let cfg = self.cfg;
        let sampling = if cfg.regime.stochastic {
            InnerSampling::Drawn { plan: &self.plan, k, batch: cfg.minibatch }
        } else {
            InnerSampling::Full
        };
        let carried = if cfg.persist_inner_tracker { self.tracker.take() } else { None };
        let ys = std::mem::take(&mut self.ys);
        let inner = inner_loop(self.prob, self.w, &self.xs, ys, carried, cfg.regime, cfg.t, &cfg.eta_y, sampling)?;
        self.ys = inner.y;
        self.tracker = inner.tracker;

        let v0 = self.cg_v.clone();
        let est = self.estimates(k)?;
        let est_mean = Vector::mean_of(&est);

        let (direction, tracker_drift) = match cfg.algorithm {
            Algorithm::Dbogt => {
                let u = match self.u.take() {
                    None => est.clone(),
                    Some((u_prev, est_prev)) => (0..self.prob.n())
                        .into_par_iter()
                        .map(|i| {
                            let mut ui = self.w.mix_vector_at(i, &u_prev);
                            ui += &est[i];
                            ui -= &est_prev[i];
                            ui
                        })
                        .collect(),
                };
                let drift = Vector::mean_of(&u).distance(&est_mean);
                self.u = Some((u.clone(), est));
                (u, Some(drift))
            }
            _ => (est, None),
        };

        let mut row = self.observe(k, &v0, tracker_drift, inner.tracking_residual)?;

        let eta = cfg.eta_x.step(k);
        let xs_next: Vec<Vector> = (0..self.prob.n())
            .into_par_iter()
            .map(|i| {
                let mut x = self.w.mix_vector_at(i, &self.xs);
                x.axpy(-eta, &direction[i]);
                x
            })
            .collect();
        let norm = max_norm(&xs_next);
        if norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence { iteration: k, norm });
        }
        let mut expected = Vector::mean_of(&self.xs);
        expected.axpy(-eta, &Vector::mean_of(&direction));
        row.average_residual = Vector::mean_of(&xs_next).distance(&expected);
        self.acc.e += xs_next.iter().zip(&self.xs).map(|(a, b)| (a - b).norm_squared()).sum::<f64>();
        self.xs = xs_next;
        Ok(row)
    }

    fn estimates(&mut self, k: usize) -> Result<Vec<Vector>> {
        let cfg = self.cfg;
        let prob = self.prob;
        let (xs, ys) = (&self.xs, &self.ys);
        let n = prob.n();
        match cfg.regime.branch() {
            Branch::Aid => {
                let zero = Vector::zeros(prob.q());
                let out: Vec<(Vector, Vector)> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let v0 = if cfg.warm_start { &self.cg_v[i] } else { &zero };
                        let e = estimate_aid(prob.agent(i), &xs[i], &ys[i], cfg.n, v0)?;
                        let v = match e.aux {
                            Aux::Cg(v) => v,
                            _ => unreachable!("AID carries its CG iterate"),
                        };
                        Ok((e.value, v))
                    })
                    .collect::<Result<_>>()?;
                let (values, vs): (Vec<_>, Vec<_>) = out.into_iter().unzip();
                if cfg.warm_start {
                    self.cg_v = vs;
                }
                Ok(values)
            }
            Branch::Neumann => {
                let params = NeumannParams {
                    m: cfg.m,
                    epsilon: cfg.epsilon,
                    l_h: prob.meta().l(),
                    depth: cfg.neumann_depth,
                    batch: cfg.minibatch,
                };
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = self.plan.stream(i, Role::Outer, k, 0);
                        estimate_neumann(prob.agent(i), &xs[i], &ys[i], &params, &mut rng).map(|e| e.value)
                    })
                    .collect()
            }
            Branch::JhipDeterministic | Branch::JhipStochastic => {
                let z0 = if cfg.warm_start {
                    self.jhip_z.clone()
                } else {
                    vec![Matrix::zeros(prob.q(), prob.p()); n]
                };
                let sample_of = |i: usize, role: Role, t: usize| {
                    if cfg.regime.stochastic && cfg.minibatch > 0 {
                        prob.agent(i).draw_sample(&mut self.plan.stream(i, role, k, t), cfg.minibatch)
                    } else {
                        Sample::Full
                    }
                };
                let z = if cfg.regime.stochastic {
                    let sampler = |i: usize, t: usize| {
                        let s = sample_of(i, Role::Jhip, t);
                        let a = prob.agent(i);
                        (a.hess_yy_g(&xs[i], &ys[i], &s), a.jac_xy_g(&xs[i], &ys[i], &s))
                    };
                    jhip_run(&JhipMode::Stochastic { sampler: &sampler }, self.w, cfg.n, &cfg.gamma, z0)?
                } else {
                    let (h, j): (Vec<Matrix>, Vec<Matrix>) = (0..n)
                        .into_par_iter()
                        .map(|i| {
                            let a = prob.agent(i);
                            (a.hess_yy_g(&xs[i], &ys[i], &Sample::Full), a.jac_xy_g(&xs[i], &ys[i], &Sample::Full))
                        })
                        .unzip();
                    jhip_run(&JhipMode::Deterministic { h: &h, j: &j }, self.w, cfg.n, &cfg.gamma, z0)?
                };
                let values = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let s = sample_of(i, Role::Outer, 0);
                        estimate_jhip(prob.agent(i), &xs[i], &ys[i], &z[i], &s).map(|e| e.value)
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.jhip_z = z;
                Ok(values)
            }
        }
    }

    /// Metrics at `(x_k, y_k^{(T)})`; `average_residual` is filled in after the update.
    fn observe(&mut self, k: usize, v0: &[Vector], tracker_drift: Option<f64>, inner_tracking: Option<f64>) -> Result<MetricsRow> {
        let prob = self.prob;
        let (xs, ys) = (&self.xs, &self.ys);
        let xbar = Vector::mean_of(xs);
        let consensus = xs.iter().map(|x| (x - &xbar).norm_squared()).sum::<f64>().sqrt();
        self.acc.s += consensus * consensus;
        let mut row = MetricsRow {
            k,
            grad_norm_mean: None,
            consensus,
            inner_residual: None,
            tracker_drift,
            s_k: self.acc.s,
            e_k: self.acc.e,
            t_k: None,
            a_k: None,
            b_k: None,
            y_gap: None,
            average_residual: 0.0,
            inner_tracking,
        };
        if !self.cfg.record_oracle_metrics {
            return Ok(row);
        }
        let exact = prob.exact_hypergradient(&xbar, ORACLE_TOL)?;
        let g = exact.mean.norm();
        self.acc.t += g * g;
        let y_tilde = prob.lower_level_solve_at(xs, ORACLE_TOL)?;
        let inner_residual = ys.iter().map(|y| y.distance(&y_tilde)).sum::<f64>() / prob.n() as f64;

        let cg_branch = self.cfg.regime.branch() == Branch::Aid;
        let local: Vec<(f64, f64)> = (0..prob.n())
            .into_par_iter()
            .map(|i| {
                let a = prob.agent(i);
                let y_loc = prob.local_solve(i, &xs[i], ORACLE_TOL)?;
                let a_term = ys[i].distance(&y_loc).powi(2);
                let b_term = if cg_branch {
                    let h = a.hess_yy_g(&xs[i], &y_loc, &Sample::Full);
                    let v_star = spd_solve_vec(&h, &a.grad_y_f(&xs[i], &y_loc, &Sample::Full))?;
                    v_star.distance(&v0[i]).powi(2)
                } else {
                    0.0
                };
                Ok((a_term, b_term))
            })
            .collect::<Result<_>>()?;
        self.acc.a += local.iter().map(|t| t.0).sum::<f64>();
        self.acc.b += local.iter().map(|t| t.1).sum::<f64>();

        row.grad_norm_mean = Some(g);
        row.t_k = Some(self.acc.t);
        row.inner_residual = Some(inner_residual);
        row.a_k = Some(self.acc.a);
        row.b_k = cg_branch.then_some(self.acc.b);
        row.y_gap = Some(y_tilde.distance(&exact.y_star));
        Ok(row)
    }
}
