//! JHIP convergence benchmark and hypergradient consistency check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::csvio::{fmt_f64, line};
use crate::error::{Error, Result};
use crate::hypergrad::{estimate_aid, estimate_jhip};
use crate::jhip::{default_gamma, jhip_run, jhip_run_observed, jhip_target, JhipMode};
use crate::numerics::sym_eigenvalues;
use crate::problem::{BilevelProblem, Sample};
use crate::rng::{RngPlan, Role};
use crate::schedule::StepSchedule;
use crate::{Matrix, Network, Vector};

/// Per-agent `(H_i, J_i)`: `H_i` is q×q SPD with spectrum spanning `[1, κ]`,
/// `J_i` is p×q with uniform entries in `[-1, 1]`.
pub fn random_jhip_instance(n: usize, q: usize, p: usize, kappa: f64, seed: u64) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    if n == 0 || q == 0 || p == 0 {
        return Err(Error::BadParameter("JHIP instance needs n, q, p >= 1".into()));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::BadParameter(format!("kappa >= 1, got {kappa}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Vec::with_capacity(n);
    for _ in 0..n {
        let m = Matrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
        let g = m.transpose().matmul(&m);
        let eig = sym_eigenvalues(&g)?;
        let (top, bottom) = (eig[0], eig[q - 1]);
        // affine map of the spectrum onto [1, κ]
        let s = if top - bottom > 1e-12 { (kappa - 1.0) / (top - bottom) } else { 0.0 };
        let mut hi = g.scaled(s);
        hi.axpy(1.0 - s * bottom, &Matrix::identity(q));
        h.push(hi);
    }
    let j = (0..n).map(|_| Matrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0))).collect();
    Ok((h, j))
}

/// Largest eigenvalue over the agents' Hessians.
pub fn max_hessian_eigenvalue(h: &[Matrix]) -> Result<f64> {
    h.iter().map(|m| sym_eigenvalues(m).map(|e| e[0])).try_fold(0.0f64, |acc, e| e.map(|v| acc.max(v)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct JhipBenchConfig {
    pub n: usize,
    pub q: usize,
    pub p: usize,
    pub kappa: f64,
    /// Ring self weight.
    pub a: f64,
    pub steps: usize,
    pub seed: u64,
    /// Entrywise noise on `H_i` (symmetrized) and `J_i`; `None` is deterministic.
    pub sigma: Option<f64>,
    /// Defaults to `1/(2L)` with `L` the largest Hessian eigenvalue.
    pub gamma: Option<StepSchedule>,
    /// Seed of the noise streams (instance fixed by `seed`).
    pub noise_seed: u64,
}

impl Default for JhipBenchConfig {
    fn default() -> Self {
        JhipBenchConfig { n: 5, q: 4, p: 3, kappa: 10.0, a: 0.5, steps: 500, seed: 0, sigma: None, gamma: None, noise_seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JhipBenchRow {
    pub t: usize,
    /// `max_i ‖Z_i − Z*‖_F`.
    pub max_err: f64,
    pub mean_err: f64,
    /// `(1/n) Σ_i ‖Z_i − Z*‖_F²`.
    pub mse: f64,
}

pub const JHIP_BENCH_HEADER: &str = "t,max_err,mean_err,mse";

pub fn jhip_bench_csv(rows: &[JhipBenchRow]) -> String {
    let mut out = format!("{JHIP_BENCH_HEADER}\n");
    for r in rows {
        out.push_str(&line([r.t.to_string(), fmt_f64(r.max_err), fmt_f64(r.mean_err), fmt_f64(r.mse)]));
        out.push('\n');
    }
    out
}

/// JHIP from `Z = 0` on ring(n, a) against the direct solve, one row per step `t = 0..=steps`.
pub fn jhip_bench(cfg: &JhipBenchConfig) -> Result<Vec<JhipBenchRow>> {
    let (h, j) = random_jhip_instance(cfg.n, cfg.q, cfg.p, cfg.kappa, cfg.seed)?;
    let w = Network::ring(cfg.n, cfg.a)?;
    let target = jhip_target(&h, &j)?;
    let schedule = match cfg.gamma {
        Some(g) => g,
        None => StepSchedule::Constant(0.5 / max_hessian_eigenvalue(&h)?),
    };
    let z0 = vec![Matrix::zeros(cfg.q, cfg.p); cfg.n];
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let observe = |st: &crate::jhip::JhipState<f64>| {
        let errs: Vec<f64> = st.z.iter().map(|z| (z - &target).frobenius_norm()).collect();
        let n = errs.len() as f64;
        rows.push(JhipBenchRow {
            t: st.t,
            max_err: errs.iter().copied().fold(0.0, f64::max),
            mean_err: errs.iter().sum::<f64>() / n,
            mse: errs.iter().map(|e| e * e).sum::<f64>() / n,
        });
    };
    match cfg.sigma {
        None => {
            let mode = JhipMode::Deterministic { h: &h, j: &j };
            jhip_run_observed(&mode, &w, cfg.steps, &schedule, z0, observe)?;
        }
        Some(sigma) => {
            let plan = RngPlan::new(cfg.noise_seed);
            let sampler = |i: usize, t: usize| {
                let mut rng = plan.stream(i, Role::Jhip, 0, t);
                let mut draw = || -> f64 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigma * z
                };
                let e = Matrix::from_fn(cfg.q, cfg.q, |_, _| draw());
                let mut hs = h[i].clone();
                hs.axpy(0.5, &e);
                hs.axpy(0.5, &e.transpose());
                let mut js = j[i].clone();
                js.axpy(1.0, &Matrix::from_fn(cfg.p, cfg.q, |_, _| draw()));
                (hs, js)
            };
            let mode = JhipMode::Stochastic { sampler: &sampler };
            jhip_run_observed(&mode, &w, cfg.steps, &schedule, z0, observe)?;
        }
    }
    Ok(rows)
}

/// Point with entries uniform in `[-scale, scale]`.
pub fn random_point(p: usize, scale: f64, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_fn(p, |_| rng.random_range(-scale..=scale))
}

/// Consistency of the hypergradient oracles at `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct HgCheck {
    /// `‖∇Φ − FD‖ / max(‖FD‖, 1e-12)` with central differences of `Φ`.
    pub fd_rel_err: f64,
    /// `max_i ‖AID_i − (∇_x f_i − J_i H_i⁻¹ ∇_y f_i)‖`, with `q` CG steps at agent `i`'s
    /// own lower-level minimizer.
    pub aid_err: f64,
    /// `max_i ‖JHIP_i − ∇Φ_i‖` with deterministic JHIP at `y*(x)`.
    pub jhip_err: f64,
    /// `max_i ‖JHIP_i − AID_i‖` at `y*(x)`; only when the lower level is homogeneous.
    pub jhip_vs_aid: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HgCheckConfig {
    pub fd_step: f64,
    pub tol: f64,
    pub jhip_steps: usize,
}

impl Default for HgCheckConfig {
    fn default() -> Self {
        HgCheckConfig { fd_step: 1e-5, tol: 1e-12, jhip_steps: 3000 }
    }
}

pub fn hg_check(prob: &BilevelProblem, w: &Network, x: &Vector, cfg: &HgCheckConfig) -> Result<HgCheck> {
    let exact = prob.exact_hypergradient(x, cfg.tol)?;
    let mut fd = Vector::zeros(prob.p());
    for k in 0..prob.p() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[k] += cfg.fd_step;
        xm[k] -= cfg.fd_step;
        fd[k] = (prob.phi(&xp, cfg.tol)? - prob.phi(&xm, cfg.tol)?) / (2.0 * cfg.fd_step);
    }
    let fd_rel_err = exact.mean.distance(&fd) / fd.norm().max(1e-12);

    let q = prob.q();
    let mut aid_err: f64 = 0.0;
    for i in 0..prob.n() {
        let y = prob.local_solve(i, x, cfg.tol)?;
        let aid = estimate_aid(prob.agent(i), x, &y, q, &Vector::zeros(q))?;
        aid_err = aid_err.max(aid.value.distance(&prob.local_hypergradient(i, x, cfg.tol)?));
    }

    let full = Sample::Full;
    let y = &exact.y_star;
    let hs: Vec<Matrix> = prob.agents().iter().map(|a| a.hess_yy_g(x, y, &full)).collect();
    let js: Vec<Matrix> = prob.agents().iter().map(|a| a.jac_xy_g(x, y, &full)).collect();
    let c = w.tracking_stability_bound() / 2.0;
    let gamma = default_gamma(max_hessian_eigenvalue(&hs)? / c);
    let mode = JhipMode::Deterministic { h: &hs, j: &js };
    let z = jhip_run(&mode, w, cfg.jhip_steps, &gamma, vec![Matrix::zeros(q, prob.p()); prob.n()])?;
    let mut jhip_err: f64 = 0.0;
    let mut vs_aid: f64 = 0.0;
    for (i, a) in prob.agents().iter().enumerate() {
        let est = estimate_jhip(a.as_ref(), x, y, &z[i], &full)?.value;
        jhip_err = jhip_err.max(est.distance(&exact.per_agent[i]));
        let aid = estimate_aid(a.as_ref(), x, y, q, &Vector::zeros(q))?.value;
        vs_aid = vs_aid.max(est.distance(&aid));
    }
    Ok(HgCheck { fd_rel_err, aid_err, jhip_err, jhip_vs_aid: prob.meta().homogeneous_g.then_some(vs_aid) })
}
