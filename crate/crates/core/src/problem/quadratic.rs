//! Quadratic testbed with closed-form lower-level solution and hypergradient.
//!
//! `g_i(x, y) = ½ yᵀA_i y − yᵀ(B_i x + b_i)`, `f_i(x, y) = ½‖x − c_i‖² + ½‖y − d_i‖²`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AgentOracles, BilevelProblem, Sample, SmoothnessMeta};
use crate::numerics::{spd_solve, spd_solve_vec, sym_eigenvalues, sym_spectral_norm};
use crate::{Matrix, Vector};

/// Radius of the region over which `l_f0` bounds `‖∇f_i‖`.
pub const QUADRATIC_REGION_RADIUS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticAgent {
    pub a: Matrix,
    pub b: Matrix,
    pub b0: Vector,
    pub c: Vector,
    pub d: Vector,
    /// Standard deviation of additive Gaussian noise on every stochastic oracle.
    pub noise: f64,
}

// Distinct tags keep the noise of different oracles independent under one sample seed.
const TAG_GXF: u64 = 1;
const TAG_GYF: u64 = 2;
const TAG_GXG: u64 = 3;
const TAG_GYG: u64 = 4;
const TAG_HESS: u64 = 5;
const TAG_JAC: u64 = 6;
const TAG_F: u64 = 7;
const TAG_G: u64 = 8;

fn unif(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn noise_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

impl QuadraticAgent {
    fn noise_seed(&self, s: &Sample) -> Option<u64> {
        match s {
            Sample::Drawn { seed, .. } if self.noise > 0.0 => Some(*seed),
            _ => None,
        }
    }

    fn perturb_vec(&self, mut v: Vector, s: &Sample, tag: u64) -> Vector {
        if let Some(seed) = self.noise_seed(s) {
            let mut rng = noise_rng(seed, tag);
            for k in 0..v.len() {
                let z: f64 = rng.sample(StandardNormal);
                v[k] += self.noise * z;
            }
        }
        v
    }

    fn hessian(&self, s: &Sample) -> Matrix {
        let mut h = self.a.clone();
        if let Some(seed) = self.noise_seed(s) {
            let q = h.rows();
            let mut rng = noise_rng(seed, TAG_HESS);
            for i in 0..q {
                for j in i..q {
                    let z: f64 = rng.sample(StandardNormal);
                    h[(i, j)] += self.noise * z;
                    if i != j {
                        h[(j, i)] = h[(i, j)];
                    }
                }
            }
        }
        h
    }
}

impl AgentOracles for QuadraticAgent {
    fn dims(&self) -> (usize, usize) {
        (self.b.cols(), self.b.rows())
    }

    fn upper_value(&self, x: &Vector, y: &Vector, s: &Sample) -> f64 {
        let v = 0.5 * (x - &self.c).norm_squared() + 0.5 * (y - &self.d).norm_squared();
        v + self.perturb_vec(Vector::zeros(1), s, TAG_F)[0]
    }

    fn lower_value(&self, x: &Vector, y: &Vector, s: &Sample) -> f64 {
        let lin = &self.b.matvec(x) + &self.b0;
        let v = 0.5 * y.dot(&self.a.matvec(y)) - y.dot(&lin);
        v + self.perturb_vec(Vector::zeros(1), s, TAG_G)[0]
    }

    fn grad_x_f(&self, x: &Vector, _y: &Vector, s: &Sample) -> Vector {
        self.perturb_vec(x - &self.c, s, TAG_GXF)
    }

    fn grad_y_f(&self, _x: &Vector, y: &Vector, s: &Sample) -> Vector {
        self.perturb_vec(y - &self.d, s, TAG_GYF)
    }

    fn grad_x_g(&self, _x: &Vector, y: &Vector, s: &Sample) -> Vector {
        self.perturb_vec(-&self.b.tr_matvec(y), s, TAG_GXG)
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector, s: &Sample) -> Vector {
        let mut g = self.a.matvec(y);
        g -= &self.b.matvec(x);
        g -= &self.b0;
        self.perturb_vec(g, s, TAG_GYG)
    }

    fn hess_yy_g_vp(&self, _x: &Vector, _y: &Vector, v: &Vector, s: &Sample) -> Vector {
        if self.noise_seed(s).is_some() {
            self.hessian(s).matvec(v)
        } else {
            self.a.matvec(v)
        }
    }

    fn hess_yy_g(&self, _x: &Vector, _y: &Vector, s: &Sample) -> Matrix {
        self.hessian(s)
    }

    fn jac_xy_g(&self, _x: &Vector, _y: &Vector, s: &Sample) -> Matrix {
        let mut j = self.b.transpose().scaled(-1.0);
        if let Some(seed) = self.noise_seed(s) {
            let mut rng = noise_rng(seed, TAG_JAC);
            for v in j.as_mut_slice() {
                let z: f64 = rng.sample(StandardNormal);
                *v += self.noise * z;
            }
        }
        j
    }
}

/// Generator parameters for the quadratic testbed.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Spread of `{A_i, B_i, b_i}` across agents; 0 makes `g_i` identical.
    pub lower_spread: f64,
    /// Spread of `{c_i, d_i}` across agents.
    pub upper_spread: f64,
    pub noise: f64,
    pub seed: u64,
}

impl QuadraticSpec {
    pub fn new(n: usize, p: usize, q: usize, heterogeneity: f64, seed: u64) -> Self {
        Self { n, p, q, lower_spread: heterogeneity, upper_spread: heterogeneity, noise: 0.0, seed }
    }

    pub fn agents(&self) -> Vec<QuadraticAgent> {
        let (p, q) = (self.p, self.q);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let m0 = unif(q, q, &mut rng);
        let mut a0 = m0.matmul(&m0.transpose()).scaled(1.0 / q as f64);
        a0.axpy(1.0, &Matrix::identity(q));
        let bmat0 = unif(q, p, &mut rng).scaled(1.0 / (p as f64).sqrt());
        let b0 = unif(q, 1, &mut rng).column(0);
        let c0 = unif(p, 1, &mut rng).column(0);
        let d0 = unif(q, 1, &mut rng).column(0);
        (0..self.n)
            .map(|_| {
                let ni = unif(q, q, &mut rng);
                let mut a = a0.clone();
                a.axpy(self.lower_spread, &ni.matmul(&ni.transpose()).scaled(1.0 / q as f64));
                let mut b = bmat0.clone();
                b.axpy(self.lower_spread, &unif(q, p, &mut rng).scaled(1.0 / (p as f64).sqrt()));
                let mut bv = b0.clone();
                bv.axpy(self.lower_spread, &unif(q, 1, &mut rng).column(0));
                let mut c = c0.clone();
                c.axpy(self.upper_spread, &unif(p, 1, &mut rng).column(0));
                let mut d = d0.clone();
                d.axpy(self.upper_spread, &unif(q, 1, &mut rng).column(0));
                QuadraticAgent { a, b, b0: bv, c, d, noise: self.noise }
            })
            .collect()
    }

    pub fn meta(&self, agents: &[QuadraticAgent]) -> SmoothnessMeta {
        let (p, q) = (self.p, self.q);
        let mut mu = f64::INFINITY;
        let mut l_g1: f64 = 0.0;
        let mut upper: f64 = 0.0;
        for ag in agents {
            let eig = sym_eigenvalues(&ag.a).expect("A_i is symmetric");
            mu = mu.min(*eig.last().expect("q >= 1"));
            // Hessian of g_i in (x, y): [[0, -Bᵀ], [-B, A]]
            let joint = Matrix::from_fn(p + q, p + q, |r, c| match (r < p, c < p) {
                (true, true) => 0.0,
                (true, false) => -ag.b[(c - p, r)],
                (false, true) => -ag.b[(r - p, c)],
                (false, false) => ag.a[(r - p, c - p)],
            });
            l_g1 = l_g1.max(sym_spectral_norm(&joint).expect("joint Hessian is symmetric"));
            upper = upper.max(ag.c.norm() + ag.d.norm());
        }
        SmoothnessMeta {
            mu,
            l_f0: 2.0 * QUADRATIC_REGION_RADIUS + upper,
            l_f1: 1.0,
            l_g1,
            l_g2: 0.0,
            sigma_f: self.noise * ((p + q) as f64).sqrt(),
            sigma_g1: self.noise * (q as f64).sqrt(),
            sigma_g2: self.noise * q as f64,
            homogeneous_g: self.lower_spread == 0.0,
        }
    }

    pub fn build(&self) -> BilevelProblem {
        let agents = self.agents();
        let meta = self.meta(&agents);
        let boxed = agents.into_iter().map(|a| Arc::new(a) as Arc<dyn AgentOracles>).collect();
        BilevelProblem::new(boxed, meta).expect("quadratic testbed is well formed")
    }
}

/// `g_i(x,y) = ½yᵀA_i y − yᵀ(B_i x + b_i)`, `f_i = ½‖x−c_i‖² + ½‖y−d_i‖²`.
pub fn make_quadratic_testbed(n: usize, p: usize, q: usize, heterogeneity: f64, seed: u64) -> BilevelProblem {
    QuadraticSpec::new(n, p, q, heterogeneity.max(0.0), seed).build()
}

/// Closed-form solution map and hypergradient of a quadratic testbed.
#[derive(Clone, Debug)]
pub struct QuadraticClosedForm {
    agents: Vec<QuadraticAgent>,
    a_bar: Matrix,
    b_bar: Matrix,
    b0_bar: Vector,
}

impl QuadraticClosedForm {
    pub fn new(agents: Vec<QuadraticAgent>) -> Self {
        let a_bar = Matrix::mean_of(&agents.iter().map(|a| a.a.clone()).collect::<Vec<_>>());
        let b_bar = Matrix::mean_of(&agents.iter().map(|a| a.b.clone()).collect::<Vec<_>>());
        let b0_bar = Vector::mean_of(&agents.iter().map(|a| a.b0.clone()).collect::<Vec<_>>());
        Self { agents, a_bar, b_bar, b0_bar }
    }

    /// `y*(x) = Ā⁻¹(B̄x + b̄)`.
    pub fn y_star(&self, x: &Vector) -> Vector {
        let rhs = &self.b_bar.matvec(x) + &self.b0_bar;
        spd_solve_vec(&self.a_bar, &rhs).expect("Ā is SPD")
    }

    /// `argmin_y (1/n) Σ g_i(x_i, y)` for per-agent upper variables.
    pub fn y_tilde(&self, xs: &[Vector]) -> Vector {
        let rhs = Vector::mean_of(
            &self.agents.iter().zip(xs).map(|(a, x)| &a.b.matvec(x) + &a.b0).collect::<Vec<_>>(),
        );
        spd_solve_vec(&self.a_bar, &rhs).expect("Ā is SPD")
    }

    pub fn phi(&self, x: &Vector) -> f64 {
        let y = self.y_star(x);
        let total: f64 = self
            .agents
            .iter()
            .map(|a| 0.5 * (x - &a.c).norm_squared() + 0.5 * (&y - &a.d).norm_squared())
            .sum();
        total / self.agents.len() as f64
    }

    /// `∇Φ_i(x) = (x − c_i) + B̄ᵀĀ⁻¹(y*(x) − d_i)` for every agent.
    pub fn grad_phi_per_agent(&self, x: &Vector) -> Vec<Vector> {
        let y = self.y_star(x);
        let rhs = Matrix::from_columns(&self.agents.iter().map(|a| &y - &a.d).collect::<Vec<_>>());
        let sol = spd_solve(&self.a_bar, &rhs).expect("Ā is SPD");
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| &(x - &a.c) + &self.b_bar.tr_matvec(&sol.column(i)))
            .collect()
    }

    pub fn grad_phi(&self, x: &Vector) -> Vector {
        Vector::mean_of(&self.grad_phi_per_agent(x))
    }

    pub fn a_bar(&self) -> &Matrix {
        &self.a_bar
    }

    /// Exact minimizer of `Φ`: `Φ` is a strongly convex quadratic here.
    pub fn minimizer(&self) -> Vector {
        // ∇Φ(x) = x − c̄ + Mᵀ(Mx + m − d̄) with M = Ā⁻¹B̄, m = Ā⁻¹b̄
        let m = spd_solve(&self.a_bar, &self.b_bar).expect("Ā is SPD");
        let m0 = spd_solve_vec(&self.a_bar, &self.b0_bar).expect("Ā is SPD");
        let c_bar = Vector::mean_of(&self.agents.iter().map(|a| a.c.clone()).collect::<Vec<_>>());
        let d_bar = Vector::mean_of(&self.agents.iter().map(|a| a.d.clone()).collect::<Vec<_>>());
        let p = self.b_bar.cols();
        let mut lhs = m.transpose().matmul(&m);
        lhs.axpy(1.0, &Matrix::identity(p));
        let rhs = &c_bar - &m.tr_matvec(&(&m0 - &d_bar));
        spd_solve_vec(&lhs, &rhs).expect("I + MᵀM is SPD")
    }
}
