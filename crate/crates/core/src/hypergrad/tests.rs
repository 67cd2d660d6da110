use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::jhip::jhip_target;
use crate::numerics::{spd_solve_vec, sym_eigenvalues};
use crate::problem::{BilevelProblem, QuadraticAgent, QuadraticSpec, SmoothnessMeta};

fn v(xs: &[f64]) -> Vector {
    Vector::from_slice(xs)
}

/// `g = ½·h·y² − xy`, `f = ½(x − c)² + ½(y − d)²`.
fn scalar_agent(h: f64, c: f64, d: f64, noise: f64) -> QuadraticAgent {
    QuadraticAgent {
        a: Matrix::from_rows(&[vec![h]]),
        b: Matrix::from_rows(&[vec![1.0]]),
        b0: v(&[0.0]),
        c: v(&[c]),
        d: v(&[d]),
        noise,
    }
}

fn homogeneous_problem(seed: u64) -> BilevelProblem {
    QuadraticSpec { n: 4, p: 3, q: 5, lower_spread: 0.0, upper_spread: 0.7, noise: 0.0, seed }.build()
}

fn l_h(agent: &dyn AgentOracles, x: &Vector, y: &Vector) -> f64 {
    sym_eigenvalues(&agent.hess_yy_g(x, y, &Sample::Full)).unwrap()[0]
}

#[test]
fn aid_scalar_example() {
    // ∇_y f = y − d = 1, H = 2, J = −1, ∇_x f = 0
    let ag = scalar_agent(2.0, 0.0, 0.0, 0.0);
    let est = estimate_aid(&ag, &v(&[0.0]), &v(&[1.0]), 1, &v(&[0.0])).unwrap();
    assert!((est.value[0] - 0.5).abs() < 1e-15);
    assert_eq!(est.aux, Aux::Cg(v(&[0.5])));
}

#[test]
fn aid_with_zero_upper_gradient_in_y_returns_grad_x() {
    let ag = scalar_agent(3.0, 0.4, 1.3, 0.0);
    let x = v(&[2.0]);
    for n in 1..4 {
        let est = estimate_aid(&ag, &x, &v(&[1.3]), n, &v(&[0.0])).unwrap();
        assert!((est.value[0] - 1.6).abs() < 1e-15);
    }
}

#[test]
fn aid_rejects_zero_steps() {
    let ag = scalar_agent(2.0, 0.0, 0.0, 0.0);
    assert!(matches!(estimate_aid(&ag, &v(&[0.0]), &v(&[1.0]), 0, &v(&[0.0])), Err(Error::BadParameter(_))));
}

#[test]
fn aid_matches_exact_hypergradient_at_y_star() {
    let prob = homogeneous_problem(3);
    let x = v(&[0.3, -0.8, 1.1]);
    let exact = prob.exact_hypergradient(&x, 1e-13).unwrap();
    for (i, a) in prob.agents().iter().enumerate() {
        let est = estimate_aid(a.as_ref(), &x, &exact.y_star, prob.q(), &Vector::zeros(prob.q())).unwrap();
        assert!(est.value.distance(&exact.per_agent[i]) < 1e-8, "agent {i}");
    }
}

#[test]
fn aid_error_decays_with_cg_envelope() {
    let spec = QuadraticSpec { n: 1, p: 4, q: 30, lower_spread: 0.0, upper_spread: 0.5, noise: 0.0, seed: 11 };
    let prob = spec.build();
    let a = prob.agent(0);
    let x = v(&[0.2, -0.1, 0.5, 0.9]);
    let mut y = prob.local_solve(0, &x, 1e-12).unwrap();
    y.axpy(1.0, &Vector::filled(prob.q(), 0.3));
    let h = a.hess_yy_g(&x, &y, &Sample::Full);
    let eig = sym_eigenvalues(&h).unwrap();
    let kappa = eig[0] / eig[eig.len() - 1];
    // exact estimate at this y; the envelope bounds the squared error
    let vstar = spd_solve_vec(&h, &a.grad_y_f(&x, &y, &Sample::Full)).unwrap();
    let mut target = a.grad_x_f(&x, &y, &Sample::Full);
    target.axpy(-1.0, &a.jac_xy_g_vp(&x, &y, &vstar, &Sample::Full));

    let pts: Vec<(f64, f64)> = (1..=prob.q())
        .map(|n| {
            let est = estimate_aid(a, &x, &y, n, &Vector::zeros(prob.q())).unwrap();
            (n as f64, est.value.distance(&target).powi(2))
        })
        .take_while(|&(_, e)| e > 1e-22)
        .map(|(n, e)| (n, e.ln()))
        .collect();
    assert!(pts.len() >= 4, "too few points above the floor: {pts:?}");
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let slope = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / pts.iter().map(|&(x, _)| (x - mx).powi(2)).sum::<f64>();
    let r = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let envelope = 2.0 * r.ln();
    assert!(slope <= envelope + 0.1 * envelope.abs(), "slope {slope} vs envelope {envelope} (kappa {kappa})");
}

/// Average of the fixed-depth estimates over `M' ∈ {0, …, M−1}`: the exact
/// conditional mean of the random-depth estimator.
fn neumann_exact_mean(ag: &dyn AgentOracles, x: &Vector, y: &Vector, m: usize, eps: f64, lh: f64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fixed: Vec<Vector> = (0..m)
        .map(|d| {
            let params = NeumannParams { m, epsilon: eps, l_h: lh, depth: NeumannDepth::Fixed(d), batch: 0 };
            estimate_neumann(ag, x, y, &params, &mut rng).unwrap().value
        })
        .collect();
    Vector::mean_of(&fixed)
}

#[test]
fn neumann_scalar_truncated_series() {
    // ∇_x f = 0, ∇_y f = 1, J = −1: the estimate equals the H⁻¹ estimate
    let ag = scalar_agent(2.0, 0.0, 0.0, 0.0);
    let (x, y) = (v(&[0.0]), v(&[1.0]));
    for m in [1usize, 2, 5, 10, 20] {
        let expected = 0.5 * (1.0 - 0.5f64.powi(m as i32));
        let mean = neumann_exact_mean(&ag, &x, &y, m, 0.25, 2.0);
        assert!((mean[0] - expected).abs() < 1e-15, "M = {m}");
        let params = NeumannParams { m, epsilon: 0.25, l_h: 2.0, depth: NeumannDepth::Series, batch: 0 };
        let series = estimate_neumann(&ag, &x, &y, &params, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((series.value[0] - expected).abs() < 1e-15);
        // bias to H⁻¹ = 0.5
        assert!(((0.5 - mean[0]) - 0.5 * 0.5f64.powi(m as i32)).abs() < 1e-15);
    }
}

#[test]
fn neumann_degenerate_product() {
    // H = 1/ε: every factor (1 − εH) vanishes, so only depth 0 survives, as εM
    let (eps, m) = (0.25, 6);
    let h = |r: &Vector, _: usize| r.scaled(1.0 / eps);
    assert!((neumann::random_depth_product(h, v(&[1.0]), 0, eps, m)[0] - eps * m as f64).abs() < 1e-15);
    for d in 1..=m {
        assert_eq!(neumann::random_depth_product(h, v(&[1.0]), d, eps, m)[0], 0.0);
    }
}

#[test]
fn neumann_rejects_large_epsilon() {
    let ag = scalar_agent(2.0, 0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for eps in [0.5, 0.7, 0.0, -0.1] {
        let params = NeumannParams::new(5, eps, 2.0);
        let r = estimate_neumann(&ag, &v(&[0.0]), &v(&[1.0]), &params, &mut rng);
        assert!(matches!(r, Err(Error::BadParameter(_))), "eps = {eps}");
    }
    let r = estimate_neumann(&ag, &v(&[0.0]), &v(&[1.0]), &NeumannParams::new(0, 0.1, 2.0), &mut rng);
    assert!(matches!(r, Err(Error::BadParameter(_))));
}

#[test]
fn neumann_monte_carlo_matches_truncated_series() {
    let a = Matrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.5, -0.2], vec![0.0, -0.2, 1.0]]);
    let ag = QuadraticAgent {
        a: a.clone(),
        b: Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.4, 0.2], vec![0.3, 1.0]]),
        b0: v(&[0.1, 0.0, -0.2]),
        c: v(&[0.5, -0.5]),
        d: v(&[1.0, -1.0, 0.5]),
        noise: 0.2,
    };
    let (x, y) = (v(&[0.3, -0.2]), v(&[0.4, 0.1, -0.6]));
    let (m, eps) = (8usize, 0.3);
    let full = Sample::Full;
    let series = neumann_truncated_series(&a, eps, m);
    let mut expected = ag.grad_x_f(&x, &y, &full);
    expected.axpy(-1.0, &ag.jac_xy_g(&x, &y, &full).matvec(&series.matvec(&ag.grad_y_f(&x, &y, &full))));

    let draws = 100_000;
    let params = NeumannParams { m, epsilon: eps, l_h: 2.5, depth: NeumannDepth::Random, batch: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut sum = Vector::zeros(2);
    let mut sum_sq = Vector::zeros(2);
    for _ in 0..draws {
        let e = estimate_neumann(&ag, &x, &y, &params, &mut rng).unwrap().value;
        sum += &e;
        sum_sq += &e.component_mul(&e);
    }
    let nd = draws as f64;
    for k in 0..2 {
        let mean = sum[k] / nd;
        let var = sum_sq[k] / nd - mean * mean;
        let se = (var / nd).sqrt();
        assert!((mean - expected[k]).abs() <= 3.0 * se, "component {k}: {mean} vs {expected:?}, se {se}");
    }
}

#[test]
fn neumann_bias_bounds() {
    let ag = scalar_agent(2.0, 0.0, 0.0, 0.0);
    let meta = SmoothnessMeta {
        mu: 2.0,
        l_f0: 1.0,
        l_f1: 1.0,
        l_g1: 2.0,
        l_g2: 0.0,
        sigma_f: 0.0,
        sigma_g1: 0.0,
        sigma_g2: 0.0,
        homogeneous_g: true,
    };
    let (x, y) = (v(&[0.0]), v(&[1.0]));
    // surrogate at (x, y): ∇_x f − J H⁻¹ ∇_y f = 0.5
    for m in [1usize, 5, 10, 20] {
        let ledger = constants(&meta, 0.25, 1, 1, m, 0.25).unwrap();
        let bias = (neumann_exact_mean(&ag, &x, &y, m, 0.25, 2.0)[0] - 0.5).abs();
        assert!(bias <= ledger.neumann_bias + 1e-15, "M = {m}: {bias} > {}", ledger.neumann_bias);
    }

    // quadratic instances with κ > 1 obey the (1 − εμ)^M form
    let prob = homogeneous_problem(5);
    let meta = *prob.meta();
    let x = v(&[0.1, 0.2, -0.3]);
    let y = prob.lower_level_solve_exact(&x, 1e-12).unwrap();
    let lh = meta.l();
    for m in [1usize, 5, 10, 20] {
        let eps = 0.5 / lh;
        let ledger = constants(&meta, 1.0 / lh, 1, 1, m, eps).unwrap();
        for (i, a) in prob.agents().iter().enumerate() {
            let mean = neumann_exact_mean(a.as_ref(), &x, &y, m, eps, lh);
            let exact = estimate_aid(a.as_ref(), &x, &y, prob.q(), &Vector::zeros(prob.q())).unwrap().value;
            let bias = mean.distance(&exact);
            assert!(bias <= ledger.neumann_bias_general, "agent {i}, M = {m}: {bias}");
        }
    }
}

#[test]
fn jhip_estimate_basics() {
    let prob = QuadraticSpec::new(4, 3, 5, 0.6, 8).build();
    let x = v(&[0.5, 0.1, -0.4]);
    let exact = prob.exact_hypergradient(&x, 1e-13).unwrap();
    let full = Sample::Full;
    let hs: Vec<Matrix> = prob.agents().iter().map(|a| a.hess_yy_g(&x, &exact.y_star, &full)).collect();
    let js: Vec<Matrix> = prob.agents().iter().map(|a| a.jac_xy_g(&x, &exact.y_star, &full)).collect();
    let zstar = jhip_target(&hs, &js).unwrap();
    let ests: Vec<Vector> = prob
        .agents()
        .iter()
        .map(|a| estimate_jhip(a.as_ref(), &x, &exact.y_star, &zstar, &full).unwrap().value)
        .collect();
    assert!(Vector::mean_of(&ests).distance(&exact.mean) < 1e-9);
    for (e, r) in ests.iter().zip(&exact.per_agent) {
        assert!(e.distance(r) < 1e-9);
    }

    let zero = Matrix::zeros(5, 3);
    let a = prob.agent(1);
    let est = estimate_jhip(a, &x, &exact.y_star, &zero, &full).unwrap();
    assert_eq!(est.value, a.grad_x_f(&x, &exact.y_star, &full));

    let bad = Matrix::zeros(3, 5);
    assert!(matches!(estimate_jhip(a, &x, &exact.y_star, &bad, &full), Err(Error::DimMismatch { .. })));
}

#[test]
fn all_branches_agree_under_homogeneity() {
    let prob = homogeneous_problem(21);
    let x = v(&[-0.2, 0.6, 0.3]);
    let exact = prob.exact_hypergradient(&x, 1e-13).unwrap();
    let y = &exact.y_star;
    let full = Sample::Full;
    let hs: Vec<Matrix> = prob.agents().iter().map(|a| a.hess_yy_g(&x, y, &full)).collect();
    let js: Vec<Matrix> = prob.agents().iter().map(|a| a.jac_xy_g(&x, y, &full)).collect();
    let zstar = jhip_target(&hs, &js).unwrap();
    let lh = l_h(prob.agent(0), &x, y);
    let neumann = NeumannParams { m: 4000, epsilon: 0.999 / lh, l_h: lh, depth: NeumannDepth::Series, batch: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    for (i, a) in prob.agents().iter().enumerate() {
        let a = a.as_ref();
        for homogeneous in [true, false] {
            for stochastic in [false, true] {
                let inputs = EstimateInputs {
                    agent: a,
                    x: &x,
                    y,
                    n_cg: prob.q(),
                    v0: None,
                    neumann: Some(neumann),
                    rng: Some(&mut rng),
                    jhip_z: Some(&zstar),
                    sample: Some(&full),
                };
                let est = estimate(Regime { stochastic, homogeneous }, inputs).unwrap();
                let err = est.value.distance(&exact.per_agent[i]);
                assert!(err < 1e-6, "agent {i}, stochastic {stochastic}, homogeneous {homogeneous}: {err}");
            }
        }
    }
}

#[test]
fn dispatch_table_and_missing_inputs() {
    let table = [
        ((false, true), Branch::Aid),
        ((true, true), Branch::Neumann),
        ((false, false), Branch::JhipDeterministic),
        ((true, false), Branch::JhipStochastic),
    ];
    for ((stochastic, homogeneous), branch) in table {
        assert_eq!(Regime { stochastic, homogeneous }.branch(), branch);
    }

    let ag = scalar_agent(2.0, 0.0, 0.0, 0.0);
    let (x, y) = (v(&[0.0]), v(&[1.0]));
    let bare = || EstimateInputs {
        agent: &ag,
        x: &x,
        y: &y,
        n_cg: 1,
        v0: None,
        neumann: None,
        rng: None,
        jhip_z: None,
        sample: None,
    };
    let est = estimate(Regime { stochastic: false, homogeneous: true }, bare()).unwrap();
    assert!((est.value[0] - 0.5).abs() < 1e-15);
    for (stochastic, homogeneous) in [(true, true), (false, false), (true, false)] {
        let r = estimate(Regime { stochastic, homogeneous }, bare());
        assert!(matches!(r, Err(Error::MissingInput(_))), "{stochastic} {homogeneous}");
    }
    let z = Matrix::zeros(1, 1);
    let r = estimate(Regime { stochastic: true, homogeneous: false }, EstimateInputs { jhip_z: Some(&z), ..bare() });
    assert!(matches!(r, Err(Error::MissingInput(_))));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = estimate(Regime { stochastic: true, homogeneous: true }, EstimateInputs { rng: Some(&mut rng), ..bare() });
    assert!(matches!(r, Err(Error::MissingInput(_))));
}

#[test]
fn neumann_draws_are_reproducible() {
    let prob = QuadraticSpec { n: 1, p: 2, q: 3, lower_spread: 0.0, upper_spread: 0.0, noise: 0.1, seed: 3 }.build();
    let ag: Arc<dyn AgentOracles> = prob.agents()[0].clone();
    let (x, y) = (v(&[0.1, 0.2]), v(&[0.0, 0.3, -0.1]));
    let params = NeumannParams::new(10, 0.1, prob.meta().l());
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..5).map(|_| estimate_neumann(ag.as_ref(), &x, &y, &params, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

fn meta_with(mu: f64, l: f64) -> SmoothnessMeta {
    SmoothnessMeta {
        mu,
        l_f0: 1.5,
        l_f1: l,
        l_g1: l,
        l_g2: 0.7,
        sigma_f: 0.0,
        sigma_g1: 0.0,
        sigma_g2: 0.0,
        homogeneous_g: true,
    }
}

#[test]
fn constants_examples() {
    // κ = 1: δ_κ^N = 0
    let c = constants(&meta_with(2.0, 2.0), 0.5, 3, 1, 4, 0.25).unwrap();
    assert_eq!(c.kappa, 1.0);
    for n in 1..6 {
        assert_eq!(c.delta_kappa_at(n), 0.0);
    }

    // η_y = 2/(μ+L): δ_y^T strictly decreasing to 0
    let meta = meta_with(1.0, 10.0);
    let eta = 2.0 / 11.0;
    let c = constants(&meta, eta, 1, 1, 1, 0.05).unwrap();
    let seq: Vec<f64> = (0..200).map(|t| c.delta_y_at(t)).collect();
    assert!(seq.windows(2).all(|w| w[1] < w[0]));
    assert!(seq[199] < 1e-10);
    let seq: Vec<f64> = (0..50).map(|n| c.delta_kappa_at(n)).collect();
    assert!(seq.windows(2).all(|w| w[1] < w[0]));

    // κ = 100: smallest N with δ_κ^N < 1/(8κ)
    let kappa: f64 = 100.0;
    let closed = (800f64.ln() / (2.0 * ((kappa.sqrt() + 1.0) / (kappa.sqrt() - 1.0)).ln())).ceil() as usize;
    assert_eq!(closed, 17);
    assert_eq!(preset_n(kappa).unwrap(), closed);

    assert!(matches!(constants(&meta, 0.0, 1, 1, 1, 0.05), Err(Error::BadParameter(_))));
    assert!(matches!(constants(&meta, 1.0, 1, 1, 1, 0.05), Err(Error::BadParameter(_))));
    assert!(matches!(constants(&meta, eta, 1, 1, 1, 0.1), Err(Error::BadParameter(_))));
    assert!(matches!(constants(&meta_with(-1.0, 1.0), eta, 1, 1, 1, 0.05), Err(Error::BadParameter(_))));
}

#[test]
fn presets_meet_contraction_targets() {
    for kappa in [1.0, 1.5, 4.0, 10.0, 100.0, 1e4] {
        let (mu, l) = (1.0, kappa);
        let eta = 2.0 / (mu + l);
        let t = preset_t(mu, l, eta).unwrap();
        let n = preset_n(kappa).unwrap();
        let c = constants(&meta_with(mu, l), eta, t, n, 1, 0.5 / l).unwrap();
        assert!(c.delta_y < 1.0 / 3.0);
        assert!(c.delta_kappa < 1.0 / (8.0 * kappa));
        let floor = (PRESET_LOG_FACTOR * kappa.ln()).ceil().max(1.0) as usize;
        assert!(t >= floor && n >= floor);
        // minimality above the log floor
        if n > floor {
            assert!(c.delta_kappa_at(n - 1) >= 1.0 / (8.0 * kappa));
        }
        if t > floor {
            assert!(c.delta_y_at(t - 1) >= 1.0 / 3.0);
        }
    }
    assert!(preset_n(0.5).is_err());
    assert!(preset_t(1.0, 2.0, 10.0).is_err());
}

#[test]
fn constants_monotone_in_l_and_mu() {
    let grid: [f64; 6] = [1.0, 1.5, 2.0, 4.0, 8.0, 20.0];
    let get = |mu: f64, l: f64| constants(&meta_with(mu, l), 1.0 / (mu + l), 1, 1, 1, 0.5 / l).unwrap();
    for &mu in &grid[..3] {
        for w in grid.windows(2) {
            let (lo, hi) = (w[0].max(mu), w[1].max(mu));
            let (a, b) = (get(mu, lo), get(mu, hi));
            assert!(b.l_phi >= a.l_phi && b.l_f >= a.l_f && b.gamma >= a.gamma);
        }
    }
    for &l in &grid[2..] {
        for w in grid.windows(2) {
            if w[1] > l {
                continue;
            }
            let (a, b) = (get(w[0], l), get(w[1], l));
            assert!(b.l_phi <= a.l_phi && b.l_f <= a.l_f && b.gamma <= a.gamma);
        }
    }
}

proptest! {
    #[test]
    fn ledger_positive_and_decreasing(mu in 0.1f64..5.0, ratio in 1.0f64..200.0, frac in 0.05f64..1.0, t in 0usize..50, n in 0usize..50) {
        let l = mu * ratio;
        let c = constants(&meta_with(mu, l), frac * 2.0 / (mu + l), t, n, 3, 0.5 / l).unwrap();
        for x in [c.l_phi, c.l_f, c.gamma, c.d1, c.d2, c.kappa] {
            prop_assert!(x > 0.0 && x.is_finite());
        }
        prop_assert!(c.delta_y > 0.0 && c.delta_y <= 1.0);
        prop_assert!(c.delta_y_at(t + 1) < c.delta_y || c.delta_y == 0.0);
        if ratio > 1.0 + 1e-9 {
            prop_assert!(c.delta_kappa_at(n + 1) < c.delta_kappa);
        }
        prop_assert!(c.neumann_bias <= c.neumann_bias_general);
    }
}
