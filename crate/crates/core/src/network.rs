//! Mixing matrices of the communication graph.
//!
//! A [`WeightMatrix`] is symmetric, doubly stochastic and contractive on the
//! consensus complement: `rho = max(|λ₂|, |λₙ|) < 1`. One gossip round maps the
//! agents' local vectors `x_i` to `Σ_j w_ij x_j`; the sum always runs over
//! `j` in ascending index order so results do not depend on scheduling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{sym_eigenvalues, sym_spectral_norm, DMatrix, DVector, Real};

/// Tolerance for symmetry and row/column sums at construction.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// `rho` at or above `1 - CONTRACTIVE_MARGIN` is rejected.
pub const CONTRACTIVE_MARGIN: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct WeightMatrix<T> {
    w: DMatrix<T>,
    rho: T,
    lambda_min: T,
    /// Nonzero weights of each row, ascending column index.
    neighbors: Vec<Vec<(usize, T)>>,
}

impl<T: Real> WeightMatrix<T> {
    /// Ring with self weight `a` and `(1-a)/2` to each of the two neighbours.
    pub fn ring(n: usize, a: T) -> Result<Self> {
        if n < 3 {
            return Err(Error::BadParameter(format!("ring needs n >= 3 agents, got {n}")));
        }
        if !(a > T::zero() && a < T::one()) {
            return Err(Error::BadParameter(format!("ring weight a must lie in (0,1), got {a}")));
        }
        let side = (T::one() - a) / T::lit(2.0);
        let w = DMatrix::from_fn(n, n, |i, j| {
            let d = (i + n - j) % n;
            if d == 0 {
                a
            } else if d == 1 || d == n - 1 {
                side
            } else {
                T::zero()
            }
        });
        Self::from_matrix(w)
    }

    /// Validates an arbitrary mixing matrix.
    pub fn from_matrix(w: DMatrix<T>) -> Result<Self> {
        if !w.is_square() || w.rows() == 0 {
            return Err(Error::dims("weight matrix", "non-empty square matrix", format!("{:?}", w.shape())));
        }
        let n = w.rows();
        let tol = T::lit(CONSTRUCTION_TOL);
        let asym = w.asymmetry();
        if asym > tol {
            return Err(Error::NotSymmetric { asymmetry: asym.to_f64().unwrap_or(f64::NAN) });
        }
        for i in 0..n {
            if let Some(j) = (0..n).find(|&j| !(w[(i, j)] >= T::zero())) {
                return Err(Error::NotDoublyStochastic(format!("negative entry at ({i},{j})")));
            }
            let row: T = w.row(i).iter().copied().sum();
            let col: T = (0..n).map(|k| w[(k, i)]).sum();
            if (row - T::one()).abs() > tol || (col - T::one()).abs() > tol {
                return Err(Error::NotDoublyStochastic(format!(
                    "row/column {i} sums to {row}/{col}, expected 1"
                )));
            }
        }
        let eig = sym_eigenvalues(&w)?;
        let rho = eig.iter().skip(1).fold(T::zero(), |m, l| m.max(l.abs()));
        let lambda_min = *eig.last().expect("n >= 1");
        if rho >= T::one() - T::lit(CONTRACTIVE_MARGIN) {
            return Err(Error::NotContractive { rho: rho.to_f64().unwrap_or(f64::NAN) });
        }
        let neighbors = (0..n)
            .map(|i| {
                w.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != T::zero())
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Ok(Self { w, rho, lambda_min, neighbors })
    }

    /// Exact averaging `J_n / n`.
    pub fn complete(n: usize) -> Result<Self> {
        let v = T::one() / T::count(n);
        Self::from_matrix(DMatrix::from_fn(n, n, |_, _| v))
    }

    /// Parses `n` lines of `n` comma-separated floats.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: format!("`{}`: {e}", tok.trim()),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("expected {first} columns, found {}", row.len()),
                    });
                }
            }
            rows.push(row);
        }
        Self::from_matrix(DMatrix::from_rows(&rows))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.w.rows()
    }

    #[inline]
    pub fn rho(&self) -> T {
        self.rho
    }

    /// Smallest eigenvalue of `W`.
    pub fn lambda_min(&self) -> T {
        self.lambda_min
    }

    /// `(1 + λ_min)² / 2`: gradient tracking `Z' = WZ − γY` with a common
    /// local Hessian `h` is stable iff `γh` stays below this (for `n > 1`).
    pub fn tracking_stability_bound(&self) -> T {
        if self.n() == 1 {
            return T::lit(2.0);
        }
        let s = T::one() + self.lambda_min;
        s * s / T::lit(2.0)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.w
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, T)] {
        &self.neighbors[i]
    }

    /// `columns · W` for a p×n matrix whose column i belongs to agent i.
    pub fn mix(&self, columns: &DMatrix<T>) -> Result<DMatrix<T>> {
        if columns.cols() != self.n() {
            return Err(Error::dims("mix", self.n(), columns.cols()));
        }
        let cols = columns.columns();
        Ok(DMatrix::from_columns(&self.mix_vectors(&cols)))
    }

    /// `Σ_j w_ij items[j]` for agent `i`.
    pub fn mix_vector_at(&self, i: usize, items: &[DVector<T>]) -> DVector<T> {
        debug_assert_eq!(items.len(), self.n());
        let mut out = DVector::zeros(items[i].len());
        for &(j, wij) in &self.neighbors[i] {
            out.axpy(wij, &items[j]);
        }
        out
    }

    pub fn mix_vectors(&self, items: &[DVector<T>]) -> Vec<DVector<T>> {
        (0..self.n()).map(|i| self.mix_vector_at(i, items)).collect()
    }

    /// `Σ_j w_ij items[j]` for matrix-valued agent variables.
    pub fn mix_matrix_at(&self, i: usize, items: &[DMatrix<T>]) -> DMatrix<T> {
        debug_assert_eq!(items.len(), self.n());
        let (r, c) = items[i].shape();
        let mut out = DMatrix::zeros(r, c);
        for &(j, wij) in &self.neighbors[i] {
            out.axpy(wij, &items[j]);
        }
        out
    }

    /// Spectral norms `‖W^k − J_n/n‖₂` for `k = 1..=k_max`.
    pub fn mixing_contraction_check(&self, k_max: usize) -> Vec<T> {
        let n = self.n();
        let avg = T::one() / T::count(n);
        let mut power = DMatrix::identity(n);
        let mut out = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            power = power.matmul(&self.w);
            let dev = DMatrix::from_fn(n, n, |i, j| {
                (power[(i, j)] + power[(j, i)]) * T::lit(0.5) - avg
            });
            out.push(sym_spectral_norm(&dev).expect("symmetrized by construction"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ring_of_four_half() {
        let w = WeightMatrix::<f64>::ring(4, 0.5).unwrap();
        for i in 0..4 {
            let mut row = w.matrix().row(i).to_vec();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(row, vec![0.0, 0.25, 0.25, 0.5]);
        }
        assert!((w.rho() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ring_smallest_eigenvalue() {
        // ring eigenvalues are a + (1 − a) cos(2πk/n)
        for (n, a) in [(5usize, 0.4), (5, 0.5), (20, 0.4), (8, 0.3)] {
            let w = WeightMatrix::<f64>::ring(n, a).unwrap();
            let expected = (0..n)
                .map(|k| a + (1.0 - a) * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .fold(f64::INFINITY, f64::min);
            assert!((w.lambda_min() - expected).abs() < 1e-12);
            assert!((w.tracking_stability_bound() - (1.0 + expected).powi(2) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_of_three() {
        let w = WeightMatrix::<f64>::ring(3, 0.4).unwrap();
        for i in 0..3 {
            let row = w.matrix().row(i);
            assert!((row[i] - 0.4).abs() < 1e-15);
            assert!(row.iter().enumerate().all(|(j, &v)| j == i || (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn ring_parameter_guards() {
        assert!(matches!(WeightMatrix::<f64>::ring(2, 0.5), Err(Error::BadParameter(_))));
        assert!(matches!(WeightMatrix::<f64>::ring(5, 1.0), Err(Error::BadParameter(_))));
        assert!(matches!(WeightMatrix::<f64>::ring(5, 0.0), Err(Error::BadParameter(_))));
        // near-identity is still accepted, with rho close to one
        let w = WeightMatrix::<f64>::ring(6, 1.0 - 1e-6).unwrap();
        assert!(w.rho() > 0.999_99);
    }

    #[test]
    fn from_matrix_validation() {
        assert!(matches!(
            WeightMatrix::<f64>::from_matrix(DMatrix::identity(3)),
            Err(Error::NotContractive { .. })
        ));
        let c = WeightMatrix::<f64>::complete(5).unwrap();
        assert!(c.rho().abs() < 1e-12);
        assert!(WeightMatrix::<f64>::ring(20, 0.33).is_ok());
        let not_stochastic = DMatrix::from_rows(&[vec![0.5, 0.4], vec![0.4, 0.5]]);
        assert!(matches!(WeightMatrix::from_matrix(not_stochastic), Err(Error::NotDoublyStochastic(_))));
        let asym = DMatrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]]);
        assert!(matches!(WeightMatrix::from_matrix(asym), Err(Error::NotSymmetric { .. })));
        let single = WeightMatrix::<f64>::from_matrix(DMatrix::identity(1)).unwrap();
        assert_eq!(single.rho(), 0.0);
    }

    #[test]
    fn csv_loading() {
        let w = WeightMatrix::<f64>::from_csv_str("0.5,0.25,0,0.25\n0.25,0.5,0.25,0\n0,0.25,0.5,0.25\n0.25,0,0.25,0.5\n")
            .unwrap();
        assert!((w.rho() - 0.5).abs() < 1e-12);
        assert!(matches!(WeightMatrix::<f64>::from_csv_str("1,x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(WeightMatrix::<f64>::from_csv_str("1,0\n1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn mixing_fixed_points() {
        let w = WeightMatrix::<f64>::ring(5, 0.4).unwrap();
        let c = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let same = vec![c.clone(); 5];
        for out in w.mix_vectors(&same) {
            assert!(out.distance(&c) < 1e-15);
        }
        let avg = WeightMatrix::<f64>::complete(4).unwrap();
        let cols = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let mixed = avg.mix(&cols).unwrap();
        for i in 0..3 {
            let mean: f64 = cols.row(i).iter().sum::<f64>() / 4.0;
            assert!(mixed.row(i).iter().all(|&v| (v - mean).abs() < 1e-13));
        }
    }

    #[test]
    fn mix_matches_dense_product() {
        let w = WeightMatrix::<f64>::ring(4, 0.5).unwrap();
        let x = DMatrix::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0],
            vec![-1.0, 0.5, 0.0, 2.0],
            vec![0.0, 0.0, 7.0, -3.0],
        ]);
        let dense = x.matmul(w.matrix());
        let mixed = w.mix(&x).unwrap();
        assert!((&dense - &mixed).max_abs() < 1e-15);
        // column 0 by hand: 0.5*x0 + 0.25*x1 + 0.25*x3
        assert_eq!(mixed[(0, 0)], 0.5 * 1.0 + 0.25 * 2.0 + 0.25 * 4.0);
        assert!(matches!(w.mix(&DMatrix::zeros(3, 5)), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn contraction_exact_for_ring_of_four() {
        let w = WeightMatrix::<f64>::ring(4, 0.5).unwrap();
        let norms = w.mixing_contraction_check(2);
        assert!((norms[0] - 0.5).abs() < 1e-12);
        assert!((norms[1] - 0.25).abs() < 1e-12);
        let c = WeightMatrix::<f64>::complete(6).unwrap();
        assert!(c.mixing_contraction_check(3).iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn contraction_ring_twenty_monotone() {
        let w = WeightMatrix::<f64>::ring(20, 0.4).unwrap();
        let norms = w.mixing_contraction_check(20);
        for (k, pair) in norms.windows(2).enumerate() {
            assert!(pair[1] <= pair[0] + 1e-12, "not monotone at k={}", k + 2);
        }
        for (k, &v) in norms.iter().enumerate() {
            assert!(v <= w.rho().powi(k as i32 + 1) + 1e-10);
        }
    }

    fn ring_rho_formula(n: usize, a: f64) -> f64 {
        (1..n)
            .map(|j| (a + (1.0 - a) * (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()).abs())
            .fold(0.0, f64::max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ring_rho_matches_circulant_formula(n in 3usize..40, a in 0.01f64..0.99) {
            let w = WeightMatrix::<f64>::ring(n, a).unwrap();
            prop_assert!((w.rho() - ring_rho_formula(n, a)).abs() < 1e-9);
            let eig = sym_eigenvalues(w.matrix()).unwrap();
            prop_assert!((eig[0] - 1.0).abs() < 1e-10);
            prop_assert!(eig.iter().all(|&l| l > -1.0 && l <= 1.0 + 1e-12));
            prop_assert!(eig[1] < 1.0 - 1e-10);
        }

        #[test]
        fn mixing_preserves_mean_and_contracts(
            n in 3usize..12,
            a in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = WeightMatrix::<f64>::ring(n, a).unwrap();
            let x = DMatrix::from_fn(3, n, |_, _| rng.random_range(-10.0..10.0));
            let mixed = w.mix(&x).unwrap();
            let mut dev_in = 0.0;
            let mut dev_out = 0.0;
            for r in 0..3 {
                let mean_in = x.row(r).iter().sum::<f64>() / n as f64;
                let mean_out = mixed.row(r).iter().sum::<f64>() / n as f64;
                prop_assert!((mean_in - mean_out).abs() <= 1e-13);
                dev_in += x.row(r).iter().map(|v| (v - mean_in).powi(2)).sum::<f64>();
                dev_out += mixed.row(r).iter().map(|v| (v - mean_out).powi(2)).sum::<f64>();
            }
            prop_assert!(dev_out.sqrt() <= w.rho() * dev_in.sqrt() + 1e-12);
        }
    }
}
