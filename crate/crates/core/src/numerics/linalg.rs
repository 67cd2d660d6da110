//! Direct dense solvers: Cholesky-based SPD solves and symmetric eigenvalues.

use super::{DMatrix, DVector, Real};
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: DMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`, rejecting asymmetric input (`|a - aᵀ|_max > 1e-9 |a|_max`)
    /// and non-positive pivots.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("cholesky", "square matrix", format!("{:?}", a.shape())));
        }
        let scale = a.max_abs();
        let asym = a.asymmetry();
        if asym > T::lit(1e-9) * scale {
            return Err(Error::NotSpd(format!(
                "asymmetry {:e} exceeds tolerance",
                asym.to_f64().unwrap_or(f64::NAN)
            )));
        }
        let n = a.rows();
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(Error::NotSpd(format!(
                    "non-positive pivot {:e} at column {j}",
                    d.to_f64().unwrap_or(f64::NAN)
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                // symmetric part only; the lower triangle of `a` is trusted
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s = s - self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            out.set_column(j, &self.solve_vec(&b.column(j)));
        }
        out
    }
}

/// Solves `a X = b` for symmetric positive definite `a` (q×q) and `b` (q×m).
pub fn spd_solve<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if b.rows() != a.rows() {
        return Err(Error::dims("spd_solve", a.rows(), b.rows()));
    }
    Ok(Cholesky::new(a)?.solve(b))
}

/// Vector right-hand-side form of [`spd_solve`].
pub fn spd_solve_vec<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>> {
    if b.len() != a.rows() {
        return Err(Error::dims("spd_solve", a.rows(), b.len()));
    }
    Ok(Cholesky::new(a)?.solve_vec(b))
}

/// Eigenvalues of a symmetric matrix in descending order (cyclic Jacobi).
pub fn sym_eigenvalues<T: Real>(a: &DMatrix<T>) -> Result<Vec<T>> {
    if !a.is_square() {
        return Err(Error::dims("sym_eigenvalues", "square matrix", format!("{:?}", a.shape())));
    }
    let asym = a.asymmetry();
    if asym > T::lit(1e-9) {
        return Err(Error::NotSymmetric { asymmetry: asym.to_f64().unwrap_or(f64::NAN) });
    }
    let n = a.rows();
    // symmetrize so rotations act on an exactly symmetric matrix
    let mut m = DMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)]) * T::lit(0.5));
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag = diag + m[(i, i)] * m[(i, i)];
            for j in (i + 1)..n {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        if off <= eps * eps * (diag + off) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
    Ok(eig)
}

/// Spectral norm of a symmetric matrix, `max |λ|`.
pub fn sym_spectral_norm<T: Real>(a: &DMatrix<T>) -> Result<T> {
    Ok(sym_eigenvalues(a)?.into_iter().fold(T::zero(), |m, l| m.max(l.abs())))
}

/// Spectral norm of a general matrix via the eigenvalues of `aᵀa`.
pub fn spectral_norm<T: Real>(a: &DMatrix<T>) -> T {
    let gram = if a.rows() >= a.cols() {
        a.transpose().matmul(a)
    } else {
        a.matmul(&a.transpose())
    };
    sym_eigenvalues(&gram)
        .map(|e| e.first().copied().unwrap_or(T::zero()).max(T::zero()).sqrt())
        .expect("Gram matrix is symmetric by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = m.transpose().matmul(&m);
        a.axpy(1.0, &DMatrix::identity(n));
        a
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = DMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![7.0, 0.0]]);
        assert_eq!(spd_solve(&DMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = DMatrix::<f64>::from_diagonal(&[2.0, 4.0]);
        let x = spd_solve_vec(&a, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15, "{x:?}");
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(6, &mut rng);
        let b = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = spd_solve(&a, &b).unwrap();
        let resid = (&a.matmul(&x) - &b).frobenius_norm();
        assert!(resid <= 1e-10 * (1.0 + b.frobenius_norm()), "residual {resid}");
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let indefinite = DMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(Cholesky::new(&indefinite), Err(Error::NotSpd(_))));
        let asym = DMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]);
        assert!(matches!(Cholesky::new(&asym), Err(Error::NotSpd(_))));
        assert!(matches!(sym_eigenvalues(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        assert_eq!(sym_eigenvalues(&DMatrix::<f64>::identity(2)).unwrap(), vec![1.0, 1.0]);
        assert_eq!(sym_eigenvalues(&DMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn circulant_ring_eigenvalues() {
        // w_ii = a, neighbours (1-a)/2; spectrum a + (1-a) cos(2πj/n)
        let (n, a) = (4usize, 0.3);
        let w = DMatrix::from_fn(n, n, |i, j| {
            let d = (i + n - j) % n;
            if d == 0 {
                a
            } else if d == 1 || d == n - 1 {
                (1.0 - a) / 2.0
            } else {
                0.0
            }
        });
        let mut expected: Vec<f64> = (0..n)
            .map(|j| a + (1.0 - a) * (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos())
            .collect();
        expected.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let got = sym_eigenvalues(&w).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-8, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn eigenvalue_reconstruction_via_trace_and_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(8, &mut rng);
        let eig = sym_eigenvalues(&a).unwrap();
        let trace: f64 = (0..8).map(|i| a[(i, i)]).sum();
        let fro2 = a.frobenius_norm().powi(2);
        assert!((eig.iter().sum::<f64>() - trace).abs() < 1e-9);
        assert!((eig.iter().map(|l| l * l).sum::<f64>() - fro2).abs() < 1e-8 * fro2);
        assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn works_in_single_precision() {
        let a = DMatrix::<f32>::from_diagonal(&[4.0, 1.0]);
        let x = spd_solve_vec(&a, &DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-6 && (x[1] - 3.0).abs() < 1e-6);
    }
}
