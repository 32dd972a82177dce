use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// Orthonormal eigenvectors (as columns) and ascending eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis<T> {
    vectors: Matrix<T>,
    values: Vec<T>,
}

impl<T: Scalar> SpectralBasis<T> {
    /// Reassembles a basis from stored parts; only shapes and ordering are checked.
    pub fn from_parts(vectors: Matrix<T>, values: Vec<T>) -> Result<Self> {
        if vectors.shape() != (values.len(), values.len()) {
            return Err(Error::contract(format!(
                "{} eigenvalues for a {:?} eigenvector matrix",
                values.len(),
                vectors.shape()
            )));
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::contract("eigenvalues must be sorted ascending"));
        }
        Ok(Self { vectors, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `U`, one eigenvector per column.
    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    /// Eigenvalues in nondecreasing order.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Graph Fourier transform `Uᵀx`.
    pub fn gft(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.rows() != self.n() {
            return Err(Error::Dimension {
                op: "gft",
                left: self.vectors.shape(),
                right: x.shape(),
            });
        }
        Ok(self.vectors.t_matmul_unchecked(x))
    }

    /// Inverse transform `Uz`.
    pub fn inverse_gft(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.vectors.matmul(z)
    }

    /// `U · diag(λ) · Uᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        self.vectors
            .scale_columns(&self.values)
            .matmul_t_unchecked(&self.vectors)
    }

    /// The `k` lowest-frequency eigenvectors.
    pub fn leading_vectors(&self, k: usize) -> Matrix<T> {
        self.vectors.leading_columns(k)
    }

    /// `U_k · diag(response) · U_kᵀ` for `k = response.len()`.
    pub fn filter_operator(&self, response: &[T]) -> Matrix<T> {
        let uk = self.leading_vectors(response.len());
        uk.scale_columns(response).matmul_t_unchecked(&uk)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi sweeps.
///
/// Sweeps visit `(p, q)` pairs in row-major order until the off-diagonal
/// Frobenius norm drops below 1e-12 (or the type's own rounding floor for
/// narrower floats), for at most 100 sweeps. Eigenpairs are sorted by
/// ascending eigenvalue and each eigenvector is signed so that its first
/// largest-magnitude component is nonnegative; the output is a deterministic
/// function of the input.
pub fn eig_sym<T: Scalar>(a: &Matrix<T>) -> Result<SpectralBasis<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::contract(format!(
            "eig_sym needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry().unwrap_or(T::zero());
    if asym > T::lit(SYMMETRY_TOL) {
        return Err(Error::contract(format!(
            "eig_sym needs a symmetric matrix; max |a_ij - a_ji| = {asym:e}"
        )));
    }
    // Symmetrize so rounding in the input does not leak into the rotations.
    let mut m = Matrix::from_fn(n, n, |i, j| (a.get(i, j) + a.get(j, i)) * T::lit(0.5));
    let mut v = Matrix::identity(n);

    let tol = T::lit(OFF_DIAGONAL_TOL).max(T::epsilon() * m.frobenius_norm() * T::lit(4.0));
    let mut converged = n < 2;
    let mut off = T::zero();
    for _ in 0..=MAX_SWEEPS {
        off = off_diagonal_norm(&m);
        if off <= tol {
            converged = true;
            break;
        }
        sweep(&mut m, &mut v);
    }
    if !converged {
        return Err(Error::numeric(format!(
            "Jacobi eigensolver did not converge after {MAX_SWEEPS} sweeps; off-diagonal norm {off:e}"
        )));
    }

    let diag = m.diag();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));

    let values: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    for c in 0..n {
        let mut pivot = 0;
        let mut best = T::neg_infinity();
        for r in 0..n {
            let mag = vectors.get(r, c).abs();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        if vectors.get(pivot, c) < T::zero() {
            for r in 0..n {
                let x = vectors.get(r, c);
                vectors.set(r, c, -x);
            }
        }
    }
    Ok(SpectralBasis { vectors, values })
}

fn off_diagonal_norm<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let x = m.get(i, j);
                acc += x * x;
            }
        }
    }
    acc.sqrt()
}

fn sweep<T: Scalar>(m: &mut Matrix<T>, v: &mut Matrix<T>) {
    let n = m.rows();
    for p in 0..n {
        for q in (p + 1)..n {
            let apq = m.get(p, q);
            if apq == T::zero() {
                continue;
            }
            let app = m.get(p, p);
            let aqq = m.get(q, q);
            let theta = (aqq - app) / (T::lit(2.0) * apq);
            let t = if theta.is_infinite() {
                T::zero()
            } else {
                theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt())
            };
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;

            for k in 0..n {
                let mkp = m.get(k, p);
                let mkq = m.get(k, q);
                m.set(k, p, c * mkp - s * mkq);
                m.set(k, q, s * mkp + c * mkq);
            }
            for k in 0..n {
                let mpk = m.get(p, k);
                let mqk = m.get(q, k);
                m.set(p, k, c * mpk - s * mqk);
                m.set(q, k, s * mpk + c * mqk);
            }
            m.set(p, q, T::zero());
            m.set(q, p, T::zero());

            for k in 0..n {
                let vkp = v.get(k, p);
                let vkq = v.get(k, q);
                v.set(k, p, c * vkp - s * vkq);
                v.set(k, q, s * vkp + c * vkq);
            }
        }
    }
}
