use crate::error::{Error, Result};
use crate::graph::{DomainPair, Graph};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::{laplacian_basis, SpectralBasis};

/// Spectral signature of one class.
///
/// The node signal is `X · x̄_c`, each node's features projected onto the mean
/// feature vector of class `c`. The signature is the magnitude of its graph
/// Fourier coefficients, scaled to unit L2 norm (length `n`, ordered by
/// ascending eigenvalue).
pub fn category_signature<T: Scalar>(g: &Graph<T>, basis: &SpectralBasis<T>, class_id: usize) -> Result<Vec<T>> {
    let labels = g.require_labels("category_signature")?;
    if basis.n() != g.num_nodes() {
        return Err(Error::contract("spectral basis does not match the graph size"));
    }
    let x = g.features();
    let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class_id).collect();
    if members.is_empty() {
        return Err(Error::contract(format!("class {class_id} has no nodes")));
    }
    let count = T::from_usize(members.len()).unwrap();
    let mut mean = vec![T::zero(); x.cols()];
    for &i in &members {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let signal = x.matmul(&Matrix::column(&mean))?;
    let coeffs = basis.gft(&signal)?;
    let mags: Vec<T> = coeffs.data().iter().map(|v| v.abs()).collect();
    let norm = mags.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm <= T::epsilon() {
        return Err(Error::contract(format!(
            "class {class_id} has a zero-norm spectral signature"
        )));
    }
    Ok(mags.into_iter().map(|v| v / norm).collect())
}

/// Piecewise-linear resampling of `values` (indexed by rank) onto `len` evenly spaced points.
pub fn resample_linear<T: Scalar>(values: &[T], len: usize) -> Vec<T> {
    let n = values.len();
    if n == 0 || len == 0 {
        return Vec::new();
    }
    if len == 1 || n == 1 {
        return vec![values[0]; len];
    }
    (0..len)
        .map(|i| {
            let pos = i as f64 * (n - 1) as f64 / (len - 1) as f64;
            let lo = (pos.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let frac = T::lit(pos - lo as f64);
            values[lo] + (values[hi] - values[lo]) * frac
        })
        .collect()
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = T::from_usize(a.len().max(1)).unwrap();
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    if denom <= T::zero() {
        T::zero()
    } else {
        sab / denom
    }
}

/// `C×C` matrix whose `(i, j)` entry correlates the source class-`i` signature
/// with the target class-`j` signature, both resampled to `min(n_s, n_t)` points.
pub fn cross_domain_signature_correlation<T: Scalar>(pair: &DomainPair<T>) -> Result<Matrix<T>> {
    let bs = laplacian_basis(&pair.source)?;
    let bt = laplacian_basis(&pair.target)?;
    cross_domain_signature_correlation_with(pair, &bs, &bt)
}

/// As [`cross_domain_signature_correlation`], reusing precomputed bases.
pub fn cross_domain_signature_correlation_with<T: Scalar>(
    pair: &DomainPair<T>,
    source_basis: &SpectralBasis<T>,
    target_basis: &SpectralBasis<T>,
) -> Result<Matrix<T>> {
    pair.target.require_labels("cross-domain signature correlation")?;
    let c = pair.num_classes();
    let len = pair.source.num_nodes().min(pair.target.num_nodes());
    let src = class_signatures(&pair.source, source_basis, len)?;
    let tgt = class_signatures(&pair.target, target_basis, len)?;
    Ok(Matrix::from_fn(c, c, |i, j| pearson(&src[i], &tgt[j])))
}

/// Every class signature of `g`, resampled to `len` points.
pub fn class_signatures<T: Scalar>(g: &Graph<T>, basis: &SpectralBasis<T>, len: usize) -> Result<Vec<Vec<T>>> {
    (0..g.num_classes())
        .map(|c| category_signature(g, basis, c).map(|s| resample_linear(&s, len)))
        .collect()
}
