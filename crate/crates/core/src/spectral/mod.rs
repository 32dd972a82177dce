//! Laplacian spectra, graph Fourier transforms, filters and the cross-domain
//! spectral augmentation.

mod augment;
mod eig;
mod filter;
mod signature;

pub use augment::{leaky_relu, spectral_augment, SpectralMixConfig, SpectralMixer};
pub use eig::{eig_sym, SpectralBasis};
pub use filter::{FilterBank, Polynomial};
pub use signature::{
    category_signature, class_signatures, cross_domain_signature_correlation, cross_domain_signature_correlation_with,
    pearson, resample_linear,
};

use crate::error::Result;
use crate::graph::{normalized_laplacian, Graph};
use crate::scalar::Scalar;

/// Eigendecomposition of the graph's normalized Laplacian.
pub fn laplacian_basis<T: Scalar>(g: &Graph<T>) -> Result<SpectralBasis<T>> {
    eig_sym(&normalized_laplacian(g))
}
