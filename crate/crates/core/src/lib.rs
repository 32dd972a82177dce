//! Unsupervised graph domain adaptation for node classification.
//!
//! A labeled source graph and an unlabeled target graph are encoded with shared
//! weights: the source through a spectral augmentation that blends in the
//! target's Laplacian-frequency coefficients, the target through a dual
//! local/global GNN with attention fusion. Training combines source
//! cross-entropy, target entropy and a gradient-reversed domain classifier.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which the training loop, I/O and the
//! stability verifier use.

pub mod adversarial;
pub mod autodiff;
pub mod data_io;
pub mod dual_gnn;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod optim;
pub mod scalar;
pub mod spectral;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Negative-side slope of every LeakyReLU in the model.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

pub type Matrix = matrix::Matrix<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Tensor = autodiff::Tensor<f64>;
pub type AdamState = optim::AdamState<f64>;
pub type Graph = graph::Graph<f64>;
pub type DomainPair = graph::DomainPair<f64>;
pub type SpectralBasis = spectral::SpectralBasis<f64>;
pub type FilterBank = spectral::FilterBank<f64>;
pub type SpectralMixer = spectral::SpectralMixer<f64>;
pub type PpmiCache = dual_gnn::PpmiCache<f64>;
pub type EncoderParams = dual_gnn::EncoderParams<f64>;
pub type Heads = adversarial::Heads<f64>;

pub use adversarial::LossBreakdown;
pub use autodiff::Var;
pub use spectral::SpectralMixConfig;

/// Mixes a base seed with a path of tags (epoch, layer, ...) into an
/// independent 64-bit seed (SplitMix64 finalizer per step).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
