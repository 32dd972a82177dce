use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DomainPair;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::LEAKY_RELU_SLOPE;

use super::{FilterBank, SpectralBasis};

/// Cross-domain mixing weights for the spectral augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMixConfig {
    /// Source share of the high-frequency coefficients.
    pub alpha: f64,
    /// Source share of the low-frequency coefficients.
    pub beta: f64,
    /// Number of lowest-frequency components mixed; `None` means `min(n_s, n_t)`.
    pub k: Option<usize>,
}

impl Default for SpectralMixConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.8,
            k: None,
        }
    }
}

impl SpectralMixConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Effective component count for a pair of graph sizes.
    pub fn resolve_k(&self, n_s: usize, n_t: usize) -> Result<usize> {
        self.validate()?;
        let cap = n_s.min(n_t);
        let k = self.k.unwrap_or(cap);
        if k == 0 || k > cap {
            return Err(Error::contract(format!(
                "k = {k} spectral components outside 1..={cap} (n_s = {n_s}, n_t = {n_t})"
            )));
        }
        Ok(k)
    }
}

/// Precomputed node-space operators realizing the spectral mix.
///
/// With `U_s`, `U_t` truncated to the `k` lowest frequencies,
///
/// * `own   = U_s · diag(α·g_H(Λ_s) + β·g_L(Λ_s)) · U_sᵀ`       (n_s × n_s)
/// * `cross = U_s · diag((1-α)·g_H(Λ_t) + (1-β)·g_L(Λ_t)) · U_tᵀ` (n_s × n_t)
/// * `target = U_t · diag(g(Λ_t)) · U_tᵀ`                           (n_t × n_t)
///
/// so the augmented source pre-activation is `own·X_s·W + cross·X_t·W`, and
/// `target` is the single-domain filter applied to the target side.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMixer<T> {
    pub own: Matrix<T>,
    pub cross: Matrix<T>,
    pub target: Matrix<T>,
    pub k: usize,
}

impl<T: Scalar> SpectralMixer<T> {
    pub fn new(
        source: &SpectralBasis<T>,
        target: &SpectralBasis<T>,
        cfg: &SpectralMixConfig,
        filters: &FilterBank<T>,
    ) -> Result<Self> {
        let k = cfg.resolve_k(source.n(), target.n())?;
        let (a, b) = (T::lit(cfg.alpha), T::lit(cfg.beta));
        let one = T::one();
        let own_resp: Vec<T> = source.values()[..k]
            .iter()
            .map(|&l| a * filters.high().eval(l) + b * filters.low().eval(l))
            .collect();
        let cross_resp: Vec<T> = target.values()[..k]
            .iter()
            .map(|&l| (one - a) * filters.high().eval(l) + (one - b) * filters.low().eval(l))
            .collect();
        let g = filters.combined();
        let target_resp: Vec<T> = target.values()[..k].iter().map(|&l| g.eval(l)).collect();

        let us = source.leading_vectors(k);
        let ut = target.leading_vectors(k);
        Ok(Self {
            own: source.filter_operator(&own_resp),
            cross: us.scale_columns(&cross_resp).matmul_t_unchecked(&ut),
            target: target.filter_operator(&target_resp),
            k,
        })
    }

    /// `own·hs + cross·ht`, both inputs already multiplied by the layer weight.
    pub fn mix(&self, hs: &Matrix<T>, ht: &Matrix<T>) -> Result<Matrix<T>> {
        self.own.matmul(hs)?.add(&self.cross.matmul(ht)?)
    }
}

pub fn leaky_relu<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let slope = T::lit(LEAKY_RELU_SLOPE);
    m.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Augmented source representation for one layer: the source's own spectral
/// coefficients blended with the target's, lifted back through the source basis
/// and passed through LeakyReLU(0.2).
pub fn spectral_augment<T: Scalar>(
    pair: &DomainPair<T>,
    bases: (&SpectralBasis<T>, &SpectralBasis<T>),
    weight: &Matrix<T>,
    cfg: &SpectralMixConfig,
    filters: &FilterBank<T>,
) -> Result<Matrix<T>> {
    let (xs, xt) = (pair.source.features(), pair.target.features());
    if xs.cols() != weight.rows() {
        return Err(Error::Dimension {
            op: "spectral_augment",
            left: xs.shape(),
            right: weight.shape(),
        });
    }
    if bases.0.n() != xs.rows() || bases.1.n() != xt.rows() {
        return Err(Error::contract("spectral bases do not match the graph sizes"));
    }
    let mixer = SpectralMixer::new(bases.0, bases.1, cfg, filters)?;
    let pre = mixer.mix(&xs.matmul(weight)?, &xt.matmul(weight)?)?;
    Ok(leaky_relu(&pre))
}
