//! Target-side dual encoder (local GCN + global PPMI branch with attention
//! fusion) and the source-side spectral encoder. All three branches share the
//! layer weights `W1`, `W2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{renormalized_propagation, Graph};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::spectral::SpectralMixer;
use crate::{derive_seed, LEAKY_RELU_SLOPE};

/// Row-stochastic one-step random-walk matrix; isolated nodes get a zero row.
pub fn transition_matrix<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let a = g.adjacency();
    let deg = g.degrees();
    Matrix::from_fn(a.rows(), a.cols(), |i, j| {
        if deg[i] > T::zero() {
            a.get(i, j) / deg[i]
        } else {
            T::zero()
        }
    })
}

/// Positive pointwise mutual information of a co-occurrence matrix.
///
/// With `m_ij = P_ij / ΣP` and marginals `m_i⋆`, `m_⋆j`,
/// `M_ij = max(ln(m_ij / (m_i⋆·m_⋆j)), 0)`; entries with `P_ij = 0` are 0.
pub fn ppmi_matrix<T: Scalar>(p: &Matrix<T>) -> Result<Matrix<T>> {
    if p.data().iter().any(|&v| v < T::zero()) {
        return Err(Error::contract("ppmi_matrix needs a nonnegative matrix"));
    }
    let total = p.sum();
    if total <= T::zero() {
        return Err(Error::contract("ppmi_matrix of an all-zero matrix is undefined"));
    }
    let rows: Vec<T> = p.row_sums().into_iter().map(|r| r / total).collect();
    let cols: Vec<T> = p.col_sums().into_iter().map(|c| c / total).collect();
    Ok(Matrix::from_fn(p.rows(), p.cols(), |i, j| {
        let pij = p.get(i, j);
        if pij <= T::zero() {
            return T::zero();
        }
        let m = pij / total;
        (m / (rows[i] * cols[j])).ln().max(T::zero())
    }))
}

/// `D^{-1/2} M D^{-1/2}` with `D_ii = Σ_j M_ij`; zero-degree rows stay zero.
pub fn symmetric_normalize<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let s: Vec<T> = m
        .row_sums()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d.sqrt() } else { T::zero() })
        .collect();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| s[i] * m.get(i, j) * s[j])
}

/// Random-walk statistics of the target graph, computed once before training.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmiCache<T> {
    pub transition: Matrix<T>,
    pub ppmi: Matrix<T>,
    pub normalized: Matrix<T>,
}

impl<T: Scalar> PpmiCache<T> {
    pub fn new(g: &Graph<T>) -> Result<Self> {
        let transition = transition_matrix(g);
        let ppmi = if transition.sum() > T::zero() {
            ppmi_matrix(&transition)?
        } else {
            // Edgeless graph: the global branch sees no neighbours at all.
            Matrix::zeros(g.num_nodes(), g.num_nodes())
        };
        let normalized = symmetric_normalize(&ppmi);
        Ok(Self {
            transition,
            ppmi,
            normalized,
        })
    }
}

/// Encoder weights shared by the local, global and spectral branches.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    /// First layer, `d × h1`.
    pub w1: Matrix<T>,
    /// Second layer, `h1 × h2`.
    pub w2: Matrix<T>,
    /// Attention projection, `h2 × h2`.
    pub att_proj: Matrix<T>,
    /// Score vector for the local branch, `2·h2 × 1`.
    pub att_local: Matrix<T>,
    /// Score vector for the global branch, `2·h2 × 1`.
    pub att_global: Matrix<T>,
}

/// Glorot-uniform initialization from a dedicated RNG stream.
pub fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-limit..limit)))
}

impl<T: Scalar> EncoderParams<T> {
    pub fn init(input_dim: usize, hidden: (usize, usize), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xE1C0]));
        let (h1, h2) = hidden;
        Self {
            w1: glorot(input_dim, h1, &mut rng),
            w2: glorot(h1, h2, &mut rng),
            att_proj: glorot(h2, h2, &mut rng),
            att_local: glorot(2 * h2, 1, &mut rng),
            att_global: glorot(2 * h2, 1, &mut rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn matrices(&self) -> [&Matrix<T>; 5] {
        [&self.w1, &self.w2, &self.att_proj, &self.att_local, &self.att_global]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix<T>; 5] {
        [
            &mut self.w1,
            &mut self.w2,
            &mut self.att_proj,
            &mut self.att_local,
            &mut self.att_global,
        ]
    }

    /// Records the weights on `tape` as trainable leaves.
    pub fn register(&self, tape: &mut Tape<T>) -> EncoderVars {
        EncoderVars {
            w1: tape.param(self.w1.clone()),
            w2: tape.param(self.w2.clone()),
            att_proj: tape.param(self.att_proj.clone()),
            att_local: tape.param(self.att_local.clone()),
            att_global: tape.param(self.att_global.clone()),
        }
    }
}

/// Tape handles for [`EncoderParams`], in the same order as `matrices()`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub w1: Var,
    pub w2: Var,
    pub att_proj: Var,
    pub att_local: Var,
    pub att_global: Var,
}

impl EncoderVars {
    pub fn all(&self) -> [Var; 5] {
        [self.w1, self.w2, self.att_proj, self.att_local, self.att_global]
    }
}

/// Dropout settings for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutCtx {
    pub rate: f64,
    /// Per-pass seed, already mixed with the epoch; layers derive their own from it.
    pub seed: u64,
}

impl DropoutCtx {
    pub fn seed_for(&self, layer: u64) -> u64 {
        derive_seed(self.seed, &[layer])
    }
}

/// How the target encoder combines its branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    /// Per-node attention between local and global branches.
    #[default]
    Attention,
    /// Local branch only (equivalent to pinning the attention weight at 1).
    LocalOnly,
}

/// `prop · z · w` with the cheaper association for the given widths.
fn propagate<T: Scalar>(tape: &mut Tape<T>, prop: Var, z: Var, w: Var) -> Result<Var> {
    let d_in = tape.value(z).cols();
    let d_out = tape.value(w).cols();
    if d_in <= d_out {
        let pz = tape.matmul(prop, z)?;
        tape.matmul(pz, w)
    } else {
        let zw = tape.matmul(z, w)?;
        tape.matmul(prop, zw)
    }
}

/// `LeakyReLU(prop · z · w)`, followed by dropout when `dropout` is given.
pub fn gcn_layer<T: Scalar>(
    tape: &mut Tape<T>,
    prop: Var,
    z: Var,
    w: Var,
    dropout: Option<(f64, u64)>,
) -> Result<Var> {
    let (n, n2) = tape.value(prop).shape();
    if n != n2 || tape.value(z).rows() != n {
        return Err(Error::Dimension {
            op: "gcn_layer",
            left: tape.value(prop).shape(),
            right: tape.value(z).shape(),
        });
    }
    let pre = propagate(tape, prop, z, w)?;
    let act = tape.leaky_relu(pre, T::lit(LEAKY_RELU_SLOPE));
    match dropout {
        Some((rate, seed)) => tape.dropout(act, rate, seed),
        None => Ok(act),
    }
}

/// Global-branch layer: [`gcn_layer`] with the normalized PPMI matrix as propagation.
pub fn global_layer<T: Scalar>(
    tape: &mut Tape<T>,
    m_hat: Var,
    z: Var,
    w: Var,
    dropout: Option<(f64, u64)>,
) -> Result<Var> {
    gcn_layer(tape, m_hat, z, w, dropout)
}

/// Output of [`attention_fuse`]: the fused rows and the local-branch weight per node.
#[derive(Debug, Clone, Copy)]
pub struct Fused {
    pub output: Var,
    pub zeta: Var,
}

/// Per-node two-way attention between branch embeddings.
///
/// `h_l = z_l·W_a`, `h_g = z_g·W_a`; scores `LeakyReLU([h_l‖h_g]·w_loc)` and
/// `LeakyReLU([h_g‖h_l]·w_glob)` are softmaxed into `(ζ, 1-ζ)` and the output
/// row is `ζ·z_l + (1-ζ)·z_g`.
pub fn attention_fuse<T: Scalar>(tape: &mut Tape<T>, z_local: Var, z_global: Var, vars: &EncoderVars) -> Result<Fused> {
    if tape.value(z_local).shape() != tape.value(z_global).shape() {
        return Err(Error::Dimension {
            op: "attention_fuse",
            left: tape.value(z_local).shape(),
            right: tape.value(z_global).shape(),
        });
    }
    let slope = T::lit(LEAKY_RELU_SLOPE);
    let hl = tape.matmul(z_local, vars.att_proj)?;
    let hg = tape.matmul(z_global, vars.att_proj)?;
    let lg = tape.hcat(hl, hg)?;
    let gl = tape.hcat(hg, hl)?;
    let sl = tape.matmul(lg, vars.att_local)?;
    let e_local = tape.leaky_relu(sl, slope);
    let sg = tape.matmul(gl, vars.att_global)?;
    let e_global = tape.leaky_relu(sg, slope);
    let scores = tape.hcat(e_local, e_global)?;
    let weights = tape.softmax(scores);
    let zeta = tape.columns(weights, 0, 1)?;
    let rest = tape.columns(weights, 1, 1)?;
    let a = tape.mul_col(z_local, zeta)?;
    let b = tape.mul_col(z_global, rest)?;
    let output = tape.add(a, b)?;
    Ok(Fused { output, zeta })
}

/// Graph operators of the target domain, as tape constants.
#[derive(Debug, Clone, Copy)]
pub struct TargetOperators {
    pub features: Var,
    pub local_prop: Var,
    pub global_prop: Var,
}

impl TargetOperators {
    pub fn record<T: Scalar>(tape: &mut Tape<T>, g: &Graph<T>, cache: &PpmiCache<T>) -> Self {
        Self {
            features: tape.constant(g.features().clone()),
            local_prop: tape.constant(renormalized_propagation(g)),
            global_prop: tape.constant(cache.normalized.clone()),
        }
    }
}

/// Two stacked local layers → `Z_local`, two stacked global layers →
/// `Z_global`, fused once at the output. Returns the `n_t × h2` embedding.
pub fn encode_target<T: Scalar>(
    tape: &mut Tape<T>,
    ops: &TargetOperators,
    vars: &EncoderVars,
    fusion: Fusion,
    dropout: Option<DropoutCtx>,
) -> Result<Var> {
    let drop = |layer: u64| dropout.map(|d| (d.rate, d.seed_for(layer)));
    let l1 = gcn_layer(tape, ops.local_prop, ops.features, vars.w1, drop(1))?;
    let z_local = gcn_layer(tape, ops.local_prop, l1, vars.w2, drop(2))?;
    if fusion == Fusion::LocalOnly {
        return Ok(z_local);
    }
    let g1 = global_layer(tape, ops.global_prop, ops.features, vars.w1, drop(3))?;
    let z_global = global_layer(tape, ops.global_prop, g1, vars.w2, drop(4))?;
    Ok(attention_fuse(tape, z_local, z_global, vars)?.output)
}

/// Spectral operators and both feature matrices, as tape constants.
#[derive(Debug, Clone, Copy)]
pub struct SourceOperators {
    pub source_features: Var,
    pub target_features: Var,
    pub own: Var,
    pub cross: Var,
    pub target_filter: Var,
}

impl SourceOperators {
    pub fn record<T: Scalar>(
        tape: &mut Tape<T>,
        source_features: &Matrix<T>,
        target_features: &Matrix<T>,
        mixer: &SpectralMixer<T>,
    ) -> Self {
        Self {
            source_features: tape.constant(source_features.clone()),
            target_features: tape.constant(target_features.clone()),
            own: tape.constant(mixer.own.clone()),
            cross: tape.constant(mixer.cross.clone()),
            target_filter: tape.constant(mixer.target.clone()),
        }
    }
}

/// Two spectral-augmentation layers sharing `W1`, `W2` with the target encoder.
///
/// Layer 1 mixes `X_s·W1` with `X_t·W1`. Layer 2 mixes the layer-1 source
/// output with the layer-1 output of the target's own filtered track
/// `LeakyReLU(U_t g(Λ_t) U_tᵀ X_t W1)`. Returns the `n_s × h2` embedding.
pub fn encode_source<T: Scalar>(tape: &mut Tape<T>, ops: &SourceOperators, vars: &EncoderVars) -> Result<Var> {
    let slope = T::lit(LEAKY_RELU_SLOPE);
    let mixed_layer = |tape: &mut Tape<T>, hs: Var, ht: Var, w: Var| -> Result<Var> {
        let a = propagate(tape, ops.own, hs, w)?;
        let b = propagate(tape, ops.cross, ht, w)?;
        let pre = tape.add(a, b)?;
        Ok(tape.leaky_relu(pre, slope))
    };
    let hs1 = mixed_layer(tape, ops.source_features, ops.target_features, vars.w1)?;
    let t1 = propagate(tape, ops.target_filter, ops.target_features, vars.w1)?;
    let ht1 = tape.leaky_relu(t1, slope);
    mixed_layer(tape, hs1, ht1, vars.w2)
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn transition_by_hand() {
        let k2 = Graph::from_edges(2, &[(0, 1)], M::zeros(2, 1), None, 1).unwrap();
        assert_eq!(transition_matrix(&k2), M::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let p3 = Graph::from_edges(3, &[(0, 1), (1, 2)], M::zeros(3, 1), None, 1).unwrap();
        assert_eq!(transition_matrix(&p3).row(1), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn ppmi_single_edge() {
        let p = M::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let m = ppmi_matrix(&p).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(0, 1) - ln2).abs() < 1e-15);
        assert!((m.get(1, 0) - ln2).abs() < 1e-15);
    }

    #[test]
    fn ppmi_uniform_is_zero() {
        let m = ppmi_matrix(&M::filled(4, 4, 0.25)).unwrap();
        assert!(m.data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn ppmi_rejects_zero_and_negative() {
        assert!(ppmi_matrix(&M::zeros(3, 3)).is_err());
        assert!(ppmi_matrix(&M::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap()).is_err());
    }

    #[test]
    fn gcn_layer_identity_and_zero() {
        let mut tape = Tape::new();
        let z = M::from_rows(&[[0.5, 1.0], [2.0, 0.0], [0.0, 3.0]]).unwrap();
        let prop = tape.constant(M::identity(3));
        let zv = tape.constant(z.clone());
        let w = tape.param(M::identity(2));
        let out = gcn_layer(&mut tape, prop, zv, w, None).unwrap();
        assert_eq!(tape.value(out), &z);
        let zero = tape.constant(M::zeros(3, 2));
        let out = gcn_layer(&mut tape, prop, zero, w, None).unwrap();
        assert_eq!(tape.value(out), &M::zeros(3, 2));
    }

    #[test]
    fn gcn_layer_symmetric_on_single_edge() {
        let k2 = Graph::from_edges(2, &[(0, 1)], M::from_rows(&[[1.0, -0.5], [0.25, 2.0]]).unwrap(), None, 1)
            .unwrap();
        let mut tape = Tape::new();
        let prop = tape.constant(renormalized_propagation(&k2));
        let x = tape.constant(k2.features().clone());
        let w = tape.param(M::from_rows(&[[0.3, -0.2, 0.1], [0.7, 0.4, -0.9]]).unwrap());
        let out = gcn_layer(&mut tape, prop, x, w, None).unwrap();
        let v = tape.value(out);
        assert_eq!(v.row(0), v.row(1));
    }

    #[test]
    fn gcn_layer_shape_errors() {
        let mut tape = Tape::<f64>::new();
        let prop = tape.constant(M::identity(3));
        let z = tape.constant(M::zeros(2, 2));
        let w = tape.param(M::zeros(2, 2));
        assert!(gcn_layer(&mut tape, prop, z, w, None).is_err());
    }

    fn vars_for(tape: &mut Tape<f64>, p: &EncoderParams<f64>) -> EncoderVars {
        p.register(tape)
    }

    #[test]
    fn fusion_of_equal_branches_is_noop() {
        let p = EncoderParams::<f64>::init(3, (4, 2), 5);
        let mut tape = Tape::new();
        let vars = vars_for(&mut tape, &p);
        let z = M::from_rows(&[[0.1, -0.4], [2.0, 0.3], [0.0, 1.0]]).unwrap();
        let a = tape.constant(z.clone());
        let b = tape.constant(z.clone());
        let f = attention_fuse(&mut tape, a, b, &vars).unwrap();
        let out = tape.value(f.output);
        for (x, y) in out.data().iter().zip(z.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn fusion_with_shared_score_vector_is_midpoint() {
        let mut p = EncoderParams::<f64>::init(3, (4, 2), 5);
        p.att_global = p.att_local.clone();
        // With a symmetric score vector the two concatenations score identically.
        let half = p.att_local.rows() / 2;
        for i in 0..half {
            let v = p.att_local.get(i, 0);
            p.att_local.set(half + i, 0, v);
            p.att_global.set(half + i, 0, v);
        }
        let mut tape = Tape::new();
        let vars = vars_for(&mut tape, &p);
        let zl = M::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let zg = M::from_rows(&[[-1.0, 4.0], [3.0, 0.0]]).unwrap();
        let a = tape.constant(zl.clone());
        let b = tape.constant(zg.clone());
        let f = attention_fuse(&mut tape, a, b, &vars).unwrap();
        for &z in tape.value(f.zeta).data() {
            assert!((z - 0.5).abs() < 1e-15);
        }
        let mid = zl.add(&zg).unwrap().scale(0.5);
        for (x, y) in tape.value(f.output).data().iter().zip(mid.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
