//! Classifier heads, gradient reversal and the three training losses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::derive_seed;
use crate::dual_gnn::glorot;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Floor applied to probabilities before taking logs in the domain loss.
pub const LOG_CLAMP: f64 = 1e-12;

/// Domain id of source nodes in the domain-classification loss; target nodes use 1.
pub const SOURCE_DOMAIN: u8 = 0;
pub const TARGET_DOMAIN: u8 = 1;

/// Linear label classifier (softmax over `C`) and linear domain classifier (sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct Heads<T> {
    pub label_w: Matrix<T>,
    pub label_b: Matrix<T>,
    pub domain_w: Matrix<T>,
    pub domain_b: Matrix<T>,
}

impl<T: Scalar> Heads<T> {
    pub fn init(embed_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x4EAD]));
        Self {
            label_w: glorot(embed_dim, num_classes, &mut rng),
            label_b: Matrix::zeros(1, num_classes),
            domain_w: glorot(embed_dim, 1, &mut rng),
            domain_b: Matrix::zeros(1, 1),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.label_w.cols()
    }

    pub fn matrices(&self) -> [&Matrix<T>; 4] {
        [&self.label_w, &self.label_b, &self.domain_w, &self.domain_b]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix<T>; 4] {
        [
            &mut self.label_w,
            &mut self.label_b,
            &mut self.domain_w,
            &mut self.domain_b,
        ]
    }

    pub fn register(&self, tape: &mut Tape<T>) -> HeadVars {
        HeadVars {
            label_w: tape.param(self.label_w.clone()),
            label_b: tape.param(self.label_b.clone()),
            domain_w: tape.param(self.domain_w.clone()),
            domain_b: tape.param(self.domain_b.clone()),
        }
    }

    /// Label logits `z·θ_y + b` outside of any tape.
    pub fn label_logits(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        let raw = z.matmul(&self.label_w)?;
        let b = self.label_b.row(0);
        Ok(Matrix::from_fn(raw.rows(), raw.cols(), |i, j| raw.get(i, j) + b[j]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub label_w: Var,
    pub label_b: Var,
    pub domain_w: Var,
    pub domain_b: Var,
}

impl HeadVars {
    pub fn all(&self) -> [Var; 4] {
        [self.label_w, self.label_b, self.domain_w, self.domain_b]
    }

    pub fn label_logits<T: Scalar>(&self, tape: &mut Tape<T>, z: Var) -> Result<Var> {
        let raw = tape.matmul(z, self.label_w)?;
        tape.add_row(raw, self.label_b)
    }

    /// Sigmoid domain probabilities, `n × 1`.
    pub fn domain_scores<T: Scalar>(&self, tape: &mut Tape<T>, z: Var) -> Result<Var> {
        let raw = tape.matmul(z, self.domain_w)?;
        let biased = tape.add_row(raw, self.domain_b)?;
        Ok(tape.sigmoid(biased))
    }
}

/// Gradient reversal layer.
pub fn grl<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Var {
    tape.reverse_grad(x)
}

fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Matrix<T>> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::contract(format!("label {y} at node {i} is not below {classes}")));
        }
        m.set(i, y, T::one());
    }
    Ok(m)
}

/// Mean cross-entropy of `logits` (`n × C`) against integer labels.
pub fn source_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let (n, c) = tape.value(logits).shape();
    if labels.len() != n {
        return Err(Error::contract(format!("{} labels for {n} logit rows", labels.len())));
    }
    let y = tape.constant(one_hot(labels, c)?);
    let logp = tape.log_softmax(logits);
    let picked = tape.mul(logp, y)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -T::one() / T::from_usize(n.max(1)).unwrap()))
}

/// Mean Shannon entropy of the softmax rows of `logits`.
pub fn target_entropy_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var) -> Result<Var> {
    let n = tape.value(logits).rows();
    let p = tape.softmax(logits);
    let logp = tape.log_softmax(logits);
    let plogp = tape.mul(p, logp)?;
    let total = tape.sum(plogp);
    Ok(tape.scale(total, -T::one() / T::from_usize(n.max(1)).unwrap()))
}

/// Mean binary cross-entropy between probabilities `scores` (`n × 1`) and 0/1 domain ids.
pub fn domain_loss<T: Scalar>(tape: &mut Tape<T>, scores: Var, domain_ids: &[u8]) -> Result<Var> {
    let (n, c) = tape.value(scores).shape();
    if c != 1 || domain_ids.len() != n {
        return Err(Error::contract(format!(
            "{} domain ids for {n}x{c} scores",
            domain_ids.len()
        )));
    }
    if let Some(bad) = domain_ids.iter().find(|&&d| d > 1) {
        return Err(Error::contract(format!("domain id {bad} is not 0 or 1")));
    }
    let floor = T::lit(LOG_CLAMP);
    let d: Vec<T> = domain_ids.iter().map(|&v| T::from_u8(v).unwrap()).collect();
    let not_d: Vec<T> = d.iter().map(|&v| T::one() - v).collect();
    let dv = tape.constant(Matrix::column(&d));
    let ndv = tape.constant(Matrix::column(&not_d));

    let s = tape.clamp_min(scores, floor);
    let log_s = tape.log(s);
    let neg = tape.neg(scores);
    let one_minus = tape.add_scalar(neg, T::one());
    let one_minus = tape.clamp_min(one_minus, floor);
    let log_1ms = tape.log(one_minus);

    let a = tape.mul(log_s, dv)?;
    let b = tape.mul(log_1ms, ndv)?;
    let both = tape.add(a, b)?;
    let total = tape.sum(both);
    Ok(tape.scale(total, -T::one() / T::from_usize(n.max(1)).unwrap()))
}

/// Scalar losses of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub source: f64,
    pub target: f64,
    pub domain: f64,
    pub total: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.source, self.target, self.domain, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Tape handles of the assembled objective.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub source: Var,
    pub target: Var,
    pub domain: Var,
    pub total: Var,
}

impl Objective {
    pub fn breakdown<T: Scalar>(&self, tape: &Tape<T>, gamma1: f64, gamma2: f64) -> LossBreakdown {
        LossBreakdown {
            source: tape.scalar(self.source).as_f64(),
            target: tape.scalar(self.target).as_f64(),
            domain: tape.scalar(self.domain).as_f64(),
            total: tape.scalar(self.total).as_f64(),
            gamma1,
            gamma2,
        }
    }
}

/// Whether the domain head sees the embeddings through a gradient reversal layer.
/// Only the gradient checks turn it off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainPath {
    Reversed,
    Direct,
}

/// `L_s + γ1·L_t + γ2·L_D`, with `L_D` computed on `grl([Z_s; Z_t])`.
///
/// The label head reads `Z_s` and `Z_t` directly. The reversal layer between
/// the encoder and the domain head turns minimization of `γ2·L_D` into
/// maximization for the encoder while the domain head still minimizes it, so a
/// single optimizer descends `total` over all parameters.
pub fn total_objective<T: Scalar>(
    tape: &mut Tape<T>,
    z_source: Var,
    z_target: Var,
    source_labels: &[usize],
    heads: &HeadVars,
    gamma1: f64,
    gamma2: f64,
) -> Result<Objective> {
    objective_with_path(tape, z_source, z_target, source_labels, heads, gamma1, gamma2, DomainPath::Reversed)
}

#[allow(clippy::too_many_arguments)]
pub fn objective_with_path<T: Scalar>(
    tape: &mut Tape<T>,
    z_source: Var,
    z_target: Var,
    source_labels: &[usize],
    heads: &HeadVars,
    gamma1: f64,
    gamma2: f64,
    path: DomainPath,
) -> Result<Objective> {
    if gamma1 < 0.0 || gamma2 < 0.0 {
        return Err(Error::contract(format!("loss weights must be nonnegative, got {gamma1}, {gamma2}")));
    }
    let logits_s = heads.label_logits(tape, z_source)?;
    let source = source_loss(tape, logits_s, source_labels)?;
    let logits_t = heads.label_logits(tape, z_target)?;
    let target = target_entropy_loss(tape, logits_t)?;

    let z_all = tape.vcat(z_source, z_target)?;
    let z_dom = match path {
        DomainPath::Reversed => grl(tape, z_all),
        DomainPath::Direct => z_all,
    };
    let scores = heads.domain_scores(tape, z_dom)?;
    let ns = tape.value(z_source).rows();
    let nt = tape.value(z_target).rows();
    let ids: Vec<u8> = std::iter::repeat_n(SOURCE_DOMAIN, ns)
        .chain(std::iter::repeat_n(TARGET_DOMAIN, nt))
        .collect();
    let domain = domain_loss(tape, scores, &ids)?;

    let wt = tape.scale(target, T::lit(gamma1));
    let wd = tape.scale(domain, T::lit(gamma2));
    let partial = tape.add(source, wt)?;
    let total = tape.add(partial, wd)?;
    Ok(Objective {
        source,
        target,
        domain,
        total,
    })
}
