//! End-to-end training: precompute spectra and PPMI once, then a full-batch
//! epoch loop over both domains with a single Adam optimizer.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adversarial::{total_objective, HeadVars, Heads, LossBreakdown};
use crate::autodiff::Tape;
use crate::data_io::{content_hash, write_atomic};
use crate::dual_gnn::{
    encode_source, encode_target, gcn_layer, DropoutCtx, EncoderParams, EncoderVars, Fusion, PpmiCache,
    SourceOperators, TargetOperators,
};
use crate::error::{Error, Result};
use crate::graph::{renormalized_propagation, DomainPair, Graph};
use crate::matrix::Matrix;
use crate::optim::AdamState;
use crate::spectral::{laplacian_basis, FilterBank, SpectralBasis, SpectralMixConfig, SpectralMixer};
use crate::derive_seed;

/// Which part of the model is switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Low-pass filter zeroed.
    NoLow,
    /// High-pass filter zeroed.
    NoHigh,
    /// Global (PPMI) branch dropped from the target encoder.
    NoGlobal,
    /// Domain-adversarial term dropped (`γ2 = 0`).
    NoDomain,
    /// Target entropy term dropped (`γ1 = 0`).
    NoTarget,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoLow,
        Variant::NoHigh,
        Variant::NoGlobal,
        Variant::NoDomain,
        Variant::NoTarget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLow => "no_low",
            Variant::NoHigh => "no_high",
            Variant::NoGlobal => "no_global",
            Variant::NoDomain => "no_domain",
            Variant::NoTarget => "no_target",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn filters(self) -> FilterBank<f64> {
        let bank = FilterBank::default();
        match self {
            Variant::NoLow => bank.without_low(),
            Variant::NoHigh => bank.without_high(),
            _ => bank,
        }
    }

    pub fn fusion(self) -> Fusion {
        if self == Variant::NoGlobal {
            Fusion::LocalOnly
        } else {
            Fusion::Attention
        }
    }
}

/// Whether epoch records carry measured wall-clock time or zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    /// `ms` is always 0, making metrics streams byte-comparable across runs.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub hidden: (usize, usize),
    pub dropout: f64,
    pub seed: u64,
    /// Spectral components kept; `None` means `min(n_s, n_t)`.
    pub k: Option<usize>,
    /// Target accuracy is evaluated every this many epochs and at the last one.
    pub eval_every: usize,
    pub variant: Variant,
    pub timing: Timing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.8,
            gamma1: 0.3,
            gamma2: 0.1,
            lr: 1e-4,
            epochs: 300,
            hidden: (128, 16),
            dropout: 0.3,
            seed: 0,
            k: None,
            eval_every: 10,
            variant: Variant::Full,
            timing: Timing::Wall,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.mix().validate()?;
        let fail = |m: String| Err(Error::contract(m));
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) || !(self.gamma2 >= 0.0 && self.gamma2.is_finite()) {
            return fail(format!("gamma1 and gamma2 must be nonnegative, got {} and {}", self.gamma1, self.gamma2));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return fail("hidden dimensions must be positive".into());
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1".into());
        }
        Ok(())
    }

    pub fn mix(&self) -> SpectralMixConfig {
        SpectralMixConfig {
            alpha: self.alpha,
            beta: self.beta,
            k: self.k,
        }
    }

    /// Loss weights after the variant's switches.
    pub fn effective_gammas(&self) -> (f64, f64) {
        match self.variant {
            Variant::NoDomain => (self.gamma1, 0.0),
            Variant::NoTarget => (0.0, self.gamma2),
            _ => (self.gamma1, self.gamma2),
        }
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_s")]
    pub source: f64,
    #[serde(rename = "L_t")]
    pub target: f64,
    #[serde(rename = "L_D")]
    pub domain: f64,
    pub total: f64,
    /// Target accuracy; `None` on epochs that were not evaluated.
    pub acc: Option<f64>,
    pub ms: u64,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Everything computed once before the epoch loop.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub source_basis: SpectralBasis<f64>,
    pub target_basis: SpectralBasis<f64>,
    pub target_ppmi: PpmiCache<f64>,
}

impl Precomputed {
    pub fn compute(pair: &DomainPair<f64>) -> Result<Self> {
        Ok(Self {
            source_basis: laplacian_basis(&pair.source)?,
            target_basis: laplacian_basis(&pair.target)?,
            target_ppmi: PpmiCache::new(&pair.target)?,
        })
    }

    /// Like [`Precomputed::compute`], reusing and filling an on-disk cache keyed
    /// by the content hash of each graph.
    pub fn load_or_compute(pair: &DomainPair<f64>, cache_dir: &Path) -> Result<Self> {
        Ok(Self {
            source_basis: cached_basis(&pair.source, cache_dir)?,
            target_basis: cached_basis(&pair.target, cache_dir)?,
            target_ppmi: cached_ppmi(&pair.target, cache_dir)?,
        })
    }
}

fn encode_matrices(ms: &[&Matrix<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in ms {
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_matrices(bytes: &[u8], count: usize) -> Option<Vec<Matrix<f64>>> {
    let mut pos = 0;
    let mut take = |len: usize| -> Option<&[u8]> {
        let s = bytes.get(pos..pos + len)?;
        pos += len;
        Some(s)
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
        let cols = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
        let data: Vec<f64> = take(rows.checked_mul(cols)?.checked_mul(8)?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Matrix::new(rows, cols, data).ok()?);
    }
    (pos == bytes.len()).then_some(out)
}

/// Reads a cache entry, treating unreadable or malformed files as misses.
fn read_cache(path: &Path, count: usize) -> Option<Vec<Matrix<f64>>> {
    decode_matrices(&fs::read(path).ok()?, count)
}

fn cached_basis(g: &Graph<f64>, dir: &Path) -> Result<SpectralBasis<f64>> {
    let path = dir.join(format!("eig-{}.bin", content_hash(g)));
    if let Some(mut ms) = read_cache(&path, 2) {
        let values = ms.pop().unwrap();
        let vectors = ms.pop().unwrap();
        if let Ok(b) = SpectralBasis::from_parts(vectors, values.data().to_vec()) {
            if b.n() == g.num_nodes() {
                return Ok(b);
            }
        }
    }
    let basis = laplacian_basis(g)?;
    let values = Matrix::new(1, basis.n(), basis.values().to_vec())?;
    write_atomic(&path, &encode_matrices(&[basis.vectors(), &values]))?;
    Ok(basis)
}

fn cached_ppmi(g: &Graph<f64>, dir: &Path) -> Result<PpmiCache<f64>> {
    let path = dir.join(format!("ppmi-{}.bin", content_hash(g)));
    let n = g.num_nodes();
    if let Some(mut ms) = read_cache(&path, 3) {
        if ms.iter().all(|m| m.shape() == (n, n)) {
            let normalized = ms.pop().unwrap();
            let ppmi = ms.pop().unwrap();
            let transition = ms.pop().unwrap();
            return Ok(PpmiCache {
                transition,
                ppmi,
                normalized,
            });
        }
    }
    let cache = PpmiCache::new(g)?;
    write_atomic(&path, &encode_matrices(&[&cache.transition, &cache.ppmi, &cache.normalized]))?;
    Ok(cache)
}

/// How a training run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Loss became non-finite at `epoch`; records stop at the last finite epoch.
    Diverged { epoch: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub encoder: EncoderParams<f64>,
    pub heads: Heads<f64>,
    pub records: Vec<EpochRecord>,
    pub status: RunStatus,
}

impl TrainOutput {
    /// Accuracy of the last evaluated epoch.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.acc)
    }
}

/// Optional hooks around [`train_with`].
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub cache_dir: Option<PathBuf>,
    /// Called with each record as soon as it is final.
    pub on_epoch: Option<Box<dyn FnMut(&EpochRecord) -> Result<()> + 'a>>,
}

fn param_seeds(seed: u64) -> (u64, u64) {
    (derive_seed(seed, &[0x5A]), derive_seed(seed, &[0x4E]))
}

pub fn train(pair: &DomainPair<f64>, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(pair, cfg, TrainHooks::default())
}

pub fn train_with(pair: &DomainPair<f64>, cfg: &TrainConfig, mut hooks: TrainHooks<'_>) -> Result<TrainOutput> {
    cfg.validate()?;
    let (enc_seed, head_seed) = param_seeds(cfg.seed);
    let mut encoder = EncoderParams::init(pair.feature_dim(), cfg.hidden, enc_seed);
    let mut heads = Heads::init(encoder.output_dim(), pair.num_classes(), head_seed);
    if cfg.epochs == 0 {
        return Ok(TrainOutput {
            encoder,
            heads,
            records: Vec::new(),
            status: RunStatus::Completed,
        });
    }

    let pre = match &hooks.cache_dir {
        Some(dir) => Precomputed::load_or_compute(pair, dir)?,
        None => Precomputed::compute(pair)?,
    };
    let filters = cfg.variant.filters();
    let mixer = SpectralMixer::new(&pre.source_basis, &pre.target_basis, &cfg.mix(), &filters)?;
    let fusion = cfg.variant.fusion();
    let (gamma1, gamma2) = cfg.effective_gammas();
    let labels = pair.source_labels();
    let target_labels = pair.target.labels();
    let local_prop = renormalized_propagation(&pair.target);

    let mut adam = AdamState::new(encoder.matrices().into_iter().chain(heads.matrices()));
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut status = RunStatus::Completed;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut tape = Tape::new().with_finite_check(true);
        let ev = encoder.register(&mut tape);
        let hv = heads.register(&mut tape);
        let src_ops = SourceOperators::record(&mut tape, pair.source.features(), pair.target.features(), &mixer);
        let tgt_ops = TargetOperators {
            features: tape.constant(pair.target.features().clone()),
            local_prop: tape.constant(local_prop.clone()),
            global_prop: tape.constant(pre.target_ppmi.normalized.clone()),
        };
        let dropout = (cfg.dropout > 0.0).then(|| DropoutCtx {
            rate: cfg.dropout,
            seed: derive_seed(cfg.seed, &[0xD0, epoch as u64]),
        });

        let step = (|| -> Result<LossBreakdown> {
            let zs = encode_source(&mut tape, &src_ops, &ev)?;
            let zt = encode_target(&mut tape, &tgt_ops, &ev, fusion, dropout)?;
            let obj = total_objective(&mut tape, zs, zt, labels, &hv, gamma1, gamma2)?;
            let breakdown = obj.breakdown(&tape, gamma1, gamma2);
            if !breakdown.is_finite() {
                return Err(Error::numeric(format!("non-finite loss {breakdown:?}")));
            }
            tape.backward(obj.total)?;
            Ok(breakdown)
        })();
        let breakdown = match step {
            Ok(b) => b,
            Err(e) if e.is_numeric() => {
                status = RunStatus::Diverged {
                    epoch,
                    reason: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        };

        apply_adam(&mut adam, &tape, &ev, &hv, &mut encoder, &mut heads, cfg.lr)?;

        let last = epoch + 1 == cfg.epochs;
        let acc = match target_labels {
            Some(y) if last || epoch % cfg.eval_every == 0 => {
                Some(accuracy(&target_logits(&pair.target, &pre.target_ppmi, &encoder, &heads, fusion)?, y)?)
            }
            _ => None,
        };
        let ms = match cfg.timing {
            Timing::Wall => started.elapsed().as_millis() as u64,
            Timing::Off => 0,
        };
        let record = EpochRecord {
            epoch,
            source: breakdown.source,
            target: breakdown.target,
            domain: breakdown.domain,
            total: breakdown.total,
            acc,
            ms,
        };
        if let Some(f) = hooks.on_epoch.as_mut() {
            f(&record)?;
        }
        records.push(record);
    }
    Ok(TrainOutput {
        encoder,
        heads,
        records,
        status,
    })
}

fn apply_adam(
    adam: &mut AdamState<f64>,
    tape: &Tape<f64>,
    ev: &EncoderVars,
    hv: &HeadVars,
    encoder: &mut EncoderParams<f64>,
    heads: &mut Heads<f64>,
    lr: f64,
) -> Result<()> {
    let grads: Vec<Option<Matrix<f64>>> = ev
        .all()
        .into_iter()
        .chain(hv.all())
        .map(|v| tape.grad(v).cloned())
        .collect();
    let grad_refs: Vec<Option<&Matrix<f64>>> = grads.iter().map(Option::as_ref).collect();
    let mut params: Vec<&mut Matrix<f64>> = encoder.matrices_mut().into_iter().chain(heads.matrices_mut()).collect();
    adam.step(&mut params, &grad_refs, lr)
}

/// Target-encoder embeddings of `g` with dropout disabled.
pub fn embed(g: &Graph<f64>, cache: &PpmiCache<f64>, encoder: &EncoderParams<f64>, fusion: Fusion) -> Result<Matrix<f64>> {
    let mut tape = Tape::new();
    let ev = encoder.register(&mut tape);
    let ops = TargetOperators::record(&mut tape, g, cache);
    let z = encode_target(&mut tape, &ops, &ev, fusion, None)?;
    Ok(tape.value(z).clone())
}

pub fn target_logits(
    g: &Graph<f64>,
    cache: &PpmiCache<f64>,
    encoder: &EncoderParams<f64>,
    heads: &Heads<f64>,
    fusion: Fusion,
) -> Result<Matrix<f64>> {
    heads.label_logits(&embed(g, cache, encoder, fusion)?)
}

/// Row argmax; ties go to the lowest class id.
pub fn predictions(logits: &Matrix<f64>) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(logits: &Matrix<f64>, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::contract(format!("{} logit rows for {} labels", logits.rows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::contract("accuracy of an empty graph"));
    }
    let hits = predictions(logits).iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy of the target encoder and label head on `g`'s held-out labels.
pub fn evaluate(g: &Graph<f64>, encoder: &EncoderParams<f64>, heads: &Heads<f64>, fusion: Fusion) -> Result<f64> {
    let labels = g.require_labels("evaluate")?;
    let cache = PpmiCache::new(g)?;
    accuracy(&target_logits(g, &cache, encoder, heads, fusion)?, labels)
}

/// Two-layer GCN with a label head.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: Matrix<f64>,
    pub w2: Matrix<f64>,
    pub heads: Heads<f64>,
}

impl GcnParams {
    pub fn logits(&self, g: &Graph<f64>) -> Result<Matrix<f64>> {
        let mut tape = Tape::new();
        let prop = tape.constant(renormalized_propagation(g));
        let x = tape.constant(g.features().clone());
        let w1 = tape.constant(self.w1.clone());
        let w2 = tape.constant(self.w2.clone());
        let h = gcn_layer(&mut tape, prop, x, w1, None)?;
        let z = gcn_layer(&mut tape, prop, h, w2, None)?;
        self.heads.label_logits(tape.value(z))
    }
}

/// Source-only baseline: a two-layer local GCN fitted to the source labels with
/// the same width, dropout, learning rate and epoch budget as [`train`].
pub fn train_source_only_gcn(pair: &DomainPair<f64>, cfg: &TrainConfig) -> Result<GcnParams> {
    cfg.validate()?;
    let (enc_seed, head_seed) = param_seeds(cfg.seed);
    let init = EncoderParams::init(pair.feature_dim(), cfg.hidden, enc_seed);
    let mut p = GcnParams {
        w1: init.w1,
        w2: init.w2,
        heads: Heads::init(cfg.hidden.1, pair.num_classes(), head_seed),
    };
    let prop = renormalized_propagation(&pair.source);
    let labels = pair.source_labels();
    let mut adam = AdamState::new([&p.w1, &p.w2, &p.heads.label_w, &p.heads.label_b]);
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new().with_finite_check(true);
        let prop_v = tape.constant(prop.clone());
        let x = tape.constant(pair.source.features().clone());
        let w1 = tape.param(p.w1.clone());
        let w2 = tape.param(p.w2.clone());
        let hv = p.heads.register(&mut tape);
        let drop = |layer: u64| {
            (cfg.dropout > 0.0).then(|| (cfg.dropout, derive_seed(cfg.seed, &[0xD0, epoch as u64, layer])))
        };
        let h = gcn_layer(&mut tape, prop_v, x, w1, drop(1))?;
        let z = gcn_layer(&mut tape, prop_v, h, w2, drop(2))?;
        let logits = hv.label_logits(&mut tape, z)?;
        let loss = crate::adversarial::source_loss(&mut tape, logits, labels)?;
        tape.backward(loss)?;
        let grads: Vec<Option<Matrix<f64>>> = [w1, w2, hv.label_w, hv.label_b]
            .into_iter()
            .map(|v| tape.grad(v).cloned())
            .collect();
        let refs: Vec<Option<&Matrix<f64>>> = grads.iter().map(Option::as_ref).collect();
        adam.step(&mut [&mut p.w1, &mut p.w2, &mut p.heads.label_w, &mut p.heads.label_b], &refs, cfg.lr)?;
    }
    Ok(p)
}

/// Target accuracy of [`train_source_only_gcn`].
pub fn train_source_only_baseline(pair: &DomainPair<f64>, cfg: &TrainConfig) -> Result<f64> {
    let labels = pair.target.require_labels("the source-only baseline")?;
    let p = train_source_only_gcn(pair, cfg)?;
    accuracy(&p.logits(&pair.target)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_rule_prefers_lowest_class() {
        let logits = Matrix::zeros(4, 2);
        assert_eq!(predictions(&logits), vec![0; 4]);
        assert_eq!(accuracy(&logits, &[0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn one_hot_logits_score_one() {
        let y = [2, 0, 1];
        let logits = Matrix::from_fn(3, 3, |i, c| if y[i] == c { 1.0 } else { 0.0 });
        assert_eq!(accuracy(&logits, &y).unwrap(), 1.0);
        assert!(accuracy(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn variants_round_trip_names() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        assert_eq!(Variant::parse("nope"), None);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
            TrainConfig { gamma1: -0.1, ..Default::default() },
            TrainConfig { alpha: 1.5, ..Default::default() },
            TrainConfig { eval_every: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn cache_encoding_round_trips() {
        let a = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 / 7.0);
        let b = Matrix::from_fn(1, 1, |_, _| -0.0);
        let bytes = encode_matrices(&[&a, &b]);
        let back = decode_matrices(&bytes, 2).unwrap();
        assert_eq!(back, vec![a, b]);
        assert!(decode_matrices(&bytes[..bytes.len() - 1], 2).is_none());
    }

    #[test]
    fn record_json_shape() {
        let r = EpochRecord {
            epoch: 3,
            source: 1.0,
            target: 0.5,
            domain: 0.25,
            total: 1.2,
            acc: Some(0.75),
            ms: 12,
        };
        assert_eq!(
            r.to_json_line(),
            r#"{"epoch":3,"L_s":1.0,"L_t":0.5,"L_D":0.25,"total":1.2,"acc":0.75,"ms":12}"#
        );
    }
}
