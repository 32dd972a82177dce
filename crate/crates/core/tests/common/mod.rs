#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sagda_core::{DomainPair, Graph, Matrix};
use serde_json::Value;

pub fn oracles() -> Value {
    // Also included from the CLI crate's tests, so try both manifest layouts.
    let here = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let path = ["tests/fixtures/oracles.json", "../core/tests/fixtures/oracles.json"]
        .iter()
        .map(|rel| here.join(rel))
        .find(|p| p.exists())
        .expect("oracles.json fixture");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn matrix(v: &Value) -> Matrix {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone()).unwrap();
    Matrix::from_rows(&rows).unwrap()
}

pub fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn assert_close(a: &Matrix, b: &Matrix, tol: f64, what: &str) {
    let d = max_diff(a, b);
    assert!(d <= tol, "{what}: max abs diff {d:e} > {tol:e}");
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Erdős–Rényi graph with edge weights in [0.5, 1.5] (or 1 when `weighted` is false).
pub fn random_graph(n: usize, d: usize, p: f64, weighted: bool, rng: &mut ChaCha8Rng) -> Graph {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                let w = if weighted { rng.random_range(0.5..1.5) } else { 1.0 };
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    let x = gaussian(n, d, rng);
    Graph::new(a, x, None, 1).unwrap()
}

/// Small labeled pair with a little class signal in the features.
pub fn random_pair(n_s: usize, n_t: usize, d: usize, classes: usize, seed: u64) -> DomainPair {
    let mut r = rng(seed);
    let mut side = |n: usize, shift: f64| {
        let g = random_graph(n, d, 0.4, false, &mut r);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let mut x = g.features().clone();
        for (i, &y) in labels.iter().enumerate() {
            let v = x.get(i, y % d);
            x.set(i, y % d, v + 1.5 + shift);
        }
        Graph::new(g.adjacency().clone(), x, Some(labels), classes).unwrap()
    };
    let s = side(n_s, 0.0);
    let t = side(n_t, 0.3);
    DomainPair::new(s, t).unwrap()
}

/// Same graph with every node in class 0.
pub fn labeled(g: Graph) -> Graph {
    let n = g.num_nodes();
    g.with_labels(Some(vec![0; n])).unwrap()
}

use sagda_core::adversarial::{objective_with_path, DomainPath};
use sagda_core::dual_gnn::{encode_source, encode_target, DropoutCtx, Fusion, SourceOperators, TargetOperators};
use sagda_core::spectral::laplacian_basis;
use sagda_core::{EncoderParams, FilterBank, Heads, PpmiCache, SpectralMixConfig, SpectralMixer, Tape, Var};

/// ‖a - n‖_F / max(‖a‖_F + ‖n‖_F, 1e-12) over all entries of all pairs.
pub fn relative_error(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            diff += (x - y) * (x - y);
            norm_a += x * x;
            norm_n += y * y;
        }
    }
    diff.sqrt() / (norm_a.sqrt() + norm_n.sqrt()).max(1e-12)
}

/// Central differences of `f` with respect to every entry of every matrix in `params`.
pub fn numeric_grad(params: &[Matrix], h: f64, mut f: impl FnMut(&[Matrix]) -> f64) -> Vec<Matrix> {
    let mut work = params.to_vec();
    let mut out = Vec::new();
    for p in 0..params.len() {
        let mut g = Matrix::zeros(params[p].rows(), params[p].cols());
        for k in 0..params[p].len() {
            let orig = work[p].data()[k];
            work[p].data_mut()[k] = orig + h;
            let up = f(&work);
            work[p].data_mut()[k] = orig - h;
            let down = f(&work);
            work[p].data_mut()[k] = orig;
            g.data_mut()[k] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Builds a scalar on a fresh tape from `params` registered as trainable leaves
/// and returns its value and the analytic gradients.
pub fn analytic_grad(params: &[Matrix], f: impl Fn(&mut Tape, &[Var]) -> Var) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let grads = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
        .collect();
    (tape.scalar(loss), grads)
}

pub fn forward_value(params: &[Matrix], f: &impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.scalar(loss)
}

/// Relative error between analytic and central-difference gradients of `f`.
pub fn grad_check(params: &[Matrix], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let (_, analytic) = analytic_grad(params, &f);
    let numeric = numeric_grad(params, 1e-6, |p| forward_value(p, &f));
    relative_error(&analytic, &numeric)
}

/// Everything needed to evaluate the full training objective on a fixed pair.
pub struct Model {
    pub pair: DomainPair,
    pub mixer: SpectralMixer,
    pub ppmi: PpmiCache,
    pub gammas: (f64, f64),
    pub dropout: Option<DropoutCtx>,
}

impl Model {
    pub fn new(pair: DomainPair, k: Option<usize>) -> Self {
        let bs = laplacian_basis(&pair.source).unwrap();
        let bt = laplacian_basis(&pair.target).unwrap();
        let cfg = SpectralMixConfig { alpha: 0.8, beta: 0.8, k };
        let mixer = SpectralMixer::new(&bs, &bt, &cfg, &FilterBank::default()).unwrap();
        let ppmi = PpmiCache::new(&pair.target).unwrap();
        Self {
            pair,
            mixer,
            ppmi,
            gammas: (0.3, 0.1),
            dropout: Some(DropoutCtx { rate: 0.3, seed: 99 }),
        }
    }

    pub fn params(&self, hidden: (usize, usize), seed: u64) -> Vec<Matrix> {
        let enc = EncoderParams::init(self.pair.feature_dim(), hidden, seed);
        let heads = Heads::init(hidden.1, self.pair.num_classes(), seed);
        let mut v: Vec<Matrix> = enc.matrices().into_iter().cloned().collect();
        v.extend(heads.matrices().into_iter().cloned());
        // Nonzero biases so their gradients are exercised from a generic point.
        for p in [6, 8] {
            let m = &mut v[p];
            for (i, x) in m.data_mut().iter_mut().enumerate() {
                *x = 0.1 * (i as f64 + 1.0);
            }
        }
        v
    }

    /// Total objective with `params` = 5 encoder matrices then 4 head matrices.
    pub fn objective(&self, tape: &mut Tape, vars: &[Var], path: DomainPath) -> Var {
        use sagda_core::adversarial::HeadVars;
        use sagda_core::dual_gnn::EncoderVars;
        let enc = EncoderVars {
            w1: vars[0],
            w2: vars[1],
            att_proj: vars[2],
            att_local: vars[3],
            att_global: vars[4],
        };
        let heads = HeadVars {
            label_w: vars[5],
            label_b: vars[6],
            domain_w: vars[7],
            domain_b: vars[8],
        };
        let sops = SourceOperators::record(tape, self.pair.source.features(), self.pair.target.features(), &self.mixer);
        let zs = encode_source(tape, &sops, &enc).unwrap();
        let tops = TargetOperators::record(tape, &self.pair.target, &self.ppmi);
        let zt = encode_target(tape, &tops, &enc, Fusion::Attention, self.dropout).unwrap();
        let labels = self.pair.source_labels().to_vec();
        let (g1, g2) = self.gammas;
        objective_with_path(tape, zs, zt, &labels, &heads, g1, g2, path).unwrap().total
    }
}

/// Random weighted graph redrawn until its Laplacian eigenvalues are pairwise
/// separated by more than 1e-6.
pub fn simple_spectrum_graph(n: usize, d: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    loop {
        let g = sagda_core::theory::random_weighted_graph(n, d, p, rng).unwrap();
        let b = laplacian_basis(&g).unwrap();
        if b.values().windows(2).all(|w| w[1] - w[0] > 1e-6) {
            return g;
        }
    }
}

/// PPMI of the random-walk matrix of `a`, one entry at a time.
pub fn naive_ppmi(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let d: f64 = (0..n).map(|j| a.get(i, j)).sum();
        for j in 0..n {
            if d > 0.0 {
                p.set(i, j, a.get(i, j) / d);
            }
        }
    }
    let total: f64 = p.data().iter().sum();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j) / total;
            if pij > 0.0 {
                let ri: f64 = (0..n).map(|k| p.get(i, k)).sum::<f64>() / total;
                let cj: f64 = (0..n).map(|k| p.get(k, j)).sum::<f64>() / total;
                out.set(i, j, (pij / (ri * cj)).ln().max(0.0));
            }
        }
    }
    out
}

/// Spectral augmentation with default filters as explicit sums over nodes and
/// frequencies, from the raw eigenpairs.
pub fn naive_augment(
    pair: &DomainPair,
    bs: &sagda_core::SpectralBasis,
    bt: &sagda_core::SpectralBasis,
    w: &Matrix,
    (alpha, beta): (f64, f64),
    k: usize,
) -> Matrix {
    let (ns, nt) = (bs.n(), bt.n());
    let hs = pair.source.features().matmul(w).unwrap();
    let ht = pair.target.features().matmul(w).unwrap();
    let (us, ut) = (bs.vectors(), bt.vectors());
    let mut out = Matrix::zeros(ns, w.cols());
    for i in 0..ns {
        for c in 0..w.cols() {
            let mut pre = 0.0;
            for m in 0..k {
                let (ls, lt) = (bs.values()[m], bt.values()[m]);
                let mut zs = 0.0;
                for v in 0..ns {
                    zs += us.get(v, m) * hs.get(v, c);
                }
                let mut zt = 0.0;
                for v in 0..nt {
                    zt += ut.get(v, m) * ht.get(v, c);
                }
                let src = alpha * ls / 2.0 + beta * (1.0 - ls / 2.0);
                let tgt = (1.0 - alpha) * lt / 2.0 + (1.0 - beta) * (1.0 - lt / 2.0);
                pre += us.get(i, m) * (src * zs + tgt * zt);
            }
            out.set(i, c, if pre > 0.0 { pre } else { 0.2 * pre });
        }
    }
    out
}
