//! On-disk graph directories, pair manifests and the synthetic SBM domain pair.
//!
//! A graph directory holds:
//!
//! ```text
//! edges.tsv     one "u<TAB>v" line per undirected edge, 0-indexed, no duplicates
//!               (an optional third column carries a non-unit weight)
//! features.tsv  header "n d", then n lines of d space-separated decimals
//! labels.tsv    optional, one "node<TAB>label" line per node
//! meta.json     {"num_classes": C}
//! ```
//!
//! A pair manifest `pair.json` is `{"source": path, "target": path}`, with
//! relative paths resolved against the manifest's directory.
//!
//! Citation-network dumps convert by numbering papers in file order, writing
//! each undirected citation once to `edges.tsv`, the bag-of-words vectors to
//! `features.tsv` and the venue/field ids (mapped onto `0..C`) to `labels.tsv`.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{DomainPair, Graph};
use crate::matrix::Matrix;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub num_classes: usize,
}

/// Paths of a source/target pair as stored in `pair.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairManifest {
    pub source: PathBuf,
    pub target: PathBuf,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_features(path: &Path) -> Result<Matrix<f64>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (n, d) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(parse_err(path, 1, "missing \"n d\" header"));
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(parse_err(path, i + 1, format!("header must be \"n d\", got {line:?}")));
        }
        let n: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad node count {:?}", parts[0])))?;
        let d: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad feature dimension {:?}", parts[1])))?;
        break (n, d);
    };
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(parse_err(path, i + 1, format!("more than the {n} declared feature rows")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, i + 1, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, text.lines().count(), format!("expected {n} feature rows, found {rows}")));
    }
    Matrix::new(n, d, data)
}

fn read_edges(path: &Path, n: usize) -> Result<Matrix<f64>> {
    let text = read_to_string(path)?;
    let mut a = Matrix::zeros(n, n);
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
        if parts.len() != 2 && parts.len() != 3 {
            return Err(parse_err(path, line_no, format!("expected \"u<TAB>v\", got {line:?}")));
        }
        let idx = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad node index {s:?}")))?;
            if v >= n {
                return Err(parse_err(path, line_no, format!("node index {v} out of range for {n} nodes")));
            }
            Ok(v)
        };
        let (u, v) = (idx(parts[0])?, idx(parts[1])?);
        if u == v {
            return Err(parse_err(path, line_no, format!("self-loop on node {u}")));
        }
        let w = match parts.get(2) {
            Some(s) => {
                let w: f64 = s
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad edge weight {s:?}")))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(parse_err(path, line_no, format!("edge weight {w} must be positive")));
                }
                w
            }
            None => 1.0,
        };
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(parse_err(path, line_no, format!("duplicate edge ({u}, {v})")));
        }
        a.set(u, v, w);
        a.set(v, u, w);
    }
    Ok(a)
}

fn read_labels(path: &Path, n: usize, num_classes: usize) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(parse_err(path, line_no, format!("expected \"node<TAB>label\", got {line:?}")));
        }
        let node: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad node index {:?}", parts[0])))?;
        let label: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad label {:?}", parts[1])))?;
        if node >= n {
            return Err(parse_err(path, line_no, format!("node index {node} out of range for {n} nodes")));
        }
        if label >= num_classes {
            return Err(parse_err(
                path,
                line_no,
                format!("label {label} not below num_classes = {num_classes}"),
            ));
        }
        if labels[node].replace(label).is_some() {
            return Err(parse_err(path, line_no, format!("node {node} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| parse_err(path, text.lines().count(), format!("node {i} has no label"))))
        .collect()
}

/// Reads and validates a graph directory. Node order is the feature-file order.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph<f64>> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: GraphMeta = serde_json::from_str(&read_to_string(&meta_path)?).map_err(|e| Error::Json {
        path: meta_path.clone(),
        source: e,
    })?;
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let n = features.rows();
    let adjacency = read_edges(&dir.join(EDGES_FILE), n)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path, n, meta.num_classes)?)
    } else {
        None
    };
    Graph::new(adjacency, features, labels, meta.num_classes)
}

/// Writes `g` in the graph-directory format; floats use 17 significant digits.
pub fn save_graph(g: &Graph<f64>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = g.num_nodes();
    let a = g.adjacency();

    let mut edges = String::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = a.get(i, j);
            if w == 1.0 {
                edges.push_str(&format!("{i}\t{j}\n"));
            } else if w > 0.0 {
                edges.push_str(&format!("{i}\t{j}\t{w:.16e}\n"));
            }
        }
    }
    write_atomic(&dir.join(EDGES_FILE), edges.as_bytes())?;

    let x = g.features();
    let mut feats = format!("{} {}\n", n, x.cols());
    for i in 0..n {
        let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        feats.push_str(&row.join(" "));
        feats.push('\n');
    }
    write_atomic(&dir.join(FEATURES_FILE), feats.as_bytes())?;

    let labels_path = dir.join(LABELS_FILE);
    match g.labels() {
        Some(y) => {
            let body: String = y.iter().enumerate().map(|(i, l)| format!("{i}\t{l}\n")).collect();
            write_atomic(&labels_path, body.as_bytes())?;
        }
        None if labels_path.exists() => fs::remove_file(&labels_path).map_err(|e| Error::io(&labels_path, e))?,
        None => {}
    }

    let meta = serde_json::to_string(&GraphMeta {
        num_classes: g.num_classes(),
    })
    .expect("meta serializes");
    write_atomic(&dir.join(META_FILE), meta.as_bytes())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<PairManifest> {
    let path = path.as_ref();
    let mut m: PairManifest = serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    if m.source.is_relative() {
        m.source = base.join(&m.source);
    }
    if m.target.is_relative() {
        m.target = base.join(&m.target);
    }
    Ok(m)
}

/// Loads both graphs named by a `pair.json` manifest.
pub fn load_pair(manifest: impl AsRef<Path>) -> Result<DomainPair<f64>> {
    let m = read_manifest(manifest)?;
    DomainPair::new(load_graph(&m.source)?, load_graph(&m.target)?)
}

/// Saves both graphs under `dir/source`, `dir/target` and writes `dir/pair.json`.
pub fn save_pair(pair: &DomainPair<f64>, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    save_graph(&pair.source, dir.join("source"))?;
    save_graph(&pair.target, dir.join("target"))?;
    let manifest = PairManifest {
        source: PathBuf::from("source"),
        target: PathBuf::from("target"),
    };
    let path = dir.join("pair.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

/// Hex SHA-256 over the graph's shape, adjacency, features and labels.
pub fn content_hash(g: &Graph<f64>) -> String {
    let mut h = Sha256::new();
    h.update((g.num_nodes() as u64).to_le_bytes());
    h.update((g.feature_dim() as u64).to_le_bytes());
    h.update((g.num_classes() as u64).to_le_bytes());
    for v in g.adjacency().data().iter().chain(g.features().data()) {
        h.update(v.to_le_bytes());
    }
    if let Some(y) = g.labels() {
        for &l in y {
            h.update((l as u64).to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Block-model parameters of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSbm {
    pub n: usize,
    /// Relative class sizes; normalized internally.
    pub class_proportions: Vec<f64>,
    pub p_in: f64,
    pub p_out: f64,
}

/// Two stochastic block models sharing a label space, with a per-class feature shift
/// applied to the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub source: DomainSbm,
    pub target: DomainSbm,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Class `c` has feature mean `mean_scale · e_c`.
    pub mean_scale: f64,
    /// Target class means move by `shift · u_c`, `u_c` a fixed unit vector per class.
    pub shift: f64,
    /// Standard deviation of the isotropic feature noise in both domains.
    pub noise: f64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            source: DomainSbm {
                n: 200,
                class_proportions: vec![1.0; 3],
                p_in: 0.10,
                p_out: 0.01,
            },
            target: DomainSbm {
                n: 200,
                class_proportions: vec![1.0; 3],
                p_in: 0.06,
                p_out: 0.02,
            },
            num_classes: 3,
            feature_dim: 16,
            mean_scale: 1.0,
            shift: 1.0,
            noise: 0.5,
        }
    }
}

/// Seed of the class shift directions; fixed so every generated pair shares them.
const SHIFT_DIRECTION_SEED: u64 = 0x5EED_D1EC;

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        if self.feature_dim < self.num_classes {
            return bad(format!(
                "feature_dim {} must be at least num_classes {}",
                self.feature_dim, self.num_classes
            ));
        }
        if !(self.shift >= 0.0 && self.noise >= 0.0 && self.mean_scale.is_finite()) {
            return bad("shift and noise must be nonnegative".into());
        }
        for (name, d) in [("source", &self.source), ("target", &self.target)] {
            if !(0.0 <= d.p_out && d.p_out <= d.p_in && d.p_in <= 1.0) {
                return bad(format!("{name}: need 0 <= p_out <= p_in <= 1, got {} / {}", d.p_in, d.p_out));
            }
            if d.class_proportions.len() != self.num_classes {
                return bad(format!(
                    "{name}: {} class proportions for {} classes",
                    d.class_proportions.len(),
                    self.num_classes
                ));
            }
            if d.class_proportions.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return bad(format!("{name}: class proportions must be nonnegative"));
            }
            let counts = class_counts(d.n, &d.class_proportions);
            if let Some(c) = counts.iter().position(|&k| k == 0) {
                return bad(format!("{name}: class {c} would be empty"));
            }
        }
        Ok(())
    }

    pub fn class_means(&self) -> Matrix<f64> {
        Matrix::from_fn(self.num_classes, self.feature_dim, |c, j| {
            if c == j {
                self.mean_scale
            } else {
                0.0
            }
        })
    }

    /// Unit shift direction per class (rows); the same for every seed.
    pub fn shift_directions(&self) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(SHIFT_DIRECTION_SEED);
        let mut m = Matrix::zeros(self.num_classes, self.feature_dim);
        for c in 0..self.num_classes {
            let v: Vec<f64> = (0..self.feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (j, x) in v.into_iter().enumerate() {
                m.set(c, j, x / norm);
            }
        }
        m
    }
}

/// Largest-remainder apportionment of `n` nodes to classes.
pub fn class_counts(n: usize, proportions: &[f64]) -> Vec<usize> {
    let total: f64 = proportions.iter().sum();
    if total <= 0.0 {
        return vec![0; proportions.len()];
    }
    let exact: Vec<f64> = proportions.iter().map(|p| p / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[c] += 1;
        rest -= 1;
    }
    counts
}

fn sample_domain(
    d: &DomainSbm,
    means: &Matrix<f64>,
    offsets: Option<&Matrix<f64>>,
    spec: &SbmSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Graph<f64>> {
    let counts = class_counts(d.n, &d.class_proportions);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(rng);

    let n = d.n;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { d.p_in } else { d.p_out };
            if rng.random::<f64>() < p {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    let x = Matrix::from_fn(n, spec.feature_dim, |i, j| {
        let c = labels[i];
        let shift = offsets.map_or(0.0, |o| spec.shift * o.get(c, j));
        let eps: f64 = StandardNormal.sample(rng);
        means.get(c, j) + shift + spec.noise * eps
    });
    Graph::new(a, x, Some(labels), spec.num_classes)
}

/// Samples a source/target pair. Both graphs carry labels; the target's are for
/// evaluation only.
pub fn generate_sbm_pair(spec: &SbmSpec, seed: u64) -> Result<DomainPair<f64>> {
    spec.validate()?;
    let means = spec.class_means();
    let dirs = spec.shift_directions();
    let mut rng_s = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, &[1]));
    let mut rng_t = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, &[2]));
    let source = sample_domain(&spec.source, &means, None, spec, &mut rng_s)?;
    let target = sample_domain(&spec.target, &means, Some(&dirs), spec, &mut rng_t)?;
    DomainPair::new(source, target)
}
