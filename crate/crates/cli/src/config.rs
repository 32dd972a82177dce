//! Flat `key = value` settings shared by every subcommand.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sagda_core::data_io::SbmSpec;
use sagda_core::theory::PermutationSearch;
use sagda_core::trainer::{Timing, TrainConfig, Variant};

use crate::Failure;

/// Settings of the stability-bound sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaSettings {
    pub nodes: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub edge_prob: f64,
    pub trials: usize,
    pub eps: Vec<f64>,
    pub alpha: f64,
    pub search: PermutationSearch,
}

impl Default for LemmaSettings {
    fn default() -> Self {
        Self {
            nodes: 6,
            feature_dim: 3,
            hidden: 4,
            edge_prob: 0.6,
            trials: 100,
            eps: vec![1e-3, 1e-2],
            alpha: 0.8,
            search: PermutationSearch::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub train: TrainConfig,
    pub synth: SbmSpec,
    pub lemma: LemmaSettings,
}

struct Key {
    name: &'static str,
    help: &'static str,
    get: fn(&Settings) -> String,
    set: fn(&mut Settings, &str) -> Result<(), String>,
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: Display,
{
    v.trim().parse().map_err(|e| format!("cannot parse {v:?}: {e}"))
}

fn finite(v: &str) -> Result<f64, String> {
    let x: f64 = parse(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{v:?} is not a finite number"))
    }
}

fn float_list(v: &str) -> Result<Vec<f64>, String> {
    let xs = v.split(',').map(finite).collect::<Result<Vec<_>, _>>()?;
    if xs.is_empty() {
        return Err("empty list".into());
    }
    Ok(xs)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

macro_rules! key {
    ($name:literal, $help:literal, |$s:ident| $get:expr, |$t:ident, $v:ident| $set:expr) => {
        Key {
            name: $name,
            help: $help,
            get: |$s| $get,
            set: |$t, $v| {
                $set;
                Ok(())
            },
        }
    };
}

const KEYS: &[Key] = &[
    key!("alpha", "source weight of the high-pass band", |s| s.train.alpha.to_string(), |s, v| s.train.alpha = finite(v)?),
    key!("beta", "source weight of the low-pass band", |s| s.train.beta.to_string(), |s, v| s.train.beta = finite(v)?),
    key!("gamma1", "weight of the target entropy loss", |s| s.train.gamma1.to_string(), |s, v| s.train.gamma1 = finite(v)?),
    key!("gamma2", "weight of the domain loss", |s| s.train.gamma2.to_string(), |s, v| s.train.gamma2 = finite(v)?),
    key!("lr", "Adam learning rate", |s| s.train.lr.to_string(), |s, v| s.train.lr = finite(v)?),
    key!("epochs", "training epochs", |s| s.train.epochs.to_string(), |s, v| s.train.epochs = parse(v)?),
    key!("hidden1", "first hidden width", |s| s.train.hidden.0.to_string(), |s, v| s.train.hidden.0 = parse(v)?),
    key!("hidden2", "embedding width", |s| s.train.hidden.1.to_string(), |s, v| s.train.hidden.1 = parse(v)?),
    key!("dropout", "dropout rate in the target encoder", |s| s.train.dropout.to_string(), |s, v| s.train.dropout = finite(v)?),
    key!("seed", "seed for initialization, dropout and data generation", |s| s.train.seed.to_string(), |s, v| s.train.seed = parse(v)?),
    key!(
        "k",
        "spectral components to mix, or auto for min(n_s, n_t)",
        |s| s.train.k.map_or("auto".into(), |k| k.to_string()),
        |s, v| s.train.k = if v.trim() == "auto" { None } else { Some(parse(v)?) }
    ),
    key!("eval_every", "evaluate target accuracy every this many epochs", |s| s.train.eval_every.to_string(), |s, v| s.train.eval_every = parse(v)?),
    key!(
        "variant",
        "full, no_low, no_high, no_global, no_domain or no_target",
        |s| s.train.variant.name().to_string(),
        |s, v| s.train.variant = Variant::parse(v.trim()).ok_or_else(|| format!("unknown variant {v:?}"))?
    ),
    key!(
        "timing",
        "wall records epoch time in ms, off writes 0",
        |s| match s.train.timing {
            Timing::Wall => "wall".to_string(),
            Timing::Off => "off".to_string(),
        },
        |s, v| s.train.timing = match v.trim() {
            "wall" => Timing::Wall,
            "off" => Timing::Off,
            _ => return Err(format!("timing must be wall or off, got {v:?}")),
        }
    ),
    key!("synth.n_source", "source nodes", |s| s.synth.source.n.to_string(), |s, v| s.synth.source.n = parse(v)?),
    key!("synth.n_target", "target nodes", |s| s.synth.target.n.to_string(), |s, v| s.synth.target.n = parse(v)?),
    key!(
        "synth.classes",
        "number of classes (resets proportions to uniform)",
        |s| s.synth.num_classes.to_string(),
        |s, v| {
            let c: usize = parse(v)?;
            s.synth.num_classes = c;
            s.synth.source.class_proportions = vec![1.0; c];
            s.synth.target.class_proportions = vec![1.0; c];
        }
    ),
    key!(
        "synth.proportions",
        "comma-separated relative class sizes, both domains",
        |s| join(&s.synth.source.class_proportions),
        |s, v| {
            let p = float_list(v)?;
            s.synth.source.class_proportions = p.clone();
            s.synth.target.class_proportions = p;
        }
    ),
    key!("synth.p_in_source", "source intra-class edge probability", |s| s.synth.source.p_in.to_string(), |s, v| s.synth.source.p_in = finite(v)?),
    key!("synth.p_out_source", "source inter-class edge probability", |s| s.synth.source.p_out.to_string(), |s, v| s.synth.source.p_out = finite(v)?),
    key!("synth.p_in_target", "target intra-class edge probability", |s| s.synth.target.p_in.to_string(), |s, v| s.synth.target.p_in = finite(v)?),
    key!("synth.p_out_target", "target inter-class edge probability", |s| s.synth.target.p_out.to_string(), |s, v| s.synth.target.p_out = finite(v)?),
    key!("synth.dim", "feature dimension", |s| s.synth.feature_dim.to_string(), |s, v| s.synth.feature_dim = parse(v)?),
    key!("synth.mean_scale", "length of each class mean", |s| s.synth.mean_scale.to_string(), |s, v| s.synth.mean_scale = finite(v)?),
    key!("synth.shift", "target class-mean shift", |s| s.synth.shift.to_string(), |s, v| s.synth.shift = finite(v)?),
    key!("synth.noise", "feature noise standard deviation", |s| s.synth.noise.to_string(), |s, v| s.synth.noise = finite(v)?),
    key!("lemma.nodes", "nodes per random graph", |s| s.lemma.nodes.to_string(), |s, v| s.lemma.nodes = parse(v)?),
    key!("lemma.feature_dim", "feature dimension", |s| s.lemma.feature_dim.to_string(), |s, v| s.lemma.feature_dim = parse(v)?),
    key!("lemma.hidden", "layer output width", |s| s.lemma.hidden.to_string(), |s, v| s.lemma.hidden = parse(v)?),
    key!("lemma.edge_prob", "edge probability", |s| s.lemma.edge_prob.to_string(), |s, v| s.lemma.edge_prob = finite(v)?),
    key!("lemma.trials", "trials per perturbation size", |s| s.lemma.trials.to_string(), |s, v| s.lemma.trials = parse(v)?),
    key!("lemma.eps", "comma-separated perturbation sizes", |s| join(&s.lemma.eps), |s, v| s.lemma.eps = float_list(v)?),
    key!("lemma.alpha", "source weight of the mixing layer", |s| s.lemma.alpha.to_string(), |s, v| s.lemma.alpha = finite(v)?),
    key!(
        "lemma.search",
        "exhaustive, or greedy for graphs over 8 nodes (not optimal)",
        |s| match s.lemma.search {
            PermutationSearch::Exhaustive => "exhaustive".to_string(),
            PermutationSearch::Greedy => "greedy".to_string(),
        },
        |s, v| s.lemma.search = match v.trim() {
            "exhaustive" => PermutationSearch::Exhaustive,
            "greedy" => PermutationSearch::Greedy,
            _ => return Err(format!("search must be exhaustive or greedy, got {v:?}")),
        }
    ),
];

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let k = KEYS
            .iter()
            .find(|k| k.name == key)
            .ok_or_else(|| format!("unknown config key {key:?}"))?;
        (k.set)(self, value).map_err(|e| format!("{key}: {e}"))
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        KEYS.iter().map(|k| (k.name.to_string(), (k.get)(self))).collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, String> {
        let mut s = Settings::default();
        // Class count first: it resets the proportions that may follow.
        if let Some(c) = map.get("synth.classes") {
            s.set("synth.classes", c)?;
        }
        for (k, v) in map {
            s.set(k, v)?;
        }
        Ok(s)
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Failure::Usage(format!("{}:{}: expected key = value, got {raw:?}", path.display(), i + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Failure::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Applies `--set key=value` flags in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), Failure> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects key=value, got {o:?}")))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Failure::Usage(format!("--set {o}: {e}")))?;
        }
        Ok(())
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let defaults = Settings::default();
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (for --config files and --set), with defaults:\n");
    for k in KEYS {
        out.push_str(&format!("  {:width$}  {:>10}  {}\n", k.name, (k.get)(&defaults), k.help));
    }
    out
}
