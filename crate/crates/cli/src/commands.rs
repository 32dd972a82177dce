use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use sagda_core::data_io::{content_hash, generate_sbm_pair, load_pair, save_pair, write_atomic};
use sagda_core::spectral::{class_signatures, cross_domain_signature_correlation_with, laplacian_basis};
use sagda_core::theory::{perturbation_sweep, BoundConfig, SweepConfig};
use sagda_core::trainer::{
    accuracy, embed, evaluate, target_logits, RunStatus, TrainConfig, TrainHooks, TrainOutput, Variant,
};
use sagda_core::{DomainPair, Error, FilterBank, Matrix, PpmiCache};

use crate::config::Settings;
use crate::model::ModelFile;
use crate::{Common, Failure};

pub const RESOLVED_CONFIG: &str = "resolved-config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Train,
    Eval,
    Spectra,
    VerifyLemma,
    GenSynth,
    Ablate,
}

/// Snapshot written before any work starts; enough to repeat the run.
#[derive(Debug, Serialize, Deserialize)]
struct Resolved {
    command: Kind,
    out: PathBuf,
    pair: Option<PathBuf>,
    model: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    dump_embeddings: bool,
    settings: BTreeMap<String, String>,
}

pub struct Invocation {
    kind: Kind,
    out: PathBuf,
    pair: Option<PathBuf>,
    model: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    dump_embeddings: bool,
    settings: Settings,
}

fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(p).map_err(|e| Failure::Usage(format!("bad path {}: {e}", p.display())))
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut body = serde_json::to_string_pretty(value).expect("outputs serialize");
    body.push('\n');
    Ok(write_atomic(path, body.as_bytes())?)
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Failure::Usage(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn matrix_rows(m: &Matrix) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..m.rows()).map(move |i| m.row(i).iter().map(|v| format!("{v:e}")).collect())
}

impl Invocation {
    pub fn new(kind: Kind, common: &Common) -> Result<Self, Failure> {
        let mut settings = Settings::default();
        if let Some(path) = &common.config {
            settings.apply_file(path)?;
        }
        settings.apply_overrides(&common.set)?;
        if let Some(seed) = common.seed {
            settings.train.seed = seed;
        }
        Ok(Self {
            kind,
            out: absolute(&common.out)?,
            pair: None,
            model: None,
            cache_dir: None,
            dump_embeddings: false,
            settings,
        })
    }

    pub fn with_pair(mut self, p: PathBuf) -> Self {
        self.pair = Some(p);
        self
    }

    pub fn with_model(mut self, p: PathBuf) -> Self {
        self.model = Some(p);
        self
    }

    pub fn with_cache(mut self, p: Option<PathBuf>) -> Self {
        self.cache_dir = p;
        self
    }

    pub fn with_dump(mut self, on: bool) -> Self {
        self.dump_embeddings = on;
        self
    }

    pub fn from_resolved(path: &Path, out: Option<PathBuf>) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let r: Resolved = serde_json::from_str(&text).map_err(|e| {
            Failure::Core(Error::Json {
                path: path.to_path_buf(),
                source: e,
            })
        })?;
        let settings =
            Settings::from_map(&r.settings).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        Ok(Self {
            kind: r.command,
            out: match out {
                Some(o) => absolute(&o)?,
                None => r.out,
            },
            pair: r.pair,
            model: r.model,
            cache_dir: r.cache_dir,
            dump_embeddings: r.dump_embeddings,
            settings,
        })
    }

    fn resolved(&self) -> Result<Resolved, Failure> {
        let abs = |p: &Option<PathBuf>| p.as_deref().map(absolute).transpose();
        Ok(Resolved {
            command: self.kind,
            out: self.out.clone(),
            pair: abs(&self.pair)?,
            model: abs(&self.model)?,
            cache_dir: abs(&self.cache_dir)?,
            dump_embeddings: self.dump_embeddings,
            settings: self.settings.to_map(),
        })
    }

    pub fn execute(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        write_json(&self.out.join(RESOLVED_CONFIG), &self.resolved()?)?;
        match self.kind {
            Kind::Train => self.train(),
            Kind::Eval => self.eval(),
            Kind::Spectra => self.spectra(),
            Kind::VerifyLemma => self.verify_lemma(),
            Kind::GenSynth => self.gen_synth(),
            Kind::Ablate => self.ablate(),
        }
    }

    fn pair(&self) -> Result<DomainPair, Failure> {
        let p = self.pair.as_ref().expect("subcommand requires --pair");
        Ok(load_pair(p)?)
    }

    fn cache(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    /// Trains one configuration, streaming metrics into `dir/metrics.jsonl`.
    fn run_training(&self, pair: &DomainPair, cfg: &TrainConfig, dir: &Path) -> Result<TrainOutput, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("metrics.jsonl");
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        let out = {
            let hooks = TrainHooks {
                cache_dir: Some(self.cache()),
                on_epoch: Some(Box::new(|r| {
                    writeln!(w, "{}", r.to_json_line()).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })
                })),
            };
            sagda_core::trainer::train_with(pair, cfg, hooks)?
        };
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(out)
    }

    fn train(&self) -> Result<(), Failure> {
        let pair = self.pair()?;
        let cfg = &self.settings.train;
        let out = self.run_training(&pair, cfg, &self.out)?;
        let variant = cfg.variant;
        write_json(&self.out.join("model.json"), &ModelFile::new(variant, &out.encoder, &out.heads))?;
        write_json(
            &self.out.join("summary.json"),
            &json!({
                "command": "train",
                "config": cfg,
                "status": out.status,
                "epochs_run": out.records.len(),
                "final_accuracy": out.final_accuracy(),
                "final": out.records.last(),
                "inputs": {
                    "source_hash": content_hash(&pair.source),
                    "target_hash": content_hash(&pair.target),
                },
            }),
        )?;
        if self.dump_embeddings {
            self.dump(&pair, &out, variant)?;
        }
        match &out.status {
            RunStatus::Completed => {
                if let Some(acc) = out.final_accuracy() {
                    println!("target accuracy {acc:.4} after {} epochs", out.records.len());
                }
                Ok(())
            }
            RunStatus::Diverged { epoch, reason } => Err(Failure::Diverged(format!("epoch {epoch}: {reason}"))),
        }
    }

    fn dump(&self, pair: &DomainPair, out: &TrainOutput, variant: Variant) -> Result<(), Failure> {
        for (name, g) in [("source", &pair.source), ("target", &pair.target)] {
            let cache = PpmiCache::new(g)?;
            let z = embed(g, &cache, &out.encoder, variant.fusion())?;
            let mut header: Vec<String> = vec!["node".into(), "label".into()];
            header.extend((0..z.cols()).map(|j| format!("z{j}")));
            let labels = g.labels();
            let rows = matrix_rows(&z).enumerate().map(|(i, mut r)| {
                let mut row = vec![i.to_string(), labels.map_or(String::new(), |y| y[i].to_string())];
                row.append(&mut r);
                row
            });
            write_csv(&self.out.join(format!("embeddings_{name}.csv")), &header, rows)?;
        }
        Ok(())
    }

    fn eval(&self) -> Result<(), Failure> {
        let pair = self.pair()?;
        let path = self.model.as_ref().expect("eval requires --model");
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let model: ModelFile = serde_json::from_str(&text).map_err(|e| {
            Failure::Core(Error::Json {
                path: path.clone(),
                source: e,
            })
        })?;
        let (variant, enc, heads) = model.into_params()?;
        if enc.w1.rows() != pair.feature_dim() || heads.num_classes() != pair.num_classes() {
            return Err(Failure::Usage(format!(
                "model expects {} features and {} classes, pair has {} and {}",
                enc.w1.rows(),
                heads.num_classes(),
                pair.feature_dim(),
                pair.num_classes()
            )));
        }
        let target = evaluate(&pair.target, &enc, &heads, variant.fusion())?;
        let source_cache = PpmiCache::new(&pair.source)?;
        let source = accuracy(
            &target_logits(&pair.source, &source_cache, &enc, &heads, variant.fusion())?,
            pair.source_labels(),
        )?;
        write_json(
            &self.out.join("eval.json"),
            &json!({"variant": variant, "target_accuracy": target, "source_accuracy": source}),
        )?;
        println!("target accuracy {target:.4}");
        Ok(())
    }

    fn spectra(&self) -> Result<(), Failure> {
        let pair = self.pair()?;
        if pair.target.labels().is_none() {
            return Err(Failure::Usage("spectra needs labels on the target graph".into()));
        }
        let bs = laplacian_basis(&pair.source)?;
        let bt = laplacian_basis(&pair.target)?;
        let corr = cross_domain_signature_correlation_with(&pair, &bs, &bt)?;
        let c = corr.rows();
        let header: Vec<String> = std::iter::once("source_class".to_string())
            .chain((0..c).map(|j| format!("target_{j}")))
            .collect();
        let rows = matrix_rows(&corr).enumerate().map(|(i, mut r)| {
            let mut row = vec![i.to_string()];
            row.append(&mut r);
            row
        });
        write_csv(&self.out.join("correlation.csv"), &header, rows)?;

        let len = pair.source.num_nodes().min(pair.target.num_nodes());
        for (name, g, b) in [("source", &pair.source, &bs), ("target", &pair.target, &bt)] {
            let sigs = class_signatures(g, b, len)?;
            let header: Vec<String> = std::iter::once("class".to_string())
                .chain((0..len).map(|j| format!("bin{j}")))
                .collect();
            let rows = sigs.iter().enumerate().map(|(ci, s)| {
                std::iter::once(ci.to_string())
                    .chain(s.iter().map(|v| format!("{v:e}")))
                    .collect()
            });
            write_csv(&self.out.join(format!("signatures_{name}.csv")), &header, rows)?;
            let eig_rows = b.values().iter().enumerate().map(|(i, v)| vec![i.to_string(), format!("{v:e}")]);
            write_csv(
                &self.out.join(format!("eigenvalues_{name}.csv")),
                &["index".to_string(), "lambda".to_string()],
                eig_rows,
            )?;
        }

        let diag = (0..c).map(|i| corr.get(i, i)).sum::<f64>() / c as f64;
        let off_count = c * c - c;
        let off = if off_count == 0 {
            f64::NAN
        } else {
            (0..c)
                .flat_map(|i| (0..c).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| corr.get(i, j))
                .sum::<f64>()
                / off_count as f64
        };
        write_json(
            &self.out.join("summary.json"),
            &json!({"command": "spectra", "diagonal_mean": diag, "off_diagonal_mean": if off.is_nan() { None } else { Some(off) }}),
        )?;
        println!("same-class correlation {diag:.4}, cross-class {off:.4}");
        Ok(())
    }

    fn verify_lemma(&self) -> Result<(), Failure> {
        let l = &self.settings.lemma;
        let filters = FilterBank::default();
        let path = self.out.join("bound_reports.jsonl");
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        let mut summaries = Vec::new();
        for &eps in &l.eps {
            let cfg = SweepConfig {
                nodes: l.nodes,
                feature_dim: l.feature_dim,
                hidden: l.hidden,
                edge_prob: l.edge_prob,
                trials: l.trials,
                eps,
                seed: self.settings.train.seed,
                bound: BoundConfig {
                    alpha: l.alpha,
                    search: l.search,
                },
            };
            let (reports, summary) = perturbation_sweep(&cfg, &filters)?;
            for (trial, r) in reports.iter().enumerate() {
                let mut v = serde_json::to_value(r).expect("report serializes");
                v["eps"] = json!(eps);
                v["trial"] = json!(trial);
                writeln!(w, "{v}").map_err(|e| io_err(&path, e))?;
            }
            println!(
                "eps {eps:e}: bound held in {}/{} trials (mean lhs {:.3e}, mean rhs {:.3e})",
                summary.holds, summary.trials, summary.mean_lhs, summary.mean_rhs
            );
            summaries.push(summary);
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        write_json(&self.out.join("summary.json"), &json!({"command": "verify-lemma", "sweeps": summaries}))
    }

    fn gen_synth(&self) -> Result<(), Failure> {
        let pair = generate_sbm_pair(&self.settings.synth, self.settings.train.seed)?;
        let manifest = save_pair(&pair, &self.out)?;
        println!(
            "wrote {} ({} + {} nodes, {} + {} edges)",
            manifest.display(),
            pair.source.num_nodes(),
            pair.target.num_nodes(),
            pair.source.num_edges(),
            pair.target.num_edges()
        );
        Ok(())
    }

    fn ablate(&self) -> Result<(), Failure> {
        let pair = self.pair()?;
        let mut rows = Vec::new();
        let mut diverged = Vec::new();
        for v in Variant::ALL {
            let cfg = TrainConfig {
                variant: v,
                ..self.settings.train.clone()
            };
            let out = self.run_training(&pair, &cfg, &self.out.join(v.name()))?;
            if let RunStatus::Diverged { epoch, .. } = &out.status {
                diverged.push(format!("{} at epoch {epoch}", v.name()));
            }
            let last = out.records.last();
            rows.push(json!({
                "variant": v.name(),
                "accuracy": out.final_accuracy(),
                "L_s": last.map(|r| r.source),
                "L_t": last.map(|r| r.target),
                "L_D": last.map(|r| r.domain),
                "status": out.status,
            }));
            println!(
                "{:<10} {}",
                v.name(),
                out.final_accuracy().map_or("n/a".into(), |a| format!("{a:.4}"))
            );
        }
        let csv_rows = rows.iter().map(|r| {
            vec![
                r["variant"].as_str().unwrap_or_default().to_string(),
                r["accuracy"].as_f64().map_or(String::new(), |a| a.to_string()),
            ]
        });
        write_csv(&self.out.join("ablation.csv"), &["variant".into(), "accuracy".into()], csv_rows)?;
        write_json(
            &self.out.join("summary.json"),
            &json!({"command": "ablate", "config": self.settings.train, "rows": rows}),
        )?;
        if diverged.is_empty() {
            Ok(())
        } else {
            Err(Failure::Diverged(diverged.join(", ")))
        }
    }
}
