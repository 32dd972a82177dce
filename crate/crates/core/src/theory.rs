//! Numerical check of the stability bound for the spectral mixing layer on
//! small graphs, with a brute-force optimal node alignment.
//!
//! The layer is `f(G_s + G_t) = σ(own·X_s·W + cross·X_t·W)` with the mixing
//! operators of [`SpectralMixer`] at `α = β` and all components kept, and
//! `f(G_t) = σ(U_t g(Λ_t) U_tᵀ X_t W)`. Source and target outputs live on
//! different node sets, so the gap is measured after aligning the target by
//! `P★`: `‖f(G_s + G_t) − P★ f(G_t)‖_F`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_permutation, normalized_laplacian, Graph};
use crate::matrix::Matrix;
use crate::spectral::{laplacian_basis, leaky_relu, FilterBank, SpectralMixConfig, SpectralMixer};

/// Largest `n` the exhaustive search accepts (8! = 40320 candidates).
pub const MAX_EXHAUSTIVE_NODES: usize = 8;

/// Grid resolution of [`spectral_lipschitz`].
pub const LIPSCHITZ_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationSearch {
    /// Exact minimizer over all `n!` permutations.
    #[default]
    Exhaustive,
    /// Greedy matching refined by pairwise swaps. Fast, not guaranteed optimal.
    Greedy,
}

/// `‖X_s − P X_t‖_F + ‖A_s − P A_t Pᵀ‖_F` with `(P X)_i = X_{perm[i]}`.
pub fn alignment_objective(gs: &Graph<f64>, gt: &Graph<f64>, perm: &[usize]) -> f64 {
    let (xs, xt) = (gs.features(), gt.features());
    let (a_s, a_t) = (gs.adjacency(), gt.adjacency());
    let n = perm.len();
    let mut fx = 0.0;
    for i in 0..n {
        for (a, b) in xs.row(i).iter().zip(xt.row(perm[i])) {
            fx += (a - b) * (a - b);
        }
    }
    let mut fa = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = a_s.get(i, j) - a_t.get(perm[i], perm[j]);
            fa += d * d;
        }
    }
    fx.sqrt() + fa.sqrt()
}

/// Rearranges `p` into the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&v| v > p[i]).expect("a larger element exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

fn check_same_size(gs: &Graph<f64>, gt: &Graph<f64>) -> Result<usize> {
    if gs.num_nodes() != gt.num_nodes() {
        return Err(Error::contract(format!(
            "node alignment needs equal sizes, got {} and {}",
            gs.num_nodes(),
            gt.num_nodes()
        )));
    }
    if gs.feature_dim() != gt.feature_dim() {
        return Err(Error::contract(format!(
            "feature dimensions differ: {} and {}",
            gs.feature_dim(),
            gt.feature_dim()
        )));
    }
    Ok(gs.num_nodes())
}

/// Permutation minimizing [`alignment_objective`]. Among exact ties the
/// lexicographically smallest wins.
pub fn optimal_permutation(gs: &Graph<f64>, gt: &Graph<f64>) -> Result<Vec<usize>> {
    let n = check_same_size(gs, gt)?;
    if n > MAX_EXHAUSTIVE_NODES {
        return Err(Error::Capacity(format!(
            "exhaustive alignment is limited to {MAX_EXHAUSTIVE_NODES} nodes, got {n}; use the greedy search instead"
        )));
    }
    let mut p: Vec<usize> = (0..n).collect();
    let mut best = p.clone();
    let mut best_val = alignment_objective(gs, gt, &p);
    while next_permutation(&mut p) {
        let v = alignment_objective(gs, gt, &p);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&p);
        }
    }
    Ok(best)
}

/// Greedy node matching on feature and degree distance, then pairwise swaps
/// while they lower [`alignment_objective`]. A heuristic for graphs too large
/// for [`optimal_permutation`]; the result is not guaranteed optimal.
pub fn greedy_permutation(gs: &Graph<f64>, gt: &Graph<f64>) -> Result<Vec<usize>> {
    let n = check_same_size(gs, gt)?;
    let (ds, dt) = (gs.degrees(), gt.degrees());
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let fx: f64 = gs
                .features()
                .row(i)
                .iter()
                .zip(gt.features().row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            pairs.push((fx + (ds[i] - dt[j]).powi(2), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
        }
    }
    let mut cur = alignment_objective(gs, gt, &perm);
    loop {
        let mut improved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                perm.swap(i, j);
                let v = alignment_objective(gs, gt, &perm);
                if v < cur {
                    cur = v;
                    improved = true;
                } else {
                    perm.swap(i, j);
                }
            }
        }
        if !improved {
            return Ok(perm);
        }
    }
}

/// `max |g′(λ)|` over `[0, 2]` for `g = g_L + g_H`, on an evenly spaced grid
/// that includes both endpoints.
pub fn spectral_lipschitz(filters: &FilterBank<f64>) -> f64 {
    let dg = filters.combined().derivative();
    (0..=LIPSCHITZ_GRID)
        .map(|i| dg.eval(2.0 * i as f64 / LIPSCHITZ_GRID as f64).abs())
        .fold(0.0, f64::max)
}

/// `(‖U_s − U_t‖_F + 1)² − 1`.
pub fn eigenvector_misalignment(us: &Matrix<f64>, ut: &Matrix<f64>) -> Result<f64> {
    let d = us.sub(ut)?.frobenius_norm();
    Ok((d + 1.0).powi(2) - 1.0)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn operator_norm(m: &Matrix<f64>) -> f64 {
    const STEPS: usize = 200;
    const TOL: f64 = 1e-10;
    if m.len() == 0 || m.max_abs() == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0B_5EED);
    let mut v = Matrix::from_fn(m.cols(), 1, |_, _| 1.0 + rng.random::<f64>());
    let norm = v.frobenius_norm();
    v = v.scale(1.0 / norm);
    let mut sigma = 0.0;
    for _ in 0..STEPS {
        let w = m.t_matmul_unchecked(&m.matmul_unchecked(&v));
        let wn = w.frobenius_norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        v = w.scale(1.0 / wn);
        let done = (next - sigma).abs() <= TOL * next;
        sigma = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient on the converged vector is sharper than the last ratio.
    m.matmul_unchecked(&v).frobenius_norm().max(sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    /// Source weight, used for both frequency bands.
    pub alpha: f64,
    pub search: PermutationSearch,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            search: PermutationSearch::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `‖f(G_s + G_t) − P★ f(G_t)‖_F`.
    pub lhs: f64,
    /// The same gap before the nonlinearity; `lhs ≤ linear_gap`.
    pub linear_gap: f64,
    /// `α [C_λ (1 + τ) ΔL + max|g(L_t)| ΔX]`.
    pub first_order_rhs: f64,
    /// `‖L_s − P★ L_t P★ᵀ‖_F`.
    pub delta_l: f64,
    /// `‖X_s − P★ X_t‖_F`.
    pub delta_x: f64,
    pub tau: f64,
    pub c_lambda: f64,
    pub g_max: f64,
    pub alpha: f64,
    pub permutation: Vec<usize>,
    /// Whether the permutation is the exhaustive optimum.
    pub exact_alignment: bool,
    pub holds: bool,
}

/// Relative slack for `holds`, so exact-zero cases are not failed by rounding.
const HOLDS_SLACK: f64 = 1e-12;

/// Evaluates both sides of the first-order bound for one graph pair and layer
/// weight. `X_s`, `X_t` are divided by their common largest singular value and
/// `W` by its own before anything else is computed.
pub fn verify_bound(
    gs: &Graph<f64>,
    gt: &Graph<f64>,
    weight: &Matrix<f64>,
    filters: &FilterBank<f64>,
    cfg: &BoundConfig,
) -> Result<BoundReport> {
    let n = check_same_size(gs, gt)?;
    if weight.rows() != gs.feature_dim() {
        return Err(Error::Dimension {
            op: "verify_bound",
            left: gs.features().shape(),
            right: weight.shape(),
        });
    }
    let mix = SpectralMixConfig {
        alpha: cfg.alpha,
        beta: cfg.alpha,
        k: Some(n),
    };
    mix.validate()?;

    let x_scale = operator_norm(gs.features()).max(operator_norm(gt.features()));
    let (gs, gt) = if x_scale > 0.0 {
        (
            gs.with_features(gs.features().scale(1.0 / x_scale))?,
            gt.with_features(gt.features().scale(1.0 / x_scale))?,
        )
    } else {
        (gs.clone(), gt.clone())
    };
    let w_scale = operator_norm(weight);
    let w = if w_scale > 0.0 {
        weight.scale(1.0 / w_scale)
    } else {
        weight.clone()
    };
    for (name, m) in [("X_s", gs.features()), ("X_t", gt.features()), ("W", &w)] {
        let norm = operator_norm(m);
        if norm > 1.0 + 1e-9 {
            return Err(Error::contract(format!("{name} has operator norm {norm} > 1 after normalization")));
        }
    }

    let (perm, exact) = match cfg.search {
        PermutationSearch::Exhaustive => (optimal_permutation(&gs, &gt)?, true),
        PermutationSearch::Greedy => (greedy_permutation(&gs, &gt)?, false),
    };
    check_permutation(&perm, n)?;

    let bs = laplacian_basis(&gs)?;
    let bt = laplacian_basis(&gt)?;
    let mixer = SpectralMixer::new(&bs, &bt, &mix, filters)?;
    let xsw = gs.features().matmul(&w)?;
    let xtw = gt.features().matmul(&w)?;
    let pre_mixed = mixer.mix(&xsw, &xtw)?;
    let pre_target = mixer.target.matmul(&xtw)?.permute_rows(&perm);
    let linear_gap = pre_mixed.sub(&pre_target)?.frobenius_norm();
    let lhs = leaky_relu(&pre_mixed).sub(&leaky_relu(&pre_target))?.frobenius_norm();

    let ls = normalized_laplacian(&gs);
    let lt_aligned = normalized_laplacian(&gt).permute_symmetric(&perm);
    let delta_l = ls.sub(&lt_aligned)?.frobenius_norm();
    let delta_x = gs.features().sub(&gt.features().permute_rows(&perm))?.frobenius_norm();
    let tau = eigenvector_misalignment(bs.vectors(), bt.vectors())?;
    let c_lambda = spectral_lipschitz(filters);
    let g = filters.combined();
    let g_max = bt.values().iter().map(|&l| g.eval(l).abs()).fold(0.0, f64::max);
    let first_order_rhs = cfg.alpha * (c_lambda * (1.0 + tau) * delta_l + g_max * delta_x);
    let holds = lhs <= first_order_rhs + HOLDS_SLACK * (1.0 + first_order_rhs);
    Ok(BoundReport {
        lhs,
        linear_gap,
        first_order_rhs,
        delta_l,
        delta_x,
        tau,
        c_lambda,
        g_max,
        alpha: cfg.alpha,
        permutation: perm,
        exact_alignment: exact,
        holds,
    })
}

/// Random weighted graph with edge probability `p`, weights uniform in
/// `[0.5, 1.5]` and standard normal features. Non-unit weights keep the
/// Laplacian spectrum free of the exact multiplicities unweighted graphs have.
pub fn random_weighted_graph(n: usize, d: usize, p: f64, rng: &mut impl Rng) -> Result<Graph<f64>> {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                let w = 0.5 + rng.random::<f64>();
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    let x = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    Graph::new(a, x, None, 1)
}

/// `g` with every existing edge weight scaled by `1 + ε·ξ` and `ε·ξ` added to
/// every feature, `ξ` standard normal. Weights are floored at zero.
pub fn perturb(g: &Graph<f64>, eps: f64, rng: &mut impl Rng) -> Result<Graph<f64>> {
    let n = g.num_nodes();
    let mut a = g.adjacency().clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = a.get(i, j);
            if w > 0.0 {
                let xi: f64 = StandardNormal.sample(rng);
                let nw = (w * (1.0 + eps * xi)).max(0.0);
                a.set(i, j, nw);
                a.set(j, i, nw);
            }
        }
    }
    let mut x = g.features().clone();
    for v in x.data_mut() {
        let xi: f64 = StandardNormal.sample(rng);
        *v += eps * xi;
    }
    Graph::new(a, x, g.labels().map(<[usize]>::to_vec), g.num_classes())
}

/// Shape of the random instances in a perturbation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub nodes: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub edge_prob: f64,
    pub trials: usize,
    pub eps: f64,
    pub seed: u64,
    pub bound: BoundConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            nodes: 6,
            feature_dim: 3,
            hidden: 4,
            edge_prob: 0.6,
            trials: 100,
            eps: 1e-3,
            seed: 0,
            bound: BoundConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub eps: f64,
    pub trials: usize,
    pub holds: usize,
    pub pass_rate: f64,
    pub mean_lhs: f64,
    pub mean_rhs: f64,
}

/// One trial: a random source graph, a perturbed copy as target, a random weight.
pub fn perturbation_trial(cfg: &SweepConfig, trial: usize, filters: &FilterBank<f64>) -> Result<BoundReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, &[trial as u64]));
    let gs = random_weighted_graph(cfg.nodes, cfg.feature_dim, cfg.edge_prob, &mut rng)?;
    let gt = perturb(&gs, cfg.eps, &mut rng)?;
    let w = Matrix::from_fn(cfg.feature_dim, cfg.hidden, |_, _| StandardNormal.sample(&mut rng));
    verify_bound(&gs, &gt, &w, filters, &cfg.bound)
}

pub fn perturbation_sweep(cfg: &SweepConfig, filters: &FilterBank<f64>) -> Result<(Vec<BoundReport>, SweepSummary)> {
    let reports = (0..cfg.trials)
        .map(|t| perturbation_trial(cfg, t, filters))
        .collect::<Result<Vec<_>>>()?;
    let holds = reports.iter().filter(|r| r.holds).count();
    let k = reports.len().max(1) as f64;
    let summary = SweepSummary {
        eps: cfg.eps,
        trials: reports.len(),
        holds,
        pass_rate: holds as f64 / k,
        mean_lhs: reports.iter().map(|r| r.lhs).sum::<f64>() / k,
        mean_rhs: reports.iter().map(|r| r.first_order_rhs).sum::<f64>() / k,
    };
    Ok((reports, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Polynomial;

    #[test]
    fn permutations_enumerate_lexicographically() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn lipschitz_of_simple_filters() {
        assert_eq!(spectral_lipschitz(&FilterBank::default()), 0.0);
        let half: FilterBank<f64> = FilterBank::new(Polynomial::zero(), Polynomial::new(vec![0.0, 0.5])).unwrap();
        assert!((spectral_lipschitz(&half) - 0.5).abs() < 1e-15);
        let square: FilterBank<f64> = FilterBank::new(Polynomial::zero(), Polynomial::new(vec![0.0, 0.0, 1.0])).unwrap();
        assert!((spectral_lipschitz(&square) - 4.0).abs() < 1e-3);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let m = Matrix::from_diag(&[0.5, -3.0, 2.0]);
        assert!((operator_norm(&m) - 3.0).abs() < 1e-8);
        assert_eq!(operator_norm(&Matrix::zeros(2, 3)), 0.0);
        let rect = Matrix::from_rows(&[[3.0, 0.0], [4.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((operator_norm(&rect) - 5.0).abs() < 1e-8);
    }

    #[test]
    fn capacity_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_weighted_graph(9, 2, 0.5, &mut rng).unwrap();
        assert!(matches!(optimal_permutation(&g, &g), Err(Error::Capacity(_))));
        let p = greedy_permutation(&g, &g).unwrap();
        assert_eq!(alignment_objective(&g, &g, &p), 0.0);
    }

    #[test]
    fn size_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_weighted_graph(3, 2, 0.5, &mut rng).unwrap();
        let b = random_weighted_graph(4, 2, 0.5, &mut rng).unwrap();
        assert!(optimal_permutation(&a, &b).is_err());
    }
}
