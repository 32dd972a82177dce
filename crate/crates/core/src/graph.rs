//! Undirected weighted graphs with node features, and the source/target pair.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Undirected graph with dense symmetric adjacency, node features and optional labels.
///
/// Invariants checked by [`Graph::new`]: `A == Aᵀ` exactly, zero diagonal,
/// nonnegative weights, one feature row per node, labels below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    adjacency: Matrix<T>,
    features: Matrix<T>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl<T: Scalar> Graph<T> {
    pub fn new(
        adjacency: Matrix<T>,
        features: Matrix<T>,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let (r, c) = adjacency.shape();
        if r != c {
            return Err(Error::InvalidGraph(format!("adjacency is {r}x{c}, not square")));
        }
        for i in 0..r {
            if adjacency.get(i, i) != T::zero() {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            for j in 0..r {
                let a = adjacency.get(i, j);
                if a < T::zero() {
                    return Err(Error::InvalidGraph(format!("negative weight {a} on edge ({i}, {j})")));
                }
                if j > i && a != adjacency.get(j, i) {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency not symmetric at ({i}, {j}): {a} vs {}",
                        adjacency.get(j, i)
                    )));
                }
            }
        }
        if features.rows() != r {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {r} nodes",
                features.rows()
            )));
        }
        if let Some(y) = &labels {
            if y.len() != r {
                return Err(Error::InvalidGraph(format!("{} labels for {r} nodes", y.len())));
            }
            if let Some((i, &l)) = y.iter().enumerate().find(|(_, &l)| l >= num_classes) {
                return Err(Error::InvalidGraph(format!(
                    "node {i} has label {l}, but num_classes is {num_classes}"
                )));
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    /// Unweighted graph from an undirected edge list.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Matrix<T>,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut a = Matrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            a.set(u, v, T::one());
            a.set(v, u, T::one());
        }
        Self::new(a, features, labels, num_classes)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Matrix<T> {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a contract error naming `what` when the graph is unlabeled.
    pub fn require_labels(&self, what: &str) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::contract(format!("{what} needs a labeled graph")))
    }

    pub fn num_edges(&self) -> usize {
        let n = self.num_nodes();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency.get(i, j) > T::zero() {
                    count += 1;
                }
            }
        }
        count
    }

    /// Copy with labels replaced (or dropped).
    pub fn with_labels(&self, labels: Option<Vec<usize>>) -> Result<Self> {
        Self::new(self.adjacency.clone(), self.features.clone(), labels, self.num_classes)
    }

    pub fn with_features(&self, features: Matrix<T>) -> Result<Self> {
        Self::new(self.adjacency.clone(), features, self.labels.clone(), self.num_classes)
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]` (`P·A·Pᵀ`, `P·X`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_nodes())?;
        let labels = self
            .labels
            .as_ref()
            .map(|y| perm.iter().map(|&p| y[p]).collect());
        Ok(Self {
            adjacency: self.adjacency.permute_symmetric(perm),
            features: self.features.permute_rows(perm),
            labels,
            num_classes: self.num_classes,
        })
    }

    pub fn degrees(&self) -> Vec<T> {
        self.adjacency.row_sums()
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::contract(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::contract(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Labeled source graph plus target graph whose labels are used for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair<T> {
    pub source: Graph<T>,
    pub target: Graph<T>,
}

impl<T: Scalar> DomainPair<T> {
    pub fn new(source: Graph<T>, target: Graph<T>) -> Result<Self> {
        if source.labels().is_none() {
            return Err(Error::InvalidGraph("source graph must be labeled".into()));
        }
        if source.feature_dim() != target.feature_dim() {
            return Err(Error::InvalidGraph(format!(
                "feature dimension differs: source {}, target {}",
                source.feature_dim(),
                target.feature_dim()
            )));
        }
        if source.num_classes() != target.num_classes() {
            return Err(Error::InvalidGraph(format!(
                "label space differs: source has {} classes, target {}",
                source.num_classes(),
                target.num_classes()
            )));
        }
        Ok(Self { source, target })
    }

    pub fn feature_dim(&self) -> usize {
        self.source.feature_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.source.num_classes()
    }

    pub fn source_labels(&self) -> &[usize] {
        self.source.labels().expect("validated at construction")
    }
}

/// Diagonal matrix of weighted degrees.
pub fn degree_matrix<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    Matrix::from_diag(&g.degrees())
}

fn inv_sqrt_or_zero<T: Scalar>(d: T) -> T {
    if d > T::zero() {
        T::one() / d.sqrt()
    } else {
        T::zero()
    }
}

/// `L = I - D^{-1/2} A D^{-1/2}`. Isolated nodes contribute a zero in `D^{-1/2}`,
/// so their diagonal entry is exactly 1.
pub fn normalized_laplacian<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let a = g.adjacency();
    let s: Vec<T> = g.degrees().into_iter().map(inv_sqrt_or_zero).collect();
    let n = g.num_nodes();
    Matrix::from_fn(n, n, |i, j| {
        // (s_i·s_j)·a is order-independent, so L is exactly symmetric.
        let off = s[i] * s[j] * a.get(i, j);
        if i == j {
            T::one() - off
        } else {
            -off
        }
    })
}

/// `D̃^{-1/2} (I + A) D̃^{-1/2}` with `D̃` the degrees of `I + A`.
pub fn renormalized_propagation<T: Scalar>(g: &Graph<T>) -> Matrix<T> {
    let n = g.num_nodes();
    let a = g.adjacency();
    let s: Vec<T> = g
        .degrees()
        .into_iter()
        .map(|d| inv_sqrt_or_zero(d + T::one()))
        .collect();
    Matrix::from_fn(n, n, |i, j| {
        let at = if i == j { T::one() } else { a.get(i, j) };
        s[i] * s[j] * at
    })
}
