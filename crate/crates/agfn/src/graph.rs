//! Poisson graph generator.
//!
//! Builds per-mini-batch connection probabilities from feature similarity and
//! samples binary adjacency matrices. The chain is: cosine similarity between
//! feature rows, an affine intensity `lambda = alpha * sim + beta` clamped at
//! zero, an edge probability `p = 1 - exp(-lambda)`, and one Bernoulli draw
//! per unordered pair mirrored onto both triangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Trainable scale of the edge-intensity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonScale {
    pub alpha: f64,
    pub beta: f64,
}

impl PoissonScale {
    /// Moderately dense initial graphs: p ~ 0.39 at similarity 0 and
    /// p ~ 0.78 at similarity 1.
    pub const INIT: PoissonScale = PoissonScale {
        alpha: 1.0,
        beta: 0.5,
    };
}

/// Symmetric matrix of pairwise cosine similarities, unit diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Matrix,
}

impl SimilarityMatrix {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }
}

/// Clamped edge intensities plus the mask of pairs where the raw affine value
/// was positive (the clamp subgradient: pass-through where active, zero where
/// clamped).
#[derive(Debug, Clone)]
pub struct EdgeIntensity {
    lambda: Matrix,
    active: Vec<bool>,
}

impl EdgeIntensity {
    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn n(&self) -> usize {
        self.lambda.rows()
    }

    /// True where the raw intensity was positive, i.e. where gradients flow.
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[i * self.lambda.cols() + j]
    }
}

/// Symmetric matrix of edge probabilities with zero diagonal.
#[derive(Debug, Clone)]
pub struct ConnectionProbability {
    p: Matrix,
}

impl ConnectionProbability {
    /// Wraps an explicit probability matrix. Entries must lie in `[0, 1]`;
    /// the pipeline itself only produces `[0, 1)`, but the deterministic
    /// limit `p = 1` is accepted so point-mass distributions can be expressed
    /// directly.
    pub fn from_matrix(p: Matrix) -> Result<Self> {
        if p.rows() != p.cols() {
            return Err(Error::ShapeMismatch {
                op: "connection_probability",
                lhs_rows: p.rows(),
                lhs_cols: p.cols(),
                rhs_rows: p.rows(),
                rhs_cols: p.rows(),
            });
        }
        for i in 0..p.rows() {
            if p.get(i, i) != 0.0 {
                return Err(Error::NonzeroDiagonal {
                    idx: i,
                    value: p.get(i, i),
                });
            }
            for j in 0..p.cols() {
                let v = p.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Data(format!(
                        "edge probability {v} at ({i},{j}) outside [0,1]"
                    )));
                }
                if (p.get(j, i) - v).abs() > 1e-12 {
                    return Err(Error::Data(format!(
                        "edge probabilities not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { p })
    }

    pub fn values(&self) -> &Matrix {
        &self.p
    }

    pub fn n(&self) -> usize {
        self.p.rows()
    }

    /// Mean probability over unordered pairs; the expected edge density.
    pub fn mean_density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += self.p.get(i, j);
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }
}

/// Symmetric binary adjacency matrix with zero diagonal, stored as `f64`
/// entries in `{0, 1}` so it can flow straight into the GCN kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    a: Matrix,
}

impl Adjacency {
    pub fn values(&self) -> &Matrix {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Fraction of unordered pairs with an edge.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let mut edges = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.a.get(i, j) == 1.0 {
                    edges += 1;
                }
            }
        }
        edges as f64 / (n * (n - 1) / 2) as f64
    }

    /// Builds from a `{0,1}` matrix, checking symmetry and zero diagonal.
    pub fn from_matrix(a: Matrix) -> Result<Self> {
        for i in 0..a.rows() {
            if a.get(i, i) != 0.0 {
                return Err(Error::NonzeroDiagonal {
                    idx: i,
                    value: a.get(i, i),
                });
            }
            for j in 0..a.cols() {
                let v = a.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Data(format!("adjacency entry {v} at ({i},{j})")));
                }
                if a.get(j, i) != v {
                    return Err(Error::Data(format!("adjacency not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { a })
    }
}

/// Pairwise cosine similarities of feature rows.
///
/// Errors with the offending row index if any feature row has zero norm.
pub fn cosine_similarity_matrix(features: &Matrix) -> Result<SimilarityMatrix> {
    let n = features.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(row) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateFeature { row });
    }
    let mut s = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| a * b)
                .sum();
            let c = dot / (norms[i] * norms[j]);
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("cosine similarity ({i},{j})"),
                });
            }
            s.set(i, j, c);
            s.set(j, i, c);
        }
    }
    Ok(SimilarityMatrix { values: s })
}

/// Affine intensity `max(0, alpha * sim + beta)` per pair.
pub fn edge_intensity(sim: &SimilarityMatrix, scale: PoissonScale) -> EdgeIntensity {
    let n = sim.n();
    let mut lambda = Matrix::zeros(n, n);
    let mut active = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            let raw = scale.alpha * sim.values.get(i, j) + scale.beta;
            if raw > 0.0 {
                lambda.set(i, j, raw);
                active[i * n + j] = true;
            }
        }
    }
    EdgeIntensity { lambda, active }
}

/// Edge probabilities `1 - exp(-lambda)` off-diagonal, zero diagonal.
pub fn connection_probabilities(intensity: &EdgeIntensity) -> Result<ConnectionProbability> {
    let n = intensity.n();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let l = intensity.lambda.get(i, j);
            if l < 0.0 {
                return Err(Error::NegativeIntensity {
                    row: i,
                    col: j,
                    value: l,
                });
            }
            p.set(i, j, -(-l).exp_m1());
        }
    }
    Ok(ConnectionProbability { p })
}

/// One Bernoulli draw per unordered pair `(i < j)`, mirrored to `(j, i)`.
/// Pairs are visited in row-major order, one uniform draw each.
pub fn sample_adjacency(probs: &ConnectionProbability, rng: &mut RngStream) -> Adjacency {
    let n = probs.n();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.uniform() < probs.p.get(i, j) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    Adjacency { a }
}

/// Probability of drawing `a` from `probs`: the product over unordered pairs
/// of `p^a * (1-p)^(1-a)`.
pub fn graph_probability(a: &Adjacency, probs: &ConnectionProbability) -> Result<f64> {
    if a.n() != probs.n() {
        return Err(Error::ShapeMismatch {
            op: "graph_probability",
            lhs_rows: a.n(),
            lhs_cols: a.n(),
            rhs_rows: probs.n(),
            rhs_cols: probs.n(),
        });
    }
    let n = a.n();
    let mut prob = 1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = probs.p.get(i, j);
            prob *= if a.a.get(i, j) == 1.0 { p } else { 1.0 - p };
        }
    }
    Ok(prob)
}

/// Deterministic threshold graph: connect `i != j` where similarity exceeds
/// `tau`. The staircase baseline the sampled generator is compared against.
pub fn threshold_adjacency(sim: &SimilarityMatrix, tau: f64) -> Adjacency {
    let n = sim.n();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if sim.values.get(i, j) > tau {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    Adjacency { a }
}
