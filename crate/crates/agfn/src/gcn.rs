//! Symmetric-normalized graph convolution with a full analytic backward pass.
//!
//! Forward: `xhat = Ahat * x * w` with `Ahat = D^{-1/2} (A + I) D^{-1/2}` and
//! `D_ii = 1 + sum_j a_ij`. The adjacency input may be real-valued, so the
//! deterministic expected-graph mode reuses the same code path as sampled
//! binary graphs.
//!
//! The backward differentiates the whole composition with respect to each
//! adjacency entry, including the dependence of the degree matrix on `A`.
//! Off-diagonal entries `(i,j)` and `(j,i)` are tied to one shared parameter;
//! their contributions are summed and written to both entries, and the
//! diagonal is structurally zero.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Trainable GCN weight, a plain dense matrix.
pub type GcnWeight = Matrix;

/// Diagonal of the degree matrix: `d_i = 1 + sum_j a_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeMatrix {
    d: Vec<f64>,
}

impl DegreeMatrix {
    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }
}

/// Degree diagonal of a square nonnegative matrix (binary or weighted).
pub fn degree_matrix(a: &Matrix) -> Result<DegreeMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::ShapeMismatch {
            op: "degree_matrix",
            lhs_rows: a.rows(),
            lhs_cols: a.cols(),
            rhs_rows: a.rows(),
            rhs_cols: a.rows(),
        });
    }
    let n = a.rows();
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = 1.0;
        for j in 0..n {
            let v = a.get(i, j);
            if v < 0.0 {
                return Err(Error::NegativeAdjacency {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            sum += v;
        }
        d.push(sum);
    }
    Ok(DegreeMatrix { d })
}

/// `Ahat = D^{-1/2} (A + I) D^{-1/2}`. Requires a zero diagonal on `a`; the
/// self-loop is added here, so self-edges in the input would double-count.
pub fn normalized_adjacency(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    for i in 0..n {
        if a.get(i, i) != 0.0 {
            return Err(Error::NonzeroDiagonal {
                idx: i,
                value: a.get(i, i),
            });
        }
    }
    let deg = degree_matrix(a)?;
    let inv_sqrt: Vec<f64> = deg.d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut ahat = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let loop_term = if i == j { 1.0 } else { 0.0 };
            ahat.set(i, j, (a.get(i, j) + loop_term) * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    Ok(ahat)
}

/// `xhat = Ahat * x * w`. Higher-degree nodes receive proportionally less
/// mass from each neighbor.
pub fn gcn_forward(x: &Matrix, w: &GcnWeight, a: &Matrix) -> Result<Matrix> {
    let ahat = normalized_adjacency(a)?;
    ahat.matmul(x)?.matmul(w)
}

/// Gradients of a scalar loss through the GCN layer.
#[derive(Debug, Clone)]
pub struct GcnGradients {
    /// d loss / d w, shape of `w`.
    pub grad_w: Matrix,
    /// d loss / d x, shape of `x`.
    pub grad_x: Matrix,
    /// d loss / d a over tied off-diagonal pairs, symmetric, zero diagonal.
    pub grad_a: Matrix,
}

/// Backward pass for [`gcn_forward`] given `upstream = d loss / d xhat`.
pub fn gcn_backward(
    x: &Matrix,
    w: &GcnWeight,
    a: &Matrix,
    upstream: &Matrix,
) -> Result<GcnGradients> {
    let n = a.rows();
    let ahat = normalized_adjacency(a)?;
    let h = ahat.matmul(x)?;
    if upstream.rows() != h.rows() || upstream.cols() != w.cols() {
        return Err(Error::ShapeMismatch {
            op: "gcn_backward upstream",
            lhs_rows: upstream.rows(),
            lhs_cols: upstream.cols(),
            rhs_rows: h.rows(),
            rhs_cols: w.cols(),
        });
    }

    let grad_w = h.transpose().matmul(upstream)?;
    let grad_h = upstream.matmul(&w.transpose())?;
    let grad_x = ahat.transpose().matmul(&grad_h)?;

    // Gradient with respect to Ahat, then through the normalization,
    // including the degree path d_i = 1 + sum_j a_ij.
    let grad_ahat = grad_h.matmul(&x.transpose())?;
    let deg = degree_matrix(a)?;
    let inv_sqrt: Vec<f64> = deg.d.iter().map(|v| 1.0 / v.sqrt()).collect();

    // Row and column dots of grad_ahat against Ahat.
    let mut row_dot = vec![0.0; n];
    let mut col_dot = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let g = grad_ahat.get(i, j) * ahat.get(i, j);
            row_dot[i] += g;
            col_dot[j] += g;
        }
    }

    let raw = |i: usize, j: usize| {
        grad_ahat.get(i, j) * inv_sqrt[i] * inv_sqrt[j]
            - row_dot[i] / (2.0 * deg.d[i])
            - col_dot[j] / (2.0 * deg.d[j])
    };

    let mut grad_a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let tied = raw(i, j) + raw(j, i);
            grad_a.set(i, j, tied);
            grad_a.set(j, i, tied);
        }
    }

    Ok(GcnGradients {
        grad_w,
        grad_x,
        grad_a,
    })
}
