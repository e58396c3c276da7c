//! Independent ground-truth machinery.
//!
//! Two tools live here: exact expectation over every graph on a small batch
//! (the number of symmetric zero-diagonal binary matrices is 2^(n(n-1)/2),
//! capped at n = 5), and central finite differences. Every stochastic
//! estimator and every analytic backward in the crate is validated against
//! this module, so nothing here may call into the estimators it checks.

use crate::error::{Error, Result};
use crate::graph::{
    self, cosine_similarity_matrix, edge_intensity, graph_probability, Adjacency,
};
use crate::model::{
    extract_backward, extract_features_cached, head_backward, head_forward, LabeledBatch,
    ModelParams, WeightGrads,
};
use crate::numerics::Matrix;

/// Hard cap on enumeration size; 2^10 graphs at n = 5.
pub const ENUMERATION_CAP: usize = 5;

/// Every symmetric zero-diagonal binary matrix on `n` nodes, pairs in
/// lexicographic order with the first pair varying fastest.
pub fn enumerate_adjacencies(n: usize) -> Result<Vec<Adjacency>> {
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let count = 1usize << pairs.len();
    let mut graphs = Vec::with_capacity(count);
    for mask in 0..count {
        let mut a = Matrix::zeros(n.max(1), n.max(1));
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
        graphs.push(Adjacency::from_matrix(a).expect("constructed symmetric binary"));
    }
    Ok(graphs)
}

/// Exact `P(A)`-weighted sums over the full graph enumeration.
#[derive(Debug, Clone)]
pub struct EnumerationReport {
    pub expected_loss: f64,
    pub expected_weights: WeightGrads,
    /// Exact expectation of the tied-pair adjacency gradient.
    pub expected_grad_a: Matrix,
    /// `expected_grad_a` with the clamp mask and zero diagonal applied, the
    /// quantity the straight-through estimator approximates.
    pub expected_grad_lambda: Matrix,
    pub probability_sum: f64,
    pub graph_count: usize,
}

/// Exact expectation of loss and gradients under the Poisson graph
/// distribution induced by the batch's features and the current scale.
pub fn exact_expectation(batch: &LabeledBatch, params: &ModelParams) -> Result<EnumerationReport> {
    let n = batch.len();
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    let (features, extractor_cache) = extract_features_cached(&batch.inputs, &params.extractor)?;
    let sim = cosine_similarity_matrix(&features)?;
    let intensity = edge_intensity(&sim, params.scale);
    let probs = graph::connection_probabilities(&intensity)?;

    let mut expected_loss = 0.0;
    let mut probability_sum = 0.0;
    let mut expected_weights = WeightGrads::zeros_like(params);
    let mut grad_features_sum = Matrix::zeros(features.rows(), features.cols());
    let mut expected_grad_a = Matrix::zeros(n, n);

    let graphs = enumerate_adjacencies(n)?;
    let graph_count = graphs.len();
    for adjacency in &graphs {
        let weight = graph_probability(adjacency, &probs)?;
        probability_sum += weight;
        if weight == 0.0 {
            continue;
        }
        let (loss_value, head_cache) =
            head_forward(&features, params, adjacency.values(), &batch.targets)?;
        let head = head_backward(params, &head_cache)?;
        expected_loss += weight * loss_value;
        expected_weights.gcn_w.add_scaled(&head.gcn_w, weight)?;
        expected_weights
            .classifier_w
            .add_scaled(&head.classifier_w, weight)?;
        for (acc, g) in expected_weights.classifier_b.iter_mut().zip(&head.classifier_b) {
            *acc += weight * g;
        }
        grad_features_sum.add_scaled(&head.grad_features, weight)?;
        expected_grad_a.add_scaled(&head.grad_a, weight)?;
    }

    // Extractor backward is linear in the feature gradient, so one pass on
    // the weighted sum equals the weighted sum of per-graph passes.
    expected_weights.extractor =
        extract_backward(&params.extractor, &extractor_cache, &grad_features_sum)?;

    let mut expected_grad_lambda = expected_grad_a.clone();
    for i in 0..n {
        for j in 0..n {
            if i == j || !intensity.is_active(i, j) {
                expected_grad_lambda.set(i, j, 0.0);
            }
        }
    }

    Ok(EnumerationReport {
        expected_loss,
        expected_weights,
        expected_grad_a,
        expected_grad_lambda,
        probability_sum,
        graph_count,
    })
}

/// Central finite differences `(f(x+eps e_i) - f(x-eps e_i)) / 2eps`.
pub fn finite_difference<F>(mut probe: F, point: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert!(eps > 0.0, "step must be positive");
    let mut grad = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + eps;
        let plus = probe(&x)?;
        x[i] = point[i] - eps;
        let minus = probe(&x)?;
        x[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteProbe { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// Named slice of the flattened weight vector, for per-block error reports.
#[derive(Debug, Clone)]
pub struct WeightBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Block layout of the flattened trainable weights (scale excluded; it
/// follows its own update rule).
pub fn weight_blocks(params: &ModelParams) -> Vec<WeightBlock> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, len: usize, offset: &mut usize| {
        blocks.push(WeightBlock {
            name,
            offset: *offset,
            len,
        });
        *offset += len;
    };
    for (i, layer) in params.extractor.layers.iter().enumerate() {
        push(format!("extractor.{i}.w"), layer.w.rows() * layer.w.cols(), &mut offset);
        push(format!("extractor.{i}.b"), layer.b.len(), &mut offset);
    }
    push("gcn.w".to_string(), params.gcn_w.rows() * params.gcn_w.cols(), &mut offset);
    push(
        "classifier.w".to_string(),
        params.classifier.w.rows() * params.classifier.w.cols(),
        &mut offset,
    );
    push("classifier.b".to_string(), params.classifier.b.len(), &mut offset);
    blocks
}

/// Flattens every trainable weight (scale excluded) in block order.
pub fn flatten_weights(params: &ModelParams) -> Vec<f64> {
    let mut v = Vec::new();
    for layer in &params.extractor.layers {
        v.extend_from_slice(layer.w.as_slice());
        v.extend_from_slice(&layer.b);
    }
    v.extend_from_slice(params.gcn_w.as_slice());
    v.extend_from_slice(params.classifier.w.as_slice());
    v.extend_from_slice(&params.classifier.b);
    v
}

/// Rebuilds params from a flattened weight vector, keeping the template's
/// scale.
pub fn unflatten_weights(template: &ModelParams, v: &[f64]) -> ModelParams {
    let mut params = template.clone();
    let mut pos = 0;
    let mut take = |len: usize| {
        let slice = &v[pos..pos + len];
        pos += len;
        slice.to_vec()
    };
    for layer in &mut params.extractor.layers {
        let (r, c) = (layer.w.rows(), layer.w.cols());
        layer.w = Matrix::from_vec(r, c, take(r * c)).expect("finite weights");
        layer.b = take(layer.b.len());
    }
    let (r, c) = (params.gcn_w.rows(), params.gcn_w.cols());
    params.gcn_w = Matrix::from_vec(r, c, take(r * c)).expect("finite weights");
    let (r, c) = (params.classifier.w.rows(), params.classifier.w.cols());
    params.classifier.w = Matrix::from_vec(r, c, take(r * c)).expect("finite weights");
    params.classifier.b = take(params.classifier.b.len());
    assert_eq!(pos, v.len(), "flattened vector length mismatch");
    params
}

/// Flattens gradients in the same order as [`flatten_weights`].
pub fn flatten_weight_grads(grads: &WeightGrads) -> Vec<f64> {
    let mut v = Vec::new();
    for layer in &grads.extractor {
        v.extend_from_slice(layer.w.as_slice());
        v.extend_from_slice(&layer.b);
    }
    v.extend_from_slice(grads.gcn_w.as_slice());
    v.extend_from_slice(grads.classifier_w.as_slice());
    v.extend_from_slice(&grads.classifier_b);
    v
}

/// Strict upper triangle in row-major pair order, the shared parameters of a
/// symmetric zero-diagonal matrix.
pub fn upper_triangle(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push(m.get(i, j));
        }
    }
    v
}

/// Symmetric zero-diagonal matrix from its strict upper triangle.
pub fn symmetric_from_upper(n: usize, v: &[f64]) -> Matrix {
    assert_eq!(v.len(), n * (n - 1) / 2, "upper triangle length mismatch");
    let mut m = Matrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            m.set(i, j, v[idx]);
            m.set(j, i, v[idx]);
            idx += 1;
        }
    }
    m
}

/// Relative Frobenius deviation between two flattened gradients.
pub fn relative_error(estimate: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = estimate
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ConnectionProbability, PoissonScale};
    use crate::model::{backward, forward, ModelDims};
    use crate::numerics::RngStream;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_adjacencies(2).unwrap().len(), 2);
        assert_eq!(enumerate_adjacencies(3).unwrap().len(), 8);
        assert_eq!(enumerate_adjacencies(4).unwrap().len(), 64);
    }

    #[test]
    fn enumeration_cap_enforced() {
        assert!(matches!(
            enumerate_adjacencies(6),
            Err(Error::EnumerationCap { n: 6, cap: 5 })
        ));
    }

    #[test]
    fn enumeration_is_distinct() {
        let graphs = enumerate_adjacencies(4).unwrap();
        for (i, a) in graphs.iter().enumerate() {
            for b in graphs.iter().skip(i + 1) {
                assert_ne!(a.values(), b.values());
            }
        }
    }

    #[test]
    fn enumerated_probabilities_sum_to_one() {
        let mut p = Matrix::zeros(4, 4);
        let ps = [0.1, 0.35, 0.6, 0.05, 0.99, 0.42];
        let mut k = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                p.set(i, j, ps[k]);
                p.set(j, i, ps[k]);
                k += 1;
            }
        }
        let probs = ConnectionProbability::from_matrix(p).unwrap();
        let total: f64 = enumerate_adjacencies(4)
            .unwrap()
            .iter()
            .map(|a| graph_probability(a, &probs).unwrap())
            .sum();
        approx(total, 1.0, 1e-12);
    }

    fn small_batch(n: usize, seed: u64) -> (LabeledBatch, ModelParams) {
        let dims = ModelDims::new(3, vec![4], 3, 2);
        let mut rng = RngStream::new(seed, 0);
        let params = ModelParams::init(&dims, &mut rng);
        let inputs =
            Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
        let mut targets = Matrix::zeros(n, 2);
        for i in 0..n {
            targets.set(i, i % 2, 1.0);
        }
        (LabeledBatch { inputs, targets }, params)
    }

    #[test]
    fn point_mass_report_equals_single_graph_backward() {
        let (batch, mut params) = small_batch(3, 5);
        // alpha = beta = 0 puts all probability on the empty graph
        params.scale = PoissonScale { alpha: 0.0, beta: 0.0 };
        let report = exact_expectation(&batch, &params).unwrap();
        approx(report.probability_sum, 1.0, 1e-12);

        let zero_graph = Matrix::zeros(3, 3);
        let (loss_value, cache) = forward(&batch, &params, &zero_graph).unwrap();
        let out = backward(&params, &cache).unwrap();
        approx(report.expected_loss, loss_value, 1e-15);
        let exact = flatten_weight_grads(&out.weights);
        let expected = flatten_weight_grads(&report.expected_weights);
        assert!(relative_error(&expected, &exact) < 1e-12);
    }

    #[test]
    fn constant_integrand_expectation() {
        let (batch, mut params) = small_batch(3, 6);
        params.scale = PoissonScale { alpha: 0.0, beta: 2.0f64.ln() }; // p = 0.5 everywhere
        params.gcn_w = Matrix::zeros(3, 3); // loss independent of the graph
        let report = exact_expectation(&batch, &params).unwrap();
        approx(report.probability_sum, 1.0, 1e-12);
        let (loss_value, _) = forward(&batch, &params, &Matrix::zeros(3, 3)).unwrap();
        approx(report.expected_loss, loss_value, 1e-12);
        assert_eq!(report.graph_count, 8);
    }

    #[test]
    fn expectation_respects_size_cap() {
        let (batch, params) = small_batch(6, 7);
        assert!(matches!(
            exact_expectation(&batch, &params),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn finite_difference_quadratic() {
        let x = vec![1.0, -2.0, 0.5];
        let grad = finite_difference(
            |v| Ok(v.iter().map(|a| a * a).sum()),
            &x,
            1e-5,
        )
        .unwrap();
        for (g, xi) in grad.iter().zip(&x) {
            approx(*g, 2.0 * xi, 1e-9);
        }
    }

    #[test]
    fn finite_difference_constant_is_zero() {
        let grad = finite_difference(|_| Ok(3.25), &[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(grad, vec![0.0, 0.0]);
    }

    #[test]
    fn finite_difference_reports_non_finite_probe() {
        let err = finite_difference(
            |v| Ok(if v[1] > 1.0 { f64::INFINITY } else { 0.0 }),
            &[0.0, 1.0],
            1e-2,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteProbe { coordinate: 1 }));
    }

    #[test]
    fn flatten_roundtrip() {
        let dims = ModelDims::new(3, vec![4, 5], 3, 2);
        let mut rng = RngStream::new(1, 1);
        let params = ModelParams::init(&dims, &mut rng);
        let v = flatten_weights(&params);
        let blocks = weight_blocks(&params);
        assert_eq!(v.len(), blocks.iter().map(|b| b.len).sum::<usize>());
        let back = unflatten_weights(&params, &v);
        assert_eq!(params, back);
    }

    #[test]
    fn upper_triangle_roundtrip() {
        let mut m = Matrix::zeros(4, 4);
        let mut k = 1.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                m.set(i, j, k);
                m.set(j, i, k);
                k += 1.0;
            }
        }
        let v = upper_triangle(&m);
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(symmetric_from_upper(4, &v), m);
    }
}
