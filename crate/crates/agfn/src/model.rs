//! Desk-scale pipeline: MLP feature extractor, graph normalization, linear
//! classifier with row softmax, and the squared-error loss, all with
//! hand-derived backward passes.
//!
//! The forward takes the graph as an explicit input (binary or real-valued),
//! so the ablation switch between baseline, threshold, and sampled graphs is
//! a graph choice rather than a code fork: a zero graph makes the model the
//! plain baseline.
//!
//! The extractor and the graph/classifier head can be driven separately.
//! Within one estimator step the extractor output is the same for every
//! sampled graph and its backward is linear in the upstream gradient, so the
//! Monte-Carlo loop extracts once, pushes each sample through the head, and
//! runs a single extractor backward on the accumulated feature gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{self, GcnWeight};
use crate::graph::PoissonScale;
use crate::numerics::{Matrix, RngStream};

/// Layer widths of the whole model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub gcn_dim: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn new(input_dim: usize, hidden: Vec<usize>, feature_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            feature_dim,
            gcn_dim: feature_dim,
            classes,
        }
    }
}

/// One dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// MLP mapping raw inputs to emotional feature vectors. Hidden layers use
/// tanh; the final projection is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub layers: Vec<DenseLayer>,
}

/// Linear classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Every trainable parameter of the pipeline. The Poisson scale follows its
/// own update rule and is never touched by the weight step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub extractor: ExtractorParams,
    pub gcn_w: GcnWeight,
    pub classifier: ClassifierParams,
    pub scale: PoissonScale,
}

fn fan_in_normal(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    let std = 1.0 / (rows as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| std * rng.normal()).collect())
        .expect("normal draws are finite")
}

impl ModelParams {
    /// Fan-in-scaled random-normal weights, zero biases.
    pub fn init(dims: &ModelDims, rng: &mut RngStream) -> ModelParams {
        let mut widths = vec![dims.input_dim];
        widths.extend_from_slice(&dims.hidden);
        widths.push(dims.feature_dim);
        let layers = widths
            .windows(2)
            .map(|pair| DenseLayer {
                w: fan_in_normal(rng, pair[0], pair[1]),
                b: vec![0.0; pair[1]],
            })
            .collect();
        ModelParams {
            extractor: ExtractorParams { layers },
            gcn_w: fan_in_normal(rng, dims.feature_dim, dims.gcn_dim),
            classifier: ClassifierParams {
                w: fan_in_normal(rng, dims.gcn_dim, dims.classes),
                b: vec![0.0; dims.classes],
            },
            scale: PoissonScale::INIT,
        }
    }

    pub fn dims(&self) -> ModelDims {
        let layers = &self.extractor.layers;
        let input_dim = layers[0].w.rows();
        let hidden: Vec<usize> = layers[..layers.len() - 1]
            .iter()
            .map(|l| l.w.cols())
            .collect();
        ModelDims {
            input_dim,
            hidden,
            feature_dim: self.gcn_w.rows(),
            gcn_dim: self.gcn_w.cols(),
            classes: self.classifier.w.cols(),
        }
    }
}

/// Mini-batch of inputs with one-hot targets.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // a Matrix always has at least one row
    }
}

fn check_one_hot(targets: &Matrix) -> Result<()> {
    for i in 0..targets.rows() {
        let row = targets.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::NotOneHot { row: i });
        }
    }
    Ok(())
}

/// Intermediates of one extractor pass: the input to each layer and each
/// layer's post-activation output.
#[derive(Debug, Clone)]
pub struct ExtractorCache {
    layer_inputs: Vec<Matrix>,
    layer_outputs: Vec<Matrix>,
}

/// Deterministic feature extraction.
pub fn extract_features(inputs: &Matrix, params: &ExtractorParams) -> Result<Matrix> {
    Ok(extract_features_cached(inputs, params)?.0)
}

/// Feature extraction keeping everything the backward needs.
pub fn extract_features_cached(
    inputs: &Matrix,
    params: &ExtractorParams,
) -> Result<(Matrix, ExtractorCache)> {
    let last = params.layers.len() - 1;
    let mut cache = ExtractorCache {
        layer_inputs: Vec::with_capacity(params.layers.len()),
        layer_outputs: Vec::with_capacity(params.layers.len()),
    };
    let mut current = inputs.clone();
    for (idx, layer) in params.layers.iter().enumerate() {
        if current.cols() != layer.w.rows() {
            return Err(Error::ShapeMismatch {
                op: "extract_features",
                lhs_rows: current.rows(),
                lhs_cols: current.cols(),
                rhs_rows: layer.w.rows(),
                rhs_cols: layer.w.cols(),
            });
        }
        let mut pre = current.matmul(&layer.w)?;
        for i in 0..pre.rows() {
            for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.b) {
                *v += b;
            }
        }
        let out = if idx < last { pre.map(f64::tanh) } else { pre };
        cache.layer_inputs.push(current);
        cache.layer_outputs.push(out.clone());
        current = out;
    }
    Ok((current, cache))
}

/// Per-layer weight and bias gradients.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (s, v) in sums.iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    sums
}

/// Backward through the extractor given `d loss / d features`. Linear in
/// `grad_features` for a fixed cache, which is what lets Monte-Carlo samples
/// share one extractor pass.
pub fn extract_backward(
    params: &ExtractorParams,
    cache: &ExtractorCache,
    grad_features: &Matrix,
) -> Result<Vec<LayerGrads>> {
    let last = params.layers.len() - 1;
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(params.layers.len());
    let mut upstream = grad_features.clone();
    for (idx, layer) in params.layers.iter().enumerate().rev() {
        // Hidden layers apply tanh after the affine map; the final layer is
        // linear, so its pre-activation gradient is the upstream itself.
        let grad_pre = if idx < last {
            let out = &cache.layer_outputs[idx];
            let mut g = upstream.clone();
            for i in 0..g.rows() {
                for (gv, ov) in g.row_mut(i).iter_mut().zip(out.row(i)) {
                    *gv *= 1.0 - ov * ov;
                }
            }
            g
        } else {
            upstream.clone()
        };
        let input = &cache.layer_inputs[idx];
        grads.push(LayerGrads {
            w: input.transpose().matmul(&grad_pre)?,
            b: column_sums(&grad_pre),
        });
        upstream = grad_pre.matmul(&layer.w.transpose())?;
    }
    grads.reverse();
    Ok(grads)
}

/// Linear map plus row softmax; rows sum to one.
pub fn classify(xhat: &Matrix, params: &ClassifierParams) -> Result<Matrix> {
    if xhat.cols() != params.w.rows() {
        return Err(Error::ShapeMismatch {
            op: "classify",
            lhs_rows: xhat.rows(),
            lhs_cols: xhat.cols(),
            rhs_rows: params.w.rows(),
            rhs_cols: params.w.cols(),
        });
    }
    let mut logits = xhat.matmul(&params.w)?;
    for i in 0..logits.rows() {
        for (v, b) in logits.row_mut(i).iter_mut().zip(&params.b) {
            *v += b;
        }
    }
    Ok(logits.row_softmax())
}

/// Mean over the batch of the squared Euclidean distance between prediction
/// rows and one-hot target rows. Zero iff they match exactly.
pub fn loss(pred: &Matrix, targets: &Matrix) -> Result<f64> {
    if pred.rows() != targets.rows() || pred.cols() != targets.cols() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            lhs_rows: pred.rows(),
            lhs_cols: pred.cols(),
            rhs_rows: targets.rows(),
            rhs_cols: targets.cols(),
        });
    }
    check_one_hot(targets)?;
    let n = pred.rows() as f64;
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Gradient of [`loss`] with respect to the predictions.
fn loss_grad(pred: &Matrix, targets: &Matrix) -> Matrix {
    let scale = 2.0 / pred.rows() as f64;
    let mut g = pred.clone();
    for (gv, tv) in g.as_mut_slice().iter_mut().zip(targets.as_slice()) {
        *gv = scale * (*gv - *tv);
    }
    g
}

/// Softmax backward: given `d loss / d pred` and the softmax output, returns
/// `d loss / d logits`.
fn softmax_backward(grad_pred: &Matrix, pred: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(pred.rows(), pred.cols());
    for i in 0..pred.rows() {
        let p = pred.row(i);
        let g = grad_pred.row(i);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (pv, gv)) in out.row_mut(i).iter_mut().zip(p.iter().zip(g)) {
            *o = pv * (gv - dot);
        }
    }
    out
}

/// Intermediates of the graph/classifier head for one graph.
#[derive(Debug, Clone)]
pub struct HeadCache {
    features: Matrix,
    graph: Matrix,
    xhat: Matrix,
    pred: Matrix,
    targets: Matrix,
    pub loss: f64,
}

impl HeadCache {
    pub fn predictions(&self) -> &Matrix {
        &self.pred
    }
}

/// Graph normalization, classification, and loss on already-extracted
/// features. The graph may be binary or real-valued.
pub fn head_forward(
    features: &Matrix,
    params: &ModelParams,
    graph: &Matrix,
    targets: &Matrix,
) -> Result<(f64, HeadCache)> {
    let xhat = gcn::gcn_forward(features, &params.gcn_w, graph)?;
    let pred = classify(&xhat, &params.classifier)?;
    let loss_value = loss(&pred, targets)?;
    Ok((
        loss_value,
        HeadCache {
            features: features.clone(),
            graph: graph.clone(),
            xhat,
            pred,
            targets: targets.clone(),
            loss: loss_value,
        },
    ))
}

/// Gradients of the head: GCN weight, classifier, the feature gradient to
/// push into the extractor, and the tied-pair adjacency gradient.
#[derive(Debug, Clone)]
pub struct HeadGradients {
    pub gcn_w: Matrix,
    pub classifier_w: Matrix,
    pub classifier_b: Vec<f64>,
    pub grad_features: Matrix,
    pub grad_a: Matrix,
}

pub fn head_backward(params: &ModelParams, cache: &HeadCache) -> Result<HeadGradients> {
    let grad_pred = loss_grad(&cache.pred, &cache.targets);
    let grad_logits = softmax_backward(&grad_pred, &cache.pred);
    let classifier_w = cache.xhat.transpose().matmul(&grad_logits)?;
    let classifier_b = column_sums(&grad_logits);
    let grad_xhat = grad_logits.matmul(&params.classifier.w.transpose())?;
    let gcn_grads = gcn::gcn_backward(&cache.features, &params.gcn_w, &cache.graph, &grad_xhat)?;
    Ok(HeadGradients {
        gcn_w: gcn_grads.grad_w,
        classifier_w,
        classifier_b,
        grad_features: gcn_grads.grad_x,
        grad_a: gcn_grads.grad_a,
    })
}

/// Gradients for every weight block the descent step updates.
#[derive(Debug, Clone)]
pub struct WeightGrads {
    pub extractor: Vec<LayerGrads>,
    pub gcn_w: Matrix,
    pub classifier_w: Matrix,
    pub classifier_b: Vec<f64>,
}

impl WeightGrads {
    pub fn zeros_like(params: &ModelParams) -> WeightGrads {
        WeightGrads {
            extractor: params
                .extractor
                .layers
                .iter()
                .map(|l| LayerGrads {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
            gcn_w: Matrix::zeros(params.gcn_w.rows(), params.gcn_w.cols()),
            classifier_w: Matrix::zeros(params.classifier.w.rows(), params.classifier.w.cols()),
            classifier_b: vec![0.0; params.classifier.b.len()],
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &WeightGrads, s: f64) -> Result<()> {
        for (mine, theirs) in self.extractor.iter_mut().zip(&other.extractor) {
            mine.w.add_scaled(&theirs.w, s)?;
            for (a, b) in mine.b.iter_mut().zip(&theirs.b) {
                *a += s * b;
            }
        }
        self.gcn_w.add_scaled(&other.gcn_w, s)?;
        self.classifier_w.add_scaled(&other.classifier_w, s)?;
        for (a, b) in self.classifier_b.iter_mut().zip(&other.classifier_b) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for layer in &mut self.extractor {
            layer.w = layer.w.scale(s);
            for b in &mut layer.b {
                *b *= s;
            }
        }
        self.gcn_w = self.gcn_w.scale(s);
        self.classifier_w = self.classifier_w.scale(s);
        for b in &mut self.classifier_b {
            *b *= s;
        }
    }

    /// Euclidean norm over every entry, the step-report diagnostic.
    pub fn norm(&self) -> f64 {
        let mut sq = 0.0;
        for layer in &self.extractor {
            sq += layer.w.norm().powi(2);
            sq += layer.b.iter().map(|v| v * v).sum::<f64>();
        }
        sq += self.gcn_w.norm().powi(2);
        sq += self.classifier_w.norm().powi(2);
        sq += self.classifier_b.iter().map(|v| v * v).sum::<f64>();
        sq.sqrt()
    }
}

/// Everything a matching [`backward`] call needs, including a copy of the
/// parameters used so a stale cache is detected instead of silently producing
/// wrong gradients.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    params: ModelParams,
    extractor: ExtractorCache,
    head: HeadCache,
}

impl ForwardCache {
    pub fn loss(&self) -> f64 {
        self.head.loss
    }

    pub fn predictions(&self) -> &Matrix {
        &self.head.pred
    }
}

/// Full-model gradients.
#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub weights: WeightGrads,
    pub grad_a: Matrix,
}

/// Extract, normalize over the given graph, classify, and score.
pub fn forward(
    batch: &LabeledBatch,
    params: &ModelParams,
    graph: &Matrix,
) -> Result<(f64, ForwardCache)> {
    let (features, extractor) = extract_features_cached(&batch.inputs, &params.extractor)?;
    let (loss_value, head) = head_forward(&features, params, graph, &batch.targets)?;
    Ok((
        loss_value,
        ForwardCache {
            params: params.clone(),
            extractor,
            head,
        },
    ))
}

/// Analytic gradients for the forward captured in `cache`. The graph is
/// treated as an independent (real-valued) input; `grad_a` flows through the
/// normalization including the degree path.
pub fn backward(params: &ModelParams, cache: &ForwardCache) -> Result<BackwardOutput> {
    if *params != cache.params {
        return Err(Error::StaleCache);
    }
    let head_grads = head_backward(params, &cache.head)?;
    let extractor = extract_backward(&params.extractor, &cache.extractor, &head_grads.grad_features)?;
    Ok(BackwardOutput {
        weights: WeightGrads {
            extractor,
            gcn_w: head_grads.gcn_w,
            classifier_w: head_grads.classifier_w,
            classifier_b: head_grads.classifier_b,
        },
        grad_a: head_grads.grad_a,
    })
}

/// Index of the row maximum; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn small_dims() -> ModelDims {
        ModelDims::new(3, vec![5, 4], 3, 2)
    }

    fn one_hot(labels: &[usize], classes: usize) -> Matrix {
        let mut t = Matrix::zeros(labels.len(), classes);
        for (i, &c) in labels.iter().enumerate() {
            t.set(i, c, 1.0);
        }
        t
    }

    fn random_batch(rng: &mut RngStream, n: usize, dims: &ModelDims) -> LabeledBatch {
        let inputs =
            Matrix::from_vec(n, dims.input_dim, (0..n * dims.input_dim).map(|_| rng.normal()).collect())
                .unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.index(dims.classes)).collect();
        LabeledBatch {
            inputs,
            targets: one_hot(&labels, dims.classes),
        }
    }

    #[test]
    fn extractor_zero_weights_zero_features() {
        let dims = small_dims();
        let mut rng = RngStream::new(0, 0);
        let mut params = ModelParams::init(&dims, &mut rng);
        for layer in &mut params.extractor.layers {
            layer.w = Matrix::zeros(layer.w.rows(), layer.w.cols());
        }
        let inputs = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let features = extract_features(&inputs, &params.extractor).unwrap();
        assert_eq!(features.norm(), 0.0);
    }

    #[test]
    fn extractor_identity_single_layer() {
        let params = ExtractorParams {
            layers: vec![DenseLayer {
                w: Matrix::identity(3),
                b: vec![0.0; 3],
            }],
        };
        let inputs = Matrix::from_rows(&[vec![0.5, -1.5, 2.0]]).unwrap();
        let features = extract_features(&inputs, &params).unwrap();
        assert_eq!(features, inputs);
    }

    #[test]
    fn extractor_deterministic_across_runs() {
        let dims = small_dims();
        let p1 = ModelParams::init(&dims, &mut RngStream::new(9, 0));
        let p2 = ModelParams::init(&dims, &mut RngStream::new(9, 0));
        assert_eq!(p1, p2);
        let inputs = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 1.0]]).unwrap();
        let f1 = extract_features(&inputs, &p1.extractor).unwrap();
        let f2 = extract_features(&inputs, &p2.extractor).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn classify_zero_weights_uniform() {
        let params = ClassifierParams {
            w: Matrix::zeros(3, 4),
            b: vec![0.0; 4],
        };
        let xhat = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let pred = classify(&xhat, &params).unwrap();
        for j in 0..4 {
            approx(pred.get(0, j), 0.25, 1e-15);
        }
    }

    #[test]
    fn classify_analytic_two_class() {
        let params = ClassifierParams {
            w: Matrix::identity(2),
            b: vec![0.0; 2],
        };
        let xhat = Matrix::from_rows(&[vec![0.0, 3.0f64.ln()]]).unwrap();
        let pred = classify(&xhat, &params).unwrap();
        approx(pred.get(0, 0), 0.25, 1e-12);
        approx(pred.get(0, 1), 0.75, 1e-12);
    }

    #[test]
    fn classify_column_permutation_equivariant() {
        let mut rng = RngStream::new(4, 4);
        let w = Matrix::from_vec(3, 3, (0..9).map(|_| rng.normal()).collect()).unwrap();
        let b = vec![0.1, -0.2, 0.3];
        let xhat = Matrix::from_vec(2, 3, (0..6).map(|_| rng.normal()).collect()).unwrap();
        let pred = classify(&xhat, &ClassifierParams { w: w.clone(), b: b.clone() }).unwrap();
        // permute classifier columns 0<->2
        let mut wp = w.clone();
        let mut bp = b.clone();
        for r in 0..3 {
            let tmp = wp.get(r, 0);
            wp.set(r, 0, wp.get(r, 2));
            wp.set(r, 2, tmp);
        }
        bp.swap(0, 2);
        let permuted = classify(&xhat, &ClassifierParams { w: wp, b: bp }).unwrap();
        for i in 0..2 {
            approx(permuted.get(i, 0), pred.get(i, 2), 1e-15);
            approx(permuted.get(i, 2), pred.get(i, 0), 1e-15);
            approx(permuted.get(i, 1), pred.get(i, 1), 1e-15);
        }
    }

    #[test]
    fn loss_exact_fit_is_zero() {
        let y = one_hot(&[0, 1], 2);
        assert_eq!(loss(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn loss_analytic_value() {
        let pred = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let y = one_hot(&[0], 2);
        approx(loss(&pred, &y).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn loss_invariant_to_row_permutation() {
        let pred = Matrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let y = one_hot(&[0, 1], 2);
        let swapped_pred = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.7, 0.3]]).unwrap();
        let swapped_y = one_hot(&[1, 0], 2);
        approx(
            loss(&pred, &y).unwrap(),
            loss(&swapped_pred, &swapped_y).unwrap(),
            1e-15,
        );
    }

    #[test]
    fn loss_rejects_non_one_hot() {
        let pred = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(matches!(loss(&pred, &y), Err(Error::NotOneHot { row: 0 })));
    }

    #[test]
    fn loss_grad_zero_at_exact_fit() {
        let y = one_hot(&[1, 0], 2);
        assert_eq!(loss_grad(&y, &y).norm(), 0.0);
    }

    #[test]
    fn forward_zero_graph_equals_plain_mlp_bitwise() {
        let dims = small_dims();
        let mut rng = RngStream::new(11, 0);
        let params = ModelParams::init(&dims, &mut rng);
        let batch = random_batch(&mut rng, 4, &dims);
        let (loss_value, cache) = forward(&batch, &params, &Matrix::zeros(4, 4)).unwrap();

        // independent composition without the graph machinery
        let features = extract_features(&batch.inputs, &params.extractor).unwrap();
        let xhat = features.matmul(&params.gcn_w).unwrap();
        let pred = classify(&xhat, &params.classifier).unwrap();
        assert_eq!(cache.predictions(), &pred);
        assert_eq!(loss_value, loss(&pred, &batch.targets).unwrap());
    }

    #[test]
    fn forward_duplicate_connected_rows_get_identical_features() {
        let dims = small_dims();
        let mut rng = RngStream::new(13, 0);
        let params = ModelParams::init(&dims, &mut rng);
        let row = vec![0.4, -0.7, 1.1];
        let inputs = Matrix::from_rows(&[row.clone(), row, vec![2.0, 0.0, -1.0]]).unwrap();
        let batch = LabeledBatch {
            inputs,
            targets: one_hot(&[0, 0, 1], 2),
        };
        let mut graph = Matrix::zeros(3, 3);
        graph.set(0, 1, 1.0);
        graph.set(1, 0, 1.0);
        let (_, cache) = forward(&batch, &params, &graph).unwrap();
        let pred = cache.predictions();
        for j in 0..2 {
            assert_eq!(pred.get(0, j), pred.get(1, j));
        }
    }

    #[test]
    fn forward_reproducible() {
        let dims = small_dims();
        let mut rng = RngStream::new(17, 0);
        let params = ModelParams::init(&dims, &mut rng);
        let batch = random_batch(&mut rng, 3, &dims);
        let g = Matrix::zeros(3, 3);
        let (l1, _) = forward(&batch, &params, &g).unwrap();
        let (l2, _) = forward(&batch, &params, &g).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let dims = small_dims();
        let mut rng = RngStream::new(19, 0);
        let params = ModelParams::init(&dims, &mut rng);
        let batch = random_batch(&mut rng, 3, &dims);
        let (_, cache) = forward(&batch, &params, &Matrix::zeros(3, 3)).unwrap();
        let mut changed = params.clone();
        changed.gcn_w.set(0, 0, changed.gcn_w.get(0, 0) + 1.0);
        assert!(matches!(backward(&changed, &cache), Err(Error::StaleCache)));
    }

    #[test]
    fn backward_grad_a_symmetric() {
        let dims = small_dims();
        let mut rng = RngStream::new(23, 0);
        let params = ModelParams::init(&dims, &mut rng);
        let batch = random_batch(&mut rng, 4, &dims);
        let mut graph = Matrix::zeros(4, 4);
        for (i, j) in [(0, 1), (1, 2)] {
            graph.set(i, j, 1.0);
            graph.set(j, i, 1.0);
        }
        let (_, cache) = forward(&batch, &params, &graph).unwrap();
        let out = backward(&params, &cache).unwrap();
        for i in 0..4 {
            assert_eq!(out.grad_a.get(i, i), 0.0);
            for j in 0..4 {
                assert_eq!(out.grad_a.get(i, j), out.grad_a.get(j, i));
            }
        }
    }

    #[test]
    fn argmax_ties_break_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.0, 1.0, 0.5]), 1);
    }
}
