//! Sample- and set-based loss terms with analytic gradients.
//!
//! Every term returns its value together with the gradient with respect to
//! the embeddings; the softmax term also returns head gradients. Set
//! parameters (hyperplanes, centroids) are constants here: no gradient
//! flows into them. Per-sample contributions are reduced in index order.

use thiserror::Error;

use crate::linalg::{distance, dot, norm, Matrix};
use crate::model::{ClassifierHead, HeadGrads};
use crate::setparams::CentroidSet;
use crate::svm::HyperplaneSet;

/// Hyperplanes with `‖w‖` at or below this are skipped by the max-margin term.
pub const MIN_PLANE_NORM: f64 = 1e-12;

/// Pushing-loss gradient contributions closer than this to a centroid are zero.
pub const MIN_PUSH_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no centroid for class {0}")]
    MissingCentroid(usize),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Balancing weights of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub softmax: f64,
    pub lambda_m: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            softmax: 1.0,
            lambda_m: 0.03,
            lambda_p: 0.03,
            lambda_c: 0.0001,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("softmax", self.softmax),
            ("lambda_M", self.lambda_m),
            ("lambda_P", self.lambda_p),
            ("lambda_C", self.lambda_c),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LossError::InvalidArgument(format!(
                    "weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_embeddings: Matrix,
    pub grad_head: Option<HeadGrads>,
    /// Classes whose terms were left out (max-margin only).
    pub skipped_classes: Vec<usize>,
}

impl LossResult {
    /// Multiplies value and every gradient by `weight`.
    pub fn scaled(mut self, weight: f64) -> Self {
        self.value *= weight;
        self.grad_embeddings.scale(weight);
        if let Some(h) = &mut self.grad_head {
            h.weights.scale(weight);
            for b in &mut h.bias {
                *b *= weight;
            }
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_embeddings.is_finite()
            && self
                .grad_head
                .as_ref()
                .is_none_or(|h| h.weights.is_finite() && h.bias.iter().all(|v| v.is_finite()))
    }
}

fn check_batch(embeddings: &Matrix, labels: &[usize], class_count: usize) -> Result<()> {
    if embeddings.rows() == 0 {
        return Err(LossError::InvalidArgument("empty batch".into()));
    }
    if embeddings.rows() != labels.len() {
        return Err(LossError::Shape(format!(
            "{} embeddings but {} labels",
            embeddings.rows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(LossError::InvalidArgument(format!("label {bad} outside [0, {class_count})")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(LossError::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Mean cross-entropy of the softmax over logits `x·W + b`.
pub fn softmax_loss(head: &ClassifierHead, embeddings: &Matrix, labels: &[usize]) -> Result<LossResult> {
    let m = head.class_count();
    if m < 2 {
        return Err(LossError::InvalidArgument(format!("softmax needs >= 2 classes, got {m}")));
    }
    if embeddings.cols() != head.embedding_dim() {
        return Err(LossError::Shape(format!(
            "embeddings have {} columns, head expects {}",
            embeddings.cols(),
            head.embedding_dim()
        )));
    }
    check_batch(embeddings, labels, m)?;
    let n = embeddings.rows();
    let inv_n = 1.0 / n as f64;
    let mut dlogits = head.logits(embeddings);
    let mut value = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z = dlogits.row_mut(i);
        let (arg, max) = z
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        // log Σ exp(z − max) = log1p(Σ_{k≠argmax} exp(z_k − max))
        let rest: f64 = z
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != arg)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        let log_norm = rest.ln_1p();
        value += log_norm + (max - z[y]);
        for v in z.iter_mut() {
            *v = (*v - max - log_norm).exp() * inv_n;
        }
        z[y] -= inv_n;
    }
    let grad_embeddings = dlogits.matmul_t(&head.weights);
    let grad_w = embeddings.t_matmul(&dlogits);
    let mut grad_b = vec![0.0; m];
    for r in dlogits.row_iter() {
        for (g, v) in grad_b.iter_mut().zip(r) {
            *g += v;
        }
    }
    Ok(LossResult {
        value: value * inv_n,
        grad_embeddings,
        grad_head: Some(HeadGrads {
            weights: grad_w,
            bias: grad_b,
        }),
        skipped_classes: Vec::new(),
    })
}

/// Max-margin loss against one-vs-rest hyperplanes:
///
/// ```text
/// L = (λ/n) Σ_i Σ_j 1/(2γ_ij) · exp(−δ_ij (w_jᵀx_i + b_j)/‖w_j‖)
/// ```
///
/// with `δ = 1, γ = 1` when `y_i = j` and `δ = −1, γ = m − 1` otherwise.
/// Every sample is pushed toward the positive side of its own class plane
/// and the negative side of the others, more strongly the further it sits
/// on the wrong side. Classes without a plane, or with `‖w‖ ≤ 1e-12`, are
/// skipped and reported.
pub fn max_margin_loss(
    embeddings: &Matrix,
    labels: &[usize],
    hyperplanes: &HyperplaneSet,
    lambda: f64,
) -> Result<LossResult> {
    check_lambda(lambda)?;
    let m = hyperplanes.class_count();
    if m < 2 {
        return Err(LossError::InvalidArgument(format!("max-margin needs >= 2 classes, got {m}")));
    }
    check_batch(embeddings, labels, m)?;
    if embeddings.cols() != hyperplanes.embedding_dim() {
        return Err(LossError::Shape(format!(
            "embeddings have {} columns, hyperplanes {}",
            embeddings.cols(),
            hyperplanes.embedding_dim()
        )));
    }
    let mut skipped = Vec::new();
    // (class, unit normal, offset / ‖w‖)
    let mut planes: Vec<(usize, Vec<f64>, f64)> = Vec::with_capacity(m);
    for class_id in 0..m {
        match hyperplanes.get(class_id) {
            Some(p) if norm(&p.w) > MIN_PLANE_NORM => {
                let len = norm(&p.w);
                planes.push((class_id, p.w.iter().map(|w| w / len).collect(), p.b / len));
            }
            _ => skipped.push(class_id),
        }
    }

    let n = embeddings.rows();
    let scale = lambda / n as f64;
    let other_weight = 1.0 / (2.0 * (m - 1) as f64);
    let mut value = 0.0;
    let mut grad = Matrix::zeros(n, embeddings.cols());
    for (i, &y) in labels.iter().enumerate() {
        let x = embeddings.row(i);
        let g = grad.row_mut(i);
        for (class_id, unit, offset) in &planes {
            let (sign, weight) = if *class_id == y { (1.0, 0.5) } else { (-1.0, other_weight) };
            let term = weight * (-sign * (dot(unit, x) + offset)).exp();
            value += term;
            for (gk, uk) in g.iter_mut().zip(unit) {
                *gk -= sign * uk * term;
            }
        }
    }
    grad.scale(scale);
    Ok(LossResult {
        value: value * scale,
        grad_embeddings: grad,
        grad_head: None,
        skipped_classes: skipped,
    })
}

/// Center loss `(λ/2) Σ_i ‖x_i − c_{y_i}‖²`.
pub fn center_loss(embeddings: &Matrix, labels: &[usize], centroids: &CentroidSet, lambda: f64) -> Result<LossResult> {
    check_lambda(lambda)?;
    check_batch(embeddings, labels, centroids.class_count())?;
    if embeddings.cols() != centroids.dim() {
        return Err(LossError::Shape(format!(
            "embeddings have {} columns, centroids {}",
            embeddings.cols(),
            centroids.dim()
        )));
    }
    let mut value = 0.0;
    let mut grad = Matrix::zeros(embeddings.rows(), embeddings.cols());
    for (i, &y) in labels.iter().enumerate() {
        let c = centroids.get(y).ok_or(LossError::MissingCentroid(y))?;
        for ((g, &x), &ck) in grad.row_mut(i).iter_mut().zip(embeddings.row(i)).zip(c) {
            let d = x - ck;
            value += d * d;
            *g = lambda * d;
        }
    }
    Ok(LossResult {
        value: 0.5 * lambda * value,
        grad_embeddings: grad,
        grad_head: None,
        skipped_classes: Vec::new(),
    })
}

/// Pushing loss `(λ/m) Σ_i Σ_{j≠y_i} exp(−‖x_i − c_j‖)`: exponentially
/// decaying repulsion from every negative-class centroid.
pub fn pushing_loss(embeddings: &Matrix, labels: &[usize], centroids: &CentroidSet, lambda: f64) -> Result<LossResult> {
    check_lambda(lambda)?;
    let m = centroids.class_count();
    check_batch(embeddings, labels, m)?;
    if embeddings.cols() != centroids.dim() {
        return Err(LossError::Shape(format!(
            "embeddings have {} columns, centroids {}",
            embeddings.cols(),
            centroids.dim()
        )));
    }
    let all: Vec<&[f64]> = (0..m)
        .map(|j| centroids.get(j).ok_or(LossError::MissingCentroid(j)))
        .collect::<Result<_>>()?;
    let scale = lambda / m as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(embeddings.rows(), embeddings.cols());
    for (i, &y) in labels.iter().enumerate() {
        let x = embeddings.row(i);
        let g = grad.row_mut(i);
        for (j, c) in all.iter().enumerate() {
            if j == y {
                continue;
            }
            let d = distance(x, c);
            let e = (-d).exp();
            value += e;
            if d >= MIN_PUSH_DISTANCE {
                for ((gk, &xk), &ck) in g.iter_mut().zip(x).zip(c.iter()) {
                    *gk -= scale * (xk - ck) / d * e;
                }
            }
        }
    }
    Ok(LossResult {
        value: value * scale,
        grad_embeddings: grad,
        grad_head: None,
        skipped_classes: Vec::new(),
    })
}

/// Sums already-weighted terms: values, embedding gradients and any head
/// gradients, in the order given.
pub fn combine_losses(results: &[LossResult]) -> Result<LossResult> {
    let (first, rest) = results
        .split_first()
        .ok_or_else(|| LossError::InvalidArgument("nothing to combine".into()))?;
    let mut total = first.clone();
    for r in rest {
        if r.grad_embeddings.shape() != total.grad_embeddings.shape() {
            return Err(LossError::Shape(format!(
                "embedding gradients {:?} and {:?}",
                total.grad_embeddings.shape(),
                r.grad_embeddings.shape()
            )));
        }
        total.value += r.value;
        total.grad_embeddings.add_assign(&r.grad_embeddings);
        match (&mut total.grad_head, &r.grad_head) {
            (Some(acc), Some(h)) => {
                if acc.weights.shape() != h.weights.shape() || acc.bias.len() != h.bias.len() {
                    return Err(LossError::Shape("head gradients differ in shape".into()));
                }
                acc.weights.add_assign(&h.weights);
                for (a, b) in acc.bias.iter_mut().zip(&h.bias) {
                    *a += b;
                }
            }
            (acc @ None, Some(h)) => *acc = Some(h.clone()),
            _ => {}
        }
        total.skipped_classes.extend_from_slice(&r.skipped_classes);
    }
    Ok(total)
}
