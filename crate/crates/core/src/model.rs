//! Feed-forward embedding network with explicit backpropagation, the
//! softmax classifier head, Adam and the step learning-rate schedule.

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::seeded_rng;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("activation cache does not match this model or gradient: {0}")]
    StaleCache(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Flat view over the arrays of a parameter (or gradient) container, in a
/// fixed order shared by the container and its gradients.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// MLP weights: rectifier on hidden layers, identity on the output layer.
/// Layer `k` maps `layer_dims[k]` to `layer_dims[k + 1]` as `x·W_k + b_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(ModelError::InvalidArgument(format!(
            "need at least 2 layer dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(ModelError::InvalidArgument(format!(
            "layer dims must be >= 1, got {layer_dims:?}"
        )));
    }
    Ok(())
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<ModelParams> {
    check_dims(layer_dims)?;
    let mut rng = seeded_rng(seed, 10);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            })
            .collect();
        weights.push(Matrix::from_vec(fan_in, fan_out, data));
        biases.push(vec![0.0; fan_out]);
    }
    Ok(ModelParams {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases,
    })
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    layer_dims: Vec<usize>,
    /// Input to each layer: the raw inputs, then the rectified hidden outputs.
    layer_inputs: Vec<Matrix>,
    /// Pre-activations of hidden layers.
    pre_activations: Vec<Matrix>,
}

impl ActivationCache {
    pub fn batch_size(&self) -> usize {
        self.layer_inputs[0].rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl ModelParams {
    /// Assembles parameters from explicit arrays, checking every shape.
    pub fn from_parts(layer_dims: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        check_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(ModelError::Shape(format!(
                "{layers} layers need {layers} weights and biases, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for k in 0..layers {
            if weights[k].shape() != (layer_dims[k], layer_dims[k + 1]) {
                return Err(ModelError::Shape(format!(
                    "layer {k} weight is {:?}, expected {:?}",
                    weights[k].shape(),
                    (layer_dims[k], layer_dims[k + 1])
                )));
            }
            if biases[k].len() != layer_dims[k + 1] {
                return Err(ModelError::Shape(format!(
                    "layer {k} bias has length {}, expected {}",
                    biases[k].len(),
                    layer_dims[k + 1]
                )));
            }
        }
        let params = Self {
            layer_dims,
            weights,
            biases,
        };
        if !params.all_finite() {
            return Err(ModelError::InvalidArgument("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn embedding_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    fn layer_count(&self) -> usize {
        self.weights.len()
    }

    fn affine(&self, k: usize, input: &Matrix) -> Matrix {
        let mut z = input.matmul(&self.weights[k]);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.biases[k]) {
                *v += b;
            }
        }
        z
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(ModelError::Shape(format!(
                "input has {} columns, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Embeddings for `inputs` (one sample per row) plus the activation cache.
    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ActivationCache)> {
        self.check_input(inputs)?;
        let mut layer_inputs = Vec::with_capacity(self.layer_count());
        let mut pre_activations = Vec::with_capacity(self.layer_count() - 1);
        let mut current = inputs.clone();
        for k in 0..self.layer_count() {
            let z = self.affine(k, &current);
            layer_inputs.push(current);
            if k + 1 == self.layer_count() {
                let cache = ActivationCache {
                    layer_dims: self.layer_dims.clone(),
                    layer_inputs,
                    pre_activations,
                };
                return Ok((z, cache));
            }
            let mut a = z.clone();
            for v in a.as_mut_slice() {
                *v = v.max(0.0);
            }
            pre_activations.push(z);
            current = a;
        }
        unreachable!("models always have at least one layer")
    }

    /// Forward pass without keeping a cache.
    pub fn embed(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let mut current = inputs.clone();
        for k in 0..self.layer_count() {
            current = self.affine(k, &current);
            if k + 1 < self.layer_count() {
                for v in current.as_mut_slice() {
                    *v = v.max(0.0);
                }
            }
        }
        Ok(current)
    }

    /// Parameter gradients and the gradient with respect to the inputs,
    /// given the gradient of a scalar loss with respect to the embeddings.
    pub fn backward(&self, cache: &ActivationCache, grad_embeddings: &Matrix) -> Result<(ParamGrads, Matrix)> {
        if cache.layer_dims != self.layer_dims {
            return Err(ModelError::StaleCache(format!(
                "cache built for {:?}, model is {:?}",
                cache.layer_dims, self.layer_dims
            )));
        }
        if grad_embeddings.shape() != (cache.batch_size(), self.embedding_dim()) {
            return Err(ModelError::StaleCache(format!(
                "gradient shape {:?} does not match cached batch {:?}",
                grad_embeddings.shape(),
                (cache.batch_size(), self.embedding_dim())
            )));
        }
        let layers = self.layer_count();
        let mut weight_grads = vec![Matrix::zeros(0, 0); layers];
        let mut bias_grads = vec![Vec::new(); layers];
        let mut delta = grad_embeddings.clone();
        for k in (0..layers).rev() {
            weight_grads[k] = cache.layer_inputs[k].t_matmul(&delta);
            let mut db = vec![0.0; delta.cols()];
            for r in delta.row_iter() {
                for (g, v) in db.iter_mut().zip(r) {
                    *g += v;
                }
            }
            bias_grads[k] = db;
            let mut upstream = delta.matmul_t(&self.weights[k]);
            if k > 0 {
                let z = &cache.pre_activations[k - 1];
                for (u, &zv) in upstream.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            delta = upstream;
        }
        Ok((
            ParamGrads {
                weights: weight_grads,
                biases: bias_grads,
            },
            delta,
        ))
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }
}

impl Parameters for ParamGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }
}

/// Softmax classifier over embeddings: logits are `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    /// Normal weights with variance `1 / embedding_dim`, zero bias.
    pub fn init(embedding_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        if embedding_dim == 0 || class_count == 0 {
            return Err(ModelError::InvalidArgument(format!(
                "head needs positive dims, got {embedding_dim}x{class_count}"
            )));
        }
        let mut rng = seeded_rng(seed, 11);
        let std = (1.0 / embedding_dim as f64).sqrt();
        let data = (0..embedding_dim * class_count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            })
            .collect();
        Ok(Self {
            weights: Matrix::from_vec(embedding_dim, class_count, data),
            bias: vec![0.0; class_count],
        })
    }

    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.cols() != bias.len() {
            return Err(ModelError::Shape(format!(
                "head weight has {} classes, bias {}",
                weights.cols(),
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn embedding_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn class_count(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, embeddings: &Matrix) -> Matrix {
        let mut z = embeddings.matmul(&self.weights);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        z
    }
}

impl Parameters for ClassifierHead {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}

impl Parameters for HeadGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}

/// Adam moment estimates mirroring one [`Parameters`] container.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.shapes().into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn with_defaults<P: Parameters>(params: &P) -> Self {
        Self::new(params, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam update followed by decoupled weight decay:
/// `p ← p − rate·(m̂ / (√v̂ + ε) + weight_decay·p)`.
pub fn adam_step<P: Parameters, G: Parameters>(
    params: &mut P,
    grads: &G,
    state: &mut AdamState,
    rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ModelError::InvalidArgument(format!("rate must be > 0, got {rate}")));
    }
    let shapes = params.shapes();
    if grads.shapes() != shapes || state.first_moment.iter().map(Vec::len).collect::<Vec<_>>() != shapes {
        return Err(ModelError::Shape(
            "parameters, gradients and optimizer state disagree".into(),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let grads = grads.tensors();
    for (k, p) in params.tensors_mut().into_iter().enumerate() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        for (i, (pi, &gi)) in p.iter_mut().zip(grads[k]).enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            *pi -= rate * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *pi);
        }
    }
    Ok(())
}

/// Step schedule: the base rate multiplied by `drop_factor` once for every
/// drop epoch already reached.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    base_rate: f64,
    drop_epochs: Vec<usize>,
    drop_factor: f64,
    final_epoch: usize,
}

impl LrSchedule {
    pub fn new(base_rate: f64, drop_epochs: Vec<usize>, drop_factor: f64, final_epoch: usize) -> Result<Self> {
        if !(base_rate > 0.0 && base_rate.is_finite()) {
            return Err(ModelError::InvalidArgument(format!("base rate must be > 0, got {base_rate}")));
        }
        if !(drop_factor > 0.0 && drop_factor.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "drop factor must be > 0, got {drop_factor}"
            )));
        }
        if drop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidArgument(format!(
                "drop epochs must be strictly increasing, got {drop_epochs:?}"
            )));
        }
        if drop_epochs.last().is_some_and(|&e| e > final_epoch) {
            return Err(ModelError::InvalidArgument(format!(
                "drop epochs {drop_epochs:?} run past final epoch {final_epoch}"
            )));
        }
        Ok(Self {
            base_rate,
            drop_epochs,
            drop_factor,
            final_epoch,
        })
    }

    /// 0.001, divided by 10 at epochs 15 and 25, stopping at 30.
    pub fn paper_default() -> Self {
        Self::new(0.001, vec![15, 25], 0.1, 30).expect("valid constants")
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn drop_epochs(&self) -> &[usize] {
        &self.drop_epochs
    }

    pub fn drop_factor(&self) -> f64 {
        self.drop_factor
    }

    pub fn final_epoch(&self) -> usize {
        self.final_epoch
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> Result<f64> {
        if epoch > self.final_epoch {
            return Err(ModelError::InvalidArgument(format!(
                "epoch {epoch} is past the final epoch {}",
                self.final_epoch
            )));
        }
        let drops = self.drop_epochs.iter().filter(|&&e| e <= epoch).count();
        Ok(self.base_rate * self.drop_factor.powi(drops as i32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes_and_zero_bias() {
        let m = init_model(&[4, 2], 1).unwrap();
        assert_eq!(m.weights()[0].shape(), (4, 2));
        assert_eq!(m.biases()[0], vec![0.0, 0.0]);
        assert_eq!(init_model(&[10, 8, 2], 5).unwrap(), init_model(&[10, 8, 2], 5).unwrap());
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_model(&[], 0).is_err());
        assert!(init_model(&[3], 0).is_err());
        assert!(init_model(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn init_variance_follows_fan_in() {
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut n = 0.0;
        for seed in 0..1250 {
            for &w in init_model(&[4, 2], seed).unwrap().weights()[0].as_slice() {
                sum += w;
                sq += w * w;
                n += 1.0;
            }
        }
        let mean = sum / n;
        let var = sq / n - mean * mean;
        assert_eq!(n, 10_000.0);
        assert!(var > 0.5 / 3.0 && var < 0.5 * 3.0, "variance {var}");
    }

    #[test]
    fn identity_layer_forward() {
        let m = ModelParams::from_parts(
            vec![2, 2],
            vec![Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        let (e, _) = m.forward(&Matrix::from_rows(&[[3.0, -2.0]])).unwrap();
        assert_eq!(e.row(0), &[3.0, -2.0]);
    }

    #[test]
    fn negative_preactivations_are_rectified() {
        let m = ModelParams::from_parts(
            vec![2, 3, 1],
            vec![Matrix::from_rows(&[[-1.0, -1.0, -1.0], [-1.0, -1.0, -1.0]]), Matrix::from_rows(&[[1.0], [1.0], [1.0]])],
            vec![vec![0.0; 3], vec![0.5]],
        )
        .unwrap();
        let (e, cache) = m.forward(&Matrix::from_rows(&[[1.0, 2.0]])).unwrap();
        assert_eq!(cache.layer_inputs[1].row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(e.row(0), &[0.5]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = init_model(&[3, 2], 0).unwrap();
        assert!(matches!(m.forward(&Matrix::zeros(2, 4)), Err(ModelError::Shape(_))));
    }

    #[test]
    fn backward_detects_mismatched_cache() {
        let a = init_model(&[3, 4, 2], 0).unwrap();
        let b = init_model(&[3, 5, 2], 0).unwrap();
        let x = Matrix::zeros(2, 3);
        let (_, cache) = a.forward(&x).unwrap();
        assert!(matches!(b.backward(&cache, &Matrix::zeros(2, 2)), Err(ModelError::StaleCache(_))));
        assert!(matches!(a.backward(&cache, &Matrix::zeros(3, 2)), Err(ModelError::StaleCache(_))));
    }

    #[test]
    fn backward_is_linear() {
        let m = init_model(&[3, 5, 2], 4).unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.4, 2.0], [1.0, 0.3, -0.2]]);
        let (_, cache) = m.forward(&x).unwrap();
        let (zero, dx0) = m.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(zero.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(dx0.as_slice().iter().all(|&v| v == 0.0));

        let g = Matrix::from_rows(&[[0.5, -1.0], [0.25, 2.0]]);
        let mut g2 = g.clone();
        g2.scale(2.0);
        let (one, _) = m.backward(&cache, &g).unwrap();
        let (two, _) = m.backward(&cache, &g2).unwrap();
        for (a, b) in one.tensors().iter().zip(two.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn single_adam_step_from_rest() {
        let mut p = ClassifierHead::new(Matrix::from_rows(&[[0.0]]), vec![0.0]).unwrap();
        let g = HeadGrads {
            weights: Matrix::from_rows(&[[1.0]]),
            bias: vec![0.0],
        };
        let mut state = AdamState::with_defaults(&p);
        adam_step(&mut p, &g, &mut state, 0.001, 0.0).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.weights.get(0, 0) - expected).abs() < 1e-9);
        assert_eq!(p.bias[0], 0.0);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn zero_gradient_adam_is_identity() {
        let mut m = init_model(&[3, 4, 2], 2).unwrap();
        let before = m.clone();
        let zero = ParamGrads {
            weights: m.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: m.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let mut state = AdamState::with_defaults(&m);
        adam_step(&mut m, &zero, &mut state, 0.01, 0.0).unwrap();
        assert_eq!(m, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn decoupled_weight_decay() {
        let mut p = ClassifierHead::new(Matrix::from_rows(&[[1.0]]), vec![0.0]).unwrap();
        let g = HeadGrads {
            weights: Matrix::zeros(1, 1),
            bias: vec![0.0],
        };
        let mut state = AdamState::with_defaults(&p);
        adam_step(&mut p, &g, &mut state, 0.001, 0.0005).unwrap();
        assert!((p.weights.get(0, 0) - (1.0 - 5e-7)).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = init_model(&[3, 2], 0).unwrap();
        let other = init_model(&[3, 3], 0).unwrap();
        let mut state = AdamState::with_defaults(&p);
        assert!(matches!(adam_step(&mut p, &other, &mut state, 0.1, 0.0), Err(ModelError::Shape(_))));
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn step_schedule_matches_paper_defaults() {
        let s = LrSchedule::paper_default();
        let close = |a: f64, b: f64| ((a - b) / b).abs() < 1e-12;
        assert!(close(s.lr_at_epoch(0).unwrap(), 0.001));
        assert!(close(s.lr_at_epoch(14).unwrap(), 0.001));
        assert!(close(s.lr_at_epoch(15).unwrap(), 0.0001));
        assert!(close(s.lr_at_epoch(25).unwrap(), 0.00001));
        assert!(close(s.lr_at_epoch(30).unwrap(), 0.00001));
        assert!(s.lr_at_epoch(31).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(LrSchedule::new(0.1, vec![5, 5], 0.1, 10).is_err());
        assert!(LrSchedule::new(0.1, vec![5, 12], 0.1, 10).is_err());
        assert!(LrSchedule::new(0.0, vec![], 0.1, 10).is_err());
        assert!(LrSchedule::new(0.1, vec![], 0.1, 10).is_ok());
    }
}
