//! Finite-difference checks of the analytic loss gradients.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{distance, Matrix};
use crate::losses::{center_loss, max_margin_loss, pushing_loss, softmax_loss, LossResult};
use crate::model::ClassifierHead;
use crate::seeded_rng;
use crate::setparams::CentroidSet;
use crate::svm::{FitInfo, Hyperplane, HyperplaneSet};

/// Central-difference step.
pub const STEP: f64 = 1e-6;

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-6;

/// Rows this close to a negative centroid are left out of pushing-loss
/// checks: the finite difference would straddle the singularity.
pub const PUSH_EXCLUSION_RADIUS: f64 = 1e-3;

const SAMPLES: usize = 16;
const DIM: usize = 6;
const CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTerm {
    Softmax,
    MaxMargin,
    Center,
    Pushing,
}

impl GradTerm {
    pub const ALL: [GradTerm; 4] = [GradTerm::Softmax, GradTerm::MaxMargin, GradTerm::Center, GradTerm::Pushing];
}

impl fmt::Display for GradTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradTerm::Softmax => "softmax",
            GradTerm::MaxMargin => "max_margin",
            GradTerm::Center => "center",
            GradTerm::Pushing => "pushing",
        })
    }
}

impl FromStr for GradTerm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(GradTerm::Softmax),
            "max_margin" => Ok(GradTerm::MaxMargin),
            "center" => Ok(GradTerm::Center),
            "pushing" => Ok(GradTerm::Pushing),
            other => Err(format!(
                "unknown loss term {other:?} (expected softmax, max_margin, center or pushing)"
            )),
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1)`: relative for large gradients, absolute
/// below unit magnitude where central differences lose relative accuracy.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub term: GradTerm,
    pub max_relative_error: f64,
    /// `(row, column)` of the embedding gradient entry with the largest
    /// error, or `None` when the worst entry belongs to the head gradients.
    pub worst_coordinate: Option<(usize, usize)>,
    pub checked: usize,
    pub excluded: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            z
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// A random instance of one loss term: value and analytic gradients as a
/// function of the embeddings.
struct Instance {
    labels: Vec<usize>,
    embeddings: Matrix,
    head: ClassifierHead,
    hyperplanes: HyperplaneSet,
    centroids: CentroidSet,
}

impl Instance {
    fn random(seed: u64) -> Self {
        let mut rng = seeded_rng(seed, 40);
        let labels: Vec<usize> = (0..SAMPLES).map(|i| i % CLASSES).collect();
        let embeddings = normal_matrix(&mut rng, SAMPLES, DIM);
        let head_w = normal_matrix(&mut rng, DIM, CLASSES);
        let head_b = normal_matrix(&mut rng, 1, CLASSES).into_vec();
        let head = ClassifierHead::new(head_w, head_b).expect("consistent shapes");
        let mut hyperplanes = HyperplaneSet::new(DIM, CLASSES);
        let mut centroids = CentroidSet::new(DIM, CLASSES);
        for class_id in 0..CLASSES {
            let w = normal_matrix(&mut rng, 1, DIM).into_vec();
            let b: f64 = StandardNormal.sample(&mut rng);
            hyperplanes
                .insert(Hyperplane {
                    w,
                    b,
                    class_id,
                    fit_info: FitInfo {
                        iterations: 0,
                        dual_objective: 0.0,
                        converged: true,
                        kkt_gap: 0.0,
                    },
                    dual: Vec::new(),
                })
                .expect("consistent shapes");
            let c = normal_matrix(&mut rng, 1, DIM).into_vec();
            centroids.insert(class_id, c, 1).expect("consistent shapes");
        }
        Self {
            labels,
            embeddings,
            head,
            hyperplanes,
            centroids,
        }
    }

    fn eval(&self, term: GradTerm, embeddings: &Matrix, head: &ClassifierHead) -> LossResult {
        let r = match term {
            GradTerm::Softmax => softmax_loss(head, embeddings, &self.labels),
            GradTerm::MaxMargin => max_margin_loss(embeddings, &self.labels, &self.hyperplanes, 1.0),
            GradTerm::Center => center_loss(embeddings, &self.labels, &self.centroids, 1.0),
            GradTerm::Pushing => pushing_loss(embeddings, &self.labels, &self.centroids, 1.0),
        };
        r.expect("generated instance is valid")
    }
}

/// Compares analytic gradients of `term` against central differences on a
/// random instance with 16 samples, 6 dimensions and 4 classes. For the
/// softmax term the head gradients are checked as well. The pushing check
/// places sample 0 exactly on a negative centroid; that row is excluded.
pub fn grad_check(term: GradTerm, seed: u64) -> GradCheckReport {
    let mut inst = Instance::random(seed);
    if term == GradTerm::Pushing {
        let negative = (inst.labels[0] + 1) % CLASSES;
        let c = inst.centroids.get(negative).expect("all classes present").to_vec();
        inst.embeddings.row_mut(0).copy_from_slice(&c);
    }

    let analytic = inst.eval(term, &inst.embeddings, &inst.head);
    let mut report = GradCheckReport {
        term,
        max_relative_error: 0.0,
        worst_coordinate: None,
        checked: 0,
        excluded: 0,
    };

    let dim = inst.embeddings.cols();
    for row in 0..inst.embeddings.rows() {
        if term == GradTerm::Pushing {
            let x = inst.embeddings.row(row);
            let near = (0..CLASSES)
                .filter(|&j| j != inst.labels[row])
                .any(|j| distance(x, inst.centroids.get(j).expect("present")) < PUSH_EXCLUSION_RADIUS);
            if near {
                report.excluded += dim;
                continue;
            }
        }
        let numeric = central_difference(
            |v| {
                let mut e = inst.embeddings.clone();
                e.row_mut(row).copy_from_slice(v);
                inst.eval(term, &e, &inst.head).value
            },
            inst.embeddings.row(row),
            STEP,
        );
        for (col, &num) in numeric.iter().enumerate() {
            let err = relative_error(analytic.grad_embeddings.get(row, col), num);
            report.checked += 1;
            if err > report.max_relative_error || report.worst_coordinate.is_none() && report.checked == 1 {
                report.max_relative_error = err;
                report.worst_coordinate = Some((row, col));
            }
        }
    }

    if let (GradTerm::Softmax, Some(head_grads)) = (term, &analytic.grad_head) {
        let numeric_w = central_difference(
            |v| {
                let mut h = inst.head.clone();
                h.weights.as_mut_slice().copy_from_slice(v);
                inst.eval(term, &inst.embeddings, &h).value
            },
            inst.head.weights.as_slice(),
            STEP,
        );
        let numeric_b = central_difference(
            |v| {
                let mut h = inst.head.clone();
                h.bias.copy_from_slice(v);
                inst.eval(term, &inst.embeddings, &h).value
            },
            &inst.head.bias,
            STEP,
        );
        let pairs = head_grads
            .weights
            .as_slice()
            .iter()
            .zip(&numeric_w)
            .chain(head_grads.bias.iter().zip(&numeric_b));
        for (&a, &n) in pairs {
            let err = relative_error(a, n);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_coordinate = None;
            }
        }
    }
    report
}
