//! Linear soft-margin SVM trained in the dual, plus one-vs-rest fitting.
//!
//! The solver works on
//!
//! ```text
//! min_α  ½ αᵀQα − Σα   s.t.  0 ≤ α ≤ C,  Σ yα = 0,   Q_ij = y_i y_j x_iᵀx_j
//! ```
//!
//! by repeatedly optimizing the maximal-violating pair of coordinates
//! (second-order working-set selection) in closed form. Each pair update
//! keeps the equality constraint, so the bias stays an explicit primal
//! variable. Coordinates are scanned in index order and ties go to the
//! lowest index, which makes every fit bit-reproducible.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{dot, norm, Matrix};

const TAU: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, SvmError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// Box constraint on the dual variables.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Budget in epochs; one epoch is `n` pair updates.
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 1000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::InvalidArgument(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SvmError::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SvmError::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    /// Epochs started.
    pub iterations: usize,
    /// `Σα − ½‖w‖²` at the returned solution.
    pub dual_objective: f64,
    pub converged: bool,
    /// Maximal-violating-pair gap when the solver stopped.
    pub kkt_gap: f64,
}

/// Separating hyperplane `wᵀx + b = 0` for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub w: Vec<f64>,
    pub b: f64,
    pub class_id: usize,
    pub fit_info: FitInfo,
    /// Dual variables of the fit, one per training row. Empty when the plane
    /// did not come straight out of a solver (e.g. after blending).
    pub dual: Vec<f64>,
}

impl Hyperplane {
    /// `wᵀx + b`
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// Signed distance of `x` to the plane.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.decision(x) / norm(&self.w)
    }
}

/// A fit plus the dual objective recorded at the end of every epoch.
#[derive(Debug, Clone)]
pub struct TracedFit {
    pub hyperplane: Hyperplane,
    pub objective_trace: Vec<f64>,
}

fn check_binary(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(SvmError::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::InvalidArgument(format!("labels must be ±1, found {bad}")));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(SvmError::InvalidArgument("both +1 and -1 labels are required".into()));
    }
    if !x.is_finite() {
        return Err(SvmError::InvalidArgument("non-finite input row".into()));
    }
    Ok(())
}

/// Above this many rows kernel rows are computed on demand instead of
/// precomputing the Gram matrix.
const GRAM_LIMIT: usize = 4096;

pub fn fit_linear_svm(x: &Matrix, y: &[f64], config: &SvmConfig) -> Result<Hyperplane> {
    fit_linear_svm_traced(x, y, config).map(|f| f.hyperplane)
}

fn primal_weights(x: &Matrix, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.cols()];
    for (i, row) in x.row_iter().enumerate() {
        let coef = alpha[i] * y[i];
        if coef != 0.0 {
            for (wk, &xk) in w.iter_mut().zip(row) {
                *wk += coef * xk;
            }
        }
    }
    w
}

fn dual_objective(w: &[f64], alpha: &[f64]) -> f64 {
    alpha.iter().sum::<f64>() - 0.5 * dot(w, w)
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Same as [`fit_linear_svm`] but also returns the per-epoch dual objective.
pub fn fit_linear_svm_traced(x: &Matrix, y: &[f64], config: &SvmConfig) -> Result<TracedFit> {
    config.validate()?;
    check_binary(x, y)?;
    let n = x.rows();
    let c = config.c;
    let diag: Vec<f64> = x.row_iter().map(|r| dot(r, r)).collect();
    let gram = (n <= GRAM_LIMIT).then(|| x.matmul_t(x));
    let kernel_row = |i: usize, out: &mut [f64]| match &gram {
        Some(g) => {
            for (t, r) in out.iter_mut().enumerate() {
                *r = y[i] * y[t] * g.get(i, t);
            }
        }
        None => {
            let xi = x.row(i);
            for (t, r) in out.iter_mut().enumerate() {
                *r = y[i] * y[t] * dot(xi, x.row(t));
            }
        }
    };
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − Σα
    let mut grad = vec![-1.0; n];
    let mut row_i = vec![0.0; n];
    let mut row_j = vec![0.0; n];

    let max_steps = config.max_iter.saturating_mul(n);
    let mut steps = 0usize;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut gap;

    loop {
        // i: maximal −y·G over I_up; Gmin: minimal −y·G over I_low
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(y[t], alpha[t], c) && v > g_max {
                g_max = v;
                i_sel = t;
            }
            if in_low(y[t], alpha[t], c) && v < g_min {
                g_min = v;
            }
        }
        gap = g_max - g_min;
        if gap <= config.tol || i_sel == usize::MAX {
            converged = true;
            break;
        }
        if steps == max_steps {
            break;
        }
        let i = i_sel;
        kernel_row(i, &mut row_i);

        // second-order choice of j
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(y[t], alpha[t], c) {
                continue;
            }
            let v = -y[t] * grad[t];
            let b = g_max - v;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * y[i] * y[t] * row_i[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -(b * b) / a;
                if score < best {
                    best = score;
                    j_sel = t;
                }
            }
        }
        if j_sel == usize::MAX {
            converged = true;
            break;
        }
        let j = j_sel;
        kernel_row(j, &mut row_j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = row_i[j];
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += row_i[t] * di + row_j[t] * dj;
        }
        steps += 1;
        if steps % n == 0 {
            trace.push(dual_objective(&primal_weights(x, y, &alpha), &alpha));
        }
    }

    let w = primal_weights(x, y, &alpha);
    let b = recover_bias(x, y, &alpha, &w, c);
    let objective = dual_objective(&w, &alpha);
    if steps % n != 0 || trace.is_empty() {
        trace.push(objective);
    }
    Ok(TracedFit {
        hyperplane: Hyperplane {
            w,
            b,
            class_id: 0,
            fit_info: FitInfo {
                iterations: steps.div_ceil(n),
                dual_objective: objective,
                converged,
                kkt_gap: gap,
            },
            dual: alpha,
        },
        objective_trace: trace,
    })
}

/// Bias from the free support vectors (0 < α < C), averaged. Without free
/// vectors the bias sits at the midpoint of the interval left open by the
/// tightest points bounding it from above and below.
fn recover_bias(x: &Matrix, y: &[f64], alpha: &[f64], w: &[f64], c: f64) -> f64 {
    let offsets = (0..y.len()).map(|t| (t, y[t] - dot(w, x.row(t))));
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for (t, g) in offsets {
        let a = alpha[t];
        if a > 0.0 && a < c {
            free_sum += g;
            free_count += 1;
        } else {
            if in_up(y[t], a, c) {
                lower = lower.max(g);
            }
            if in_low(y[t], a, c) {
                upper = upper.min(g);
            }
        }
    }
    if free_count > 0 {
        return free_sum / free_count as f64;
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}

/// Largest violation of the KKT conditions certified by the plane's dual
/// variables: box bounds, `Σyα = 0`, `w = Σ αyx`, and complementary
/// slackness between each α and its functional margin. Returns infinity
/// when the plane carries no dual certificate for these rows.
pub fn svm_kkt_residual(h: &Hyperplane, x: &Matrix, y: &[f64], c: f64) -> f64 {
    if h.dual.len() != x.rows() || y.len() != x.rows() || h.w.len() != x.cols() {
        return f64::INFINITY;
    }
    let alpha = &h.dual;
    let mut worst = 0.0f64;
    let mut balance = 0.0;
    let mut recon = vec![0.0; x.cols()];
    for (t, row) in x.row_iter().enumerate() {
        let a = alpha[t];
        worst = worst.max(-a).max(a - c);
        balance += a * y[t];
        for (r, &xk) in recon.iter_mut().zip(row) {
            *r += a * y[t] * xk;
        }
        let margin = y[t] * h.decision(row);
        let a_in = a.clamp(0.0, c);
        let above = (margin - 1.0).max(0.0);
        let below = (1.0 - margin).max(0.0);
        worst = worst.max(a_in.min(above)).max((c - a_in).min(below));
    }
    worst = worst.max(balance.abs());
    for (wk, rk) in h.w.iter().zip(&recon) {
        worst = worst.max((wk - rk).abs());
    }
    worst
}

/// Smallest signed distance `y(wᵀx + b)/‖w‖` over the rows.
pub fn geometric_margin(h: &Hyperplane, x: &Matrix, y: &[f64]) -> f64 {
    let scale = norm(&h.w);
    x.row_iter()
        .zip(y)
        .map(|(row, &yi)| yi * h.decision(row) / scale)
        .fold(f64::INFINITY, f64::min)
}

/// One hyperplane per class, fitted one-vs-rest.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneSet {
    planes: BTreeMap<usize, Hyperplane>,
    embedding_dim: usize,
    class_count: usize,
}

impl HyperplaneSet {
    pub fn new(embedding_dim: usize, class_count: usize) -> Self {
        Self {
            planes: BTreeMap::new(),
            embedding_dim,
            class_count,
        }
    }

    /// Inserts (or replaces) the plane for `plane.class_id`.
    pub fn insert(&mut self, plane: Hyperplane) -> Result<()> {
        if plane.w.len() != self.embedding_dim {
            return Err(SvmError::Shape(format!(
                "plane has dimension {}, set expects {}",
                plane.w.len(),
                self.embedding_dim
            )));
        }
        if plane.class_id >= self.class_count {
            return Err(SvmError::InvalidArgument(format!(
                "class {} outside [0, {})",
                plane.class_id, self.class_count
            )));
        }
        self.planes.insert(plane.class_id, plane);
        Ok(())
    }

    pub fn get(&self, class_id: usize) -> Option<&Hyperplane> {
        self.planes.get(&class_id)
    }

    pub fn get_mut(&mut self, class_id: usize) -> Option<&mut Hyperplane> {
        self.planes.get_mut(&class_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hyperplane> {
        self.planes.values()
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }
}

/// Class left out of a one-vs-rest fit for lack of samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Omission {
    pub class_id: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Fits one plane per class in `[0, class_count)` with that class as +1
/// and every other row as −1. Classes with fewer than `min_count`
/// positives or negatives are omitted and reported. Fits run in parallel
/// and are assembled in class order.
pub fn fit_one_vs_all(
    x: &Matrix,
    labels: &[usize],
    class_count: usize,
    config: &SvmConfig,
    min_count: usize,
) -> Result<(HyperplaneSet, Vec<Omission>)> {
    config.validate()?;
    if class_count < 2 {
        return Err(SvmError::InvalidArgument(format!(
            "one-vs-rest needs at least 2 classes, got {class_count}"
        )));
    }
    if x.rows() != labels.len() {
        return Err(SvmError::Shape(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(SvmError::InvalidArgument(format!("label {bad} outside [0, {class_count})")));
    }
    let min_count = min_count.max(1);
    let outcomes: Vec<Result<std::result::Result<Hyperplane, Omission>>> = (0..class_count)
        .into_par_iter()
        .map(|class_id| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class_id { 1.0 } else { -1.0 })
                .collect();
            let positives = y.iter().filter(|&&v| v > 0.0).count();
            let negatives = y.len() - positives;
            if positives < min_count || negatives < min_count {
                return Ok(Err(Omission {
                    class_id,
                    positives,
                    negatives,
                }));
            }
            let mut plane = fit_linear_svm(x, &y, config)?;
            plane.class_id = class_id;
            Ok(Ok(plane))
        })
        .collect();

    let mut set = HyperplaneSet::new(x.cols(), class_count);
    let mut omitted = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Ok(plane) => set.insert(plane)?,
            Err(o) => omitted.push(o),
        }
    }
    Ok((set, omitted))
}

/// Configuration used to approximate a hard-margin fit.
pub const HARD_MARGIN: SvmConfig = SvmConfig {
    c: 1e6,
    tol: 1e-7,
    max_iter: 20_000,
};

/// Minimum, over all class pairs, of the geometric margin of a hard-margin
/// SVM fitted to just those two classes. Negative when some pair is not
/// linearly separable.
pub fn min_pairwise_margin(x: &Matrix, labels: &[usize], class_count: usize) -> Result<f64> {
    if x.rows() != labels.len() {
        return Err(SvmError::Shape(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    let mut worst = f64::INFINITY;
    for a in 0..class_count {
        for b in a + 1..class_count {
            let idx: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == a || labels[i] == b)
                .collect();
            let sub = x.select_rows(&idx);
            let y: Vec<f64> = idx
                .iter()
                .map(|&i| if labels[i] == a { 1.0 } else { -1.0 })
                .collect();
            let plane = fit_linear_svm(&sub, &y, &HARD_MARGIN)?;
            worst = worst.min(geometric_margin(&plane, &sub, &y));
        }
    }
    Ok(worst)
}

/// Fraction of rows on the correct side of their one-vs-rest plane, for
/// every class. Classes without a plane count every row as wrong.
pub fn one_vs_rest_accuracy(set: &HyperplaneSet, x: &Matrix, labels: &[usize]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for class_id in 0..set.class_count() {
        for (row, &l) in x.row_iter().zip(labels) {
            total += 1;
            if let Some(p) = set.get(class_id) {
                let want = l == class_id;
                if (p.decision(row) > 0.0) == want {
                    correct += 1;
                }
            }
        }
    }
    correct as f64 / total.max(1) as f64
}
