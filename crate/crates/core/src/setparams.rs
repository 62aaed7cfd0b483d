//! Per-class set parameters (centroids and one-vs-rest hyperplanes) and the
//! two procedures that keep them in step with a moving feature space:
//!
//! * **offline update**: freeze the network, embed a per-class sample of
//!   the training set, recompute everything from scratch;
//! * **online update**: every iteration, estimate parameters from the
//!   current batch and blend them in as `(1 − α)·old + α·new`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::LabeledDataset;
use crate::linalg::Matrix;
use crate::model::{ModelError, ModelParams};
use crate::seeded_rng;
use crate::svm::{fit_linear_svm, fit_one_vs_all, Hyperplane, HyperplaneSet, SvmConfig, SvmError};

#[derive(Debug, Error)]
pub enum SetParamsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub type Result<T> = std::result::Result<T, SetParamsError>;

/// Class centroids in embedding space, with the sample count behind each.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    centroids: BTreeMap<usize, Vec<f64>>,
    counts: BTreeMap<usize, usize>,
    dim: usize,
    class_count: usize,
}

impl CentroidSet {
    pub fn new(dim: usize, class_count: usize) -> Self {
        Self {
            centroids: BTreeMap::new(),
            counts: BTreeMap::new(),
            dim,
            class_count,
        }
    }

    pub fn insert(&mut self, class_id: usize, centroid: Vec<f64>, count: usize) -> Result<()> {
        if centroid.len() != self.dim {
            return Err(SetParamsError::InvalidArgument(format!(
                "centroid has dimension {}, set expects {}",
                centroid.len(),
                self.dim
            )));
        }
        if class_id >= self.class_count {
            return Err(SetParamsError::InvalidArgument(format!(
                "class {class_id} outside [0, {})",
                self.class_count
            )));
        }
        if centroid.iter().any(|v| !v.is_finite()) {
            return Err(SetParamsError::InvalidArgument(format!(
                "centroid for class {class_id} is not finite"
            )));
        }
        self.centroids.insert(class_id, centroid);
        self.counts.insert(class_id, count);
        Ok(())
    }

    pub fn get(&self, class_id: usize) -> Option<&[f64]> {
        self.centroids.get(&class_id).map(Vec::as_slice)
    }

    pub fn count(&self, class_id: usize) -> Option<usize> {
        self.counts.get(&class_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.centroids.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Centroid,
    Hyperplane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NoSamples,
    TooFewSamples { positives: usize, negatives: usize },
    /// Online blending needs an existing parameter to blend into.
    NotInCurrent,
    /// The fitted plane leaves every fitting sample on one side: the class
    /// is not linearly separable there, and distances to such a plane are
    /// unbounded by the data (typically ‖w‖ → 0 with |b| ≈ 1).
    DegenerateFit,
}

/// A class whose parameter was not (re)computed, and why.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Skip {
    pub class_id: usize,
    pub kind: SetKind,
    pub reason: SkipReason,
}

impl fmt::Display for Skip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "class {} {:?}: {:?}", self.class_id, self.kind, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub skipped: Vec<Skip>,
    /// Number of SVM fits performed.
    pub svm_fits: usize,
}

/// Which set parameters an update should maintain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetTargets {
    pub centroids: bool,
    pub hyperplanes: bool,
}

impl SetTargets {
    pub const ALL: SetTargets = SetTargets {
        centroids: true,
        hyperplanes: true,
    };

    pub fn any(&self) -> bool {
        self.centroids || self.hyperplanes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateMode {
    OnlineOnly,
    OfflineOnly,
    Both,
}

impl UpdateMode {
    pub const ALL: [UpdateMode; 3] = [UpdateMode::OnlineOnly, UpdateMode::OfflineOnly, UpdateMode::Both];

    pub fn uses_online(self) -> bool {
        matches!(self, UpdateMode::OnlineOnly | UpdateMode::Both)
    }

    pub fn uses_offline(self) -> bool {
        matches!(self, UpdateMode::OfflineOnly | UpdateMode::Both)
    }
}

impl fmt::Display for UpdateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateMode::OnlineOnly => "online_only",
            UpdateMode::OfflineOnly => "offline_only",
            UpdateMode::Both => "both",
        })
    }
}

impl FromStr for UpdateMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "online_only" => Ok(UpdateMode::OnlineOnly),
            "offline_only" => Ok(UpdateMode::OfflineOnly),
            "both" => Ok(UpdateMode::Both),
            other => Err(format!(
                "unknown update mode {other:?} (expected online_only, offline_only or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSchedule {
    pub offline_period_iters: usize,
    pub online_alpha: f64,
    pub per_class_offline_samples: usize,
    pub min_pos_online: usize,
    pub mode: UpdateMode,
}

impl Default for UpdateSchedule {
    fn default() -> Self {
        Self {
            offline_period_iters: 500,
            online_alpha: 0.01,
            per_class_offline_samples: 50,
            min_pos_online: 2,
            mode: UpdateMode::Both,
        }
    }
}

impl UpdateSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.offline_period_iters < 1 {
            return Err(SetParamsError::InvalidArgument("offline period must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.online_alpha) {
            return Err(SetParamsError::InvalidArgument(format!(
                "online alpha must lie in [0, 1], got {}",
                self.online_alpha
            )));
        }
        if self.per_class_offline_samples < 1 {
            return Err(SetParamsError::InvalidArgument(
                "per-class offline sample count must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the set-based losses read.
#[derive(Debug, Clone, PartialEq)]
pub struct SetParams {
    pub centroids: CentroidSet,
    pub hyperplanes: HyperplaneSet,
    pub last_offline_iteration: usize,
}

/// Per-class means of `embeddings` for the requested classes. Classes with
/// no rows are left out and reported.
pub fn compute_centroids(
    embeddings: &Matrix,
    labels: &[usize],
    class_ids: &[usize],
    class_count: usize,
) -> Result<(CentroidSet, Vec<Skip>)> {
    if embeddings.rows() != labels.len() {
        return Err(SetParamsError::InvalidArgument(format!(
            "{} embeddings but {} labels",
            embeddings.rows(),
            labels.len()
        )));
    }
    let dim = embeddings.cols();
    // running means: exact when all members coincide
    let mut means = vec![vec![0.0; dim]; class_count];
    let mut counts = vec![0usize; class_count];
    for (row, &l) in embeddings.row_iter().zip(labels) {
        if l >= class_count {
            return Err(SetParamsError::InvalidArgument(format!(
                "label {l} outside [0, {class_count})"
            )));
        }
        counts[l] += 1;
        let k = counts[l] as f64;
        for (m, v) in means[l].iter_mut().zip(row) {
            *m += (v - *m) / k;
        }
    }
    let mut set = CentroidSet::new(dim, class_count);
    let mut skipped = Vec::new();
    for &class_id in class_ids {
        if class_id >= class_count {
            return Err(SetParamsError::InvalidArgument(format!(
                "class {class_id} outside [0, {class_count})"
            )));
        }
        let n = counts[class_id];
        if n == 0 {
            skipped.push(Skip {
                class_id,
                kind: SetKind::Centroid,
                reason: SkipReason::NoSamples,
            });
            continue;
        }
        set.insert(class_id, means[class_id].clone(), n)?;
    }
    Ok((set, skipped))
}

/// Stream for the offline sampler at a given iteration.
fn offline_stream(iteration: usize) -> u64 {
    (0x0FF1 << 32) | iteration as u64
}

/// Recomputes all set parameters from a frozen model.
///
/// Up to `per_class_offline_samples` rows per class are drawn without
/// replacement, seeded by `(seed, iteration)`, then embedded. The result
/// does not depend on any earlier set parameters.
pub fn offline_update(
    model: &ModelParams,
    dataset: &LabeledDataset,
    schedule: &UpdateSchedule,
    svm: &SvmConfig,
    targets: SetTargets,
    seed: u64,
    iteration: usize,
) -> Result<(SetParams, UpdateReport)> {
    schedule.validate()?;
    if dataset.class_count() < 2 {
        return Err(SetParamsError::InvalidArgument("need at least 2 classes".into()));
    }
    let mut rng = seeded_rng(seed, offline_stream(iteration));
    let mut chosen = Vec::new();
    for members in dataset.class_members() {
        let k = schedule.per_class_offline_samples.min(members.len());
        let mut picks = rand::seq::index::sample(&mut rng, members.len(), k).into_vec();
        picks.sort_unstable();
        chosen.extend(picks.into_iter().map(|p| members[p]));
    }
    let labels: Vec<usize> = chosen.iter().map(|&i| dataset.labels()[i]).collect();
    let embeddings = model.embed(&dataset.features().select_rows(&chosen))?;
    let m = dataset.class_count();
    let dim = model.embedding_dim();

    let mut report = UpdateReport::default();
    let centroids = if targets.centroids {
        let all: Vec<usize> = (0..m).collect();
        let (set, skipped) = compute_centroids(&embeddings, &labels, &all, m)?;
        report.skipped.extend(skipped);
        set
    } else {
        CentroidSet::new(dim, m)
    };
    let hyperplanes = if targets.hyperplanes {
        let (fitted, omitted) = fit_one_vs_all(&embeddings, &labels, m, svm, 1)?;
        report.svm_fits = fitted.len();
        let mut set = HyperplaneSet::new(dim, m);
        for plane in fitted.iter() {
            if splits(plane, &embeddings) {
                set.insert(plane.clone())?;
            } else {
                report.skipped.push(Skip {
                    class_id: plane.class_id,
                    kind: SetKind::Hyperplane,
                    reason: SkipReason::DegenerateFit,
                });
            }
        }
        report.skipped.extend(omitted.into_iter().map(|o| Skip {
            class_id: o.class_id,
            kind: SetKind::Hyperplane,
            reason: SkipReason::TooFewSamples {
                positives: o.positives,
                negatives: o.negatives,
            },
        }));
        set
    } else {
        HyperplaneSet::new(dim, m)
    };
    Ok((
        SetParams {
            centroids,
            hyperplanes,
            last_offline_iteration: iteration,
        },
        report,
    ))
}

/// Whether samples fall strictly on both sides of `plane`.
fn splits(plane: &Hyperplane, x: &Matrix) -> bool {
    let (mut above, mut below) = (false, false);
    for row in x.row_iter() {
        let d = plane.decision(row);
        above |= d > 0.0;
        below |= d < 0.0;
    }
    above && below
}

/// Blends batch-local estimates into `current` with weight `online_alpha`.
///
/// A class's hyperplane is refitted on the batch (one-vs-rest) only when the
/// batch holds at least `min_pos_online` positives and as many negatives;
/// a centroid needs one sample. Classes absent from the batch are untouched.
pub fn online_update(
    current: &SetParams,
    embeddings: &Matrix,
    labels: &[usize],
    schedule: &UpdateSchedule,
    svm: &SvmConfig,
    targets: SetTargets,
) -> Result<(SetParams, UpdateReport)> {
    schedule.validate()?;
    let alpha = schedule.online_alpha;
    let mut next = current.clone();
    let mut report = UpdateReport::default();
    if alpha == 0.0 {
        return Ok((next, report));
    }
    if embeddings.rows() != labels.len() {
        return Err(SetParamsError::InvalidArgument(format!(
            "{} embeddings but {} labels",
            embeddings.rows(),
            labels.len()
        )));
    }
    let m = current.centroids.class_count().max(current.hyperplanes.class_count());
    let mut counts = vec![0usize; m];
    for &l in labels {
        if l >= m {
            return Err(SetParamsError::InvalidArgument(format!("label {l} outside [0, {m})")));
        }
        counts[l] += 1;
    }
    let n = labels.len();

    if targets.hyperplanes {
        let min = schedule.min_pos_online.max(1);
        for class_id in 0..m {
            let positives = counts[class_id];
            if positives == 0 {
                continue;
            }
            let negatives = n - positives;
            if positives < min || negatives < min {
                report.skipped.push(Skip {
                    class_id,
                    kind: SetKind::Hyperplane,
                    reason: SkipReason::TooFewSamples { positives, negatives },
                });
                continue;
            }
            let Some(old) = next.hyperplanes.get_mut(class_id) else {
                report.skipped.push(Skip {
                    class_id,
                    kind: SetKind::Hyperplane,
                    reason: SkipReason::NotInCurrent,
                });
                continue;
            };
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class_id { 1.0 } else { -1.0 })
                .collect();
            let fresh = fit_linear_svm(embeddings, &y, svm)?;
            report.svm_fits += 1;
            if !splits(&fresh, embeddings) {
                report.skipped.push(Skip {
                    class_id,
                    kind: SetKind::Hyperplane,
                    reason: SkipReason::DegenerateFit,
                });
                continue;
            }
            for (w, w_new) in old.w.iter_mut().zip(&fresh.w) {
                *w = (1.0 - alpha) * *w + alpha * w_new;
            }
            old.b = (1.0 - alpha) * old.b + alpha * fresh.b;
            old.fit_info = fresh.fit_info;
            old.dual.clear();
        }
    }

    if targets.centroids {
        let all: Vec<usize> = (0..m).filter(|&c| counts[c] > 0).collect();
        let (batch_means, _) = compute_centroids(embeddings, labels, &all, m)?;
        for (class_id, mean) in batch_means.iter() {
            let Some(old) = current.centroids.get(class_id) else {
                report.skipped.push(Skip {
                    class_id,
                    kind: SetKind::Centroid,
                    reason: SkipReason::NotInCurrent,
                });
                continue;
            };
            let blended = old
                .iter()
                .zip(mean)
                .map(|(o, b)| (1.0 - alpha) * o + alpha * b)
                .collect();
            let count = current.centroids.count(class_id).unwrap_or(0);
            next.centroids.insert(class_id, blended, count)?;
        }
    }
    Ok((next, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::{FitInfo, Hyperplane};

    fn plane(class_id: usize, w: Vec<f64>, b: f64) -> Hyperplane {
        Hyperplane {
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
        }
    }

    #[test]
    fn two_point_centroid() {
        let e = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0], [7.0, 1.0]]);
        let (set, skipped) = compute_centroids(&e, &[0, 0, 1], &[0, 1, 2], 3).unwrap();
        assert_eq!(set.get(0), Some(&[1.0, 1.0][..]));
        assert_eq!(set.get(1), Some(&[7.0, 1.0][..]));
        assert_eq!(set.count(0), Some(2));
        assert_eq!(
            skipped,
            vec![Skip {
                class_id: 2,
                kind: SetKind::Centroid,
                reason: SkipReason::NoSamples
            }]
        );
    }

    fn sample_params() -> SetParams {
        let mut hyperplanes = HyperplaneSet::new(2, 2);
        hyperplanes.insert(plane(0, vec![1.0, 0.0], 0.0)).unwrap();
        hyperplanes.insert(plane(1, vec![-1.0, 0.0], 0.5)).unwrap();
        let mut centroids = CentroidSet::new(2, 2);
        centroids.insert(0, vec![-2.0, 0.0], 5).unwrap();
        centroids.insert(1, vec![2.0, 0.0], 5).unwrap();
        SetParams {
            centroids,
            hyperplanes,
            last_offline_iteration: 0,
        }
    }

    #[test]
    fn zero_alpha_is_identity() {
        let current = sample_params();
        let schedule = UpdateSchedule {
            online_alpha: 0.0,
            ..Default::default()
        };
        let e = Matrix::from_rows(&[[3.0, 1.0], [4.0, 1.0], [-3.0, 0.0], [-4.0, 2.0]]);
        let (next, report) =
            online_update(&current, &e, &[0, 0, 1, 1], &schedule, &SvmConfig::default(), SetTargets::ALL).unwrap();
        assert_eq!(next, current);
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn hyperplane_blend_is_convex() {
        // batch whose one-vs-rest fit for class 0 points along +y
        let mut current = sample_params();
        current.hyperplanes.get_mut(0).unwrap().w = vec![1.0, 0.0];
        let e = Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0], [0.0, -1.0], [0.0, -1.0]]);
        let labels = [0, 0, 1, 1];
        let schedule = UpdateSchedule::default();
        let cfg = SvmConfig { c: 10.0, ..Default::default() };
        let fresh = fit_linear_svm(&e, &[1.0, 1.0, -1.0, -1.0], &cfg).unwrap();
        assert!((fresh.w[0]).abs() < 1e-12 && (fresh.w[1] - 1.0).abs() < 1e-12);
        let (next, _) = online_update(&current, &e, &labels, &schedule, &cfg, SetTargets::ALL).unwrap();
        let w = &next.hyperplanes.get(0).unwrap().w;
        assert!((w[0] - 0.99).abs() < 1e-12);
        assert!((w[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn absent_classes_are_untouched() {
        let current = sample_params();
        let e = Matrix::from_rows(&[[3.0, 1.0], [4.0, 1.0], [5.0, 1.0]]);
        let (next, report) =
            online_update(&current, &e, &[0, 0, 0], &UpdateSchedule::default(), &SvmConfig::default(), SetTargets::ALL)
                .unwrap();
        assert_eq!(next.hyperplanes.get(1), current.hyperplanes.get(1));
        assert_eq!(next.centroids.get(1), current.centroids.get(1));
        // class 0 has no negatives in the batch: its plane is left alone too
        assert_eq!(next.hyperplanes.get(0), current.hyperplanes.get(0));
        assert_eq!(report.skipped.len(), 1);
        // its centroid moves toward the batch mean
        let c0 = next.centroids.get(0).unwrap();
        assert!((c0[0] - (0.99 * -2.0 + 0.01 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn class_missing_from_current_is_skipped() {
        let mut current = sample_params();
        current.centroids = CentroidSet::new(2, 2);
        current.centroids.insert(0, vec![0.0, 0.0], 1).unwrap();
        let e = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]]);
        let targets = SetTargets {
            centroids: true,
            hyperplanes: false,
        };
        let (next, report) =
            online_update(&current, &e, &[0, 1], &UpdateSchedule::default(), &SvmConfig::default(), targets).unwrap();
        assert!(next.centroids.get(1).is_none());
        assert_eq!(report.skipped[0].reason, SkipReason::NotInCurrent);
    }

    #[test]
    fn mode_round_trips_through_text() {
        for mode in UpdateMode::ALL {
            assert_eq!(mode.to_string().parse::<UpdateMode>().unwrap(), mode);
        }
        assert!("sometimes".parse::<UpdateMode>().is_err());
    }
}
