//! Labeled datasets: synthetic generators, CSV ingestion and
//! verification-pair sampling.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{distance, Matrix};
use crate::seeded_rng;

/// Attempts per class mean before blob generation gives up.
const MAX_MEAN_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Feature rows with a dense class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    seed: u64,
}

impl LabeledDataset {
    /// Validates and wraps features and labels.
    ///
    /// Every class in `[0, class_count)` must occur at least once, rows must
    /// be non-empty and every value finite.
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize, seed: u64) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(DataError::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if features.cols() == 0 {
            return Err(DataError::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if !features.is_finite() {
            return Err(DataError::InvalidArgument("non-finite feature value".into()));
        }
        let mut seen = vec![false; class_count];
        for &l in &labels {
            if l >= class_count {
                return Err(DataError::InvalidArgument(format!(
                    "label {l} outside [0, {class_count})"
                )));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(DataError::InvalidArgument(format!("class {missing} has no samples")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
            seed,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sample indices grouped by class, each group in ascending order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Splits off classes `[0, first)` from the rest; the second part is
    /// re-indexed to start at class 0. Used to hold out unseen identities.
    pub fn split_classes(&self, first: usize) -> Result<(LabeledDataset, LabeledDataset)> {
        if first == 0 || first >= self.class_count {
            return Err(DataError::InvalidArgument(format!(
                "split point {first} must lie in [1, {})",
                self.class_count
            )));
        }
        let (a, b): (Vec<usize>, Vec<usize>) =
            (0..self.len()).partition(|&i| self.labels[i] < first);
        let left = LabeledDataset::new(
            self.features.select_rows(&a),
            a.iter().map(|&i| self.labels[i]).collect(),
            first,
            self.seed,
        )?;
        let right = LabeledDataset::new(
            self.features.select_rows(&b),
            b.iter().map(|&i| self.labels[i] - first).collect(),
            self.class_count - first,
            self.seed,
        )?;
        Ok((left, right))
    }
}

fn check_counts(class_count: usize, per_class: usize) -> Result<()> {
    if class_count < 2 {
        return Err(DataError::InvalidArgument(format!(
            "class_count must be >= 2, got {class_count}"
        )));
    }
    if per_class < 1 {
        return Err(DataError::InvalidArgument("per_class must be >= 1".into()));
    }
    Ok(())
}

/// Isotropic Gaussian blobs; see [`gen_blobs_with_centers`].
pub fn gen_blobs(
    class_count: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    gen_blobs_with_centers(class_count, per_class, dim, spread, separation, seed).map(|(d, _)| d)
}

/// Isotropic Gaussian blobs with standard deviation `spread` around class
/// means that are pairwise at least `separation` apart. Also returns the
/// generated means, one row per class.
///
/// Means are rejection-sampled uniformly from a cube whose half-width grows
/// with `class_count^(1/dim)`, so the packing stays feasible.
pub fn gen_blobs_with_centers(
    class_count: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    seed: u64,
) -> Result<(LabeledDataset, Matrix)> {
    check_counts(class_count, per_class)?;
    if dim < 1 {
        return Err(DataError::InvalidArgument("dim must be >= 1".into()));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(DataError::InvalidArgument(format!("spread must be >= 0, got {spread}")));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(DataError::InvalidArgument(format!(
            "separation must be > 0, got {separation}"
        )));
    }

    let mut rng = seeded_rng(seed, 0);
    let half_width = separation * (class_count as f64).powf(1.0 / dim as f64).max(1.0);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(class_count);
    for class in 0..class_count {
        let mut placed = false;
        for _ in 0..MAX_MEAN_ATTEMPTS {
            let candidate: Vec<f64> = (0..dim)
                .map(|_| rng.gen_range(-half_width..=half_width))
                .collect();
            if means.iter().all(|m| distance(m, &candidate) >= separation) {
                means.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(DataError::Infeasible(format!(
                "could not place mean for class {class} at separation {separation} \
                 after {MAX_MEAN_ATTEMPTS} attempts"
            )));
        }
    }

    let mut data = Vec::with_capacity(class_count * per_class * dim);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(mu + spread * z);
            }
            labels.push(class);
        }
    }
    let features = Matrix::from_vec(labels.len(), dim, data);
    let dataset = LabeledDataset::new(features, labels, class_count, seed)?;
    Ok((dataset, Matrix::from_rows(&means)))
}

/// Concentric 2D rings, class `k` at radius `k + 1` with radial jitter of
/// at most ±0.3 and uniformly random angle. Radii of different classes never
/// overlap; the classes are not linearly separable.
pub fn gen_rings(class_count: usize, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    check_counts(class_count, per_class)?;
    let mut rng = seeded_rng(seed, 1);
    let mut data = Vec::with_capacity(class_count * per_class * 2);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for class in 0..class_count {
        for _ in 0..per_class {
            let radius = (class + 1) as f64 + rng.gen_range(-0.3..=0.3);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            data.push(radius * angle.cos());
            data.push(radius * angle.sin());
            labels.push(class);
        }
    }
    let features = Matrix::from_vec(labels.len(), 2, data);
    LabeledDataset::new(features, labels, class_count, seed)
}

/// Raw CSV rows before label re-indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRows {
    pub labels: Vec<i64>,
    pub features: Matrix,
}

/// Parses `label,f1,...,fd` rows. Labels may be written as decimals and are
/// truncated toward zero. Blank lines are ignored.
pub fn parse_raw_csv(text: &str) -> Result<RawRows> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_text = fields.next().unwrap_or("").trim();
        let label: f64 = label_text.parse().map_err(|_| DataError::Parse {
            line: line_no,
            message: format!("label {label_text:?} is not numeric"),
        })?;
        if !label.is_finite() {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("label {label_text:?} is not finite"),
            });
        }
        let start = data.len();
        for field in fields {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("feature {field:?} is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line: line_no,
                    message: format!("feature {field:?} is not finite"),
                });
            }
            data.push(v);
        }
        let d = data.len() - start;
        if d == 0 {
            return Err(DataError::Parse {
                line: line_no,
                message: "row has no features".into(),
            });
        }
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(DataError::Parse {
                    line: line_no,
                    message: format!("expected {expected} features, found {d}"),
                })
            }
            _ => {}
        }
        labels.push(label.trunc() as i64);
    }
    let Some(dim) = dim else {
        return Err(DataError::Parse {
            line: 1,
            message: "file contains no samples".into(),
        });
    };
    Ok(RawRows {
        features: Matrix::from_vec(labels.len(), dim, data),
        labels,
    })
}

/// Parses a dataset and re-indexes labels densely by first appearance.
pub fn parse_dataset_csv(text: &str) -> Result<LabeledDataset> {
    let raw = parse_raw_csv(text)?;
    let mut index: HashMap<i64, usize> = HashMap::new();
    let labels: Vec<usize> = raw
        .labels
        .iter()
        .map(|&l| {
            let next = index.len();
            *index.entry(l).or_insert(next)
        })
        .collect();
    let class_count = index.len();
    LabeledDataset::new(raw.features, labels, class_count, 0)
}

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_dataset_csv(&fs::read_to_string(path)?)
}

/// Writes `label,f1,...,fd` rows using shortest round-trip float formatting.
pub fn write_dataset_csv(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for (row, &label) in dataset.features.row_iter().zip(&dataset.labels) {
        write!(out, "{label}")?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// One verification trial between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same_identity: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList {
    pairs: Vec<Pair>,
}

impl PairList {
    /// Checks indices and identity flags against `dataset`.
    pub fn new(pairs: Vec<Pair>, dataset: &LabeledDataset) -> Result<Self> {
        let n = dataset.len();
        for (k, p) in pairs.iter().enumerate() {
            if p.a >= n || p.b >= n {
                return Err(DataError::InvalidArgument(format!(
                    "pair {k} indexes past {n} samples"
                )));
            }
            if (dataset.labels[p.a] == dataset.labels[p.b]) != p.same_identity {
                return Err(DataError::InvalidArgument(format!(
                    "pair {k} has a same_identity flag that contradicts the labels"
                )));
            }
        }
        if !pairs.iter().any(|p| p.same_identity) || pairs.iter().all(|p| p.same_identity) {
            return Err(DataError::InvalidArgument(
                "pair list needs at least one positive and one negative pair".into(),
            ));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn same_identity(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.same_identity).collect()
    }
}

/// Samples `count` pairs, `ceil(count/2)` positive and `floor(count/2)`
/// negative, never pairing a sample with itself.
pub fn make_verification_pairs(dataset: &LabeledDataset, count: usize, seed: u64) -> Result<PairList> {
    if dataset.class_count() < 2 {
        return Err(DataError::InvalidArgument("need at least 2 classes".into()));
    }
    if count < 2 {
        return Err(DataError::InvalidArgument(format!(
            "need at least 2 pairs to hold a positive and a negative, got {count}"
        )));
    }
    let members = dataset.class_members();
    let eligible: Vec<usize> = (0..members.len()).filter(|&c| members[c].len() >= 2).collect();
    if eligible.is_empty() {
        return Err(DataError::Infeasible(
            "every class is a singleton; no positive pair can be formed".into(),
        ));
    }

    let mut rng = seeded_rng(seed, 2);
    let positives = count.div_ceil(2);
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..positives {
        let class = eligible[rng.gen_range(0..eligible.len())];
        let picks = rand::seq::index::sample(&mut rng, members[class].len(), 2);
        pairs.push(Pair {
            a: members[class][picks.index(0)],
            b: members[class][picks.index(1)],
            same_identity: true,
        });
    }
    for _ in positives..count {
        let classes = rand::seq::index::sample(&mut rng, members.len(), 2);
        let (ca, cb) = (classes.index(0), classes.index(1));
        pairs.push(Pair {
            a: members[ca][rng.gen_range(0..members[ca].len())],
            b: members[cb][rng.gen_range(0..members[cb].len())],
            same_identity: false,
        });
    }
    pairs.shuffle(&mut rng);
    PairList::new(pairs, dataset)
}

/// Parses `index_a,index_b,same_identity` rows (`same_identity` is 0 or 1).
pub fn parse_pairs_csv(text: &str, dataset: &LabeledDataset) -> Result<PairList> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |message: String| DataError::Parse {
            line: idx + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let a = fields[0].parse().map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
        let b = fields[1].parse().map_err(|_| bad(format!("bad index {:?}", fields[1])))?;
        let same_identity = match fields[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(bad(format!("bad same_identity flag {other:?}"))),
        };
        pairs.push(Pair { a, b, same_identity });
    }
    PairList::new(pairs, dataset)
}

pub fn write_pairs_csv(pairs: &PairList, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for p in pairs.pairs() {
        writeln!(out, "{},{},{}", p.a, p.b, u8::from(p.same_identity))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_blobs_sit_on_distinct_means() {
        let (d, means) = gen_blobs_with_centers(3, 1, 2, 0.0, 4.0, 7).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels(), &[0, 1, 2]);
        for c in 0..3 {
            assert_eq!(d.features().row(c), means.row(c));
            for o in 0..c {
                assert!(distance(means.row(c), means.row(o)) >= 4.0);
            }
        }
    }

    #[test]
    fn zero_spread_has_no_within_class_variance() {
        let d = gen_blobs(4, 10, 3, 0.0, 2.0, 11).unwrap();
        for members in d.class_members() {
            let first = d.features().row(members[0]);
            assert!(members.iter().all(|&i| d.features().row(i) == first));
        }
    }

    #[test]
    fn blob_generation_is_deterministic() {
        let a = gen_blobs(2, 100, 2, 0.5, 6.0, 1).unwrap();
        let b = gen_blobs(2, 100, 2, 0.5, 6.0, 1).unwrap();
        assert_eq!(a, b);
        let c = gen_blobs(2, 100, 2, 0.5, 6.0, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blob_arguments_are_validated() {
        assert!(matches!(gen_blobs(1, 5, 2, 1.0, 1.0, 0), Err(DataError::InvalidArgument(_))));
        assert!(matches!(gen_blobs(2, 0, 2, 1.0, 1.0, 0), Err(DataError::InvalidArgument(_))));
        assert!(matches!(gen_blobs(2, 5, 0, 1.0, 1.0, 0), Err(DataError::InvalidArgument(_))));
        assert!(matches!(gen_blobs(2, 5, 2, -1.0, 1.0, 0), Err(DataError::InvalidArgument(_))));
        assert!(matches!(gen_blobs(2, 5, 2, 1.0, 0.0, 0), Err(DataError::InvalidArgument(_))));
    }

    #[test]
    fn rings_are_radially_ordered() {
        let d = gen_rings(2, 4, 3).unwrap();
        let radius = |i: usize| crate::linalg::norm(d.features().row(i));
        let max0 = (0..d.len()).filter(|&i| d.labels()[i] == 0).map(radius).fold(0.0, f64::max);
        let min1 = (0..d.len())
            .filter(|&i| d.labels()[i] == 1)
            .map(radius)
            .fold(f64::INFINITY, f64::min);
        assert!(max0 < min1);

        let three = gen_rings(3, 1, 0).unwrap();
        assert_eq!(three.labels(), &[0, 1, 2]);
    }

    #[test]
    fn csv_basic_and_reindexing() {
        let d = parse_dataset_csv("0,1.0,2.0\n1,3.0,4.0\n").unwrap();
        assert_eq!((d.len(), d.dim(), d.class_count()), (2, 2, 2));

        let d = parse_dataset_csv("5,1\n9,2\n5,3\n").unwrap();
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.class_count(), 2);

        let d = parse_dataset_csv("2.0,1\n-1.7,2\n").unwrap();
        assert_eq!(d.class_count(), 2);
    }

    #[test]
    fn csv_errors_name_the_line() {
        match parse_dataset_csv("0,1.0\n1,2.0,3.0\n") {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_dataset_csv("0,1.0\n1,abc\n") {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_dataset_csv(""), Err(DataError::Parse { line: 1, .. })));
        assert!(matches!(parse_dataset_csv("x,1\n"), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = gen_blobs(3, 5, 4, 1.3, 2.0, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&d, &path).unwrap();
        let back = load_dataset_csv(&path).unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn pairs_are_balanced() {
        let features = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let d = LabeledDataset::new(features, vec![0, 0, 1, 1], 2, 0).unwrap();
        let pairs = make_verification_pairs(&d, 4, 5).unwrap();
        let pos = pairs.pairs().iter().filter(|p| p.same_identity).count();
        assert_eq!((pos, pairs.len() - pos), (2, 2));
        assert!(pairs.pairs().iter().all(|p| p.a != p.b));

        let odd = make_verification_pairs(&d, 5, 5).unwrap();
        let pos = odd.pairs().iter().filter(|p| p.same_identity).count();
        assert_eq!((pos, odd.len() - pos), (3, 2));
    }

    #[test]
    fn singleton_classes_cannot_form_positive_pairs() {
        let features = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let d = LabeledDataset::new(features, vec![0, 1, 2], 3, 0).unwrap();
        assert!(matches!(make_verification_pairs(&d, 2, 0), Err(DataError::Infeasible(_))));
    }

    #[test]
    fn split_classes_reindexes_the_tail() {
        let d = gen_blobs(5, 3, 2, 0.1, 1.0, 4).unwrap();
        let (a, b) = d.split_classes(3).unwrap();
        assert_eq!((a.class_count(), b.class_count()), (3, 2));
        assert_eq!(a.len() + b.len(), d.len());
        assert!(b.labels().iter().all(|&l| l < 2));
    }
}
