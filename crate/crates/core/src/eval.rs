//! Verification protocol: cosine similarity between (mean) embeddings,
//! then accuracy, AUC and EER over labeled pairs.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::data::PairList;
use crate::linalg::{dot, norm, Matrix};

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvalError::InvalidArgument(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na <= MIN_NORM || nb <= MIN_NORM {
        return Err(EvalError::Degenerate("cosine similarity of a near-zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Elementwise mean of equal-length vectors.
pub fn mean_embedding<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| EvalError::InvalidArgument("mean of no vectors".into()))?;
    let dim = first.as_ref().len();
    let mut sum = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(EvalError::InvalidArgument(format!(
                "vector of length {} among length {dim}",
                v.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Cosine similarity of each pair of embedding rows.
pub fn score_pairs(embeddings: &Matrix, pairs: &PairList) -> Result<Vec<f64>> {
    pairs
        .pairs()
        .iter()
        .map(|p| {
            if p.a >= embeddings.rows() || p.b >= embeddings.rows() {
                return Err(EvalError::InvalidArgument(format!(
                    "pair ({}, {}) out of range for {} embeddings",
                    p.a,
                    p.b,
                    embeddings.rows()
                )));
            }
            cosine_similarity(embeddings.row(p.a), embeddings.row(p.b))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    /// Pairs scoring above this are declared the same identity.
    pub threshold: f64,
    pub pair_count: usize,
}

impl VerificationReport {
    /// Flat `key=value` block, one entry per line.
    pub fn to_key_values(&self) -> String {
        format!(
            "accuracy={:?}\nauc={:?}\neer={:?}\none_minus_eer={:?}\nthreshold={:?}\npair_count={}\n",
            self.accuracy,
            self.auc,
            self.eer,
            1.0 - self.eer,
            self.threshold,
            self.pair_count
        )
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_key_values())
    }
}

fn total(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

/// Accuracy, AUC and EER of thresholded similarity scores.
///
/// * AUC counts positive-over-negative orderings, ties as ½.
/// * Accuracy uses the best threshold among the midpoints of adjacent
///   distinct scores plus one below and one above all scores; the lowest
///   such threshold wins ties.
/// * EER is where the linearly interpolated ROC crosses FAR = FRR.
pub fn verification_metrics(scores: &[f64], same_identity: &[bool]) -> Result<VerificationReport> {
    if scores.len() != same_identity.len() {
        return Err(EvalError::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            same_identity.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::InvalidArgument("non-finite score".into()));
    }
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&s, &same) in scores.iter().zip(same_identity) {
        if same {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::InvalidArgument(
            "need at least one positive and one negative pair".into(),
        ));
    }
    pos.sort_by(total);
    neg.sort_by(total);
    let (np, nn) = (pos.len(), neg.len());

    // AUC in half-units: 2·[neg < pos] + [neg == pos]
    let mut half_wins: u64 = 0;
    for &p in &pos {
        let below = neg.partition_point(|&v| v < p);
        let not_above = neg.partition_point(|&v| v <= p);
        half_wins += 2 * below as u64 + (not_above - below) as u64;
    }
    let auc = half_wins as f64 / (2 * np * nn) as f64;

    // distinct scores ascending, with the positives and negatives at each
    let mut merged: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    merged.sort_by(|a, b| total(&a.0, &b.0));
    let mut levels: Vec<(f64, usize, usize)> = Vec::new();
    for (s, is_pos) in merged {
        match levels.last_mut() {
            Some(last) if last.0 == s => {
                if is_pos {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => levels.push((s, usize::from(is_pos), usize::from(!is_pos))),
        }
    }

    // Threshold t accepts scores > t. Start below everything: all accepted.
    let total_pairs = (np + nn) as f64;
    let mut accepted_neg = nn;
    let mut rejected_pos = 0usize;
    let mut best_correct = np;
    let mut best_threshold = levels[0].0 - 1.0;
    for k in 0..levels.len() {
        rejected_pos += levels[k].1;
        accepted_neg -= levels[k].2;
        let correct = (np - rejected_pos) + (nn - accepted_neg);
        let threshold = match levels.get(k + 1) {
            Some(next) => 0.5 * (levels[k].0 + next.0),
            None => levels[k].0 + 1.0,
        };
        if correct > best_correct {
            best_correct = correct;
            best_threshold = threshold;
        }
    }
    let accuracy = best_correct as f64 / total_pairs;

    // ROC points for "accept score ≥ level": (FAR, FRR), from (1, 0) to (0, 1).
    let mut points = Vec::with_capacity(levels.len() + 1);
    let mut neg_at_or_above = nn;
    let mut pos_below = 0usize;
    for &(_, p, n) in &levels {
        points.push((neg_at_or_above as f64 / nn as f64, pos_below as f64 / np as f64));
        neg_at_or_above -= n;
        pos_below += p;
    }
    points.push((0.0, 1.0));
    let mut eer = 0.0;
    for w in points.windows(2) {
        let (far0, frr0) = w[0];
        let (far1, frr1) = w[1];
        let d0 = far0 - frr0;
        let d1 = far1 - frr1;
        if d0 == 0.0 {
            eer = far0;
            break;
        }
        if d1 <= 0.0 {
            let t = d0 / (d0 - d1);
            eer = far0 + t * (far1 - far0);
            break;
        }
    }

    Ok(VerificationReport {
        accuracy,
        auc,
        eer,
        threshold: best_threshold,
        pair_count: scores.len(),
    })
}

/// Writes `score,same_identity` rows with a header line.
pub fn write_pair_scores_csv(path: impl AsRef<Path>, scores: &[f64], same_identity: &[bool]) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "score,same_identity")?;
    for (s, &same) in scores.iter().zip(same_identity) {
        writeln!(out, "{s},{}", u8::from(same))?;
    }
    out.flush()
}
