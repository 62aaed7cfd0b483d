mod common;

use proptest::prelude::*;
use setembed::data::{gen_blobs, make_verification_pairs};
use setembed::eval::{cosine_similarity, score_pairs, verification_metrics, write_pair_scores_csv};

fn labeled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=50).prop_flat_map(|n| {
        (
            // coarse grid so ties are common
            prop::collection::vec((-10i32..=10).prop_map(|k| k as f64 / 10.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(s, mut l)| {
                l[0] = true;
                l[1] = false;
                (s, l)
            })
    })
}

/// FAR and FRR when accepting scores ≥ t.
fn rates(scores: &[f64], same: &[bool], t: f64) -> (f64, f64) {
    let np = same.iter().filter(|&&p| p).count() as f64;
    let nn = same.len() as f64 - np;
    let fa = scores.iter().zip(same).filter(|(&s, &p)| !p && s >= t).count() as f64;
    let fr = scores.iter().zip(same).filter(|(&s, &p)| p && s < t).count() as f64;
    (fa / nn, fr / np)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn auc_and_accuracy_match_exhaustive_counting((scores, same) in labeled_scores()) {
        let r = verification_metrics(&scores, &same).unwrap();
        prop_assert_eq!(r.auc, common::auc_brute_force(&scores, &same));
        prop_assert_eq!(r.accuracy, common::accuracy_brute_force(&scores, &same));
        let correct = scores.iter().zip(&same).filter(|(&s, &p)| (s > r.threshold) == p).count();
        prop_assert_eq!(correct as f64 / scores.len() as f64, r.accuracy);
    }

    #[test]
    fn eer_is_bounded_by_the_best_operating_point((scores, same) in labeled_scores()) {
        let r = verification_metrics(&scores, &same).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.eer));
        let mut thresholds = scores.clone();
        thresholds.push(f64::INFINITY);
        let best = thresholds
            .iter()
            .map(|&t| { let (a, b) = rates(&scores, &same, t); a.max(b) })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(r.eer <= best + 1e-12, "eer {} above best max(FAR, FRR) {best}", r.eer);
    }

    #[test]
    fn metrics_ignore_monotone_rescaling((scores, same) in labeled_scores()) {
        let a = verification_metrics(&scores, &same).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        let b = verification_metrics(&shifted, &same).unwrap();
        prop_assert_eq!(a.auc, b.auc);
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!((a.eer - b.eer).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant_and_bounded(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3), k in 0.1f64..10.0) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        let scaled: Vec<f64> = a.iter().map(|v| v * k).collect();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - c).abs() < 1e-12);
    }
}

#[test]
fn separated_and_reversed_extremes() {
    let same = [true, true, true, false, false];
    let r = verification_metrics(&[0.9, 0.8, 0.7, 0.1, -0.2], &same).unwrap();
    assert_eq!((r.accuracy, r.auc, r.eer), (1.0, 1.0, 0.0));
    let r = verification_metrics(&[-0.9, -0.8, -0.7, 0.1, 0.2], &same).unwrap();
    assert_eq!(r.auc, 0.0);
    assert_eq!(r.eer, 1.0);
}

#[test]
fn scores_of_generated_pairs_and_csv() {
    let ds = gen_blobs(4, 10, 3, 0.2, 5.0, 9).unwrap();
    let pairs = make_verification_pairs(&ds, 30, 1).unwrap();
    let scores = score_pairs(ds.features(), &pairs).unwrap();
    assert_eq!(scores.len(), 30);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    write_pair_scores_csv(&path, &scores, &pairs.same_identity()).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert_eq!(text.lines().next().unwrap(), "score,same_identity");
}
