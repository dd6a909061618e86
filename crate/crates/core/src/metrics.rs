//! Confidence-quality metrics and curves.
//!
//! Scores may be any [`Scalar`]; metric values are reported as `f64`.

use serde::{Deserialize, Serialize};

use crate::calibrators::ConfidenceLog;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed exactly from the rank sum of the positives.
pub fn auroc<T: Scalar>(pos: &[T], neg: &[T]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Undefined("AUROC undefined: one side is empty"));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|v| (v.as_f64(), true))
        .chain(neg.iter().map(|v| (v.as_f64(), false)))
        .collect();
    if all.iter().any(|(v, _)| v.is_nan()) {
        return Err(Error::Undefined("AUROC undefined: NaN score"));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum keeps tied (half-integer) ranks exact
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean (i + j + 2) / 2
        let twice_mean = (i + j + 2) as u128;
        let n_pos = all[i..=j].iter().filter(|(_, p)| *p).count() as u128;
        twice_rank_sum += twice_mean * n_pos;
        i = j + 1;
    }
    let np = pos.len() as u128;
    let nn = neg.len() as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// `100 * (mean(pos) - mean(neg))`, in percentage points.
pub fn delta_conf<T: Scalar>(pos: &[T], neg: &[T]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Undefined("confidence difference undefined: one side is empty"));
    }
    let mean = |v: &[T]| v.iter().map(|x| x.as_f64()).sum::<f64>() / v.len() as f64;
    Ok(100.0 * (mean(pos) - mean(neg)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub threshold: f64,
    pub coverage: f64,
    pub risk: f64,
}

/// Sweeps the acceptance threshold over 0, every distinct confidence and 1
/// (ascending). A row is accepted when `confidence >= threshold`; thresholds
/// accepting nothing are omitted.
pub fn risk_coverage<T: Scalar>(log: &ConfidenceLog<T>) -> Vec<RiskCoveragePoint> {
    let n = log.len();
    if n == 0 {
        return Vec::new();
    }
    let mut rows: Vec<(f64, bool)> = log
        .confidence
        .iter()
        .zip(&log.correct)
        .map(|(c, &ok)| (c.as_f64(), ok))
        .collect();
    // descending, so the accepted set at threshold t is a prefix
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut thresholds: Vec<f64> = rows.iter().map(|r| r.0).collect();
    thresholds.push(0.0);
    thresholds.push(1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len());
    let mut accepted = 0usize;
    let mut errors = 0usize;
    // walk thresholds from high to low, growing the accepted prefix
    for &t in thresholds.iter().rev() {
        while accepted < n && rows[accepted].0 >= t {
            if !rows[accepted].1 {
                errors += 1;
            }
            accepted += 1;
        }
        if accepted > 0 {
            points.push(RiskCoveragePoint {
                threshold: t,
                coverage: accepted as f64 / n as f64,
                risk: errors as f64 / accepted as f64,
            });
        }
    }
    points.reverse();
    points
}

/// `1 - auroc(correct confidences, wrong confidences)`; lower is better.
pub fn auroc_risk<T: Scalar>(log: &ConfidenceLog<T>) -> Result<f64> {
    let (pos, neg) = log.split_by_correctness();
    Ok(1.0 - auroc(&pos, &neg)?)
}

/// Largest coverage whose accepted-set accuracy reaches `target_accuracy`,
/// or `None` when no threshold qualifies.
pub fn coverage_at_risk<T: Scalar>(log: &ConfidenceLog<T>, target_accuracy: f64) -> Option<f64> {
    risk_coverage(log)
        .into_iter()
        .filter(|p| 1.0 - p.risk >= target_accuracy - 1e-12)
        .map(|p| p.coverage)
        .fold(None, |best: Option<f64>, c| Some(best.map_or(c, |b| b.max(c))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub threshold: f64,
    pub f1_id: f64,
    pub f1_adversarial: f64,
    pub macro_f1: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Flags every score below `threshold` as adversarial and returns the
/// per-class and macro-averaged F1 of that detector.
pub fn detection_scores<T: Scalar>(id: &[T], adv: &[T], threshold: f64) -> DetectionScores {
    let id_flagged = id.iter().filter(|s| s.as_f64() < threshold).count();
    let adv_flagged = adv.iter().filter(|s| s.as_f64() < threshold).count();
    let f1_adversarial = f1(adv_flagged, id_flagged, adv.len() - adv_flagged);
    let f1_id = f1(id.len() - id_flagged, adv.len() - adv_flagged, id_flagged);
    DetectionScores {
        threshold,
        f1_id,
        f1_adversarial,
        macro_f1: (f1_id + f1_adversarial) / 2.0,
    }
}

pub fn detection_f1<T: Scalar>(id: &[T], adv: &[T], threshold: f64) -> f64 {
    detection_scores(id, adv, threshold).macro_f1
}

/// Thresholds `0.00, 0.01, ..., 1.00`.
pub fn threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadePoint {
    pub threshold: f64,
    pub accuracy: f64,
    pub routed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeCurve {
    pub points: Vec<CascadePoint>,
    /// Normalized trapezoid area of accuracy over the `0.01` grid on [0,1].
    pub area: f64,
}

/// Routes a sample to the large model when the small model's confidence is
/// below the threshold.
pub fn cascade_accuracy<T: Scalar>(
    small_pred: &[usize],
    small_conf: &[T],
    large_pred: &[usize],
    labels: &[usize],
    threshold: f64,
) -> Result<CascadePoint> {
    let n = labels.len();
    if small_pred.len() != n || small_conf.len() != n || large_pred.len() != n {
        return Err(Error::Misaligned(format!(
            "cascade inputs have lengths {}, {}, {}, {}",
            small_pred.len(),
            small_conf.len(),
            large_pred.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::Undefined("cascade accuracy undefined on no samples"));
    }
    let mut hits = 0usize;
    let mut routed = 0usize;
    for i in 0..n {
        let pred = if small_conf[i].as_f64() < threshold {
            routed += 1;
            large_pred[i]
        } else {
            small_pred[i]
        };
        hits += usize::from(pred == labels[i]);
    }
    Ok(CascadePoint {
        threshold,
        accuracy: hits as f64 / n as f64,
        routed_fraction: routed as f64 / n as f64,
    })
}

/// Accuracy of the cascade at each of `thresholds`, plus the area over the
/// fixed `0.01` grid.
pub fn cascade_curve<T: Scalar>(
    small_pred: &[usize],
    small_conf: &[T],
    large_pred: &[usize],
    labels: &[usize],
    thresholds: &[f64],
) -> Result<CascadeCurve> {
    let points = thresholds
        .iter()
        .map(|&t| cascade_accuracy(small_pred, small_conf, large_pred, labels, t))
        .collect::<Result<Vec<_>>>()?;
    let grid = threshold_grid();
    let acc = grid
        .iter()
        .map(|&t| cascade_accuracy(small_pred, small_conf, large_pred, labels, t).map(|p| p.accuracy))
        .collect::<Result<Vec<_>>>()?;
    let steps = (acc.len() - 1) as f64;
    let area = acc.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>() / steps;
    Ok(CascadeCurve { points, area })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                s += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    fn log(rows: &[(f64, bool)]) -> ConfidenceLog<f64> {
        let mut l = ConfidenceLog::default();
        for &(c, ok) in rows {
            l.push(c, ok, 0, "id");
        }
        l
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.3], &[0.5]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert!(matches!(
            auroc::<f64>(&[], &[0.1]),
            Err(Error::Undefined(m)) if m.starts_with("AUROC undefined")
        ));
    }

    #[test]
    fn delta_conf_examples() {
        assert!((delta_conf(&[0.9, 0.7], &[0.5, 0.3]).unwrap() - 40.0).abs() < 1e-12);
        assert_eq!(delta_conf(&[0.4, 0.6], &[0.6, 0.4]).unwrap(), 0.0);
        assert_eq!(delta_conf(&[1.0, 1.0], &[0.0]).unwrap(), 100.0);
        assert!(delta_conf::<f64>(&[0.1], &[]).is_err());
    }

    #[test]
    fn hand_log_curves() {
        let l = log(&[(0.9, true), (0.6, false), (0.4, true)]);
        let rc = risk_coverage(&l);
        assert_eq!(rc[0].threshold, 0.0);
        assert_eq!(rc[0].coverage, 1.0);
        assert!((rc[0].risk - 1.0 / 3.0).abs() < 1e-15);
        let at = rc.iter().find(|p| p.threshold == 0.6).unwrap();
        assert!((at.coverage - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(at.risk, 0.5);
        // threshold 1.0 accepts nothing and is omitted
        assert_eq!(rc.last().unwrap().threshold, 0.9);
        assert_eq!(auroc_risk(&l).unwrap(), 0.5);
        assert!((coverage_at_risk(&l, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(coverage_at_risk(&l, 0.5), Some(1.0));
    }

    #[test]
    fn auroc_risk_extremes() {
        assert_eq!(auroc_risk(&log(&[(0.9, true), (0.1, false)])).unwrap(), 0.0);
        assert_eq!(auroc_risk(&log(&[(0.1, true), (0.9, false)])).unwrap(), 1.0);
        assert!(auroc_risk(&log(&[(0.1, true)])).is_err());
    }

    #[test]
    fn coverage_none_when_unreachable() {
        let l = log(&[(0.9, false), (0.5, true)]);
        assert_eq!(coverage_at_risk(&l, 1.0), None);
        let l = log(&[(0.9, true), (0.5, false)]);
        assert_eq!(coverage_at_risk(&l, 1.0), Some(0.5));
        let l = log(&[(0.9, false), (0.9, true)]);
        assert_eq!(coverage_at_risk(&l, 0.9), None);
    }

    /// Enumerates the confusion matrix directly from the definition.
    fn brute_macro_f1(id: &[f64], adv: &[f64], t: f64) -> f64 {
        // class 0 = id, class 1 = adversarial
        let mut m = [[0usize; 2]; 2];
        for &s in id {
            m[0][usize::from(s < t)] += 1;
        }
        for &s in adv {
            m[1][usize::from(s < t)] += 1;
        }
        let mut total = 0.0;
        for c in 0..2 {
            let tp = m[c][c] as f64;
            let fp = m[1 - c][c] as f64;
            let fn_ = m[c][1 - c] as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            total += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        total / 2.0
    }

    #[test]
    fn detection_examples() {
        assert_eq!(detection_f1(&[0.9, 0.9], &[0.1, 0.1], 0.5), 1.0);
        let s = detection_scores(&[0.9, 0.8], &[0.1], 0.0);
        assert_eq!(s.f1_adversarial, 0.0);
        let id = [0.9, 0.4];
        let adv = [0.3, 0.6];
        let expected = brute_macro_f1(&id, &adv, 0.5);
        assert_eq!(expected, 0.5);
        assert_eq!(detection_f1(&id, &adv, 0.5), expected);
    }

    #[test]
    fn cascade_endpoints() {
        let labels = [0, 1, 1, 0];
        let small = [0, 0, 1, 1];
        let conf = [0.9, 0.2, 0.7, 0.4];
        let large = [0, 1, 1, 0];
        let c = cascade_curve(&small, &conf, &large, &labels, &[0.0, 1.5]).unwrap();
        assert_eq!(c.points[0].accuracy, 0.5);
        assert_eq!(c.points[0].routed_fraction, 0.0);
        assert_eq!(c.points[1].accuracy, 1.0);
        let flat = cascade_curve(&small, &conf, &small, &labels, &threshold_grid()).unwrap();
        assert!(flat.points.iter().all(|p| p.accuracy == 0.5));
        assert!((flat.area - 0.5).abs() < 1e-12);
        assert!(cascade_curve(&small, &conf, &large[..3], &labels, &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_count(
            pos in prop::collection::vec(0u8..20, 1..60),
            neg in prop::collection::vec(0u8..20, 1..60),
        ) {
            let pos: Vec<f64> = pos.into_iter().map(|v| f64::from(v) / 20.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| f64::from(v) / 20.0).collect();
            let fast = auroc(&pos, &neg).unwrap();
            prop_assert!((fast - brute_auroc(&pos, &neg)).abs() < 1e-12);
            let swapped = auroc(&neg, &pos).unwrap();
            prop_assert!((fast + swapped - 1.0).abs() < 1e-12);
            let warped: Vec<f64> = pos.iter().map(|v| (3.0 * v).exp()).collect();
            let warped_neg: Vec<f64> = neg.iter().map(|v| (3.0 * v).exp()).collect();
            prop_assert!((auroc(&warped, &warped_neg).unwrap() - fast).abs() < 1e-12);
        }

        #[test]
        fn delta_conf_is_antisymmetric(
            a in prop::collection::vec(0.0f64..1.0, 1..30),
            b in prop::collection::vec(0.0f64..1.0, 1..30),
        ) {
            let d = delta_conf(&a, &b).unwrap() + delta_conf(&b, &a).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn coverage_non_increasing(rows in prop::collection::vec((0u8..10, any::<bool>()), 1..80)) {
            let l = log(&rows.iter().map(|&(c, ok)| (f64::from(c) / 10.0, ok)).collect::<Vec<_>>());
            let rc = risk_coverage(&l);
            for w in rc.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].coverage >= w[1].coverage);
            }
        }

        #[test]
        fn detection_matches_enumeration(
            id in prop::collection::vec(0.0f64..1.0, 1..20),
            adv in prop::collection::vec(0.0f64..1.0, 1..20),
            t in 0.0f64..1.0,
        ) {
            prop_assert!((detection_f1(&id, &adv, t) - brute_macro_f1(&id, &adv, t)).abs() < 1e-12);
        }
    }
}
