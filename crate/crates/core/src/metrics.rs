//! Evaluation metrics: EER, axis collapses of four-way scores, confusion
//! matrices and accuracies.
//!
//! Four-way rows are ordered `(B, B->P, S, S->P)`. The source axis groups
//! `{B, B->P}` against `{S, S->P}`; the processed axis groups `{B, S}`
//! against `{B->P, S->P}`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{argmax, ClassOrder, ScoreTable};
use crate::corpus::{FourWayLabel, UtteranceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("probability row sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("score set needs at least one target and one non-target")]
    DegenerateClasses,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("truth has {0} labels but predictions have {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no label for scored utterance {0:?}")]
    MissingLabel(String),
    #[error("row for {0:?} has the wrong number of classes")]
    BadRow(String),
}

const NORM_TOL: f64 = 1e-6;

fn check_row(row: &[f64]) -> Result<(), MetricsError> {
    let s: f64 = row.iter().sum();
    if row.len() != 4 || (s - 1.0).abs() > NORM_TOL {
        return Err(MetricsError::NotNormalized(s));
    }
    Ok(())
}

/// Spoof-source probability mass `p(S) + p(S->P)`.
pub fn collapse_source_score(row: &[f64]) -> Result<f64, MetricsError> {
    check_row(row)?;
    Ok(row[2] + row[3])
}

/// Processed probability mass `p(B->P) + p(S->P)`.
pub fn collapse_processed_score(row: &[f64]) -> Result<f64, MetricsError> {
    check_row(row)?;
    Ok(row[1] + row[3])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryScoreSet {
    pub entries: Vec<(f64, bool)>,
    pub target_semantics: String,
}

impl BinaryScoreSet {
    pub fn new(entries: Vec<(f64, bool)>, target_semantics: impl Into<String>) -> Self {
        Self { entries, target_semantics: target_semantics.into() }
    }
}

/// One step of the ROC staircase: accept as target when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Operating points at every distinct score (ascending), followed by a final
/// point at `+inf` that rejects everything. Tied scores form one point.
pub fn operating_points(set: &BinaryScoreSet) -> Result<Vec<OperatingPoint>, MetricsError> {
    if set.entries.iter().any(|(s, _)| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore);
    }
    let n_target = set.entries.iter().filter(|e| e.1).count();
    let n_nontarget = set.entries.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(MetricsError::DegenerateClasses);
    }
    let mut sorted = set.entries.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (n_target as f64, n_nontarget as f64);
    let mut points = Vec::new();
    // counts strictly below the current threshold
    let (mut targets_below, mut nontargets_below) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        points.push(OperatingPoint {
            threshold: t,
            fpr: (n_nontarget - nontargets_below) as f64 / nn,
            fnr: targets_below as f64 / nt,
        });
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                targets_below += 1;
            } else {
                nontargets_below += 1;
            }
            i += 1;
        }
    }
    points.push(OperatingPoint { threshold: f64::INFINITY, fpr: 0.0, fnr: 1.0 });
    Ok(points)
}

/// Equal error rate and its threshold.
///
/// The crossing of FPR and FNR is located on the staircase and linearly
/// interpolated between the two bracketing operating points. The threshold
/// is interpolated the same way, except past the last score where it stays
/// at that score.
pub fn eer(set: &BinaryScoreSet) -> Result<(f64, f64), MetricsError> {
    let points = operating_points(set)?;
    let k = points.iter().position(|p| p.fpr - p.fnr <= 0.0).expect("last point has fpr < fnr");
    let hi = points[k];
    let d_hi = hi.fpr - hi.fnr;
    if d_hi == 0.0 || k == 0 {
        return Ok((hi.fpr, hi.threshold));
    }
    let lo = points[k - 1];
    let d_lo = lo.fpr - lo.fnr;
    let alpha = d_lo / (d_lo - d_hi);
    let rate = lo.fpr + alpha * (hi.fpr - lo.fpr);
    let threshold = if hi.threshold.is_finite() { lo.threshold + alpha * (hi.threshold - lo.threshold) } else { lo.threshold };
    Ok((rate, threshold))
}

/// Counts indexed `[true][predicted]` in `(B, B->P, S, S->P)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix4 {
    pub counts: [[u64; 4]; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Source,
    Processed,
    FourWay,
}

impl ConfusionMatrix4 {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: FourWayLabel) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    /// Accuracy on items of one true class (exact four-way match).
    pub fn class_accuracy(&self, class: FourWayLabel) -> Option<f64> {
        let n = self.row_total(class);
        (n > 0).then(|| self.counts[class.index()][class.index()] as f64 / n as f64)
    }
}

pub fn confusion_matrix(truth: &[FourWayLabel], pred: &[FourWayLabel]) -> Result<ConfusionMatrix4, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix4::default();
    for (t, p) in truth.iter().zip(pred) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

fn same_group(axis: Axis, a: FourWayLabel, b: FourWayLabel) -> bool {
    match axis {
        Axis::FourWay => a == b,
        Axis::Source => a.source() == b.source(),
        Axis::Processed => a.is_processed() == b.is_processed(),
    }
}

pub fn matrix_axis_accuracy(cm: &ConfusionMatrix4, axis: Axis) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut correct = 0;
    for t in FourWayLabel::ALL {
        for p in FourWayLabel::ALL {
            if same_group(axis, t, p) {
                correct += cm.counts[t.index()][p.index()];
            }
        }
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub acc_bona: Option<f64>,
    pub eer_src: Option<f64>,
    pub eer_proc: Option<f64>,
    pub threshold_src: Option<f64>,
    /// Rows are true four-way classes; columns are the model's classes.
    pub confusion: Vec<Vec<u64>>,
    pub n_per_class: [u64; 4],
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_data_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_set_tag: Option<String>,
}

/// Score-table metrics against manifest labels.
///
/// Four-way tables predict by argmax; binary tables predict spoof when
/// `p(spoof) >= binary_threshold`. Sub-metrics that cannot be computed (no
/// bona fide items, a single class on an axis) are `None`.
pub fn evaluate(scores: &ScoreTable, records: &[UtteranceRecord], binary_threshold: f64) -> Result<MetricsReport, MetricsError> {
    let labels: HashMap<&str, FourWayLabel> = records.iter().map(|r| (r.utt_id.as_str(), r.four_way())).collect();
    let n_classes = scores.class_order.n_classes();
    let mut confusion = vec![vec![0u64; n_classes]; 4];
    let mut n_per_class = [0u64; 4];
    let mut src = Vec::with_capacity(scores.rows.len());
    let mut proc_ = Vec::with_capacity(scores.rows.len());
    let mut correct = 0u64;

    for (id, row) in &scores.rows {
        let truth = *labels.get(id.as_str()).ok_or_else(|| MetricsError::MissingLabel(id.clone()))?;
        if row.len() != n_classes {
            return Err(MetricsError::BadRow(id.clone()));
        }
        n_per_class[truth.index()] += 1;
        let is_spoof = truth.source() == crate::corpus::SourceLabel::Spoofed;
        match scores.class_order {
            ClassOrder::FourWay => {
                let pred = argmax(row);
                confusion[truth.index()][pred] += 1;
                if pred == truth.index() {
                    correct += 1;
                }
                src.push((collapse_source_score(row)?, is_spoof));
                proc_.push((collapse_processed_score(row)?, truth.is_processed()));
            }
            ClassOrder::Binary => {
                let p_spoof = row[1];
                let pred = usize::from(p_spoof >= binary_threshold);
                confusion[truth.index()][pred] += 1;
                if pred == truth.source().index() {
                    correct += 1;
                }
                src.push((p_spoof, is_spoof));
            }
        }
    }

    let total: u64 = n_per_class.iter().sum();
    let acc = (total > 0).then(|| correct as f64 / total as f64);
    let bona = n_per_class[0];
    let acc_bona = (bona > 0).then(|| confusion[0][0] as f64 / bona as f64);
    let (eer_src, threshold_src) = match eer(&BinaryScoreSet::new(src, "spoof-source")) {
        Ok((e, t)) => (Some(e), Some(t)),
        Err(_) => (None, None),
    };
    let eer_proc = match scores.class_order {
        ClassOrder::FourWay => eer(&BinaryScoreSet::new(proc_, "processed")).ok().map(|(e, _)| e),
        ClassOrder::Binary => None,
    };
    Ok(MetricsReport {
        acc,
        acc_bona,
        eer_src,
        eer_proc,
        threshold_src,
        confusion,
        n_per_class,
        n_classes,
        model_id: None,
        training_data_tag: None,
        eval_set_tag: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ProcessingLabel, SourceLabel, Split};
    use proptest::prelude::*;

    #[test]
    fn collapses() {
        assert_eq!(collapse_source_score(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(collapse_source_score(&[0.0, 0.0, 0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(collapse_source_score(&[0.25; 4]).unwrap(), 0.5);
        assert_eq!(collapse_processed_score(&[0.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(collapse_processed_score(&[0.5, 0.0, 0.5, 0.0]).unwrap(), 0.0);
        assert!((collapse_processed_score(&[0.1, 0.2, 0.3, 0.4]).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(collapse_source_score(&[0.5, 0.5, 0.5, 0.0]), Err(MetricsError::NotNormalized(_))));
    }

    fn set(nontarget: &[f64], target: &[f64]) -> BinaryScoreSet {
        BinaryScoreSet::new(
            nontarget.iter().map(|&s| (s, false)).chain(target.iter().map(|&s| (s, true))).collect(),
            "spoof-source",
        )
    }

    #[test]
    fn eer_examples() {
        let (e, t) = eer(&set(&[0.1, 0.2, 0.3, 0.4], &[0.35, 0.6, 0.7, 0.8])).unwrap();
        assert_eq!(e, 0.25);
        assert_eq!(t, 0.4);
        assert_eq!(eer(&set(&[0.1, 0.2], &[0.8, 0.9])).unwrap().0, 0.0);
        assert_eq!(eer(&set(&[0.5, 0.5, 0.5], &[0.5, 0.5])).unwrap().0, 0.5);
        assert_eq!(eer(&set(&[0.1], &[])), Err(MetricsError::DegenerateClasses));
        assert_eq!(eer(&set(&[], &[0.1])), Err(MetricsError::DegenerateClasses));
        assert_eq!(eer(&set(&[f64::NAN], &[0.1])), Err(MetricsError::NonFiniteScore));
    }

    #[test]
    fn eer_interpolates_between_steps() {
        // fully inverted scores: every threshold trades one error for another
        let (e, _) = eer(&set(&[0.9], &[0.1])).unwrap();
        assert_eq!(e, 1.0);
        let (e, _) = eer(&set(&[0.2, 0.6], &[0.4])).unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn confusion_examples() {
        let all = FourWayLabel::ALL;
        let cm = confusion_matrix(&all, &all).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(cm.counts[i][j], u64::from(i == j));
            }
        }
        assert_eq!(confusion_matrix(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(confusion_matrix(&all[..2], &all[..1]), Err(MetricsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn confusion_hand_tally() {
        use FourWayLabel::*;
        let truth = [BonaFide, BonaFide, BonaFide, ProcessedBonaFide, ProcessedBonaFide, ProcessedBonaFide, Spoofed, Spoofed, Spoofed, ProcessedSpoofed, ProcessedSpoofed, ProcessedSpoofed];
        let pred = [BonaFide, Spoofed, BonaFide, ProcessedSpoofed, ProcessedBonaFide, ProcessedSpoofed, Spoofed, Spoofed, BonaFide, ProcessedBonaFide, ProcessedSpoofed, ProcessedSpoofed];
        let cm = confusion_matrix(&truth, &pred).unwrap();
        let expected = [[2, 0, 1, 0], [0, 1, 0, 2], [1, 0, 2, 0], [0, 1, 0, 2]];
        assert_eq!(cm.counts, expected);
        assert_eq!(matrix_axis_accuracy(&cm, Axis::FourWay).unwrap(), 7.0 / 12.0);
        assert_eq!(matrix_axis_accuracy(&cm, Axis::Source).unwrap(), 7.0 / 12.0);
        assert_eq!(matrix_axis_accuracy(&cm, Axis::Processed).unwrap(), 12.0 / 12.0);
        assert_eq!(matrix_axis_accuracy(&ConfusionMatrix4::default(), Axis::Source), Err(MetricsError::EmptyMatrix));
    }

    fn records(n_each: usize) -> Vec<UtteranceRecord> {
        let mut out = Vec::new();
        for label in FourWayLabel::ALL {
            for i in 0..n_each {
                let source = label.source();
                out.push(UtteranceRecord {
                    utt_id: format!("{}_{i}", label.as_str()),
                    audio_path: None,
                    source,
                    processing: if label.is_processed() { ProcessingLabel::VqcModal } else { ProcessingLabel::None },
                    system: if source == SourceLabel::BonaFide { "human".into() } else { "tts".into() },
                    pair_id: String::new(),
                    split: Split::Test,
                    domain: "d".into(),
                });
            }
        }
        out
    }

    #[test]
    fn evaluate_perfect_and_chance() {
        let recs = records(2);
        let perfect = ScoreTable {
            class_order: ClassOrder::FourWay,
            rows: recs
                .iter()
                .map(|r| {
                    let mut row = vec![0.0; 4];
                    row[r.four_way().index()] = 1.0;
                    (r.utt_id.clone(), row)
                })
                .collect(),
        };
        let m = evaluate(&perfect, &recs, 0.5).unwrap();
        assert_eq!(m.acc, Some(1.0));
        assert_eq!(m.acc_bona, Some(1.0));
        assert_eq!(m.eer_src, Some(0.0));
        assert_eq!(m.eer_proc, Some(0.0));
        assert_eq!(m.n_per_class, [2, 2, 2, 2]);

        let uniform = ScoreTable { class_order: ClassOrder::FourWay, rows: recs.iter().map(|r| (r.utt_id.clone(), vec![0.25; 4])).collect() };
        let m = evaluate(&uniform, &recs, 0.5).unwrap();
        assert_eq!(m.acc, Some(0.25));
        assert_eq!(m.eer_src, Some(0.5));
        assert_eq!(m.eer_proc, Some(0.5));
    }

    #[test]
    fn evaluate_binary_and_missing() {
        let recs = records(1);
        let table = ScoreTable {
            class_order: ClassOrder::Binary,
            rows: vec![
                ("bonafide_0".into(), vec![0.9, 0.1]),
                ("processed_bonafide_0".into(), vec![0.3, 0.7]),
                ("spoof_0".into(), vec![0.2, 0.8]),
                ("processed_spoof_0".into(), vec![0.4, 0.6]),
            ],
        };
        let m = evaluate(&table, &recs, 0.5).unwrap();
        assert_eq!(m.acc, Some(0.75));
        assert_eq!(m.acc_bona, Some(1.0));
        assert_eq!(m.eer_proc, None);
        assert_eq!(m.confusion, vec![vec![1, 0], vec![0, 1], vec![0, 1], vec![0, 1]]);
        // threshold 0.65 flips the processed spoof item to bona fide
        assert_eq!(evaluate(&table, &recs, 0.65).unwrap().acc, Some(0.5));

        let orphan = ScoreTable { class_order: ClassOrder::Binary, rows: vec![("ghost".into(), vec![0.5, 0.5])] };
        assert_eq!(evaluate(&orphan, &recs, 0.5), Err(MetricsError::MissingLabel("ghost".into())));
    }

    #[test]
    fn evaluate_degenerate_sub_metrics_are_null() {
        let recs = records(1);
        let only_bona = ScoreTable { class_order: ClassOrder::FourWay, rows: vec![("bonafide_0".into(), vec![0.7, 0.1, 0.1, 0.1])] };
        let m = evaluate(&only_bona, &recs, 0.5).unwrap();
        assert_eq!(m.acc, Some(1.0));
        assert_eq!(m.eer_src, None);
        assert_eq!(m.eer_proc, None);
    }

    proptest! {
        #[test]
        fn eer_invariant_under_monotone_transform(
            nontarget in proptest::collection::vec(-5.0f64..5.0, 1..40),
            target in proptest::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let base = eer(&set(&nontarget, &target)).unwrap().0;
            let f = |x: &f64| (x * 0.7).exp() * 3.0 + 1.0;
            let nt: Vec<f64> = nontarget.iter().map(f).collect();
            let t: Vec<f64> = target.iter().map(f).collect();
            let transformed = eer(&set(&nt, &t)).unwrap().0;
            prop_assert!((base - transformed).abs() < 1e-12);
        }

        #[test]
        fn eer_swap_and_negate(
            nontarget in proptest::collection::vec(-5.0f64..5.0, 1..40),
            target in proptest::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let base = eer(&set(&nontarget, &target)).unwrap().0;
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            let swapped = eer(&set(&neg(&target), &neg(&nontarget))).unwrap().0;
            prop_assert!((base - swapped).abs() < 1e-12, "{} vs {}", base, swapped);
        }

        #[test]
        fn coarse_axes_dominate_four_way(counts in proptest::array::uniform16(0u64..50)) {
            let mut cm = ConfusionMatrix4::default();
            for (k, c) in counts.iter().enumerate() {
                cm.counts[k / 4][k % 4] = *c;
            }
            prop_assume!(cm.total() > 0);
            let four = matrix_axis_accuracy(&cm, Axis::FourWay).unwrap();
            prop_assert!(matrix_axis_accuracy(&cm, Axis::Source).unwrap() >= four);
            prop_assert!(matrix_axis_accuracy(&cm, Axis::Processed).unwrap() >= four);
        }
    }
}
