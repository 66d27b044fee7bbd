//! Embedding drift under a benign transformation.
//!
//! For each source type the mean shift vector is the average of
//! `emb(processed) - emb(original)` over matched pairs; directional
//! consistency is the cosine between the bona fide and spoofed mean shifts.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{ProcessingLabel, SourceLabel, UtteranceRecord};
use crate::embeddings::EmbeddingSet;

#[derive(Debug, Error, PartialEq)]
pub enum DriftError {
    #[error("no pairs given")]
    EmptyInput,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("shift vector has zero norm")]
    ZeroVector,
    #[error("no resolvable {origin} pairs for condition {condition}")]
    NoPairsForCondition { condition: ProcessingLabel, origin: SourceLabel },
    #[error("need at least 3 points for a projection, got {0}")]
    TooFewPoints(usize),
    #[error("need at least 2 dimensions for a projection")]
    TooFewDims,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftStats {
    pub condition: ProcessingLabel,
    pub source: SourceLabel,
    pub n: usize,
    #[serde(skip)]
    pub mean_shift: Vec<f64>,
    pub mean_magnitude: f64,
    pub magnitude_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub condition: ProcessingLabel,
    pub cosine: f64,
    pub n_bonafide: usize,
    pub n_spoofed: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Mean shift over `(original, processed)` pairs. The returned stats carry
/// `ProcessingLabel::None`/`BonaFide` placeholders; callers that know the
/// condition overwrite them.
pub fn mean_shift_vector(pairs: &[(&[f64], &[f64])]) -> Result<ShiftStats, DriftError> {
    let (first, _) = pairs.first().ok_or(DriftError::EmptyInput)?;
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    let mut mags = Vec::with_capacity(pairs.len());
    for (orig, proc_) in pairs {
        if orig.len() != dim {
            return Err(DriftError::DimMismatch(dim, orig.len()));
        }
        if proc_.len() != dim {
            return Err(DriftError::DimMismatch(dim, proc_.len()));
        }
        let mut sq = 0.0;
        for ((s, o), p) in sum.iter_mut().zip(orig.iter()).zip(proc_.iter()) {
            let d = p - o;
            *s += d;
            sq += d * d;
        }
        mags.push(sq.sqrt());
    }
    let n = pairs.len() as f64;
    let mean_magnitude = mags.iter().sum::<f64>() / n;
    let magnitude_sd = if pairs.len() > 1 {
        (mags.iter().map(|m| (m - mean_magnitude).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ShiftStats {
        condition: ProcessingLabel::None,
        source: SourceLabel::BonaFide,
        n: pairs.len(),
        mean_shift: sum.into_iter().map(|s| s / n).collect(),
        mean_magnitude,
        magnitude_sd,
    })
}

/// Cosine between the bona fide and spoofed mean shift vectors.
pub fn directional_consistency(delta_bona: &[f64], delta_spoof: &[f64]) -> Result<f64, DriftError> {
    if delta_bona.len() != delta_spoof.len() {
        return Err(DriftError::DimMismatch(delta_bona.len(), delta_spoof.len()));
    }
    let (nb, ns) = (norm(delta_bona), norm(delta_spoof));
    if nb == 0.0 || ns == 0.0 {
        return Err(DriftError::ZeroVector);
    }
    Ok((dot(delta_bona, delta_spoof) / (nb * ns)).clamp(-1.0, 1.0))
}

/// Resolve `(original, processed)` embedding pairs for one condition and
/// source. Pairs with a missing embedding on either side are skipped.
pub fn resolve_pairs<'a>(
    emb: &'a EmbeddingSet,
    records: &'a [UtteranceRecord],
    condition: ProcessingLabel,
    source: SourceLabel,
) -> Vec<(&'a [f64], &'a [f64])> {
    records
        .iter()
        .filter(|r| r.processing == condition && r.source == source && condition.is_processed())
        .filter_map(|r| Some((emb.get(&r.pair_id)?, emb.get(&r.utt_id)?)))
        .collect()
}

pub fn shift_stats_for(
    emb: &EmbeddingSet,
    records: &[UtteranceRecord],
    condition: ProcessingLabel,
    source: SourceLabel,
) -> Result<ShiftStats, DriftError> {
    let pairs = resolve_pairs(emb, records, condition, source);
    if pairs.is_empty() {
        return Err(DriftError::NoPairsForCondition { condition, origin: source });
    }
    let mut stats = mean_shift_vector(&pairs)?;
    stats.condition = condition;
    stats.source = source;
    Ok(stats)
}

pub fn consistency_by_condition(
    emb: &EmbeddingSet,
    records: &[UtteranceRecord],
    condition: ProcessingLabel,
) -> Result<ConsistencyReport, DriftError> {
    let bona = shift_stats_for(emb, records, condition, SourceLabel::BonaFide)?;
    let spoof = shift_stats_for(emb, records, condition, SourceLabel::Spoofed)?;
    Ok(ConsistencyReport {
        condition,
        cosine: directional_consistency(&bona.mean_shift, &spoof.mean_shift)?,
        n_bonafide: bona.n,
        n_spoofed: spoof.n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Vec<(String, f64, f64)>,
    /// Variance along each principal direction (sample variance, n - 1).
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
    /// Set when the data has fewer than two nonzero principal variances; the
    /// affected coordinates are zero.
    pub rank_deficient: bool,
}

impl Projection {
    pub fn as_map(&self) -> HashMap<&str, (f64, f64)> {
        self.coords.iter().map(|(id, x, y)| (id.as_str(), (*x, *y))).collect()
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Project mean-centred vectors onto the top two principal directions.
///
/// Directions come from power iteration on the covariance, applied
/// implicitly as `X^T (X v)`. The first start vector is the normalized
/// all-ones vector; the second is the same vector deflated against the first
/// direction (falling back to unit basis vectors in order if that vanishes).
/// Each direction is signed so its largest-magnitude component is positive.
pub fn pca_project_2d(emb: &EmbeddingSet) -> Result<Projection, DriftError> {
    let n = emb.len();
    if n < 3 {
        return Err(DriftError::TooFewPoints(n));
    }
    let dim = emb.dim();
    if dim < 2 {
        return Err(DriftError::TooFewDims);
    }
    let mut mean = vec![0.0; dim];
    for (_, v) in emb.iter() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = emb.iter().map(|(_, v)| v.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let total_variance = centred.iter().map(|r| dot(r, r)).sum::<f64>() / (n as f64 - 1.0);

    let cov_apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for row in &centred {
            let s = dot(row, v);
            for (o, x) in out.iter_mut().zip(row) {
                *o += s * x;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64 - 1.0);
        out
    };

    let floor = 1e-12 * total_variance.max(f64::MIN_POSITIVE);
    let first = power_direction(&cov_apply, &[], dim);
    let second = first.as_ref().and_then(|(u, _)| power_direction(&cov_apply, std::slice::from_ref(u), dim));
    let mut directions = Vec::new();
    let mut explained = [0.0; 2];
    for (k, d) in [first, second].into_iter().enumerate() {
        match d {
            Some((u, lambda)) if lambda > floor => {
                explained[k] = lambda;
                directions.push(u);
            }
            _ => break,
        }
    }
    let rank_deficient = directions.len() < 2;
    let coords = emb
        .ids()
        .iter()
        .zip(&centred)
        .map(|(id, row)| {
            let x = directions.first().map_or(0.0, |u| dot(row, u));
            let y = directions.get(1).map_or(0.0, |u| dot(row, u));
            (id.clone(), x, y)
        })
        .collect();
    Ok(Projection { coords, explained_variance: explained, total_variance, rank_deficient })
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let p = dot(v, u);
        for (x, y) in v.iter_mut().zip(u) {
            *x -= p * y;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n <= 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

fn sign_fix(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn power_direction(cov_apply: &dyn Fn(&[f64]) -> Vec<f64>, deflate: &[Vec<f64>], dim: usize) -> Option<(Vec<f64>, f64)> {
    let starts = std::iter::once(vec![1.0; dim]).chain((0..dim).map(|i| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        e
    }));
    let mut v = None;
    for mut s in starts {
        orthogonalize(&mut s, deflate);
        if normalize(&mut s) {
            v = Some(s);
            break;
        }
    }
    let mut v = v?;
    for _ in 0..POWER_MAX_ITER {
        let mut w = cov_apply(&v);
        orthogonalize(&mut w, deflate);
        if !normalize(&mut w) {
            return Some((v, 0.0));
        }
        // compare up to sign so an oscillating negative mode still terminates
        let change = v.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let flipped = v.iter().zip(&w).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if change.min(flipped) < POWER_TOL {
            break;
        }
    }
    sign_fix(&mut v);
    let lambda = dot(&cov_apply(&v), &v);
    Some((v, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Split, UtteranceRecord};
    use crate::rng::SeededRng;

    #[test]
    fn mean_shift_examples() {
        let o1 = [0.0, 0.0];
        let p1 = [1.0, 0.0];
        let o2 = [0.0, 2.0];
        let p2 = [1.0, 2.0];
        let s = mean_shift_vector(&[(&o1, &p1), (&o2, &p2)]).unwrap();
        assert_eq!(s.mean_shift, vec![1.0, 0.0]);
        assert_eq!(s.mean_magnitude, 1.0);
        assert_eq!(s.magnitude_sd, 0.0);

        let same = mean_shift_vector(&[(&o2, &o2)]).unwrap();
        assert_eq!(same.mean_shift, vec![0.0, 0.0]);
        assert_eq!(same.mean_magnitude, 0.0);
    }

    #[test]
    fn mean_shift_errors() {
        assert_eq!(mean_shift_vector(&[]), Err(DriftError::EmptyInput));
        let a = [0.0, 1.0];
        let b = [0.0];
        assert!(matches!(mean_shift_vector(&[(&a, &a), (&b, &b)]), Err(DriftError::DimMismatch(2, 1))));
    }

    #[test]
    fn consistency_examples() {
        assert!((directional_consistency(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(directional_consistency(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = directional_consistency(&[1.0, 2.0, -1.0], &[2.0, 0.0, 1.0]).unwrap();
        assert!((c - 1.0 / (6f64.sqrt() * 5f64.sqrt())).abs() < 1e-15);
        assert!((c - 0.1826).abs() < 1e-4);
        assert_eq!(directional_consistency(&[0.0, 0.0], &[1.0, 0.0]), Err(DriftError::ZeroVector));
    }

    fn paired_fixture(bona_offset: &[f64], spoof_offset: &[f64], rng: &mut SeededRng) -> (EmbeddingSet, Vec<UtteranceRecord>) {
        let dim = bona_offset.len();
        let mut set = EmbeddingSet::new("t", dim).unwrap();
        let mut recs = Vec::new();
        for (source, offset) in [(SourceLabel::BonaFide, bona_offset), (SourceLabel::Spoofed, spoof_offset)] {
            for i in 0..5 {
                let id = format!("{}{i}", source.as_str());
                let base: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let moved: Vec<f64> = base.iter().zip(offset).map(|(b, o)| b + o).collect();
                set.push(id.clone(), base).unwrap();
                set.push(format!("{id}_p"), moved).unwrap();
                let system = if source == SourceLabel::BonaFide { "human" } else { "tts" };
                let mk = |utt_id: String, processing, pair_id: String| UtteranceRecord {
                    utt_id,
                    audio_path: None,
                    source,
                    processing,
                    system: system.into(),
                    pair_id,
                    split: Split::Unassigned,
                    domain: "d".into(),
                };
                recs.push(mk(id.clone(), ProcessingLabel::None, String::new()));
                recs.push(mk(format!("{id}_p"), ProcessingLabel::VqcBreathy, id));
            }
        }
        (set, recs)
    }

    #[test]
    fn consistency_by_condition_constructions() {
        let mut rng = SeededRng::new(5);
        let v = [0.5, -1.0, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let (set, recs) = paired_fixture(&v, &v, &mut rng);
        let r = consistency_by_condition(&set, &recs, ProcessingLabel::VqcBreathy).unwrap();
        assert!((r.cosine - 1.0).abs() < 1e-12);
        assert_eq!((r.n_bonafide, r.n_spoofed), (5, 5));

        let (set, recs) = paired_fixture(&v, &neg, &mut rng);
        let r = consistency_by_condition(&set, &recs, ProcessingLabel::VqcBreathy).unwrap();
        assert!((r.cosine + 1.0).abs() < 1e-12);

        assert_eq!(
            consistency_by_condition(&set, &recs, ProcessingLabel::VqcCreaky),
            Err(DriftError::NoPairsForCondition { condition: ProcessingLabel::VqcCreaky, origin: SourceLabel::BonaFide })
        );
    }

    #[test]
    fn consistency_by_condition_composes_lower_ops() {
        let mut rng = SeededRng::new(17);
        let (mut set, recs) = paired_fixture(&[0.1, 0.2, 0.3, 0.4], &[0.4, -0.3, 0.2, 0.1], &mut rng);
        // jitter processed vectors so pairs are not a pure offset
        let jittered: Vec<(String, Vec<f64>)> = set
            .iter()
            .map(|(id, v)| (id.to_string(), v.iter().map(|x| x + 0.3 * rng.normal()).collect()))
            .collect();
        set = EmbeddingSet::from_entries("t", 4, jittered).unwrap();
        let report = consistency_by_condition(&set, &recs, ProcessingLabel::VqcBreathy).unwrap();

        let mut deltas = Vec::new();
        for source in SourceLabel::ALL {
            let mut sum = vec![0.0; 4];
            let mut n = 0.0;
            for r in recs.iter().filter(|r| r.source == source && r.processing.is_processed()) {
                let p = set.get(&r.utt_id).unwrap();
                let o = set.get(&r.pair_id).unwrap();
                for k in 0..4 {
                    sum[k] += p[k] - o[k];
                }
                n += 1.0;
            }
            deltas.push(sum.into_iter().map(|s| s / n).collect::<Vec<_>>());
        }
        let manual = dot(&deltas[0], &deltas[1]) / (norm(&deltas[0]) * norm(&deltas[1]));
        assert!((report.cosine - manual).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_project_to_line() {
        let set = EmbeddingSet::from_entries(
            "t",
            3,
            vec![
                ("a".to_string(), vec![0.0, 0.0, 0.0]),
                ("b".to_string(), vec![1.0, 2.0, 3.0]),
                ("c".to_string(), vec![2.0, 4.0, 6.0]),
            ],
        )
        .unwrap();
        let p = pca_project_2d(&set).unwrap();
        assert!(p.rank_deficient);
        for (_, _, y) in &p.coords {
            assert_eq!(*y, 0.0);
        }
        assert!((p.explained_variance[0] - p.total_variance).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let set = EmbeddingSet::from_entries("t", 2, vec![("a".to_string(), vec![0.0, 1.0])]).unwrap();
        assert_eq!(pca_project_2d(&set), Err(DriftError::TooFewPoints(1)));
    }

    #[test]
    fn isotropic_rotated_plane_captures_all_variance() {
        // points on a circle, rotated into 3-D: the top-2 directions span the plane
        let (ca, sa, cb, sb) = (0.3f64.cos(), 0.3f64.sin(), 1.1f64.cos(), 1.1f64.sin());
        let rot = |x: f64, y: f64| {
            let (y1, z1) = (y * ca, y * sa);
            vec![x * cb - y1 * sb, x * sb + y1 * cb, z1]
        };
        let entries = (0..24).map(|k| {
            let t = k as f64 * std::f64::consts::TAU / 24.0;
            (format!("p{k}"), rot(t.cos(), t.sin()))
        });
        let set = EmbeddingSet::from_entries("t", 3, entries).unwrap();
        let p = pca_project_2d(&set).unwrap();
        assert!(!p.rank_deficient);
        let captured = p.explained_variance[0] + p.explained_variance[1];
        assert!((captured - p.total_variance).abs() < 1e-9, "{captured} vs {}", p.total_variance);
        let proj_var: f64 = p.coords.iter().map(|(_, x, y)| x * x + y * y).sum::<f64>() / 23.0;
        assert!((proj_var - p.total_variance).abs() < 1e-9);
    }

    /// Eigenvalues of a symmetric 3x3 matrix from the characteristic cubic,
    /// solved with the trigonometric formula.
    fn sym3_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn five_points_match_closed_form_eigenvalues() {
        let pts = [[1.0, 2.0, 0.5], [-1.0, 0.3, 2.0], [0.4, -1.2, 1.0], [2.2, 0.9, -0.7], [-0.5, 1.5, 0.1]];
        let set = EmbeddingSet::from_entries("t", 3, pts.iter().enumerate().map(|(i, p)| (format!("p{i}"), p.to_vec()))).unwrap();
        let mut mean = [0.0; 3];
        for p in &pts {
            for k in 0..3 {
                mean[k] += p[k] / 5.0;
            }
        }
        let mut cov = [[0.0; 3]; 3];
        for p in &pts {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / 4.0;
                }
            }
        }
        let eig = sym3_eigenvalues(cov);
        let proj = pca_project_2d(&set).unwrap();
        assert!((proj.explained_variance[0] - eig[0]).abs() < 1e-6, "{:?} vs {eig:?}", proj.explained_variance);
        assert!((proj.explained_variance[1] - eig[1]).abs() < 1e-6);
        assert!((proj.explained_variance[0] + proj.explained_variance[1] - eig[0] - eig[1]).abs() < 1e-6);
    }

    #[test]
    fn projection_deterministic_and_translation_invariant() {
        let mut rng = SeededRng::new(2);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..6).map(|_| rng.normal()).collect()).collect();
        let mk = |shift: f64| {
            EmbeddingSet::from_entries("t", 6, rows.iter().enumerate().map(|(i, r)| (format!("u{i}"), r.iter().map(|x| x + shift).collect())))
                .unwrap()
        };
        let a = pca_project_2d(&mk(0.0)).unwrap();
        assert_eq!(a, pca_project_2d(&mk(0.0)).unwrap());
        let b = pca_project_2d(&mk(5.0)).unwrap();
        for ((_, x1, y1), (_, x2, y2)) in a.coords.iter().zip(&b.coords) {
            assert!((x1 - x2).abs() < 1e-6 && (y1 - y2).abs() < 1e-6);
        }
    }

    #[test]
    fn sign_convention() {
        let mut rng = SeededRng::new(8);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let set = EmbeddingSet::from_entries("t", 4, rows.into_iter().enumerate().map(|(i, r)| (format!("u{i}"), r))).unwrap();
        let p = pca_project_2d(&set).unwrap();
        // re-derive the first direction from the coordinates: it must have a positive pivot
        let mut dir = [0.0; 4];
        for ((_, x, _), (_, v)) in p.coords.iter().zip(set.iter()) {
            for k in 0..4 {
                dir[k] += x * v[k];
            }
        }
        let pivot = dir.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
        assert!(pivot > 0.0);
    }
}
