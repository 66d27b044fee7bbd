//! Two-way ANOVA (source × processing), Tukey HSD and interaction deltas.
//!
//! Designs must be balanced (equal observations per cell), where the
//! sequential, partial and marginal sums of squares all agree.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::acoustics::{AcousticMeasurement, AcousticRow};
use crate::corpus::{ProcessingLabel, SourceLabel};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 levels per factor, got {0} and {1}")]
    TooFewLevels(usize, usize),
    #[error("cell ({0}, {1}) has no observations")]
    EmptyCell(String, String),
    #[error("unbalanced design, cell counts: {0}")]
    Unbalanced(String),
    #[error("degrees of freedom must be at least 1")]
    BadDf,
    #[error("Tukey HSD needs at least 2 groups")]
    SingleGroup,
    #[error("error mean square must be positive")]
    NonPositiveMsError,
    #[error("no observations for source {0} with processing {1}")]
    MissingCondition(SourceLabel, ProcessingLabel),
    #[error("non-finite observation")]
    NonFinite,
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub sum_sq: f64,
    pub df: usize,
    pub mean_sq: f64,
    /// `None` for the error row, or when the error mean square is zero or
    /// has no degrees of freedom.
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub factor_a: EffectRow,
    pub factor_b: EffectRow,
    pub interaction: EffectRow,
    pub error: EffectRow,
    pub total_sum_sq: f64,
    pub levels_a: Vec<String>,
    pub levels_b: Vec<String>,
    pub n_per_cell: usize,
    /// Cell means indexed `[a][b]`.
    pub cell_means: Vec<Vec<f64>>,
}

/// Balanced two-way ANOVA with interaction.
pub fn two_way_anova<A, B>(values: &[(A, B, f64)]) -> Result<AnovaTable, StatsError>
where
    A: Ord + Clone + ToString,
    B: Ord + Clone + ToString,
{
    if values.iter().any(|v| !v.2.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let la: Vec<A> = values.iter().map(|v| v.0.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let lb: Vec<B> = values.iter().map(|v| v.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let (a, b) = (la.len(), lb.len());
    if a < 2 || b < 2 {
        return Err(StatsError::TooFewLevels(a, b));
    }
    let mut cells: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); b]; a];
    for (va, vb, y) in values {
        let i = la.binary_search(va).unwrap();
        let j = lb.binary_search(vb).unwrap();
        cells[i][j].push(*y);
    }
    for (i, row) in cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if c.is_empty() {
                return Err(StatsError::EmptyCell(la[i].to_string(), lb[j].to_string()));
            }
        }
    }
    let n = cells[0][0].len();
    if cells.iter().flatten().any(|c| c.len() != n) {
        let counts: Vec<String> = (0..a)
            .flat_map(|i| (0..b).map(move |j| (i, j)))
            .map(|(i, j)| format!("({},{})={}", la[i].to_string(), lb[j].to_string(), cells[i][j].len()))
            .collect();
        return Err(StatsError::Unbalanced(counts.join(" ")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cell_means: Vec<Vec<f64>> = cells.iter().map(|r| r.iter().map(|c| mean(c)).collect()).collect();
    let grand = cell_means.iter().flatten().sum::<f64>() / (a * b) as f64;
    let a_means: Vec<f64> = cell_means.iter().map(|r| r.iter().sum::<f64>() / b as f64).collect();
    let b_means: Vec<f64> = (0..b).map(|j| cell_means.iter().map(|r| r[j]).sum::<f64>() / a as f64).collect();
    let nf = n as f64;
    let ss_a = nf * b as f64 * a_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_b = nf * a as f64 * b_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_int = nf
        * (0..a)
            .flat_map(|i| (0..b).map(move |j| (i, j)))
            .map(|(i, j)| (cell_means[i][j] - a_means[i] - b_means[j] + grand).powi(2))
            .sum::<f64>();
    let ss_err: f64 = (0..a)
        .flat_map(|i| (0..b).map(move |j| (i, j)))
        .map(|(i, j)| cells[i][j].iter().map(|y| (y - cell_means[i][j]).powi(2)).sum::<f64>())
        .sum();
    let total: f64 = values.iter().map(|v| (v.2 - grand).powi(2)).sum();

    let df_err = a * b * (n - 1);
    let ms_err = if df_err > 0 { ss_err / df_err as f64 } else { f64::NAN };
    let effect = |ss: f64, df: usize| {
        let ms = ss / df as f64;
        let f = (df_err > 0 && ms_err > 0.0).then(|| ms / ms_err);
        let p = f.map(|f| f_survival(f, df as f64, df_err as f64).expect("dfs are positive"));
        EffectRow { sum_sq: ss, df, mean_sq: ms, f_stat: f, p_value: p }
    };
    Ok(AnovaTable {
        factor_a: effect(ss_a, a - 1),
        factor_b: effect(ss_b, b - 1),
        interaction: effect(ss_int, (a - 1) * (b - 1)),
        error: EffectRow { sum_sq: ss_err, df: df_err, mean_sq: ms_err, f_stat: None, p_value: None },
        total_sum_sq: total,
        levels_a: la.iter().map(|l| l.to_string()).collect(),
        levels_b: lb.iter().map(|l| l.to_string()).collect(),
        n_per_cell: n,
        cell_means,
    })
}

/// Upper tail of the F distribution, `P(F > f)`.
pub fn f_survival(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    if !(df1 >= 1.0 && df2 >= 1.0) {
        return Err(StatsError::BadDf);
    }
    if f <= 0.0 || f.is_nan() {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    Ok(beta_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)).clamp(0.0, 1.0))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, m: f64, fm: f64, b: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_panel(f, a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1)
        + simpson_panel(f, m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature over `panels` equal initial subintervals.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let m = 0.5 * (lo + hi);
            let (flo, fm, fhi) = (f(lo), f(m), f(hi));
            let whole = h / 6.0 * (flo + 4.0 * fm + fhi);
            simpson_panel(&f, lo, flo, m, fm, hi, fhi, whole, tol / panels as f64, 40)
        })
        .sum()
}

const QUAD_TOL: f64 = 1e-9;

/// CDF of the range of `k` independent standard normals.
fn range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let v = k as f64 * integrate(|z| normal_pdf(z) * (normal_cdf(z) - normal_cdf(z - w)).max(0.0).powi(km1), -8.5, 8.5, QUAD_TOL, 34);
    v.clamp(0.0, 1.0)
}

/// Degrees of freedom beyond which the infinite-df limit is used.
const DF_LIMIT: f64 = 1e5;

/// CDF of the studentized range for `k` groups and `df` error degrees of
/// freedom (`f64::INFINITY` allowed).
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> Result<f64, StatsError> {
    if k < 2 {
        return Err(StatsError::SingleGroup);
    }
    if !(df >= 1.0) {
        return Err(StatsError::BadDf);
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if df > DF_LIMIT {
        return Ok(range_cdf(q, k));
    }
    // outer integral over s = sqrt(chi2_df / df)
    let half = df / 2.0;
    let log_norm = half * df.ln() - ln_gamma(half) - (half - 1.0) * 2f64.ln();
    let density = |s: f64| if s <= 0.0 { 0.0 } else { (log_norm + (df - 1.0) * s.ln() - half * s * s).exp() };
    let lo = (1.0 - 12.0 / (2.0 * df).sqrt()).max(0.0);
    let hi = 1.0 + 12.0 / df.sqrt();
    let v = integrate(|s| density(s) * range_cdf(q * s, k), lo, hi, QUAD_TOL * 10.0, 24);
    Ok(v.clamp(0.0, 1.0))
}

pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> Result<f64, StatsError> {
    Ok((1.0 - studentized_range_cdf(q, k, df)?).clamp(0.0, 1.0))
}

/// Critical value `q` with `P(Q > q) = alpha`, found by bisection.
pub fn studentized_range_quantile(alpha: f64, k: usize, df: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadProbability(alpha));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while studentized_range_sf(hi, k, df)? > alpha {
        hi *= 2.0;
        if hi > 1e4 {
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_sf(mid, k, df)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    /// `mean_i - mean_j`.
    pub diff: f64,
    pub q_stat: f64,
    pub p_adj: f64,
    pub significant: bool,
}

/// Tukey-Kramer pairwise comparisons for all `i < j`.
pub fn tukey_hsd(means: &[f64], ns: &[usize], ms_error: f64, df_error: f64, alpha: f64) -> Result<Vec<TukeyPair>, StatsError> {
    let k = means.len();
    if k < 2 || ns.len() != k {
        return Err(StatsError::SingleGroup);
    }
    if !(ms_error > 0.0) {
        return Err(StatsError::NonPositiveMsError);
    }
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[i] - means[j];
            let se = (ms_error / 2.0 * (1.0 / ns[i] as f64 + 1.0 / ns[j] as f64)).sqrt();
            let q = diff.abs() / se;
            let p = studentized_range_sf(q, k, df_error)?;
            out.push(TukeyPair { i, j, diff, q_stat: q, p_adj: p, significant: p < alpha });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDelta {
    pub processing: ProcessingLabel,
    pub delta_db: f64,
}

/// `[mean(spoof,p) - mean(bona,p)] - [mean(spoof,none) - mean(bona,none)]`
/// for every processing present, in label order.
pub fn interaction_deltas(values: &[(SourceLabel, ProcessingLabel, f64)]) -> Result<Vec<InteractionDelta>, StatsError> {
    let mut sums: BTreeMap<(ProcessingLabel, SourceLabel), (f64, usize)> = BTreeMap::new();
    for &(s, p, y) in values {
        let e = sums.entry((p, s)).or_insert((0.0, 0));
        e.0 += y;
        e.1 += 1;
    }
    let mean = |p: ProcessingLabel, s: SourceLabel| sums.get(&(p, s)).map(|(t, n)| t / *n as f64).ok_or(StatsError::MissingCondition(s, p));
    let gap = |p| Ok::<f64, StatsError>(mean(p, SourceLabel::Spoofed)? - mean(p, SourceLabel::BonaFide)?);
    let reference = gap(ProcessingLabel::None)?;
    let present: BTreeSet<ProcessingLabel> = sums.keys().map(|k| k.0).collect();
    let mut out = Vec::new();
    for p in ProcessingLabel::ALL.into_iter().filter(|p| present.contains(p)) {
        let delta_db = if p == ProcessingLabel::None { 0.0 } else { gap(p)? - reference };
        out.push(InteractionDelta { processing: p, delta_db });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    H1H2Db,
    H1A3Db,
}

impl Measure {
    pub const ALL: [Measure; 2] = [Measure::H1H2Db, Measure::H1A3Db];

    pub fn select(self, m: &AcousticMeasurement) -> Option<f64> {
        match self {
            Measure::H1H2Db => m.h1_h2_db,
            Measure::H1A3Db => m.h1_a3_db,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::H1H2Db => "h1_h2_db",
            Measure::H1A3Db => "h1_a3_db",
        }
    }
}

/// Transformation families analyzed separately, each against the
/// unprocessed reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    VoiceQuality,
    Restoration,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::VoiceQuality, Family::Restoration];

    pub fn contains(self, p: ProcessingLabel) -> bool {
        match self {
            Family::VoiceQuality => p == ProcessingLabel::None || p.is_vqc(),
            Family::Restoration => matches!(p, ProcessingLabel::None | ProcessingLabel::Restoration),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTukeyPair {
    pub group_i: String,
    pub group_j: String,
    #[serde(flatten)]
    pub pair: TukeyPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureAnalysis {
    pub measure: Measure,
    pub family: Family,
    pub n_used: usize,
    pub n_excluded_unreliable: usize,
    pub n_missing_value: usize,
    pub anova: AnovaTable,
    pub tukey: Vec<CellTukeyPair>,
    pub interaction_deltas: Vec<InteractionDelta>,
}

/// ANOVA, Tukey HSD over source × processing cells, and interaction deltas
/// for one measure and family. Unreliable rows are dropped first. Returns
/// `Ok(None)` when the family has no processed rows.
pub fn analyze_measure(rows: &[AcousticRow], measure: Measure, family: Family, alpha: f64) -> Result<Option<MeasureAnalysis>, StatsError> {
    let in_family: Vec<&AcousticRow> = rows.iter().filter(|r| family.contains(r.processing)).collect();
    if !in_family.iter().any(|r| r.processing.is_processed()) {
        return Ok(None);
    }
    let n_excluded = in_family.iter().filter(|r| !r.measurement.reliable).count();
    let reliable: Vec<&&AcousticRow> = in_family.iter().filter(|r| r.measurement.reliable).collect();
    let values: Vec<(SourceLabel, ProcessingLabel, f64)> = reliable
        .iter()
        .filter_map(|r| measure.select(&r.measurement).map(|y| (r.source, r.processing, y)))
        .collect();
    let n_missing = reliable.len() - values.len();
    let keyed: Vec<(&str, &str, f64)> = values.iter().map(|(s, p, y)| (s.as_str(), p.as_str(), *y)).collect();
    let anova = two_way_anova(&keyed)?;
    let mut tukey = Vec::new();
    if anova.error.df > 0 && anova.error.mean_sq > 0.0 {
        let mut labels = Vec::new();
        let mut means = Vec::new();
        for (i, la) in anova.levels_a.iter().enumerate() {
            for (j, lb) in anova.levels_b.iter().enumerate() {
                labels.push(format!("{la}/{lb}"));
                means.push(anova.cell_means[i][j]);
            }
        }
        let ns = vec![anova.n_per_cell; means.len()];
        for pair in tukey_hsd(&means, &ns, anova.error.mean_sq, anova.error.df as f64, alpha)? {
            tukey.push(CellTukeyPair { group_i: labels[pair.i].clone(), group_j: labels[pair.j].clone(), pair });
        }
    }
    Ok(Some(MeasureAnalysis {
        measure,
        family,
        n_used: values.len(),
        n_excluded_unreliable: n_excluded,
        n_missing_value: n_missing,
        anova,
        tukey,
        interaction_deltas: interaction_deltas(&values)?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn fixture() -> Vec<(&'static str, &'static str, f64)> {
        vec![
            ("a1", "b1", 0.0),
            ("a1", "b1", 2.0),
            ("a1", "b2", 1.0),
            ("a1", "b2", 3.0),
            ("a2", "b1", 2.0),
            ("a2", "b1", 4.0),
            ("a2", "b2", 3.0),
            ("a2", "b2", 5.0),
        ]
    }

    #[test]
    fn hand_computed_2x2() {
        let t = two_way_anova(&fixture()).unwrap();
        assert!((t.factor_a.sum_sq - 8.0).abs() < 1e-12);
        assert!((t.factor_b.sum_sq - 2.0).abs() < 1e-12);
        assert!(t.interaction.sum_sq.abs() < 1e-12);
        assert!((t.error.sum_sq - 8.0).abs() < 1e-12);
        assert!((t.factor_a.f_stat.unwrap() - 4.0).abs() < 1e-9);
        assert!((t.factor_b.f_stat.unwrap() - 1.0).abs() < 1e-9);
        assert!(t.interaction.f_stat.unwrap().abs() < 1e-9);
        assert_eq!((t.factor_a.df, t.factor_b.df, t.interaction.df, t.error.df), (1, 1, 1, 4));
    }

    #[test]
    fn constant_data_has_no_f() {
        let v: Vec<_> = fixture().into_iter().map(|(a, b, _)| (a, b, 3.0)).collect();
        let t = two_way_anova(&v).unwrap();
        assert_eq!(t.total_sum_sq, 0.0);
        assert!(t.factor_a.f_stat.is_none() && t.interaction.p_value.is_none());
    }

    #[test]
    fn single_observation_cells_have_zero_error_df() {
        let v = vec![("a", "x", 1.0), ("a", "y", 2.0), ("b", "x", 4.0), ("b", "y", 3.0)];
        let t = two_way_anova(&v).unwrap();
        assert_eq!(t.error.df, 0);
        assert!(t.factor_a.f_stat.is_none());
    }

    #[test]
    fn translation_invariant() {
        let t0 = two_way_anova(&fixture()).unwrap();
        let shifted: Vec<_> = fixture().into_iter().map(|(a, b, y)| (a, b, y + 1000.0)).collect();
        let t1 = two_way_anova(&shifted).unwrap();
        for (x, y) in [(&t0.factor_a, &t1.factor_a), (&t0.factor_b, &t1.factor_b), (&t0.error, &t1.error)] {
            assert!((x.sum_sq - y.sum_sq).abs() < 1e-9);
        }
        assert!((t0.factor_a.f_stat.unwrap() - t1.factor_a.f_stat.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn design_errors() {
        let mut v = fixture();
        v.pop();
        assert!(matches!(two_way_anova(&v), Err(StatsError::Unbalanced(_))));
        let v: Vec<_> = fixture().into_iter().filter(|(a, b, _)| !(*a == "a2" && *b == "b2")).collect();
        assert_eq!(two_way_anova(&v), Err(StatsError::EmptyCell("a2".into(), "b2".into())));
        let v: Vec<_> = fixture().into_iter().filter(|(a, _, _)| *a == "a1").collect();
        assert_eq!(two_way_anova(&v), Err(StatsError::TooFewLevels(1, 2)));
    }

    #[test]
    fn f_survival_values() {
        assert_eq!(f_survival(0.0, 3.0, 7.0).unwrap(), 1.0);
        assert_eq!(f_survival(f64::INFINITY, 3.0, 7.0).unwrap(), 0.0);
        let oracle = 2.0 * (1.0 - normal_cdf(1.0));
        assert!((f_survival(1.0, 1.0, 1e6).unwrap() - oracle).abs() < 1e-3);
        assert!((oracle - 0.3173).abs() < 1e-4);
        assert!(f_survival(1e6, 2.0, 30.0).unwrap() < 1e-12);
        assert_eq!(f_survival(1.0, 0.0, 3.0), Err(StatsError::BadDf));
    }

    #[test]
    fn f_survival_matches_t_for_one_numerator_df() {
        // F(1, v) = t_v^2
        let t = StudentsT::new(0.0, 1.0, 12.0).unwrap();
        for x in [0.3, 1.0, 2.5] {
            let oracle = 2.0 * (1.0 - t.cdf(x));
            assert!((f_survival(x * x, 1.0, 12.0).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn range_cdf_two_groups_closed_form() {
        // range of two standard normals is |N(0, 2)|
        for w in [0.5, 1.0, 2.772, 4.0] {
            let oracle = 2.0 * normal_cdf(w / SQRT_2) - 1.0;
            assert!((studentized_range_cdf(w, 2, f64::INFINITY).unwrap() - oracle).abs() < 1e-7);
        }
    }

    #[test]
    fn tukey_critical_value_two_groups() {
        let q = studentized_range_quantile(0.05, 2, f64::INFINITY).unwrap();
        assert!((q - SQRT_2 * 1.959964).abs() < 0.01, "{q}");
    }

    #[test]
    fn tukey_critical_value_table() {
        // published tables: q(0.05; 3, 10) = 3.877, q(0.05; 4, 20) = 3.958
        let q = studentized_range_quantile(0.05, 3, 10.0).unwrap();
        assert!((q - 3.877).abs() < 0.005, "{q}");
        let q = studentized_range_quantile(0.05, 4, 20.0).unwrap();
        assert!((q - 3.958).abs() < 0.005, "{q}");
    }

    #[test]
    fn tukey_two_groups_matches_pooled_t() {
        for df in [100.0, 400.0] {
            let t = StudentsT::new(0.0, 1.0, df).unwrap();
            for q in [1.0, 2.5, 3.5] {
                let p = studentized_range_sf(q, 2, df).unwrap();
                let oracle = 2.0 * (1.0 - t.cdf(q / SQRT_2));
                assert!((p - oracle).abs() < 2e-3, "df {df} q {q}: {p} vs {oracle}");
            }
        }
    }

    #[test]
    fn tukey_examples() {
        let pairs = tukey_hsd(&[1.0, 1.0], &[5, 5], 2.0, 8.0, 0.05).unwrap();
        assert_eq!(pairs[0].q_stat, 0.0);
        assert_eq!(pairs[0].p_adj, 1.0);
        let pairs = tukey_hsd(&[0.0, 0.01, 100.0], &[10, 10, 10], 0.01, 27.0, 0.05).unwrap();
        assert!(!pairs[0].significant);
        assert!(pairs[1].significant && pairs[2].significant);
        assert!(pairs[1].p_adj < pairs[0].p_adj && pairs[2].p_adj < pairs[0].p_adj);
        assert_eq!(tukey_hsd(&[1.0], &[3], 1.0, 2.0, 0.05), Err(StatsError::SingleGroup));
        assert_eq!(tukey_hsd(&[1.0, 2.0], &[3, 3], 0.0, 2.0, 0.05), Err(StatsError::NonPositiveMsError));
    }

    use ProcessingLabel as P;
    use SourceLabel as S;

    #[test]
    fn deltas_by_construction() {
        let mut v = vec![(S::BonaFide, P::None, 1.0), (S::Spoofed, P::None, 3.0)];
        v.extend([(S::BonaFide, P::VqcBreathy, 1.5), (S::Spoofed, P::VqcBreathy, 3.5)]);
        v.extend([(S::BonaFide, P::VqcEndCreak, 1.0), (S::Spoofed, P::VqcEndCreak, 4.0)]);
        let d = interaction_deltas(&v).unwrap();
        assert_eq!(d[0], InteractionDelta { processing: P::None, delta_db: 0.0 });
        assert_eq!(d[1].delta_db, 0.0);
        assert_eq!(d[2].delta_db, 1.0);
        v.retain(|x| !(x.0 == S::BonaFide && x.1 == P::VqcEndCreak));
        assert_eq!(interaction_deltas(&v), Err(StatsError::MissingCondition(S::BonaFide, P::VqcEndCreak)));
    }

    #[test]
    fn deltas_hand_arithmetic() {
        let v = vec![
            (S::BonaFide, P::None, 2.0),
            (S::BonaFide, P::None, 4.0),
            (S::Spoofed, P::None, 7.0),
            (S::Spoofed, P::None, 5.0),
            (S::BonaFide, P::VqcCreaky, -1.0),
            (S::BonaFide, P::VqcCreaky, 0.0),
            (S::Spoofed, P::VqcCreaky, 1.0),
            (S::Spoofed, P::VqcCreaky, 4.0),
        ];
        // means: bona/none 3, spoof/none 6, bona/creaky -0.5, spoof/creaky 2.5
        let d = interaction_deltas(&v).unwrap();
        assert!((d[1].delta_db - ((2.5 - -0.5) - (6.0 - 3.0))).abs() < 1e-12);
    }

    fn random_design(rng: &mut SeededRng) -> Vec<(usize, usize, f64)> {
        let (a, b, n) = (2 + rng.below(3), 2 + rng.below(4), 1 + rng.below(6));
        let mut v = Vec::new();
        for i in 0..a {
            for j in 0..b {
                for _ in 0..n {
                    v.push((i, j, rng.normal() * 3.0 + i as f64 - j as f64));
                }
            }
        }
        v
    }

    #[test]
    fn ss_decomposition_identity() {
        let mut rng = SeededRng::new(99);
        for _ in 0..100 {
            let t = two_way_anova(&random_design(&mut rng)).unwrap();
            let parts = t.factor_a.sum_sq + t.factor_b.sum_sq + t.interaction.sum_sq + t.error.sum_sq;
            assert!((parts - t.total_sum_sq).abs() <= 1e-6 * t.total_sum_sq.max(1e-300));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_survival_monotone(f1 in 0.0f64..50.0, f2 in 0.0f64..50.0, d1 in 1u32..20, d2 in 1u32..200) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let (p_lo, p_hi) = (f_survival(lo, d1 as f64, d2 as f64).unwrap(), f_survival(hi, d1 as f64, d2 as f64).unwrap());
            prop_assert!(p_hi <= p_lo + 1e-12);
        }
    }
}
