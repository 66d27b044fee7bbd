//! Experiment summary: one row per model × evaluation set.

use serde::{Deserialize, Serialize};

use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub model_id: String,
    pub training_data_tag: String,
    pub n_classes: usize,
    pub eval_set_tag: String,
    pub acc: Option<f64>,
    pub acc_bona: Option<f64>,
    pub eer_src: Option<f64>,
    /// Always `None` for binary models.
    pub eer_proc: Option<f64>,
    #[serde(default)]
    pub notes: String,
}

impl ExperimentRow {
    /// Row from an `eval` output; missing tags become empty strings.
    pub fn from_metrics(m: &MetricsReport) -> Self {
        Self {
            model_id: m.model_id.clone().unwrap_or_default(),
            training_data_tag: m.training_data_tag.clone().unwrap_or_default(),
            n_classes: m.n_classes,
            eval_set_tag: m.eval_set_tag.clone().unwrap_or_default(),
            acc: m.acc,
            acc_bona: m.acc_bona,
            eer_src: m.eer_src,
            eer_proc: if m.n_classes == 2 { None } else { m.eer_proc },
            notes: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ExperimentRow>,
}

fn pct(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{:.*}", decimals, 100.0 * x)).unwrap_or_else(|| "n/a".into())
}

impl Report {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Fixed-width table: accuracies in percent with one decimal, EERs in
    /// percent with two.
    pub fn to_text(&self) -> String {
        let header = ["Model", "Training data", "Classes", "Eval set", "Acc", "Acc_bona", "EER_src", "EER_proc", "Notes"];
        let cells: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.model_id.clone(),
                    r.training_data_tag.clone(),
                    r.n_classes.to_string(),
                    r.eval_set_tag.clone(),
                    pct(r.acc, 1),
                    pct(r.acc_bona, 1),
                    pct(r.eer_src, 2),
                    if r.n_classes == 2 { "--".into() } else { pct(r.eer_proc, 2) },
                    r.notes.clone(),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |fields: Vec<&str>| {
            let s: Vec<String> = fields.iter().zip(&widths).map(|(f, w)| format!("{f:<w$}")).collect();
            s.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(header.to_vec());
        out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect());
        for row in &cells {
            out += &line(row.iter().map(|s| s.as_str()).collect());
        }
        out
    }
}

/// Sorts rows by (model_id, eval_set_tag) so input order does not matter.
pub fn build_report(mut rows: Vec<ExperimentRow>) -> Report {
    rows.sort_by(|a, b| {
        (a.model_id.as_str(), a.eval_set_tag.as_str(), a.training_data_tag.as_str())
            .cmp(&(b.model_id.as_str(), b.eval_set_tag.as_str(), b.training_data_tag.as_str()))
    });
    Report { rows }
}
