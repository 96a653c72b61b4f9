use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClassifierKind, EvalConfig};
use crate::datasets::GzslDataset;
use crate::training::Ablation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    /// Id as it appears in the source data.
    pub original_id: i64,
    pub seen: bool,
    /// Top-1 accuracy in `[0, 1]`.
    pub accuracy: f64,
    pub n_test: usize,
}

impl ClassResult {
    pub(crate) fn new(dataset: &GzslDataset, class: usize, accuracy: f64, n_test: usize) -> Self {
        ClassResult {
            original_id: dataset.class_map.original(class).unwrap_or(class as i64),
            seen: dataset.semantics.is_seen(class),
            accuracy,
            n_test,
        }
    }
}

/// Result of one test-phase run. `u`, `s` and `h` are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub classifier: ClassifierKind,
    pub variant: Option<Ablation>,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "H")]
    pub h: f64,
    /// Keyed by canonical class index.
    pub per_class: BTreeMap<usize, ClassResult>,
    pub config: EvalConfig,
}

const LABEL_WIDTH: usize = 34;

fn row(label: &str, u: f64, s: f64, h: f64) -> String {
    format!("{label:<LABEL_WIDTH$} {u:>6.1} {s:>6.1} {h:>6.1}")
}

fn header() -> String {
    format!(
        "{:<LABEL_WIDTH$} {:>6} {:>6} {:>6}",
        "Method", "U", "S", "H"
    )
}

impl EvalReport {
    pub fn label(&self) -> String {
        match self.variant {
            Some(v) if v != Ablation::Full => v.row_label().to_string(),
            _ => format!("BMCoGAN ({})", self.classifier),
        }
    }

    /// Aligned `Method U S H` table with one row.
    pub fn to_table(&self) -> String {
        format!(
            "{}\n{}\n",
            header(),
            row(&self.label(), self.u, self.s, self.h)
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `class,original_id,seen,n_test,accuracy` lines.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,original_id,seen,n_test,accuracy\n");
        for (c, r) in &self.per_class {
            let _ = writeln!(
                out,
                "{c},{},{},{},{}",
                r.original_id, r.seen, r.n_test, r.accuracy
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Ablation,
    pub report: EvalReport,
}

/// One row per variant, in the order requested.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_table(&self) -> String {
        let mut out = header();
        out.push('\n');
        for r in &self.rows {
            out.push_str(&row(
                r.variant.row_label(),
                r.report.u,
                r.report.s,
                r.report.h,
            ));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,U,S,H\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.variant, r.report.u, r.report.s, r.report.h
            );
        }
        out
    }
}

/// One point of a sweep plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub value: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

/// `<parameter>,U,S,H` followed by one line per point.
pub fn format_plot_csv(parameter: &str, rows: &[PlotRow]) -> String {
    let mut out = format!("{parameter},U,S,H\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.value, r.u, r.s, r.h);
    }
    out
}
