//! Tab-separated per-step log.

use crate::losses::{LossReport, LOG_COLUMNS};

pub fn format_log_header() -> String {
    LOG_COLUMNS.join("\t")
}

/// `step` followed by the nine loss fields, each printed with full precision.
pub fn format_log_line(step: u64, report: &LossReport) -> String {
    let mut line = step.to_string();
    for v in report.log_fields() {
        line.push('\t');
        line.push_str(&format!("{v:e}"));
    }
    line
}
