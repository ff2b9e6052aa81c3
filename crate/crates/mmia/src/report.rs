//! Text rendering of evaluation reports.
//!
//! A report is a block of `key: value` lines followed by a `[roc]` marker
//! and the ROC points as CSV. Extra lines (attack name, WSA diagnostics,
//! wall-clock runtime) are supplied by the caller and appear before the
//! metrics in the order given.

use mmia_core::EvalReport;

use crate::export::roc_csv;

/// Key of the wall-clock line. It is the only line of a report that varies
/// between otherwise identical runs.
pub const RUNTIME_KEY: &str = "runtime_s";

pub fn render_report(report: &EvalReport, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: &dyn std::fmt::Display| out.push_str(&format!("{k}: {v}\n"));
    for (k, v) in extra {
        line(k, v);
    }
    line("n_members", &report.n_members);
    line("n_non_members", &report.n_non_members);
    line("auc", &report.auc);
    for p in &report.tpr_at_fpr {
        line(&format!("tpr_at_fpr.{}", p.target_fpr), &p.tpr);
        line(&format!("threshold_at_fpr.{}", p.target_fpr), &p.threshold);
    }
    if let Some(acc) = report.acc {
        line("acc", &acc);
    }
    if let Some(c) = report.confusion {
        line("confusion.tp", &c.tp);
        line("confusion.fp", &c.fp);
        line("confusion.tn", &c.tn);
        line("confusion.fn", &c.fn_);
    }
    out.push_str("[roc]\n");
    out.push_str(&roc_csv(&report.roc_points));
    out
}

/// Looks up a `key: value` line of a rendered report.
pub fn report_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().take_while(|l| *l != "[roc]").find_map(|l| {
        let (k, v) = l.split_once(": ")?;
        (k == key).then_some(v)
    })
}

/// The report with its runtime line removed, for comparing reruns.
pub fn without_runtime(text: &str) -> String {
    let prefix = format!("{RUNTIME_KEY}: ");
    text.lines().filter(|l| !l.starts_with(&prefix)).map(|l| format!("{l}\n")).collect()
}
