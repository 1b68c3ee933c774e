//! Report rows and writers. Evaluation results go out as a JSON document and
//! a CSV with columns model,input,train_set,eval_set,language,acc,eer,f1,auc;
//! aggregate rows use language "all", followed by one row per language.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evalkit::MetricsReport;

pub const MODEL_NAME: &str = "proposed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub input: String,
    pub train_set: String,
    pub eval_set: String,
    pub language: String,
    pub acc: f64,
    pub eer: f64,
    pub f1: f64,
    pub auc: f64,
}

/// Flattens one evaluation cell into an aggregate row plus per-language rows.
pub fn rows_from_report(
    input: &str,
    train_set: &str,
    eval_set: &str,
    report: &MetricsReport,
) -> Vec<ReportRow> {
    let mut rows = vec![ReportRow {
        model: MODEL_NAME.to_string(),
        input: input.to_string(),
        train_set: train_set.to_string(),
        eval_set: eval_set.to_string(),
        language: "all".to_string(),
        acc: report.acc,
        eer: report.eer,
        f1: report.f1,
        auc: report.auc,
    }];
    for (language, m) in &report.per_language {
        rows.push(ReportRow {
            model: MODEL_NAME.to_string(),
            input: input.to_string(),
            train_set: train_set.to_string(),
            eval_set: eval_set.to_string(),
            language: language.clone(),
            acc: m.acc,
            eer: m.eer,
            f1: m.f1,
            auc: m.auc,
        });
    }
    rows
}

pub const CSV_HEADER: &str = "model,input,train_set,eval_set,language,acc,eer,f1,auc";

pub fn write_csv(rows: &[ReportRow], path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.model, r.input, r.train_set, r.eval_set, r.language, r.acc, r.eer, r.f1, r.auc
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())
}

pub fn write_json(rows: &[ReportRow], path: &Path) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(rows).expect("rows serialize");
    std::fs::write(path, json)
}
