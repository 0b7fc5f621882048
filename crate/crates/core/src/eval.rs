//! Box overlap, accuracy metrics and the query file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Aabb3;

pub const THRESHOLDS: [f64; 2] = [0.25, 0.5];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no evaluation records")]
    EmptyRecords,
    #[error("record {0} has neither an IoU nor a selection outcome")]
    EmptyRecord(usize),
    #[error("{path}: {message}")]
    Queries { path: PathBuf, message: String },
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou_aabb(a: &Aabb3, b: &Aabb3) -> f64 {
    let (amin, amax, bmin, bmax) = (a.min(), a.max(), b.min(), b.max());
    let (mut inter, mut va, mut vb) = (1.0, 1.0, 1.0);
    for i in 0..3 {
        inter *= (amax[i].min(bmax[i]) - amin[i].max(bmin[i])).max(0.0);
        va *= amax[i] - amin[i];
        vb *= bmax[i] - bmin[i];
    }
    // Same corner differences as the overlap: iou(a, a) == 1 exactly.
    let union = va + vb - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// One line of a queries file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub text: String,
    pub gt_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_box: Option<Aabb3>,
    #[serde(default)]
    pub splits: Vec<String>,
}

/// Reads JSON lines; blank lines are skipped.
pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>, EvalError> {
    let err = |message: String| EvalError::Queries {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_idx: usize,
    pub iou: Option<f64>,
    pub correct_selection: Option<bool>,
    #[serde(default)]
    pub splits: Vec<String>,
    /// Why the query produced no prediction, if it failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAccuracy {
    pub threshold: f64,
    pub hits: usize,
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub count: usize,
    pub failed: usize,
    pub iou_thresholds: Vec<ThresholdAccuracy>,
    pub selection_correct: usize,
    pub selection_count: usize,
    pub selection_accuracy: Option<f64>,
    pub mean_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall: AccuracySummary,
    pub splits: BTreeMap<String, AccuracySummary>,
}

fn summarize(records: &[&EvalRecord], thresholds: &[f64]) -> AccuracySummary {
    let ious: Vec<f64> = records.iter().filter_map(|r| r.iou).collect();
    let selections: Vec<bool> = records.iter().filter_map(|r| r.correct_selection).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let selection_correct = selections.iter().filter(|c| **c).count();
    AccuracySummary {
        count: records.len(),
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        iou_thresholds: thresholds
            .iter()
            .map(|&t| {
                let hits = ious.iter().filter(|&&v| v >= t).count();
                ThresholdAccuracy {
                    threshold: t,
                    hits,
                    count: ious.len(),
                    accuracy: ratio(hits, ious.len()),
                }
            })
            .collect(),
        selection_correct,
        selection_count: selections.len(),
        selection_accuracy: (!selections.is_empty()).then(|| ratio(selection_correct, selections.len())),
        mean_iou: (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64),
    }
}

/// Accuracy at each IoU threshold plus selection accuracy, overall and per
/// split label. Records without an IoU are left out of the threshold
/// denominators, and likewise for selection.
pub fn accuracy_report(records: &[EvalRecord], thresholds: &[f64]) -> Result<AccuracyReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.iou.is_none() && r.correct_selection.is_none())
    {
        return Err(EvalError::EmptyRecord(r.query_idx));
    }
    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut by_split: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        for s in &r.splits {
            by_split.entry(s.as_str()).or_default().push(r);
        }
    }
    Ok(AccuracyReport {
        overall: summarize(&all, thresholds),
        splits: by_split
            .into_iter()
            .map(|(k, v)| (k.to_string(), summarize(&v, thresholds)))
            .collect(),
    })
}

/// Aligned plain-text table of a report.
pub fn report_text(report: &AccuracyReport) -> String {
    let mut header = vec!["split".to_string(), "n".to_string()];
    for t in &report.overall.iou_thresholds {
        header.push(format!("Acc@{}", t.threshold));
    }
    header.extend(["selection".to_string(), "failed".to_string()]);

    let row = |name: &str, s: &AccuracySummary| {
        let mut cells = vec![name.to_string(), s.count.to_string()];
        for t in &s.iou_thresholds {
            cells.push(if t.count == 0 {
                "-".into()
            } else {
                format!("{:.4} ({}/{})", t.accuracy, t.hits, t.count)
            });
        }
        cells.push(match s.selection_accuracy {
            Some(a) => format!("{a:.4} ({}/{})", s.selection_correct, s.selection_count),
            None => "-".into(),
        });
        cells.push(s.failed.to_string());
        cells
    };
    let mut rows = vec![header, row("overall", &report.overall)];
    rows.extend(report.splits.iter().map(|(k, s)| row(k, s)));

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
