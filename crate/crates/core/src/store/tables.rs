// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV artifacts: UTF-8, comma separated, LF line endings, fields quoted
//! only when they need it. Floats are written in shortest round-trip form.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use crate::contingency::StratumRate;
use crate::corpus::TaskRecord;
use crate::error::{AuditError, Result};
use crate::featurestats::FeatureStat;
use crate::predictor::{CvResult, RocPoint};
use crate::report::AblationSummary;
use crate::sweep::SeedSummary;

pub const TASKS_HEADER: [&str; 9] = [
    "task_id",
    "seed",
    "template_id",
    "subject",
    "io",
    "object",
    "place",
    "prompt",
    "expected",
];
pub const PREDICTIONS_HEADER: [&str; 4] = ["task_id", "decoded", "predicted", "success"];
pub const FEATURE_STATS_HEADER: [&str; 12] = [
    "feature_id",
    "n_fail",
    "n_succ",
    "mean_fail",
    "mean_succ",
    "sd_fail",
    "sd_succ",
    "t",
    "df",
    "p_raw",
    "p_holm",
    "d",
];
pub const SUBSET_HEADER: [&str; 5] = ["field", "value", "n_fail", "n_total", "rate"];
pub const AUC_HEADER: [&str; 9] = [
    "representation",
    "k",
    "fold1",
    "fold2",
    "fold3",
    "fold4",
    "fold5",
    "mean_auc",
    "std_auc",
];
pub const ROC_HEADER: [&str; 3] = ["threshold", "fpr", "tpr"];
pub const SEEDS_HEADER: [&str; 5] = ["seed", "accuracy", "keys_fail_rate", "top_feature", "top_abs_d"];
pub const ABLATION_HEADER: [&str; 6] = ["subset", "n", "acc_before", "acc_after", "delta_pp", "feature"];

/// One model run's scored continuation for a task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub task_id: usize,
    pub decoded_text: String,
    pub predicted_token: String,
    pub success: bool,
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| AuditError::csv(path, e))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| AuditError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| AuditError::csv(path, e))?;
    }
    w.flush().map_err(|e| AuditError::io(path, e))
}

/// Reads every data row after checking the header matches exactly.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| AuditError::csv(path, e))?;
    let found = r.headers().map_err(|e| AuditError::csv(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(AuditError::Integrity(format!(
            "{}: header `{}` does not match expected `{}`",
            path.display(),
            found.iter().collect::<Vec<_>>().join(","),
            header.join(",")
        )));
    }
    r.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| AuditError::csv(path, e))
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, path: &Path) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        AuditError::Integrity(format!(
            "{} line {line}: cannot parse {name} from {raw:?}",
            path.display()
        ))
    })
}

fn text(rec: &csv::StringRecord, idx: usize) -> String {
    rec.get(idx).unwrap_or("").to_string()
}

pub fn write_tasks(tasks: &[TaskRecord], path: &Path) -> Result<()> {
    write_rows(
        path,
        &TASKS_HEADER,
        tasks.iter().map(|t| {
            vec![
                t.task_id.to_string(),
                t.seed.to_string(),
                t.template_id.to_string(),
                t.subject_name.clone(),
                t.io_name.clone(),
                t.object_phrase.clone(),
                t.place.clone(),
                t.prompt_text.clone(),
                t.expected_token.clone(),
            ]
        }),
    )
}

/// Reads tasks.csv; task ids must be exactly `0..n` in order.
pub fn read_tasks(path: &Path) -> Result<Vec<TaskRecord>> {
    let rows = read_rows(path, &TASKS_HEADER)?;
    let mut tasks = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        let task_id: usize = field(rec, 0, "task_id", path)?;
        if task_id != i {
            return Err(AuditError::Integrity(format!(
                "{}: row {i} has task_id {task_id}; ids must run 0..n in order",
                path.display()
            )));
        }
        tasks.push(TaskRecord {
            task_id,
            seed: field(rec, 1, "seed", path)?,
            template_id: field(rec, 2, "template_id", path)?,
            subject_name: text(rec, 3),
            io_name: text(rec, 4),
            object_phrase: text(rec, 5),
            place: text(rec, 6),
            prompt_text: text(rec, 7),
            expected_token: text(rec, 8),
        });
    }
    Ok(tasks)
}

/// Writes a prediction sheet sorted by task id.
pub fn write_predictions(preds: &[PredictionRecord], path: &Path) -> Result<()> {
    check_unique_ids(preds, path)?;
    let mut sorted: Vec<&PredictionRecord> = preds.iter().collect();
    sorted.sort_by_key(|p| p.task_id);
    write_rows(
        path,
        &PREDICTIONS_HEADER,
        sorted.into_iter().map(|p| {
            vec![
                p.task_id.to_string(),
                p.decoded_text.clone(),
                p.predicted_token.clone(),
                u8::from(p.success).to_string(),
            ]
        }),
    )
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let rows = read_rows(path, &PREDICTIONS_HEADER)?;
    let mut preds = Vec::with_capacity(rows.len());
    for rec in &rows {
        let success = match rec.get(3).unwrap_or("") {
            "0" => false,
            "1" => true,
            other => {
                return Err(AuditError::Integrity(format!(
                    "{}: success must be 0 or 1, found {other:?}",
                    path.display()
                )))
            }
        };
        preds.push(PredictionRecord {
            task_id: field(rec, 0, "task_id", path)?,
            decoded_text: text(rec, 1),
            predicted_token: text(rec, 2),
            success,
        });
    }
    check_unique_ids(&preds, path)?;
    Ok(preds)
}

fn check_unique_ids(preds: &[PredictionRecord], path: &Path) -> Result<()> {
    let mut seen = HashSet::with_capacity(preds.len());
    for p in preds {
        if !seen.insert(p.task_id) {
            return Err(AuditError::Integrity(format!(
                "{}: duplicate task_id {}",
                path.display(),
                p.task_id
            )));
        }
    }
    Ok(())
}

/// Success flags indexed by task id; ids must cover `0..n` exactly.
pub fn success_vector(preds: &[PredictionRecord]) -> Result<Vec<bool>> {
    let mut out = vec![None; preds.len()];
    for p in preds {
        match out.get_mut(p.task_id) {
            Some(slot @ None) => *slot = Some(p.success),
            Some(Some(_)) => {
                return Err(AuditError::Integrity(format!("duplicate task_id {}", p.task_id)))
            }
            None => {
                return Err(AuditError::Integrity(format!(
                    "task_id {} out of range for a sheet of {} rows",
                    p.task_id,
                    preds.len()
                )))
            }
        }
    }
    Ok(out.into_iter().map(|s| s.unwrap_or(false)).collect())
}

pub fn write_feature_stats(stats: &[FeatureStat], path: &Path) -> Result<()> {
    write_rows(
        path,
        &FEATURE_STATS_HEADER,
        stats.iter().map(|s| {
            vec![
                s.feature_id.to_string(),
                s.n_fail.to_string(),
                s.n_succ.to_string(),
                s.mean_fail.to_string(),
                s.mean_succ.to_string(),
                s.sd_fail.to_string(),
                s.sd_succ.to_string(),
                s.t.to_string(),
                s.df.to_string(),
                s.p_raw.to_string(),
                s.p_holm.to_string(),
                s.d.to_string(),
            ]
        }),
    )
}

pub fn read_feature_stats(path: &Path) -> Result<Vec<FeatureStat>> {
    read_rows(path, &FEATURE_STATS_HEADER)?
        .iter()
        .map(|rec| {
            Ok(FeatureStat {
                feature_id: field(rec, 0, "feature_id", path)?,
                n_fail: field(rec, 1, "n_fail", path)?,
                n_succ: field(rec, 2, "n_succ", path)?,
                mean_fail: field(rec, 3, "mean_fail", path)?,
                mean_succ: field(rec, 4, "mean_succ", path)?,
                sd_fail: field(rec, 5, "sd_fail", path)?,
                sd_succ: field(rec, 6, "sd_succ", path)?,
                t: field(rec, 7, "t", path)?,
                df: field(rec, 8, "df", path)?,
                p_raw: field(rec, 9, "p_raw", path)?,
                p_holm: field(rec, 10, "p_holm", path)?,
                d: field(rec, 11, "d", path)?,
            })
        })
        .collect()
}

pub fn write_subset_report(field_name: &str, rows: &[StratumRate], path: &Path) -> Result<()> {
    write_rows(
        path,
        &SUBSET_HEADER,
        rows.iter().map(|r| {
            vec![
                field_name.to_string(),
                r.value.clone(),
                r.n_fail.to_string(),
                r.n_total.to_string(),
                r.rate.to_string(),
            ]
        }),
    )
}

/// Reads subset_report.csv as `(field, row)` pairs.
pub fn read_subset_report(path: &Path) -> Result<Vec<(String, StratumRate)>> {
    read_rows(path, &SUBSET_HEADER)?
        .iter()
        .map(|rec| {
            Ok((
                text(rec, 0),
                StratumRate {
                    value: text(rec, 1),
                    n_fail: field(rec, 2, "n_fail", path)?,
                    n_total: field(rec, 3, "n_total", path)?,
                    rate: field(rec, 4, "rate", path)?,
                },
            ))
        })
        .collect()
}

pub fn write_auc_report(results: &[CvResult], path: &Path) -> Result<()> {
    write_rows(
        path,
        &AUC_HEADER,
        results.iter().map(|r| {
            let mut row = vec![r.representation_label.clone(), r.k.to_string()];
            row.extend(r.fold_aucs.iter().map(|a| a.to_string()));
            row.push(r.mean_auc.to_string());
            row.push(r.std_auc.to_string());
            row
        }),
    )
}

pub fn read_auc_report(path: &Path) -> Result<Vec<CvResult>> {
    read_rows(path, &AUC_HEADER)?
        .iter()
        .map(|rec| {
            let mut fold_aucs = [0.0; 5];
            for (i, slot) in fold_aucs.iter_mut().enumerate() {
                *slot = field(rec, 2 + i, "fold auc", path)?;
            }
            Ok(CvResult {
                representation_label: text(rec, 0),
                k: field(rec, 1, "k", path)?,
                fold_aucs,
                mean_auc: field(rec, 7, "mean_auc", path)?,
                std_auc: field(rec, 8, "std_auc", path)?,
            })
        })
        .collect()
}

pub fn write_roc_points(points: &[RocPoint], path: &Path) -> Result<()> {
    write_rows(
        path,
        &ROC_HEADER,
        points.iter().map(|p| {
            vec![
                p.threshold.to_string(),
                p.fpr.to_string(),
                p.tpr.to_string(),
            ]
        }),
    )
}

pub fn read_roc_points(path: &Path) -> Result<Vec<RocPoint>> {
    read_rows(path, &ROC_HEADER)?
        .iter()
        .map(|rec| {
            Ok(RocPoint {
                threshold: field(rec, 0, "threshold", path)?,
                fpr: field(rec, 1, "fpr", path)?,
                tpr: field(rec, 2, "tpr", path)?,
            })
        })
        .collect()
}

pub fn write_seeds_summary(summaries: &[SeedSummary], path: &Path) -> Result<()> {
    write_rows(
        path,
        &SEEDS_HEADER,
        summaries.iter().map(|s| {
            vec![
                s.seed.to_string(),
                s.accuracy.to_string(),
                s.keys_fail_rate.to_string(),
                s.top_feature_id.to_string(),
                s.top_abs_d.to_string(),
            ]
        }),
    )
}

pub fn read_seeds_summary(path: &Path) -> Result<Vec<SeedSummary>> {
    read_rows(path, &SEEDS_HEADER)?
        .iter()
        .map(|rec| {
            Ok(SeedSummary {
                seed: field(rec, 0, "seed", path)?,
                accuracy: field(rec, 1, "accuracy", path)?,
                keys_fail_rate: field(rec, 2, "keys_fail_rate", path)?,
                top_feature_id: field(rec, 3, "top_feature", path)?,
                top_abs_d: field(rec, 4, "top_abs_d", path)?,
            })
        })
        .collect()
}

pub fn write_ablation(rows: &[AblationSummary], path: &Path) -> Result<()> {
    write_rows(
        path,
        &ABLATION_HEADER,
        rows.iter().map(|a| {
            vec![
                a.subset.clone(),
                a.n.to_string(),
                a.acc_before.to_string(),
                a.acc_after.to_string(),
                a.delta_pp.to_string(),
                a.feature.map(|f| f.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

pub fn read_ablation(path: &Path) -> Result<Vec<AblationSummary>> {
    read_rows(path, &ABLATION_HEADER)?
        .iter()
        .map(|rec| {
            let feature = match rec.get(5).unwrap_or("") {
                "" => None,
                _ => Some(field(rec, 5, "feature", path)?),
            };
            Ok(AblationSummary {
                subset: text(rec, 0),
                n: field(rec, 1, "n", path)?,
                acc_before: field(rec, 2, "acc_before", path)?,
                acc_after: field(rec, 3, "acc_after", path)?,
                delta_pp: field(rec, 4, "delta_pp", path)?,
                feature,
            })
        })
        .collect()
}
