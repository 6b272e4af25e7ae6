// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-seed robustness aggregation over finished run directories.
//!
//! Each run directory holds the `tasks.csv`, `predictions.csv` and
//! `feature_stats.csv` of one seed. Nothing here runs a model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::contingency::{ContingencyTable, StratField};
use crate::error::{AuditError, Result};
use crate::featurestats::rank_by_abs_d;
use crate::store::{read_feature_stats, read_predictions, read_tasks};

pub const DEFAULT_STRATUM_OBJECT: &str = "the keys";

/// Per-seed headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub accuracy: f64,
    pub keys_fail_rate: f64,
    pub top_feature_id: usize,
    pub top_abs_d: f64,
}

/// Min / max / mean / SD (n−1 denominator) of one per-seed quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Spread {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Spread {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            sd,
        }
    }
}

/// Ranges across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRanges {
    pub accuracy: Spread,
    pub keys_fail_rate: Spread,
    /// Most frequent top feature (smallest id on ties).
    pub top_feature_mode: usize,
    pub top_feature_mode_count: usize,
}

/// Summaries sorted by seed plus their ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSweep {
    pub summaries: Vec<SeedSummary>,
    pub ranges: SeedRanges,
}

fn require(dir: &Path, file: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(AuditError::Aggregation {
            dir: dir.to_path_buf(),
            file: file.to_string(),
        })
    }
}

/// Reads one run directory into its summary.
pub fn summarize_run(dir: &Path, stratum_object: &str) -> Result<SeedSummary> {
    let tasks_path = require(dir, "tasks.csv")?;
    let preds_path = require(dir, "predictions.csv")?;
    let stats_path = require(dir, "feature_stats.csv")?;

    let tasks = read_tasks(&tasks_path)?;
    let preds = read_predictions(&preds_path)?;
    let stats = read_feature_stats(&stats_path)?;
    let seed = tasks.first().map(|t| t.seed).ok_or_else(|| {
        AuditError::Integrity(format!("{} has no tasks", tasks_path.display()))
    })?;
    if stats.is_empty() {
        return Err(AuditError::Integrity(format!(
            "{} has no features",
            stats_path.display()
        )));
    }

    let table = ContingencyTable::from_split(&tasks, &preds, StratField::Object, stratum_object)?;
    let in_stratum = table.a + table.b;
    if in_stratum == 0 {
        return Err(AuditError::Analysis(format!(
            "{}: no prompts use object {stratum_object:?}",
            dir.display()
        )));
    }
    let n = table.total() as f64;
    let top = &stats[rank_by_abs_d(&stats)[0]];
    Ok(SeedSummary {
        seed,
        accuracy: (table.b + table.d) as f64 / n,
        keys_fail_rate: table.a as f64 / in_stratum as f64,
        top_feature_id: top.feature_id,
        top_abs_d: top.d.abs(),
    })
}

/// Summarizes every run directory and the spread across them.
pub fn aggregate_seed_runs(run_dirs: &[PathBuf], stratum_object: &str) -> Result<SeedSweep> {
    if run_dirs.is_empty() {
        return Err(AuditError::Config("no run directories given".into()));
    }
    let mut summaries = run_dirs
        .par_iter()
        .map(|d| summarize_run(d, stratum_object))
        .collect::<Result<Vec<_>>>()?;
    summaries.sort_by(|a, b| {
        a.seed
            .cmp(&b.seed)
            .then(a.top_feature_id.cmp(&b.top_feature_id))
            .then(a.accuracy.total_cmp(&b.accuracy))
    });
    let ranges = ranges_of(&summaries);
    Ok(SeedSweep { summaries, ranges })
}

/// Spread of a non-empty set of per-seed summaries.
pub fn ranges_of(summaries: &[SeedSummary]) -> SeedRanges {
    let acc: Vec<f64> = summaries.iter().map(|s| s.accuracy).collect();
    let keys: Vec<f64> = summaries.iter().map(|s| s.keys_fail_rate).collect();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in summaries {
        *counts.entry(s.top_feature_id).or_default() += 1;
    }
    let (mode, mode_count) = counts
        .iter()
        .fold((0, 0), |best, (&id, &c)| if c > best.1 { (id, c) } else { best });
    SeedRanges {
        accuracy: Spread::of(&acc),
        keys_fail_rate: Spread::of(&keys),
        top_feature_mode: mode,
        top_feature_mode_count: mode_count,
    }
}
