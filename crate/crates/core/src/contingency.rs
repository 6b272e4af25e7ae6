// SPDX-License-Identifier: MIT OR Apache-2.0

//! Metadata-stratified failure rates and the two-sided Fisher exact test.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use statrs::function::factorial::ln_factorial;

use crate::corpus::TaskRecord;
use crate::error::{AuditError, Result};
use crate::store::{success_vector, PredictionRecord};

/// Relative slack when comparing point probabilities against the observed one.
pub const FISHER_RELATIVE_SLACK: f64 = 1e-7;

/// Task metadata field to stratify on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StratField {
    Object,
    Place,
    Template,
    Subject,
}

impl StratField {
    pub const ALL: [StratField; 4] = [
        StratField::Object,
        StratField::Place,
        StratField::Template,
        StratField::Subject,
    ];

    pub fn value_of(self, task: &TaskRecord) -> String {
        match self {
            StratField::Object => task.object_phrase.clone(),
            StratField::Place => task.place.clone(),
            StratField::Template => task.template_id.to_string(),
            StratField::Subject => task.subject_name.clone(),
        }
    }
}

impl fmt::Display for StratField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StratField::Object => "object",
            StratField::Place => "place",
            StratField::Template => "template",
            StratField::Subject => "subject",
        })
    }
}

impl FromStr for StratField {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "object" => Ok(StratField::Object),
            "place" => Ok(StratField::Place),
            "template" => Ok(StratField::Template),
            "subject" => Ok(StratField::Subject),
            other => Err(AuditError::Config(format!(
                "unknown stratification field {other:?} (expected object, place, template or subject)"
            ))),
        }
    }
}

/// Failure count for one value of a stratification field.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumRate {
    pub value: String,
    pub n_fail: usize,
    pub n_total: usize,
    pub rate: f64,
}

/// Success labels aligned to task order; errors if the sheets disagree.
pub fn aligned_success(tasks: &[TaskRecord], preds: &[PredictionRecord]) -> Result<Vec<bool>> {
    if tasks.len() != preds.len() {
        return Err(AuditError::Integrity(format!(
            "{} tasks but {} predictions",
            tasks.len(),
            preds.len()
        )));
    }
    success_vector(preds)
}

/// Failure rate per distinct value of `field`, highest rate first.
pub fn stratified_failure_rates(tasks: &[TaskRecord], preds: &[PredictionRecord], field: StratField) -> Result<Vec<StratumRate>> {
    let success = aligned_success(tasks, preds)?;
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (task, &ok) in tasks.iter().zip(&success) {
        let entry = counts.entry(field.value_of(task)).or_default();
        entry.0 += usize::from(!ok);
        entry.1 += 1;
    }
    let mut rows: Vec<StratumRate> = counts
        .into_iter()
        .map(|(value, (n_fail, n_total))| StratumRate {
            value,
            n_fail,
            n_total,
            rate: n_fail as f64 / n_total as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.rate.total_cmp(&a.rate).then_with(|| a.value.cmp(&b.value)));
    Ok(rows)
}

/// 2×2 table: rows are in-stratum / elsewhere, columns fail / success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    /// fail, in stratum
    pub a: u64,
    /// success, in stratum
    pub b: u64,
    /// fail, elsewhere
    pub c: u64,
    /// success, elsewhere
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Splits the corpus on `field == value`.
    pub fn from_split(tasks: &[TaskRecord], preds: &[PredictionRecord], field: StratField, value: &str) -> Result<Self> {
        let success = aligned_success(tasks, preds)?;
        let mut t = ContingencyTable::new(0, 0, 0, 0);
        for (task, &ok) in tasks.iter().zip(&success) {
            let inside = field.value_of(task) == value;
            match (inside, ok) {
                (true, false) => t.a += 1,
                (true, true) => t.b += 1,
                (false, false) => t.c += 1,
                (false, true) => t.d += 1,
            }
        }
        Ok(t)
    }
}

/// Fisher exact test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherResult {
    pub p: f64,
    /// Sample cross-product ratio `(a·d)/(b·c)`; `+inf` when `b·c = 0`.
    pub odds_ratio: f64,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Hypergeometric log point probabilities over the support of `a` given the
/// table's margins, as `(first_a, log_probs)`.
pub fn hypergeometric_log_pmf(t: &ContingencyTable) -> (u64, Vec<f64>) {
    let row1 = t.a + t.b;
    let row2 = t.c + t.d;
    let col1 = t.a + t.c;
    let n = t.total();
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let norm = ln_choose(n, col1);
    let logs = (lo..=hi)
        .map(|x| ln_choose(row1, x) + ln_choose(row2, col1 - x) - norm)
        .collect();
    (lo, logs)
}

/// Two-sided Fisher exact test: the total probability of all tables with the
/// observed margins that are no more probable than the observed table.
pub fn fisher_exact_two_sided(t: &ContingencyTable) -> Result<FisherResult> {
    let margins = [
        ("in-stratum row", t.a + t.b),
        ("elsewhere row", t.c + t.d),
        ("fail column", t.a + t.c),
        ("success column", t.b + t.d),
    ];
    if let Some((name, _)) = margins.iter().find(|(_, v)| *v == 0) {
        return Err(AuditError::DegenerateTable(format!(
            "{name} of {t:?} sums to zero"
        )));
    }
    let (lo, logs) = hypergeometric_log_pmf(t);
    let observed = logs[(t.a - lo) as usize];
    let cutoff = observed + FISHER_RELATIVE_SLACK.ln_1p();
    let p: f64 = logs
        .iter()
        .filter(|&&lp| lp <= cutoff)
        .map(|lp| lp.exp())
        .sum();

    let num = t.a as f64 * t.d as f64;
    let den = t.b as f64 * t.c as f64;
    let odds_ratio = if den == 0.0 { f64::INFINITY } else { num / den };
    Ok(FisherResult {
        p: p.min(1.0),
        odds_ratio,
    })
}
