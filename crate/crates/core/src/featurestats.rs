// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-feature failure-vs-success discrimination statistics.
//!
//! For every column of an activation matrix: class means and sample SDs,
//! Welch's t, a two-sided p-value on the conservative
//! `df = min(n_fail, n_succ) - 1`, pooled-SD Cohen's d (positive when the
//! feature fires more on failures) and a Holm step-down adjustment across all
//! columns.
//!
//! Column sums are always accumulated in row order, so results do not depend
//! on how many threads share the work.

use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::error::{AuditError, Result};
use crate::store::ActivationMatrix;

/// Lower bound applied to the standard error and pooled SD of constant columns.
pub const SD_FLOOR: f64 = 1e-12;

const COLUMN_BLOCK: usize = 512;

/// Two-class summary for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStat {
    pub feature_id: usize,
    pub n_fail: usize,
    pub n_succ: usize,
    pub mean_fail: f64,
    pub mean_succ: f64,
    pub sd_fail: f64,
    pub sd_succ: f64,
    pub t: f64,
    pub df: u64,
    pub p_raw: f64,
    pub p_holm: f64,
    pub d: f64,
}

/// Two-sided Student-t p-value, `2 * (1 - F(|t|; df))`.
///
/// Evaluated as the regularized incomplete beta `I_{df/(df+t²)}(df/2, 1/2)`,
/// which keeps full relative precision deep in the tail. The result is
/// clamped to `[f64::MIN_POSITIVE, 1]`.
pub fn two_sided_t_pvalue(t: f64, df: u64) -> Result<f64> {
    if df < 1 {
        return Err(AuditError::Domain(format!(
            "t p-value needs df >= 1, got {df}"
        )));
    }
    if !t.is_finite() {
        return Err(AuditError::Domain(format!("t statistic {t} is not finite")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let nu = df as f64;
    let x = nu / (nu + t * t);
    let p = beta_reg(nu / 2.0, 0.5, x);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Holm step-down adjustment; output is in input order.
pub fn holm_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(AuditError::Domain(format!(
            "p-value {bad} outside [0, 1]"
        )));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

struct ColumnMoments {
    mean_fail: f64,
    mean_succ: f64,
    var_fail: f64,
    var_succ: f64,
}

fn block_moments(m: &ActivationMatrix, is_fail: &[bool], cols: std::ops::Range<usize>, n_fail: usize, n_succ: usize) -> Vec<ColumnMoments> {
    let width = cols.len();
    let mut sum_f = vec![0.0f64; width];
    let mut sum_s = vec![0.0f64; width];
    for (r, &fail) in is_fail.iter().enumerate() {
        let row = &m.row(r)[cols.clone()];
        let acc = if fail { &mut sum_f } else { &mut sum_s };
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    let mean_f: Vec<f64> = sum_f.iter().map(|s| s / n_fail as f64).collect();
    let mean_s: Vec<f64> = sum_s.iter().map(|s| s / n_succ as f64).collect();

    let mut ss_f = vec![0.0f64; width];
    let mut ss_s = vec![0.0f64; width];
    for (r, &fail) in is_fail.iter().enumerate() {
        let row = &m.row(r)[cols.clone()];
        let (acc, mean) = if fail {
            (&mut ss_f, &mean_f)
        } else {
            (&mut ss_s, &mean_s)
        };
        for ((a, &v), mu) in acc.iter_mut().zip(row).zip(mean) {
            let dev = v as f64 - mu;
            *a += dev * dev;
        }
    }
    (0..width)
        .map(|j| ColumnMoments {
            mean_fail: mean_f[j],
            mean_succ: mean_s[j],
            var_fail: ss_f[j] / (n_fail - 1) as f64,
            var_succ: ss_s[j] / (n_succ - 1) as f64,
        })
        .collect()
}

fn column_stat(feature_id: usize, mo: &ColumnMoments, n_fail: usize, n_succ: usize, df: u64) -> Result<FeatureStat> {
    let (nf, ns) = (n_fail as f64, n_succ as f64);
    let diff = mo.mean_fail - mo.mean_succ;
    let se = (mo.var_fail / nf + mo.var_succ / ns).sqrt();
    let pooled = (((nf - 1.0) * mo.var_fail + (ns - 1.0) * mo.var_succ) / (nf + ns - 2.0)).sqrt();

    let (t, p_raw, d) = if diff == 0.0 {
        (0.0, 1.0, 0.0)
    } else if se == 0.0 {
        // constant within each class but different between classes
        (diff / SD_FLOOR, f64::MIN_POSITIVE, diff / pooled.max(SD_FLOOR))
    } else {
        let t = diff / se;
        (t, two_sided_t_pvalue(t, df)?, diff / pooled.max(SD_FLOOR))
    };
    Ok(FeatureStat {
        feature_id,
        n_fail,
        n_succ,
        mean_fail: mo.mean_fail,
        mean_succ: mo.mean_succ,
        sd_fail: mo.var_fail.sqrt(),
        sd_succ: mo.var_succ.sqrt(),
        t,
        df,
        p_raw,
        p_holm: p_raw,
        d,
    })
}

/// Computes the discrimination statistics for every column of `m`.
///
/// `success[i]` is the label of row `i`; failures are the rows where it is
/// false. Each class needs at least two rows.
pub fn per_feature_stats(m: &ActivationMatrix, success: &[bool]) -> Result<Vec<FeatureStat>> {
    if success.len() != m.n_rows() {
        return Err(AuditError::Integrity(format!(
            "{} success labels for a matrix with {} rows",
            success.len(),
            m.n_rows()
        )));
    }
    let is_fail: Vec<bool> = success.iter().map(|s| !s).collect();
    let n_fail = is_fail.iter().filter(|&&f| f).count();
    let n_succ = success.len() - n_fail;
    if n_fail == 0 || n_succ == 0 {
        return Err(AuditError::Analysis(format!(
            "all {} trials are {}; the failure-vs-success contrast is undefined",
            success.len(),
            if n_fail == 0 { "successes" } else { "failures" }
        )));
    }
    if n_fail < 2 || n_succ < 2 {
        return Err(AuditError::Analysis(format!(
            "need at least two trials per class for sample SDs, got {n_fail} failures and {n_succ} successes"
        )));
    }
    let df = (n_fail.min(n_succ) - 1) as u64;

    let n_cols = m.n_cols();
    let blocks: Vec<std::ops::Range<usize>> = (0..n_cols)
        .step_by(COLUMN_BLOCK)
        .map(|start| start..(start + COLUMN_BLOCK).min(n_cols))
        .collect();
    let per_block: Vec<Vec<FeatureStat>> = blocks
        .into_par_iter()
        .map(|cols| {
            let start = cols.start;
            block_moments(m, &is_fail, cols, n_fail, n_succ)
                .iter()
                .enumerate()
                .map(|(j, mo)| column_stat(start + j, mo, n_fail, n_succ, df))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut stats: Vec<FeatureStat> = per_block.into_iter().flatten().collect();

    let raw: Vec<f64> = stats.iter().map(|s| s.p_raw).collect();
    for (s, adj) in stats.iter_mut().zip(holm_adjust(&raw)?) {
        s.p_holm = adj;
    }
    Ok(stats)
}

/// Indices into `stats`, ordered by descending |d| with ties broken by
/// ascending feature id.
pub fn rank_by_abs_d(stats: &[FeatureStat]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        stats[b]
            .d
            .abs()
            .total_cmp(&stats[a].d.abs())
            .then(stats[a].feature_id.cmp(&stats[b].feature_id))
    });
    order
}

/// Headline counts over a statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignificanceCounts {
    pub n_features: usize,
    pub holm_significant: usize,
    pub abs_d_above_half: usize,
    pub abs_d_above_large: usize,
    pub significant_and_large: usize,
}

pub const ALPHA: f64 = 0.05;
pub const MEDIUM_EFFECT: f64 = 0.5;
pub const LARGE_EFFECT: f64 = 0.8;

pub fn significance_counts(stats: &[FeatureStat]) -> SignificanceCounts {
    let sig = |s: &&FeatureStat| s.p_holm < ALPHA;
    SignificanceCounts {
        n_features: stats.len(),
        holm_significant: stats.iter().filter(sig).count(),
        abs_d_above_half: stats.iter().filter(|s| s.d.abs() > MEDIUM_EFFECT).count(),
        abs_d_above_large: stats.iter().filter(|s| s.d.abs() > LARGE_EFFECT).count(),
        significant_and_large: stats
            .iter()
            .filter(|s| s.p_holm < ALPHA && s.d.abs() > LARGE_EFFECT)
            .count(),
    }
}
