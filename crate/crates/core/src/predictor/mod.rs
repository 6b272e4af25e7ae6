// SPDX-License-Identifier: MIT OR Apache-2.0

//! Failure-prediction baselines: top-K feature selection by |d|, the
//! class-balanced logistic model, stratified 5-fold ROC AUC and the raw
//! representation control.
//!
//! Top-K sets are ranked once on full-corpus statistics and then held fixed
//! across folds, so the selection step sees held-out labels. This matches a
//! single fixed feature set per K; fold-internal ranking is not offered.

mod auc;
mod logistic;

pub use auc::{roc_auc, roc_curve, RocPoint};
pub use logistic::{class_weights, fit_logistic, gradient, objective, Design, FitConfig, LogisticModel};

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{AuditError, Result};
use crate::featurestats::{rank_by_abs_d, FeatureStat};
use crate::store::ActivationMatrix;

pub const N_FOLDS: usize = 5;

/// Default K sweep; `All` and `Raw` rows are added by [`default_ladder`].
pub const DEFAULT_TOP_K: [usize; 6] = [1, 5, 10, 20, 50, 100];

/// Which representation a cross-validation row was fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KSpec {
    Top(usize),
    All,
    Raw,
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Top(k) => write!(f, "{k}"),
            KSpec::All => f.write_str("all"),
            KSpec::Raw => f.write_str("raw"),
        }
    }
}

impl FromStr for KSpec {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(KSpec::All),
            "raw" => Ok(KSpec::Raw),
            other => match other.parse::<usize>() {
                Ok(k) if k > 0 => Ok(KSpec::Top(k)),
                _ => Err(AuditError::Config(format!(
                    "bad K value {other:?}; expected a positive integer, `all` or `raw`"
                ))),
            },
        }
    }
}

impl KSpec {
    pub fn label(&self) -> String {
        match self {
            KSpec::Top(k) => format!("sae_top_{k}"),
            KSpec::All => "sae_all".into(),
            KSpec::Raw => "raw_residual".into(),
        }
    }
}

/// Cross-validated AUC for one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub representation_label: String,
    pub k: KSpec,
    pub fold_aucs: [f64; N_FOLDS],
    pub mean_auc: f64,
    /// Population SD over folds.
    pub std_auc: f64,
}

impl CvResult {
    pub fn from_folds(label: String, k: KSpec, fold_aucs: [f64; N_FOLDS]) -> Self {
        let n = N_FOLDS as f64;
        let mean_auc = fold_aucs.iter().sum::<f64>() / n;
        let std_auc = (fold_aucs.iter().map(|a| (a - mean_auc).powi(2)).sum::<f64>() / n).sqrt();
        CvResult {
            representation_label: label,
            k,
            fold_aucs,
            mean_auc,
            std_auc,
        }
    }
}

/// Feature ids of the `k` largest |d|, ties broken by ascending id.
pub fn select_top_k(stats: &[FeatureStat], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > stats.len() {
        return Err(AuditError::Domain(format!(
            "cannot select top {k} of {} features",
            stats.len()
        )));
    }
    Ok(rank_by_abs_d(stats)
        .into_iter()
        .take(k)
        .map(|i| stats[i].feature_id)
        .collect())
}

/// Converts (a column subset of) an activation matrix to a float64 design.
pub fn design_from_matrix(m: &ActivationMatrix, columns: Option<&[usize]>) -> Result<Design> {
    let data: Vec<f64> = match columns {
        None => m.data().iter().map(|&v| v as f64).collect(),
        Some(cols) => {
            if let Some(&c) = cols.iter().find(|&&c| c >= m.n_cols()) {
                return Err(AuditError::Domain(format!(
                    "feature {c} outside a matrix of {} columns",
                    m.n_cols()
                )));
            }
            (0..m.n_rows())
                .flat_map(|r| {
                    let row = m.row(r);
                    cols.iter().map(move |&c| row[c] as f64)
                })
                .collect()
        }
    };
    let n_cols = columns.map_or(m.n_cols(), <[usize]>::len);
    Design::new(m.n_rows(), n_cols, data)
}

/// Stratified fold index per sample.
///
/// Each class's indices are shuffled with a ChaCha8 stream seeded from
/// `seed` (positives first, then negatives) and dealt round-robin to folds.
pub fn stratified_folds(labels: &[bool], n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_folds < 2 {
        return Err(AuditError::Stratification(format!(
            "need at least two folds, got {n_folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < n_folds {
            return Err(AuditError::Stratification(format!(
                "class {} has {} samples, fewer than {n_folds} folds",
                u8::from(class),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos % n_folds;
        }
    }
    Ok(folds)
}

/// Stratified 5-fold cross-validated ROC AUC of the logistic model.
/// `y[i] == true` marks the positive (failure) class.
pub fn cv_auc(x: &Design, y: &[bool], k: KSpec, shuffle_seed: u64, config: &FitConfig) -> Result<CvResult> {
    if x.n_rows() != y.len() {
        return Err(AuditError::Integrity(format!(
            "{} design rows for {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    let folds = stratified_folds(y, N_FOLDS, shuffle_seed)?;
    let aucs = (0..N_FOLDS)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..y.len()).partition(|&i| folds[i] == fold);
            let mut x_train = x.select_rows(&train);
            let mut x_test = x.select_rows(&test);
            if config.standardize {
                let (mean, sd) = x_train.column_moments();
                x_train = x_train.standardized(&mean, &sd);
                x_test = x_test.standardized(&mean, &sd);
            }
            let y_train: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<bool> = test.iter().map(|&i| y[i]).collect();
            let model = fit_logistic(&x_train, &y_train, config)?;
            if !model.converged {
                warn!(
                    "{} fold {}: solver stopped at gradient norm {:.3e}",
                    k.label(),
                    fold + 1,
                    model.final_gradient_norm
                );
            }
            roc_auc(&model.decision_function(&x_test), &y_test)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut fold_aucs = [0.0; N_FOLDS];
    fold_aucs.copy_from_slice(&aucs);
    Ok(CvResult::from_folds(k.label(), k, fold_aucs))
}

/// The standard representation sweep: each K in `top_k`, then all SAE
/// features, then the raw matrix when given.
pub fn default_ladder(top_k: &[usize], with_raw: bool) -> Vec<KSpec> {
    let mut ladder: Vec<KSpec> = top_k.iter().map(|&k| KSpec::Top(k)).collect();
    ladder.push(KSpec::All);
    if with_raw {
        ladder.push(KSpec::Raw);
    }
    ladder
}

/// Runs [`cv_auc`] for every representation in `ladder`.
///
/// K values larger than the feature count are skipped with a warning.
pub fn auc_ladder(
    sae: &ActivationMatrix,
    raw: Option<&ActivationMatrix>,
    stats: &[FeatureStat],
    failure: &[bool],
    ladder: &[KSpec],
    cv_seed: u64,
    config: &FitConfig,
) -> Result<Vec<CvResult>> {
    let mut out = Vec::with_capacity(ladder.len());
    for &k in ladder {
        let design = match k {
            KSpec::Top(n) if n > stats.len() => {
                warn!("skipping top-{n}: only {} features", stats.len());
                continue;
            }
            KSpec::Top(n) => design_from_matrix(sae, Some(&select_top_k(stats, n)?))?,
            KSpec::All => design_from_matrix(sae, None)?,
            KSpec::Raw => match raw {
                Some(r) => design_from_matrix(r, None)?,
                None => continue,
            },
        };
        out.push(cv_auc(&design, failure, k, cv_seed, config)?);
    }
    Ok(out)
}

/// ROC curve of the single top-|d| feature used directly as a failure score.
pub fn top_feature_roc(sae: &ActivationMatrix, stats: &[FeatureStat], failure: &[bool]) -> Result<Vec<RocPoint>> {
    let top = select_top_k(stats, 1)?[0];
    let stat = stats
        .iter()
        .find(|s| s.feature_id == top)
        .expect("selected from stats");
    let sign = if stat.d < 0.0 { -1.0 } else { 1.0 };
    let scores: Vec<f64> = sae.column(top).iter().map(|&v| sign * v as f64).collect();
    roc_curve(&scores, failure)
}
