// SPDX-License-Identifier: MIT OR Apache-2.0

//! Markdown audit report, the ablation comparison and the figure set.

pub mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::contingency::{
    aligned_success, fisher_exact_two_sided, ContingencyTable, FisherResult, StratField, StratumRate,
};
use crate::corpus::TaskRecord;
use crate::error::{AuditError, Result};
use crate::featurestats::{per_feature_stats, rank_by_abs_d, significance_counts, FeatureStat, SignificanceCounts};
use crate::predictor::{roc_auc, CvResult, KSpec, RocPoint};
use crate::store::{ActivationMatrix, PredictionRecord};
use crate::sweep::{ranges_of, SeedSummary};

pub const DEFAULT_MODEL_SLUG: &str = "gpt2-small";
pub const DEFAULT_SAE_SLUG: &str = "8-res-jb";
pub const TOP_N: usize = 20;
/// Adjusted p-values below this are displayed as `<1e-10`.
pub const DISPLAY_P_FLOOR: f64 = 1e-10;

/// Neuronpedia model and SAE path segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlConfig {
    pub model_slug: String,
    pub sae_slug: String,
}

impl Default for UrlConfig {
    fn default() -> Self {
        UrlConfig {
            model_slug: DEFAULT_MODEL_SLUG.into(),
            sae_slug: DEFAULT_SAE_SLUG.into(),
        }
    }
}

pub fn neuronpedia_url(model_slug: &str, sae_slug: &str, feature_id: usize) -> String {
    format!("https://neuronpedia.org/{model_slug}/{sae_slug}/{feature_id}")
}

/// `<1e-10` below the display floor, otherwise three significant digits.
pub fn format_p(p: f64) -> String {
    if p < DISPLAY_P_FLOOR {
        "<1e-10".into()
    } else if p >= 0.001 {
        format!("{p:.3}")
    } else {
        format!("{p:.2e}")
    }
}

/// A `field=value` stratum selector, e.g. `object="the keys"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumFilter {
    pub field: StratField,
    pub value: String,
}

impl StratumFilter {
    pub fn parse(spec: &str) -> Result<Self> {
        let (field, value) = spec.split_once('=').ok_or_else(|| {
            AuditError::Config(format!("filter {spec:?} is not of the form field=value"))
        })?;
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        Ok(StratumFilter {
            field: field.trim().parse()?,
            value: value.to_string(),
        })
    }

    pub fn matches(&self, task: &TaskRecord) -> bool {
        self.field.value_of(task) == self.value
    }

    pub fn label(&self) -> String {
        format!("{}={}", self.field, self.value)
    }
}

/// Accuracy on one subset before and after an intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSummary {
    pub subset: String,
    pub n: usize,
    pub acc_before: f64,
    pub acc_after: f64,
    /// `(acc_after - acc_before) * 100`.
    pub delta_pp: f64,
    pub feature: Option<usize>,
}

/// Which rows of the corpus a comparison covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset<'a> {
    All,
    Inside(&'a StratumFilter),
    Outside(&'a StratumFilter),
}

/// Compares two prediction sheets over the same tasks on one subset.
pub fn ablation_compare(
    tasks: &[TaskRecord],
    baseline: &[PredictionRecord],
    ablated: &[PredictionRecord],
    subset: Subset<'_>,
) -> Result<AblationSummary> {
    let before = aligned_success(tasks, baseline)?;
    let after = aligned_success(tasks, ablated)?;
    let mut base_ids: Vec<usize> = baseline.iter().map(|p| p.task_id).collect();
    let mut abl_ids: Vec<usize> = ablated.iter().map(|p| p.task_id).collect();
    base_ids.sort_unstable();
    abl_ids.sort_unstable();
    if base_ids != abl_ids {
        return Err(AuditError::Integrity(
            "baseline and ablated sheets cover different task ids".into(),
        ));
    }
    let keep: Vec<usize> = tasks
        .iter()
        .filter(|t| match subset {
            Subset::All => true,
            Subset::Inside(f) => f.matches(t),
            Subset::Outside(f) => !f.matches(t),
        })
        .map(|t| t.task_id)
        .collect();
    let n = keep.len();
    let acc = |labels: &[bool]| {
        if n == 0 {
            0.0
        } else {
            keep.iter().filter(|&&i| labels[i]).count() as f64 / n as f64
        }
    };
    let (acc_before, acc_after) = (acc(&before), acc(&after));
    let subset = match subset {
        Subset::All => "all".to_string(),
        Subset::Inside(f) => f.label(),
        Subset::Outside(f) => format!("{}!={}", f.field, f.value),
    };
    Ok(AblationSummary {
        subset,
        n,
        acc_before,
        acc_after,
        delta_pp: (acc_after - acc_before) * 100.0,
        feature: None,
    })
}

/// Inside, outside and whole-corpus comparisons for one filter.
pub fn ablation_table(
    tasks: &[TaskRecord],
    baseline: &[PredictionRecord],
    ablated: &[PredictionRecord],
    filter: &StratumFilter,
    feature: Option<usize>,
) -> Result<Vec<AblationSummary>> {
    [Subset::Inside(filter), Subset::Outside(filter), Subset::All]
        .into_iter()
        .map(|s| {
            ablation_compare(tasks, baseline, ablated, s).map(|mut a| {
                a.feature = feature;
                a
            })
        })
        .collect()
}

/// Stratum split with its Fisher test.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSection {
    pub filter: StratumFilter,
    pub table: ContingencyTable,
    pub fisher: FisherResult,
}

impl SplitSection {
    pub fn compute(tasks: &[TaskRecord], preds: &[PredictionRecord], filter: &StratumFilter) -> Result<Self> {
        let table = ContingencyTable::from_split(tasks, preds, filter.field, &filter.value)?;
        let fisher = fisher_exact_two_sided(&table)?;
        Ok(SplitSection {
            filter: filter.clone(),
            table,
            fisher,
        })
    }
}

/// Feature statistics recomputed with one stratum removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSection {
    pub excluded: StratumFilter,
    pub n_fail: usize,
    pub n_succ: usize,
    pub counts: SignificanceCounts,
    /// Feature id and signed d of the largest |d|.
    pub top: (usize, f64),
}

impl ConditionalSection {
    pub fn compute(tasks: &[TaskRecord], preds: &[PredictionRecord], sae: &ActivationMatrix, excluded: &StratumFilter) -> Result<(Self, Vec<FeatureStat>)> {
        let success = aligned_success(tasks, preds)?;
        crate::store::check_row_alignment(sae, success.len())?;
        let rows: Vec<usize> = tasks
            .iter()
            .filter(|t| !excluded.matches(t))
            .map(|t| t.task_id)
            .collect();
        let sub = sae.select_rows(&rows);
        let labels: Vec<bool> = rows.iter().map(|&r| success[r]).collect();
        let stats = per_feature_stats(&sub, &labels)?;
        let top = &stats[rank_by_abs_d(&stats)[0]];
        let n_fail = labels.iter().filter(|&&s| !s).count();
        Ok((
            ConditionalSection {
                excluded: excluded.clone(),
                n_fail,
                n_succ: labels.len() - n_fail,
                counts: significance_counts(&stats),
                top: (top.feature_id, top.d),
            },
            stats,
        ))
    }
}

/// Everything the markdown report can show; absent parts render as "not run".
#[derive(Debug, Clone, Default)]
pub struct ReportInputs<'a> {
    pub stats: &'a [FeatureStat],
    pub urls: UrlConfig,
    pub strata: Option<(String, Vec<StratumRate>)>,
    pub split: Option<SplitSection>,
    pub cv: &'a [CvResult],
    pub seeds: &'a [SeedSummary],
    pub ablation: &'a [AblationSummary],
    pub conditional: Option<ConditionalSection>,
}

/// Top features by |d| as a markdown table with Neuronpedia links.
pub fn render_top_features(stats: &[FeatureStat], n: usize, urls: &UrlConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| # | feature | d | mean_fail | mean_succ | t | p_holm | Neuronpedia |");
    let _ = writeln!(out, "|---:|---:|---:|---:|---:|---:|---:|---|");
    for (rank, &i) in rank_by_abs_d(stats).iter().take(n).enumerate() {
        let s = &stats[i];
        let url = neuronpedia_url(&urls.model_slug, &urls.sae_slug, s.feature_id);
        let _ = writeln!(
            out,
            "| {} | {} | {:+.2} | {:.3} | {:.3} | {:.2} | {} | <{url}> |",
            rank + 1,
            s.feature_id,
            s.d,
            s.mean_fail,
            s.mean_succ,
            s.t,
            format_p(s.p_holm),
        );
    }
    out
}

/// Standalone `top_features.md`.
pub fn render_top_features_doc(stats: &[FeatureStat], urls: &UrlConfig) -> String {
    let mut out = format!("# Top {TOP_N} features by |Cohen's d|\n\n");
    out.push_str(&render_top_features(stats, TOP_N, urls));
    out
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Assembles the full audit report.
pub fn render_report(inp: &ReportInputs<'_>) -> Result<String> {
    if inp.stats.is_empty() {
        return Err(AuditError::Analysis("report needs a non-empty statistics table".into()));
    }
    let stats = inp.stats;
    let counts = significance_counts(stats);
    let (n_fail, n_succ) = (stats[0].n_fail, stats[0].n_succ);
    let n = n_fail + n_succ;
    let mut md = String::new();

    let _ = writeln!(md, "# Failure audit report\n");
    let _ = writeln!(md, "## Headline\n");
    let _ = writeln!(
        md,
        "- Accuracy: {n_succ}/{n} = {} ({n_fail} failed trials, {n_succ} successful)",
        pct(n_succ as f64 / n as f64)
    );
    let _ = writeln!(md, "- Features tested: {}", counts.n_features);
    let _ = writeln!(
        md,
        "- Holm-significant at alpha = 0.05: {}",
        counts.holm_significant
    );
    let _ = writeln!(md, "- |d| > 0.5: {}", counts.abs_d_above_half);
    let _ = writeln!(md, "- |d| > 0.8: {}", counts.abs_d_above_large);
    let _ = writeln!(
        md,
        "- Holm-significant and |d| > 0.8: {}\n",
        counts.significant_and_large
    );

    let _ = writeln!(md, "## Top {TOP_N} features by |d|\n");
    md.push_str(&render_top_features(stats, TOP_N, &inp.urls));
    md.push('\n');

    let _ = writeln!(md, "## Stratified failure rates\n");
    match &inp.strata {
        Some((field, rows)) => {
            let _ = writeln!(md, "| {field} | failed | total | rate |");
            let _ = writeln!(md, "|---|---:|---:|---:|");
            for r in rows {
                let _ = writeln!(md, "| {} | {} | {} | {} |", r.value, r.n_fail, r.n_total, pct(r.rate));
            }
            md.push('\n');
        }
        None => md.push_str("not run\n\n"),
    }

    let _ = writeln!(md, "## Stratum split\n");
    match &inp.split {
        Some(s) => {
            let t = &s.table;
            let inside = t.a + t.b;
            let outside = t.c + t.d;
            let _ = writeln!(
                md,
                "- {}: {}/{} failed ({})",
                s.filter.label(),
                t.a,
                inside,
                pct(t.a as f64 / inside as f64)
            );
            let _ = writeln!(
                md,
                "- elsewhere: {}/{} failed ({})",
                t.c,
                outside,
                pct(t.c as f64 / outside as f64)
            );
            let or = if s.fisher.odds_ratio.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.2}", s.fisher.odds_ratio)
            };
            let _ = writeln!(
                md,
                "- Fisher exact (two-sided): p = {:.3e}, odds ratio = {or}\n",
                s.fisher.p
            );
        }
        None => md.push_str("not run\n\n"),
    }

    let _ = writeln!(md, "## Failure prediction (5-fold stratified ROC AUC)\n");
    if inp.cv.is_empty() {
        md.push_str("not run\n\n");
    } else {
        let _ = writeln!(md, "| representation | k | mean AUC | std AUC |");
        let _ = writeln!(md, "|---|---:|---:|---:|");
        for r in inp.cv {
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} | {:.3} |",
                r.representation_label, r.k, r.mean_auc, r.std_auc
            );
        }
        md.push('\n');
    }

    let _ = writeln!(md, "## Ablation\n");
    if inp.ablation.is_empty() {
        md.push_str("not run\n\n");
    } else {
        if let Some(f) = inp.ablation.iter().find_map(|a| a.feature) {
            let _ = writeln!(md, "Ablated feature: {f}\n");
        }
        let _ = writeln!(md, "| subset | n | accuracy before | accuracy after | delta (pp) |");
        let _ = writeln!(md, "|---|---:|---:|---:|---:|");
        for a in inp.ablation {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:+.1} |",
                a.subset,
                a.n,
                pct(a.acc_before),
                pct(a.acc_after),
                a.delta_pp
            );
        }
        md.push('\n');
    }

    let _ = writeln!(md, "## Seed robustness\n");
    if inp.seeds.is_empty() {
        md.push_str("not run\n\n");
    } else {
        let _ = writeln!(md, "| seed | accuracy | stratum failure rate | top feature | top abs d |");
        let _ = writeln!(md, "|---:|---:|---:|---:|---:|");
        for s in inp.seeds {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:.2} |",
                s.seed,
                pct(s.accuracy),
                pct(s.keys_fail_rate),
                s.top_feature_id,
                s.top_abs_d
            );
        }
        let r = ranges_of(inp.seeds);
        let _ = writeln!(
            md,
            "\n- Accuracy range {}–{} (mean {}, sd {:.1} pp)",
            pct(r.accuracy.min),
            pct(r.accuracy.max),
            pct(r.accuracy.mean),
            r.accuracy.sd * 100.0
        );
        let _ = writeln!(
            md,
            "- Stratum failure range {}–{} (mean {}, sd {:.1} pp)",
            pct(r.keys_fail_rate.min),
            pct(r.keys_fail_rate.max),
            pct(r.keys_fail_rate.mean),
            r.keys_fail_rate.sd * 100.0
        );
        let _ = writeln!(
            md,
            "- Modal top feature {} is top in {} of {} seeds\n",
            r.top_feature_mode,
            r.top_feature_mode_count,
            inp.seeds.len()
        );
    }

    let _ = writeln!(md, "## Conditional re-analysis\n");
    match &inp.conditional {
        Some(c) => {
            let _ = writeln!(
                md,
                "Excluding {} ({} failed, {} successful trials remain):\n",
                c.excluded.label(),
                c.n_fail,
                c.n_succ
            );
            let _ = writeln!(md, "- Holm-significant: {}", c.counts.holm_significant);
            let _ = writeln!(md, "- Largest effect: feature {} with d = {:+.2}", c.top.0, c.top.1);
            let _ = writeln!(md, "- |d| > 0.8: {}", c.counts.abs_d_above_large);
            let _ = writeln!(md, "- |d| > 0.5: {}\n", c.counts.abs_d_above_half);
        }
        None => md.push_str("not run\n"),
    }
    Ok(md)
}

/// Feature id, its per-stratum activations and the highlighted stratum.
pub type StratumDistribution = (usize, Vec<(String, Vec<f64>)>, Option<String>);

/// Inputs for the figure set; each figure is emitted only when its inputs exist.
#[derive(Debug, Clone, Default)]
pub struct FigureInputs<'a> {
    pub stats: Option<&'a [FeatureStat]>,
    pub distribution: Option<StratumDistribution>,
    pub strata: Option<(String, Vec<StratumRate>, Option<String>)>,
    pub ablation: &'a [AblationSummary],
    pub cv: &'a [CvResult],
    pub roc: Option<&'a [RocPoint]>,
    pub seeds: &'a [SeedSummary],
}

pub const FIGURE_NAMES: [&str; 7] = [
    "volcano.svg",
    "feature_by_stratum.svg",
    "failure_rate.svg",
    "ablation.svg",
    "auc_bars.svg",
    "roc.svg",
    "multi_seed.svg",
];

fn render_one(name: &str, inp: &FigureInputs<'_>) -> Option<String> {
    let top_feature = inp
        .stats
        .filter(|s| !s.is_empty())
        .map(|s| s[rank_by_abs_d(s)[0]].feature_id);
    match name {
        "volcano.svg" => inp.stats.map(|s| svg::volcano(s, top_feature)),
        "feature_by_stratum.svg" => inp
            .distribution
            .as_ref()
            .map(|(f, groups, hl)| svg::stratum_distribution(*f, groups, hl.as_deref())),
        "failure_rate.svg" => inp
            .strata
            .as_ref()
            .map(|(field, rows, hl)| svg::failure_rate_bars(field, rows, hl.as_deref())),
        "ablation.svg" => (!inp.ablation.is_empty()).then(|| svg::ablation_bars(inp.ablation)),
        "auc_bars.svg" => (!inp.cv.is_empty()).then(|| svg::auc_bars(inp.cv)),
        "roc.svg" => inp.roc.map(|pts| {
            let area: f64 = pts
                .windows(2)
                .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
                .sum();
            svg::roc(pts, Some(area), top_feature)
        }),
        "multi_seed.svg" => (!inp.seeds.is_empty()).then(|| svg::multi_seed(inp.seeds, top_feature)),
        _ => None,
    }
}

/// Writes every figure whose inputs are present into `dir`; returns the paths written.
pub fn render_figures(inp: &FigureInputs<'_>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    let rendered: Vec<(&str, Option<String>)> = FIGURE_NAMES
        .par_iter()
        .map(|&name| (name, render_one(name, inp)))
        .collect();
    let mut written = Vec::new();
    for (name, body) in rendered {
        match body {
            Some(svg) => {
                let path = dir.join(name);
                std::fs::write(&path, svg).map_err(|e| AuditError::io(&path, e))?;
                written.push(path);
            }
            None => info!("skipping {name}: inputs not available"),
        }
    }
    Ok(written)
}

/// Per-stratum activation values of one feature.
pub fn feature_by_stratum(tasks: &[TaskRecord], sae: &ActivationMatrix, feature: usize, field: StratField) -> Result<Vec<(String, Vec<f64>)>> {
    crate::store::check_row_alignment(sae, tasks.len())?;
    if feature >= sae.n_cols() {
        return Err(AuditError::Domain(format!(
            "feature {feature} outside a matrix of {} columns",
            sae.n_cols()
        )));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for t in tasks {
        let key = field.value_of(t);
        let v = sae.get(t.task_id, feature) as f64;
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, vals)) => vals.push(v),
            None => groups.push((key, vec![v])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(groups)
}

/// AUC of a single feature's raw activation as a failure score.
pub fn single_feature_auc(sae: &ActivationMatrix, feature: usize, failure: &[bool]) -> Result<f64> {
    let scores: Vec<f64> = sae.column(feature).iter().map(|&v| v as f64).collect();
    roc_auc(&scores, failure)
}

/// Whether a representation label refers to the raw matrix.
pub fn is_raw(r: &CvResult) -> bool {
    r.k == KSpec::Raw
}
