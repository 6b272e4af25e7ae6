// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use failure_audit::contingency::{fisher_exact_two_sided, stratified_failure_rates, ContingencyTable, StratField};
use failure_audit::corpus::{generate_tasks, LexiconConfig};
use failure_audit::featurestats::{per_feature_stats, rank_by_abs_d, FeatureStat};
use failure_audit::predictor::{auc_ladder, default_ladder, top_feature_roc, FitConfig, KSpec, DEFAULT_TOP_K};
use failure_audit::report::{
    ablation_table, feature_by_stratum, render_figures, render_report, render_top_features_doc, ConditionalSection,
    FigureInputs, ReportInputs, SplitSection, StratumFilter, UrlConfig,
};
use failure_audit::store::{
    check_row_alignment, read_ablation, read_auc_report, read_feature_stats, read_matrix, read_predictions,
    read_roc_points, read_seeds_summary, read_subset_report, read_tasks, success_vector, write_ablation,
    write_auc_report, write_feature_stats, write_roc_points, write_seeds_summary, write_subset_report, write_tasks,
    MatrixKind,
};
use failure_audit::sweep::{aggregate_seed_runs, DEFAULT_STRATUM_OBJECT};
use failure_audit::synth::SynthConfig;
use failure_audit::{AuditError, Result};

const DEFAULT_FILTER: &str = "object=the keys";

#[derive(Parser, Debug)]
#[command(name = "failure-audit", version, about = "Failure-vs-success audit of sparse-autoencoder features")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the prompt corpus.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-feature statistics, top features and per-object failure rates.
    Analyze {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        activations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = failure_audit::report::DEFAULT_MODEL_SLUG)]
        model_slug: String,
        #[arg(long, default_value = failure_audit::report::DEFAULT_SAE_SLUG)]
        sae_slug: String,
    },
    /// Failure rates by one field, plus a Fisher test for one value.
    Subset {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        by: StratField,
        #[arg(long)]
        value: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated failure prediction from top-K features and the raw control.
    Predict {
        #[arg(long)]
        activations: PathBuf,
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        /// Precomputed feature_stats.csv; computed on the fly when absent.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TOP_K.to_vec())]
        topk: Vec<usize>,
        #[arg(long)]
        cv_seed: u64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy before and after an ablation, inside and outside a stratum.
    AblationCompare {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        ablated: PathBuf,
        #[arg(long, default_value = DEFAULT_FILTER)]
        filter: String,
        /// Ablated feature id, recorded in the output.
        #[arg(long)]
        feature: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate finished per-seed run directories.
    Seeds {
        #[arg(long, value_delimiter = ',', required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = DEFAULT_STRATUM_OBJECT)]
        stratum: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Markdown report and SVG figures from a results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to <in>/tasks.csv when present.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Defaults to <in>/predictions.csv when present.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Defaults to <in>/activations.npy when present.
        #[arg(long)]
        activations: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_FILTER)]
        filter: String,
        #[arg(long, default_value = failure_audit::report::DEFAULT_MODEL_SLUG)]
        model_slug: String,
        #[arg(long, default_value = failure_audit::report::DEFAULT_SAE_SLUG)]
        sae_slug: String,
    },
    /// Write a synthetic run directory with a planted stratum confound.
    Synth {
        #[arg(long, default_value_t = failure_audit::synth::FIXTURE_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        features: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| AuditError::io(path, e))
}

fn existing(explicit: Option<PathBuf>, fallback: PathBuf) -> Option<PathBuf> {
    explicit.or_else(|| fallback.is_file().then_some(fallback))
}

fn optional<T>(path: PathBuf, read: impl Fn(&Path) -> Result<T>) -> Result<Option<T>> {
    if path.is_file() {
        read(&path).map(Some)
    } else {
        info!("{} not found", path.display());
        Ok(None)
    }
}

fn failure_labels(success: &[bool]) -> Vec<bool> {
    success.iter().map(|&s| !s).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { n, seed, lexicon, out } => {
            let lexicon = match lexicon {
                Some(p) => LexiconConfig::from_file(&p)?,
                None => LexiconConfig::default(),
            };
            let tasks = generate_tasks(n, seed, &lexicon)?;
            create_dir(&out)?;
            write_tasks(&tasks, &out.join("tasks.csv"))?;
            info!("wrote {n} tasks");
        }
        Command::Analyze {
            tasks,
            predictions,
            activations,
            out,
            model_slug,
            sae_slug,
        } => {
            let tasks = read_tasks(&tasks)?;
            let preds = read_predictions(&predictions)?;
            let success = success_vector(&preds)?;
            let sae = read_matrix(&activations, MatrixKind::SaeFeatures)?;
            check_row_alignment(&sae, success.len())?;
            let stats = per_feature_stats(&sae, &success)?;
            let strata = stratified_failure_rates(&tasks, &preds, StratField::Object)?;
            create_dir(&out)?;
            write_feature_stats(&stats, &out.join("feature_stats.csv"))?;
            write_text(
                &out.join("top_features.md"),
                &render_top_features_doc(&stats, &UrlConfig { model_slug, sae_slug }),
            )?;
            write_subset_report(&StratField::Object.to_string(), &strata, &out.join("subset_report.csv"))?;
        }
        Command::Subset {
            tasks,
            predictions,
            by,
            value,
            out,
        } => {
            let tasks = read_tasks(&tasks)?;
            let preds = read_predictions(&predictions)?;
            let rows = stratified_failure_rates(&tasks, &preds, by)?;
            for r in &rows {
                println!("{by}\t{}\t{}/{}\t{:.4}", r.value, r.n_fail, r.n_total, r.rate);
            }
            let table = ContingencyTable::from_split(&tasks, &preds, by, &value)?;
            let fisher = fisher_exact_two_sided(&table)?;
            println!(
                "split {by}={value}: [{}, {}; {}, {}] p={:e} odds_ratio={}",
                table.a, table.b, table.c, table.d, fisher.p, fisher.odds_ratio
            );
            if let Some(out) = out {
                create_dir(&out)?;
                write_subset_report(&by.to_string(), &rows, &out.join("subset_report.csv"))?;
            }
        }
        Command::Predict {
            activations,
            raw,
            predictions,
            stats,
            topk,
            cv_seed,
            c,
            standardize,
            out,
        } => {
            let preds = read_predictions(&predictions)?;
            let success = success_vector(&preds)?;
            let sae = read_matrix(&activations, MatrixKind::SaeFeatures)?;
            check_row_alignment(&sae, success.len())?;
            let raw = raw
                .map(|p| read_matrix(&p, MatrixKind::RawResidual))
                .transpose()?;
            if let Some(r) = &raw {
                check_row_alignment(r, success.len())?;
            }
            let stats: Vec<FeatureStat> = match stats {
                Some(p) => read_feature_stats(&p)?,
                None => per_feature_stats(&sae, &success)?,
            };
            let config = FitConfig {
                c_reg: c,
                standardize,
                ..FitConfig::default()
            };
            let failure = failure_labels(&success);
            let ladder: Vec<KSpec> = default_ladder(&topk, raw.is_some());
            let results = auc_ladder(&sae, raw.as_ref(), &stats, &failure, &ladder, cv_seed, &config)?;
            let roc = top_feature_roc(&sae, &stats, &failure)?;
            create_dir(&out)?;
            write_auc_report(&results, &out.join("auc_report.csv"))?;
            write_roc_points(&roc, &out.join("roc_points.csv"))?;
        }
        Command::AblationCompare {
            tasks,
            baseline,
            ablated,
            filter,
            feature,
            out,
        } => {
            let tasks = read_tasks(&tasks)?;
            let before = read_predictions(&baseline)?;
            let after = read_predictions(&ablated)?;
            let filter = StratumFilter::parse(&filter)?;
            let rows = ablation_table(&tasks, &before, &after, &filter, feature)?;
            for r in &rows {
                println!(
                    "{}\tn={}\t{:.4} -> {:.4}\t{:+.2} pp",
                    r.subset, r.n, r.acc_before, r.acc_after, r.delta_pp
                );
            }
            create_dir(&out)?;
            write_ablation(&rows, &out.join("ablation.csv"))?;
        }
        Command::Seeds { dirs, stratum, out } => {
            let sweep = aggregate_seed_runs(&dirs, &stratum)?;
            create_dir(&out)?;
            write_seeds_summary(&sweep.summaries, &out.join("seeds_summary.csv"))?;
            let r = &sweep.ranges;
            println!(
                "accuracy {:.4}-{:.4}; stratum failure {:.4}-{:.4}; top feature {} in {}/{} seeds",
                r.accuracy.min,
                r.accuracy.max,
                r.keys_fail_rate.min,
                r.keys_fail_rate.max,
                r.top_feature_mode,
                r.top_feature_mode_count,
                sweep.summaries.len()
            );
        }
        Command::Report {
            input,
            tasks,
            predictions,
            activations,
            filter,
            model_slug,
            sae_slug,
        } => report(
            &input,
            existing(tasks, input.join("tasks.csv")),
            existing(predictions, input.join("predictions.csv")),
            existing(activations, input.join("activations.npy")),
            &StratumFilter::parse(&filter)?,
            UrlConfig { model_slug, sae_slug },
        )?,
        Command::Synth { seed, n, features, out } => {
            let cfg = SynthConfig {
                seed,
                n_tasks: n,
                n_features: features,
                ..SynthConfig::default()
            };
            cfg.generate(&LexiconConfig::default())?.write_to(&out)?;
        }
    }
    Ok(())
}

fn report(
    dir: &Path,
    tasks: Option<PathBuf>,
    predictions: Option<PathBuf>,
    activations: Option<PathBuf>,
    filter: &StratumFilter,
    urls: UrlConfig,
) -> Result<()> {
    let stats = read_feature_stats(&dir.join("feature_stats.csv"))?;
    let strata = optional(dir.join("subset_report.csv"), read_subset_report)?
        .filter(|rows| !rows.is_empty())
        .map(|rows| {
            let field = rows[0].0.clone();
            (field, rows.into_iter().map(|(_, r)| r).collect::<Vec<_>>())
        });
    let cv = optional(dir.join("auc_report.csv"), read_auc_report)?.unwrap_or_default();
    let roc = optional(dir.join("roc_points.csv"), read_roc_points)?;
    let seeds = optional(dir.join("seeds_summary.csv"), read_seeds_summary)?.unwrap_or_default();
    let ablation = optional(dir.join("ablation.csv"), read_ablation)?.unwrap_or_default();

    let tasks = tasks.map(|p| read_tasks(&p)).transpose()?;
    let preds = predictions.map(|p| read_predictions(&p)).transpose()?;
    let sae = activations
        .map(|p| read_matrix(&p, MatrixKind::SaeFeatures))
        .transpose()?;

    let mut split = None;
    let mut conditional = None;
    let mut distribution = None;
    if let (Some(tasks), Some(preds)) = (&tasks, &preds) {
        split = Some(SplitSection::compute(tasks, preds, filter)?);
        if let Some(sae) = &sae {
            conditional = Some(ConditionalSection::compute(tasks, preds, sae, filter)?.0);
        }
    }
    if let (Some(tasks), Some(sae)) = (&tasks, &sae) {
        let top = stats[rank_by_abs_d(&stats)[0]].feature_id;
        distribution = Some((
            top,
            feature_by_stratum(tasks, sae, top, filter.field)?,
            Some(filter.value.clone()),
        ));
    }

    let md = render_report(&ReportInputs {
        stats: &stats,
        urls,
        strata: strata.clone(),
        split,
        cv: &cv,
        seeds: &seeds,
        ablation: &ablation,
        conditional,
    })?;
    write_text(&dir.join("report.md"), &md)?;

    let highlight = strata
        .as_ref()
        .filter(|(field, _)| *field == filter.field.to_string())
        .map(|_| filter.value.clone());
    render_figures(
        &FigureInputs {
            stats: Some(&stats),
            distribution,
            strata: strata.map(|(f, rows)| (f, rows, highlight)),
            ablation: &ablation,
            cv: &cv,
            roc: roc.as_deref(),
            seeds: &seeds,
        },
        &dir.join("figures"),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ AuditError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
