// SPDX-License-Identifier: MIT OR Apache-2.0

//! Five finished runs whose headline numbers span 79.7-85.7% accuracy and a
//! 75.0-93.3% keys failure rate, with the top feature changing between seeds.

use std::path::{Path, PathBuf};

use failure_audit::corpus::{generate_tasks, render_template, LexiconConfig};
use failure_audit::featurestats::FeatureStat;
use failure_audit::store::{write_feature_stats, write_predictions, write_tasks, PredictionRecord};
use failure_audit::sweep::{aggregate_seed_runs, DEFAULT_STRATUM_OBJECT};
use failure_audit::AuditError;

struct RunSpec {
    seed: u64,
    keys: usize,
    keys_fail: usize,
    successes: usize,
    top: usize,
}

const RUNS: [RunSpec; 5] = [
    RunSpec { seed: 0, keys: 40, keys_fail: 30, successes: 244, top: 7536 },
    RunSpec { seed: 42, keys: 45, keys_fail: 42, successes: 239, top: 17491 },
    RunSpec { seed: 100, keys: 40, keys_fail: 34, successes: 254, top: 7536 },
    RunSpec { seed: 200, keys: 40, keys_fail: 35, successes: 255, top: 10960 },
    RunSpec { seed: 300, keys: 40, keys_fail: 34, successes: 257, top: 19149 },
];

fn stat(feature_id: usize, d: f64) -> FeatureStat {
    FeatureStat {
        feature_id,
        n_fail: 50,
        n_succ: 250,
        mean_fail: 1.0,
        mean_succ: 0.2,
        sd_fail: 1.0,
        sd_succ: 0.5,
        t: 5.0,
        df: 49,
        p_raw: 1e-6,
        p_holm: 1e-4,
        d,
    }
}

fn write_run(root: &Path, spec: &RunSpec) -> PathBuf {
    let lex = LexiconConfig::default();
    let mut tasks = generate_tasks(300, spec.seed, &lex).unwrap();
    // place the stratum on the first `keys` prompts and nowhere else
    for (i, t) in tasks.iter_mut().enumerate() {
        let keys = i < spec.keys;
        if keys != (t.object_phrase == DEFAULT_STRATUM_OBJECT) {
            t.object_phrase = if keys { DEFAULT_STRATUM_OBJECT } else { "a book" }.to_string();
            t.prompt_text = render_template(
                &lex.templates[t.template_id],
                &t.subject_name,
                &t.io_name,
                &t.object_phrase,
                &t.place,
            );
        }
    }
    let other_fail = 300 - spec.successes - spec.keys_fail;
    let preds: Vec<PredictionRecord> = tasks
        .iter()
        .map(|t| {
            let i = t.task_id;
            let fail = if i < spec.keys {
                i < spec.keys_fail
            } else {
                i - spec.keys < other_fail
            };
            let name = if fail { &t.subject_name } else { &t.io_name };
            PredictionRecord {
                task_id: i,
                decoded_text: format!(" {name}"),
                predicted_token: name.clone(),
                success: !fail,
            }
        })
        .collect();
    let dir = root.join(format!("seed_{}", spec.seed));
    std::fs::create_dir_all(&dir).unwrap();
    write_tasks(&tasks, &dir.join("tasks.csv")).unwrap();
    write_predictions(&preds, &dir.join("predictions.csv")).unwrap();
    let stats = vec![stat(3, 0.4), stat(spec.top, 1.9), stat(17491, if spec.top == 17491 { -1.2 } else { 1.1 })];
    write_feature_stats(&stats, &dir.join("feature_stats.csv")).unwrap();
    dir
}

fn round1(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

#[test]
fn five_seed_ranges() {
    let root = tempfile::tempdir().unwrap();
    // deliberately out of seed order
    let dirs: Vec<PathBuf> = RUNS.iter().rev().map(|s| write_run(root.path(), s)).collect();
    let sweep = aggregate_seed_runs(&dirs, DEFAULT_STRATUM_OBJECT).unwrap();

    let seeds: Vec<u64> = sweep.summaries.iter().map(|s| s.seed).collect();
    assert_eq!(seeds, vec![0, 42, 100, 200, 300]);

    let r = &sweep.ranges;
    assert_eq!(
        (round1(r.accuracy.min), round1(r.accuracy.max), round1(r.accuracy.mean), round1(r.accuracy.sd)),
        (79.7, 85.7, 83.3, 2.6)
    );
    assert_eq!(
        (
            round1(r.keys_fail_rate.min),
            round1(r.keys_fail_rate.max),
            round1(r.keys_fail_rate.mean),
            round1(r.keys_fail_rate.sd)
        ),
        (75.0, 93.3, 85.2, 6.6)
    );
    assert_eq!((r.top_feature_mode, r.top_feature_mode_count), (7536, 2));
    let with_17491 = sweep.summaries.iter().filter(|s| s.top_feature_id == 17491).count();
    assert_eq!(with_17491, 1);
    assert_eq!(sweep.summaries[1].top_abs_d, 1.9);
}

#[test]
fn missing_stats_file_names_run() {
    let root = tempfile::tempdir().unwrap();
    let good = write_run(root.path(), &RUNS[0]);
    let bad = write_run(root.path(), &RUNS[1]);
    std::fs::remove_file(bad.join("feature_stats.csv")).unwrap();
    match aggregate_seed_runs(&[good, bad.clone()], DEFAULT_STRATUM_OBJECT) {
        Err(AuditError::Aggregation { dir, file }) => {
            assert_eq!(dir, bad);
            assert_eq!(file, "feature_stats.csv");
        }
        other => panic!("expected an aggregation error, got {other:?}"),
    }
}
