// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance checks for the analysis toolkit, one line per criterion.
//!
//! Runs without the libtest harness so each PASS/FAIL line is always shown.
//! Exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use failure_audit::contingency::{fisher_exact_two_sided, ContingencyTable};
use failure_audit::corpus::LexiconConfig;
use failure_audit::featurestats::{holm_adjust, per_feature_stats, two_sided_t_pvalue, FeatureStat, SD_FLOOR};
use failure_audit::predictor::{
    cv_auc, design_from_matrix, fit_logistic, roc_auc, select_top_k, stratified_folds, Design, FitConfig, KSpec,
    DEFAULT_TOP_K, N_FOLDS,
};
use failure_audit::store::{success_vector, ActivationMatrix, MatrixKind};
use failure_audit::synth::SynthConfig;
use failure_audit::AuditError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

// ---------------------------------------------------------------------------
// Student-t oracle: composite Gauss-Legendre quadrature of the density.

/// `Γ((ν+1)/2) / Γ(ν/2)` for integer ν by the two-step recursion.
fn gamma_ratio(df: u64) -> f64 {
    let mut r = if df % 2 == 1 { 1.0 / std::f64::consts::PI.sqrt() } else { std::f64::consts::PI.sqrt() / 2.0 };
    let mut nu = if df % 2 == 1 { 1 } else { 2 };
    while nu < df {
        r *= (nu as f64 + 1.0) / nu as f64;
        nu += 2;
    }
    r
}

fn t_density(x: f64, df: u64, norm: f64) -> f64 {
    let nu = df as f64;
    norm * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0)
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    let w = 2.0 / ((1.0 - x * x) * dp * dp);
                    return (x, w);
                }
            }
        })
        .collect()
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let pieces = 96;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * h;
            rule.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Two-sided p by quadrature: the centre mass for |t| <= 1, otherwise the
/// tail directly (substituting x = |t|/u so the range is finite).
fn oracle_t_pvalue(t: f64, df: u64) -> f64 {
    thread_local! {
        static RULE: Vec<(f64, f64)> = gauss_legendre(20);
    }
    let norm = gamma_ratio(df) / ((df as f64) * std::f64::consts::PI).sqrt();
    let at = t.abs();
    RULE.with(|rule| {
        if at <= 1.0 {
            1.0 - 2.0 * integrate(|x| t_density(x, df, norm), 0.0, at, rule)
        } else {
            2.0 * integrate(|u| t_density(at / u, df, norm) * at / (u * u), 0.0, 1.0, rule)
        }
    })
}

// ---------------------------------------------------------------------------
// Naive per-feature reference.

struct NaiveStat {
    mean_f: f64,
    mean_s: f64,
    sd_f: f64,
    sd_s: f64,
    t: f64,
    df: u64,
    p: f64,
    d: f64,
}

fn naive_column(fail: &[f64], succ: &[f64]) -> NaiveStat {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    let (nf, ns) = (fail.len() as f64, succ.len() as f64);
    let (mf, ms) = (mean(fail), mean(succ));
    let (vf, vs) = (var(fail, mf), var(succ, ms));
    let df = (fail.len().min(succ.len()) - 1) as u64;
    let pooled = (((nf - 1.0) * vf + (ns - 1.0) * vs) / (nf + ns - 2.0)).sqrt();
    let se = (vf / nf + vs / ns).sqrt();
    let diff = mf - ms;
    let (t, p, d) = if diff == 0.0 {
        (0.0, 1.0, 0.0)
    } else if se == 0.0 {
        (diff / SD_FLOOR, f64::MIN_POSITIVE, diff / pooled.max(SD_FLOOR))
    } else {
        let t = diff / se;
        (t, oracle_t_pvalue(t, df), diff / pooled)
    };
    NaiveStat {
        mean_f: mf,
        mean_s: ms,
        sd_f: vf.sqrt(),
        sd_s: vs.sqrt(),
        t,
        df,
        p,
        d,
    }
}

/// Holm by its definition: the adjusted value of the k-th smallest p is the
/// largest `min(1, (m - j) p_(j))` over ranks j <= k.
fn naive_holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    for (k, &idx) in order.iter().enumerate() {
        out[idx] = (0..=k)
            .map(|j| ((m - j) as f64 * p[order[j]]).min(1.0))
            .fold(0.0, f64::max);
    }
    out
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (rows, cols) = (50, 20);
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f32>() * 5.0 })
            .collect();
        let n_fail = rng.random_range(8..=25);
        let mut labels: Vec<bool> = (0..rows).map(|i| i >= n_fail).collect();
        for i in (1..rows).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let m = ActivationMatrix::new(rows, cols, data.clone(), MatrixKind::SaeFeatures).map_err(|e| e.to_string())?;
        let stats = per_feature_stats(&m, &labels).map_err(|e| e.to_string())?;
        let naive: Vec<NaiveStat> = (0..cols)
            .map(|c| {
                let col = |want: bool| -> Vec<f64> {
                    (0..rows).filter(|&r| labels[r] == want).map(|r| data[r * cols + c] as f64).collect()
                };
                naive_column(&col(false), &col(true))
            })
            .collect();
        let holm = naive_holm(&naive.iter().map(|s| s.p).collect::<Vec<_>>());
        for (c, (s, n)) in stats.iter().zip(&naive).enumerate() {
            if s.df != n.df || s.feature_id != c {
                return Err(format!("feature {c}: df {} vs {}", s.df, n.df));
            }
            let fields = [
                (s.mean_fail, n.mean_f),
                (s.mean_succ, n.mean_s),
                (s.sd_fail, n.sd_f),
                (s.sd_succ, n.sd_s),
                (s.t, n.t),
                (s.p_raw, n.p),
                (s.p_holm, holm[c]),
                (s.d, n.d),
            ];
            for (a, b) in fields {
                worst = worst.max(rel_err(a, b));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if worst > 1e-9 {
        Err(format!("max relative error {worst:.2e} > 1e-9"))
    } else if secs >= 5.0 {
        Err(format!("took {secs:.2} s (limit 5 s)"))
    } else {
        Ok(format!("100 matrices, max relative error {worst:.1e}, {secs:.2} s"))
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let grid = [0.0, 1e-4, 0.001, 0.01, 0.0125, 0.0167, 0.02, 0.025, 0.04, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0];
    let mut lists = 0usize;
    for len in 1..=4u32 {
        for code in 0..grid.len().pow(len) {
            let mut c = code;
            let p: Vec<f64> = (0..len)
                .map(|_| {
                    let v = grid[c % grid.len()];
                    c /= grid.len();
                    v
                })
                .collect();
            let got = holm_adjust(&p).map_err(|e| e.to_string())?;
            let want = naive_holm(&p);
            if got != want {
                return Err(format!("{p:?}: {got:?} vs {want:?}"));
            }
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
            if order.windows(2).any(|w| got[w[0]] > got[w[1]]) {
                return Err(format!("{p:?}: adjusted values not monotone"));
            }
            lists += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 1.0 {
        return Err(format!("took {secs:.2} s (limit 1 s)"));
    }
    Ok(format!("{lists} p-lists of length 1-4 match, {secs:.3} s"))
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn brute_fisher(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let weight = |x: u64| binom(r1, x) * binom(r2, c1 - x);
    let observed = weight(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let num: u128 = (lo..=hi).map(weight).filter(|&w| w <= observed).sum();
    num as f64 / binom(r1 + r2, c1) as f64
}

fn criterion_3() -> Outcome {
    let keys = fisher_exact_two_sided(&ContingencyTable::new(42, 3, 19, 236)).map_err(|e| e.to_string())?;
    let p_rel = (keys.p - 8.79e-33).abs() / 8.79e-33;
    if p_rel > 0.05 || (keys.odds_ratio - 173.89).abs() > 0.01 {
        return Err(format!("keys table p = {:.4e}, OR = {:.4}", keys.p, keys.odds_ratio));
    }
    let mut tables = 0usize;
    let mut worst = 0.0f64;
    for total in 0..=40u64 {
        for a in 0..=total {
            for b in 0..=total - a {
                for c in 0..=total - a - b {
                    let d = total - a - b - c;
                    let t = ContingencyTable::new(a, b, c, d);
                    let degenerate = a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0;
                    match fisher_exact_two_sided(&t) {
                        Err(AuditError::DegenerateTable(_)) if degenerate => continue,
                        Err(e) => return Err(format!("{t:?}: {e}")),
                        Ok(_) if degenerate => return Err(format!("{t:?}: degenerate table accepted")),
                        Ok(r) => {
                            let want = brute_fisher(a, b, c, d);
                            let err = rel_err(r.p, want);
                            if err > 1e-9 {
                                return Err(format!("{t:?}: p = {:e}, enumeration gives {want:e}", r.p));
                            }
                            worst = worst.max(err);
                            tables += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "keys p = {:.3e}, OR = {:.2}; {tables} tables with total <= 40 match enumeration (max rel err {worst:.1e})",
        keys.p, keys.odds_ratio
    ))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut points = 0;
    for df in [1u64, 5, 10, 60, 200] {
        for i in -400..=400 {
            let t = i as f64 * 0.05;
            let got = two_sided_t_pvalue(t, df).map_err(|e| e.to_string())?;
            let want = oracle_t_pvalue(t, df);
            let err = (got - want).abs();
            if err > 1e-9 {
                return Err(format!("df {df}, t {t}: {got:e} vs quadrature {want:e}"));
            }
            worst = worst.max(err);
            points += 1;
        }
    }
    Ok(format!("{points} (t, df) points, max absolute error {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(1..=8);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == n {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.3 - 1.0).collect();
        let mut wins = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let want = wins / (n_pos * (n - n_pos)) as f64;
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 4.0 * f64::EPSILON {
            return Err(format!("instance {done}: {got} vs pairwise {want}"));
        }
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let complement = roc_auc(&negated, &labels).map_err(|e| e.to_string())?;
        if got + complement != 1.0 {
            return Err(format!("instance {done}: {got} + {complement} != 1"));
        }
        done += 1;
    }
    Ok(format!("1000 instances match pairwise counting (max diff {worst:.1e}); complement sums to exactly 1"))
}

/// Gradient of the class-balanced L2 objective written out term by term.
fn naive_gradient(x: &Design, y: &[bool], c_reg: f64, beta: &[f64], bias: f64) -> Vec<f64> {
    let n = y.len() as f64;
    let n_pos = y.iter().filter(|&&v| v).count() as f64;
    let mut g = vec![0.0; x.n_cols() + 1];
    for (r, &label) in y.iter().enumerate() {
        let row = x.row(r);
        let z: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + bias;
        let prob = 1.0 / (1.0 + (-z).exp());
        let w = if label { n / (2.0 * n_pos) } else { n / (2.0 * (n - n_pos)) };
        let resid = w * (prob - if label { 1.0 } else { 0.0 });
        for (j, v) in row.iter().enumerate() {
            g[j] += resid * v;
        }
        g[x.n_cols()] += resid;
    }
    for (j, b) in beta.iter().enumerate() {
        g[j] += b / c_reg;
    }
    g
}

fn criterion_6() -> Outcome {
    let run = SynthConfig::default()
        .generate(&LexiconConfig::default())
        .map_err(|e| e.to_string())?;
    let success = success_vector(&run.predictions).map_err(|e| e.to_string())?;
    let failure: Vec<bool> = success.iter().map(|s| !s).collect();
    let stats: Vec<FeatureStat> = per_feature_stats(&run.sae, &success).map_err(|e| e.to_string())?;
    let config = FitConfig::default();
    let cv_seed = 42;

    let mut designs: Vec<(KSpec, Design)> = Vec::new();
    for k in DEFAULT_TOP_K {
        let cols = select_top_k(&stats, k).map_err(|e| e.to_string())?;
        designs.push((KSpec::Top(k), design_from_matrix(&run.sae, Some(&cols)).map_err(|e| e.to_string())?));
    }
    designs.push((KSpec::All, design_from_matrix(&run.sae, None).map_err(|e| e.to_string())?));
    designs.push((KSpec::Raw, design_from_matrix(&run.raw, None).map_err(|e| e.to_string())?));

    let folds = stratified_folds(&failure, N_FOLDS, cv_seed).map_err(|e| e.to_string())?;
    let mut worst_grad = 0.0f64;
    let mut fits = 0;
    let mut aucs = BTreeMap::new();
    for (k, x) in &designs {
        for fold in 0..N_FOLDS {
            let train: Vec<usize> = (0..failure.len()).filter(|&i| folds[i] != fold).collect();
            let xt = x.select_rows(&train);
            let yt: Vec<bool> = train.iter().map(|&i| failure[i]).collect();
            let model = fit_logistic(&xt, &yt, &config).map_err(|e| e.to_string())?;
            let g = naive_gradient(&xt, &yt, config.c_reg, &model.weights, model.bias);
            let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm > 1e-6 {
                return Err(format!("{} fold {}: gradient inf-norm {norm:.2e}", k.label(), fold + 1));
            }
            worst_grad = worst_grad.max(norm);
            fits += 1;
        }
        let cv = cv_auc(x, &failure, *k, cv_seed, &config).map_err(|e| e.to_string())?;
        aucs.insert(k.label(), cv.mean_auc);
    }
    let top1 = aucs["sae_top_1"];
    let full = aucs["sae_all"];
    let raw = aucs["raw_residual"];
    if top1 < 0.80 {
        return Err(format!("top-1 CV AUC {top1:.3} < 0.80"));
    }
    if full < raw - 0.05 {
        return Err(format!("full-matrix AUC {full:.3} < raw AUC {raw:.3} - 0.05"));
    }
    Ok(format!(
        "{fits} fits, max gradient inf-norm {worst_grad:.1e}; top-1 AUC {top1:.3}, full {full:.3}, raw {raw:.3}"
    ))
}

fn cli(threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_failure-audit"))
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn chain(root: &Path, threads: usize) -> Result<PathBuf, String> {
    let dir = root.join(format!("run_t{threads}_{}", root.read_dir().map(|d| d.count()).unwrap_or(0)));
    let d = dir.to_str().unwrap().to_string();
    let f = |name: &str| format!("{d}/{name}");
    cli(threads, &["gen", "--n", "300", "--seed", "1", "--out", &d])?;
    let gen_tasks = std::fs::read(f("tasks.csv")).map_err(|e| e.to_string())?;
    cli(threads, &["synth", "--out", &d])?;
    if std::fs::read(f("tasks.csv")).map_err(|e| e.to_string())? != gen_tasks {
        return Err("fixture corpus differs from `gen` output".into());
    }
    cli(threads, &["analyze", "--tasks", &f("tasks.csv"), "--predictions", &f("predictions.csv"), "--activations", &f("activations.npy"), "--out", &d])?;
    cli(threads, &["predict", "--activations", &f("activations.npy"), "--raw", &f("raw.npy"), "--predictions", &f("predictions.csv"), "--stats", &f("feature_stats.csv"), "--cv-seed", "42", "--out", &d])?;
    cli(threads, &["ablation-compare", "--tasks", &f("tasks.csv"), "--baseline", &f("predictions.csv"), "--ablated", &f("predictions_ablated.csv"), "--feature", "1749", "--out", &d])?;
    cli(threads, &["seeds", "--dirs", &d, "--out", &d])?;
    cli(threads, &["report", "--in", &d])?;
    Ok(dir)
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn compare(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>, what: &str) -> Result<(), String> {
    if a.keys().ne(b.keys()) {
        return Err(format!("{what}: file sets differ"));
    }
    match a.iter().find(|(k, v)| b[*k] != **v) {
        Some((k, _)) => Err(format!("{what}: {} differs", k.display())),
        None => Ok(()),
    }
}

fn criterion_7() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = tree(&chain(root.path(), 8)?);
    let second = tree(&chain(root.path(), 8)?);
    let single = tree(&chain(root.path(), 1)?);
    compare(&first, &second, "repeat run")?;
    compare(&first, &single, "1 vs 8 threads")?;
    let svgs = first.keys().filter(|k| k.extension().is_some_and(|e| e == "svg")).count();
    if svgs < 7 {
        return Err(format!("only {svgs} figures written"));
    }
    Ok(format!("{} files ({svgs} SVGs) byte-identical across repeat and 1/8 threads", first.len()))
}

fn criterion_8() -> Outcome {
    let (rows, cols) = (300, 24_576);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<f32> = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < 0.05 { rng.random::<f32>() * 10.0 } else { 0.0 })
        .collect();
    let labels: Vec<bool> = (0..rows).map(|i| i % 5 != 0).collect();
    let m = ActivationMatrix::new(rows, cols, data, MatrixKind::SaeFeatures).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let stats = per_feature_stats(&m, &labels).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    if stats.len() != cols {
        return Err(format!("{} rows of statistics for {cols} features", stats.len()));
    }
    if secs >= 10.0 {
        return Err(format!("took {secs:.2} s (limit 10 s)"));
    }
    Ok(format!("{rows}x{cols} in {secs:.2} s"))
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("statistics match the naive reference", criterion_1),
        ("Holm matches the step-down definition", criterion_2),
        ("Fisher keys table and enumeration", criterion_3),
        ("t p-value matches quadrature", criterion_4),
        ("ROC AUC matches pairwise counting", criterion_5),
        ("logistic solver and fixture AUCs", criterion_6),
        ("determinism of the CLI chain", criterion_7),
        ("statistics at full dictionary width", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    println!();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        match check() {
            Ok(detail) => println!("acceptance {id} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("acceptance {id} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
