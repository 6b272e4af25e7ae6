// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic run directories with a planted single-stratum confound.
//!
//! One feature fires only on prompts whose object is the stratum value, and
//! almost every prompt in that stratum fails. A handful of features co-fire
//! with it and a few more carry weak signal for the remaining failures.
//! Everything else is sparse non-negative noise. The raw matrix is a random
//! linear projection of the SAE matrix plus Gaussian noise.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};

use crate::corpus::{generate_tasks, LexiconConfig, TaskRecord};
use crate::error::{AuditError, Result};
use crate::store::{write_matrix, write_predictions, write_tasks, ActivationMatrix, MatrixKind, PredictionRecord};

/// Corpus seed whose 300-prompt default-lexicon corpus has 45 `the keys` prompts.
pub const FIXTURE_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_tasks: usize,
    pub seed: u64,
    pub n_features: usize,
    pub raw_dim: usize,
    pub stratum_object: String,
    /// Successful prompts inside the stratum.
    pub stratum_successes: usize,
    /// Failed prompts outside the stratum.
    pub other_failures: usize,
    pub planted_feature: usize,
    pub coactive_features: Vec<usize>,
    pub weak_features: Vec<usize>,
    /// Per-cell probability that a background feature is active.
    pub background_rate: f64,
    pub raw_noise_sd: f64,
    /// Stratum successes turned into failures in the ablated sheet.
    pub ablation_flips: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_tasks: 300,
            seed: FIXTURE_SEED,
            n_features: 2000,
            raw_dim: 128,
            stratum_object: "the keys".into(),
            stratum_successes: 3,
            other_failures: 19,
            planted_feature: 1749,
            coactive_features: vec![512, 1033, 1880],
            weak_features: vec![77, 301, 640, 1201, 1502],
            background_rate: 0.03,
            raw_noise_sd: 0.5,
            ablation_flips: 1,
        }
    }
}

/// In-memory fixture, as the capture step would have produced it.
#[derive(Debug, Clone)]
pub struct SynthRun {
    pub tasks: Vec<TaskRecord>,
    pub predictions: Vec<PredictionRecord>,
    pub ablated: Vec<PredictionRecord>,
    pub sae: ActivationMatrix,
    pub raw: ActivationMatrix,
}

/// First seed `>= start` whose corpus has exactly `target` prompts with `object`.
pub fn find_corpus_seed(n: usize, object: &str, target: usize, lexicon: &LexiconConfig, start: u64, limit: u64) -> Result<u64> {
    for seed in start..start.saturating_add(limit) {
        let tasks = generate_tasks(n, seed, lexicon)?;
        if tasks.iter().filter(|t| t.object_phrase == object).count() == target {
            return Ok(seed);
        }
    }
    Err(AuditError::Config(format!(
        "no seed in {start}..{} gives {target} prompts with {object:?}",
        start.saturating_add(limit)
    )))
}

fn prediction(task: &TaskRecord, success: bool) -> PredictionRecord {
    let name = if success { &task.io_name } else { &task.subject_name };
    PredictionRecord {
        task_id: task.task_id,
        decoded_text: format!(" {name} the"),
        predicted_token: name.clone(),
        success,
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let ids = std::iter::once(&self.planted_feature)
            .chain(&self.coactive_features)
            .chain(&self.weak_features);
        if let Some(id) = ids.clone().find(|&&id| id >= self.n_features) {
            return Err(AuditError::Config(format!(
                "feature {id} outside {} features",
                self.n_features
            )));
        }
        let mut sorted: Vec<usize> = ids.copied().collect();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != 1 + self.coactive_features.len() + self.weak_features.len() {
            return Err(AuditError::Config("planted feature ids overlap".into()));
        }
        if self.raw_dim == 0 || !(0.0..=1.0).contains(&self.background_rate) || self.raw_noise_sd < 0.0 {
            return Err(AuditError::Config("bad raw dimension, rate or noise".into()));
        }
        Ok(())
    }

    pub fn generate(&self, lexicon: &LexiconConfig) -> Result<SynthRun> {
        self.check()?;
        let tasks = generate_tasks(self.n_tasks, self.seed, lexicon)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);

        let (mut inside, mut outside): (Vec<usize>, Vec<usize>) =
            (0..tasks.len()).partition(|&i| tasks[i].object_phrase == self.stratum_object);
        if self.stratum_successes > inside.len() || self.other_failures > outside.len() {
            return Err(AuditError::Config(format!(
                "stratum has {} prompts and {} lie outside it; cannot place {} successes and {} failures",
                inside.len(),
                outside.len(),
                self.stratum_successes,
                self.other_failures
            )));
        }
        inside.shuffle(&mut rng);
        outside.shuffle(&mut rng);
        let mut success = vec![true; tasks.len()];
        for &i in &inside[self.stratum_successes..] {
            success[i] = false;
        }
        for &i in &outside[..self.other_failures] {
            success[i] = false;
        }
        let in_stratum: Vec<bool> = tasks
            .iter()
            .map(|t| t.object_phrase == self.stratum_object)
            .collect();

        let planted = Normal::new(10.0, 2.0).expect("valid normal");
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let f = self.n_features;
        let mut sae = vec![0f32; tasks.len() * f];
        for (r, row) in sae.chunks_mut(f).enumerate() {
            for v in row.iter_mut() {
                if rng.random::<f64>() < self.background_rate {
                    let e: f64 = Exp1.sample(&mut rng);
                    *v = e as f32;
                }
            }
            row[self.planted_feature] = 0.0;
            if in_stratum[r] {
                let p = Distribution::<f64>::sample(&planted, &mut rng).max(0.5);
                row[self.planted_feature] = p as f32;
                for &c in &self.coactive_features {
                    let z: f64 = unit.sample(&mut rng);
                    row[c] = (0.4 * p + z).max(0.0) as f32;
                }
            } else if !success[r] {
                for &w in &self.weak_features {
                    if rng.random::<f64>() < 0.6 {
                        let e: f64 = Exp1.sample(&mut rng);
                        row[w] = (2.0 * e) as f32;
                    }
                }
            }
        }

        let scale = 1.0 / (f as f64).sqrt();
        let proj: Vec<f64> = (0..f * self.raw_dim)
            .map(|_| unit.sample(&mut rng) * scale)
            .collect();
        let mut raw = vec![0f32; tasks.len() * self.raw_dim];
        for (r, out) in raw.chunks_mut(self.raw_dim).enumerate() {
            let mut acc = vec![0f64; self.raw_dim];
            for (j, &a) in sae[r * f..(r + 1) * f].iter().enumerate() {
                if a != 0.0 {
                    let w = &proj[j * self.raw_dim..(j + 1) * self.raw_dim];
                    for (o, &wk) in acc.iter_mut().zip(w) {
                        *o += a as f64 * wk;
                    }
                }
            }
            for (o, a) in out.iter_mut().zip(acc) {
                let z: f64 = unit.sample(&mut rng);
                *o = (a + self.raw_noise_sd * z) as f32;
            }
        }

        let predictions: Vec<PredictionRecord> = tasks
            .iter()
            .map(|t| prediction(t, success[t.task_id]))
            .collect();
        let mut ablated_success = success.clone();
        let mut stratum_hits: Vec<usize> = inside[..self.stratum_successes].to_vec();
        stratum_hits.sort_unstable();
        for &i in stratum_hits.iter().take(self.ablation_flips) {
            ablated_success[i] = false;
        }
        let ablated = tasks
            .iter()
            .map(|t| prediction(t, ablated_success[t.task_id]))
            .collect();

        Ok(SynthRun {
            sae: ActivationMatrix::new(tasks.len(), f, sae, MatrixKind::SaeFeatures)?,
            raw: ActivationMatrix::new(tasks.len(), self.raw_dim, raw, MatrixKind::RawResidual)?,
            tasks,
            predictions,
            ablated,
        })
    }
}

impl SynthRun {
    /// Writes `tasks.csv`, `predictions.csv`, `predictions_ablated.csv`,
    /// `activations.npy` and `raw.npy` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
        write_tasks(&self.tasks, &dir.join("tasks.csv"))?;
        write_predictions(&self.predictions, &dir.join("predictions.csv"))?;
        write_predictions(&self.ablated, &dir.join("predictions_ablated.csv"))?;
        write_matrix(&self.sae, &dir.join("activations.npy"))?;
        write_matrix(&self.raw, &dir.join("raw.npy"))
    }
}
