//! The training loop: discriminator epochs over context batches with weighted
//! negatives, and a closed-form generator refresh every `l_g` epochs.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::config_hash;
use crate::dataset::DatasetSplit;
use crate::discriminator::{grad_and_step, AdamSettings, BatchEntry, DiscriminatorParams, OptimizerState};
use crate::error::{Error, Result};
use crate::evaluator::evaluate_validation;
use crate::generator::{generator_round, rebuild_tables, GeneratorParams, GeneratorTables, RoundSettings};
use crate::negatives::{make_negatives, SamplerMode};
use crate::par::Exec;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub temperature: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// Generator refresh period in epochs.
    pub l_g: usize,
    /// Negatives per positive interaction of a context.
    pub neg_per_context: usize,
    /// Sample size of each generator estimate, per context and per item.
    pub est_samples: usize,
    pub states: usize,
    pub dim: usize,
    pub epochs: usize,
    /// Minimum number of positive interactions per mini-batch.
    pub batch_size: usize,
    pub sampler: SamplerMode,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    /// Differentiate through the importance weights in sd_gar mode.
    pub weight_gradient: bool,
    /// Cutoff of the validation NDCG.
    pub eval_k: usize,
    /// Validation period in epochs; 0 disables validation.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamSettings::default();
        Self {
            temperature: 1.0,
            lambda_x: 1.0,
            lambda_y: 1.0,
            l_g: 5,
            neg_per_context: 5,
            est_samples: 64,
            states: 32,
            dim: 32,
            epochs: 100,
            batch_size: 512,
            sampler: SamplerMode::SdGar,
            seed: 0,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            l2: adam.l2_coeff,
            weight_gradient: false,
            eval_k: 50,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "T must be positive (temperature = {})",
                self.temperature
            )));
        }
        for (name, v) in [("lambda_x", self.lambda_x), ("lambda_y", self.lambda_y)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("l_g", self.l_g),
            ("neg_per_context", self.neg_per_context),
            ("est_samples", self.est_samples),
            ("states", self.states),
            ("dim", self.dim),
            ("batch_size", self.batch_size),
            ("eval_k", self.eval_k),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("l2 must be non-negative, got {}", self.l2)));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamSettings {
        AdamSettings {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            l2_coeff: self.l2,
        }
    }

    pub fn hash(&self) -> [u8; 8] {
        config_hash(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch objective per trained context, regularizer included.
    pub loss: f64,
    pub valid_ndcg: Option<f64>,
    pub disc_seconds: f64,
    pub gen_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_valid_ndcg: Option<f64>,
}

impl TrainLog {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub disc: DiscriminatorParams,
    pub gen: GeneratorParams,
    /// Parameters at the epoch with the best validation NDCG, if validated.
    pub best_disc: Option<DiscriminatorParams>,
    pub log: TrainLog,
}

/// Initial parameters for a run that continues from saved state.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub disc: DiscriminatorParams,
    pub gen: GeneratorParams,
}

/// Contexts with positives in shuffled order, grouped so that each batch
/// holds at least `batch_size` positives (the last one may hold fewer).
pub fn context_batches(split: &DatasetSplit, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let train = &split.train;
    let mut order: Vec<usize> = (0..train.num_contexts())
        .filter(|&c| !train.positives(c).is_empty())
        .collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Shuffle, epoch, 0));
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut filled = 0;
    for c in order {
        current.push(c);
        filled += train.positives(c).len();
        if filled >= batch_size {
            batches.push(std::mem::take(&mut current));
            filled = 0;
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

pub fn train(config: &TrainConfig, split: &DatasetSplit, exec: Exec) -> Result<TrainOutcome> {
    train_with(config, split, None, exec, &mut |_| {})
}

/// Full training entry point. `init` replaces the random initialization;
/// `observer` sees each epoch record as soon as it is complete.
pub fn train_with(
    config: &TrainConfig,
    split: &DatasetSplit,
    init: Option<InitialState>,
    exec: Exec,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let train = &split.train;
    let (n, m) = (train.num_contexts(), train.num_items());
    if train.num_interactions() == 0 {
        return Err(Error::Config("training data has no interactions".into()));
    }

    let (mut disc, mut gen) = match init {
        Some(s) => {
            if s.disc.num_contexts() != n || s.disc.num_items() != m {
                return Err(Error::Shape {
                    what: "initial parameters (contexts x items)".into(),
                    expected: format!("{n}x{m}"),
                    actual: format!("{}x{}", s.disc.num_contexts(), s.disc.num_items()),
                });
            }
            (s.disc, s.gen)
        }
        None => (
            DiscriminatorParams::init_random(n, m, config.dim, config.seed),
            GeneratorParams::init_random(n, m, config.states, config.seed),
        ),
    };
    let mut tables: Option<GeneratorTables> = if config.sampler.uses_generator() {
        Some(rebuild_tables(&gen, exec)?)
    } else {
        None
    };
    let mut opt = OptimizerState::new(&disc, config.adam());
    let mut log = TrainLog::default();
    let mut best_disc = None;
    let has_validation = split.validation.num_interactions() > 0;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut total = 0.0;
        let mut trained = 0usize;
        for batch in context_batches(split, config.batch_size, config.seed, epoch as u64) {
            let negs = {
                let (disc, gen, tables) = (&disc, &gen, tables.as_ref());
                exec.map_slice(&batch, |&c| {
                    let mut r = rng::stream(config.seed, Purpose::Negatives, epoch as u64, c as u64);
                    let count = config.neg_per_context * train.positives(c).len();
                    make_negatives(config.sampler, disc, gen, tables, c, count, config.temperature, &mut r)
                })
            };
            let mut entries = Vec::with_capacity(batch.len());
            for (&c, neg) in batch.iter().zip(negs) {
                entries.push(BatchEntry {
                    context: c,
                    positives: train.positives(c),
                    negatives: neg?,
                });
            }
            let loss = grad_and_step(&mut disc, &mut opt, &entries, !config.weight_gradient, exec)
                .map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
            total += loss;
            trained += batch.len();
        }
        let disc_seconds = started.elapsed().as_secs_f64();

        let mut gen_seconds = 0.0;
        if let Some(t) = tables.as_mut() {
            if epoch % config.l_g == 0 {
                let started = Instant::now();
                let settings = RoundSettings {
                    temperature: config.temperature,
                    lambda_x: config.lambda_x,
                    lambda_y: config.lambda_y,
                    est_samples: config.est_samples,
                    seed: config.seed,
                    round: (epoch / config.l_g) as u64,
                };
                generator_round(&disc, &mut gen, t, &settings, exec)?;
                gen_seconds = started.elapsed().as_secs_f64();
            }
        }

        let valid_ndcg = if has_validation && config.eval_every > 0 && epoch % config.eval_every == 0 {
            Some(evaluate_validation(&disc, split, config.eval_k, exec).mean_ndcg)
        } else {
            None
        };
        if let Some(v) = valid_ndcg {
            if log.best_valid_ndcg.is_none_or(|b| v > b) {
                log.best_valid_ndcg = Some(v);
                log.best_epoch = Some(epoch);
                best_disc = Some(disc.clone());
            }
        }

        let record = EpochRecord {
            epoch,
            loss: total / trained.max(1) as f64,
            valid_ndcg,
            disc_seconds,
            gen_seconds,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} valid ndcg {:?} ({:.2}s + {:.2}s)",
            record.loss,
            record.valid_ndcg,
            disc_seconds,
            gen_seconds
        );
        observer(&record);
        log.records.push(record);
    }

    Ok(TrainOutcome {
        disc,
        gen,
        best_disc,
        log,
    })
}
