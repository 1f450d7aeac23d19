use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{batch_gradients, cross_entropy, model_forward, ModelConfig, Parameters};
use crate::probe::{probe_batch_with, probe_steps, ConditioningReport, MeasuredObject, ProbeOptions};
use crate::train::optim::{adamw_step, AdamWConfig, AdamWState};
use crate::train::task::{generate_batch, Stream, TaskSpec};

fn default_probe_batch() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds parameter initialization.
    pub seed: u64,
    pub probe_every: usize,
    #[serde(default = "default_probe_batch")]
    pub probe_batch_size: usize,
    #[serde(default)]
    pub probe_object: MeasuredObject,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamWConfig::default();
        TrainConfig {
            steps: 3000,
            batch_size: 64,
            learning_rate: opt.learning_rate,
            weight_decay: opt.weight_decay,
            warmup_steps: opt.warmup_steps,
            beta1: opt.beta1,
            beta2: opt.beta2,
            epsilon: opt.epsilon,
            seed: 0,
            probe_every: 500,
            probe_batch_size: default_probe_batch(),
            probe_object: MeasuredObject::PreProjection,
        }
    }
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            warmup_steps: self.warmup_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.probe_batch_size == 0 {
            return Err(Error::validation("batch sizes must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::validation("weight_decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::validation("epsilon must be positive"));
        }
        if self.steps > 0 && self.warmup_steps > self.steps {
            return Err(Error::validation("warmup_steps must not exceed steps"));
        }
        if self.probe_every == 0 {
            return Err(Error::validation("probe_every must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetric {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model_config: ModelConfig,
    pub task: TaskSpec,
    pub train_config: TrainConfig,
    pub param_count: usize,
    /// Loss of the last training batch (of batch 0 when no steps were taken).
    pub final_train_loss: f64,
    pub final_eval_accuracy: f64,
    pub final_eval_loss: f64,
    pub metrics: Vec<StepMetric>,
    pub conditioning: Vec<ConditioningReport>,
}

impl RunResult {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.loss).collect()
    }

    /// `mean_concat_kappa_across_layers` of the last conditioning report.
    pub fn final_mean_kappa(&self) -> f64 {
        self.conditioning
            .last()
            .map_or(f64::NAN, |r| r.mean_concat_kappa_across_layers)
    }
}

/// A training run in progress: parameters, optimizer state and history.
pub struct Trainer {
    model: ModelConfig,
    task: TaskSpec,
    config: TrainConfig,
    params: Parameters,
    state: AdamWState,
    step: usize,
    metrics: Vec<StepMetric>,
    probe_batch: Vec<Vec<usize>>,
}

pub fn check_compatible(model: &ModelConfig, task: &TaskSpec) -> Result<()> {
    model.validate()?;
    task.validate()?;
    if model.vocab_size != task.vocab_size || model.seq_len != task.seq_len || model.num_classes != task.num_classes() {
        return Err(Error::validation(format!(
            "model (vocab {}, seq_len {}, classes {}) does not match task (vocab {}, seq_len {}, classes {})",
            model.vocab_size,
            model.seq_len,
            model.num_classes,
            task.vocab_size,
            task.seq_len,
            task.num_classes()
        )));
    }
    Ok(())
}

impl Trainer {
    pub fn new(model: ModelConfig, task: TaskSpec, config: TrainConfig) -> Result<Self> {
        check_compatible(&model, &task)?;
        config.validate()?;
        let params = Parameters::init(&model, config.seed);
        let state = AdamWState::new(&model);
        let (probe_batch, _) = generate_batch(&task, config.probe_batch_size, Stream::Probe, 0);
        Ok(Trainer {
            model,
            task,
            config,
            params,
            state,
            step: 0,
            metrics: Vec::new(),
            probe_batch,
        })
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    /// Number of updates applied so far.
    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.config.steps
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps
    }

    /// One minibatch update; returns the pre-update batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let t = self.step + 1;
        let (tokens, labels) = generate_batch(&self.task, self.config.batch_size, Stream::Train, self.step);
        let (grads, loss) = batch_gradients(&tokens, &labels, &self.params, &self.model)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: t,
                last_good_step: self.metrics.last().map(|m| m.step),
            });
        }
        let opt = self.config.adamw();
        adamw_step(&mut self.params, &grads, &mut self.state, &opt, t)?;
        self.metrics.push(StepMetric {
            step: t,
            loss,
            lr: opt.lr_at(t),
        });
        self.step = t;
        Ok(loss)
    }

    pub fn probe(&self) -> Result<ConditioningReport> {
        let opts = ProbeOptions {
            object: self.config.probe_object,
            ..Default::default()
        };
        probe_batch_with(&self.params, &self.model, &self.probe_batch, opts, self.step)
    }

    pub fn evaluate(&self) -> Result<Evaluation> {
        let per_sample: Vec<(bool, f64)> = (0..self.task.eval_size)
            .into_par_iter()
            .map(|i| {
                let (tokens, label) = self.task.sample(Stream::Eval, i);
                let (logits, _) = model_forward(&tokens, &self.params, &self.model)?;
                Ok((argmax(&logits) == label, cross_entropy(&logits, label).0))
            })
            .collect::<Result<_>>()?;
        let n = per_sample.len() as f64;
        Ok(Evaluation {
            accuracy: per_sample.iter().filter(|(ok, _)| *ok).count() as f64 / n,
            loss: per_sample.iter().map(|(_, l)| l).sum::<f64>() / n,
        })
    }

    pub fn finish(self, conditioning: Vec<ConditioningReport>) -> Result<RunResult> {
        let eval = self.evaluate()?;
        let final_train_loss = match self.metrics.last() {
            Some(m) => m.loss,
            None => {
                let (tokens, labels) = generate_batch(&self.task, self.config.batch_size, Stream::Train, 0);
                batch_gradients(&tokens, &labels, &self.params, &self.model)?.1
            }
        };
        Ok(RunResult {
            param_count: self.params.param_count(),
            model_config: self.model,
            task: self.task,
            train_config: self.config,
            final_train_loss,
            final_eval_accuracy: eval.accuracy,
            final_eval_loss: eval.loss,
            metrics: self.metrics,
            conditioning,
        })
    }
}

/// Index of the largest logit (first one on ties).
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Drives `trainer` to completion, probing at steps `0, k, 2k, …` and at the final step.
pub fn probe_schedule(trainer: &mut Trainer, every_k_steps: usize) -> Result<Vec<ConditioningReport>> {
    let schedule = probe_steps(trainer.total_steps(), every_k_steps)?;
    let mut reports = Vec::with_capacity(schedule.len());
    for target in schedule {
        while trainer.current_step() < target {
            trainer.step()?;
        }
        reports.push(trainer.probe()?);
    }
    Ok(reports)
}

pub fn train(model: &ModelConfig, task: &TaskSpec, config: &TrainConfig) -> Result<RunResult> {
    let mut trainer = Trainer::new(model.clone(), task.clone(), config.clone())?;
    let conditioning = probe_schedule(&mut trainer, config.probe_every)?;
    trainer.finish(conditioning)
}
