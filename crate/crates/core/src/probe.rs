//! Condition numbers of attention outputs measured inside real forward passes.
//!
//! For every sample of a probe batch and every layer we take each head output
//! `A_i = softmax(q kᵀ) v` (`N × d`) and their concatenation `A` (`N × D`), compute
//! `κ` per sample, then average over the batch. Rank-deficient measurements are
//! flagged rather than averaged: they are excluded from means and counted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, Kappa, Matrix, DEFAULT_RANK_TOL};
use crate::model::{model_forward, ModelConfig, Parameters};

/// Which matrix stands for "the layer's attention matrix".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasuredObject {
    /// `[A_1, …, A_h]` before the output projection.
    #[default]
    PreProjection,
    /// `A Wo + bo`.
    PostProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub object: MeasuredObject,
    pub rank_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            object: MeasuredObject::PreProjection,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConditioning {
    pub layer: usize,
    /// Batch mean per head; infinite only if every sample was rank deficient.
    pub per_head_kappa: Vec<Kappa>,
    pub concat_kappa: Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub step: usize,
    pub per_layer: Vec<LayerConditioning>,
    /// Mean of the finite `concat_kappa` values; `NaN` when there are none.
    pub mean_concat_kappa_across_layers: f64,
    /// Layers left out of the mean because their `concat_kappa` is infinite.
    pub excluded_layers: usize,
    pub batch_size_measured: usize,
    /// Per-sample head measurements (over all layers) that were rank deficient.
    pub rank_deficient_heads: usize,
    /// Per-sample concatenated-block measurements that were rank deficient.
    pub rank_deficient_concat: usize,
}

/// Mean of the finite values, summed in sorted order so the result does not
/// depend on sample order. `Infinite` when nothing finite remains.
fn finite_mean(values: &[Kappa]) -> Kappa {
    let mut finite: Vec<f64> = values.iter().filter_map(|k| k.finite()).collect();
    if finite.is_empty() {
        return Kappa::Infinite;
    }
    finite.sort_by(f64::total_cmp);
    Kappa::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
}

struct SampleKappas {
    heads: Vec<Vec<Kappa>>,
    concat: Vec<Kappa>,
}

fn measure_sample(tokens: &[usize], params: &Parameters, config: &ModelConfig, opts: ProbeOptions) -> Result<SampleKappas> {
    let (_, trace) = model_forward(tokens, params, config)?;
    let kappa = |m: &Matrix| condition_number(m, opts.rank_tol);
    let mut heads = Vec::with_capacity(trace.layers.len());
    let mut concat = Vec::with_capacity(trace.layers.len());
    for layer in &trace.layers {
        heads.push(
            layer
                .heads
                .iter()
                .map(|h| kappa(&h.output))
                .collect::<Result<Vec<_>>>()?,
        );
        concat.push(match opts.object {
            MeasuredObject::PreProjection => kappa(&layer.concat)?,
            MeasuredObject::PostProjection => kappa(&layer.projected)?,
        });
    }
    Ok(SampleKappas { heads, concat })
}

pub fn probe_batch(params: &Parameters, config: &ModelConfig, batch: &[Vec<usize>]) -> Result<ConditioningReport> {
    probe_batch_with(params, config, batch, ProbeOptions::default(), 0)
}

pub fn probe_batch_with(
    params: &Parameters,
    config: &ModelConfig,
    batch: &[Vec<usize>],
    opts: ProbeOptions,
    step: usize,
) -> Result<ConditioningReport> {
    if batch.is_empty() {
        return Err(Error::validation("probe batch must not be empty"));
    }
    let samples: Vec<SampleKappas> = batch
        .par_iter()
        .map(|tokens| measure_sample(tokens, params, config, opts))
        .collect::<Result<_>>()?;

    let mut rank_deficient_heads = 0;
    let mut rank_deficient_concat = 0;
    let mut per_layer = Vec::with_capacity(config.depth);
    for layer in 0..config.depth {
        let per_head_kappa = (0..config.num_heads)
            .map(|h| {
                let vals: Vec<Kappa> = samples.iter().map(|s| s.heads[layer][h]).collect();
                rank_deficient_heads += vals.iter().filter(|k| !k.is_finite()).count();
                finite_mean(&vals)
            })
            .collect();
        let vals: Vec<Kappa> = samples.iter().map(|s| s.concat[layer]).collect();
        rank_deficient_concat += vals.iter().filter(|k| !k.is_finite()).count();
        per_layer.push(LayerConditioning {
            layer,
            per_head_kappa,
            concat_kappa: finite_mean(&vals),
        });
    }
    let finite_layers: Vec<f64> = per_layer.iter().filter_map(|l| l.concat_kappa.finite()).collect();
    let mean_concat_kappa_across_layers = if finite_layers.is_empty() {
        f64::NAN
    } else {
        finite_layers.iter().sum::<f64>() / finite_layers.len() as f64
    };
    Ok(ConditioningReport {
        step,
        excluded_layers: per_layer.len() - finite_layers.len(),
        per_layer,
        mean_concat_kappa_across_layers,
        batch_size_measured: batch.len(),
        rank_deficient_heads,
        rank_deficient_concat,
    })
}

/// Steps at which a run of `total` steps is probed: `0, k, 2k, …` and always `total`.
pub fn probe_steps(total: usize, every: usize) -> Result<Vec<usize>> {
    if every == 0 {
        return Err(Error::validation("probe interval must be >= 1"));
    }
    let mut steps: Vec<usize> = (0..=total).step_by(every).collect();
    if steps.last() != Some(&total) {
        steps.push(total);
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_single_head_is_perfectly_conditioned() {
        let c = ModelConfig::new(1, 1, 4, 2.0, 5, 1, 2);
        let p = Parameters::init(&c, 3);
        let r = probe_batch(&p, &c, &[vec![2]]).unwrap();
        assert_eq!(r.per_layer.len(), 1);
        assert_eq!(r.per_layer[0].concat_kappa, Kappa::Finite(1.0));
        assert_eq!(r.per_layer[0].per_head_kappa, vec![Kappa::Finite(1.0)]);
        assert_eq!(r.mean_concat_kappa_across_layers, 1.0);
    }

    #[test]
    fn report_is_deterministic_and_order_invariant() {
        let c = ModelConfig::new(2, 2, 4, 2.0, 9, 6, 3);
        let p = Parameters::init(&c, 8);
        let batch: Vec<Vec<usize>> = (0..5).map(|i| (0..6).map(|j| (i * 7 + j * 3) % 9).collect()).collect();
        let a = probe_batch(&p, &c, &batch).unwrap();
        assert_eq!(a, probe_batch(&p, &c, &batch).unwrap());
        let mut rev = batch.clone();
        rev.reverse();
        assert_eq!(a, probe_batch(&p, &c, &rev).unwrap());
        for l in &a.per_layer {
            for k in l.per_head_kappa.iter().chain([&l.concat_kappa]) {
                assert!(k.finite().is_none_or(|v| v >= 1.0));
            }
        }
    }

    #[test]
    fn post_projection_option_measures_a_different_matrix() {
        let c = ModelConfig::new(1, 2, 4, 2.0, 9, 6, 3);
        let p = Parameters::init(&c, 8);
        let batch = vec![vec![1, 2, 3, 4, 5, 6]];
        let pre = probe_batch(&p, &c, &batch).unwrap();
        let opts = ProbeOptions {
            object: MeasuredObject::PostProjection,
            ..Default::default()
        };
        let post = probe_batch_with(&p, &c, &batch, opts, 0).unwrap();
        assert_eq!(pre.per_layer[0].per_head_kappa, post.per_layer[0].per_head_kappa);
        assert_ne!(pre.per_layer[0].concat_kappa, post.per_layer[0].concat_kappa);
    }

    #[test]
    fn infinite_entries_are_excluded_and_counted() {
        assert_eq!(finite_mean(&[Kappa::Infinite, Kappa::Finite(3.0)]), Kappa::Finite(3.0));
        assert_eq!(finite_mean(&[Kappa::Infinite]), Kappa::Infinite);
        // Constant tokens without positions: every row of A is identical.
        let c = ModelConfig::new(1, 2, 2, 1.0, 3, 4, 2);
        let mut p = Parameters::init(&c, 1);
        p.pos_embed.fill(0.0);
        let r = probe_batch(&p, &c, &[vec![1, 1, 1, 1]]).unwrap();
        assert_eq!(r.rank_deficient_heads, 2);
        assert_eq!(r.rank_deficient_concat, 1);
        assert_eq!(r.excluded_layers, 1);
        assert!(r.mean_concat_kappa_across_layers.is_nan());
    }

    #[test]
    fn schedule_lengths() {
        assert_eq!(probe_steps(100, 100).unwrap(), vec![0, 100]);
        assert_eq!(probe_steps(100, 25).unwrap().len(), 100 / 25 + 1);
        assert_eq!(probe_steps(10, 4).unwrap(), vec![0, 4, 8, 10]);
        assert_eq!(probe_steps(0, 5).unwrap(), vec![0]);
        assert!(probe_steps(10, 0).is_err());
        assert!(probe_batch(&Parameters::init(&ModelConfig::new(1, 1, 1, 1.0, 2, 2, 2), 0), &ModelConfig::new(1, 1, 1, 1.0, 2, 2, 2), &[]).is_err());
    }
}
