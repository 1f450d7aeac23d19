use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::planner::{count_params, ArchSpec};
use crate::train::run::{train, RunResult, TrainConfig};
use crate::train::task::TaskSpec;

/// `base` with `depth` layers and `heads` heads at the base head dimension.
pub fn grid_config(base: &ModelConfig, depth: usize, heads: usize) -> ModelConfig {
    let mut c = base.clone();
    c.depth = depth;
    c.num_heads = heads;
    c.embed_dim = heads * base.head_dim;
    c
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub depth: usize,
    pub heads: usize,
    pub seed: u64,
    pub param_count: u64,
    /// A failed run carries its error message; the rest of the grid still runs.
    pub outcome: std::result::Result<RunResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummaryRow {
    pub depth: usize,
    pub heads: usize,
    pub params: u64,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub final_mean_kappa: f64,
    pub failed_runs: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Sorted by `(depth, heads, seed)`.
    pub runs: Vec<GridRun>,
    pub summary: Vec<GridSummaryRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Trains every `(depth, heads, seed)` point with the head dimension of `base`
/// held fixed, and summarizes accuracy and final conditioning per `(depth, heads)`.
pub fn depth_heads_grid(
    base: &ModelConfig,
    depths: &[usize],
    head_counts: &[usize],
    seeds: &[u64],
    task: &TaskSpec,
    tc: &TrainConfig,
) -> Result<GridResult> {
    if depths.is_empty() || head_counts.is_empty() || seeds.is_empty() {
        return Err(Error::validation("grid needs at least one depth, head count and seed"));
    }
    let mut points = Vec::new();
    for &depth in depths {
        for &heads in head_counts {
            let config = grid_config(base, depth, heads);
            config.validate()?;
            let params = count_params(&ArchSpec::from_model_config(&config))?.total;
            for &seed in seeds {
                points.push((depth, heads, seed, params, config.clone()));
            }
        }
    }
    points.sort_by_key(|p| (p.0, p.1, p.2));
    let runs: Vec<GridRun> = points
        .into_par_iter()
        .map(|(depth, heads, seed, param_count, config)| {
            let tc = TrainConfig { seed, ..tc.clone() };
            GridRun {
                depth,
                heads,
                seed,
                param_count,
                outcome: train(&config, task, &tc).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut summary: Vec<GridSummaryRow> = Vec::new();
    for chunk in runs.chunk_by(|a, b| (a.depth, a.heads) == (b.depth, b.heads)) {
        let ok: Vec<&RunResult> = chunk.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let accs: Vec<f64> = ok.iter().map(|r| r.final_eval_accuracy).collect();
        let kappas: Vec<f64> = ok
            .iter()
            .map(|r| r.final_mean_kappa())
            .filter(|k| k.is_finite())
            .collect();
        let (mean_acc, std_acc) = mean_std(&accs);
        summary.push(GridSummaryRow {
            depth: chunk[0].depth,
            heads: chunk[0].heads,
            params: chunk[0].param_count,
            mean_acc,
            std_acc,
            final_mean_kappa: mean_std(&kappas).0,
            failed_runs: chunk.len() - ok.len(),
        });
    }
    Ok(GridResult { runs, summary })
}
