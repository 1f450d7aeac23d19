use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::cli::output::{self, fmt_f64, fmt_kappa, RunManifest};
use crate::cli::Common;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::probe::ConditioningReport;
use crate::train::{depth_heads_grid, grid_config, train, RunResult, TaskSpec, TrainConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run (or grid) configuration JSON.
    pub config: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub depths: Vec<usize>,
    pub head_counts: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// Contents of a `train` config file. With `grid` present, `model` is the base
/// whose head dimension is held fixed across the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainFile {
    pub model: ModelConfig,
    pub task: TaskSpec,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub param_count: usize,
    pub steps: usize,
    pub final_train_loss: f64,
    pub final_eval_accuracy: f64,
    pub final_eval_loss: f64,
    pub final_mean_kappa: Option<f64>,
    pub model: ModelConfig,
    pub task: TaskSpec,
    pub train: TrainConfig,
}

impl RunSummary {
    pub fn of(r: &RunResult) -> Self {
        let k = r.final_mean_kappa();
        RunSummary {
            param_count: r.param_count,
            steps: r.metrics.len(),
            final_train_loss: r.final_train_loss,
            final_eval_accuracy: r.final_eval_accuracy,
            final_eval_loss: r.final_eval_loss,
            final_mean_kappa: k.is_finite().then_some(k),
            model: r.model_config.clone(),
            task: r.task.clone(),
            train: r.train_config.clone(),
        }
    }
}

pub const METRICS: &str = "metrics.csv";
pub const CONDITIONING: &str = "conditioning.csv";
pub const SUMMARY: &str = "summary.json";
pub const GRID_SUMMARY: &str = "grid_summary.csv";

pub const CONDITIONING_HEADER: [&str; 7] = [
    "step",
    "layer",
    "head",
    "kappa",
    "concat_kappa",
    "mean_concat_kappa_across_layers",
    "rank_deficient_heads",
];

pub fn metrics_csv(r: &RunResult) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = r
        .metrics
        .iter()
        .map(|m| vec![m.step.to_string(), fmt_f64(m.loss), fmt_f64(m.lr)])
        .collect();
    output::csv_bytes(&["step", "loss", "lr"], &rows)
}

/// One row per `(step, layer, head)`; layer-level columns repeat across heads.
pub fn conditioning_csv(reports: &[ConditioningReport]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for rep in reports {
        for layer in &rep.per_layer {
            for (head, k) in layer.per_head_kappa.iter().enumerate() {
                rows.push(vec![
                    rep.step.to_string(),
                    layer.layer.to_string(),
                    head.to_string(),
                    fmt_kappa(*k),
                    fmt_kappa(layer.concat_kappa),
                    fmt_f64(rep.mean_concat_kappa_across_layers),
                    rep.rank_deficient_heads.to_string(),
                ]);
            }
        }
    }
    output::csv_bytes(&CONDITIONING_HEADER, &rows)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::validation(e.to_string()))
}

/// Writes the four run artifacts into `dir`; the manifest goes last.
pub fn write_run(dir: &Path, result: &RunResult, manifest: RunManifest) -> Result<RunManifest> {
    output::create_dir(dir)?;
    output::write_atomic(&dir.join(METRICS), &metrics_csv(result)?)?;
    output::write_atomic(&dir.join(CONDITIONING), &conditioning_csv(&result.conditioning)?)?;
    output::write_atomic(&dir.join(SUMMARY), &output::to_json_bytes(&RunSummary::of(result))?)?;
    manifest.finish(dir, vec![METRICS.into(), CONDITIONING.into(), SUMMARY.into()])
}

fn seeds_of(file: &TrainFile) -> BTreeMap<String, u64> {
    BTreeMap::from([("init".into(), file.train.seed), ("task".into(), file.task.seed)])
}

pub fn load(path: &Path) -> Result<TrainFile> {
    output::parse_json(&output::read_to_string(path)?, path)
}

pub fn run(args: &TrainArgs, common: &Common) -> Result<()> {
    let mut file = load(&args.config)?;
    let out = output::out_dir_or(&common.out, "run");
    match file.grid.take() {
        None => {
            if let Some(seed) = common.seed {
                file.train.seed = seed;
            }
            let manifest = RunManifest::start("train", to_value(&file)?, seeds_of(&file));
            // Fail on an unwritable destination before spending time training.
            output::create_dir(&out)?;
            let result = train(&file.model, &file.task, &file.train)?;
            write_run(&out, &result, manifest)?;
            if common.json {
                print!("{}", String::from_utf8_lossy(&output::to_json_bytes(&RunSummary::of(&result))?));
            }
            Ok(())
        }
        Some(mut grid) => {
            if let Some(seed) = common.seed {
                grid.seeds = vec![seed];
            }
            run_grid(file, grid, &out, common.json)
        }
    }
}

pub fn grid_summary_csv(summary: &[crate::train::GridSummaryRow]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.depth.to_string(),
                s.heads.to_string(),
                s.params.to_string(),
                fmt_f64(s.mean_acc),
                fmt_f64(s.std_acc),
                fmt_f64(s.final_mean_kappa),
            ]
        })
        .collect();
    output::csv_bytes(&["depth", "heads", "params", "mean_acc", "std_acc", "final_mean_kappa"], &rows)
}

/// Sub-directory of one grid point, relative to the grid output directory.
pub fn point_dir(depth: usize, heads: usize) -> String {
    format!("depth{depth}_heads{heads}")
}

fn run_grid(base: TrainFile, grid: GridSpec, out: &Path, json: bool) -> Result<()> {
    let echo = TrainFile {
        grid: Some(grid.clone()),
        ..base.clone()
    };
    let mut seeds = BTreeMap::from([("task".to_string(), base.task.seed)]);
    for (i, s) in grid.seeds.iter().enumerate() {
        seeds.insert(format!("init.{i}"), *s);
    }
    let grid_manifest = RunManifest::start("train", to_value(&echo)?, seeds);
    output::create_dir(out)?;
    let result = depth_heads_grid(&base.model, &grid.depths, &grid.head_counts, &grid.seeds, &base.task, &base.train)?;

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for run in &result.runs {
        let rel = format!("{}/seed{}", point_dir(run.depth, run.heads), run.seed);
        let dir = out.join(&rel);
        let single = TrainFile {
            model: grid_config(&base.model, run.depth, run.heads),
            task: base.task.clone(),
            train: TrainConfig {
                seed: run.seed,
                ..base.train.clone()
            },
            grid: None,
        };
        let manifest = RunManifest::start("train", to_value(&single)?, seeds_of(&single));
        match &run.outcome {
            Ok(r) => {
                for name in write_run(&dir, r, manifest)?.outputs {
                    outputs.push(format!("{rel}/{name}"));
                }
            }
            Err(msg) => {
                output::create_dir(&dir)?;
                let diag = serde_json::json!({ "error": msg, "config": single });
                output::write_atomic(&dir.join("error.json"), &output::to_json_bytes(&diag)?)?;
                outputs.push(format!("{rel}/error.json"));
                failures.push(format!("depth {} heads {} seed {}: {msg}", run.depth, run.heads, run.seed));
            }
        }
    }
    output::write_atomic(&out.join(GRID_SUMMARY), &grid_summary_csv(&result.summary)?)?;
    outputs.push(GRID_SUMMARY.into());
    grid_manifest.finish(out, outputs)?;
    if json {
        print!("{}", String::from_utf8_lossy(&output::to_json_bytes(&result.summary)?));
    }
    if !failures.is_empty() {
        return Err(Error::GridFailures(failures));
    }
    Ok(())
}
