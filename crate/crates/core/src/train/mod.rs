//! Deterministic desk-scale training on synthetic sequence tasks.

mod grid;
mod optim;
mod run;
mod task;

pub use grid::{depth_heads_grid, grid_config, GridResult, GridRun, GridSummaryRow};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use run::{argmax, check_compatible, probe_schedule, train, Evaluation, RunResult, StepMetric, TrainConfig, Trainer};
pub use task::{generate_batch, Batch, Stream, TaskKind, TaskSpec};
