//! Small depth × heads grid with the head dimension held fixed.
use attncond::model::ModelConfig;
use attncond::train::{depth_heads_grid, TaskSpec, TrainConfig};

fn main() -> attncond::Result<()> {
    let task = TaskSpec::seq_sum_mod(4, 4, 4, 7);
    let base = ModelConfig::new(2, 4, 8, 4.0, 4, 4, task.num_classes());
    let tc = TrainConfig {
        steps: 300,
        batch_size: 32,
        learning_rate: 1e-3,
        probe_every: 300,
        ..Default::default()
    };
    let grid = depth_heads_grid(&base, &[1, 2], &[2, 4], &[0, 1], &task, &tc)?;
    println!("depth heads   params  mean_acc  final_kappa");
    for row in &grid.summary {
        println!("{:>5} {:>5} {:>8} {:>9.3} {:>12.2}", row.depth, row.heads, row.params, row.mean_acc, row.final_mean_kappa);
    }
    Ok(())
}
