//! A short training run on the modular-sum task with conditioning probes.
use attncond::model::ModelConfig;
use attncond::train::{train, TaskSpec, TrainConfig};

fn main() -> attncond::Result<()> {
    let task = TaskSpec::seq_sum_mod(4, 4, 4, 7);
    let model = ModelConfig::new(2, 4, 8, 4.0, 4, 4, task.num_classes());
    let tc = TrainConfig {
        steps: 1000,
        batch_size: 32,
        learning_rate: 1e-3,
        probe_every: 250,
        ..Default::default()
    };
    let r = train(&model, &task, &tc)?;
    for m in r.metrics.iter().step_by(100) {
        println!("step {:>5} loss {:.4} lr {:.2e}", m.step, m.loss, m.lr);
    }
    for c in &r.conditioning {
        println!("step {:>5} mean concat kappa {:.2}", c.step, c.mean_concat_kappa_across_layers);
    }
    println!("eval accuracy {:.3}", r.final_eval_accuracy);
    Ok(())
}
