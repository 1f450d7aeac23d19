//! Forward pass through a freshly initialized model, then the per-layer
//! conditioning of the concatenated head outputs.
use attncond::model::{model_forward, ModelConfig, Parameters};
use attncond::probe::probe_batch;
use attncond::train::{generate_batch, Stream, TaskSpec};

fn main() -> attncond::Result<()> {
    let task = TaskSpec::seq_sum_mod(16, 32, 8, 0);
    let (batch, _) = generate_batch(&task, 16, Stream::Probe, 0);
    for heads in [2, 4, 8] {
        let config = ModelConfig::new(2, heads, 16, 4.0, 16, 32, 8);
        let params = Parameters::init(&config, 0);
        let (logits, trace) = model_forward(&batch[0], &params, &config)?;
        let report = probe_batch(&params, &config, &batch)?;
        println!("h={heads}: {} params, {} logits, concat shape {:?}", params.param_count(), logits.len(), trace.layers[0].concat.shape());
        for layer in &report.per_layer {
            println!("  layer {}: concat kappa {}", layer.layer, layer.concat_kappa);
        }
    }
    Ok(())
}
