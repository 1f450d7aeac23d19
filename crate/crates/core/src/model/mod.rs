//! From-scratch multi-head attention classifier with exact backpropagation.

mod backward;
mod config;
mod forward;
pub mod io;
mod params;

pub use backward::{backward, batch_gradients, cross_entropy, sample_loss};
pub use config::ModelConfig;
pub use forward::{attention_head_forward, block_forward, model_forward, ForwardTrace, HeadTrace, LayerTrace};
pub use params::{HeadParams, LayerParams, NormParams, Parameters};

/// Parameters for `config` drawn from `seed`.
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Parameters {
    Parameters::init(config, seed)
}
