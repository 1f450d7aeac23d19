//! Round-trip model parameters through the binary checkpoint format.
use attncond::model::io::{read_parameters, write_parameters};
use attncond::model::{ModelConfig, Parameters};

fn main() -> attncond::Result<()> {
    let config = ModelConfig::new(2, 4, 8, 4.0, 16, 8, 4);
    let params = Parameters::init(&config, 3);
    let mut bytes = Vec::new();
    write_parameters(&mut bytes, &params, &config)?;
    let (back, back_config) = read_parameters(&mut bytes.as_slice())?;
    println!("{} parameters, {} bytes, identical: {}", params.param_count(), bytes.len(), back == params && back_config == config);
    Ok(())
}
