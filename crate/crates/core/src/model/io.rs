//! Flat binary container for [`Parameters`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "ATTNPRM1"
//! header_len   u64
//! header       header_len bytes of JSON: {"config": ModelConfig, "blocks": [name, ...]}
//! block_count  u64
//! block_count × { len: u64, values: len × f64 }
//! ```
//!
//! Blocks appear in the canonical order documented on [`Parameters`].

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Parameters};

pub const MAGIC: &[u8; 8] = b"ATTNPRM1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    blocks: Vec<String>,
}

fn parse_err(message: impl Into<String>) -> Error {
    Error::Parse {
        what: "parameter container".into(),
        message: message.into(),
    }
}

fn io_err(e: std::io::Error) -> Error {
    parse_err(e.to_string())
}

pub fn write_parameters(w: &mut impl Write, params: &Parameters, config: &ModelConfig) -> Result<()> {
    let blocks = params.blocks();
    let header = Header {
        config: config.clone(),
        blocks: blocks.iter().map(|(n, _)| n.clone()).collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| parse_err(e.to_string()))?;
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header).map_err(io_err)?;
    w.write_all(&(blocks.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (_, m) in blocks {
        w.write_all(&(m.len() as u64).to_le_bytes()).map_err(io_err)?;
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_parameters(r: &mut impl Read) -> Result<(Parameters, ModelConfig)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(parse_err("bad magic"));
    }
    let header_len = read_u64(r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| parse_err(e.to_string()))?;
    header.config.validate()?;
    let mut params = Parameters::zeros(&header.config);
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    if names != header.blocks {
        return Err(parse_err("block list does not match the config"));
    }
    let count = read_u64(r)? as usize;
    if count != names.len() {
        return Err(parse_err(format!("expected {} blocks, found {count}", names.len())));
    }
    for (name, block) in names.iter().zip(params.blocks_mut()) {
        let len = read_u64(r)? as usize;
        if len != block.len() {
            return Err(parse_err(format!("block {name} has {len} values, expected {}", block.len())));
        }
        let mut buf = [0u8; 8];
        for v in block.as_mut_slice() {
            r.read_exact(&mut buf).map_err(io_err)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    if !params.is_finite() {
        return Err(parse_err("non-finite parameter value"));
    }
    Ok((params, header.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut c = ModelConfig::new(2, 2, 3, 1.5, 7, 4, 3);
        for ln in [true, false] {
            c.use_layernorm = ln;
            let p = Parameters::init(&c, 5);
            let mut buf = Vec::new();
            write_parameters(&mut buf, &p, &c).unwrap();
            let (back, cfg) = read_parameters(&mut buf.as_slice()).unwrap();
            assert_eq!(back, p);
            assert_eq!(cfg, c);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let c = ModelConfig::new(1, 1, 2, 1.0, 3, 2, 2);
        let p = Parameters::init(&c, 5);
        let mut buf = Vec::new();
        write_parameters(&mut buf, &p, &c).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_parameters(&mut bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(read_parameters(&mut &truncated[..]).is_err());
    }
}
