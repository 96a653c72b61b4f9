//! Checkpoint container.
//!
//! ```text
//! magic (8 bytes) | version u32 LE | header length u64 LE | header JSON | payload
//! ```
//!
//! The header holds the config, model dimensions, step counter, RNG position
//! and an index of named tensors; the payload is their concatenated `f64`
//! values in little-endian order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Optimizers, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::model::{init_model, ModelDims};
use crate::nn::TensorMap;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BMCOGAN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const HISTORY_WIDTH: usize = 12;

#[derive(Serialize, Deserialize)]
struct RngPosition {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    dims: ModelDims,
    step: u64,
    rng: RngPosition,
    tensors: Vec<TensorEntry>,
    payload_values: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Writes `state` to `path` via a temporary file and rename.
pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tensors = TensorMap::new();
    state.model.export(&mut tensors);
    for (prefix, adam) in Optimizers::PREFIXES.iter().zip(state.optimizers.all()) {
        adam.export(prefix, &mut tensors);
    }
    let history: Vec<f64> = state.history.iter().flat_map(|r| r.to_vec()).collect();
    tensors.insert("history", vec![state.history.len(), HISTORY_WIDTH], history);

    let mut index = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    let mut offset = 0;
    for (name, t) in tensors.iter() {
        index.push(TensorEntry {
            name: name.clone(),
            dims: t.dims.clone(),
            offset,
        });
        offset += t.data.len();
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        config: state.config.clone(),
        dims: state.model.dims,
        step: state.step,
        rng: RngPosition {
            seed: crate::datasets::hex(&state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        tensors: index,
        payload_values: offset,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut bytes = Vec::with_capacity(20 + header_json.len() + payload.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&payload);

    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn parse_seed(hex: &str) -> Result<[u8; 32]> {
    if hex.len() != 64 {
        return Err(bad("rng seed must be 64 hex digits"));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| bad("rng seed is not hex"))?;
    }
    Ok(seed)
}

/// Reads a checkpoint written by [`save_checkpoint`]. Nothing is returned
/// unless the whole file parses.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| bad(format!("corrupt header: {e}")))?;
    let payload = &bytes[header_end..];
    if payload.len() != header.payload_values * 8 {
        return Err(bad(format!(
            "payload holds {} bytes, header declares {} values (file truncated?)",
            payload.len(),
            header.payload_values
        )));
    }

    let mut tensors = TensorMap::new();
    for entry in &header.tensors {
        let len: usize = entry.dims.iter().product();
        let end = entry
            .offset
            .checked_add(len)
            .filter(|&e| e <= header.payload_values);
        let end =
            end.ok_or_else(|| bad(format!("tensor `{}` lies outside the payload", entry.name)))?;
        let data = payload[entry.offset * 8..end * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(&entry.name, entry.dims.clone(), data);
    }

    header.config.validate()?;
    let mut model = init_model(header.dims, 0)?;
    model.import(&tensors)?;
    let mut optimizers = Optimizers::new(&model, &header.config);
    for (prefix, adam) in Optimizers::PREFIXES.iter().zip(optimizers.all_mut()) {
        adam.import(prefix, &tensors)?;
    }
    let hist = tensors.get("history")?;
    if hist.dims.len() != 2 || hist.dims[1] != HISTORY_WIDTH {
        return Err(bad("history tensor has the wrong shape"));
    }
    let history = hist
        .data
        .chunks_exact(HISTORY_WIDTH)
        .map(|c| LossReport::from_slice(c).expect("width checked"))
        .collect();

    let mut rng = ChaCha8Rng::from_seed(parse_seed(&header.rng.seed)?);
    rng.set_stream(header.rng.stream);
    let word_pos: u128 = header
        .rng
        .word_pos
        .parse()
        .map_err(|_| bad("bad rng word position"))?;
    rng.set_word_pos(word_pos);

    Ok(TrainState {
        config: header.config,
        model,
        optimizers,
        step: header.step,
        rng,
        history,
    })
}
