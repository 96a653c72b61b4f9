#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

/// Small, fast run config over the default toy benchmark.
pub fn tiny_config(output_dir: &Path) -> Value {
    json!({
        "dataset": { "toy": { "seed": 3 } },
        "output_dir": output_dir,
        "train": {
            "epochs": 2,
            "batch_size": 32,
            "widths": {
                "generator_hidden": 32,
                "regressor_hidden": 16,
                "coupled_disc_hidden": 8,
                "critic_hidden": 24
            },
            "classifier": { "epochs": 5 }
        },
        "eval": {
            "synthesis": { "n_per_class": 20 },
            "softmax": { "epochs": 5 }
        }
    })
}

pub fn write_json(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn pad8(buf: &mut Vec<u8>) {
    while !buf.len().is_multiple_of(8) {
        buf.push(0);
    }
}

fn tag(buf: &mut Vec<u8>, ty: u32, len: usize) {
    buf.extend_from_slice(&ty.to_le_bytes());
    buf.extend_from_slice(&(len as u32).to_le_bytes());
}

/// Writes an uncompressed level-5 MAT file of real double matrices. `values`
/// are column-major.
pub fn write_mat_v5(path: &Path, vars: &[(&str, Vec<usize>, Vec<f64>)]) {
    let mut out = Vec::new();
    let mut text = b"MATLAB 5.0 MAT-file, test fixture".to_vec();
    text.resize(116, b' ');
    out.extend_from_slice(&text);
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&0x0100u16.to_le_bytes());
    out.extend_from_slice(b"IM");
    for (name, dims, values) in vars {
        assert_eq!(dims.iter().product::<usize>(), values.len());
        let mut body = Vec::new();
        // array flags: double class
        tag(&mut body, 6, 8);
        body.extend_from_slice(&6u32.to_le_bytes());
        body.extend_from_slice(&0u32.to_le_bytes());
        tag(&mut body, 5, 4 * dims.len());
        for &d in dims {
            body.extend_from_slice(&(d as i32).to_le_bytes());
        }
        pad8(&mut body);
        tag(&mut body, 1, name.len());
        body.extend_from_slice(name.as_bytes());
        pad8(&mut body);
        tag(&mut body, 9, 8 * values.len());
        for v in values {
            body.extend_from_slice(&v.to_le_bytes());
        }
        pad8(&mut body);
        tag(&mut out, 14, body.len());
        out.extend_from_slice(&body);
    }
    fs::write(path, out).unwrap();
}
