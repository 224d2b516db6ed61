//! Checkpoint container.
//!
//! A checkpoint is a UTF-8 text header followed by raw little-endian `f64`
//! arrays:
//!
//! ```text
//! imu-gesture checkpoint
//! version: 1
//! variant: B
//! input_dim: 6
//! hidden_sizes: 64,64,64
//! num_classes: 10
//! dropout_rate: 0.5
//! input_relu: false
//! window_len: 250
//! gate_order: i,f,g,o
//! byte_order: little-endian
//! dtype: f64
//! arrays: layer0.W 256x6;layer0.U 256x64;layer0.b 256x1;...;dense.W 10x64;dense.b 10x1
//! end_header
//! <payload>
//! ```
//!
//! The payload holds the arrays in the listed order (per layer `W, U, b`,
//! then `dense.W`, `dense.b`), each row-major, with no padding.

use std::collections::HashMap;
use std::path::Path;

use super::config::{ModelConfig, Variant};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const MAGIC: &str = "imu-gesture checkpoint";
const END: &str = "end_header\n";
pub const CHECKPOINT_VERSION: u32 = 1;

fn array_list(config: &ModelConfig) -> String {
    ModelParams::layout(config)
        .iter()
        .map(|(name, (r, c))| format!("{name} {r}x{c}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Serializes parameters and their config into checkpoint bytes.
pub fn encode_checkpoint(params: &ModelParams, config: &ModelConfig) -> Result<Vec<u8>> {
    config.validate()?;
    params.check_shapes(config)?;
    let hidden = config
        .hidden_sizes
        .iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let header = format!(
        "{MAGIC}\nversion: {CHECKPOINT_VERSION}\nvariant: {}\ninput_dim: {}\nhidden_sizes: {hidden}\n\
         num_classes: {}\ndropout_rate: {:?}\ninput_relu: {}\nwindow_len: {}\ngate_order: i,f,g,o\n\
         byte_order: little-endian\ndtype: f64\narrays: {}\n{END}",
        config.variant,
        config.input_dim,
        config.num_classes,
        config.dropout_rate,
        config.input_relu,
        config.window_len,
        array_list(config),
    );
    let mut bytes = header.into_bytes();
    for arr in params.arrays() {
        for x in arr {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn save_checkpoint(params: &ModelParams, config: &ModelConfig, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, config)?;
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ModelConfig)> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&bytes)
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedCheckpoint(msg.into())
}

fn field<'a>(fields: &'a HashMap<&str, &str>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .copied()
        .ok_or_else(|| malformed(format!("missing header field {key:?}")))
}

fn parse_field<T: std::str::FromStr>(fields: &HashMap<&str, &str>, key: &str) -> Result<T> {
    let raw = field(fields, key)?;
    raw.parse()
        .map_err(|_| malformed(format!("bad value {raw:?} for {key:?}")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, ModelConfig)> {
    let end = bytes
        .windows(END.len())
        .position(|w| w == END.as_bytes())
        .ok_or_else(|| malformed("header terminator not found"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed("header is not UTF-8"))?;
    let payload = &bytes[end + END.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(malformed("missing magic line"));
    }
    let mut fields = HashMap::new();
    for line in lines {
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| malformed(format!("bad header line {line:?}")))?;
        fields.insert(key, value);
    }

    let version: u32 = parse_field(&fields, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if field(&fields, "gate_order")? != "i,f,g,o" {
        return Err(malformed("unsupported gate order"));
    }
    if field(&fields, "byte_order")? != "little-endian" || field(&fields, "dtype")? != "f64" {
        return Err(malformed("unsupported payload encoding"));
    }

    let variant: Variant = field(&fields, "variant")?
        .parse()
        .map_err(|_| malformed("bad variant"))?;
    let hidden_sizes = field(&fields, "hidden_sizes")?
        .split(',')
        .map(|s| s.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| malformed("bad hidden_sizes"))?;
    let config = ModelConfig {
        variant,
        input_dim: parse_field(&fields, "input_dim")?,
        hidden_sizes,
        num_classes: parse_field(&fields, "num_classes")?,
        dropout_rate: parse_field(&fields, "dropout_rate")?,
        input_relu: parse_field(&fields, "input_relu")?,
        window_len: parse_field(&fields, "window_len")?,
    };
    config
        .validate()
        .map_err(|e| malformed(format!("invalid config: {e}")))?;

    let expected = ModelParams::layout(&config);
    let stored: Vec<&str> = field(&fields, "arrays")?.split(';').collect();
    if stored.len() != expected.len() {
        return Err(Error::ShapeMismatch {
            array: "array list".into(),
            expected: format!("{} arrays", expected.len()),
            found: format!("{} arrays", stored.len()),
        });
    }
    for ((name, (r, c)), entry) in expected.iter().zip(&stored) {
        let want = format!("{name} {r}x{c}");
        if *entry != want {
            return Err(Error::ShapeMismatch {
                array: name.clone(),
                expected: format!("{r}x{c}"),
                found: entry.to_string(),
            });
        }
    }

    let mut params = ModelParams::zeros(&config);
    let total = params.num_params();
    if payload.len() != total * 8 {
        return Err(malformed(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            total * 8
        )));
    }
    let mut chunks = payload.chunks_exact(8);
    for arr in params.arrays_mut() {
        for (x, chunk) in arr.iter_mut().zip(&mut chunks) {
            *x = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
    }
    Ok((params, config))
}
