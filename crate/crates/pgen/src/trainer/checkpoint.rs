//! Checkpoint persistence.
//!
//! File layout, little-endian throughout:
//!
//! ```text
//! magic "PGEN" | version u8 | manifest length u32 | manifest UTF-8 | payload
//! ```
//!
//! The manifest is `key=value` lines: network config fields, trainer
//! counters, RNG state, the vocabulary as a comma-separated code-point
//! list, then one `tensor=<name>:<rows>x<cols>` line per tensor. The
//! payload is each tensor's float64 values, row-major, in manifest order:
//! parameters first, then the Adam first and second moments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, NetworkParams};
use crate::numerics::Rng;

use super::AdamState;

pub const MAGIC: [u8; 4] = *b"PGEN";
pub const FORMAT_VERSION: u8 = 0x01;

/// Everything needed to resume training or to generate: config,
/// vocabulary, parameters, optimizer state, epoch counter, and the train
/// RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub vocab: Vocabulary,
    pub params: NetworkParams,
    pub adam: AdamState,
    pub epoch_index: u64,
    pub rng: Rng,
}

impl Checkpoint {
    /// Serializes and writes atomically (temp file, then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.matches_config(&self.config)?;
        let c = &self.config;
        let mut manifest = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(manifest, "{k}={v}");
        };
        line("preset", c.preset.to_string());
        line("cell", c.cell.to_string());
        line("vocab_size", c.vocab_size.to_string());
        line("hidden1", c.hidden1.to_string());
        line("hidden2", c.hidden2.to_string());
        line("dense1", c.dense1.to_string());
        line("dense2", c.dense2.to_string());
        line("dropout", c.dropout.to_string());
        line("window", c.window.to_string());
        line("epoch_index", self.epoch_index.to_string());
        line("adam_step", self.adam.step_count().to_string());
        line("rng_seed", self.rng.seed().to_string());
        line(
            "rng_state",
            self.rng.state().iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
        );
        line(
            "vocab",
            self.vocab
                .chars()
                .iter()
                .map(|ch| (*ch as u32).to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if self.vocab.size() != c.vocab_size {
            return Err(Error::shape(
                "checkpoint",
                format!("vocabulary size {} vs config {}", self.vocab.size(), c.vocab_size),
            ));
        }

        let (m, v) = self.adam.moments();
        let mut tensors: Vec<(String, &crate::numerics::Tensor2)> = self.params.tensors();
        tensors.extend(m.tensors().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
        tensors.extend(v.tensors().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
        for (name, t) in &tensors {
            let _ = writeln!(manifest, "tensor={name}:{}x{}", t.rows(), t.cols());
        }

        let manifest_bytes = manifest.into_bytes();
        let payload_len: usize = tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(4 + 1 + 4 + manifest_bytes.len() + payload_len);
        out.extend_from_slice(&MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest_bytes);
        for (_, t) in &tensors {
            for value in t.data() {
                out.extend_from_slice(&value.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 4 {
            return Err(Error::NotACheckpoint);
        }
        if bytes[..4] != MAGIC {
            return Err(Error::NotACheckpoint);
        }
        if bytes.len() < 9 {
            return Err(Error::TruncatedCheckpoint("header".into()));
        }
        let version = bytes[4];
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let manifest_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let payload_start = 9 + manifest_len;
        if bytes.len() < payload_start {
            return Err(Error::TruncatedCheckpoint("manifest".into()));
        }
        let manifest = std::str::from_utf8(&bytes[9..payload_start])
            .map_err(|_| Error::CorruptCheckpoint("manifest is not UTF-8".into()))?;

        let mut scalars: HashMap<&str, &str> = HashMap::new();
        let mut tensor_specs: Vec<(String, usize, usize)> = Vec::new();
        for raw in manifest.lines() {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::CorruptCheckpoint(format!("bad manifest line {raw:?}")))?;
            if key == "tensor" {
                let (name, shape) = value.split_once(':').ok_or_else(|| {
                    Error::CorruptCheckpoint(format!("bad tensor line {raw:?}"))
                })?;
                let (rows, cols) = shape.split_once('x').ok_or_else(|| {
                    Error::CorruptCheckpoint(format!("bad tensor shape {shape:?}"))
                })?;
                tensor_specs.push((
                    name.to_string(),
                    parse(rows, "tensor rows")?,
                    parse(cols, "tensor cols")?,
                ));
            } else {
                scalars.insert(key, value);
            }
        }
        let get = |key: &str| -> Result<&str> {
            scalars
                .get(key)
                .copied()
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing manifest key {key}")))
        };

        let config = NetworkConfig {
            preset: get("preset")?.parse()
                .map_err(|_| Error::CorruptCheckpoint("bad preset".into()))?,
            cell: get("cell")?.parse()
                .map_err(|_| Error::CorruptCheckpoint("bad cell".into()))?,
            vocab_size: parse(get("vocab_size")?, "vocab_size")?,
            hidden1: parse(get("hidden1")?, "hidden1")?,
            hidden2: parse(get("hidden2")?, "hidden2")?,
            dense1: parse(get("dense1")?, "dense1")?,
            dense2: parse(get("dense2")?, "dense2")?,
            dropout: parse(get("dropout")?, "dropout")?,
            window: parse(get("window")?, "window")?,
        };
        config
            .validate()
            .map_err(|e| Error::CorruptCheckpoint(format!("invalid config: {e}")))?;

        let epoch_index: u64 = parse(get("epoch_index")?, "epoch_index")?;
        let adam_step: u64 = parse(get("adam_step")?, "adam_step")?;
        let rng_seed: u64 = parse(get("rng_seed")?, "rng_seed")?;
        let rng_words: Vec<u64> = get("rng_state")?
            .split(',')
            .map(|w| parse(w, "rng_state"))
            .collect::<Result<_>>()?;
        let rng_state: [u64; 4] = rng_words
            .try_into()
            .map_err(|_| Error::CorruptCheckpoint("rng_state needs 4 words".into()))?;

        let vocab_chars: Vec<char> = get("vocab")?
            .split(',')
            .map(|cp| {
                let code: u32 = parse(cp, "vocab code point")?;
                char::from_u32(code).ok_or_else(|| {
                    Error::CorruptCheckpoint(format!("invalid code point {code}"))
                })
            })
            .collect::<Result<_>>()?;
        let vocab = Vocabulary::from_sorted_chars(vocab_chars)
            .map_err(|e| Error::CorruptCheckpoint(format!("bad vocabulary: {e}")))?;
        if vocab.size() != config.vocab_size {
            return Err(Error::CorruptCheckpoint(format!(
                "vocabulary has {} characters, config says {}",
                vocab.size(),
                config.vocab_size
            )));
        }

        // The manifest must list exactly the tensors the config implies,
        // in canonical order.
        let mut params = NetworkParams::zeros(&config)
            .map_err(|e| Error::CorruptCheckpoint(format!("invalid config: {e}")))?;
        let mut adam_m = params.zeros_like();
        let mut adam_v = params.zeros_like();
        {
            let expected: Vec<(String, usize, usize)> = {
                let base = params.tensors();
                let mut all: Vec<(String, usize, usize)> = base
                    .iter()
                    .map(|(n, t)| (n.clone(), t.rows(), t.cols()))
                    .collect();
                all.extend(base.iter().map(|(n, t)| (format!("adam.m.{n}"), t.rows(), t.cols())));
                all.extend(base.iter().map(|(n, t)| (format!("adam.v.{n}"), t.rows(), t.cols())));
                all
            };
            if tensor_specs != expected {
                return Err(Error::CorruptCheckpoint(
                    "tensor manifest does not match the configuration".into(),
                ));
            }
        }

        let payload = &bytes[payload_start..];
        let expected_len: usize = tensor_specs.iter().map(|(_, r, c)| r * c * 8).sum();
        if payload.len() < expected_len {
            return Err(Error::TruncatedCheckpoint(format!(
                "payload is {} bytes, manifest implies {}",
                payload.len(),
                expected_len
            )));
        }
        if payload.len() > expected_len {
            return Err(Error::CorruptCheckpoint(format!(
                "{} trailing bytes after payload",
                payload.len() - expected_len
            )));
        }

        let mut offset = 0usize;
        let mut fill = |target: &mut NetworkParams| -> Result<()> {
            for (name, t) in target.tensors_mut() {
                for value in t.data_mut() {
                    let word: [u8; 8] = payload[offset..offset + 8].try_into().unwrap();
                    let x = f64::from_le_bytes(word);
                    if !x.is_finite() {
                        return Err(Error::CorruptCheckpoint(format!(
                            "non-finite value in tensor {name}"
                        )));
                    }
                    *value = x;
                    offset += 8;
                }
            }
            Ok(())
        };
        fill(&mut params)?;
        fill(&mut adam_m)?;
        fill(&mut adam_v)?;

        Ok(Checkpoint {
            config,
            vocab,
            params,
            adam: AdamState::from_parts(adam_m, adam_v, adam_step),
            epoch_index,
            rng: Rng::from_state(rng_seed, rng_state),
        })
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::CorruptCheckpoint(format!("cannot parse {what} from {s:?}")))
}
