//! IRSG surrogate checkpoints.
//!
//! Layout (little-endian): magic `IRSG`, `u32` version, `u32` length of the
//! config text, config as `key=value` lines, `u32` tensor count, then per
//! tensor: `u16` name length, name, `u8` rank, `u32` dims, `f32` values.

use std::path::Path;

use autodiff::{NamedTensor, Tensor};
use thiserror::Error;

use crate::surrogate::{SurrogateConfig, SurrogateError, SurrogateWeights};

pub const MAGIC: &[u8; 4] = b"IRSG";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("byte 0: not an IRSG checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("byte {offset}: need {needed} more bytes, {available} left")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("checkpoint config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("{0}")]
    Io(String),
}

fn join(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn config_to_text(c: &SurrogateConfig) -> String {
    format!(
        "height={}\nwidth={}\nplanes={}\nlevels={}\nencoder_channels={}\ndecoder_channels={}\n\
         depth_multiplier={}\ninput_depth_multiplier={}\nbatch_size={}\nlearning_rate={}\n\
         epochs={}\naugmentation={}\n",
        c.height,
        c.width,
        c.planes,
        c.levels,
        join(&c.encoder_channels),
        join(&c.decoder_channels),
        c.depth_multiplier,
        c.input_depth_multiplier,
        c.batch_size,
        c.learning_rate,
        c.epochs,
        c.augmentation
    )
}

pub fn config_from_text(text: &str) -> Result<SurrogateConfig, CheckpointError> {
    let mut c = SurrogateConfig::desk_scale();
    let bad = |k: &str, v: &str| CheckpointError::BadConfig(format!("bad value `{v}` for `{k}`"));
    let mut seen = std::collections::BTreeSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::BadConfig(format!("line `{line}` is not key=value")))?;
        let int = || v.parse::<usize>().map_err(|_| bad(k, v));
        let list = || -> Result<Vec<usize>, CheckpointError> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| x.parse().map_err(|_| bad(k, v))).collect()
        };
        match k {
            "height" => c.height = int()?,
            "width" => c.width = int()?,
            "planes" => c.planes = int()?,
            "levels" => c.levels = int()?,
            "encoder_channels" => c.encoder_channels = list()?,
            "decoder_channels" => c.decoder_channels = list()?,
            "depth_multiplier" => c.depth_multiplier = int()?,
            "input_depth_multiplier" => c.input_depth_multiplier = int()?,
            "batch_size" => c.batch_size = int()?,
            "learning_rate" => c.learning_rate = v.parse().map_err(|_| bad(k, v))?,
            "epochs" => c.epochs = int()?,
            "augmentation" => c.augmentation = v.parse().map_err(|_| bad(k, v))?,
            other => return Err(CheckpointError::BadConfig(format!("unknown key `{other}`"))),
        }
        seen.insert(k.to_string());
    }
    for required in ["height", "width", "planes", "levels", "encoder_channels", "decoder_channels"] {
        if !seen.contains(required) {
            return Err(CheckpointError::BadConfig(format!("missing key `{required}`")));
        }
    }
    Ok(c)
}

pub fn encode_checkpoint(weights: &SurrogateWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = config_to_text(weights.config());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(weights.params().len() as u32).to_le_bytes());
    for p in weights.params() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.tensor.shape().len() as u8);
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.tensor.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn utf8(&mut self, n: usize) -> Result<&'a str, CheckpointError> {
        let offset = self.pos;
        std::str::from_utf8(self.take(n)?).map_err(|_| CheckpointError::Malformed {
            offset,
            reason: "text is not UTF-8".into(),
        })
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SurrogateWeights, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let text_len = r.u32()? as usize;
    let config = config_from_text(r.utf8(text_len)?)?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.utf8(name_len)?.to_string();
        let rank = r.u8()? as usize;
        let shape_at = r.pos;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(4 * n)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let tensor = Tensor::new(shape, values).map_err(|e| CheckpointError::Malformed {
            offset: shape_at,
            reason: format!("tensor `{name}`: {e}"),
        })?;
        params.push(NamedTensor::new(name, tensor));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed {
            offset: r.pos,
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(SurrogateWeights::from_params(config, params)?)
}

pub fn save_checkpoint(path: &Path, weights: &SurrogateWeights) -> Result<(), CheckpointError> {
    super::write_file(path, &encode_checkpoint(weights)).map_err(CheckpointError::Io)
}

pub fn load_checkpoint(path: &Path) -> Result<SurrogateWeights, CheckpointError> {
    decode_checkpoint(&super::read_file(path).map_err(CheckpointError::Io)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::build_surrogate;

    #[test]
    fn config_text_round_trip() {
        let mut c = SurrogateConfig::full_scale();
        c.learning_rate = 0.1 + 0.2;
        assert_eq!(config_from_text(&config_to_text(&c)).unwrap(), c);
        assert!(matches!(config_from_text("height=1"), Err(CheckpointError::BadConfig(_))));
        assert!(matches!(config_from_text("colour=blue"), Err(CheckpointError::BadConfig(_))));
    }

    #[test]
    fn corrupt_inputs() {
        let w = build_surrogate(&SurrogateConfig::desk_scale(), 3).unwrap();
        let bytes = encode_checkpoint(&w);
        assert_eq!(decode_checkpoint(b"IRSX"), Err(CheckpointError::BadMagic));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(decode_checkpoint(&v2), Err(CheckpointError::UnsupportedVersion(2)));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint(&extra), Err(CheckpointError::Malformed { .. })));
    }
}
