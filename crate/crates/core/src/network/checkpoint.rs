//! Binary checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! "NNCK"            magic
//! u16               format version (1)
//! u32 + bytes       config block: UTF-8 `key = value` lines
//! per param tensor  u32 rank, rank × u32 extents, f32 values
//!                   (weights then bias, parametric layers in config order)
//! f64, f64          group means of modality 0 and 1
//! u32               CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::config::{Layer, NetworkConfig};
use crate::network::model::{LayerParams, Network, NetworkParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NNCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: NetworkParams<f32>,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn network(&self) -> Result<Network<f32>> {
        Network::new(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check(&self.config)?;
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let text = config_text(&self.config, &self.meta);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for t in self.params.tensors() {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for m in self.params.modality_means {
            out.extend_from_slice(&m.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.array()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        if bytes.len() < 10 {
            return Err(Error::Truncated("checkpoint shorter than its header".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            // A damaged file whose structure runs off the end was cut short;
            // anything else is corruption.
            return match parse_body(bytes) {
                Err(e @ Error::Truncated(_)) => Err(e),
                _ => Err(Error::Checksum { stored, computed }),
            };
        }
        let (ckpt, consumed) = parse_body(bytes)?;
        if consumed != body.len() {
            return Err(Error::Format(format!(
                "{} unexpected bytes before checksum",
                body.len() - consumed
            )));
        }
        Ok(ckpt)
    }
}

/// Parses everything after magic and version. Returns the checkpoint and the
/// number of bytes consumed (excluding the checksum).
fn parse_body(bytes: &[u8]) -> Result<(Checkpoint, usize)> {
    let mut r = Reader::new(bytes);
    r.skip(6)?;
    let text_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(text_len)?)
        .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let (config, meta) = parse_config_text(text)?;
    config.validate()?;
    let mut layers = Vec::new();
    for layer in config.param_layers() {
        let weights = r.tensor(&layer.weight_shape().expect("parametric layer"))?;
        let bias = if config.use_bias {
            Some(r.tensor(&[layer.bias_len().expect("parametric layer")])?)
        } else {
            None
        };
        layers.push(LayerParams { weights, bias });
    }
    let modality_means = [r.f64()?, r.f64()?];
    let consumed = r.pos;
    r.take(4)?;
    Ok((
        Checkpoint {
            config,
            params: NetworkParams {
                layers,
                modality_means,
            },
            meta,
        },
        consumed,
    ))
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn config_text(config: &NetworkConfig, meta: &TrainingMeta) -> String {
    let mut s = String::new();
    let i = config.input_shape;
    s.push_str(&format!("input = {},{},{},{}\n", i[0], i[1], i[2], i[3]));
    s.push_str(&format!("classes = {},{}\n", config.class_names[0], config.class_names[1]));
    s.push_str(&format!("bias = {}\n", config.use_bias));
    s.push_str(&format!("seed = {}\n", meta.seed));
    s.push_str(&format!("epochs = {}\n", meta.epochs));
    match meta.fold {
        Some(f) => s.push_str(&format!("fold = {f}\n")),
        None => s.push_str("fold = none\n"),
    }
    for l in &config.layers {
        s.push_str(&format!("layer = {l}\n"));
    }
    s
}

fn parse_config_text(text: &str) -> Result<(NetworkConfig, TrainingMeta)> {
    let bad = |m: String| Error::Format(format!("config block: {m}"));
    let mut input = None;
    let mut classes = None;
    let mut bias = None;
    let mut meta = TrainingMeta::default();
    let mut layers = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
        match k {
            "input" => {
                let dims: Vec<usize> = v
                    .split(',')
                    .map(|d| d.trim().parse().map_err(|_| bad(format!("bad input extent {d:?}"))))
                    .collect::<Result<_>>()?;
                let dims: [usize; 4] = dims.try_into().map_err(|_| bad("input must have 4 extents".into()))?;
                input = Some(dims);
            }
            "classes" => {
                let (a, b) = v.split_once(',').ok_or_else(|| bad("classes must be two names".into()))?;
                classes = Some([a.trim().to_string(), b.trim().to_string()]);
            }
            "bias" => bias = Some(v.parse::<bool>().map_err(|_| bad(format!("bad bias flag {v:?}")))?),
            "seed" => meta.seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
            "epochs" => meta.epochs = v.parse().map_err(|_| bad(format!("bad epochs {v:?}")))?,
            "fold" => {
                meta.fold = match v {
                    "none" => None,
                    _ => Some(v.parse().map_err(|_| bad(format!("bad fold {v:?}")))?),
                }
            }
            "layer" => layers.push(v.parse::<Layer>()?),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let config = NetworkConfig {
        layers,
        input_shape: input.ok_or_else(|| bad("missing input".into()))?,
        class_names: classes.ok_or_else(|| bad("missing classes".into()))?,
        use_bias: bias.ok_or_else(|| bad("missing bias".into()))?,
    };
    Ok((config, meta))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated(format!(
                "needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn skip(&mut self, n: usize) -> Result<()> {
        self.take(n).map(|_| ())
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Tensor<f32>> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > crate::tensor::MAX_RANK {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                actual: vec![],
            });
        }
        let shape: Vec<usize> = (0..rank).map(|_| self.u32().map(|e| e as usize)).collect::<Result<_>>()?;
        if shape != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                actual: shape,
            });
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(&shape, data)
    }
}
