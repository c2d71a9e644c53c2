//! Single-file model container.
//!
//! Layout (all integers little-endian):
//! `magic[8] | version u32 | crc32 u32 | meta_len u64 | meta (JSON) | payload (f32...)`.
//! The checksum covers everything after itself.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{NormParams, Tensor};
use crate::snn::{LayerParams, Model, NetworkSpec};
use crate::training::TrainConfig;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"DTSNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train: Option<TrainConfig>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ParamMeta {
    Conv { weight: Vec<usize> },
    Fc { weight: Vec<usize>, bias: usize },
    Norm { channels: usize, momentum: f32, eps: f32 },
    Classifier { weight: Vec<usize>, bias: usize },
    Stateless,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    spec: NetworkSpec,
    train: Option<TrainConfig>,
    seed: u64,
    params: Vec<ParamMeta>,
    payload_floats: usize,
}

fn push(payload: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut params = Vec::new();
    for p in ckpt.model.params() {
        params.push(match p {
            LayerParams::Conv { weight } => {
                push(&mut payload, weight.data());
                ParamMeta::Conv {
                    weight: weight.shape().to_vec(),
                }
            }
            LayerParams::Fc { weight, bias } | LayerParams::Classifier { weight, bias } => {
                push(&mut payload, weight.data());
                push(&mut payload, bias.data());
                let (weight, bias) = (weight.shape().to_vec(), bias.len());
                if matches!(p, LayerParams::Fc { .. }) {
                    ParamMeta::Fc { weight, bias }
                } else {
                    ParamMeta::Classifier { weight, bias }
                }
            }
            LayerParams::Norm(n) => {
                for v in [&n.gamma, &n.beta, &n.running_mean, &n.running_var] {
                    push(&mut payload, v);
                }
                ParamMeta::Norm {
                    channels: n.channels(),
                    momentum: n.momentum,
                    eps: n.eps,
                }
            }
            LayerParams::Stateless => ParamMeta::Stateless,
        });
    }
    let meta = Meta {
        spec: ckpt.model.spec().clone(),
        train: ckpt.train.clone(),
        seed: ckpt.seed,
        params,
        payload_floats: payload.len() / 4,
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| Error::Corrupt(format!("metadata encoding failed: {e}")))?;
    let mut body = Vec::with_capacity(8 + meta.len() + payload.len());
    body.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    body.extend_from_slice(&meta);
    body.extend_from_slice(&payload);
    let mut out = Vec::with_capacity(16 + body.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    floats: std::slice::ChunksExact<'a, u8>,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let b = self
                .floats
                .next()
                .ok_or_else(|| Error::Corrupt("payload shorter than the metadata declares".into()))?;
            out.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        Ok(out)
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let data = self.take(shape.iter().product())?;
        Tensor::new(shape.to_vec(), data)
    }
}

fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    if bytes.len() < HEADER_LEN || bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "not a checkpoint file (bad magic)".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let stored = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let body = &bytes[16..];
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Corrupt(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let meta_len = u64::from_le_bytes(body[..8].try_into().expect("8 bytes")) as usize;
    let meta_bytes = body
        .get(8..8 + meta_len)
        .ok_or_else(|| Error::Corrupt("metadata extends past the end of the file".into()))?;
    let meta: Meta =
        serde_json::from_slice(meta_bytes).map_err(|e| Error::Corrupt(format!("unreadable metadata: {e}")))?;
    let payload = &body[8 + meta_len..];
    if payload.len() != meta.payload_floats * 4 {
        return Err(Error::Corrupt(format!(
            "payload holds {} bytes, metadata declares {} floats",
            payload.len(),
            meta.payload_floats
        )));
    }
    let mut r = Reader {
        floats: payload.chunks_exact(4),
    };
    let mut params = Vec::with_capacity(meta.params.len());
    for p in &meta.params {
        params.push(match p {
            ParamMeta::Conv { weight } => LayerParams::Conv {
                weight: r.tensor(weight)?,
            },
            ParamMeta::Fc { weight, bias } => LayerParams::Fc {
                weight: r.tensor(weight)?,
                bias: r.tensor(&[*bias])?,
            },
            ParamMeta::Classifier { weight, bias } => LayerParams::Classifier {
                weight: r.tensor(weight)?,
                bias: r.tensor(&[*bias])?,
            },
            ParamMeta::Norm { channels, momentum, eps } => LayerParams::Norm(NormParams {
                gamma: r.take(*channels)?,
                beta: r.take(*channels)?,
                running_mean: r.take(*channels)?,
                running_var: r.take(*channels)?,
                momentum: *momentum,
                eps: *eps,
            }),
            ParamMeta::Stateless => LayerParams::Stateless,
        });
    }
    Ok(Checkpoint {
        model: Model::from_parts(meta.spec, params)?,
        train: meta.train,
        seed: meta.seed,
    })
}

/// Writes `ckpt` atomically: the bytes go to a sibling temporary file that
/// is renamed over `path` once complete.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode(ckpt)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::arg(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
