//! ".ckpt" files: `CNNCKPT1`, u32 LE header length, a JSON header, then the
//! f32 LE payload of every entry in header order.

use std::fs;
use std::path::Path;

use cnnkit_core::image::NormalizeMode;
use cnnkit_core::nn::Model;
use cnnkit_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 8] = b"CNNCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    /// Offset from the start of the payload.
    pub byte_offset: u64,
}

/// Input preparation the weights were trained with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    pub normalize: NormalizeMode,
    pub image_size: usize,
    pub classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub arch_id: String,
    pub entries: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<Preprocess>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub tensors: Vec<Tensor<f32>>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, preprocess: Option<Preprocess>) -> Self {
        let mut offset = 0u64;
        let mut entries = Vec::new();
        let mut tensors = Vec::new();
        for (name, is_buffer, t) in model.state_entries() {
            entries.push(Entry {
                name: name.to_string(),
                kind: if is_buffer {
                    EntryKind::Buffer
                } else {
                    EntryKind::Param
                },
                shape: t.shape().to_vec(),
                byte_offset: offset,
            });
            offset += 4 * t.len() as u64;
            tensors.push(t.clone());
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            arch_id: model.arch().to_string(),
            entries,
            preprocess,
        };
        Self { header, tensors }
    }

    pub fn encode(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(
            12 + json.len() + self.tensors.iter().map(|t| 4 * t.len()).sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.get(..8) != Some(MAGIC.as_slice()) {
            return Err(Error::format(path, "missing CNNCKPT1 magic"));
        }
        let len = bytes
            .get(8..12)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| Error::format(path, "truncated header length"))?;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        let header: Header = serde_json::from_slice(json)
            .map_err(|e| Error::format(path, format!("invalid header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported format version {}", header.format_version),
            ));
        }
        let payload = &bytes[12 + len..];
        let mut tensors = Vec::with_capacity(header.entries.len());
        let mut expected_offset = 0u64;
        for e in &header.entries {
            if e.byte_offset != expected_offset {
                return Err(Error::format(
                    path,
                    format!(
                        "entry {} has offset {}, expected {expected_offset}",
                        e.name, e.byte_offset
                    ),
                ));
            }
            let count: usize = e.shape.iter().product();
            let start = e.byte_offset as usize;
            let raw = payload.get(start..start + 4 * count).ok_or_else(|| {
                Error::format(path, format!("truncated payload in entry {}", e.name))
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(
                Tensor::from_vec(&e.shape, data)
                    .map_err(|err| Error::format(path, format!("entry {}: {err}", e.name)))?,
            );
            expected_offset += 4 * count as u64;
        }
        if payload.len() as u64 != expected_offset {
            return Err(Error::format(
                path,
                format!(
                    "{} trailing payload bytes",
                    payload.len() as u64 - expected_offset
                ),
            ));
        }
        Ok(Self { header, tensors })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(Error::io(path))?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    /// Copies entries into `model`. Only names accepted by `select` take part,
    /// on both sides; the selected sequences must agree entry by entry, and
    /// the first disagreement is reported.
    pub fn apply_to(
        &self,
        model: &mut Model<f32>,
        path: &Path,
        select: impl Fn(&str) -> bool,
    ) -> Result<usize> {
        if self.header.arch_id != model.arch() {
            return Err(Error::format(
                path,
                format!(
                    "checkpoint architecture {} does not match model architecture {}",
                    self.header.arch_id,
                    model.arch()
                ),
            ));
        }
        let theirs: Vec<(&Entry, &Tensor<f32>)> = self
            .header
            .entries
            .iter()
            .zip(&self.tensors)
            .filter(|(e, _)| select(&e.name))
            .collect();
        let ours: Vec<(String, bool, Vec<usize>)> = model
            .state_entries()
            .filter(|(n, ..)| select(n))
            .map(|(n, b, t)| (n.to_string(), b, t.shape().to_vec()))
            .collect();
        for i in 0..theirs.len().max(ours.len()) {
            let divergence = match (theirs.get(i), ours.get(i)) {
                (Some((e, _)), Some((name, is_buffer, shape))) => {
                    let kind = if *is_buffer {
                        EntryKind::Buffer
                    } else {
                        EntryKind::Param
                    };
                    if &e.name != name {
                        Some(format!(
                            "entry {i}: checkpoint has {} where the model expects {name}",
                            e.name
                        ))
                    } else if e.kind != kind {
                        Some(format!(
                            "entry {name}: checkpoint kind {:?} but model expects {kind:?}",
                            e.kind
                        ))
                    } else if &e.shape != shape {
                        Some(format!(
                            "entry {name}: checkpoint shape {:?} but model expects {shape:?}",
                            e.shape
                        ))
                    } else {
                        None
                    }
                }
                (None, Some((name, ..))) => Some(format!("missing entry {name}")),
                (Some((e, _)), None) => Some(format!("unexpected entry {}", e.name)),
                (None, None) => None,
            };
            if let Some(msg) = divergence {
                return Err(Error::format(path, msg));
            }
        }
        for (e, t) in &theirs {
            let dst = model
                .state_tensor_mut(&e.name, e.kind == EntryKind::Buffer)
                .expect("entry validated against the model");
            dst.data_mut().copy_from_slice(t.data());
        }
        Ok(theirs.len())
    }
}

pub fn save(model: &Model<f32>, path: &Path, preprocess: Option<Preprocess>) -> Result<()> {
    Checkpoint::from_model(model, preprocess).write(path)
}

/// Loads every entry; names and shapes must match the model exactly.
pub fn load_into(model: &mut Model<f32>, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::read(path)?;
    ckpt.apply_to(model, path, |_| true)?;
    Ok(ckpt)
}
