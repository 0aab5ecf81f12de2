//! Binary weight files.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, a JSON header
//! describing the architecture and tensor order, then every tensor as
//! little-endian `f32` values in header order.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{ConvLayer, ConvShape, ConvStack};
use super::classifier::ClassifierModel;
use super::config::ModelConfig;
use super::head::Head;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MRWCKPT\x01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Classifier,
    Backbone,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: Kind,
    backbone_name: String,
    layers: Vec<ConvShape>,
    #[serde(default)]
    model: Option<ModelConfig>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {msg}", path.display()))
}

fn backbone_tensors<'a>(stack: &'a ConvStack, out: &mut Vec<(String, Vec<usize>, &'a [f32])>) {
    for (i, l) in stack.layers.iter().enumerate() {
        out.push((format!("backbone.{i}.weight"), l.weight.shape().to_vec(), l.weight.as_slice().expect("standard layout")));
        out.push((format!("backbone.{i}.bias"), l.bias.shape().to_vec(), l.bias.as_slice().expect("standard layout")));
    }
}

fn write_file(
    path: &Path,
    kind: Kind,
    backbone_name: &str,
    stack: &ConvStack,
    model: Option<&ModelConfig>,
    tensors: Vec<(String, Vec<usize>, &[f32])>,
) -> Result<()> {
    let header = Header {
        kind,
        backbone_name: backbone_name.to_string(),
        layers: stack.shapes(),
        model: model.cloned(),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry { name: name.clone(), shape: shape.clone() })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let floats: usize = tensors.iter().map(|(_, _, d)| d.len()).sum();
    let mut bytes = Vec::with_capacity(16 + header.len() + 4 * floats);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for (_, _, data) in &tensors {
        for v in data.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Loaded {
    header: Header,
    tensors: std::collections::HashMap<String, (Vec<usize>, Vec<f32>)>,
}

fn read_file(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad(path, "not a weight file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad(path, "truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..body_start]).map_err(|e| bad(path, format!("bad header: {e}")))?;
    let mut offset = body_start;
    let mut tensors = std::collections::HashMap::new();
    for entry in &header.tensors {
        let count: usize = entry.shape.iter().product();
        let end = offset + 4 * count;
        if end > bytes.len() {
            return Err(bad(path, format!("truncated tensor `{}`", entry.name)));
        }
        let data = bytes[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.insert(entry.name.clone(), (entry.shape.clone(), data));
        offset = end;
    }
    if offset != bytes.len() {
        return Err(bad(path, "trailing bytes after tensors"));
    }
    Ok(Loaded { header, tensors })
}

impl Loaded {
    fn take2(&mut self, path: &Path, name: &str) -> Result<Array2<f32>> {
        let (shape, data) = self.tensors.remove(name).ok_or_else(|| bad(path, format!("missing tensor `{name}`")))?;
        match shape[..] {
            [r, c] => Array2::from_shape_vec((r, c), data).map_err(|e| bad(path, e)),
            _ => Err(bad(path, format!("tensor `{name}` is not 2-D"))),
        }
    }

    fn take1(&mut self, path: &Path, name: &str) -> Result<Array1<f32>> {
        let (shape, data) = self.tensors.remove(name).ok_or_else(|| bad(path, format!("missing tensor `{name}`")))?;
        match shape[..] {
            [_] => Ok(Array1::from(data)),
            _ => Err(bad(path, format!("tensor `{name}` is not 1-D"))),
        }
    }

    fn stack(&mut self, path: &Path) -> Result<ConvStack> {
        let shapes = self.header.layers.clone();
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, shape) in shapes.into_iter().enumerate() {
            layers.push(ConvLayer {
                shape,
                weight: self.take2(path, &format!("backbone.{i}.weight"))?,
                bias: self.take1(path, &format!("backbone.{i}.bias"))?,
            });
        }
        let stack = ConvStack { layers };
        stack.check_shapes().map_err(|e| bad(path, e))?;
        Ok(stack)
    }
}

/// Writes backbone-only weights usable as a pretrained source.
pub fn save_backbone_weights(name: &str, stack: &ConvStack, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    backbone_tensors(stack, &mut tensors);
    write_file(path, Kind::Backbone, name, stack, None, tensors)
}

/// Reads backbone weights from a backbone file or a full classifier
/// checkpoint. Returns the stored backbone name.
pub fn load_backbone_weights(path: &Path) -> Result<(String, ConvStack)> {
    let mut loaded = read_file(path)?;
    let stack = loaded.stack(path)?;
    Ok((loaded.header.backbone_name.clone(), stack))
}

pub fn save_checkpoint(model: &ClassifierModel, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    backbone_tensors(model.backbone(), &mut tensors);
    let h = model.head();
    for (name, t) in [("head.hidden.weight", &h.hidden_weight), ("head.output.weight", &h.output_weight)] {
        tensors.push((name.to_string(), t.shape().to_vec(), t.as_slice().expect("standard layout")));
    }
    for (name, t) in [("head.hidden.bias", &h.hidden_bias), ("head.output.bias", &h.output_bias)] {
        tensors.push((name.to_string(), t.shape().to_vec(), t.as_slice().expect("standard layout")));
    }
    let cfg = model.config();
    write_file(path, Kind::Classifier, &cfg.backbone_name, model.backbone(), Some(cfg), tensors)
}

/// Model configuration stored in a classifier checkpoint.
pub fn checkpoint_config(path: &Path) -> Result<ModelConfig> {
    let loaded = read_file(path)?;
    match (loaded.header.kind, loaded.header.model) {
        (Kind::Classifier, Some(cfg)) => Ok(cfg),
        _ => Err(bad(path, "not a classifier checkpoint")),
    }
}

/// Loads a classifier checkpoint. The architecture fields of `config`
/// (backbone, input size, class count, head width) must match the stored
/// ones; dropout and freeze policy are taken from `config`.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ClassifierModel> {
    let mut loaded = read_file(path)?;
    let stored = match (loaded.header.kind, loaded.header.model.clone()) {
        (Kind::Classifier, Some(cfg)) => cfg,
        _ => return Err(bad(path, "not a classifier checkpoint")),
    };
    let mismatches: Vec<String> = [
        ("backbone_name", stored.backbone_name.clone(), config.backbone_name.clone()),
        ("input_size", stored.input_size.to_string(), config.input_size.to_string()),
        ("num_classes", stored.num_classes.to_string(), config.num_classes.to_string()),
        ("head_dense_units", stored.head_dense_units.to_string(), config.head_dense_units.to_string()),
    ]
    .into_iter()
    .filter(|(_, s, c)| s != c)
    .map(|(field, s, c)| format!("{field}: checkpoint has {s}, config has {c}"))
    .collect();
    if !mismatches.is_empty() {
        return Err(bad(path, format!("architecture mismatch ({})", mismatches.join("; "))));
    }
    let stack = loaded.stack(path)?;
    let head = Head {
        hidden_weight: loaded.take2(path, "head.hidden.weight")?,
        hidden_bias: loaded.take1(path, "head.hidden.bias")?,
        output_weight: loaded.take2(path, "head.output.weight")?,
        output_bias: loaded.take1(path, "head.output.bias")?,
    };
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    ClassifierModel::from_parts(config.clone(), stack, Some(head), &mut unused)
        .map_err(|e| bad(path, e))
}
