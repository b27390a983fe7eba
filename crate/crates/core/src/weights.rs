//! MLVW: a little-endian named-tensor container with string metadata and a CRC32 trailer.
//!
//! ```text
//! "MLVW"                      4 bytes
//! version                     u16 (= 1)
//! metadata_count              u16
//!   key_len u16, key UTF-8, val_len u32, val UTF-8
//! tensor_count                u32
//!   name_len u16, name UTF-8, dtype u8 (0 = f32), rank u8,
//!   rank × u32 dims, payload f32 LE
//! crc32 of all preceding bytes  u32
//! ```

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelGraph, ModelName};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MLVW";
pub const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;
/// Name length, dtype, rank, one dim and one f32.
const MIN_TENSOR_RECORD: usize = 2 + 1 + 1 + 4 + 4;

pub mod keys {
    pub const MODEL_NAME: &str = "model_name";
    pub const NUM_CLASSES: &str = "num_classes";
    pub const CLASS_LABELS: &str = "class_labels";
    pub const NORM_MEAN: &str = "norm_mean";
    pub const NORM_STD: &str = "norm_std";
    pub const BN_EPS: &str = "bn_eps";

    pub const REQUIRED: [&str; 6] = [MODEL_NAME, NUM_CLASSES, CLASS_LABELS, NORM_MEAN, NORM_STD, BN_EPS];
}

/// Batchnorm epsilon when the metadata does not override it.
pub const DEFAULT_BN_EPS: f64 = 1e-5;

/// The eight MangoLeafBD classes, in label order.
pub const MANGO_LEAF_CLASSES: [&str; 8] = [
    "Anthracnose",
    "Bacterial Canker",
    "Cutting Weevil",
    "Die Back",
    "Gall Midge",
    "Healthy",
    "Powdery Mildew",
    "Sooty Mould",
];

/// Named tensors plus string metadata, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore<T> {
    metadata: IndexMap<String, String>,
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for WeightStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Parsed and cross-checked inference metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceMetadata {
    pub model: ModelName,
    pub num_classes: usize,
    pub class_labels: Vec<String>,
    pub norm_mean: [f32; 3],
    pub norm_std: [f32; 3],
    pub bn_eps: f64,
}

impl<T: Scalar> WeightStore<T> {
    pub fn new() -> Self {
        Self {
            metadata: IndexMap::new(),
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Option<Tensor<T>> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.tensors.shift_remove(name)
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn metadata(&self) -> &IndexMap<String, String> {
        &self.metadata
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    /// Looks up a tensor and checks its shape.
    pub fn require(&self, name: &str, shape: &[usize]) -> Result<&Tensor<T>> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))?;
        if t.shape() != shape {
            return Err(Error::WeightShape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        Ok(t)
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> WeightStore<U> {
        WeightStore {
            metadata: self.metadata.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Batchnorm epsilon from metadata, or the default.
    pub fn bn_eps(&self) -> Result<f64> {
        match self.metadata.get(keys::BN_EPS) {
            None => Ok(DEFAULT_BN_EPS),
            Some(v) => parse_f64(keys::BN_EPS, v),
        }
    }

    /// Parses the required metadata keys and checks them against each other
    /// and against the classifier head, if present.
    pub fn inference_metadata(&self) -> Result<InferenceMetadata> {
        let get = |k: &str| {
            self.metadata
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Metadata(format!("missing required key `{k}`")))
        };
        let model: ModelName = get(keys::MODEL_NAME)?
            .parse()
            .map_err(|_| Error::Metadata(format!("unknown model_name `{}`", get(keys::MODEL_NAME).unwrap_or(""))))?;
        let num_classes: usize = get(keys::NUM_CLASSES)?
            .trim()
            .parse()
            .map_err(|_| Error::Metadata("num_classes is not an integer".into()))?;
        let class_labels: Vec<String> = get(keys::CLASS_LABELS)?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        if class_labels.len() != num_classes || class_labels.iter().any(String::is_empty) {
            return Err(Error::Metadata(format!(
                "{} class labels for num_classes = {num_classes}",
                class_labels.len()
            )));
        }
        let norm_mean = parse_triple(keys::NORM_MEAN, get(keys::NORM_MEAN)?)?;
        let norm_std = parse_triple(keys::NORM_STD, get(keys::NORM_STD)?)?;
        if norm_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Metadata("norm_std components must be positive".into()));
        }
        let bn_eps = parse_f64(keys::BN_EPS, get(keys::BN_EPS)?)?;
        if bn_eps < 0.0 {
            return Err(Error::Metadata("bn_eps must be non-negative".into()));
        }
        if let Some(head) = self.tensors.get("head.fc.weight") {
            if head.shape()[0] != num_classes {
                return Err(Error::Metadata(format!(
                    "num_classes = {num_classes} but head.fc.weight is {:?}",
                    head.shape()
                )));
            }
        }
        Ok(InferenceMetadata {
            model,
            num_classes,
            class_labels,
            norm_mean,
            norm_std,
            bn_eps,
        })
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Metadata(format!("`{key}` is not a number: {v:?}")))
}

fn parse_triple(key: &str, v: &str) -> Result<[f32; 3]> {
    let parts: Vec<f32> = v
        .split(',')
        .map(|s| s.trim().parse::<f32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Metadata(format!("`{key}` must be three comma-separated numbers")))?;
    parts
        .try_into()
        .map_err(|_| Error::Metadata(format!("`{key}` must have exactly three components")))
}

impl WeightStore<f32> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut store = WeightStore::new();
        let meta_count = r.u16("metadata count")?;
        for _ in 0..meta_count {
            let klen = r.u16("metadata key length")? as usize;
            let key = r.utf8(klen, "metadata key")?;
            let vlen = r.u32("metadata value length")? as usize;
            let val = r.utf8(vlen, "metadata value")?;
            if store.metadata.insert(key.clone(), val).is_some() {
                return Err(Error::Format(format!("duplicate metadata key `{key}`")));
            }
        }
        let count = r.u32("tensor count")?;
        let mut names = Vec::with_capacity((count as usize).min(r.remaining() / MIN_TENSOR_RECORD));
        for _ in 0..count {
            let nlen = r.u16("tensor name length")? as usize;
            let name = r.utf8(nlen, "tensor name")?;
            let dtype = r.u8("dtype")?;
            if dtype != DTYPE_F32 {
                return Err(Error::Format(format!("tensor `{name}` has unsupported dtype {dtype}")));
            }
            let rank = r.u8("rank")? as usize;
            if rank == 0 {
                return Err(Error::Format(format!("tensor `{name}` has rank 0")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("tensor dims")? as usize);
            }
            let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let numel = match numel {
                Some(n) if n > 0 => n,
                _ => return Err(Error::Format(format!("tensor `{name}` has invalid dims {dims:?}"))),
            };
            let payload = r.take(
                numel.checked_mul(4).ok_or(Error::Truncated("tensor payload"))?,
                "tensor payload",
            )?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let tensor = Tensor::new(dims, data)?;
            if store.tensors.insert(name.clone(), tensor).is_some() {
                return Err(Error::Format(format!("duplicate tensor name `{name}`")));
            }
            names.push(name);
        }
        let body_end = r.pos;
        let stored = r.u32("crc32")?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after CRC", bytes.len() - r.pos)));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(Error::CrcMismatch { stored, computed });
        }
        for name in names {
            if !store.tensors[&name].is_finite() {
                return Err(Error::NonFinitePayload(name));
            }
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.total_elements() * 4 + 64 * self.len() + 256);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta_count =
            u16::try_from(self.metadata.len()).map_err(|_| Error::Format("too many metadata entries".into()))?;
        out.extend_from_slice(&meta_count.to_le_bytes());
        for (k, v) in &self.metadata {
            let klen = u16::try_from(k.len()).map_err(|_| Error::Format(format!("metadata key too long: {k}")))?;
            out.extend_from_slice(&klen.to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            let vlen = u32::try_from(v.len()).map_err(|_| Error::Format(format!("metadata value too long: {k}")))?;
            out.extend_from_slice(&vlen.to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        }
        let count = u32::try_from(self.tensors.len()).map_err(|_| Error::Format("too many tensors".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.tensors {
            let nlen = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&nlen.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F32);
            let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("rank too large: {name}")))?;
            out.push(rank);
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension too large: {name}")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn utf8(&mut self, n: usize, what: &'static str) -> Result<String> {
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(format!("{what} is not valid UTF-8")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShapeMismatch {
    pub name: String,
    pub expected: Vec<usize>,
    pub found: Vec<usize>,
}

/// Differences between a weight store and the tensors a graph declares.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub mismatched: Vec<ShapeMismatch>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.mismatched.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.missing.is_empty() {
            parts.push(format!("missing: {}", self.missing.join(", ")));
        }
        if !self.extra.is_empty() {
            parts.push(format!("extra: {}", self.extra.join(", ")));
        }
        for m in &self.mismatched {
            parts.push(format!("`{}` is {:?}, expected {:?}", m.name, m.found, m.expected));
        }
        if parts.is_empty() {
            "ok".to_string()
        } else {
            parts.join("; ")
        }
    }

    pub fn into_result(self, graph: &ModelGraph) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::GraphMismatch {
                graph: graph.name.to_string(),
                summary: self.summary(),
            })
        }
    }
}

/// Compares the store's tensors against every parameter the graph declares.
pub fn validate_against<T: Scalar>(store: &WeightStore<T>, graph: &ModelGraph) -> ValidationReport {
    let specs = graph.param_specs();
    let mut report = ValidationReport::default();
    for spec in &specs {
        match store.get(&spec.name) {
            None => report.missing.push(spec.name.clone()),
            Some(t) if t.shape() != spec.shape.as_slice() => report.mismatched.push(ShapeMismatch {
                name: spec.name.clone(),
                expected: spec.shape.clone(),
                found: t.shape().to_vec(),
            }),
            Some(_) => {}
        }
    }
    let declared: std::collections::HashSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    report.extra = store
        .tensors()
        .map(|(n, _)| n)
        .filter(|n| !declared.contains(n))
        .map(str::to_string)
        .collect();
    report
}

/// Standard metadata for a graph: the eight leaf classes when the graph has
/// eight outputs, numbered labels otherwise.
pub fn default_metadata(graph: &ModelGraph, norm_mean: [f32; 3], norm_std: [f32; 3]) -> Vec<(String, String)> {
    let labels: Vec<String> = if graph.num_classes == MANGO_LEAF_CLASSES.len() {
        MANGO_LEAF_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..graph.num_classes).map(|i| format!("class_{i}")).collect()
    };
    let triple = |v: [f32; 3]| format!("{},{},{}", v[0], v[1], v[2]);
    vec![
        (keys::MODEL_NAME.into(), graph.name.to_string()),
        (keys::NUM_CLASSES.into(), graph.num_classes.to_string()),
        (keys::CLASS_LABELS.into(), labels.join(",")),
        (keys::NORM_MEAN.into(), triple(norm_mean)),
        (keys::NORM_STD.into(), triple(norm_std)),
        (keys::BN_EPS.into(), DEFAULT_BN_EPS.to_string()),
    ]
}

/// Deterministic randomly initialised weights for `graph`.
///
/// Convolution and linear weights are uniform with variance `1/fan_in`,
/// biases and normalization shifts zero, normalization scales one, running
/// statistics `(0, 1)`. Used for benchmarking, determinism checks and tests
/// where no trained checkpoint is available.
pub fn synthesize(graph: &ModelGraph, seed: u64) -> WeightStore<f32> {
    let mut rng = SplitMix64::new(seed);
    let mut store = WeightStore::new();
    for (k, v) in default_metadata(graph, [0.0; 3], [1.0; 3]) {
        store.set_metadata(k, v);
    }
    for spec in graph.param_specs() {
        let n = spec.numel();
        let fill = |v: f32| Tensor::full(&spec.shape, v);
        let tensor = if spec.name.ends_with("running_var") {
            fill(1.0)
        } else if spec.name.ends_with("running_mean") || spec.name.ends_with(".bias") {
            fill(0.0)
        } else if spec.shape.len() == 1 {
            fill(1.0)
        } else {
            let fan_in: usize = spec.shape[1..].iter().product();
            let bound = (3.0 / fan_in as f64).sqrt();
            let data = (0..n).map(|_| rng.uniform(-bound, bound) as f32).collect();
            Tensor::new(spec.shape.clone(), data).expect("spec shapes are valid")
        };
        store.insert(spec.name, tensor);
    }
    store
}
