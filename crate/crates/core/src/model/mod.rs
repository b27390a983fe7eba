//! Declarative model graphs.
//!
//! A [`ModelGraph`] is an ordered list of [`LayerSpec`]s. The same list drives
//! shape propagation, parameter accounting, FLOP counting and (for MobileViT-S)
//! numeric execution. Composite layers (`Mv2Block`, `MobileVitBlock`,
//! `Attention`, `Ffn`) expand to several parameter tensors under their name
//! prefix.

mod efficientvit;
mod forward;
mod mobilevit;
mod tinyvit;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use efficientvit::build_efficientvit_b0;
pub use forward::{forward, AttentionRecord, AttentionTrace, ForwardOutput, Logits, Probabilities, TracedBlock};
pub use mobilevit::build_mobilevit_s;
pub use tinyvit::build_tinyvit_5m;

use crate::error::{Error, Result};

/// Every graph in the zoo is defined for square 224×224 RGB input.
pub const INPUT_HW: usize = 224;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    MobilevitS,
    EfficientvitB0,
    Tinyvit5m,
}

impl ModelName {
    pub const ALL: [ModelName; 3] = [ModelName::MobilevitS, ModelName::EfficientvitB0, ModelName::Tinyvit5m];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::MobilevitS => "mobilevit_s",
            ModelName::EfficientvitB0 => "efficientvit_b0",
            ModelName::Tinyvit5m => "tinyvit_5m",
        }
    }

    pub fn build(self, num_classes: usize) -> Result<ModelGraph> {
        match self {
            ModelName::MobilevitS => build_mobilevit_s(num_classes),
            ModelName::EfficientvitB0 => build_efficientvit_b0(num_classes),
            ModelName::Tinyvit5m => build_tinyvit_5m(num_classes),
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::invalid("model", format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    Gelu,
    HardSwish,
}

/// Geometry of one MobileViT block: local convs, `depth` transformer layers
/// over `patch × patch` unfolded tokens, fold and fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MobileVitBlockSpec {
    pub channels: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub patch: usize,
    pub ffn_dim: usize,
}

/// Attention variants of the graph-only models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionSpec {
    /// ReLU linear attention with multi-scale token aggregation: a 1×1 qkv
    /// conv, one depthwise + grouped pointwise aggregation branch per scale,
    /// and a 1×1 projection conv with batchnorm.
    LinearMultiScale {
        channels: usize,
        head_dim: usize,
        scales: Vec<usize>,
    },
    /// Pre-norm softmax attention restricted to `window × window` windows,
    /// with a learned bias per head and relative offset.
    Window { dim: usize, heads: usize, window: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
    LayerNorm {
        dim: usize,
    },
    Activation {
        act: Activation,
    },
    Mv2Block {
        c_in: usize,
        c_out: usize,
        stride: usize,
        expansion: usize,
    },
    MobileVitBlock(MobileVitBlockSpec),
    Attention(AttentionSpec),
    /// Token MLP applied at every spatial position, optionally pre-normed.
    Ffn {
        dim: usize,
        hidden: usize,
        pre_norm: bool,
        act: Activation,
    },
    Pool,
    Linear {
        d_in: usize,
        d_out: usize,
        bias: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    /// Parameter-name prefix, unique within a graph.
    pub name: String,
    pub kind: LayerKind,
}

/// One parameter tensor implied by a layer. Batchnorm running statistics are
/// stored alongside the weights but are not trainable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl ParamSpec {
    fn new(name: String, shape: Vec<usize>) -> Self {
        Self {
            name,
            shape,
            trainable: true,
        }
    }

    fn buffer(name: String, shape: Vec<usize>) -> Self {
        Self {
            name,
            shape,
            trainable: false,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureShape {
    Map { c: usize, h: usize, w: usize },
    Vector { d: usize },
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureShape::Map { c, h, w } => write!(f, "{c}x{h}x{w}"),
            FeatureShape::Vector { d } => write!(f, "{d}"),
        }
    }
}

fn conv_params(prefix: &str, c_in: usize, c_out: usize, kernel: usize, groups: usize, bias: bool) -> Vec<ParamSpec> {
    let mut v = vec![ParamSpec::new(
        format!("{prefix}.weight"),
        vec![c_out, c_in / groups, kernel, kernel],
    )];
    if bias {
        v.push(ParamSpec::new(format!("{prefix}.bias"), vec![c_out]));
    }
    v
}

fn bn_params(prefix: &str, c: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.weight"), vec![c]),
        ParamSpec::new(format!("{prefix}.bias"), vec![c]),
        ParamSpec::buffer(format!("{prefix}.running_mean"), vec![c]),
        ParamSpec::buffer(format!("{prefix}.running_var"), vec![c]),
    ]
}

fn ln_params(prefix: &str, d: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.weight"), vec![d]),
        ParamSpec::new(format!("{prefix}.bias"), vec![d]),
    ]
}

fn linear_params(prefix: &str, d_in: usize, d_out: usize, bias: bool) -> Vec<ParamSpec> {
    let mut v = vec![ParamSpec::new(format!("{prefix}.weight"), vec![d_out, d_in])];
    if bias {
        v.push(ParamSpec::new(format!("{prefix}.bias"), vec![d_out]));
    }
    v
}

fn conv_bn(prefix: &str, c_in: usize, c_out: usize, kernel: usize, groups: usize) -> Vec<ParamSpec> {
    let mut v = conv_params(&format!("{prefix}.conv"), c_in, c_out, kernel, groups, false);
    v.extend(bn_params(&format!("{prefix}.bn"), c_out));
    v
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn params(&self) -> Vec<ParamSpec> {
        let p = self.name.as_str();
        match &self.kind {
            &LayerKind::Conv {
                c_in,
                c_out,
                kernel,
                groups,
                bias,
                ..
            } => conv_params(p, c_in, c_out, kernel, groups, bias),
            &LayerKind::BatchNorm { channels } => bn_params(p, channels),
            &LayerKind::LayerNorm { dim } => ln_params(p, dim),
            LayerKind::Activation { .. } | LayerKind::Pool => Vec::new(),
            &LayerKind::Mv2Block {
                c_in,
                c_out,
                expansion,
                ..
            } => {
                let hidden = c_in * expansion;
                let mut v = conv_bn(&format!("{p}.conv1_1x1"), c_in, hidden, 1, 1);
                v.extend(conv_bn(&format!("{p}.conv2_kxk"), hidden, hidden, 3, hidden));
                v.extend(conv_bn(&format!("{p}.conv3_1x1"), hidden, c_out, 1, 1));
                v
            }
            LayerKind::MobileVitBlock(b) => {
                let (n, d) = (b.channels, b.dim);
                let mut v = conv_bn(&format!("{p}.conv_kxk"), n, n, 3, 1);
                v.extend(conv_params(&format!("{p}.conv_1x1"), n, d, 1, 1, false));
                for l in 0..b.depth {
                    let t = format!("{p}.transformer.{l}");
                    v.extend(ln_params(&format!("{t}.norm1"), d));
                    v.extend(linear_params(&format!("{t}.attn.qkv"), d, 3 * d, true));
                    v.extend(linear_params(&format!("{t}.attn.proj"), d, d, true));
                    v.extend(ln_params(&format!("{t}.norm2"), d));
                    v.extend(linear_params(&format!("{t}.mlp.fc1"), d, b.ffn_dim, true));
                    v.extend(linear_params(&format!("{t}.mlp.fc2"), b.ffn_dim, d, true));
                }
                v.extend(ln_params(&format!("{p}.norm"), d));
                v.extend(conv_bn(&format!("{p}.conv_proj"), d, n, 1, 1));
                v.extend(conv_bn(&format!("{p}.conv_fusion"), 2 * n, n, 3, 1));
                v
            }
            LayerKind::Attention(AttentionSpec::LinearMultiScale {
                channels,
                head_dim,
                scales,
            }) => {
                let c = *channels;
                let heads = c / head_dim;
                let mut v = conv_params(&format!("{p}.qkv.conv"), c, 3 * c, 1, 1, false);
                for (i, &k) in scales.iter().enumerate() {
                    v.extend(conv_params(&format!("{p}.aggreg.{i}.0"), 3 * c, 3 * c, k, 3 * c, false));
                    v.extend(conv_params(&format!("{p}.aggreg.{i}.1"), 3 * c, 3 * c, 1, 3 * heads, false));
                }
                v.extend(conv_bn(&format!("{p}.proj"), c * (1 + scales.len()), c, 1, 1));
                v
            }
            &LayerKind::Attention(AttentionSpec::Window { dim, heads, window }) => {
                let mut v = ln_params(&format!("{p}.norm"), dim);
                v.extend(linear_params(&format!("{p}.qkv"), dim, 3 * dim, true));
                v.extend(linear_params(&format!("{p}.proj"), dim, dim, true));
                v.push(ParamSpec::new(
                    format!("{p}.attention_biases"),
                    vec![heads, window * window],
                ));
                v
            }
            &LayerKind::Ffn {
                dim,
                hidden,
                pre_norm,
                ..
            } => {
                let mut v = if pre_norm {
                    ln_params(&format!("{p}.norm"), dim)
                } else {
                    Vec::new()
                };
                v.extend(linear_params(&format!("{p}.fc1"), dim, hidden, true));
                v.extend(linear_params(&format!("{p}.fc2"), hidden, dim, true));
                v
            }
            &LayerKind::Linear { d_in, d_out, bias } => linear_params(p, d_in, d_out, bias),
        }
    }

    /// Shape after this layer, or a descriptive error when `input` is incompatible.
    pub fn output_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        use FeatureShape::*;
        let mismatch = |expected: String| {
            Err(Error::shape(
                "shape propagation",
                format!("layer `{}` expects {expected}, got {input}", self.name),
            ))
        };
        match (&self.kind, input) {
            (
                &LayerKind::Conv {
                    c_in,
                    c_out,
                    kernel,
                    stride,
                    padding,
                    ..
                },
                Map { c, h, w },
            ) if c == c_in => {
                match (
                    crate::tensor::conv_out_dim(h, kernel, stride, padding),
                    crate::tensor::conv_out_dim(w, kernel, stride, padding),
                ) {
                    (Some(h), Some(w)) => Ok(Map { c: c_out, h, w }),
                    _ => mismatch("a spatial size at least the kernel size".into()),
                }
            }
            (&LayerKind::Conv { c_in, .. }, _) => mismatch(format!("{c_in} channels")),
            (&LayerKind::BatchNorm { channels }, Map { c, .. }) if c == channels => Ok(input),
            (&LayerKind::BatchNorm { channels }, _) => mismatch(format!("{channels} channels")),
            (&LayerKind::LayerNorm { dim }, Map { c, .. } | Vector { d: c }) if c == dim => Ok(input),
            (&LayerKind::LayerNorm { dim }, _) => mismatch(format!("dim {dim}")),
            (LayerKind::Activation { .. }, _) => Ok(input),
            (
                &LayerKind::Mv2Block {
                    c_in, c_out, stride, ..
                },
                Map { c, h, w },
            ) if c == c_in => match (
                crate::tensor::conv_out_dim(h, 3, stride, 1),
                crate::tensor::conv_out_dim(w, 3, stride, 1),
            ) {
                (Some(h), Some(w)) => Ok(Map { c: c_out, h, w }),
                _ => mismatch("a non-empty map".into()),
            },
            (&LayerKind::Mv2Block { c_in, .. }, _) => mismatch(format!("{c_in} channels")),
            (LayerKind::MobileVitBlock(b), Map { c, .. }) if c == b.channels => Ok(input),
            (LayerKind::MobileVitBlock(b), _) => mismatch(format!("{} channels", b.channels)),
            (LayerKind::Attention(AttentionSpec::LinearMultiScale { channels, .. }), Map { c, .. })
                if c == *channels =>
            {
                Ok(input)
            }
            (LayerKind::Attention(AttentionSpec::Window { dim, .. }), Map { c, .. }) if c == *dim => Ok(input),
            (LayerKind::Attention(_), _) => mismatch("a map with matching channels".into()),
            (&LayerKind::Ffn { dim, .. }, Map { c, .. }) if c == dim => Ok(input),
            (&LayerKind::Ffn { dim, .. }, _) => mismatch(format!("a map with {dim} channels")),
            (LayerKind::Pool, Map { c, .. }) => Ok(Vector { d: c }),
            (LayerKind::Pool, _) => mismatch("a spatial map".into()),
            (&LayerKind::Linear { d_in, d_out, .. }, Vector { d }) if d == d_in => Ok(Vector { d: d_out }),
            (&LayerKind::Linear { d_in, .. }, _) => mismatch(format!("a {d_in}-vector")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelGraph {
    pub name: ModelName,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    /// Only MobileViT-S has a numeric forward pass; the others are for accounting.
    pub executable: bool,
}

impl ModelGraph {
    /// Builds and validates a graph.
    pub fn new(name: ModelName, layers: Vec<LayerSpec>, num_classes: usize, executable: bool) -> Result<Self> {
        let g = Self {
            name,
            layers,
            num_classes,
            executable,
        };
        g.check()?;
        Ok(g)
    }

    pub fn input_shape(hw: usize) -> FeatureShape {
        FeatureShape::Map {
            c: INPUT_CHANNELS,
            h: hw,
            w: hw,
        }
    }

    /// Every parameter tensor in layer order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        self.layers.iter().flat_map(LayerSpec::params).collect()
    }

    pub fn trainable_params(&self) -> usize {
        self.param_specs()
            .iter()
            .filter(|p| p.trainable)
            .map(ParamSpec::numel)
            .sum()
    }

    /// Trainable parameters plus batchnorm running statistics.
    pub fn stored_elements(&self) -> usize {
        self.param_specs().iter().map(ParamSpec::numel).sum()
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn propagate_shapes(&self, input_hw: usize) -> Result<Vec<FeatureShape>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = Self::input_shape(input_hw);
        shapes.push(cur);
        for layer in &self.layers {
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    fn check(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("model graph", "num_classes must be at least 2"));
        }
        let mut seen = HashSet::new();
        for p in self.param_specs() {
            if !seen.insert(p.name.clone()) {
                return Err(Error::invalid("model graph", format!("duplicate parameter `{}`", p.name)));
            }
        }
        let shapes = self.propagate_shapes(INPUT_HW)?;
        match shapes.last() {
            Some(&FeatureShape::Vector { d }) if d == self.num_classes => Ok(()),
            Some(s) => Err(Error::shape(
                "shape propagation",
                format!("graph ends in {s}, expected {} logits", self.num_classes),
            )),
            None => unreachable!("input shape is always present"),
        }
    }
}

/// Conv + batchnorm + optional activation, the most common triple in all three graphs.
pub(crate) fn push_conv_bn(
    layers: &mut Vec<LayerSpec>,
    prefix: &str,
    (c_in, c_out): (usize, usize),
    kernel: usize,
    stride: usize,
    groups: usize,
    act: Option<Activation>,
) {
    layers.push(LayerSpec::new(
        format!("{prefix}.conv"),
        LayerKind::Conv {
            c_in,
            c_out,
            kernel,
            stride,
            padding: kernel / 2,
            groups,
            bias: false,
        },
    ));
    layers.push(LayerSpec::new(
        format!("{prefix}.bn"),
        LayerKind::BatchNorm { channels: c_out },
    ));
    if let Some(act) = act {
        layers.push(LayerSpec::new(format!("{prefix}.act"), LayerKind::Activation { act }));
    }
}
