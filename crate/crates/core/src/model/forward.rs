//! Numeric execution of an executable [`ModelGraph`].

use serde::Serialize;

use super::{Activation, LayerKind, LayerSpec, MobileVitBlockSpec, ModelGraph, INPUT_CHANNELS, INPUT_HW};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    self, batchnorm2d, concat_channels, conv2d, fold_patches, gelu, global_avg_pool, layernorm, linear, mhsa,
    resize_bilinear, silu, unfold_patches, AttentionParams, BatchNormParams, Conv2dParams, Tensor,
};
use crate::weights::{validate_against, WeightStore};

const LAYERNORM_EPS: f64 = 1e-5;

/// Raw classifier scores, one per class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Logits<T>(pub Vec<T>);

/// Softmax of [`Logits`]; sums to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probabilities<T>(pub Vec<T>);

impl<T: Scalar> Logits<T> {
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn softmax(&self) -> Probabilities<T> {
        let mut v = self.0.clone();
        tensor::softmax_in_place(&mut v);
        Probabilities(v)
    }
}

impl<T: Scalar> Probabilities<T> {
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// `(class index, probability)` pairs, highest first; ties keep class order.
    pub fn ranked(&self) -> Vec<(usize, T)> {
        let mut v: Vec<(usize, T)> = self.0.iter().copied().enumerate().collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        v
    }
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Attention probabilities of one transformer layer for one patch offset.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord<T> {
    /// Ordinal of the MobileViT block (0 = first, at the highest resolution).
    pub block: usize,
    pub layer: usize,
    /// Pixel offset within a patch, `py·patch + px`.
    pub patch_offset: usize,
    /// `[heads, N, N]`, rows sum to one.
    pub attention: Tensor<T>,
}

/// Token-grid geometry of one executed MobileViT block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TracedBlock {
    pub name: String,
    pub depth: usize,
    pub heads: usize,
    pub patch: usize,
    /// Patch grid `(rows, cols)`; `N = rows·cols` tokens per sequence.
    pub grid: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionTrace<T> {
    pub blocks: Vec<TracedBlock>,
    /// Layer order: block, then layer, then patch offset.
    pub records: Vec<AttentionRecord<T>>,
}

impl<T: Scalar> AttentionTrace<T> {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn for_block(&self, block: usize) -> impl Iterator<Item = &AttentionRecord<T>> {
        self.records.iter().filter(move |r| r.block == block)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub logits: Logits<T>,
    pub trace: AttentionTrace<T>,
}

/// Runs `graph` on a `[3, 224, 224]` input.
///
/// Weights are checked against the graph before any arithmetic so that a
/// missing or mis-shaped tensor is reported by name. Every layer output is
/// checked for NaN/Inf.
pub fn forward<T: Scalar>(graph: &ModelGraph, weights: &WeightStore<T>, input: &Tensor<T>) -> Result<ForwardOutput<T>> {
    if !graph.executable {
        return Err(Error::invalid(
            "forward",
            format!("`{}` is declared for accounting only", graph.name),
        ));
    }
    if input.shape() != [INPUT_CHANNELS, INPUT_HW, INPUT_HW] {
        return Err(Error::shape(
            "forward",
            format!("input must be [3, 224, 224], got {:?}", input.shape()),
        ));
    }
    let report = validate_against(weights, graph);
    if let Some(name) = report.missing.first() {
        return Err(Error::MissingWeight(name.clone()));
    }
    if let Some(m) = report.mismatched.first() {
        return Err(Error::WeightShape {
            name: m.name.clone(),
            expected: m.expected.clone(),
            found: m.found.clone(),
        });
    }

    let mut exec = Executor {
        weights,
        bn_eps: T::lit(weights.bn_eps()?),
        trace: AttentionTrace::default(),
    };
    let mut x = input.clone();
    for (index, layer) in graph.layers.iter().enumerate() {
        x = exec.layer(layer, x)?;
        if !x.is_finite() {
            return Err(Error::NonFiniteActivation {
                index,
                layer: layer.name.clone(),
            });
        }
    }
    Ok(ForwardOutput {
        logits: Logits(x.into_data()),
        trace: exec.trace,
    })
}

struct Executor<'w, T> {
    weights: &'w WeightStore<T>,
    bn_eps: T,
    trace: AttentionTrace<T>,
}

impl<T: Scalar> Executor<'_, T> {
    fn w(&self, name: String) -> Result<&Tensor<T>> {
        self.weights.get(&name).ok_or(Error::MissingWeight(name))
    }

    fn layer(&mut self, layer: &LayerSpec, x: Tensor<T>) -> Result<Tensor<T>> {
        let p = layer.name.as_str();
        match &layer.kind {
            &LayerKind::Conv {
                stride,
                padding,
                groups,
                bias,
                ..
            } => {
                let b = if bias { Some(self.w(format!("{p}.bias"))?) } else { None };
                conv2d(&x, self.w(format!("{p}.weight"))?, b, Conv2dParams::new(stride, padding, groups))
            }
            LayerKind::BatchNorm { .. } => self.batchnorm(p, &x),
            LayerKind::LayerNorm { .. } => {
                if x.rank() != 1 {
                    return Err(Error::invalid("forward", "layernorm over feature maps is not executable"));
                }
                layernorm(
                    &x,
                    self.w(format!("{p}.weight"))?,
                    self.w(format!("{p}.bias"))?,
                    T::lit(LAYERNORM_EPS),
                )
            }
            &LayerKind::Activation { act } => Ok(activate(&x, act)),
            &LayerKind::Mv2Block {
                c_in,
                c_out,
                stride,
                expansion,
            } => {
                let hidden = c_in * expansion;
                let y = self.conv_bn(&format!("{p}.conv1_1x1"), &x, 1, 1, Some(Activation::Silu))?;
                let y = self.conv_bn(&format!("{p}.conv2_kxk"), &y, stride, hidden, Some(Activation::Silu))?;
                let y = self.conv_bn(&format!("{p}.conv3_1x1"), &y, 1, 1, None)?;
                if stride == 1 && c_in == c_out {
                    tensor::add(&x, &y)
                } else {
                    Ok(y)
                }
            }
            LayerKind::MobileVitBlock(spec) => self.mobilevit_block(p, spec, &x),
            LayerKind::Pool => global_avg_pool(&x),
            &LayerKind::Linear { bias, .. } => {
                let b = if bias { Some(self.w(format!("{p}.bias"))?) } else { None };
                linear(&x, self.w(format!("{p}.weight"))?, b)
            }
            LayerKind::Attention(_) | LayerKind::Ffn { .. } => Err(Error::invalid(
                "forward",
                format!("layer `{p}` has no numeric implementation"),
            )),
        }
    }

    fn batchnorm(&self, p: &str, x: &Tensor<T>) -> Result<Tensor<T>> {
        batchnorm2d(
            x,
            BatchNormParams {
                gamma: self.w(format!("{p}.weight"))?,
                beta: self.w(format!("{p}.bias"))?,
                running_mean: self.w(format!("{p}.running_mean"))?,
                running_var: self.w(format!("{p}.running_var"))?,
                eps: self.bn_eps,
            },
        )
    }

    /// `{prefix}.conv` (no bias, "same" padding) → `{prefix}.bn` → activation.
    fn conv_bn(
        &self,
        prefix: &str,
        x: &Tensor<T>,
        stride: usize,
        groups: usize,
        act: Option<Activation>,
    ) -> Result<Tensor<T>> {
        let w = self.w(format!("{prefix}.conv.weight"))?;
        let k = w.shape()[2];
        let y = conv2d(x, w, None, Conv2dParams::new(stride, k / 2, groups))?;
        let y = self.batchnorm(&format!("{prefix}.bn"), &y)?;
        Ok(match act {
            Some(a) => activate(&y, a),
            None => y,
        })
    }

    fn mobilevit_block(&mut self, p: &str, spec: &MobileVitBlockSpec, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let patch = spec.patch;
        let ln_eps = T::lit(LAYERNORM_EPS);

        let local = self.conv_bn(&format!("{p}.conv_kxk"), x, 1, 1, Some(Activation::Silu))?;
        let mut y = conv2d(&local, self.w(format!("{p}.conv_1x1.weight"))?, None, Conv2dParams::default())?;

        // Maps that do not tile evenly are resampled up to the next multiple of the patch size.
        let (hp, wp) = (h.div_ceil(patch) * patch, w.div_ceil(patch) * patch);
        let resampled = (hp, wp) != (h, w);
        if resampled {
            y = resize_bilinear(&y, hp, wp)?;
        }

        let block = self.trace.blocks.len();
        let grid = (hp / patch, wp / patch);
        self.trace.blocks.push(TracedBlock {
            name: p.to_string(),
            depth: spec.depth,
            heads: spec.heads,
            patch,
            grid,
        });

        let d = spec.dim;
        let area = patch * patch;
        let n = grid.0 * grid.1;
        let mut tokens = unfold_patches(&y, patch, patch)?.reshape(&[area * n, d])?;
        for l in 0..spec.depth {
            let t = format!("{p}.transformer.{l}");
            let normed = layernorm(
                &tokens,
                self.w(format!("{t}.norm1.weight"))?,
                self.w(format!("{t}.norm1.bias"))?,
                ln_eps,
            )?;
            let params = AttentionParams {
                qkv_weight: self.w(format!("{t}.attn.qkv.weight"))?,
                qkv_bias: Some(self.w(format!("{t}.attn.qkv.bias"))?),
                proj_weight: self.w(format!("{t}.attn.proj.weight"))?,
                proj_bias: Some(self.w(format!("{t}.attn.proj.bias"))?),
                heads: spec.heads,
            };
            let mut attended = Vec::with_capacity(area * n * d);
            let mut records = Vec::with_capacity(area);
            for (offset, seq) in normed.data().chunks(n * d).enumerate() {
                let seq = Tensor::from_slice(&[n, d], seq)?;
                let (out, attention) = mhsa(&seq, params)?;
                attended.extend_from_slice(out.data());
                records.push(AttentionRecord {
                    block,
                    layer: l,
                    patch_offset: offset,
                    attention,
                });
            }
            self.trace.records.extend(records);
            tokens = tensor::add(&tokens, &Tensor::new(vec![area * n, d], attended)?)?;

            let normed = layernorm(
                &tokens,
                self.w(format!("{t}.norm2.weight"))?,
                self.w(format!("{t}.norm2.bias"))?,
                ln_eps,
            )?;
            let hidden = silu(&linear(
                &normed,
                self.w(format!("{t}.mlp.fc1.weight"))?,
                Some(self.w(format!("{t}.mlp.fc1.bias"))?),
            )?);
            let out = linear(
                &hidden,
                self.w(format!("{t}.mlp.fc2.weight"))?,
                Some(self.w(format!("{t}.mlp.fc2.bias"))?),
            )?;
            tokens = tensor::add(&tokens, &out)?;
        }
        let tokens = layernorm(
            &tokens,
            self.w(format!("{p}.norm.weight"))?,
            self.w(format!("{p}.norm.bias"))?,
            ln_eps,
        )?;

        let mut y = fold_patches(&tokens.reshape(&[area, n, d])?, patch, patch, hp, wp)?;
        if resampled {
            y = resize_bilinear(&y, h, w)?;
        }
        let y = self.conv_bn(&format!("{p}.conv_proj"), &y, 1, 1, Some(Activation::Silu))?;
        let y = concat_channels(x, &y)?;
        self.conv_bn(&format!("{p}.conv_fusion"), &y, 1, 1, Some(Activation::Silu))
    }
}

fn activate<T: Scalar>(x: &Tensor<T>, act: Activation) -> Tensor<T> {
    match act {
        Activation::Silu => silu(x),
        Activation::Gelu => gelu(x),
        Activation::HardSwish => {
            let (three, six) = (T::lit(3.0), T::lit(6.0));
            x.map(|v| v * (v + three).max(T::zero()).min(six) / six)
        }
    }
}
