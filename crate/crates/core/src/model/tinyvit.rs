use super::{push_conv_bn, Activation, AttentionSpec, LayerKind, LayerSpec, ModelGraph, ModelName};
use crate::error::Result;

const STEM: usize = 32;
const EMBED: [usize; 4] = [64, 128, 160, 320];
const DEPTHS: [usize; 4] = [2, 2, 6, 2];
const HEADS: [usize; 4] = [2, 4, 5, 10];
const WINDOWS: [usize; 4] = [7, 7, 14, 7];
const MLP_RATIO: usize = 4;
const CONV_EXPANSION: usize = 4;
const ACT: Activation = Activation::Gelu;

/// TinyViT-5M: conv patch embedding, an inverted-residual stage, then three
/// windowed-attention stages with depthwise convs between attention and MLP.
/// Graph only.
pub fn build_tinyvit_5m(num_classes: usize) -> Result<ModelGraph> {
    let mut layers = Vec::new();
    push_conv_bn(&mut layers, "patch_embed.conv1", (3, STEM), 3, 2, 1, Some(ACT));
    push_conv_bn(&mut layers, "patch_embed.conv2", (STEM, EMBED[0]), 3, 2, 1, None);

    let c = EMBED[0];
    let mid = c * CONV_EXPANSION;
    for b in 0..DEPTHS[0] {
        let p = format!("stages.0.blocks.{b}");
        push_conv_bn(&mut layers, &format!("{p}.conv1"), (c, mid), 1, 1, 1, Some(ACT));
        push_conv_bn(&mut layers, &format!("{p}.conv2"), (mid, mid), 3, 1, mid, Some(ACT));
        push_conv_bn(&mut layers, &format!("{p}.conv3"), (mid, c), 1, 1, 1, Some(ACT));
    }

    let mut c = EMBED[0];
    for s in 1..4 {
        let dim = EMBED[s];
        let p = format!("stages.{s}.downsample");
        push_conv_bn(&mut layers, &format!("{p}.conv1"), (c, dim), 1, 1, 1, Some(ACT));
        push_conv_bn(&mut layers, &format!("{p}.conv2"), (dim, dim), 3, 2, dim, Some(ACT));
        push_conv_bn(&mut layers, &format!("{p}.conv3"), (dim, dim), 1, 1, 1, None);
        c = dim;
        for b in 0..DEPTHS[s] {
            let p = format!("stages.{s}.blocks.{b}");
            layers.push(LayerSpec::new(
                format!("{p}.attn"),
                LayerKind::Attention(AttentionSpec::Window {
                    dim,
                    heads: HEADS[s],
                    window: WINDOWS[s],
                }),
            ));
            push_conv_bn(&mut layers, &format!("{p}.local_conv"), (dim, dim), 3, 1, dim, None);
            layers.push(LayerSpec::new(
                format!("{p}.mlp"),
                LayerKind::Ffn {
                    dim,
                    hidden: dim * MLP_RATIO,
                    pre_norm: true,
                    act: ACT,
                },
            ));
        }
    }

    layers.push(LayerSpec::new("head.global_pool", LayerKind::Pool));
    layers.push(LayerSpec::new("head.norm", LayerKind::LayerNorm { dim: c }));
    layers.push(LayerSpec::new(
        "head.fc",
        LayerKind::Linear {
            d_in: c,
            d_out: num_classes,
            bias: true,
        },
    ));
    ModelGraph::new(ModelName::Tinyvit5m, layers, num_classes, false)
}
