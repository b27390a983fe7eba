use super::{push_conv_bn, Activation, LayerKind, LayerSpec, MobileVitBlockSpec, ModelGraph, ModelName};
use crate::error::Result;

const EXPANSION: usize = 4;
const HEADS: usize = 4;
const PATCH: usize = 2;
const HEAD_FEATURES: usize = 640;

/// Inverted-residual blocks of one stage: `(c_out, stride)` per block.
type Mv2Stage = &'static [(usize, usize)];

/// `(mv2 blocks, optional (dim, depth) of the MobileViT block that follows)`.
const STAGES: [(Mv2Stage, Option<(usize, usize)>); 5] = [
    (&[(32, 1)], None),
    (&[(64, 2), (64, 1), (64, 1)], None),
    (&[(96, 2)], Some((144, 2))),
    (&[(128, 2)], Some((192, 4))),
    (&[(160, 2)], Some((240, 3))),
];

/// MobileViT-S: 3×3 stem, five stages of inverted residuals with MobileViT
/// blocks in the last three, 1×1 expansion to 640 features, pooled linear head.
pub fn build_mobilevit_s(num_classes: usize) -> Result<ModelGraph> {
    let mut layers = Vec::new();
    push_conv_bn(&mut layers, "stem", (3, 16), 3, 2, 1, Some(Activation::Silu));

    let mut c = 16;
    for (s, (mv2s, vit)) in STAGES.iter().enumerate() {
        for (b, &(c_out, stride)) in mv2s.iter().enumerate() {
            layers.push(LayerSpec::new(
                format!("stages.{s}.{b}"),
                LayerKind::Mv2Block {
                    c_in: c,
                    c_out,
                    stride,
                    expansion: EXPANSION,
                },
            ));
            c = c_out;
        }
        if let Some((dim, depth)) = *vit {
            layers.push(LayerSpec::new(
                format!("stages.{s}.{}", mv2s.len()),
                LayerKind::MobileVitBlock(MobileVitBlockSpec {
                    channels: c,
                    dim,
                    depth,
                    heads: HEADS,
                    patch: PATCH,
                    ffn_dim: 2 * dim,
                }),
            ));
        }
    }

    push_conv_bn(&mut layers, "final_conv", (c, HEAD_FEATURES), 1, 1, 1, Some(Activation::Silu));
    layers.push(LayerSpec::new("head.global_pool", LayerKind::Pool));
    layers.push(LayerSpec::new(
        "head.fc",
        LayerKind::Linear {
            d_in: HEAD_FEATURES,
            d_out: num_classes,
            bias: true,
        },
    ));
    ModelGraph::new(ModelName::MobilevitS, layers, num_classes, true)
}
