use super::{push_conv_bn, Activation, AttentionSpec, LayerKind, LayerSpec, ModelGraph, ModelName};
use crate::error::Result;

const WIDTHS: [usize; 5] = [8, 16, 32, 64, 128];
const DEPTHS: [usize; 5] = [1, 2, 2, 2, 2];
const HEAD_DIM: usize = 16;
const EXPANSION: usize = 4;
const HEAD_WIDTHS: (usize, usize) = (1024, 1280);
const ACT: Activation = Activation::HardSwish;

fn conv(layers: &mut Vec<LayerSpec>, name: String, (c_in, c_out): (usize, usize), kernel: usize, stride: usize, groups: usize) {
    layers.push(LayerSpec::new(
        name,
        LayerKind::Conv {
            c_in,
            c_out,
            kernel,
            stride,
            padding: kernel / 2,
            groups,
            bias: true,
        },
    ));
}

fn act(layers: &mut Vec<LayerSpec>, prefix: &str) {
    layers.push(LayerSpec::new(format!("{prefix}.act"), LayerKind::Activation { act: ACT }));
}

/// Inverted residual. With `fewer_norm` the expansion and depthwise convs
/// carry a bias instead of a batchnorm.
fn mbconv(layers: &mut Vec<LayerSpec>, prefix: &str, c_in: usize, c_out: usize, stride: usize, fewer_norm: bool) {
    let mid = c_in * EXPANSION;
    if fewer_norm {
        conv(layers, format!("{prefix}.inverted_conv.conv"), (c_in, mid), 1, 1, 1);
        act(layers, &format!("{prefix}.inverted_conv"));
        conv(layers, format!("{prefix}.depth_conv.conv"), (mid, mid), 3, stride, mid);
        act(layers, &format!("{prefix}.depth_conv"));
    } else {
        push_conv_bn(layers, &format!("{prefix}.inverted_conv"), (c_in, mid), 1, 1, 1, Some(ACT));
        push_conv_bn(layers, &format!("{prefix}.depth_conv"), (mid, mid), 3, stride, mid, Some(ACT));
    }
    push_conv_bn(layers, &format!("{prefix}.point_conv"), (mid, c_out), 1, 1, 1, None);
}

/// EfficientViT-B0 (multi-scale linear attention family). Graph only.
pub fn build_efficientvit_b0(num_classes: usize) -> Result<ModelGraph> {
    let mut layers = Vec::new();
    push_conv_bn(&mut layers, "stem.in_conv", (3, WIDTHS[0]), 3, 2, 1, Some(ACT));
    for i in 0..DEPTHS[0] {
        let p = format!("stem.res.{i}.main");
        let c = WIDTHS[0];
        push_conv_bn(&mut layers, &format!("{p}.depth_conv"), (c, c), 3, 1, c, Some(ACT));
        push_conv_bn(&mut layers, &format!("{p}.point_conv"), (c, c), 1, 1, 1, None);
    }

    let mut c = WIDTHS[0];
    for s in 1..3 {
        for b in 0..DEPTHS[s] {
            let stride = if b == 0 { 2 } else { 1 };
            mbconv(&mut layers, &format!("stages.{}.blocks.{b}.main", s - 1), c, WIDTHS[s], stride, false);
            c = WIDTHS[s];
        }
    }
    for s in 3..5 {
        let stage = s - 1;
        mbconv(&mut layers, &format!("stages.{stage}.blocks.0.main"), c, WIDTHS[s], 2, true);
        c = WIDTHS[s];
        for b in 1..=DEPTHS[s] {
            let p = format!("stages.{stage}.blocks.{b}");
            layers.push(LayerSpec::new(
                format!("{p}.context_module.main"),
                LayerKind::Attention(AttentionSpec::LinearMultiScale {
                    channels: c,
                    head_dim: HEAD_DIM,
                    scales: vec![5],
                }),
            ));
            mbconv(&mut layers, &format!("{p}.local_module.main"), c, c, 1, true);
        }
    }

    push_conv_bn(&mut layers, "head.in_conv", (c, HEAD_WIDTHS.0), 1, 1, 1, Some(ACT));
    layers.push(LayerSpec::new("head.global_pool", LayerKind::Pool));
    layers.push(LayerSpec::new(
        "head.classifier.0",
        LayerKind::Linear {
            d_in: HEAD_WIDTHS.0,
            d_out: HEAD_WIDTHS.1,
            bias: false,
        },
    ));
    layers.push(LayerSpec::new("head.classifier.1", LayerKind::LayerNorm { dim: HEAD_WIDTHS.1 }));
    act(&mut layers, "head.classifier.2");
    layers.push(LayerSpec::new(
        "head.classifier.4",
        LayerKind::Linear {
            d_in: HEAD_WIDTHS.1,
            d_out: num_classes,
            bias: true,
        },
    ));
    ModelGraph::new(ModelName::EfficientvitB0, layers, num_classes, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_totals() {
        let n8 = build_efficientvit_b0(8).unwrap().trainable_params();
        assert!((n8 as f64 / 2.14e6 - 1.0).abs() <= 0.02, "{n8}");
        let n1000 = build_efficientvit_b0(1000).unwrap().trainable_params();
        assert!((n1000 as f64 / 3.41e6 - 1.0).abs() <= 0.01, "{n1000}");
    }

    #[test]
    fn not_executable() {
        assert!(!build_efficientvit_b0(8).unwrap().executable);
    }
}
