//! Static cost accounting: parameters, serialized size and FLOPs per layer.
//!
//! FLOPs follow the 2·MAC convention. Multiply-accumulates are counted for
//! convolutions, linear maps and attention products; normalization,
//! activation, softmax, residual and pooling work is tallied separately at one
//! operation per element and left out of the headline figure.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::model::{AttentionSpec, FeatureShape, LayerKind, LayerSpec, ModelGraph, ModelName};

const MIB: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: &'static str,
    pub output: String,
    pub params: usize,
    pub macs: u64,
    pub flops: u64,
    pub elementwise: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub model: ModelName,
    pub num_classes: usize,
    pub input_hw: usize,
    pub layers: Vec<LayerCost>,
    pub total_params: usize,
    pub total_macs: u64,
    pub total_flops: u64,
    pub total_elementwise: u64,
    /// `params · 4 / 2^20`.
    pub size_f32_mb: f64,
    /// `params / 2^20`, the convention of the published size column.
    pub size_one_byte_mb: f64,
}

impl CostReport {
    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }

    pub fn gmacs(&self) -> f64 {
        self.total_macs as f64 / 1e9
    }

    pub fn params_millions(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn to_text(&self) -> String {
        let width = self.layers.iter().map(|l| l.name.len()).max().unwrap_or(4).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} ({} classes, {}x{} input)",
            self.model, self.num_classes, self.input_hw, self.input_hw
        );
        let _ = writeln!(
            s,
            "{:<width$}  {:<14}  {:<16}  {:>10}  {:>14}  {:>12}",
            "layer", "kind", "output", "params", "flops", "elementwise"
        );
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{:<width$}  {:<14}  {:<16}  {:>10}  {:>14}  {:>12}",
                l.name, l.kind, l.output, l.params, l.flops, l.elementwise
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:<14}  {:<16}  {:>10}  {:>14}  {:>12}",
            "total", "", "", self.total_params, self.total_flops, self.total_elementwise
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "params        {:.3} M", self.params_millions());
        let _ = writeln!(s, "flops         {:.3} G (2 per MAC)", self.gflops());
        let _ = writeln!(s, "macs          {:.3} G", self.gmacs());
        let _ = writeln!(s, "size (f32)    {:.2} MB", self.size_f32_mb);
        let _ = writeln!(s, "size (1 B/p)  {:.2} MB", self.size_one_byte_mb);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,output,params,macs,flops,elementwise\n");
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                l.name, l.kind, l.output, l.params, l.macs, l.flops, l.elementwise
            );
        }
        let _ = writeln!(
            s,
            "total,,,{},{},{},{}",
            self.total_params, self.total_macs, self.total_flops, self.total_elementwise
        );
        s
    }
}

/// Trainable parameters implied by the layer specs.
pub fn count_params(graph: &ModelGraph) -> usize {
    graph.trainable_params()
}

/// Headline FLOPs (2·MACs) at `input_hw × input_hw`.
pub fn count_flops(graph: &ModelGraph, input_hw: usize) -> Result<u64> {
    Ok(profile(graph, input_hw)?.total_flops)
}

pub fn count_macs(graph: &ModelGraph, input_hw: usize) -> Result<u64> {
    Ok(profile(graph, input_hw)?.total_macs)
}

pub fn profile(graph: &ModelGraph, input_hw: usize) -> Result<CostReport> {
    let shapes = graph.propagate_shapes(input_hw)?;
    let layers: Vec<LayerCost> = graph
        .layers
        .iter()
        .zip(shapes.windows(2))
        .map(|(layer, io)| {
            let (macs, elementwise) = layer_cost(layer, io[0], io[1]);
            LayerCost {
                name: layer.name.clone(),
                kind: kind_name(&layer.kind),
                output: io[1].to_string(),
                params: layer.params().iter().filter(|p| p.trainable).map(|p| p.numel()).sum(),
                macs,
                flops: 2 * macs,
                elementwise,
            }
        })
        .collect();
    let total_params = layers.iter().map(|l| l.params).sum::<usize>();
    let total_macs = layers.iter().map(|l| l.macs).sum::<u64>();
    Ok(CostReport {
        model: graph.name,
        num_classes: graph.num_classes,
        input_hw,
        total_params,
        total_macs,
        total_flops: 2 * total_macs,
        total_elementwise: layers.iter().map(|l| l.elementwise).sum(),
        size_f32_mb: total_params as f64 * 4.0 / MIB,
        size_one_byte_mb: total_params as f64 / MIB,
        layers,
    })
}

fn kind_name(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv { .. } => "conv",
        LayerKind::BatchNorm { .. } => "batchnorm",
        LayerKind::LayerNorm { .. } => "layernorm",
        LayerKind::Activation { .. } => "activation",
        LayerKind::Mv2Block { .. } => "mv2",
        LayerKind::MobileVitBlock(_) => "mobilevit",
        LayerKind::Attention(AttentionSpec::LinearMultiScale { .. }) => "linear_attn",
        LayerKind::Attention(AttentionSpec::Window { .. }) => "window_attn",
        LayerKind::Ffn { .. } => "ffn",
        LayerKind::Pool => "pool",
        LayerKind::Linear { .. } => "linear",
    }
}

fn numel(s: FeatureShape) -> u64 {
    match s {
        FeatureShape::Map { c, h, w } => (c * h * w) as u64,
        FeatureShape::Vector { d } => d as u64,
    }
}

fn spatial(s: FeatureShape) -> u64 {
    match s {
        FeatureShape::Map { h, w, .. } => (h * w) as u64,
        FeatureShape::Vector { .. } => 1,
    }
}

fn conv_macs(c_in: usize, c_out: usize, kernel: usize, groups: usize, out_px: u64) -> u64 {
    (kernel * kernel * (c_in / groups) * c_out) as u64 * out_px
}

/// `(MACs, elementwise ops)` of one layer given its input and output shapes.
fn layer_cost(layer: &LayerSpec, input: FeatureShape, output: FeatureShape) -> (u64, u64) {
    let out_n = numel(output);
    match &layer.kind {
        &LayerKind::Conv {
            c_in,
            c_out,
            kernel,
            groups,
            ..
        } => (conv_macs(c_in, c_out, kernel, groups, spatial(output)), 0),
        LayerKind::BatchNorm { .. } | LayerKind::LayerNorm { .. } | LayerKind::Activation { .. } => (0, out_n),
        LayerKind::Pool => (0, numel(input)),
        &LayerKind::Linear { d_in, d_out, .. } => ((d_in * d_out) as u64, 0),
        &LayerKind::Mv2Block {
            c_in,
            c_out,
            stride,
            expansion,
        } => {
            let hidden = c_in * expansion;
            let (px_in, px_out) = (spatial(input), spatial(output));
            let macs = conv_macs(c_in, hidden, 1, 1, px_in)
                + conv_macs(hidden, hidden, 3, hidden, px_out)
                + conv_macs(hidden, c_out, 1, 1, px_out);
            let residual = if stride == 1 && c_in == c_out { out_n } else { 0 };
            let ew = 2 * hidden as u64 * px_in + 2 * hidden as u64 * px_out + out_n + residual;
            (macs, ew)
        }
        LayerKind::MobileVitBlock(b) => {
            let FeatureShape::Map { h, w, .. } = input else {
                return (0, 0);
            };
            let px = (h * w) as u64;
            let (n, d, f) = (b.channels as u64, b.dim as u64, b.ffn_dim as u64);
            let (hp, wp) = (h.div_ceil(b.patch) * b.patch, w.div_ceil(b.patch) * b.patch);
            let tokens = (hp * wp) as u64;
            let area = (b.patch * b.patch) as u64;
            let seq = tokens / area;
            let depth = b.depth as u64;

            let local = conv_macs(b.channels, b.channels, 3, 1, px) + n * d * px;
            let per_layer = tokens * (3 * d * d + d * d + 2 * d * f) + 2 * area * seq * seq * d;
            let fuse = d * n * px + conv_macs(2 * b.channels, b.channels, 3, 1, px);
            let macs = local + depth * per_layer + fuse;

            let heads = b.heads as u64;
            let per_layer_ew = 2 * tokens * d + area * heads * seq * seq + tokens * f + 2 * tokens * d;
            let ew = 2 * n * px + depth * per_layer_ew + tokens * d + 4 * n * px;
            (macs, ew)
        }
        LayerKind::Attention(AttentionSpec::LinearMultiScale {
            channels,
            head_dim,
            scales,
        }) => {
            let px = spatial(input);
            let c = *channels as u64;
            let branches = 1 + scales.len() as u64;
            let heads = c / *head_dim as u64;
            let hd = *head_dim as u64;
            let mut macs = c * 3 * c * px;
            for &k in scales {
                macs += (k * k) as u64 * 3 * c * px + (3 * c / (3 * heads)) * 3 * c * px;
            }
            // k^T v with a ones column for the normalizer, then q against it
            macs += 2 * heads * branches * px * hd * (hd + 1);
            macs += branches * c * c * px;
            let ew = 2 * branches * heads * px * hd + branches * heads * px * hd + out_n;
            (macs, ew)
        }
        &LayerKind::Attention(AttentionSpec::Window { dim, heads, window }) => {
            let px = spatial(input);
            let d = dim as u64;
            let ws2 = (window * window) as u64;
            let macs = px * 4 * d * d + 2 * px * ws2 * d;
            let ew = px * d + heads as u64 * px * ws2 + px * d;
            (macs, ew)
        }
        &LayerKind::Ffn {
            dim,
            hidden,
            pre_norm,
            ..
        } => {
            let px = spatial(input);
            let macs = 2 * px * (dim * hidden) as u64;
            let ew = if pre_norm { px * dim as u64 } else { 0 } + px * hidden as u64 + px * dim as u64;
            (macs, ew)
        }
    }
}

/// Reference values published for one model, with the tolerances applied to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedCosts {
    pub model: ModelName,
    pub params_m: f64,
    pub size_mb: f64,
    pub gflops: f64,
    pub params_tol: f64,
    pub size_tol: f64,
    pub flops_tol: f64,
}

pub const PUBLISHED: [PublishedCosts; 3] = [
    PublishedCosts {
        model: ModelName::MobilevitS,
        params_m: 4.94,
        size_mb: 4.71,
        gflops: 1.44,
        params_tol: 0.02,
        size_tol: 0.02,
        flops_tol: 0.10,
    },
    PublishedCosts {
        model: ModelName::EfficientvitB0,
        params_m: 2.14,
        size_mb: 2.04,
        gflops: 0.1,
        params_tol: 0.02,
        size_tol: 0.02,
        flops_tol: 0.15,
    },
    PublishedCosts {
        model: ModelName::Tinyvit5m,
        params_m: 5.07,
        size_mb: 4.84,
        gflops: 1.17,
        params_tol: 0.02,
        size_tol: 0.02,
        flops_tol: 0.15,
    },
];

pub fn published(model: ModelName) -> PublishedCosts {
    *PUBLISHED.iter().find(|p| p.model == model).expect("every model has published costs")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: &'static str,
    pub published: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Comparison {
    fn new(quantity: &'static str, published: f64, measured: f64, tolerance: f64) -> Self {
        Self {
            quantity,
            published,
            measured,
            tolerance,
            pass: ((measured - published) / published).abs() <= tolerance,
        }
    }

    pub fn relative_error(&self) -> f64 {
        (self.measured - self.published) / self.published
    }
}

/// Parameter count, 1-byte-per-parameter size, GFLOPs (2·MAC) and, for
/// information, GMACs, each against the published figure.
pub fn compare_with_published(report: &CostReport) -> Vec<Comparison> {
    let p = published(report.model);
    vec![
        Comparison::new("params_m", p.params_m, report.params_millions(), p.params_tol),
        Comparison::new("size_mb", p.size_mb, report.size_one_byte_mb, p.size_tol),
        Comparison::new("gflops", p.gflops, report.gflops(), p.flops_tol),
        Comparison::new("gmacs", p.gflops, report.gmacs(), p.flops_tol),
    ]
}

pub fn comparison_text(rows: &[Comparison]) -> String {
    let mut s = format!("{:<10} {:>10} {:>10} {:>8} {:>6}\n", "quantity", "published", "measured", "error", "");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>10.3} {:>10.3} {:>7.1}% {:>6}",
            r.quantity,
            r.published,
            r.measured,
            100.0 * r.relative_error(),
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_mobilevit_s, LayerKind, LayerSpec};

    #[test]
    fn pointwise_conv_formula() {
        let layer = LayerSpec::new(
            "c",
            LayerKind::Conv {
                c_in: 160,
                c_out: 640,
                kernel: 1,
                stride: 1,
                padding: 0,
                groups: 1,
                bias: false,
            },
        );
        let input = FeatureShape::Map { c: 160, h: 7, w: 7 };
        let output = layer.output_shape(input).unwrap();
        assert_eq!(2 * layer_cost(&layer, input, output).0, 10_035_200);
    }

    #[test]
    fn totals_are_column_sums() {
        let g = build_mobilevit_s(8).unwrap();
        let r = profile(&g, 224).unwrap();
        assert_eq!(r.total_params, r.layers.iter().map(|l| l.params).sum::<usize>());
        assert_eq!(r.total_params, count_params(&g));
        assert_eq!(r.total_flops, r.layers.iter().map(|l| l.flops).sum::<u64>());
        assert_eq!(r.total_flops, 2 * r.total_macs);
    }

    #[test]
    fn csv_has_one_row_per_layer() {
        let g = build_mobilevit_s(8).unwrap();
        let r = profile(&g, 224).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), r.layers.len() + 2);
        assert!(r.to_text().contains("stages.4.1"));
    }
}
