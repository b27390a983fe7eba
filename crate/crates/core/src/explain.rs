//! Attention-rollout saliency from a forward-pass [`AttentionTrace`](crate::model::AttentionTrace).

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{AttentionTrace, INPUT_HW};
use crate::preprocess::{resize, ImageBuffer};
use crate::scalar::Scalar;
use crate::tensor::{resize_bilinear, Tensor};

/// Weight of the identity added to each head-averaged attention matrix.
pub const RESIDUAL_MIX: f64 = 0.5;

/// Which MobileViT block to explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageSelector {
    /// The last (coarsest) block.
    #[default]
    Last,
    Index(usize),
}

impl FromStr for StageSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Self::Last),
            _ => s
                .parse()
                .map(Self::Index)
                .map_err(|_| Error::invalid("stage", format!("expected `last` or a block index, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, each value in `[0, 1]`.
    pub values: Vec<f32>,
    pub block: usize,
    pub grid: (usize, usize),
}

fn resolve<T: Scalar>(trace: &AttentionTrace<T>, stage: StageSelector) -> Result<usize> {
    if trace.blocks.is_empty() || trace.records.is_empty() {
        return Err(Error::invalid("attention_rollout", "trace holds no attention records"));
    }
    let block = match stage {
        StageSelector::Last => trace.blocks.len() - 1,
        StageSelector::Index(i) => i,
    };
    if block >= trace.blocks.len() || trace.for_block(block).next().is_none() {
        return Err(Error::invalid(
            "attention_rollout",
            format!("no attention recorded for block {block} ({} blocks traced)", trace.blocks.len()),
        ));
    }
    Ok(block)
}

/// Rolled-out `N × N` matrix for every patch offset of `block`, in offset order.
pub fn rollout_matrices<T: Scalar>(trace: &AttentionTrace<T>, stage: StageSelector) -> Result<Vec<Vec<f64>>> {
    let block = resolve(trace, stage)?;
    let info = &trace.blocks[block];
    let n = info.grid.0 * info.grid.1;
    let area = info.patch * info.patch;
    let mut rolled: Vec<Option<Vec<f64>>> = vec![None; area];
    for rec in trace.for_block(block) {
        let a = mixed_attention(&rec.attention, n)?;
        let slot = &mut rolled[rec.patch_offset];
        *slot = Some(match slot.take() {
            None => a,
            Some(r) => matmul(&a, &r, n),
        });
    }
    rolled
        .into_iter()
        .enumerate()
        .map(|(o, r)| r.ok_or_else(|| Error::invalid("attention_rollout", format!("patch offset {o} missing"))))
        .collect()
}

/// Head mean, identity mix, then row normalization.
fn mixed_attention<T: Scalar>(attn: &Tensor<T>, n: usize) -> Result<Vec<f64>> {
    let &[heads, rows, cols] = attn.shape() else {
        return Err(Error::shape("attention_rollout", format!("attention must be [H,N,N], got {:?}", attn.shape())));
    };
    if rows != n || cols != n {
        return Err(Error::shape("attention_rollout", format!("attention is {rows}x{cols}, grid has {n} tokens")));
    }
    let mut a = vec![0.0; n * n];
    for head in attn.data().chunks(n * n) {
        for (dst, v) in a.iter_mut().zip(head) {
            *dst += v.to_f64_lossy() / heads as f64;
        }
    }
    for i in 0..n {
        let row = &mut a[i * n..(i + 1) * n];
        for v in row.iter_mut() {
            *v *= 1.0 - RESIDUAL_MIX;
        }
        row[i] += RESIDUAL_MIX;
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    Ok(a)
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Saliency for `stage`, upsampled to 224×224 and min-max normalized.
/// A flat map normalizes to all zeros.
pub fn attention_rollout<T: Scalar>(trace: &AttentionTrace<T>, stage: StageSelector) -> Result<SaliencyMap> {
    let rolled = rollout_matrices(trace, stage)?;
    let block = resolve(trace, stage)?;
    let info = &trace.blocks[block];
    let (nh, nw) = info.grid;
    let (p, n) = (info.patch, nh * nw);
    let (hp, wp) = (nh * p, nw * p);

    let mut grid = vec![0.0f64; hp * wp];
    for (offset, r) in rolled.iter().enumerate() {
        let (py, px) = (offset / p, offset % p);
        for token in 0..n {
            let col_mean = (0..n).map(|i| r[i * n + token]).sum::<f64>() / n as f64;
            let (gy, gx) = (token / nw, token % nw);
            grid[(gy * p + py) * wp + gx * p + px] = col_mean;
        }
    }
    let up = resize_bilinear(&Tensor::new(vec![1, hp, wp], grid)?, INPUT_HW, INPUT_HW)?;
    let (lo, hi) = up
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let values = up
        .data()
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span) as f32 } else { 0.0 })
        .collect();
    Ok(SaliencyMap {
        height: INPUT_HW,
        width: INPUT_HW,
        values,
        block,
        grid: info.grid,
    })
}

impl SaliencyMap {
    pub fn to_gray(&self) -> Vec<u8> {
        self.values.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_gray());
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.to_gray())
    }

    /// The resized input next to the same image blended 50/50 with a red heat layer.
    pub fn side_by_side(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        let base = resize(img, self.height, self.width)?;
        let gray = self.to_gray();
        ImageBuffer::from_fn(self.height, 2 * self.width, |y, x| {
            if x < self.width {
                return base.get(y, x);
            }
            let x = x - self.width;
            let [r, g, b] = base.get(y, x);
            let s = gray[y * self.width + x] as u16;
            let heat = [s, 0, 255 - s];
            let mix = |a: u8, h: u16| (a as u16 + h).div_ceil(2) as u8;
            [mix(r, heat[0]), mix(g, heat[1]), mix(b, heat[2])]
        })
    }
}
