//! Straight-line CLAHE written from the algorithm description, kept separate
//! from the library so the two can be compared.

use leafvit_core::preprocess::ImageBuffer;

fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn bin(y: f64) -> usize {
    let r = y.round();
    if r < 0.0 {
        0
    } else if r > 255.0 {
        255
    } else {
        r as usize
    }
}

fn tile_lut(img: &ImageBuffer, r0: usize, r1: usize, c0: usize, c1: usize, clip: f64) -> Vec<f64> {
    let n = (r1 - r0) * (c1 - c0);
    let mut hist = vec![0i64; 256];
    for y in r0..r1 {
        for x in c0..c1 {
            hist[bin(luma(img.get(y, x)))] += 1;
        }
    }
    let limit = std::cmp::max(1, (clip * n as f64 / 256.0).round() as i64);
    let excess: i64 = hist.iter().map(|&c| (c - limit).max(0)).sum();
    for c in hist.iter_mut() {
        *c = (*c).min(limit);
    }
    for (i, c) in hist.iter_mut().enumerate() {
        *c += excess / 256;
        if (i as i64) < excess % 256 {
            *c += 1;
        }
    }
    let mut lut = Vec::with_capacity(256);
    let mut acc = 0i64;
    for c in hist {
        acc += c;
        lut.push((acc as f64 * 255.0 / n as f64).round());
    }
    lut
}

/// Returns `(lower tile, upper tile, weight of upper)` for a pixel coordinate.
fn locate(p: usize, len: usize, grid: usize) -> (usize, usize, f64) {
    let centres: Vec<f64> = (0..grid)
        .map(|i| {
            let (a, b) = (i * len / grid, (i + 1) * len / grid);
            a as f64 + (b - a - 1) as f64 / 2.0
        })
        .collect();
    let p = p as f64;
    let below = centres.iter().filter(|&&c| c <= p).count();
    if below == 0 {
        (0, 0, 0.0)
    } else if below == grid {
        (grid - 1, grid - 1, 0.0)
    } else {
        let i = below - 1;
        (i, i + 1, (p - centres[i]) / (centres[i + 1] - centres[i]))
    }
}

pub fn clahe_reference(img: &ImageBuffer, clip: f64, grid: usize) -> ImageBuffer {
    let (h, w) = (img.height(), img.width());
    let mut luts = vec![vec![Vec::new(); grid]; grid];
    for (ty, row) in luts.iter_mut().enumerate() {
        for (tx, lut) in row.iter_mut().enumerate() {
            *lut = tile_lut(
                img,
                ty * h / grid,
                (ty + 1) * h / grid,
                tx * w / grid,
                (tx + 1) * w / grid,
                clip,
            );
        }
    }
    let mut out = vec![0u8; h * w * 3];
    for y in 0..h {
        let (a, b, wy) = locate(y, h, grid);
        for x in 0..w {
            let (c, d, wx) = locate(x, w, grid);
            let p = img.get(y, x);
            let (r, g, bl) = (p[0] as f64, p[1] as f64, p[2] as f64);
            let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * bl;
            let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * bl;
            let v = bin(luma(p));
            let top = (1.0 - wx) * luts[a][c][v] + wx * luts[a][d][v];
            let bottom = (1.0 - wx) * luts[b][c][v] + wx * luts[b][d][v];
            let yy = (1.0 - wy) * top + wy * bottom;
            let rgb = [
                yy + 1.402 * (cr - 128.0),
                yy - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0),
                yy + 1.772 * (cb - 128.0),
            ];
            for k in 0..3 {
                out[(y * w + x) * 3 + k] = rgb[k].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::new(h, w, out).unwrap()
}
