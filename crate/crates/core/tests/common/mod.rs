#![allow(dead_code)]

pub mod clahe_ref;
pub mod oracles;

use leafvit_core::preprocess::ImageBuffer;
use leafvit_core::rng::SplitMix64;

pub const CLASS_TABLE_LABELS: [&str; 8] = [
    "Anthracnose",
    "Bacterial Canker",
    "Cutting Weevil",
    "Die Back",
    "Gall Midge",
    "Healthy",
    "Powdery Mildew",
    "Sooty Mould",
];

/// Published class-wise rows: precision, recall, F1 (percent, 0 decimals).
pub const CLASS_TABLE_ROWS: [[u32; 3]; 8] = [
    [98, 100, 99],
    [100, 97, 98],
    [100, 100, 100],
    [100, 100, 100],
    [98, 100, 99],
    [100, 100, 100],
    [100, 100, 100],
    [99, 99, 99],
];

pub const CLASS_TABLE_AVERAGE: [u32; 3] = [99, 99, 99];

/// A confusion matrix that reproduces every published cell: 120 Bacterial
/// Canker samples (116 correct, 2 as Anthracnose, 1 as Gall Midge, 1 as Sooty
/// Mould), one Sooty Mould sample predicted as Gall Midge, all else correct.
pub fn class_table_matrix() -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; 8]; 8];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 100;
    }
    m[1][1] = 116;
    m[1][0] = 2;
    m[1][4] = 1;
    m[1][7] = 1;
    m[7][7] = 99;
    m[7][4] = 1;
    m
}

pub fn labels() -> Vec<String> {
    CLASS_TABLE_LABELS.iter().map(|s| s.to_string()).collect()
}

pub fn random_image(rng: &mut SplitMix64, h: usize, w: usize) -> ImageBuffer {
    let pixels = (0..h * w * 3).map(|_| rng.below(256) as u8).collect();
    ImageBuffer::new(h, w, pixels).unwrap()
}

/// Smooth random image: a few blended gradients, closer to photographs than noise.
pub fn smooth_image(rng: &mut SplitMix64, h: usize, w: usize) -> ImageBuffer {
    let a: Vec<f64> = (0..9).map(|_| rng.uniform(-1.0, 1.0)).collect();
    ImageBuffer::from_fn(h, w, |y, x| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        let ch = |k: usize| {
            let t = 0.5 + 0.35 * (a[3 * k] * u * 6.0).sin() + 0.3 * a[3 * k + 1] * v + 0.15 * a[3 * k + 2] * u * v;
            (t.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        [ch(0), ch(1), ch(2)]
    })
    .unwrap()
}

/// Synthetic leaf photograph: a green, veined ellipse with brown spots on white.
pub fn fixture_leaf(h: usize, w: usize) -> ImageBuffer {
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    ImageBuffer::from_fn(h, w, |y, x| {
        let dy = (y as f64 - cy) / (0.35 * h as f64);
        let dx = (x as f64 - cx) / (0.45 * w as f64);
        if dx * dx + dy * dy > 1.0 {
            return [255, 255, 255];
        }
        let spot = ((x as f64 * 0.11).sin() * (y as f64 * 0.13).cos()) > 0.82;
        let vein = ((y as f64 - cy) - 0.25 * (x as f64 - cx)).abs() < 1.5;
        if spot {
            [110, 80, 40]
        } else if vein {
            [150, 190, 110]
        } else {
            let shade = (40.0 * dx) as i32;
            [(50 + shade).clamp(0, 255) as u8, 130, (45 - shade / 2).clamp(0, 255) as u8]
        }
    })
    .unwrap()
}
