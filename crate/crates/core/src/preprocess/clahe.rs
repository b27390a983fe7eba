use super::ImageBuffer;
use crate::error::{Error, Result};

const BINS: usize = 256;

/// Full-range BT.601 RGB → YCbCr, in floating point.
pub fn rgb_to_ycbcr([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b,
    ]
}

/// Inverse of [`rgb_to_ycbcr`], rounded and clamped to `[0, 255]`.
pub fn ycbcr_to_rgb([y, cb, cr]: [f64; 3]) -> [u8; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    [
        to_u8(y + 1.402 * cr),
        to_u8(y - 0.344136 * cb - 0.714136 * cr),
        to_u8(y + 1.772 * cb),
    ]
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn luma_bin(y: f64) -> usize {
    y.round().clamp(0.0, 255.0) as usize
}

/// Per-tile luma lookup tables plus the tile geometry they were built on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileMappings {
    pub grid: usize,
    /// Row bounds of each tile row, `[start, end)`.
    pub rows: Vec<(usize, usize)>,
    pub cols: Vec<(usize, usize)>,
    /// `grid × grid` tables in row-major tile order.
    pub maps: Vec<[u8; BINS]>,
}

impl TileMappings {
    pub fn map(&self, ty: usize, tx: usize) -> &[u8; BINS] {
        &self.maps[ty * self.grid + tx]
    }
}

fn tile_bounds(len: usize, grid: usize) -> Vec<(usize, usize)> {
    (0..grid).map(|i| (i * len / grid, (i + 1) * len / grid)).collect()
}

fn check_args(img: &ImageBuffer, clip: f64, grid: usize) -> Result<()> {
    if grid == 0 || img.height() < grid || img.width() < grid {
        return Err(Error::invalid(
            "clahe",
            format!("{}x{} image cannot be split into a {grid}x{grid} grid", img.height(), img.width()),
        ));
    }
    if !(clip >= 1.0) || !clip.is_finite() {
        return Err(Error::invalid("clahe", format!("clip limit must be >= 1, got {clip}")));
    }
    Ok(())
}

/// Builds the clipped-histogram equalization table of every tile.
pub fn clahe_tile_mappings(img: &ImageBuffer, clip: f64, grid: usize) -> Result<TileMappings> {
    check_args(img, clip, grid)?;
    let (h, w) = (img.height(), img.width());
    let rows = tile_bounds(h, grid);
    let cols = tile_bounds(w, grid);
    let luma: Vec<usize> = img
        .pixels()
        .chunks_exact(3)
        .map(|p| luma_bin(rgb_to_ycbcr([p[0], p[1], p[2]])[0]))
        .collect();

    let mut maps = Vec::with_capacity(grid * grid);
    for &(y0, y1) in &rows {
        for &(x0, x1) in &cols {
            let mut hist = [0usize; BINS];
            for y in y0..y1 {
                for &v in &luma[y * w + x0..y * w + x1] {
                    hist[v] += 1;
                }
            }
            let tile_px = (y1 - y0) * (x1 - x0);
            maps.push(equalize(&mut hist, tile_px, clip));
        }
    }
    Ok(TileMappings { grid, rows, cols, maps })
}

fn equalize(hist: &mut [usize; BINS], tile_px: usize, clip: f64) -> [u8; BINS] {
    let limit = ((clip * tile_px as f64 / BINS as f64).round() as usize).max(1);
    let mut excess = 0;
    for c in hist.iter_mut() {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    let (each, rest) = (excess / BINS, excess % BINS);
    for (i, c) in hist.iter_mut().enumerate() {
        *c += each + usize::from(i < rest);
    }

    let mut map = [0u8; BINS];
    let mut cdf = 0;
    for (m, &c) in map.iter_mut().zip(hist.iter()) {
        cdf += c;
        *m = ((2 * cdf * 255 + tile_px) / (2 * tile_px)) as u8;
    }
    map
}

/// Interpolation partner tiles and the weight of the second, for one coordinate.
fn neighbours(bounds: &[(usize, usize)]) -> impl Fn(usize) -> (usize, usize, f64) + '_ {
    move |p| {
        let centre = |i: usize| (bounds[i].0 + bounds[i].1 - 1) as f64 / 2.0;
        let p = p as f64;
        let last = bounds.len() - 1;
        if p <= centre(0) {
            return (0, 0, 0.0);
        }
        if p >= centre(last) {
            return (last, last, 0.0);
        }
        let mut i = 0;
        while centre(i + 1) <= p {
            i += 1;
        }
        (i, i + 1, (p - centre(i)) / (centre(i + 1) - centre(i)))
    }
}

/// Contrast-limited adaptive histogram equalization of the luma channel.
///
/// Luma is binned after rounding; each output pixel bilinearly blends the
/// tables of the four surrounding tile centres. Chroma passes through.
pub fn clahe(img: &ImageBuffer, clip: f64, grid: usize) -> Result<ImageBuffer> {
    let tiles = clahe_tile_mappings(img, clip, grid)?;
    let (h, w) = (img.height(), img.width());
    let row_of = neighbours(&tiles.rows);
    let col_of = neighbours(&tiles.cols);
    let col_lookup: Vec<_> = (0..w).map(&col_of).collect();

    let mut out = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        let (ty0, ty1, wy) = row_of(y);
        for (x, &(tx0, tx1, wx)) in col_lookup.iter().enumerate() {
            let [luma, cb, cr] = rgb_to_ycbcr(img.get(y, x));
            let v = luma_bin(luma);
            let m = |ty: usize, tx: usize| tiles.map(ty, tx)[v] as f64;
            let top = (1.0 - wx) * m(ty0, tx0) + wx * m(ty0, tx1);
            let bottom = (1.0 - wx) * m(ty1, tx0) + wx * m(ty1, tx1);
            let y_new = (1.0 - wy) * top + wy * bottom;
            out.extend_from_slice(&ycbcr_to_rgb([y_new, cb, cr]));
        }
    }
    ImageBuffer::new(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_clip_limit_on_224() {
        let mut hist = [0usize; BINS];
        hist[100] = 784;
        let map = equalize(&mut hist, 784, 2.0);
        // limit 6 at bin 100, 778 redistributed: 3 per bin, 10 extra from bin 0
        assert_eq!(hist[100], 9);
        assert_eq!(hist[0], 4);
        assert_eq!(hist[9], 4);
        assert_eq!(hist[10], 3);
        assert_eq!(hist.iter().sum::<usize>(), 784);
        assert_eq!(map[255], 255);
    }

    #[test]
    fn tile_mappings_are_monotone() {
        let img = ImageBuffer::from_fn(40, 33, |y, x| [(x * 7 + y) as u8, (y * 5) as u8, 30]).unwrap();
        let t = clahe_tile_mappings(&img, 2.0, 8).unwrap();
        assert_eq!(t.maps.len(), 64);
        for m in &t.maps {
            assert!(m.windows(2).all(|p| p[0] <= p[1]));
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuffer::filled(50, 37, [90, 140, 60]).unwrap();
        let out = clahe(&img, 2.0, 8).unwrap();
        let first = out.get(0, 0);
        assert!(out.pixels().chunks(3).all(|p| p == first));
    }

    #[test]
    fn degenerate_inputs() {
        let img = ImageBuffer::filled(7, 20, [0, 0, 0]).unwrap();
        assert!(clahe(&img, 2.0, 8).is_err());
        let img = ImageBuffer::filled(20, 20, [0, 0, 0]).unwrap();
        assert!(clahe(&img, 0.5, 8).is_err());
        assert!(clahe(&img, 2.0, 0).is_err());
    }

    #[test]
    fn colour_round_trip() {
        for rgb in [[0, 0, 0], [255, 255, 255], [255, 0, 0], [12, 200, 77]] {
            assert_eq!(ycbcr_to_rgb(rgb_to_ycbcr(rgb)), rgb);
        }
    }
}
