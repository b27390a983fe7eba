use super::ImageBuffer;
use crate::error::Result;
use crate::tensor::sample_positions;

/// Out-of-bounds colour for rotation and shift; the dataset background is white.
pub const FILL: [u8; 3] = [255, 255, 255];

fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let turns = deg.rem_euclid(360.0);
    match turns {
        t if t == 0.0 => (0.0, 1.0),
        t if t == 90.0 => (1.0, 0.0),
        t if t == 180.0 => (0.0, -1.0),
        t if t == 270.0 => (-1.0, 0.0),
        _ => deg.to_radians().sin_cos(),
    }
}

/// Rotates about the image centre by `angle_deg` (counter-clockwise on screen),
/// sampling bilinearly. Neighbours outside the image read as [`FILL`].
pub fn rotate(img: &ImageBuffer, angle_deg: f64) -> Result<ImageBuffer> {
    if angle_deg == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let (sin, cos) = sin_cos_deg(angle_deg);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let px = |x: i64, y: i64| -> [u8; 3] {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            FILL
        } else {
            img.get(y as usize, x as usize)
        }
    };
    ImageBuffer::from_fn(h, w, |y, x| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let sx = cx + cos * dx + sin * dy;
        let sy = cy - sin * dx + cos * dy;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let (a, b, c, d) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
        let mut out = [0u8; 3];
        for k in 0..3 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
        }
        out
    })
}

/// Translates by `round(frac·dim)` pixels (positive = right/down), filling with [`FILL`].
pub fn shift(img: &ImageBuffer, dx_frac: f64, dy_frac: f64) -> Result<ImageBuffer> {
    let (h, w) = (img.height(), img.width());
    let dx = (dx_frac * w as f64).round() as i64;
    let dy = (dy_frac * h as f64).round() as i64;
    ImageBuffer::from_fn(h, w, |y, x| {
        let (sx, sy) = (x as i64 - dx, y as i64 - dy);
        if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
            FILL
        } else {
            img.get(sy as usize, sx as usize)
        }
    })
}

pub fn hflip(img: &ImageBuffer) -> ImageBuffer {
    let w = img.width();
    ImageBuffer::from_fn(img.height(), w, |y, x| img.get(y, w - 1 - x)).expect("same dimensions")
}

pub fn vflip(img: &ImageBuffer) -> ImageBuffer {
    let h = img.height();
    ImageBuffer::from_fn(h, img.width(), |y, x| img.get(h - 1 - y, x)).expect("same dimensions")
}

/// Luma `0.299R + 0.587G + 0.114B`, rounded, replicated to all three channels.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    let pixels = img
        .pixels()
        .chunks_exact(3)
        .flat_map(|p| {
            let y = (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8;
            [y; 3]
        })
        .collect();
    ImageBuffer::new(img.height(), img.width(), pixels).expect("same dimensions")
}

/// Bilinear resize with half-pixel centres; identity when the size is unchanged.
pub fn resize(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    if (out_h, out_w) == (img.height(), img.width()) {
        return Ok(img.clone());
    }
    let ys = sample_positions(img.height(), out_h);
    let xs = sample_positions(img.width(), out_w);
    ImageBuffer::from_fn(out_h, out_w, |y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let (a, b, c, d) = (img.get(y0, x0), img.get(y0, x1), img.get(y1, x0), img.get(y1, x1));
        let mut out = [0u8; 3];
        for k in 0..3 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = (top * (1.0 - fy) + bottom * fy).round() as u8;
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> ImageBuffer {
        // a b / c d
        ImageBuffer::new(2, 2, vec![10, 11, 12, 20, 21, 22, 30, 31, 32, 40, 41, 42]).unwrap()
    }

    #[test]
    fn right_angle_rotation_is_a_permutation() {
        let r = rotate(&two_by_two(), 90.0).unwrap();
        assert_eq!(r.pixels(), &[30, 31, 32, 10, 11, 12, 40, 41, 42, 20, 21, 22]);
        let img = ImageBuffer::from_fn(5, 5, |y, x| [(y * 5 + x) as u8, 3, 7]).unwrap();
        for a in [90.0, 180.0, 270.0, -90.0] {
            assert_eq!(rotate(&img, a).unwrap().pixel_sum(), img.pixel_sum());
        }
        let back = rotate(&rotate(&img, 90.0).unwrap(), -90.0).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = ImageBuffer::from_fn(9, 4, |y, x| [(y * 9 + x) as u8, 1, 2]).unwrap();
        assert_eq!(rotate(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn corners_fill_white_at_45() {
        let img = ImageBuffer::filled(21, 21, [0, 0, 0]).unwrap();
        let r = rotate(&img, 45.0).unwrap();
        assert_eq!(r.get(0, 0), FILL);
        assert_eq!(r.get(10, 10), [0, 0, 0]);
    }

    #[test]
    fn shift_moves_and_fills() {
        let img = ImageBuffer::from_fn(4, 10, |_, x| [x as u8; 3]).unwrap();
        let s = shift(&img, 0.2, 0.0).unwrap();
        assert_eq!(s.get(0, 0), FILL);
        assert_eq!(s.get(0, 2), [0; 3]);
        assert_eq!(s.get(3, 9), [7; 3]);
        let gone = shift(&img, 1.0, 0.0).unwrap();
        assert!(gone.pixels().iter().all(|&v| v == 255));
        let up = shift(&img, 0.0, -0.5).unwrap();
        assert_eq!(up.get(3, 4), FILL);
        assert_eq!(up.get(1, 4), [4; 3]);
    }

    #[test]
    fn flips_and_gray() {
        let img = two_by_two();
        assert_eq!(hflip(&img).get(0, 0), img.get(0, 1));
        assert_eq!(vflip(&img).get(0, 0), img.get(1, 0));
        assert_eq!(hflip(&hflip(&img)), img);
        let red = ImageBuffer::filled(1, 1, [255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&red).get(0, 0), [76, 76, 76]);
    }

    #[test]
    fn resize_identity_and_upsample() {
        let img = two_by_two();
        assert_eq!(resize(&img, 2, 2).unwrap(), img);
        let up = resize(&img, 4, 4).unwrap();
        assert_eq!(up.get(0, 0), img.get(0, 0));
        assert_eq!(up.get(3, 3), img.get(1, 1));
    }
}
