use serde::{Deserialize, Serialize};

use super::{clahe, hflip, rotate, shift, to_grayscale, vflip, ImageBuffer};
use crate::error::{Error, Result};
use crate::model::INPUT_HW;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::{resize_bilinear, Tensor};

/// Order in which [`random_augment`] applies its steps.
pub const AUGMENT_ORDER: [&str; 6] = ["clahe", "rotate", "shift", "hflip", "vflip", "grayscale"];

/// RNG draws consumed by one [`random_augment`] call, whatever the configuration:
/// angle, |dx|, sign(dx), |dy|, sign(dy), hflip, vflip, grayscale.
pub const DRAWS_PER_AUGMENT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub rotation_max_deg: f64,
    pub shift_frac_max: f64,
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub grayscale_p: f64,
    pub clahe: bool,
    pub clahe_clip: f64,
    pub clahe_grid: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_max_deg: 45.0,
            shift_frac_max: 0.1,
            hflip_p: 0.5,
            vflip_p: 0.5,
            grayscale_p: 0.1,
            clahe: true,
            clahe_clip: 2.0,
            clahe_grid: 8,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every step disabled.
    pub fn identity() -> Self {
        Self {
            rotation_max_deg: 0.0,
            shift_frac_max: 0.0,
            hflip_p: 0.0,
            vflip_p: 0.0,
            grayscale_p: 0.0,
            clahe: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::invalid("augment", format!("{what} out of range: {v}")));
        for (name, p) in [("hflip_p", self.hflip_p), ("vflip_p", self.vflip_p), ("grayscale_p", self.grayscale_p)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(name, p);
            }
        }
        if !(self.rotation_max_deg >= 0.0 && self.rotation_max_deg.is_finite()) {
            return bad("rotation_max_deg", self.rotation_max_deg);
        }
        if !(0.0..=1.0).contains(&self.shift_frac_max) {
            return bad("shift_frac_max", self.shift_frac_max);
        }
        if !(self.clahe_clip >= 1.0 && self.clahe_clip.is_finite()) {
            return bad("clahe_clip", self.clahe_clip);
        }
        if self.clahe_grid == 0 {
            return bad("clahe_grid", 0.0);
        }
        Ok(())
    }
}

/// One random variant: CLAHE, rotation, shift, flips, then grayscale.
///
/// Always consumes exactly [`DRAWS_PER_AUGMENT`] values from `rng`.
pub fn random_augment(img: &ImageBuffer, cfg: &AugmentConfig, rng: &mut SplitMix64) -> Result<ImageBuffer> {
    cfg.validate()?;
    let angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
    let signed = |rng: &mut SplitMix64| {
        let mag = rng.uniform(0.0, cfg.shift_frac_max);
        if rng.bernoulli(0.5) {
            -mag
        } else {
            mag
        }
    };
    let dx = signed(rng);
    let dy = signed(rng);
    let do_hflip = rng.bernoulli(cfg.hflip_p);
    let do_vflip = rng.bernoulli(cfg.vflip_p);
    let do_gray = rng.bernoulli(cfg.grayscale_p);

    let mut out = if cfg.clahe {
        clahe(img, cfg.clahe_clip, cfg.clahe_grid)?
    } else {
        img.clone()
    };
    out = rotate(&out, angle)?;
    if dx != 0.0 || dy != 0.0 {
        out = shift(&out, dx, dy)?;
    }
    if do_hflip {
        out = hflip(&out);
    }
    if do_vflip {
        out = vflip(&out);
    }
    if do_gray {
        out = to_grayscale(&out);
    }
    Ok(out)
}

/// Bilinear resize to 224×224, scaling to `[0, 1]` and per-channel `(x - mean) / std`.
pub fn to_input_tensor<T: Scalar>(img: &ImageBuffer, mean: [f64; 3], std: [f64; 3]) -> Result<Tensor<T>> {
    if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::invalid("to_input_tensor", format!("std must be positive, got {s}")));
    }
    let (h, w) = (img.height(), img.width());
    let mut planar = vec![T::zero(); 3 * h * w];
    for (i, px) in img.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            planar[c * h * w + i] = T::lit(px[c] as f64 / 255.0);
        }
    }
    let x = resize_bilinear(&Tensor::new(vec![3, h, w], planar)?, INPUT_HW, INPUT_HW)?;
    let plane = INPUT_HW * INPUT_HW;
    let mut data = x.into_data();
    for (c, chunk) in data.chunks_mut(plane).enumerate() {
        let (m, s) = (T::lit(mean[c]), T::lit(std[c]));
        for v in chunk {
            *v = (*v - m) / s;
        }
    }
    Tensor::new(vec![3, INPUT_HW, INPUT_HW], data)
}
