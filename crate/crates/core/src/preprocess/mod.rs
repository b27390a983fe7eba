//! Image preprocessing and runtime augmentation.

mod augment;
mod clahe;
mod geometry;
mod image_io;

pub use augment::{random_augment, to_input_tensor, AugmentConfig, AUGMENT_ORDER, DRAWS_PER_AUGMENT};
pub use clahe::{clahe, clahe_tile_mappings, rgb_to_ycbcr, ycbcr_to_rgb, TileMappings};
pub use geometry::{hflip, resize, rotate, shift, to_grayscale, vflip, FILL};
pub use image_io::{load_image, save_png};

use crate::error::{Error, Result};

/// Decoded 8-bit RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image", format!("zero-size image {height}x{width}")));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::invalid(
                "image",
                format!("{height}x{width} RGB needs {} bytes, got {}", height * width * 3, pixels.len()),
            ));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(height, width, rgb.repeat(height * width))
    }

    /// Evaluates `f(y, x)` for every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn pixel_sum(&self) -> u64 {
        self.pixels.iter().map(|&v| v as u64).sum()
    }

    /// CRC32 of the dimensions and pixel bytes; used for golden checksums.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        h.update(&(self.height as u32).to_le_bytes());
        h.update(&(self.width as u32).to_le_bytes());
        h.update(&self.pixels);
        h.finalize()
    }
}
