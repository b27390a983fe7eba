use std::path::Path;

use super::ImageBuffer;
use crate::error::{Error, Result};

/// Decodes a PNG or JPEG file to 8-bit RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let err = |detail: String| Error::Image {
        path: path.to_path_buf(),
        detail,
    };
    let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| err(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(h as usize, w as usize, rgb.into_raw()).map_err(|e| err(e.to_string()))
}

pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
