//! PNG encoding helpers. Encoding uses fixed encoder settings so identical
//! pixels always produce identical bytes.

use std::path::Path;

use image::{codecs::png::PngEncoder, ExtendedColorType, ImageEncoder};

use crate::error::{Error, IoContext, Result};

pub fn encode_png(width: u32, height: u32, channels: u8, data: &[u8]) -> Result<Vec<u8>> {
    let color = match channels {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        n => return Err(Error::invalid(format!("unsupported channel count {n}"))),
    };
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(data, width, height, color)?;
    Ok(out)
}

pub fn write_png(path: &Path, width: u32, height: u32, channels: u8, data: &[u8]) -> Result<()> {
    let bytes = encode_png(width, height, channels, data)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    std::fs::write(path, bytes).at(path)
}

/// Relative image path inside a class-per-directory image database.
pub fn image_rel_path(class_index: usize, image_index: usize) -> std::path::PathBuf {
    Path::new(&format!("class_{class_index:04}")).join(format!("img_{image_index:04}.png"))
}
