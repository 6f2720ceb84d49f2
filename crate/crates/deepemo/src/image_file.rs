//! Grayscale image writers: binary PGM (P5, maxval 255) and PNG.

use std::fs;
use std::path::Path;

use deepemo_core::dsp::GrayImage;

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn encode_png(image: &GrayImage) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&image.pixels)?;
    writer.finish()?;
    Ok(out)
}

/// Picks PNG for a `.png` extension and PGM otherwise.
pub fn write_image(image: &GrayImage, path: &Path) -> std::io::Result<()> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        encode_png(image).map_err(std::io::Error::other)?
    } else {
        encode_pgm(image)
    };
    fs::write(path, bytes)
}
