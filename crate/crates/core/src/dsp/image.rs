use alloc::vec::Vec;

use super::MelSpectrogram;

/// 8-bit grayscale raster, rows stored top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Min-max scales the spectrogram to 0..=255. Width is the frame axis; the
/// lowest mel band is the bottom row. A constant spectrogram renders black.
pub fn render_image(spec: &MelSpectrogram) -> GrayImage {
    let (width, height) = (spec.n_frames(), spec.n_mels());
    let (lo, hi) = spec.min_max();
    let (lo, hi) = (f64::from(lo), f64::from(hi));
    let range = hi - lo;
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let band = height - 1 - y;
        for x in 0..width {
            let v = f64::from(spec.get(band, x));
            let p = if range > 0.0 {
                libm::round((v - lo) / range * 255.0)
            } else {
                0.0
            };
            pixels.push(p.clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage {
        width,
        height,
        pixels,
    }
}
