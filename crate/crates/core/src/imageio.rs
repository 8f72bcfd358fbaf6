//! Netpbm writers for eyeballing attribution maps and concept patches.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale PGM, normalized so the map's min maps to 0 and max to 255.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// 8-bit RGB PPM from `HWC` pixels in `[0, 1]`.
pub fn encode_ppm(pixels: &[f32], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    fs::write(path, encode_pgm(values, width, height)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, pixels: &[f32], width: usize, height: usize) -> Result<()> {
    fs::write(path, encode_ppm(pixels, width, height)).map_err(|e| Error::io(path, e))
}

/// Tiles equally sized `HWC` RGB images left-to-right with a 1-pixel gap.
pub fn tile_row(images: &[&[f32]], width: usize, height: usize) -> (Vec<f32>, usize) {
    let n = images.len();
    let total_w = if n == 0 { 0 } else { n * width + (n - 1) };
    let mut out = vec![1.0f32; total_w * height * 3];
    for (k, img) in images.iter().enumerate() {
        let x0 = k * (width + 1);
        for y in 0..height {
            let src = &img[y * width * 3..(y + 1) * width * 3];
            let dst = (y * total_w + x0) * 3;
            out[dst..dst + width * 3].copy_from_slice(src);
        }
    }
    (out, total_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_normalizes_to_full_range() {
        let bytes = encode_pgm(&[1.0, 3.0, 2.0, 1.0], 2, 2);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 255, 128, 0]);
    }

    #[test]
    fn tiles_have_gaps() {
        let a = vec![0.0f32; 2 * 2 * 3];
        let (row, w) = tile_row(&[&a, &a], 2, 2);
        assert_eq!(w, 5);
        assert_eq!(row[2 * 3], 1.0);
        assert_eq!(row[0], 0.0);
    }
}
