//! Frame grids: one row per panel kind, one column per frame.

use image::RgbImage;
use slotvid_core::scenegen::VideoSample;
use slotvid_core::targets::{decode_depth, encode_depth};

/// Label colors; label 0 (background or no segment) is black and labels
/// past the end wrap around, skipping black.
pub const PALETTE: [[u8; 3]; 17] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
];

pub fn label_color(label: i32) -> [u8; 3] {
    if label <= 0 {
        return PALETTE[0];
    }
    let n = PALETTE.len() - 1;
    PALETTE[1 + (label as usize - 1) % n]
}

/// T×H×W pixels of one grid row.
pub type Row = Vec<[u8; 3]>;

pub fn rgb_row(sample: &VideoSample, frames: usize) -> Row {
    sample.rgb[..frames * sample.pixels() * 3]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect()
}

pub fn label_row(labels: &[i32]) -> Row {
    labels.iter().map(|l| label_color(*l)).collect()
}

/// Grayscale for log-depth values: near is bright. `range` is the log-depth
/// interval mapped onto [255, 0].
pub fn log_depth_row(log_depth: impl Iterator<Item = f64>, range: (f64, f64)) -> Row {
    let span = (range.1 - range.0).max(1e-9);
    log_depth
        .map(|x| {
            let v = (1.0 - (x - range.0) / span).clamp(0.0, 1.0);
            [(v * 255.0).round() as u8; 3]
        })
        .collect()
}

/// Log-depth range of the ground truth over the first `frames` frames.
pub fn depth_range(sample: &VideoSample, frames: usize) -> (f64, f64) {
    sample.depth[..frames * sample.pixels()]
        .iter()
        .map(|d| encode_depth(*d as f64).unwrap_or(0.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

pub fn gt_depth_row(sample: &VideoSample, frames: usize, range: (f64, f64)) -> Row {
    let values = sample.depth[..frames * sample.pixels()].iter().map(|d| encode_depth(*d as f64).unwrap_or(0.0));
    log_depth_row(values, range)
}

/// Row for a predicted log-depth channel: values are decoded to distances
/// and re-encoded, which clamps negative predictions to the camera.
pub fn predicted_depth_row(values: &[f32], channels: usize, range: (f64, f64)) -> Row {
    let decoded = values.chunks_exact(channels).map(|c| decode_depth(c[0] as f64).max(0.0));
    log_depth_row(decoded.map(|d| encode_depth(d).unwrap_or(0.0)), range)
}

/// Stacks rows vertically, frames left to right. The image is exactly
/// `frames·width × rows·height`.
pub fn compose(rows: &[Row], frames: usize, height: usize, width: usize) -> RgbImage {
    let mut img = RgbImage::new((frames * width) as u32, (rows.len() * height) as u32);
    for (r, row) in rows.iter().enumerate() {
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    let px = row[(t * height + y) * width + x];
                    img.put_pixel((t * width + x) as u32, (r * height + y) as u32, image::Rgb(px));
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_fixed_and_wraps() {
        assert_eq!(label_color(0), [0, 0, 0]);
        assert_eq!(label_color(3), label_color(3 + 16));
        assert_ne!(label_color(16), [0, 0, 0]);
        let distinct: std::collections::BTreeSet<_> = (1..=16).map(label_color).collect();
        assert_eq!(distinct.len(), 16);
    }

    #[test]
    fn compose_places_frames_in_columns() {
        let row: Row = (0..2 * 2 * 3).map(|i| [i as u8, 0, 0]).collect();
        let img = compose(&[row.clone(), row], 2, 2, 3);
        assert_eq!(img.dimensions(), (6, 4));
        // frame 1, pixel (1, 2)
        assert_eq!(img.get_pixel(5, 1).0, [11, 0, 0]);
        assert_eq!(img.get_pixel(5, 3).0, [11, 0, 0]);
    }
}
