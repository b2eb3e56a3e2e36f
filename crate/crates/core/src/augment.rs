//! Random crops applied identically to every frame and every modality of a
//! clip, followed by a resize back to the output resolution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::format::SparsePoint;
use crate::scenegen::VideoSample;

pub const ASPECT_RANGE: (f64, f64) = (0.75, 1.33);
const MAX_ATTEMPTS: usize = 64;

/// A crop window `[y0, y0+h) × [x0, x0+w)` resized to `out_h × out_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropParams {
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl CropParams {
    pub fn identity(height: usize, width: usize) -> Self {
        CropParams {
            y0: 0,
            x0: 0,
            h: height,
            w: width,
            out_h: height,
            out_w: width,
        }
    }
}

/// Rejection-samples a crop whose area fraction is uniform in
/// `[min_cover, 1]` and whose aspect `w/h` is uniform in `aspect`; falls back
/// to the full frame after 64 failed attempts.
pub fn sample_crop(
    rng: &mut impl Rng,
    height: usize,
    width: usize,
    min_cover: f64,
    aspect: (f64, f64),
) -> CropParams {
    let total = (height * width) as f64;
    for _ in 0..MAX_ATTEMPTS {
        let area = rng.random_range(min_cover..=1.0) * total;
        let ratio = rng.random_range(aspect.0..=aspect.1);
        let h = (area / ratio).sqrt().round() as usize;
        let w = (area * ratio).sqrt().round() as usize;
        if h == 0 || w == 0 || h > height || w > width {
            continue;
        }
        let r = w as f64 / h as f64;
        if r < aspect.0 || r > aspect.1 || ((h * w) as f64) < min_cover * total {
            continue;
        }
        return CropParams {
            y0: rng.random_range(0..=height - h),
            x0: rng.random_range(0..=width - w),
            h,
            w,
            out_h: height,
            out_w: width,
        };
    }
    CropParams::identity(height, width)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}

/// Source coordinate and lower-neighbor weight along one axis, with
/// half-pixel alignment; samples outside the window clamp to its border.
fn taps(out: usize, len: usize, origin: usize) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|i| {
            let s = ((i as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (origin + lo, origin + hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear crop-and-resize of a T×H×W×C buffer.
pub fn resize_bilinear(data: &[f32], frames: usize, height: usize, width: usize, channels: usize, crop: &CropParams) -> Vec<f32> {
    let ys = taps(crop.out_h, crop.h, crop.y0);
    let xs = taps(crop.out_w, crop.w, crop.x0);
    let mut out = Vec::with_capacity(frames * crop.out_h * crop.out_w * channels);
    for t in 0..frames {
        let at = |r: usize, c: usize, k: usize| data[((t * height + r) * width + c) * channels + k] as f64;
        for &(y_lo, y_hi, ty) in &ys {
            for &(x_lo, x_hi, tx) in &xs {
                for k in 0..channels {
                    let top = lerp(at(y_lo, x_lo, k), at(y_lo, x_hi, k), tx);
                    let bottom = lerp(at(y_hi, x_lo, k), at(y_hi, x_hi, k), tx);
                    out.push(lerp(top, bottom, ty) as f32);
                }
            }
        }
    }
    out
}

pub fn apply_to_video(rgb: &[f32], frames: usize, height: usize, width: usize, crop: &CropParams) -> Vec<f32> {
    resize_bilinear(rgb, frames, height, width, 3, crop)
}

/// Resizes the flow field and rescales its components by the zoom factors
/// `out_w / w` and `out_h / h`.
pub fn apply_to_flow(flow: &[f32], frames: usize, height: usize, width: usize, crop: &CropParams) -> Vec<f32> {
    let sx = crop.out_w as f64 / crop.w as f64;
    let sy = crop.out_h as f64 / crop.h as f64;
    let mut out = resize_bilinear(flow, frames, height, width, 2, crop);
    for f in out.chunks_exact_mut(2) {
        f[0] = (f[0] as f64 * sx) as f32;
        f[1] = (f[1] as f64 * sy) as f32;
    }
    out
}

/// Bilinear depth, nearest-neighbor instance masks.
pub fn apply_to_depth(
    depth: &[f32],
    masks: &[i32],
    frames: usize,
    height: usize,
    width: usize,
    crop: &CropParams,
) -> (Vec<f32>, Vec<i32>) {
    let d = resize_bilinear(depth, frames, height, width, 1, crop);
    let nearest = |out: usize, len: usize, origin: usize| -> Vec<usize> {
        (0..out)
            .map(|i| origin + (((i as f64 + 0.5) * len as f64 / out as f64) as usize).min(len - 1))
            .collect()
    };
    let ys = nearest(crop.out_h, crop.h, crop.y0);
    let xs = nearest(crop.out_w, crop.w, crop.x0);
    let mut m = Vec::with_capacity(frames * crop.out_h * crop.out_w);
    for t in 0..frames {
        for &r in &ys {
            for &c in &xs {
                m.push(masks[(t * height + r) * width + c]);
            }
        }
    }
    (d, m)
}

/// Maps pixel centers through the crop; points landing outside the output
/// grid are dropped.
pub fn apply_to_sparse(points: &[SparsePoint], crop: &CropParams) -> Vec<SparsePoint> {
    let map = |p: u32, origin: usize, len: usize, out: usize| -> Option<u32> {
        let v = (p as f64 + 0.5 - origin as f64) * out as f64 / len as f64;
        (v >= 0.0 && v < out as f64).then(|| v.floor() as u32)
    };
    points
        .iter()
        .filter_map(|p| {
            Some(SparsePoint {
                row: map(p.row, crop.y0, crop.h, crop.out_h)?,
                col: map(p.col, crop.x0, crop.w, crop.out_w)?,
                ..*p
            })
        })
        .collect()
}

/// Transforms `[ymin, xmin, ymax, xmax]` boxes (normalized to the source
/// frame) into the crop's normalized frame, clipping to `[0, 1]`; boxes left
/// without area become zeros.
pub fn apply_to_bboxes(boxes: &[f32], height: usize, width: usize, crop: &CropParams) -> Vec<f32> {
    let mut out = Vec::with_capacity(boxes.len());
    for b in boxes.chunks_exact(4) {
        let y = |v: f32| ((v as f64 * height as f64 - crop.y0 as f64) / crop.h as f64).clamp(0.0, 1.0);
        let x = |v: f32| ((v as f64 * width as f64 - crop.x0 as f64) / crop.w as f64).clamp(0.0, 1.0);
        let nb = [y(b[0]), x(b[1]), y(b[2]), x(b[3])];
        if nb[2] > nb[0] && nb[3] > nb[1] {
            out.extend(nb.map(|v| v as f32));
        } else {
            out.extend([0.0f32; 4]);
        }
    }
    out
}

/// Applies one crop to every modality of a clip.
pub fn augment_sample(sample: &VideoSample, crop: &CropParams) -> VideoSample {
    let (t, h, w) = (sample.frames, sample.height, sample.width);
    let (depth, masks) = apply_to_depth(&sample.depth, &sample.masks, t, h, w, crop);
    VideoSample {
        frames: t,
        height: crop.out_h,
        width: crop.out_w,
        max_objects: sample.max_objects,
        rgb: apply_to_video(&sample.rgb, t, h, w, crop),
        depth,
        flow: apply_to_flow(&sample.flow, t, h, w, crop),
        flow_frames: sample.flow_frames,
        masks,
        boxes: apply_to_bboxes(&sample.boxes, h, w, crop),
        sparse: apply_to_sparse(&sample.sparse, crop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn forced_full_frame() {
        for s in 0..20 {
            assert_eq!(sample_crop(&mut seeded(s, 0), 64, 64, 1.0, ASPECT_RANGE), CropParams::identity(64, 64));
        }
    }

    #[test]
    fn crops_respect_constraints() {
        for s in 0..500 {
            let c = sample_crop(&mut seeded(s, 0), 64, 48, 0.2, ASPECT_RANGE);
            let r = c.w as f64 / c.h as f64;
            assert!((0.75..=1.33).contains(&r), "{c:?}");
            assert!((c.h * c.w) as f64 >= 0.2 * 64.0 * 48.0);
            assert!(c.y0 + c.h <= 64 && c.x0 + c.w <= 48);
        }
        let a = sample_crop(&mut seeded(4, 0), 64, 64, 0.2, ASPECT_RANGE);
        assert_eq!(a, sample_crop(&mut seeded(4, 0), 64, 64, 0.2, ASPECT_RANGE));
    }

    #[test]
    fn identity_crop_is_bit_exact() {
        let data: Vec<f32> = (0..2 * 5 * 7 * 3).map(|i| (i as f32).sin()).collect();
        let id = CropParams::identity(5, 7);
        assert_eq!(apply_to_video(&data, 2, 5, 7, &id), data);
        let flow: Vec<f32> = (0..2 * 5 * 7 * 2).map(|i| (i as f32 * 0.37).cos()).collect();
        assert_eq!(apply_to_flow(&flow, 2, 5, 7, &id), flow);
        let masks: Vec<i32> = (0..70).map(|i| i % 4).collect();
        let (d, m) = apply_to_depth(&data[..70], &masks, 2, 5, 7, &id);
        assert_eq!((d.as_slice(), m), (&data[..70], masks));
        let boxes = vec![0.2, 0.1, 0.6, 0.9, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(apply_to_bboxes(&boxes, 5, 7, &id), boxes);
    }

    #[test]
    fn constant_frames_stay_constant() {
        let data = vec![0.3f32; 6 * 6 * 3];
        let crop = CropParams { y0: 1, x0: 2, h: 3, w: 4, out_h: 6, out_w: 6 };
        assert!(apply_to_video(&data, 1, 6, 6, &crop).iter().all(|v| *v == 0.3));
    }

    #[test]
    fn half_width_crop_doubles_x_flow() {
        let flow: Vec<f32> = [1.5f32, -0.25].repeat(8 * 8);
        let crop = CropParams { y0: 0, x0: 2, h: 8, w: 4, out_h: 8, out_w: 8 };
        for f in apply_to_flow(&flow, 1, 8, 8, &crop).chunks(2) {
            assert_eq!(f, [3.0, -0.25]);
        }
        let zero = vec![0.0f32; 128];
        assert!(apply_to_flow(&zero, 1, 8, 8, &crop).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sparse_outside_window_dropped() {
        let crop = CropParams { y0: 4, x0: 4, h: 4, w: 4, out_h: 8, out_w: 8 };
        let pts = vec![
            SparsePoint { frame: 0, row: 1, col: 5, dist: 2.0 },
            SparsePoint { frame: 1, row: 5, col: 6, dist: 3.0 },
        ];
        let out = apply_to_sparse(&pts, &crop);
        assert_eq!(out, vec![SparsePoint { frame: 1, row: 3, col: 5, dist: 3.0 }]);
        assert!(apply_to_sparse(&pts[..1], &crop).is_empty());
        assert_eq!(apply_to_sparse(&pts, &CropParams::identity(8, 8)), pts);
    }

    #[test]
    fn box_left_of_window_vanishes() {
        let crop = CropParams { y0: 0, x0: 5, h: 10, w: 5, out_h: 10, out_w: 10 };
        assert_eq!(apply_to_bboxes(&[0.1, 0.0, 0.5, 0.4], 10, 10, &crop), vec![0.0; 4]);
    }
}
