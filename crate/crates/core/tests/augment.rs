use proptest::prelude::*;
use slotvid_core::augment::*;
use slotvid_core::rng::seeded;
use slotvid_core::scenegen::*;

/// Bilinear sample of a single-channel H×W image at continuous source
/// coordinates, written out as the four-weight sum.
fn bilinear(img: &[f32], w: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (a, b) = (y - y0, x - x0);
    let at = |r: f64, c: f64| img[r as usize * w + c as usize] as f64;
    // neighbors with zero weight are never read, so borders need no padding
    let term = |wt: f64, r: f64, c: f64| if wt > 0.0 { wt * at(r, c) } else { 0.0 };
    term((1.0 - a) * (1.0 - b), y0, x0) + term((1.0 - a) * b, y0, x0 + 1.0) + term(a * (1.0 - b), y0 + 1.0, x0) + term(a * b, y0 + 1.0, x0 + 1.0)
}

#[test]
fn zoomed_checkerboard_matches_direct_interpolation() {
    let n = 16;
    let img: Vec<f32> = (0..n * n).map(|i| ((i / n + i % n) % 2) as f32).collect();
    let crop = CropParams {
        y0: 3,
        x0: 5,
        h: 8,
        w: 8,
        out_h: 16,
        out_w: 16,
    };
    let out = resize_bilinear(&img, 1, n, n, 1, &crop);
    for i in 0..16 {
        for j in 0..16 {
            // output pixel centers mapped into the window, clamped to its border pixels
            let y = ((i as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 7.0) + 3.0;
            let x = ((j as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 7.0) + 5.0;
            let want = bilinear(&img, n, y, x);
            assert!((out[i * 16 + j] as f64 - want).abs() < 1e-6, "({i},{j})");
        }
    }
}

fn sample(seed: u64) -> VideoSample {
    let config = SceneConfig {
        height: 32,
        width: 40,
        frames: 2,
        ..Default::default()
    };
    let scene = sample_scene(&config, &mut seeded(seed, 0)).unwrap();
    render_video(&scene, &config, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn crops_satisfy_constraints(seed in any::<u64>(), min_cover in 0.05f64..=1.0) {
        let c = sample_crop(&mut seeded(seed, 0), 48, 64, min_cover, ASPECT_RANGE);
        let aspect = c.w as f64 / c.h as f64;
        let full = c == CropParams::identity(48, 64);
        prop_assert!(full || (ASPECT_RANGE.0..=ASPECT_RANGE.1).contains(&aspect));
        prop_assert!((c.h * c.w) as f64 >= min_cover * (48.0 * 64.0));
        prop_assert!(c.y0 + c.h <= 48 && c.x0 + c.w <= 64);
        prop_assert_eq!(c, sample_crop(&mut seeded(seed, 0), 48, 64, min_cover, ASPECT_RANGE));
    }

    #[test]
    fn constant_flow_rescales_exactly(seed in any::<u64>(), fx in -20.0f32..20.0, fy in -20.0f32..20.0) {
        let c = sample_crop(&mut seeded(seed, 0), 24, 32, 0.2, ASPECT_RANGE);
        let flow: Vec<f32> = (0..2 * 24 * 32).map(|i| if i % 2 == 0 { fx } else { fy }).collect();
        let out = apply_to_flow(&flow, 1, 24, 32, &c);
        let ex = (fx as f64 * (c.out_w as f64 / c.w as f64)) as f32;
        let ey = (fy as f64 * (c.out_h as f64 / c.h as f64)) as f32;
        for f in out.chunks(2) {
            prop_assert_eq!(f[0], ex);
            prop_assert_eq!(f[1], ey);
        }
    }

    #[test]
    fn modalities_stay_aligned(seed in any::<u64>()) {
        let v = sample(seed);
        let c = sample_crop(&mut seeded(seed, 1), v.height, v.width, 0.2, ASPECT_RANGE);
        let a = augment_sample(&v, &c);
        prop_assert_eq!(a.boxes.clone(), apply_to_bboxes(&v.boxes, v.height, v.width, &c));
        let from_masks = extract_bboxes(&a.masks, a.frames, a.height, a.width, a.max_objects);
        let tol = [1.0 / a.height as f32, 1.0 / a.width as f32, 1.0 / a.height as f32, 1.0 / a.width as f32];
        let inside = |b: &[f32]| {
            b[0] * v.height as f32 >= c.y0 as f32
                && b[1] * v.width as f32 >= c.x0 as f32
                && b[2] * v.height as f32 <= (c.y0 + c.h) as f32
                && b[3] * v.width as f32 <= (c.x0 + c.w) as f32
        };
        for ((got, want), orig) in from_masks.chunks(4).zip(a.boxes.chunks(4)).zip(v.boxes.chunks(4)) {
            if got.iter().all(|x| *x == 0.0) {
                continue;
            }
            // the moved box bounds the moved mask
            prop_assert!(got[0] >= want[0] - tol[0] && got[1] >= want[1] - tol[1], "{:?} vs {:?}", got, want);
            prop_assert!(got[2] <= want[2] + tol[2] && got[3] <= want[3] + tol[3], "{:?} vs {:?}", got, want);
            // and is tight when the window does not cut the object
            if inside(orig) {
                for k in 0..4 {
                    prop_assert!((got[k] - want[k]).abs() <= tol[k] + 1e-5, "{:?} vs {:?}", got, want);
                }
            }
        }
        // masks only carry ids seen inside the window; depth stays within its range
        for t in 0..v.frames {
            let mut window_ids = std::collections::BTreeSet::new();
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for r in c.y0..c.y0 + c.h {
                for col in c.x0..c.x0 + c.w {
                    let i = (t * v.height + r) * v.width + col;
                    window_ids.insert(v.masks[i]);
                    lo = lo.min(v.depth[i]);
                    hi = hi.max(v.depth[i]);
                }
            }
            prop_assert!(a.mask_frame(t).iter().all(|id| window_ids.contains(id)));
            prop_assert!(a.depth_frame(t).iter().all(|d| *d >= lo && *d <= hi));
        }
        // sparse points keep their distances and land on the output grid
        for p in &a.sparse {
            prop_assert!((p.row as usize) < a.height && (p.col as usize) < a.width);
        }
        prop_assert!(a.sparse.len() <= v.sparse.len());
    }
}
