use proptest::prelude::*;
use rand::Rng;
use slotvid_core::baselines::*;
use slotvid_core::evaluate::{predict_video, rasterize_boxes};
use slotvid_core::metrics::*;
use slotvid_core::model::{init_params, InitMode, ModelConfig, Variant};
use slotvid_core::rng::seeded;
use slotvid_core::scenegen::*;
use slotvid_core::train::{TrainConfig, Trainer};

/// A static video whose objects are the given boxes (later on top) with a
/// per-object depth.
fn boxes_video(frames: usize, h: usize, w: usize, boxes: &[f32], depths: &[f32]) -> VideoSample {
    let frame = rasterize_boxes(boxes, h, w);
    let masks = frame.repeat(frames);
    let k = boxes.len() / 4;
    let depth: Vec<f32> = masks.iter().map(|&l| if l == 0 { 20.0 } else { depths[l as usize - 1] }).collect();
    VideoSample {
        frames,
        height: h,
        width: w,
        max_objects: k,
        rgb: vec![0.5; frames * h * w * 3],
        depth,
        flow: vec![0.0; frames * h * w * 2],
        flow_frames: frames - 1,
        boxes: extract_bboxes(&masks, frames, h, w, k),
        masks,
        sparse: Vec::new(),
    }
}

#[test]
fn copy_scores_perfectly_on_static_box_scenes() {
    let boxes = [0.125, 0.125, 0.5, 0.5, 0.5, 0.5, 0.875, 0.75];
    let v = boxes_video(4, 16, 16, &boxes, &[3.0, 5.0]);
    let pred = bbox_copy(v.box_frame(0), v.frames, v.height, v.width);
    let m = evaluate_video("v", &pred, &VideoView::of(&v), &EvalProtocol::default()).unwrap();
    assert_eq!(m.miou, Some(1.0));
    assert_eq!(m.b_miou, Some(1.0));
    assert_eq!(m.fg_ari, Some(1.0));
}

#[test]
fn copy_overlap_and_empty_boxes() {
    let full = [0.0, 0.0, 1.0, 1.0];
    let p = bbox_copy(&[full, full].concat(), 2, 4, 4);
    assert!(p.masks.iter().all(|l| *l == 2));
    let p = bbox_copy(&[0.0; 4], 2, 4, 4);
    assert!(p.masks.iter().all(|l| *l == 0));
}

#[test]
fn kmeans_with_one_cluster() {
    let v = boxes_video(3, 8, 8, &[], &[]);
    let (pred, r) = kmeans_pixels(&v, &KMeansConfig::default()).unwrap();
    assert_eq!(r.centers.len(), 1);
    assert!(pred.masks.iter().all(|l| *l == 0));
}

#[test]
fn kmeans_points_at_centers_are_a_fixed_point() {
    let centers = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let points: Vec<Vec<f64>> = labels.iter().map(|&l| centers[l].clone()).collect();
    let r = lloyd(&points, centers.clone(), 300).unwrap();
    assert_eq!(r.assignment, labels);
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
    assert_eq!(r.objective, vec![0.0, 0.0]);
    assert_eq!(r.centers, centers);
}

#[test]
fn kmeans_separates_two_blobs() {
    let boxes = [0.0, 0.0, 0.375, 0.375, 0.625, 0.625, 1.0, 1.0];
    let v = boxes_video(4, 16, 16, &boxes, &[1.0, 8.0]);
    for features in [KMeansFeatures::Depth, KMeansFeatures::DepthFlow] {
        let (pred, r) = kmeans_pixels(&v, &KMeansConfig { features, max_iters: 300 }).unwrap();
        assert!(r.converged);
        let ari = fg_ari(&pred.masks, &v.masks, 256, 1).unwrap();
        assert_eq!(ari, Some(1.0));
        // clusters keep the identity of the box they started from
        for (l, g) in pred.masks.iter().zip(&v.masks) {
            assert!(*g == 0 || l == g);
        }
    }
}

#[test]
fn features_are_unit_scaled() {
    let scene = SceneConfig {
        height: 16,
        width: 16,
        frames: 3,
        ..Default::default()
    };
    let ds = generate_dataset(&DatasetConfig::new(scene, 1, 4)).unwrap();
    let s = &ds.samples[0];
    for features in [KMeansFeatures::Depth, KMeansFeatures::Flow, KMeansFeatures::DepthFlow] {
        let f = pixel_features(s, features).unwrap();
        assert_eq!(f.len(), 3 * 256);
        assert!(f.iter().all(|r| r.len() == features.dims() && r.iter().all(|v| (0.0..=1.0).contains(v))));
    }
    assert_eq!(KMeansFeatures::DepthFlow.dims(), 7);
}

proptest! {
    #[test]
    fn lloyd_objective_never_increases(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = seeded(seed, 0);
        let points: Vec<Vec<f64>> = (0..80).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random_range(-1.0..2.0)).collect()).collect();
        let r = lloyd(&points, centers, 300).unwrap();
        for w in r.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

fn propagation_config(slots: usize) -> ModelConfig {
    let mut c = ModelConfig {
        slots,
        slot_dim: 32,
        init: InitMode::Conditional,
        variant: Variant::Propagation,
        readout_hidden: 64,
        init_hidden: 64,
        ..Default::default()
    };
    c.predictor.qkv = 32;
    c.predictor.heads = 4;
    c.predictor.mlp_hidden = 64;
    c
}

fn moving_scenes(videos: usize, seed: u64) -> Dataset {
    let scene = SceneConfig {
        height: 32,
        width: 32,
        frames: 6,
        min_objects: 2,
        max_objects: 2,
        ..Default::default()
    };
    generate_dataset(&DatasetConfig::new(scene, videos, seed)).unwrap()
}

#[test]
fn propagation_ignores_pixels() {
    let ds = moving_scenes(1, 3);
    let mut c = propagation_config(3);
    c.height = 32;
    c.width = 32;
    let params = init_params(&c, 9);
    let s = &ds.samples[0];
    let mut blank = s.clone();
    blank.rgb.iter_mut().for_each(|v| *v = 0.0);
    blank.depth.iter_mut().for_each(|v| *v = 0.0);
    assert_eq!(predict_video(&c, &params, s).unwrap(), predict_video(&c, &params, &blank).unwrap());
}

/// Two 8×8 squares drifting right by 2 px per frame from random starts.
fn drifting_boxes(rng: &mut impl Rng) -> VideoSample {
    let (frames, h, w) = (6, 32, 32);
    let starts: Vec<(usize, usize)> = (0..2).map(|o| (rng.random_range(0..8) + 16 * o, rng.random_range(0..12))).collect();
    let mut masks = Vec::with_capacity(frames * h * w);
    for t in 0..frames {
        let boxes: Vec<f32> = starts
            .iter()
            .flat_map(|&(r, c)| {
                let c = c + 2 * t;
                [r as f32 / 32.0, c as f32 / 32.0, (r + 8) as f32 / 32.0, (c + 8) as f32 / 32.0]
            })
            .collect();
        masks.extend(rasterize_boxes(&boxes, h, w));
    }
    let mut v = boxes_video(frames, h, w, &[], &[]);
    v.max_objects = 2;
    v.boxes = extract_bboxes(&masks, frames, h, w, 2);
    v.masks = masks;
    v
}

#[test]
fn trained_propagation_beats_copying() {
    let mut rng = seeded(21, 0);
    let train: Vec<VideoSample> = (0..64).map(|_| drifting_boxes(&mut rng)).collect();
    let val: Vec<VideoSample> = (0..8).map(|_| drifting_boxes(&mut rng)).collect();
    let mut c = propagation_config(2);
    c.height = 32;
    c.width = 32;
    let tc = TrainConfig {
        total_steps: 300,
        warmup_steps: 20,
        peak_lr: 1e-3,
        batch_size: 8,
        augment: false,
        seed: 5,
        ..Default::default()
    };
    let out = Trainer::new(&c, &tc, &train, 1.0).unwrap().run(None, None).unwrap();
    let (mut learned, mut copied) = (Vec::new(), Vec::new());
    for s in &val {
        let view = VideoView::of(s);
        let p = predict_video(&c, &out.params, s).unwrap();
        learned.extend(evaluate_video("v", &p, &view, &EvalProtocol::default()).unwrap().b_miou);
        let p = bbox_copy(s.box_frame(0), s.frames, s.height, s.width);
        copied.extend(evaluate_video("v", &p, &view, &EvalProtocol::default()).unwrap().b_miou);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (l, b) = (mean(&learned), mean(&copied));
    assert!(l > b, "propagation B.mIoU {l:.3} vs copy {b:.3}");
}
