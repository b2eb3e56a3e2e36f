use ndgrad::{Graph, Tensor};
use proptest::prelude::*;
use rand::Rng;
use slotvid_core::checkpoint::Checkpoint;
use slotvid_core::model::*;
use slotvid_core::rng::seeded;
use slotvid_core::scenegen::*;
use slotvid_core::targets::{DepthSource, TargetBundle, TargetSelection};
use slotvid_core::train::*;

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 16,
        slots: 3,
        slot_dim: 8,
        target_channels: 1,
        init: InitMode::Conditional,
        variant,
        encoder: EncoderConfig {
            channels: 4,
            blocks: 2,
            stride: 4,
            groups: 2,
            transformer_layers: 1,
            heads: 2,
            head_dim: 4,
            mlp_hidden: 16,
        },
        corrector: CorrectorConfig {
            qkv: 8,
            iterations: 1,
            mlp_hidden: 16,
        },
        predictor: PredictorConfig {
            qkv: 8,
            heads: 2,
            mlp_hidden: 16,
        },
        decoder: DecoderConfig {
            grid_h: 4,
            grid_w: 4,
            channels: 4,
            stages: 2,
            kernel: 5,
        },
        readout_hidden: 8,
        init_hidden: 8,
    }
}

fn tiny_data(videos: usize, seed: u64) -> Dataset {
    let scene = SceneConfig {
        height: 16,
        width: 16,
        frames: 4,
        min_objects: 1,
        max_objects: 2,
        ..Default::default()
    };
    generate_dataset(&DatasetConfig::new(scene, videos, seed)).unwrap()
}

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        total_steps: steps,
        warmup_steps: 1.min(steps.saturating_sub(1)),
        batch_size: 2,
        subseq_len: 3,
        seed: 3,
        checkpoint_every: 3,
        ..Default::default()
    }
}

fn bundle(values: Vec<f32>, valid: Vec<bool>, c: usize) -> TargetBundle {
    let p = valid.len();
    TargetBundle {
        frames: 1,
        height: 1,
        width: p,
        channels: c,
        values,
        valid,
        channel_map: vec![("depth", 0..c)],
    }
}

#[test]
fn masked_loss_ignores_invalid_positions() {
    let mut rng = seeded(1, 0);
    for _ in 0..50 {
        let (p, c) = (rng.random_range(1..40), rng.random_range(1..4));
        let valid: Vec<bool> = (0..p).map(|_| rng.random::<f64>() < 0.5).collect();
        let target: Vec<f32> = (0..p * c).map(|_| rng.random()).collect();
        let mut pred: Vec<f32> = (0..p * c).map(|_| rng.random()).collect();
        let b = bundle(target.clone(), valid.clone(), c);
        let eval = |pred: &[f32]| {
            let mut g = Graph::<f32>::new();
            let v = g.constant(Tensor::new(&[p, c], pred.to_vec()).unwrap());
            masked_l2_loss(&mut g, &[v], &b).unwrap().map(|l| g.value(l).item().to_bits())
        };
        let before = eval(&pred);
        for (i, ok) in valid.iter().enumerate() {
            if !ok {
                for k in 0..c {
                    pred[i * c + k] = rng.random_range(-1e3..1e3);
                }
            }
        }
        assert_eq!(before, eval(&pred));
        // matching the targets everywhere gives exactly zero
        if let Some(zero) = eval(&target) {
            assert_eq!(f32::from_bits(zero), 0.0);
        }
    }
}

#[test]
fn adam_solves_a_quadratic() {
    // f(x) = sum a_i (x_i - c_i)^2
    let a = [1.0, 3.0, 0.5, 2.0];
    let c = [0.3, -0.2, 0.1, 0.25];
    let mut params = ParamSet::default();
    params.insert("x", Tensor::new(&[4], vec![0.0f32; 4]).unwrap());
    let mut opt = OptState::new(&params);
    let schedule = Schedule {
        warmup: 0,
        total: 200,
        peak: 0.05,
    };
    let f = |x: &[f32]| -> f64 { (0..4).map(|i| a[i] * (x[i] as f64 - c[i]).powi(2)).sum() };
    for step in 0..200 {
        let x = params.get("x").unwrap().data().to_vec();
        let g: Vec<f64> = (0..4).map(|i| 2.0 * a[i] * (x[i] as f64 - c[i])).collect();
        adam_step(&mut params, &[g], &mut opt, schedule.lr(step));
    }
    let loss = f(params.get("x").unwrap().data());
    assert!(loss < 1e-6, "final loss {loss}");
}

#[test]
fn zero_gradient_leaves_params() {
    let c = tiny(Variant::Full);
    let mut params = init_params::<f32>(&c, 1);
    let before = params.clone();
    let mut opt = OptState::new(&params);
    let grads: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
    adam_step(&mut params, &grads, &mut opt, 1e-3);
    assert_eq!(params, before);
}

#[test]
fn zero_step_run_writes_only_the_initial_checkpoint() {
    let ds = tiny_data(4, 1);
    let c = tiny(Variant::Full);
    let tc = short(0);
    let dir = tempfile::tempdir().unwrap();
    let out = Trainer::new(&c, &tc, &ds.samples, ds.manifest.flow_max_magnitude)
        .unwrap()
        .run(Some(dir.path()), None)
        .unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.checkpoints.len(), 1);
    let names: Vec<_> = std::fs::read_dir(dir.path().join("checkpoints")).unwrap().collect();
    assert_eq!(names.len(), 1);
    let ck = Checkpoint::load(&out.checkpoints[0]).unwrap();
    assert_eq!(ck.params(&c).unwrap(), out.params);
    let log = std::fs::read_to_string(dir.path().join("loss_log.csv")).unwrap();
    assert_eq!(log.trim(), LOG_HEADER);
}

#[test]
fn runs_are_deterministic_and_resume_exactly() {
    let ds = tiny_data(4, 2);
    let c = tiny(Variant::Full);
    let tc = short(6);
    let trainer = Trainer::new(&c, &tc, &ds.samples, ds.manifest.flow_max_magnitude).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = trainer.run(Some(dir.path()), None).unwrap();
    let b = trainer.run(None, None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    // initial, step 3, step 6
    assert_eq!(a.checkpoints.len(), 3);
    let mid = Checkpoint::load(&a.checkpoints[1]).unwrap();
    let resumed = trainer.run(None, Some(&mid)).unwrap();
    assert_eq!(resumed.params, a.params);
    assert_eq!(resumed.log, a.log[3..]);
    let csv = std::fs::read_to_string(dir.path().join("loss_log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    for row in &a.log {
        assert!(row.grad_norm.is_finite() && row.loss_target.is_finite());
    }
}

#[test]
fn resume_refuses_other_configs() {
    let ds = tiny_data(4, 2);
    let c = tiny(Variant::Full);
    let tc = short(0);
    let out = Trainer::new(&c, &tc, &ds.samples, 1.0).unwrap().run(None, None).unwrap();
    let ck = Checkpoint::from_params(&c, &out.params);
    let mut other = c.clone();
    other.slot_dim = 12;
    let err = Trainer::new(&other, &tc, &ds.samples, 1.0).unwrap().run(None, Some(&ck)).unwrap_err();
    assert!(err.to_string().contains("different model configuration"));
}

#[test]
fn supervised_variant_has_no_decoder_and_learns() {
    let ds = tiny_data(24, 4);
    let c = tiny(Variant::Supervised);
    let tc = TrainConfig {
        total_steps: 60,
        warmup_steps: 5,
        peak_lr: 3e-3,
        batch_size: 4,
        subseq_len: 3,
        augment: false,
        seed: 8,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = Trainer::new(&c, &tc, &ds.samples, ds.manifest.flow_max_magnitude)
        .unwrap()
        .run(Some(dir.path()), None)
        .unwrap();
    let ck = Checkpoint::load(out.checkpoints.last().unwrap()).unwrap();
    assert!(ck.records.keys().all(|k| !k.starts_with("dec.")));
    assert!(ck.records.keys().any(|k| k.starts_with("enc.")));
    let mean = |rows: &[LogRow]| rows.iter().map(|r| r.loss_readout).sum::<f64>() / rows.len() as f64;
    let (first, last) = (mean(&out.log[..10]), mean(&out.log[50..]));
    assert!(last < first, "readout loss {first:.4} -> {last:.4}");
    assert!(out.log.iter().all(|r| r.loss_target == 0.0));
}

#[test]
fn clip_handles_sets_of_buffers() {
    let mut rng = seeded(5, 0);
    for _ in 0..200 {
        let mut g: Vec<Vec<f64>> = (0..rng.random_range(1..5))
            .map(|_| (0..rng.random_range(0..8)).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        clip_global_norm(&mut g, 0.05);
        let n: f64 = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= 0.05 + 1e-9);
    }
}

#[test]
fn config_validation() {
    let mut tc = TrainConfig::default();
    assert!(tc.validate().is_ok());
    tc.warmup_steps = tc.total_steps;
    assert!(tc.validate().is_err());
    let mut tc = TrainConfig::default();
    tc.clip_norm = 0.0;
    assert!(tc.validate().is_err());
    let mut tc = TrainConfig::default();
    tc.noise_sigma = 0.2;
    assert!(tc.validate().is_err());
    tc.depth_source = DepthSource::Sparse;
    assert!(tc.validate().is_ok());
    let ds = tiny_data(2, 1);
    let mut c = tiny(Variant::Full);
    let tc = TrainConfig {
        targets: TargetSelection::BOTH,
        ..short(1)
    };
    assert!(Trainer::new(&c, &tc, &ds.samples, 1.0).is_err());
    c.target_channels = 4;
    assert!(Trainer::new(&c, &tc, &ds.samples, 1.0).is_ok());
}

proptest! {
    #[test]
    fn schedule_has_no_jumps(warmup in 1usize..500, extra in 1usize..5000, peak in 1e-5f64..1e-2) {
        let s = Schedule { warmup, total: warmup + extra, peak };
        let bound = peak / (warmup as f64).min(extra as f64 / std::f64::consts::PI);
        for step in 0..s.total {
            prop_assert!((s.lr(step) - s.lr(step + 1)).abs() <= bound * (1.0 + 1e-12));
        }
        prop_assert_eq!(s.lr(0), 0.0);
        prop_assert!((s.lr(warmup) - peak).abs() <= peak * 1e-12);
    }

    #[test]
    fn clipped_norm_is_bounded(v in prop::collection::vec(-100.0f64..100.0, 1..30), max in 1e-3f64..1.0) {
        let mut g = vec![v];
        let before = g.clone();
        let pre = clip_global_norm(&mut g, max);
        let n: f64 = g[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n <= max + 1e-9);
        if pre <= max {
            prop_assert_eq!(g, before);
        }
    }
}
