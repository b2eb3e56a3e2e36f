use ndgrad::gradcheck::max_relative_error;
use ndgrad::{Real, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotvid_core::model::*;

fn tiny(k: usize, variant: Variant) -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 16,
        slots: k,
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

fn frames(rng: &mut ChaCha8Rng, c: &ModelConfig, t: usize) -> Vec<Vec<f32>> {
    (0..t)
        .map(|_| (0..c.height * c.width * 3).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect()
}

fn boxes(rng: &mut ChaCha8Rng, k: usize) -> Vec<f32> {
    (0..k)
        .flat_map(|_| {
            let y0: f32 = rng.random_range(0.0..0.6);
            let x0: f32 = rng.random_range(0.0..0.6);
            [y0, x0, y0 + rng.random_range(0.1..0.4), x0 + rng.random_range(0.1..0.4)]
        })
        .collect()
}

fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
    v.iter().map(Vec::as_slice).collect()
}

/// Rows of a K×… tensor.
fn rows<S: Real>(t: &Tensor<S>) -> Vec<Vec<f64>> {
    let k = t.shape()[0];
    let n = t.numel() / k;
    (0..k).map(|i| t.data()[i * n..(i + 1) * n].iter().map(|v| v.as_f64()).collect()).collect()
}

fn max_row_perm_diff(a: &Tensor<f32>, b: &Tensor<f32>, perm: &[usize]) -> f64 {
    let (ra, rb) = (rows(a), rows(b));
    let mut worst = 0.0f64;
    for (i, &p) in perm.iter().enumerate() {
        for (x, y) in rb[i].iter().zip(&ra[p]) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn permute_boxes(b: &[f32], perm: &[usize]) -> Vec<f32> {
    perm.iter().flat_map(|&p| b[4 * p..4 * p + 4].to_vec()).collect()
}

#[test]
fn alpha_and_attention_normalized_over_slots() {
    let c = tiny(4, Variant::Full);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params::<f32>(&c, seed);
        let video = frames(&mut rng, &c, 2);
        let mut f = Forward::new(&c, &params);
        let outs = f.unroll(&refs(&video), &SlotInit::Boxes(boxes(&mut rng, 4))).unwrap();
        for o in &outs {
            for (name, v) in [("alpha", o.alpha.unwrap()), ("attention", o.attention)] {
                let t = f.g.value(v);
                let n = t.shape()[1];
                for j in 0..n {
                    let s: f64 = (0..4).map(|k| t.data()[k * n + j] as f64).sum();
                    assert!((s - 1.0).abs() <= 1e-6, "seed {seed} {name} column {j} sums to {s}");
                }
            }
        }
    }
}

#[test]
fn unroll_is_slot_permutation_equivariant() {
    let c = tiny(4, Variant::Full);
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let params = init_params::<f32>(&c, seed);
        let video = frames(&mut rng, &c, 3);
        let b = boxes(&mut rng, 4);
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rng);
        let mut f = Forward::new(&c, &params);
        let base = f.unroll(&refs(&video), &SlotInit::Boxes(b.clone())).unwrap();
        let mut fp = Forward::new(&c, &params);
        let permuted = fp.unroll(&refs(&video), &SlotInit::Boxes(permute_boxes(&b, &perm))).unwrap();
        for (o, p) in base.iter().zip(&permuted) {
            for (x, y) in [
                (o.slots, p.slots),
                (o.attention, p.attention),
                (o.alpha.unwrap(), p.alpha.unwrap()),
                (o.boxes, p.boxes),
            ] {
                worst = worst.max(max_row_perm_diff(f.g.value(x), fp.g.value(y), &perm));
            }
            let d = f.g.value(o.prediction.unwrap()).max_abs_diff(fp.g.value(p.prediction.unwrap()));
            worst = worst.max(d as f64);
        }
    }
    assert!(worst < 1e-5, "max deviation {worst}");
}

#[test]
fn components_are_permutation_equivariant() {
    let c = tiny(5, Variant::Full);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + seed);
        let params = init_params::<f32>(&c, seed);
        let slots = Tensor::from_fn(&[5, 8], |_| rng.random_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..5).collect();
        perm.shuffle(&mut rng);
        let permuted = Tensor::from_fn(&[5, 8], |i| slots.data()[perm[i / 8] * 8 + i % 8]);
        let video = frames(&mut rng, &c, 1);

        let run = |s: &Tensor<f32>| {
            let mut f = Forward::new(&c, &params);
            let sv = f.g.constant(s.clone());
            let feats = f.encode_frame(&video[0]).unwrap();
            let (corrected, attn) = f.slot_attention_step(sv, feats).unwrap();
            let next = f.predict_next(sv).unwrap();
            let dec = f.decode(sv).unwrap();
            let bx = f.readout_bboxes(sv).unwrap();
            let vals: Vec<Tensor<f32>> = [corrected, attn, next, dec.alpha, dec.slot_outputs, bx]
                .iter()
                .map(|v| f.g.value(*v).clone())
                .collect();
            (vals, f.g.value(dec.prediction).clone())
        };
        let (a, pa) = run(&slots);
        let (b, pb) = run(&permuted);
        for (name, (x, y)) in ["corrector", "attention", "predictor", "alpha", "slot outputs", "readout"]
            .iter()
            .zip(a.iter().zip(&b))
        {
            let d = max_row_perm_diff(x, y, &perm);
            assert!(d < 1e-5, "seed {seed}: {name} deviates by {d}");
        }
        assert!(pa.max_abs_diff(&pb) < 1e-5);
    }
}

#[test]
fn single_slot_cases() {
    let c = tiny(1, Variant::Full);
    let params = init_params::<f64>(&c, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let slot = Tensor::from_fn(&[1, 8], |_| rng.random_range(-1.0..1.0));
    let mut f = Forward::new(&c, &params);
    let s = f.g.constant(slot);
    let dec = f.decode(s).unwrap();
    assert!(f.g.value(dec.alpha).data().iter().all(|a| *a == 1.0));
    assert_eq!(f.g.value(dec.prediction).data(), f.g.value(dec.slot_outputs).data());

    // with one slot the attention weight is 1, so attention reduces to the
    // value and output projections
    let out = f.predict_next(s).unwrap();
    let h = f.layer_norm(s, "pred.ln1").unwrap();
    let v = f.p("pred.attn.v.w").unwrap();
    let h = f.g.matmul(h, v).unwrap();
    let h = f.linear(h, "pred.attn.o").unwrap();
    let x = f.g.add(s, h).unwrap();
    let h = f.layer_norm(x, "pred.ln2").unwrap();
    let h = f.mlp(h, "pred.mlp").unwrap();
    let manual = f.g.add(x, h).unwrap();
    assert!(f.g.value(out).max_abs_diff(f.g.value(manual)) < 1e-12);
}

#[test]
fn identical_slots_give_identical_outputs() {
    let c = tiny(3, Variant::Full);
    let params = init_params::<f32>(&c, 5);
    let mut f = Forward::new(&c, &params);
    let init = f.init_slots_conditional(&[0.1, 0.2, 0.5, 0.6].repeat(3)).unwrap();
    let r = rows(f.g.value(init));
    assert!(r[0] == r[1] && r[1] == r[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let video = frames(&mut rng, &c, 1);
    let feats = f.encode_frame(&video[0]).unwrap();
    let (s, _) = f.slot_attention_step(init, feats).unwrap();
    let r = rows(f.g.value(s));
    assert!(r[0] == r[1] && r[1] == r[2]);
    let dec = f.decode(s).unwrap();
    let single = &rows(f.g.value(dec.slot_outputs))[0];
    for (p, q) in f.g.value(dec.prediction).data().iter().zip(single) {
        assert!((*p as f64 - q).abs() < 1e-6);
    }
}

#[test]
fn single_frame_unroll_skips_predictor() {
    let c = tiny(2, Variant::Full);
    let params = init_params::<f32>(&c, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let video = frames(&mut rng, &c, 1);
    let mut f = Forward::new(&c, &params);
    let out = f.unroll(&refs(&video), &SlotInit::Boxes(boxes(&mut rng, 2))).unwrap();
    assert_eq!(out.len(), 1);
    assert!(f.bound().all(|(name, _)| !name.starts_with("pred.")));
    assert!(f.bound().any(|(name, _)| name.starts_with("corr.")));

    let video = frames(&mut rng, &c, 4);
    let mut f = Forward::new(&c, &params);
    assert_eq!(f.unroll(&refs(&video), &SlotInit::Boxes(boxes(&mut rng, 2))).unwrap().len(), 4);
}

#[test]
fn wrong_box_count_is_parameter_error() {
    let c = tiny(3, Variant::Full);
    let params = init_params::<f32>(&c, 0);
    let mut f = Forward::new(&c, &params);
    assert!(matches!(
        f.init_slots_conditional(&[0.0; 8]),
        Err(slotvid_core::Error::Parameter(_))
    ));
    assert!(f.init_slots(&SlotInit::Learned).is_err());
}

fn readout_loss<S: Real>(f: &mut Forward<'_, S>, outs: &[FrameOutput]) -> Var {
    let mut total = None;
    for o in outs {
        let h = f.g.huber(o.boxes);
        let m = f.g.mean(h);
        total = Some(match total {
            None => m,
            Some(t) => f.g.add(t, m).unwrap(),
        });
    }
    total.unwrap()
}

#[test]
fn readout_barrier_blocks_trunk_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for variant in [Variant::Full, Variant::Supervised] {
        let c = tiny(3, variant);
        let params = init_params::<f64>(&c, 9);
        let video = frames(&mut rng, &c, 3);
        let mut f = Forward::new(&c, &params);
        let outs = f.unroll(&refs(&video), &SlotInit::Boxes(boxes(&mut rng, 3))).unwrap();
        let loss = readout_loss(&mut f, &outs);
        f.g.backward(loss).unwrap();
        for (name, grad) in f.gradients() {
            let zero = grad.data().iter().all(|v| *v == 0.0);
            if name.starts_with("readout.") {
                assert!(!zero, "{name} got no gradient");
            } else if variant == Variant::Full {
                assert!(zero, "{name} leaked readout gradient");
            } else if name.starts_with("enc.stem") || name.starts_with("init.") {
                assert!(!zero, "{name} should train through the readout");
            }
        }
    }
}

#[test]
fn learned_slots_receive_gradient() {
    let mut c = tiny(2, Variant::Full);
    c.init = InitMode::Learned;
    let params = init_params::<f64>(&c, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let video = frames(&mut rng, &c, 2);
    let mut f = Forward::new(&c, &params);
    let outs = f.unroll(&refs(&video), &SlotInit::Learned).unwrap();
    let loss = f.g.mean(outs[1].prediction.unwrap());
    let a = f.init_slots_learned().unwrap();
    let b = f.init_slots_learned().unwrap();
    assert_eq!(a, b);
    assert_eq!(f.g.shape(a), &[2, 8]);
    f.g.backward(loss).unwrap();
    let grad = f.g.grad_or_zero(a);
    let i = (0..grad.numel())
        .max_by(|x, y| grad.data()[*x].abs().total_cmp(&grad.data()[*y].abs()))
        .unwrap();
    assert!(grad.data()[i] != 0.0);
    let h = 1e-6;
    let eval = |delta: f64| {
        let mut p = params.clone();
        p.get_mut("init.slots").unwrap().data_mut()[i] += delta;
        let mut f = Forward::new(&c, &p);
        let outs = f.unroll(&refs(&video), &SlotInit::Learned).unwrap();
        let l = f.g.mean(outs[1].prediction.unwrap());
        f.g.value(l).item()
    };
    let numeric = (eval(h) - eval(-h)) / (2.0 * h);
    assert!((numeric - grad.data()[i]).abs() <= 1e-6 * grad.data()[i].abs().max(1e-6), "{numeric} vs {}", grad.data()[i]);
}

#[test]
fn encoder_features_shift_with_the_input() {
    let mut c = tiny(2, Variant::Full);
    c.height = 64;
    c.width = 64;
    c.decoder.grid_h = 16;
    c.decoder.grid_w = 16;
    let mut params = init_params::<f64>(&c, 6);
    for name in ["enc.pos.w", "enc.pos.b"] {
        params.get_mut(name).unwrap().data_mut().fill(0.0);
    }
    // a bright disc on black, far from the borders, before and after a
    // shift of one encoder stride to the right
    let disc = |cx: f64| -> Vec<f32> {
        let mut img = vec![0.0f32; 64 * 64 * 3];
        for y in 0..64 {
            for x in 0..64 {
                let (dy, dx) = (y as f64 + 0.5 - 30.0, x as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= 16.0 {
                    let p = (y * 64 + x) * 3;
                    img[p..p + 3].copy_from_slice(&[0.9, 0.4, 0.2]);
                }
            }
        }
        img
    };
    let mut f = Forward::new(&c, &params);
    let a = f.encode_frame(&disc(28.0)).unwrap();
    let b = f.encode_frame(&disc(32.0)).unwrap();
    let (ta, tb) = (f.g.value(a), f.g.value(b));
    let d = 8;
    let mut worst = 0.0f64;
    for i in 0..16 {
        for j in 1..16 {
            for k in 0..d {
                let x = tb.data()[(i * 16 + j) * d + k];
                let y = ta.data()[(i * 16 + j - 1) * d + k];
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst < 1e-9, "shifted features deviate by {worst}");
    assert!(ta.max_abs_diff(tb) > 1e-3, "features ignore the disc");
}

#[test]
fn unroll_is_deterministic() {
    let c = tiny(3, Variant::Full);
    let params = init_params::<f32>(&c, 12);
    assert_eq!(params, init_params::<f32>(&c, 12));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let video = frames(&mut rng, &c, 3);
    let b = boxes(&mut rng, 3);
    let run = || {
        let mut f = Forward::new(&c, &params);
        let outs = f.unroll(&refs(&video), &SlotInit::Boxes(b.clone())).unwrap();
        outs.iter()
            .flat_map(|o| [o.slots, o.alpha.unwrap(), o.prediction.unwrap(), o.boxes])
            .map(|v| f.g.value(v).clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

/// Depth-style reconstruction loss over two frames plus the readout term.
/// Returns the reconstruction part, the total, and the analytic gradients of
/// the total.
#[allow(clippy::type_complexity)]
fn e2e_loss<S: Real>(
    c: &ModelConfig,
    p: &ParamSet<S>,
    video: &[Vec<f32>],
    b: &[f32],
    target: &Tensor<S>,
) -> (f64, f64, Vec<(String, Tensor<S>)>) {
    let mut f = Forward::new(c, p);
    let outs = f.unroll(&refs(video), &SlotInit::Boxes(b.to_vec())).unwrap();
    let valid: Vec<bool> = (0..256).map(|i| i % 7 != 3).collect();
    let mut recon = None;
    for o in &outs {
        let l = f.g.masked_sse(o.prediction.unwrap(), target, &valid).unwrap();
        recon = Some(match recon {
            None => l,
            Some(r) => f.g.add(r, l).unwrap(),
        });
    }
    let recon = recon.unwrap();
    let readout = readout_loss(&mut f, &outs);
    let total = f.g.add(recon, readout).unwrap();
    let values = (f.g.value(recon).item().as_f64(), f.g.value(total).item().as_f64());
    f.g.backward(total).unwrap();
    let grads = f.gradients().into_iter().map(|(n, g)| (n.to_string(), g)).collect();
    (values.0, values.1, grads)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let started = std::time::Instant::now();
    let c = tiny(2, Variant::Full);
    let p64 = init_params::<f64>(&c, 21);
    let p32: ParamSet<f32> = p64.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let video = frames(&mut rng, &c, 2);
    let b = boxes(&mut rng, 2);
    let target = Tensor::from_fn(&[256, 1], |_| rng.random_range(0.5..2.0));
    let (_, _, g64) = e2e_loss(&c, &p64, &video, &b, &target);
    let (_, _, g32) = e2e_loss(&c, &p32, &video, &b, &target.cast());
    assert_eq!(g64.len(), param_shapes(&c).len());

    let global = g64.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.abs())).fold(0.0, f64::max);
    let h = 1e-5;
    let (mut worst64, mut worst32) = (0.0f64, 0.0f64);
    for ((name, a64), (_, a32)) in g64.iter().zip(&g32) {
        // three coordinates per tensor: the largest-gradient one plus two random
        let n = a64.numel();
        let top = (0..n).max_by(|x, y| a64.data()[*x].abs().total_cmp(&a64.data()[*y].abs())).unwrap();
        let picks = [top, rng.random_range(0..n), rng.random_range(0..n)];
        let mut analytic64 = Vec::new();
        let mut analytic32 = Vec::new();
        let mut numeric = Vec::new();
        for &i in &picks {
            let eval = |delta: f64| {
                let mut p = p64.clone();
                p.get_mut(name).unwrap().data_mut()[i] += delta;
                let (recon, total, _) = e2e_loss(&c, &p, &video, &b, &target);
                // the barrier hides the readout loss from everything but the
                // readout head, so the trunk is checked against reconstruction alone
                if name.starts_with("readout.") {
                    total
                } else {
                    recon
                }
            };
            numeric.push((eval(h) - eval(-h)) / (2.0 * h));
            analytic64.push(a64.data()[i]);
            analytic32.push(a32.data()[i] as f64);
        }
        let t = |v: Vec<f64>| Tensor::new(&[3], v).unwrap();
        let (n, a, a32) = (t(numeric), t(analytic64), t(analytic32));
        // coordinates far below the tensor's (or the model's) largest gradient
        // are compared absolutely
        let floor = (a64.data()[top].abs() * 1e-3).max(global * 1e-5);
        let e64 = max_relative_error(&a, &n, floor);
        let e32 = max_relative_error(&a32, &n, floor);
        assert!(e64 < 1e-4, "{name}: fp64 rel err {e64}");
        assert!(e32 < 1e-3, "{name}: fp32 rel err {e32}");

        worst64 = worst64.max(e64);
        worst32 = worst32.max(e32);
    }
    eprintln!("end-to-end gradient check: fp64 {worst64:.2e}, fp32 {worst32:.2e}");
    assert!(started.elapsed().as_secs() < 60);
}
