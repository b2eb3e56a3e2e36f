//! Losses, learning-rate schedule, gradient clipping, Adam, and the training
//! loop shared by the full model, the supervised box-head variant and the
//! box propagation baseline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndgrad::{Graph, Real, Tensor, Var};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_sample, sample_crop, CropParams, ASPECT_RANGE};
use crate::checkpoint::Checkpoint;
use crate::model::{init_params, Forward, InitMode, ModelConfig, ParamSet, SlotInit, Variant};
use crate::rng::{derive, seeded};
use crate::scenegen::{add_depth_noise, NoiseSpec, VideoSample};
use crate::targets::{assemble_targets, DepthSource, TargetBundle, TargetSelection};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const LOG_HEADER: &str = "step,lr,loss_target,loss_readout,grad_norm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Frames per training sub-sequence.
    pub subseq_len: usize,
    pub targets: TargetSelection,
    pub depth_source: DepthSource,
    pub seed: u64,
    /// Steps between checkpoints; 0 keeps only the initial and final ones.
    pub checkpoint_every: usize,
    pub augment: bool,
    /// Smallest crop area as a fraction of the frame.
    pub min_cover: f64,
    /// Gaussian noise added to sparse depth samples, in world units.
    pub noise_sigma: f64,
    pub readout_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 2000,
            warmup_steps: 100,
            peak_lr: 2e-4,
            batch_size: 4,
            clip_norm: 0.05,
            subseq_len: 6,
            targets: TargetSelection::DEPTH,
            depth_source: DepthSource::Dense,
            seed: 0,
            checkpoint_every: 500,
            augment: true,
            min_cover: 0.2,
            noise_sigma: 0.0,
            readout_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps > 0 && self.warmup_steps >= self.total_steps {
            return Err(Error::param(format!(
                "warmup ({}) must be shorter than training ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::param("clip_norm must be positive"));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::param("peak_lr must be finite and non-negative"));
        }
        if self.batch_size == 0 || self.subseq_len == 0 {
            return Err(Error::param("batch_size and subseq_len must be positive"));
        }
        if !(self.min_cover > 0.0 && self.min_cover <= 1.0) {
            return Err(Error::param("min_cover must lie in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma must be finite and non-negative"));
        }
        if self.noise_sigma > 0.0 && !(self.targets.depth && self.depth_source == DepthSource::Sparse) {
            return Err(Error::param("depth noise applies to sparse depth targets only"));
        }
        if !(self.readout_weight >= 0.0 && self.readout_weight.is_finite()) {
            return Err(Error::param("readout_weight must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            warmup: self.warmup_steps,
            total: self.total_steps,
            peak: self.peak_lr,
        }
    }
}

/// Linear warmup from 0 to `peak`, then cosine decay to 0 at `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub warmup: usize,
    pub total: usize,
    pub peak: f64,
}

impl Schedule {
    pub fn lr(&self, step: usize) -> f64 {
        let step = step.min(self.total);
        if step < self.warmup {
            return self.peak * step as f64 / self.warmup as f64;
        }
        if self.total <= self.warmup {
            return self.peak;
        }
        let progress = (step - self.warmup) as f64 / (self.total - self.warmup) as f64;
        self.peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Per-element Huber penalty: quadratic on `[-1, 1]`, linear outside.
pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Mean Huber penalty of `pred - target`.
pub fn huber_loss<S: Real>(g: &mut Graph<S>, pred: Var, target: &[f32]) -> Result<Var> {
    let t = Tensor::new(g.shape(pred), target.iter().map(|v| S::from_f64(*v as f64)).collect())
        .map_err(|_| Error::Contract(format!("box target has {} values for {:?}", target.len(), g.shape(pred))))?;
    let t = g.constant(t);
    let d = g.sub(pred, t)?;
    let h = g.huber(d);
    Ok(g.mean(h))
}

/// Mean squared error over valid (pixel, channel) pairs. Each frame with at
/// least one valid pixel contributes its own mean; frames are averaged with
/// equal weight and frames without valid pixels are skipped. `None` when no
/// frame has a valid pixel. `preds[t]` is `H·W × C`.
pub fn masked_l2_loss<S: Real>(g: &mut Graph<S>, preds: &[Var], target: &TargetBundle) -> Result<Option<Var>> {
    if preds.len() != target.frames {
        return Err(Error::Contract(format!(
            "{} predicted frames for {} target frames",
            preds.len(),
            target.frames
        )));
    }
    let p = target.height * target.width;
    let mut terms = Vec::new();
    for (t, &pred) in preds.iter().enumerate() {
        if g.shape(pred) != [p, target.channels] {
            return Err(Error::Contract(format!(
                "prediction shape {:?} != target {:?}",
                g.shape(pred),
                [p, target.channels]
            )));
        }
        let valid = target.frame_valid(t);
        let count = valid.iter().filter(|v| **v).count();
        if count == 0 {
            continue;
        }
        let values = Tensor::new(
            &[p, target.channels],
            target.frame_values(t).iter().map(|v| S::from_f64(*v as f64)).collect(),
        )?;
        let per_value: Vec<bool> = valid.iter().flat_map(|v| std::iter::repeat_n(*v, target.channels)).collect();
        let sse = g.masked_sse(pred, &values, &per_value)?;
        terms.push(g.scale(sse, S::from_f64(1.0 / (count * target.channels) as f64)));
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let n = terms.len();
    let mut total = terms[0];
    for t in &terms[1..] {
        total = g.add(total, *t)?;
    }
    Ok(Some(g.scale(total, S::from_f64(1.0 / n as f64))))
}

/// Scales every gradient by `max_norm / norm` when the joint L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Adam moments, parallel to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: ParamSet<f32>,
    pub v: ParamSet<f32>,
    /// Completed updates.
    pub step: u64,
}

impl OptState {
    pub fn new(params: &ParamSet<f32>) -> Self {
        OptState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn write_records(&self, ck: &mut Checkpoint) {
        for (prefix, set) in [("opt.m.", &self.m), ("opt.v.", &self.v)] {
            for (name, t) in set.iter() {
                ck.records.insert(format!("{prefix}{name}"), t.clone());
            }
        }
        // exact as fp32 below 2^24 steps
        ck.records.insert("opt.step".into(), Tensor::new(&[1], vec![self.step as f32]).unwrap());
    }

    pub fn from_records(ck: &Checkpoint, params: &ParamSet<f32>) -> Result<Self> {
        let mut st = OptState::new(params);
        for (prefix, set) in [("opt.m.", &mut st.m), ("opt.v.", &mut st.v)] {
            for (name, t) in set.iter_mut() {
                let r = ck
                    .records
                    .get(&format!("{prefix}{name}"))
                    .ok_or_else(|| Error::format("checkpoint", format!("missing optimizer record {prefix}{name}")))?;
                if r.shape() != t.shape() {
                    return Err(Error::format("checkpoint", format!("optimizer record {prefix}{name} has the wrong shape")));
                }
                *t = r.clone();
            }
        }
        let step = ck
            .records
            .get("opt.step")
            .ok_or_else(|| Error::format("checkpoint", "missing opt.step"))?
            .data()[0];
        if !(step >= 0.0 && step.fract() == 0.0) {
            return Err(Error::format("checkpoint", format!("bad opt.step {step}")));
        }
        st.step = step as u64;
        Ok(st)
    }
}

/// One bias-corrected Adam update. `grads` are in parameter name order.
pub fn adam_step(params: &mut ParamSet<f32>, grads: &[Vec<f64>], opt: &mut OptState, lr: f64) {
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let moments = opt.m.iter_mut().zip(opt.v.iter_mut());
    for (((_, p), g), ((_, m), (_, v))) in params.iter_mut().zip(grads).zip(moments) {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let mi = ADAM_BETA1 * m[i] as f64 + (1.0 - ADAM_BETA1) * g[i];
            let vi = ADAM_BETA2 * v[i] as f64 + (1.0 - ADAM_BETA2) * g[i] * g[i];
            m[i] = mi as f32;
            v[i] = vi as f32;
            p[i] = (p[i] as f64 - lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS)) as f32;
        }
    }
}

/// One prepared training clip.
#[derive(Debug, Clone)]
pub struct Element {
    pub sample: VideoSample,
    pub targets: Option<TargetBundle>,
    /// K×4 conditioning boxes from the first frame.
    pub init_boxes: Vec<f32>,
    /// T×K×4 readout targets; objects absent from the first frame are zeros.
    pub box_targets: Vec<f32>,
}

impl Element {
    fn has_target_signal(&self) -> bool {
        self.targets.as_ref().is_some_and(|t| t.valid.iter().any(|v| *v))
    }
}

/// Slot-ordered boxes: object `k + 1` drives slot `k`; extra slots are zeros.
pub fn slot_boxes(sample: &VideoSample, slots: usize) -> Result<(Vec<f32>, Vec<f32>)> {
    if sample.max_objects > slots {
        return Err(Error::param(format!(
            "{} slots cannot hold {} objects",
            slots, sample.max_objects
        )));
    }
    let k = sample.max_objects;
    let mut init = vec![0.0f32; slots * 4];
    init[..4 * k].copy_from_slice(sample.box_frame(0));
    let present: Vec<bool> = init.chunks(4).map(|b| b.iter().any(|v| *v != 0.0)).collect();
    let mut tracks = vec![0.0f32; sample.frames * slots * 4];
    for t in 0..sample.frames {
        let b = sample.box_frame(t);
        for j in 0..k {
            if present[j] {
                let dst = (t * slots + j) * 4;
                tracks[dst..dst + 4].copy_from_slice(&b[4 * j..4 * j + 4]);
            }
        }
    }
    Ok((init, tracks))
}

/// What one element of a step is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Draw {
    video: usize,
    start: usize,
    crop: CropParams,
    noise_seed: u64,
}

pub struct Trainer<'a> {
    pub model: &'a ModelConfig,
    pub config: &'a TrainConfig,
    pub data: &'a [VideoSample],
    pub flow_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub loss_target: f64,
    pub loss_readout: f64,
    pub grad_norm: f64,
}

impl LogRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e}",
            self.step, self.lr, self.loss_target, self.loss_readout, self.grad_norm
        )
    }
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet<f32>,
    pub opt: OptState,
    pub log: Vec<LogRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Per-element losses and gradients (in parameter name order).
struct ElementResult {
    target: Option<f64>,
    readout: f64,
    grads: Vec<Tensor<f32>>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a ModelConfig, config: &'a TrainConfig, data: &'a [VideoSample], flow_max: f64) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if data.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let first = &data[0];
        for s in data {
            if s.height != model.height || s.width != model.width {
                return Err(Error::param(format!(
                    "videos are {}×{} but the model expects {}×{}",
                    s.height, s.width, model.height, model.width
                )));
            }
            if s.frames < config.subseq_len {
                return Err(Error::param(format!(
                    "videos have {} frames, fewer than the {}-frame sub-sequence",
                    s.frames, config.subseq_len
                )));
            }
            if s.max_objects != first.max_objects {
                return Err(Error::Data("videos disagree on max_objects".into()));
            }
        }
        if model.slots < first.max_objects {
            return Err(Error::param(format!(
                "{} slots cannot hold {} objects",
                model.slots, first.max_objects
            )));
        }
        match model.variant {
            Variant::Full => {
                if model.target_channels != config.targets.channels() {
                    return Err(Error::param(format!(
                        "model predicts {} channels but targets '{}' have {}",
                        model.target_channels,
                        config.targets,
                        config.targets.channels()
                    )));
                }
            }
            Variant::Supervised | Variant::Propagation => {
                if model.init != InitMode::Conditional {
                    return Err(Error::param("box-supervised models need conditional initialization"));
                }
            }
        }
        Ok(Trainer {
            model,
            config,
            data,
            flow_max,
        })
    }

    fn draws(&self, step: usize) -> Vec<Draw> {
        let c = self.config;
        let mut rng = seeded(derive(c.seed, 7), step as u64);
        (0..c.batch_size)
            .map(|_| {
                let video = rng.random_range(0..self.data.len());
                let start = rng.random_range(0..=self.data[video].frames - c.subseq_len);
                let crop = if c.augment {
                    sample_crop(&mut rng, self.model.height, self.model.width, c.min_cover, ASPECT_RANGE)
                } else {
                    CropParams::identity(self.model.height, self.model.width)
                };
                Draw {
                    video,
                    start,
                    crop,
                    noise_seed: rng.random(),
                }
            })
            .collect()
    }

    fn prepare(&self, d: &Draw) -> Result<Element> {
        let c = self.config;
        let clip = self.data[d.video].clip(d.start, c.subseq_len)?;
        let mut sample = augment_sample(&clip, &d.crop);
        if c.noise_sigma > 0.0 {
            sample.sparse = add_depth_noise(
                &sample.sparse,
                &NoiseSpec {
                    sigma: c.noise_sigma,
                    seed: d.noise_seed,
                },
            )?;
        }
        let targets = if self.model.variant == Variant::Full {
            Some(assemble_targets(c.targets, c.depth_source, &sample, self.flow_max)?)
        } else {
            None
        };
        let (init_boxes, box_targets) = slot_boxes(&sample, self.model.slots)?;
        Ok(Element {
            sample,
            targets,
            init_boxes,
            box_targets,
        })
    }

    /// The elements of step `step`, in batch order.
    pub fn batch(&self, step: usize) -> Result<Vec<Element>> {
        self.draws(step).par_iter().map(|d| self.prepare(d)).collect()
    }

    /// Builds the element's objective scaled by its share of the batch loss
    /// and backpropagates it.
    fn run_element(&self, params: &ParamSet<f32>, e: &Element, target_weight: f64, readout_weight: f64) -> Result<ElementResult> {
        let m = self.model;
        let k = m.slots;
        let mut f = Forward::new(m, params);
        let (target, boxes) = match m.variant {
            Variant::Propagation => (None, f.propagate(&e.init_boxes, e.sample.frames)?),
            Variant::Full | Variant::Supervised => {
                let frames: Vec<&[f32]> = (0..e.sample.frames).map(|t| e.sample.rgb_frame(t)).collect();
                let init = match m.init {
                    InitMode::Conditional => SlotInit::Boxes(e.init_boxes.clone()),
                    InitMode::Learned => SlotInit::Learned,
                };
                let outs = f.unroll(&frames, &init)?;
                let target = match &e.targets {
                    Some(t) => {
                        let preds: Vec<Var> = outs.iter().map(|o| o.prediction.expect("full model decodes")).collect();
                        masked_l2_loss(&mut f.g, &preds, t)?
                    }
                    None => None,
                };
                (target, outs.iter().map(|o| o.boxes).collect())
            }
        };
        // slot order carries object identity only under conditioning
        let readout = if m.init == InitMode::Conditional {
            let mut terms = Vec::with_capacity(boxes.len());
            for (t, b) in boxes.iter().enumerate() {
                terms.push(huber_loss(&mut f.g, *b, &e.box_targets[t * k * 4..(t + 1) * k * 4])?);
            }
            let mut sum = terms[0];
            for t in &terms[1..] {
                sum = f.g.add(sum, *t)?;
            }
            Some(f.g.scale(sum, 1.0 / terms.len() as f32))
        } else {
            None
        };
        let target_value = target.map(|v| f.g.value(v).item() as f64);
        let readout_value = readout.map_or(0.0, |v| f.g.value(v).item() as f64);
        let objective = match (target, readout) {
            (Some(t), Some(r)) => {
                let t = f.g.scale(t, target_weight as f32);
                let r = f.g.scale(r, readout_weight as f32);
                Some(f.g.add(t, r)?)
            }
            (Some(t), None) => Some(f.g.scale(t, target_weight as f32)),
            (None, Some(r)) => Some(f.g.scale(r, readout_weight as f32)),
            (None, None) => None,
        };
        let mut grads_by_name = std::collections::BTreeMap::new();
        if let Some(obj) = objective {
            f.g.backward(obj)?;
            for (name, g) in f.gradients() {
                grads_by_name.insert(name, g);
            }
        }
        let grads = params
            .iter()
            .map(|(name, p)| grads_by_name.remove(name.as_str()).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        Ok(ElementResult {
            target: target_value,
            readout: readout_value,
            grads,
        })
    }

    /// Batch losses and summed gradients at `params` for step `step`.
    fn step_gradients(&self, params: &ParamSet<f32>, step: usize) -> Result<(f64, f64, Vec<Vec<f64>>)> {
        let batch = self.batch(step)?;
        let with_signal = batch.iter().filter(|e| e.has_target_signal()).count();
        let target_weight = if with_signal > 0 { 1.0 / with_signal as f64 } else { 0.0 };
        let readout_scale = match self.model.variant {
            Variant::Full => self.config.readout_weight,
            Variant::Supervised | Variant::Propagation => 1.0,
        };
        let readout_weight = readout_scale / batch.len() as f64;
        let results: Vec<ElementResult> = batch
            .par_iter()
            .map(|e| self.run_element(params, e, target_weight, readout_weight))
            .collect::<Result<_>>()?;
        let mut grads: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        let (mut target, mut readout) = (0.0, 0.0);
        for r in &results {
            if let Some(t) = r.target {
                target += t * target_weight;
            }
            readout += r.readout / batch.len() as f64;
            for (acc, g) in grads.iter_mut().zip(&r.grads) {
                for (a, v) in acc.iter_mut().zip(g.data()) {
                    *a += *v as f64;
                }
            }
        }
        Ok((target, readout, grads))
    }

    fn save(&self, dir: &Path, params: &ParamSet<f32>, opt: &OptState) -> Result<PathBuf> {
        let mut ck = Checkpoint::from_params(self.model, params);
        opt.write_records(&mut ck);
        let path = dir.join(format!("step_{:06}.svck", opt.step));
        ck.save(&path)?;
        Ok(path)
    }

    /// Trains from fresh parameters, or from `resume`. With `out`, writes
    /// `checkpoints/step_NNNNNN.svck` and `loss_log.csv` there.
    pub fn run(&self, out: Option<&Path>, resume: Option<&Checkpoint>) -> Result<TrainOutcome> {
        let (mut params, mut opt) = match resume {
            Some(ck) => {
                let p = ck.params(self.model)?;
                let o = OptState::from_records(ck, &p)?;
                (p, o)
            }
            None => {
                let p = init_params::<f32>(self.model, derive(self.config.seed, 5));
                let o = OptState::new(&p);
                (p, o)
            }
        };
        let ck_dir = match out {
            Some(dir) => {
                let d = dir.join("checkpoints");
                std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
                Some(d)
            }
            None => None,
        };
        let mut checkpoints = Vec::new();
        if let Some(d) = &ck_dir {
            if resume.is_none() {
                checkpoints.push(self.save(d, &params, &opt)?);
            }
        }
        let schedule = self.config.schedule();
        let mut log = Vec::new();
        let start = opt.step as usize;
        for step in start..self.config.total_steps {
            let (target, readout, mut grads) = self.step_gradients(&params, step)?;
            let loss = target + readout;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { step, loss });
            }
            let grad_norm = clip_global_norm(&mut grads, self.config.clip_norm);
            let lr = schedule.lr(step);
            adam_step(&mut params, &grads, &mut opt, lr);
            log.push(LogRow {
                step,
                lr,
                loss_target: target,
                loss_readout: readout,
                grad_norm,
            });
            if let Some(d) = &ck_dir {
                let done = step + 1;
                let periodic = self.config.checkpoint_every > 0 && done % self.config.checkpoint_every == 0;
                if periodic || done == self.config.total_steps {
                    checkpoints.push(self.save(d, &params, &opt)?);
                }
            }
        }
        if let Some(dir) = out {
            let path = dir.join("loss_log.csv");
            std::fs::write(&path, log_csv(&log)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(TrainOutcome {
            params,
            opt,
            log,
            checkpoints,
        })
    }
}
