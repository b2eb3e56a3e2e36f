use std::collections::BTreeMap;

use ndgrad::{Graph, GruParams, Real, Tensor, Var};

use super::config::{InitMode, ModelConfig, Variant};
use super::params::ParamSet;
use crate::{Error, Result};

/// Normalization epsilon for layer and group norms.
pub const NORM_EPS: f64 = 1e-6;
/// Added to the per-slot attention mass before renormalizing over inputs.
pub const ATTN_EPS: f64 = 1e-8;

/// A forward pass under construction: the tape plus lazily bound parameters.
pub struct Forward<'a, S: Real> {
    pub g: Graph<S>,
    pub config: &'a ModelConfig,
    params: &'a ParamSet<S>,
    bound: BTreeMap<&'a str, Var>,
}

/// Everything emitted for one frame of an unroll.
#[derive(Debug, Clone, Copy)]
pub struct FrameOutput {
    /// Slots after the corrector (K×D).
    pub slots: Var,
    /// Corrector attention of the last iteration (K×N), normalized over slots.
    pub attention: Var,
    /// Per-slot alpha masks (K×HW); absent without a decoder.
    pub alpha: Option<Var>,
    /// Composited prediction (HW×C); absent without a decoder.
    pub prediction: Option<Var>,
    /// Box readout (K×4).
    pub boxes: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Decoded {
    pub alpha: Var,
    pub prediction: Var,
    /// Per-slot target channels before compositing (K×HW×C).
    pub slot_outputs: Var,
}

/// How the first frame's slots are produced.
#[derive(Debug, Clone)]
pub enum SlotInit {
    /// K×4 normalized boxes; absent objects are zeros.
    Boxes(Vec<f32>),
    Learned,
}

/// Coordinates of grid cell centers in `[-1, 1]²` as (x, y) rows.
pub fn grid_coords<S: Real>(h: usize, w: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(h * w * 2);
    for i in 0..h {
        for j in 0..w {
            data.push(S::from_f64(-1.0 + (2 * j + 1) as f64 / w as f64));
            data.push(S::from_f64(-1.0 + (2 * i + 1) as f64 / h as f64));
        }
    }
    Tensor::new(&[h * w, 2], data).expect("positive grid")
}

impl<'a, S: Real> Forward<'a, S> {
    pub fn new(config: &'a ModelConfig, params: &'a ParamSet<S>) -> Self {
        Forward {
            g: Graph::new(),
            config,
            params,
            bound: BTreeMap::new(),
        }
    }

    /// The graph handle of parameter `name`, recorded on first use.
    pub fn p(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let (key, t) = self
            .params
            .get_key_value(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))?;
        let v = self.g.param(t.clone());
        self.bound.insert(key.as_str(), v);
        Ok(v)
    }

    /// Parameters touched so far with their graph handles.
    pub fn bound(&self) -> impl Iterator<Item = (&'a str, Var)> + '_ {
        self.bound.iter().map(|(k, v)| (*k, *v))
    }

    /// Gradients of every bound parameter after `backward`.
    pub fn gradients(&self) -> Vec<(&'a str, Tensor<S>)> {
        self.bound.iter().map(|(k, v)| (*k, self.g.grad_or_zero(*v))).collect()
    }

    fn s(v: f64) -> S {
        S::from_f64(v)
    }

    pub fn linear(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let w = self.p(&format!("{prefix}.w"))?;
        let b = self.p(&format!("{prefix}.b"))?;
        let y = self.g.matmul(x, w)?;
        Ok(self.g.add_bias(y, b)?)
    }

    pub fn mlp(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let h = self.linear(x, &format!("{prefix}.fc1"))?;
        let h = self.g.relu(h);
        self.linear(h, &format!("{prefix}.fc2"))
    }

    pub fn layer_norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gain = self.p(&format!("{prefix}.g"))?;
        let bias = self.p(&format!("{prefix}.b"))?;
        Ok(self.g.layer_norm(x, gain, bias, Self::s(NORM_EPS))?)
    }

    fn group_norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gain = self.p(&format!("{prefix}.g"))?;
        let bias = self.p(&format!("{prefix}.b"))?;
        Ok(self.g.group_norm(x, self.config.encoder.groups, gain, bias, Self::s(NORM_EPS))?)
    }

    /// Multi-head scaled dot-product self-attention over the rows of `x`.
    pub fn self_attention(&mut self, x: Var, prefix: &str, heads: usize) -> Result<Var> {
        let q = self.p(&format!("{prefix}.q.w"))?;
        let k = self.p(&format!("{prefix}.k.w"))?;
        let v = self.p(&format!("{prefix}.v.w"))?;
        let width = self.g.shape(q)[1];
        let hd = width / heads;
        let q = self.g.matmul(x, q)?;
        let k = self.g.matmul(x, k)?;
        let v = self.g.matmul(x, v)?;
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.g.narrow(q, 1, h * hd, hd)?,
                    self.g.narrow(k, 1, h * hd, hd)?,
                    self.g.narrow(v, 1, h * hd, hd)?,
                )
            };
            let kt = self.g.transpose(kh)?;
            let logits = self.g.matmul(qh, kt)?;
            let logits = self.g.scale(logits, Self::s(1.0 / (hd as f64).sqrt()));
            let attn = self.g.softmax_axis(logits, 1)?;
            outs.push(self.g.matmul(attn, vh)?);
        }
        let joined = if heads == 1 { outs[0] } else { self.g.concat(&outs, 1)? };
        self.linear(joined, &format!("{prefix}.o"))
    }

    /// Pre-norm transformer block: attention and MLP, each residual.
    pub fn transformer_block(&mut self, x: Var, prefix: &str, heads: usize) -> Result<Var> {
        let h = self.layer_norm(x, &format!("{prefix}.ln1"))?;
        let h = self.self_attention(h, &format!("{prefix}.attn"), heads)?;
        let x = self.g.add(x, h)?;
        let h = self.layer_norm(x, &format!("{prefix}.ln2"))?;
        let h = self.mlp(h, &format!("{prefix}.mlp"))?;
        Ok(self.g.add(x, h)?)
    }

    /// Shared per-box MLP mapping K×4 boxes to K×D slots.
    pub fn init_slots_conditional(&mut self, boxes: &[f32]) -> Result<Var> {
        let k = self.config.slots;
        if boxes.len() != 4 * k {
            return Err(Error::param(format!(
                "conditioning needs {k}×4 box values, got {}",
                boxes.len()
            )));
        }
        let b = Tensor::new(&[k, 4], boxes.iter().map(|v| S::from_f64(*v as f64)).collect())?;
        let b = self.g.constant(b);
        self.mlp(b, "init")
    }

    pub fn init_slots_learned(&mut self) -> Result<Var> {
        self.p("init.slots")
    }

    pub fn init_slots(&mut self, init: &SlotInit) -> Result<Var> {
        match (init, self.config.init) {
            (SlotInit::Boxes(b), InitMode::Conditional) => self.init_slots_conditional(b),
            (SlotInit::Learned, InitMode::Learned) => self.init_slots_learned(),
            _ => Err(Error::param("slot initialization does not match the model's init mode")),
        }
    }

    /// Residual CNN trunk: `gh × gw × channels` features before positional
    /// embedding.
    pub fn encoder_cnn(&mut self, rgb: &[f32]) -> Result<Var> {
        let c = self.config;
        if !c.height.is_multiple_of(c.encoder.stride) || !c.width.is_multiple_of(c.encoder.stride) {
            return Err(Error::param("resolution not divisible by the encoder stride"));
        }
        let x = Tensor::new(&[c.height, c.width, 3], rgb.iter().map(|v| S::from_f64(*v as f64)).collect())
            .map_err(|_| Error::Contract(format!("frame must hold {}×{}×3 values", c.height, c.width)))?;
        let x = self.g.constant(x);
        let w = self.p("enc.stem.w")?;
        let x = self.g.conv2d(x, w, 1, 1)?;
        let x = self.group_norm(x, "enc.stem.gn")?;
        let mut x = self.g.relu(x);
        let downs = c.encoder.stride.trailing_zeros() as usize;
        for b in 0..c.encoder.blocks {
            let stride = if b < downs { 2 } else { 1 };
            let w1 = self.p(&format!("enc.block{b}.conv1.w"))?;
            let h = self.g.conv2d(x, w1, stride, 1)?;
            let h = self.group_norm(h, &format!("enc.block{b}.gn1"))?;
            let h = self.g.relu(h);
            let w2 = self.p(&format!("enc.block{b}.conv2.w"))?;
            let h = self.g.conv2d(h, w2, 1, 1)?;
            let h = self.group_norm(h, &format!("enc.block{b}.gn2"))?;
            let skip = if stride == 2 {
                let wp = self.p(&format!("enc.block{b}.proj.w"))?;
                self.g.conv2d(x, wp, 2, 0)?
            } else {
                x
            };
            let sum = self.g.add(h, skip)?;
            x = self.g.relu(sum);
        }
        Ok(x)
    }

    /// CNN features plus a linear positional embedding, lifted to width D and
    /// refined by the encoder transformer: N×D.
    pub fn encode_frame(&mut self, rgb: &[f32]) -> Result<Var> {
        let (gh, gw) = self.config.grid();
        let ch = self.config.encoder.channels;
        let x = self.encoder_cnn(rgb)?;
        let x = self.g.reshape(x, &[gh * gw, ch])?;
        let coords = self.g.constant(grid_coords(gh, gw));
        let pos = self.linear(coords, "enc.pos")?;
        let x = self.g.add(x, pos)?;
        let x = self.linear(x, "enc.mlp")?;
        let mut x = self.g.relu(x);
        for l in 0..self.config.encoder.transformer_layers {
            x = self.transformer_block(x, &format!("enc.tf{l}"), self.config.encoder.heads)?;
        }
        Ok(x)
    }

    /// Slot Attention: attention normalized over slots, weighted means over
    /// inputs, then a gated recurrent update and a residual MLP. Returns the
    /// new slots and the last iteration's attention.
    pub fn slot_attention_step(&mut self, slots: Var, features: Var) -> Result<(Var, Var)> {
        let cc = &self.config.corrector;
        let (iterations, qkv) = (cc.iterations, cc.qkv);
        if iterations == 0 {
            return Err(Error::param("corrector needs at least one iteration"));
        }
        let f = self.layer_norm(features, "corr.ln_in")?;
        let wk = self.p("corr.k.w")?;
        let wv = self.p("corr.v.w")?;
        let k = self.g.matmul(f, wk)?;
        let kt = self.g.transpose(k)?;
        let v = self.g.matmul(f, wv)?;
        let gru = GruParams {
            w_input: self.p("corr.gru.wi")?,
            w_hidden: self.p("corr.gru.wh")?,
            b_input: self.p("corr.gru.bi")?,
            b_hidden: self.p("corr.gru.bh")?,
        };
        let mut slots = slots;
        let mut attn = None;
        for _ in 0..iterations {
            let s = self.layer_norm(slots, "corr.ln_slots")?;
            let wq = self.p("corr.q.w")?;
            let q = self.g.matmul(s, wq)?;
            let logits = self.g.matmul(q, kt)?;
            let logits = self.g.scale(logits, Self::s(1.0 / (qkv as f64).sqrt()));
            let a = self.g.softmax_axis(logits, 0)?;
            attn = Some(a);
            let weights = self.g.renormalize(a, 1, Self::s(ATTN_EPS))?;
            let updates = self.g.matmul(weights, v)?;
            slots = self.g.gru_cell(slots, updates, &gru)?;
            let h = self.layer_norm(slots, "corr.ln_mlp")?;
            let h = self.mlp(h, "corr.mlp")?;
            slots = self.g.add(slots, h)?;
        }
        Ok((slots, attn.expect("at least one iteration")))
    }

    /// One transformer block over the slots.
    pub fn predict_next(&mut self, slots: Var) -> Result<Var> {
        self.transformer_block(slots, "pred", self.config.predictor.heads)
    }

    /// Spatial broadcast decoder with alpha compositing across slots.
    pub fn decode(&mut self, slots: Var) -> Result<Decoded> {
        let c = self.config;
        if c.variant != Variant::Full {
            return Err(Error::Contract("this model has no decoder".into()));
        }
        let dc = &c.decoder;
        let (k, d, ch) = (c.slots, c.slot_dim, c.target_channels);
        let (gh, gw) = (dc.grid_h, dc.grid_w);
        let x = self.g.broadcast(slots, 1, gh)?;
        let x = self.g.broadcast(x, 2, gw)?;
        let coords = self.g.constant(grid_coords(gh, gw));
        let pos = self.linear(coords, "dec.pos")?;
        let pos = self.g.reshape(pos, &[gh, gw, d])?;
        let mut x = self.g.add_bias(x, pos)?;
        let (mut h, mut w) = (gh, gw);
        let offset = (dc.kernel - 2) / 2;
        for s in 0..dc.stages {
            let kern = self.p(&format!("dec.up{s}.w"))?;
            let y = self.g.conv_transpose2d(x, kern, 2)?;
            let y = self.g.narrow(y, 1, offset, 2 * h)?;
            let y = self.g.narrow(y, 2, offset, 2 * w)?;
            let b = self.p(&format!("dec.up{s}.b"))?;
            let y = self.g.add_bias(y, b)?;
            x = self.g.relu(y);
            h *= 2;
            w *= 2;
        }
        let last = *self.g.shape(x).last().unwrap();
        let flat = self.g.reshape(x, &[k * h * w, last])?;
        let out = self.linear(flat, "dec.out")?;
        let out = self.g.reshape(out, &[k, h * w, ch + 1])?;
        let slot_outputs = self.g.narrow(out, 2, 0, ch)?;
        let logits = self.g.narrow(out, 2, ch, 1)?;
        let logits = self.g.reshape(logits, &[k, h * w])?;
        let alpha = self.g.softmax_axis(logits, 0)?;
        let weighted = self.g.scale_rows(slot_outputs, alpha)?;
        let prediction = self.g.sum_axis(weighted, 0)?;
        Ok(Decoded {
            alpha,
            prediction,
            slot_outputs,
        })
    }

    /// Per-slot box MLP; behind a gradient barrier in the full model.
    pub fn readout_bboxes(&mut self, slots: Var) -> Result<Var> {
        let x = if self.config.readout_barrier() {
            self.g.stop_gradient(slots)
        } else {
            slots
        };
        self.mlp(x, "readout")
    }

    /// Runs initializer, then per frame: encode, correct, decode, read out,
    /// and (between frames) predict. `frames` hold H×W×3 values each.
    pub fn unroll(&mut self, frames: &[&[f32]], init: &SlotInit) -> Result<Vec<FrameOutput>> {
        if self.config.variant == Variant::Propagation {
            return Err(Error::Contract("the propagation model does not read frames".into()));
        }
        let mut slots = self.init_slots(init)?;
        let mut out = Vec::with_capacity(frames.len());
        for (t, rgb) in frames.iter().enumerate() {
            let feats = self.encode_frame(rgb)?;
            let (s, attention) = self.slot_attention_step(slots, feats)?;
            let (alpha, prediction) = if self.config.variant == Variant::Full {
                let d = self.decode(s)?;
                (Some(d.alpha), Some(d.prediction))
            } else {
                (None, None)
            };
            let boxes = self.readout_bboxes(s)?;
            out.push(FrameOutput {
                slots: s,
                attention,
                alpha,
                prediction,
                boxes,
            });
            slots = if t + 1 < frames.len() { self.predict_next(s)? } else { s };
        }
        Ok(out)
    }

    /// Box tracks from the initializer and predictor alone: K×4 per frame.
    pub fn propagate(&mut self, boxes: &[f32], frames: usize) -> Result<Vec<Var>> {
        let mut slots = self.init_slots_conditional(boxes)?;
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            out.push(self.readout_bboxes(slots)?);
            if t + 1 < frames {
                slots = self.predict_next(slots)?;
            }
        }
        Ok(out)
    }
}

/// Argmax over slots per pixel of a K×P alpha tensor; ties go to the lower
/// slot index.
pub fn hard_masks<S: Real>(alpha: &Tensor<S>) -> Vec<usize> {
    let (k, p) = (alpha.shape()[0], alpha.shape()[1]);
    let a = alpha.data();
    (0..p)
        .map(|j| {
            let mut best = 0;
            for s in 1..k {
                if a[s * p + j] > a[best * p + j] {
                    best = s;
                }
            }
            best
        })
        .collect()
}
