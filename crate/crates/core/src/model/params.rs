use std::collections::BTreeMap;

use ndgrad::{Real, Tensor};
use rand::Rng;

use super::config::{InitMode, ModelConfig, Variant};
use crate::rng::seeded;

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<S: Real> {
    map: BTreeMap<String, Tensor<S>>,
}

impl<S: Real> Default for ParamSet<S> {
    fn default() -> Self {
        ParamSet { map: BTreeMap::new() }
    }
}

impl<S: Real> ParamSet<S> {
    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.map.get(name)
    }

    pub fn get_key_value(&self, name: &str) -> Option<(&String, &Tensor<S>)> {
        self.map.get_key_value(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.map.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<S>) {
        self.map.insert(name.into(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<S>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    pub fn cast<T: Real>(&self) -> ParamSet<T> {
        ParamSet {
            map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> ParamSet<S> {
        ParamSet {
            map: self.map.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect(),
        }
    }
}

/// Names and shapes of every parameter the configuration creates.
pub fn param_shapes(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let mut add = |name: String, shape: Vec<usize>| out.push((name, shape));
    let d = c.slot_dim;

    let linear = |add: &mut dyn FnMut(String, Vec<usize>), p: &str, i: usize, o: usize| {
        add(format!("{p}.w"), vec![i, o]);
        add(format!("{p}.b"), vec![o]);
    };
    let norm = |add: &mut dyn FnMut(String, Vec<usize>), p: &str, n: usize| {
        add(format!("{p}.g"), vec![n]);
        add(format!("{p}.b"), vec![n]);
    };
    let block = |add: &mut dyn FnMut(String, Vec<usize>), p: &str, heads: usize, hd: usize, hidden: usize| {
        let q = heads * hd;
        norm(add, &format!("{p}.ln1"), d);
        for m in ["q", "k", "v"] {
            add(format!("{p}.attn.{m}.w"), vec![d, q]);
        }
        linear(add, &format!("{p}.attn.o"), q, d);
        norm(add, &format!("{p}.ln2"), d);
        linear(add, &format!("{p}.mlp.fc1"), d, hidden);
        linear(add, &format!("{p}.mlp.fc2"), hidden, d);
    };

    match c.init {
        InitMode::Conditional => {
            linear(&mut add, "init.fc1", 4, c.init_hidden);
            linear(&mut add, "init.fc2", c.init_hidden, d);
        }
        InitMode::Learned => add("init.slots".into(), vec![c.slots, d]),
    }
    let p = &c.predictor;
    block(&mut add, "pred", p.heads, p.qkv / p.heads, p.mlp_hidden);
    linear(&mut add, "readout.fc1", d, c.readout_hidden);
    linear(&mut add, "readout.fc2", c.readout_hidden, 4);
    if c.variant == Variant::Propagation {
        return out;
    }

    let e = &c.encoder;
    let ch = e.channels;
    add("enc.stem.w".into(), vec![3, 3, 3, ch]);
    norm(&mut add, "enc.stem.gn", ch);
    let downs = e.stride.trailing_zeros() as usize;
    for b in 0..e.blocks {
        add(format!("enc.block{b}.conv1.w"), vec![3, 3, ch, ch]);
        norm(&mut add, &format!("enc.block{b}.gn1"), ch);
        add(format!("enc.block{b}.conv2.w"), vec![3, 3, ch, ch]);
        norm(&mut add, &format!("enc.block{b}.gn2"), ch);
        if b < downs {
            add(format!("enc.block{b}.proj.w"), vec![1, 1, ch, ch]);
        }
    }
    linear(&mut add, "enc.pos", 2, ch);
    linear(&mut add, "enc.mlp", ch, d);
    for l in 0..e.transformer_layers {
        block(&mut add, &format!("enc.tf{l}"), e.heads, e.head_dim, e.mlp_hidden);
    }

    let k = &c.corrector;
    norm(&mut add, "corr.ln_in", d);
    norm(&mut add, "corr.ln_slots", d);
    for m in ["q", "k", "v"] {
        add(format!("corr.{m}.w"), vec![d, k.qkv]);
    }
    add("corr.gru.wi".into(), vec![k.qkv, 3 * d]);
    add("corr.gru.wh".into(), vec![d, 3 * d]);
    add("corr.gru.bi".into(), vec![3 * d]);
    add("corr.gru.bh".into(), vec![3 * d]);
    norm(&mut add, "corr.ln_mlp", d);
    linear(&mut add, "corr.mlp.fc1", d, k.mlp_hidden);
    linear(&mut add, "corr.mlp.fc2", k.mlp_hidden, d);

    if c.variant == Variant::Full {
        let dc = &c.decoder;
        linear(&mut add, "dec.pos", 2, d);
        for s in 0..dc.stages {
            let cin = if s == 0 { d } else { dc.channels };
            add(format!("dec.up{s}.w"), vec![dc.kernel, dc.kernel, cin, dc.channels]);
            add(format!("dec.up{s}.b"), vec![dc.channels]);
        }
        let last = if dc.stages == 0 { d } else { dc.channels };
        linear(&mut add, "dec.out", last, c.target_channels + 1);
    }
    out
}

/// Fresh parameters: unit gains, zero biases, and weights uniform with
/// variance `1 / fan_in`.
pub fn init_params<S: Real>(c: &ModelConfig, seed: u64) -> ParamSet<S> {
    let mut rng = seeded(seed, 0);
    let mut set = ParamSet::default();
    for (name, shape) in param_shapes(c) {
        let n: usize = shape.iter().product();
        let leaf = name.rsplit('.').next().unwrap_or("");
        let data: Vec<S> = match leaf {
            "g" => vec![S::one(); n],
            "b" | "bi" | "bh" => vec![S::zero(); n],
            _ => {
                let mut fan_in: usize = if shape.len() > 1 { shape[..shape.len() - 1].iter().product() } else { 1 };
                if name.starts_with("dec.up") {
                    // a stride-2 transposed conv feeds each output from a quarter of its taps
                    fan_in = (fan_in / 4).max(1);
                }
                let a = (3.0 / fan_in as f64).sqrt();
                (0..n).map(|_| S::from_f64(rng.random_range(-a..a))).collect()
            }
        };
        set.insert(name, Tensor::new(&shape, data).expect("positive extents"));
    }
    set
}
