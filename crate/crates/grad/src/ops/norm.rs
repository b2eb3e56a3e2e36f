use super::Op;
use crate::graph::{GradBufs, Node, Var};
use crate::{GradError, Graph, Real, Result, Tensor};

impl<S: Real> Graph<S> {
    /// Normalizes every row (last axis) to zero mean and unit variance, then
    /// applies the per-channel affine `gain`, `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: S) -> Result<Var> {
        let c = *self.shape(x).last().unwrap();
        self.check_affine("layer_norm", gain, bias, c)?;
        let t = self.value(x);
        let rows = t.numel() / c;
        let (xhat, rstd) = normalize(t.data(), rows, 1, c, 1, eps);
        let out = affine(&xhat, self.value(gain).data(), self.value(bias).data(), c);
        let out = Tensor::from_parts(t.shape().to_vec(), out);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Group normalization over an `[N,] H, W, C` (or `P, C`) tensor: each
    /// sample's channels are split into `groups` contiguous groups and every
    /// group is normalized over all of its spatial positions and channels.
    /// A rank-4 input treats its first axis as independent samples.
    pub fn group_norm(&mut self, x: Var, groups: usize, gain: Var, bias: Var, eps: S) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if groups == 0 || !c.is_multiple_of(groups) {
            return Err(GradError::param(
                "group_norm",
                format!("{c} channels not divisible into {groups} groups"),
            ));
        }
        self.check_affine("group_norm", gain, bias, c)?;
        let samples = if shape.len() == 4 { shape[0] } else { 1 };
        let positions = shape.iter().product::<usize>() / (samples * c);
        let t = self.value(x);
        let (xhat, rstd) = normalize(t.data(), samples, positions, c, groups, eps);
        let out = affine(&xhat, self.value(gain).data(), self.value(bias).data(), c);
        let out = Tensor::from_parts(shape, out);
        Ok(self.push(
            out,
            Op::GroupNorm {
                x,
                gain,
                bias,
                groups,
                xhat,
                rstd,
            },
        ))
    }

    fn check_affine(&self, op: &'static str, gain: Var, bias: Var, c: usize) -> Result<()> {
        for v in [gain, bias] {
            if self.shape(v) != [c] {
                return Err(GradError::dim(op, &[c], self.shape(v)));
            }
        }
        Ok(())
    }
}

/// Visits the element indices of one normalization set.
fn for_set(n: usize, g: usize, positions: usize, c: usize, groups: usize, mut f: impl FnMut(usize)) {
    let cg = c / groups;
    for p in 0..positions {
        let base = (n * positions + p) * c + g * cg;
        for i in base..base + cg {
            f(i);
        }
    }
}

fn normalize<S: Real>(
    x: &[S],
    samples: usize,
    positions: usize,
    c: usize,
    groups: usize,
    eps: S,
) -> (Vec<S>, Vec<S>) {
    let count = S::from_f64((positions * c / groups) as f64);
    let mut xhat = vec![S::zero(); x.len()];
    let mut rstd = Vec::with_capacity(samples * groups);
    for n in 0..samples {
        for g in 0..groups {
            let mut mean = S::zero();
            for_set(n, g, positions, c, groups, |i| mean += x[i]);
            mean = mean / count;
            let mut var = S::zero();
            for_set(n, g, positions, c, groups, |i| {
                let d = x[i] - mean;
                var += d * d;
            });
            let r = S::one() / (var / count + eps).sqrt();
            for_set(n, g, positions, c, groups, |i| xhat[i] = (x[i] - mean) * r);
            rstd.push(r);
        }
    }
    (xhat, rstd)
}

fn affine<S: Real>(xhat: &[S], gain: &[S], bias: &[S], c: usize) -> Vec<S> {
    xhat.iter()
        .enumerate()
        .map(|(i, v)| *v * gain[i % c] + bias[i % c])
        .collect()
}

pub(super) fn backward<S: Real>(
    op: &Op<S>,
    nodes: &[Node<S>],
    _out: &Tensor<S>,
    g: &[S],
    bufs: &mut GradBufs<'_, S>,
) {
    let (x, gain, bias, xhat, rstd, groups) = match op {
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => (*x, *gain, *bias, xhat, rstd, 0),
        Op::GroupNorm {
            x,
            gain,
            bias,
            groups,
            xhat,
            rstd,
        } => (*x, *gain, *bias, xhat, rstd, *groups),
        _ => unreachable!("not a normalization"),
    };
    let shape = nodes[x.0].value.shape();
    let c = *shape.last().unwrap();
    // a layer norm is a group norm with one group per row
    let (samples, positions, groups) = if groups == 0 {
        (xhat.len() / c, 1, 1)
    } else {
        let samples = if shape.len() == 4 { shape[0] } else { 1 };
        (samples, xhat.len() / (samples * c), groups)
    };
    let gv = nodes[gain.0].value.data();

    if let Some(gg) = bufs.get(gain) {
        for i in 0..g.len() {
            gg[i % c] += g[i] * xhat[i];
        }
    }
    if let Some(gb) = bufs.get(bias) {
        for i in 0..g.len() {
            gb[i % c] += g[i];
        }
    }
    if !bufs.wants(x) {
        return;
    }
    let count = S::from_f64((positions * c / groups) as f64);
    let mut dx = vec![S::zero(); g.len()];
    for n in 0..samples {
        for grp in 0..groups {
            let r = rstd[n * groups + grp];
            let mut m1 = S::zero();
            let mut m2 = S::zero();
            for_set(n, grp, positions, c, groups, |i| {
                let dxh = g[i] * gv[i % c];
                m1 += dxh;
                m2 += dxh * xhat[i];
            });
            m1 = m1 / count;
            m2 = m2 / count;
            for_set(n, grp, positions, c, groups, |i| {
                let dxh = g[i] * gv[i % c];
                dx[i] = r * (dxh - m1 - xhat[i] * m2);
            });
        }
    }
    if let Some(gx) = bufs.get(x) {
        for (d, v) in gx.iter_mut().zip(&dx) {
            *d += *v;
        }
    }
}
