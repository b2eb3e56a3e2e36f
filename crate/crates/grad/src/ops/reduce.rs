use super::Op;
use crate::graph::{GradBufs, Node, Var};
use crate::kernels::split_axis;
use crate::{GradError, Graph, Real, Result, Tensor};

impl<S: Real> Graph<S> {
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum(x);
        self.scale(s, S::one() / S::from_f64(n as f64))
    }

    /// Sums out `axis`; the result drops that axis (a rank-1 input reduces to
    /// shape `[1]`).
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        check_axis("sum_axis", t.shape(), axis)?;
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let src = t.data();
        let mut data = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let row = &src[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, v) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += *v;
                }
            }
        }
        let mut shape: Vec<usize> = t.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(self.push(Tensor::from_parts(shape, data), Op::SumAxis { x, axis }))
    }

    /// Softmax along `axis`, computed after subtracting the per-lane maximum.
    pub fn softmax_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        check_axis("softmax_axis", t.shape(), axis)?;
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let src = t.data();
        let mut data = vec![S::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let mut m = S::neg_infinity();
                for a in 0..len {
                    m = m.max(src[idx(a)]);
                }
                let mut total = S::zero();
                for a in 0..len {
                    let e = (src[idx(a)] - m).exp();
                    data[idx(a)] = e;
                    total += e;
                }
                for a in 0..len {
                    data[idx(a)] = data[idx(a)] / total;
                }
            }
        }
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(out, Op::Softmax { x, axis }))
    }

    /// `x / (Σ_axis x + eps)` lane by lane.
    pub fn renormalize(&mut self, x: Var, axis: usize, eps: S) -> Result<Var> {
        let t = self.value(x);
        check_axis("renormalize", t.shape(), axis)?;
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let src = t.data();
        let mut denom = vec![eps; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    denom[o * inner + i] += src[(o * len + a) * inner + i];
                }
            }
        }
        let mut data = vec![S::zero(); src.len()];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    let k = (o * len + a) * inner + i;
                    data[k] = src[k] / denom[o * inner + i];
                }
            }
        }
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(out, Op::Renormalize { x, axis, denom }))
    }

    /// Sum of squared differences over the positions flagged in `valid`.
    /// Entries of `pred` at invalid positions are never read.
    pub fn masked_sse(&mut self, pred: Var, target: &Tensor<S>, valid: &[bool]) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(GradError::dim("masked_sse", p.shape(), target.shape()));
        }
        if valid.len() != p.numel() {
            return Err(GradError::dim("masked_sse", p.shape(), &[valid.len()]));
        }
        let mut s = S::zero();
        for ((x, t), ok) in p.data().iter().zip(target.data()).zip(valid) {
            if *ok {
                let d = *x - *t;
                s += d * d;
            }
        }
        let op = Op::MaskedSse {
            pred,
            target: target.data().to_vec(),
            valid: valid.to_vec(),
        };
        Ok(self.push(Tensor::scalar(s), op))
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(GradError::param(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok(())
}

pub(super) fn backward<S: Real>(
    op: &Op<S>,
    nodes: &[Node<S>],
    out: &Tensor<S>,
    g: &[S],
    bufs: &mut GradBufs<'_, S>,
) {
    let val = |v: &Var| &nodes[v.0].value;
    match op {
        Op::Sum(x) => {
            if let Some(gx) = bufs.get(*x) {
                for d in gx {
                    *d += g[0];
                }
            }
        }
        Op::SumAxis { x, axis } => {
            let (outer, len, inner) = split_axis(val(x).shape(), *axis);
            if let Some(gx) = bufs.get(*x) {
                for o in 0..outer {
                    for a in 0..len {
                        let dst = &mut gx[(o * len + a) * inner..(o * len + a + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
        Op::Softmax { x, axis } => {
            let (outer, len, inner) = split_axis(out.shape(), *axis);
            let y = out.data();
            if let Some(gx) = bufs.get(*x) {
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let dot: S = (0..len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                        for a in 0..len {
                            gx[idx(a)] += y[idx(a)] * (g[idx(a)] - dot);
                        }
                    }
                }
            }
        }
        Op::Renormalize { x, axis, denom } => {
            let (outer, len, inner) = split_axis(out.shape(), *axis);
            let y = out.data();
            if let Some(gx) = bufs.get(*x) {
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let dot: S = (0..len).map(|a| g[idx(a)] * y[idx(a)]).sum();
                        let den = denom[o * inner + i];
                        for a in 0..len {
                            gx[idx(a)] += (g[idx(a)] - dot) / den;
                        }
                    }
                }
            }
        }
        Op::MaskedSse {
            pred,
            target,
            valid,
        } => {
            let p = val(pred).data();
            if let Some(gp) = bufs.get(*pred) {
                let two = S::from_f64(2.0) * g[0];
                for i in 0..gp.len() {
                    if valid[i] {
                        gp[i] += two * (p[i] - target[i]);
                    }
                }
            }
        }
        _ => unreachable!("not a reduction"),
    }
}
