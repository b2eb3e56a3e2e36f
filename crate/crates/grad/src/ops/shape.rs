use super::Op;
use crate::graph::{GradBufs, Node, Var};
use crate::kernels::{axpy, split_axis};
use crate::tensor::numel;
use crate::{GradError, Graph, Real, Result, Tensor};

impl<S: Real> Graph<S> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(GradError::param(
                "narrow",
                format!("range {start}+{len} on axis {axis} of {shape:?}"),
            ));
        }
        let (outer, full, inner) = split_axis(shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        Ok(self.push(Tensor::from_parts(out_shape, data), Op::Narrow { x, axis, start }))
    }

    /// Joins tensors that agree on every axis except `axis`.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(first) = xs.first() else {
            return Err(GradError::param("concat", "no inputs"));
        };
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(GradError::param("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in xs {
            let s = self.shape(*v);
            let agrees = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !agrees {
                return Err(GradError::dim("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in xs {
                let t = self.value(*v);
                let block = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
        ))
    }

    /// Inserts a new axis at position `axis` holding `times` copies.
    pub fn broadcast(&mut self, x: Var, axis: usize, times: usize) -> Result<Var> {
        let t = self.value(x);
        if axis > t.rank() || times == 0 {
            return Err(GradError::param(
                "broadcast",
                format!("axis {axis} × {times} for {:?}", t.shape()),
            ));
        }
        let mut shape = t.shape().to_vec();
        shape.insert(axis, times);
        let inner: usize = t.shape()[axis..].iter().product();
        let outer = t.numel() / inner;
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            let block = &t.data()[o * inner..(o + 1) * inner];
            for _ in 0..times {
                data.extend_from_slice(block);
            }
        }
        Ok(self.push(Tensor::from_parts(shape, data), Op::Broadcast { x, axis, times }))
    }
}

pub(super) fn backward<S: Real>(
    op: &Op<S>,
    nodes: &[Node<S>],
    out: &Tensor<S>,
    g: &[S],
    bufs: &mut GradBufs<'_, S>,
) {
    match op {
        Op::Reshape(x) => {
            if let Some(gx) = bufs.get(*x) {
                axpy(gx, g);
            }
        }
        Op::Narrow { x, axis, start } => {
            let full_shape = nodes[x.0].value.shape();
            let (outer, full, inner) = split_axis(full_shape, *axis);
            let len = out.shape()[*axis];
            if let Some(gx) = bufs.get(*x) {
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    axpy(&mut gx[base..base + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                }
            }
        }
        Op::Concat { xs, axis } => {
            let (outer, total, inner) = split_axis(out.shape(), *axis);
            let mut offset = 0;
            for v in xs {
                let len = nodes[v.0].value.shape()[*axis];
                if let Some(gx) = bufs.get(*v) {
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        axpy(&mut gx[o * len * inner..(o + 1) * len * inner], &g[src..src + len * inner]);
                    }
                }
                offset += len;
            }
        }
        Op::Broadcast { x, axis, times } => {
            let block: usize = out.shape()[axis + 1..].iter().product();
            if let Some(gx) = bufs.get(*x) {
                for (o, dst) in gx.chunks_mut(block).enumerate() {
                    for r in 0..*times {
                        let src = (o * times + r) * block;
                        axpy(dst, &g[src..src + block]);
                    }
                }
            }
        }
        _ => unreachable!("not a shape op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn narrow_and_concat_roundtrip() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(&[2, 5, 3], |i| i as f64));
        let a = g.narrow(x, 1, 0, 2).unwrap();
        let b = g.narrow(x, 1, 2, 3).unwrap();
        let y = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(y), g.value(x));
        assert!(g.narrow(x, 1, 4, 2).is_err());
    }

    #[test]
    fn broadcast_copies_blocks() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.broadcast(x, 1, 3).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3, 2]);
        assert_eq!(
            g.value(y).data(),
            &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]
        );
        let z = g.broadcast(x, 0, 2).unwrap();
        assert_eq!(g.value(z).data(), &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn concat_rejects_mismatch() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 3]));
        assert!(g.concat(&[a, b], 1).is_err());
        assert!(g.concat(&[a, b], 0).is_ok());
    }
}
