use super::{Op, Unary};
use crate::graph::{GradBufs, Node, Var};
use crate::kernels::axpy;
use crate::{GradError, Graph, Real, Result, Tensor};

impl<S: Real> Graph<S> {
    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(S, S) -> S,
    ) -> Result<Tensor<S>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(GradError::dim(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds `bias` to every trailing block of `x`; `bias`'s shape must be a
    /// suffix of `x`'s shape.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (xs, bs) = (tx.shape(), tb.shape());
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
            return Err(GradError::dim("add_bias", xs, bs));
        }
        let n = tb.numel();
        let mut data = tx.data().to_vec();
        for chunk in data.chunks_mut(n) {
            axpy(chunk, tb.data());
        }
        let out = Tensor::from_parts(xs.to_vec(), data);
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    /// Multiplies each leading block of `x` by one weight; `w`'s shape must be
    /// a prefix of `x`'s shape.
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (xs, ws) = (tx.shape(), tw.shape());
        if ws.len() > xs.len() || xs[..ws.len()] != *ws {
            return Err(GradError::dim("scale_rows", xs, ws));
        }
        let block = tx.numel() / tw.numel();
        let mut data = tx.data().to_vec();
        for (chunk, s) in data.chunks_mut(block).zip(tw.data()) {
            for v in chunk {
                *v *= *s;
            }
        }
        let out = Tensor::from_parts(xs.to_vec(), data);
        Ok(self.push(out, Op::ScaleRows(x, w)))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| *v * c).collect());
        self.push(out, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -S::one())
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Var {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| *v + c).collect());
        self.push(out, Op::AddScalar(x))
    }

    fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let t = self.value(x);
        let f: fn(S) -> S = match kind {
            Unary::Relu => |v| v.max(S::zero()),
            Unary::Sigmoid => sigmoid,
            Unary::Tanh => |v| v.tanh(),
            Unary::Exp => |v| v.exp(),
            Unary::Square => |v| v * v,
            Unary::Huber => huber,
        };
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| f(*v)).collect());
        self.push(out, Op::Unary(x, kind))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    /// Elementwise Huber penalty with unit threshold: `0.5x²` inside
    /// `[-1, 1]`, `|x| - 0.5` outside.
    pub fn huber(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Huber)
    }
}

fn sigmoid<S: Real>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

fn huber<S: Real>(v: S) -> S {
    let a = v.abs();
    let half = S::from_f64(0.5);
    if a <= S::one() {
        half * v * v
    } else {
        a - half
    }
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
        Op::Add(a, b) => {
            if let Some(ga) = bufs.get(*a) {
                axpy(ga, g);
            }
            if let Some(gb) = bufs.get(*b) {
                axpy(gb, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = bufs.get(*a) {
                axpy(ga, g);
            }
            if let Some(gb) = bufs.get(*b) {
                for (d, s) in gb.iter_mut().zip(g) {
                    *d -= *s;
                }
            }
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (val(a), val(b));
            if let Some(ga) = bufs.get(*a) {
                for ((d, s), y) in ga.iter_mut().zip(g).zip(tb.data()) {
                    *d += *s * *y;
                }
            }
            if let Some(gb) = bufs.get(*b) {
                for ((d, s), x) in gb.iter_mut().zip(g).zip(ta.data()) {
                    *d += *s * *x;
                }
            }
        }
        Op::AddBias(x, bias) => {
            if let Some(gx) = bufs.get(*x) {
                axpy(gx, g);
            }
            let n = val(bias).numel();
            if let Some(gb) = bufs.get(*bias) {
                for chunk in g.chunks(n) {
                    axpy(gb, chunk);
                }
            }
        }
        Op::ScaleRows(x, w) => {
            let (tx, tw) = (val(x), val(w));
            let block = tx.numel() / tw.numel();
            if let Some(gx) = bufs.get(*x) {
                for ((dc, gc), s) in gx.chunks_mut(block).zip(g.chunks(block)).zip(tw.data()) {
                    for (d, v) in dc.iter_mut().zip(gc) {
                        *d += *v * *s;
                    }
                }
            }
            if let Some(gw) = bufs.get(*w) {
                for ((d, gc), xc) in gw.iter_mut().zip(g.chunks(block)).zip(tx.data().chunks(block)) {
                    *d += gc.iter().zip(xc).map(|(a, b)| *a * *b).sum::<S>();
                }
            }
        }
        Op::Scale(x, c) => {
            if let Some(gx) = bufs.get(*x) {
                for (d, s) in gx.iter_mut().zip(g) {
                    *d += *s * *c;
                }
            }
        }
        Op::AddScalar(x) => {
            if let Some(gx) = bufs.get(*x) {
                axpy(gx, g);
            }
        }
        Op::Unary(x, kind) => {
            let tx = val(x);
            let Some(gx) = bufs.get(*x) else { return };
            let xs = tx.data();
            let ys = out.data();
            for i in 0..gx.len() {
                let d = match kind {
                    Unary::Relu => {
                        if xs[i] > S::zero() {
                            S::one()
                        } else {
                            S::zero()
                        }
                    }
                    Unary::Sigmoid => ys[i] * (S::one() - ys[i]),
                    Unary::Tanh => S::one() - ys[i] * ys[i],
                    Unary::Exp => ys[i],
                    Unary::Square => S::from_f64(2.0) * xs[i],
                    Unary::Huber => xs[i].max(-S::one()).min(S::one()),
                };
                gx[i] += g[i] * d;
            }
        }
        _ => unreachable!("not an elementwise op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_values() {
        assert_eq!(huber(0.0f64), 0.0);
        assert_eq!(huber(0.5f64), 0.125);
        assert_eq!(huber(2.0f64), 1.5);
        assert_eq!(huber(-2.0f64), 1.5);
        // continuous at the threshold
        assert!((huber(1.0f64) - huber(1.0 + 1e-12)).abs() < 1e-11);
    }

    #[test]
    fn add_bias_rejects_non_suffix() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(g.add_bias(x, b), Err(GradError::Dimension { .. })));
        let b3 = g.constant(Tensor::full(&[3], 1.0));
        let y = g.add_bias(x, b3).unwrap();
        assert_eq!(g.value(y).data(), &[1.0; 6]);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
    }
}
