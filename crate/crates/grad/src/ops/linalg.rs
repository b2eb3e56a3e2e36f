use super::Op;
use crate::graph::{GradBufs, Var};
use crate::kernels::gemm;
use crate::{GradError, Graph, Real, Result, Tensor};

impl<S: Real> Graph<S> {
    /// Matrix product of `m×k` and `k×n` operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(GradError::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![S::zero(); m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut c, false);
        let out = Tensor::from_parts(vec![m, n], c);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.shape();
        if s.len() != 2 {
            return Err(GradError::param("transpose", format!("rank-2 input required, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let src = t.data();
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let out = Tensor::from_parts(vec![c, r], data);
        Ok(self.push(out, Op::Transpose(x)))
    }
}

pub(super) fn matmul_backward<S: Real>(
    a: Var,
    b: Var,
    ta: &Tensor<S>,
    tb: &Tensor<S>,
    g: &[S],
    bufs: &mut GradBufs<'_, S>,
) {
    let (m, k) = (ta.shape()[0], ta.shape()[1]);
    let n = tb.shape()[1];
    // dA = G·Bᵀ, dB = Aᵀ·G
    if let Some(ga) = bufs.get(a) {
        gemm(m, n, k, g, false, tb.data(), true, ga, true);
    }
    if let Some(gb) = bufs.get(b) {
        gemm(k, m, n, ta.data(), true, g, false, gb, true);
    }
}

pub(super) fn transpose_backward<S: Real>(
    x: Var,
    tx: &Tensor<S>,
    g: &[S],
    bufs: &mut GradBufs<'_, S>,
) {
    let (r, c) = (tx.shape()[0], tx.shape()[1]);
    if let Some(gx) = bufs.get(x) {
        for i in 0..r {
            for j in 0..c {
                gx[i * c + j] += g[j * r + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix() {
        let mut g = Graph::<f64>::new();
        let i = g.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.constant(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let c = g.matmul(i, b).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn selector_row() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap());
        let b = g.constant(Tensor::new(&[2, 1], vec![5.0, 7.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[1, 1]);
        assert_eq!(g.value(c).item(), 5.0);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }
}
