use crate::graph::Var;
use crate::{GradError, Graph, Real, Result};

/// Weights of a gated recurrent cell with hidden width `D` and input width
/// `Dx`. Gate blocks are packed column-wise in the order reset, update,
/// candidate.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    /// `Dx × 3D`
    pub w_input: Var,
    /// `D × 3D`
    pub w_hidden: Var,
    /// `3D`
    pub b_input: Var,
    /// `3D`
    pub b_hidden: Var,
}

impl<S: Real> Graph<S> {
    /// One gated recurrent update applied row-wise to `h: R×D` with inputs
    /// `x: R×Dx`:
    ///
    /// ```text
    /// r = σ(x·Wr + h·Ur)   z = σ(x·Wz + h·Uz)
    /// n = tanh(x·Wn + r ⊙ (h·Un))
    /// h' = (1 - z) ⊙ h + z ⊙ n
    /// ```
    pub fn gru_cell(&mut self, h: Var, x: Var, p: &GruParams) -> Result<Var> {
        let hs = self.shape(h).to_vec();
        if hs.len() != 2 || self.shape(x).len() != 2 || self.shape(x)[0] != hs[0] {
            return Err(GradError::dim("gru_cell", &hs, self.shape(x)));
        }
        let d = hs[1];
        let gx = self.matmul(x, p.w_input)?;
        let gx = self.add_bias(gx, p.b_input)?;
        let gh = self.matmul(h, p.w_hidden)?;
        let gh = self.add_bias(gh, p.b_hidden)?;
        if self.shape(gx)[1] != 3 * d || self.shape(gh)[1] != 3 * d {
            return Err(GradError::dim("gru_cell", &[3 * d], self.shape(gh)));
        }
        let xr = self.narrow(gx, 1, 0, d)?;
        let xz = self.narrow(gx, 1, d, d)?;
        let xn = self.narrow(gx, 1, 2 * d, d)?;
        let hr = self.narrow(gh, 1, 0, d)?;
        let hz = self.narrow(gh, 1, d, d)?;
        let hn = self.narrow(gh, 1, 2 * d, d)?;
        let r = self.add(xr, hr)?;
        let r = self.sigmoid(r);
        let z = self.add(xz, hz)?;
        let z = self.sigmoid(z);
        let rn = self.mul(r, hn)?;
        let n = self.add(xn, rn)?;
        let n = self.tanh(n);
        // h + z ⊙ (n - h)
        let delta = self.sub(n, h)?;
        let step = self.mul(z, delta)?;
        self.add(h, step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn params(g: &mut Graph<f64>, d: usize, dx: usize, gate_bias: f64) -> GruParams {
        let mut b = Tensor::zeros(&[3 * d]);
        for i in d..2 * d {
            b.data_mut()[i] = gate_bias;
        }
        GruParams {
            w_input: g.param(Tensor::zeros(&[dx, 3 * d])),
            w_hidden: g.param(Tensor::zeros(&[d, 3 * d])),
            b_input: g.param(b),
            b_hidden: g.param(Tensor::zeros(&[3 * d])),
        }
    }

    #[test]
    fn zero_params_halve_state() {
        let mut g = Graph::<f64>::new();
        let p = params(&mut g, 3, 3, 0.0);
        let h = g.constant(Tensor::new(&[1, 3], vec![1.0, -2.0, 4.0]).unwrap());
        let x = g.constant(Tensor::new(&[1, 3], vec![7.0, 7.0, 7.0]).unwrap());
        let out = g.gru_cell(h, x, &p).unwrap();
        assert_eq!(g.value(out).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut g = Graph::<f64>::new();
        let p = params(&mut g, 2, 4, -40.0);
        let h = g.constant(Tensor::new(&[1, 2], vec![0.3, -0.8]).unwrap());
        let x = g.constant(Tensor::full(&[1, 4], 1.0));
        let out = g.gru_cell(h, x, &p).unwrap();
        assert!(g.value(out).max_abs_diff(g.value(h)) < 1e-6);
    }
}
