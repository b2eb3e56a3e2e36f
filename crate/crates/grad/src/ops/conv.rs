//! 2-D convolution and transposed convolution over channels-last images.
//!
//! Inputs are `H×W×C` or `N×H×W×C`; kernels are `kh×kw×Cin×Cout`. Both ops
//! lower to a single matrix product over an unfolded patch buffer.

use super::Op;
use crate::graph::{GradBufs, Node, Var};
use crate::kernels::gemm;
use crate::{GradError, Graph, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    batched: bool,
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

/// Output extent of a strided, zero-padded cross-correlation, or `None` when
/// the kernel does not fit or the stride is zero.
pub fn conv2d_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input + 2 * pad {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

pub fn conv_transpose2d_output_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return None;
    }
    Some((input - 1) * stride + kernel)
}

fn image_dims(op: &'static str, shape: &[usize]) -> Result<(bool, usize, usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((false, 1, h, w, c)),
        [n, h, w, c] => Ok((true, n, h, w, c)),
        _ => Err(GradError::param(op, format!("expected H×W×C or N×H×W×C, got {shape:?}"))),
    }
}

fn kernel_dims(op: &'static str, shape: &[usize], cin: usize) -> Result<(usize, usize, usize)> {
    match *shape {
        [kh, kw, kc, cout] if kc == cin => Ok((kh, kw, cout)),
        _ => Err(GradError::dim(op, &[cin], shape)),
    }
}

impl ConvGeom {
    fn out_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.n, self.oh, self.ow, self.cout]
        } else {
            vec![self.oh, self.ow, self.cout]
        }
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }
}

impl<S: Real> Graph<S> {
    /// Strided cross-correlation with symmetric zero padding.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        if stride == 0 {
            return Err(GradError::param("conv2d", "stride must be positive"));
        }
        let (batched, n, h, w, cin) = image_dims("conv2d", self.shape(x))?;
        let (kh, kw, cout) = kernel_dims("conv2d", self.shape(kernel), cin)?;
        let (Some(oh), Some(ow)) = (
            conv2d_output_extent(h, kh, stride, padding),
            conv2d_output_extent(w, kw, stride, padding),
        ) else {
            return Err(GradError::param(
                "conv2d",
                format!("{kh}×{kw} kernel exceeds padded {h}×{w} input"),
            ));
        };
        let geom = ConvGeom {
            batched,
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad: padding,
            oh,
            ow,
        };
        let cols = im2col(self.value(x).data(), &geom);
        let rows = n * oh * ow;
        let mut out = vec![S::zero(); rows * cout];
        gemm(rows, geom.patch(), cout, &cols, false, self.value(kernel).data(), false, &mut out, false);
        let out = Tensor::from_parts(geom.out_shape(), out);
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                kernel,
                geom,
                cols,
            },
        ))
    }

    /// Transposed convolution (the adjoint of an unpadded strided conv2d);
    /// output extent `(H-1)·stride + kh`.
    pub fn conv_transpose2d(&mut self, x: Var, kernel: Var, stride: usize) -> Result<Var> {
        if stride == 0 {
            return Err(GradError::param("conv_transpose2d", "stride must be positive"));
        }
        let (batched, n, h, w, cin) = image_dims("conv_transpose2d", self.shape(x))?;
        let (kh, kw, cout) = kernel_dims("conv_transpose2d", self.shape(kernel), cin)?;
        let geom = ConvGeom {
            batched,
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad: 0,
            oh: (h - 1) * stride + kh,
            ow: (w - 1) * stride + kw,
        };
        let mut out = vec![S::zero(); n * geom.oh * geom.ow * cout];
        transpose_forward(self.value(x).data(), self.value(kernel).data(), &mut out, &geom);
        let out = Tensor::from_parts(geom.out_shape(), out);
        Ok(self.push(out, Op::ConvTranspose2d { x, kernel, geom }))
    }
}

/// Unfolds conv2d input patches into rows of length `kh·kw·cin`.
fn im2col<S: Real>(x: &[S], g: &ConvGeom) -> Vec<S> {
    let patch = g.patch();
    let mut cols = vec![S::zero(); g.n * g.oh * g.ow * patch];
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = ((n * g.oh + oy) * g.ow + ox) * patch;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let src = ((n * g.h + iy as usize) * g.w + ix as usize) * g.cin;
                        let dst = row + (ky * g.kw + kx) * g.cin;
                        cols[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates patch rows back into image layout.
fn col2im<S: Real>(cols: &[S], dx: &mut [S], g: &ConvGeom) {
    let patch = g.patch();
    for n in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = ((n * g.oh + oy) * g.ow + ox) * patch;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let dst = ((n * g.h + iy as usize) * g.w + ix as usize) * g.cin;
                        let src = row + (ky * g.kw + kx) * g.cin;
                        for c in 0..g.cin {
                            dx[dst + c] += cols[src + c];
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution as `stride²` ordinary correlations, one per output
/// phase; each phase sees only the kernel taps congruent to it.
fn transpose_forward<S: Real>(x: &[S], k: &[S], out: &mut [S], g: &ConvGeom) {
    let s = g.stride;
    for py in 0..s {
        for px in 0..s {
            let ta: Vec<usize> = (py..g.kh).step_by(s).collect();
            let tb: Vec<usize> = (px..g.kw).step_by(s).collect();
            let qn = (g.oh - py).div_ceil(s);
            let rn = (g.ow - px).div_ceil(s);
            if ta.is_empty() || tb.is_empty() || qn == 0 || rn == 0 {
                continue;
            }
            let patch = ta.len() * tb.len() * g.cin;
            let mut sub = Vec::with_capacity(patch * g.cout);
            for &a in &ta {
                for &b in &tb {
                    let base = (a * g.kw + b) * g.cin * g.cout;
                    sub.extend_from_slice(&k[base..base + g.cin * g.cout]);
                }
            }
            let rows = g.n * qn * rn;
            let mut cols = vec![S::zero(); rows * patch];
            for n in 0..g.n {
                for q in 0..qn {
                    for r in 0..rn {
                        let row = ((n * qn + q) * rn + r) * patch;
                        for m in 0..ta.len() {
                            let Some(i) = q.checked_sub(m).filter(|i| *i < g.h) else {
                                continue;
                            };
                            for l in 0..tb.len() {
                                let Some(j) = r.checked_sub(l).filter(|j| *j < g.w) else {
                                    continue;
                                };
                                let src = ((n * g.h + i) * g.w + j) * g.cin;
                                let dst = row + (m * tb.len() + l) * g.cin;
                                cols[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                            }
                        }
                    }
                }
            }
            let mut res = vec![S::zero(); rows * g.cout];
            gemm(rows, patch, g.cout, &cols, false, &sub, false, &mut res, false);
            for n in 0..g.n {
                for q in 0..qn {
                    for r in 0..rn {
                        let src = ((n * qn + q) * rn + r) * g.cout;
                        let dst = ((n * g.oh + s * q + py) * g.ow + s * r + px) * g.cout;
                        out[dst..dst + g.cout].copy_from_slice(&res[src..src + g.cout]);
                    }
                }
            }
        }
    }
}

/// `kh×kw×cin×cout` → `cin×(kh·kw·cout)`.
fn permute_kernel<S: Real>(k: &[S], g: &ConvGeom) -> Vec<S> {
    let width = g.kh * g.kw * g.cout;
    let mut kp = vec![S::zero(); g.cin * width];
    for a in 0..g.kh {
        for b in 0..g.kw {
            for ci in 0..g.cin {
                for co in 0..g.cout {
                    kp[ci * width + (a * g.kw + b) * g.cout + co] =
                        k[((a * g.kw + b) * g.cin + ci) * g.cout + co];
                }
            }
        }
    }
    kp
}

fn gather_cols<S: Real>(gout: &[S], g: &ConvGeom) -> Vec<S> {
    let width = g.kh * g.kw * g.cout;
    let mut cols = vec![S::zero(); g.n * g.h * g.w * width];
    for n in 0..g.n {
        for i in 0..g.h {
            for j in 0..g.w {
                let row = ((n * g.h + i) * g.w + j) * width;
                for a in 0..g.kh {
                    for b in 0..g.kw {
                        let src = ((n * g.oh + i * g.stride + a) * g.ow + j * g.stride + b) * g.cout;
                        let dst = row + (a * g.kw + b) * g.cout;
                        cols[dst..dst + g.cout].copy_from_slice(&gout[src..src + g.cout]);
                    }
                }
            }
        }
    }
    cols
}

pub(super) fn backward<S: Real>(op: &Op<S>, nodes: &[Node<S>], g: &[S], bufs: &mut GradBufs<'_, S>) {
    match op {
        Op::Conv2d {
            x,
            kernel,
            geom,
            cols,
        } => {
            let rows = geom.n * geom.oh * geom.ow;
            let patch = geom.patch();
            if let Some(gk) = bufs.get(*kernel) {
                gemm(patch, rows, geom.cout, cols, true, g, false, gk, true);
            }
            if bufs.wants(*x) {
                let mut dcols = vec![S::zero(); rows * patch];
                let k = nodes[kernel.0].value.data();
                gemm(rows, geom.cout, patch, g, false, k, true, &mut dcols, false);
                if let Some(gx) = bufs.get(*x) {
                    col2im(&dcols, gx, geom);
                }
            }
        }
        Op::ConvTranspose2d { x, kernel, geom } => {
            let rows = geom.n * geom.h * geom.w;
            let width = geom.kh * geom.kw * geom.cout;
            let gcols = gather_cols(g, geom);
            if bufs.wants(*x) {
                let kp = permute_kernel(nodes[kernel.0].value.data(), geom);
                if let Some(gx) = bufs.get(*x) {
                    gemm(rows, width, geom.cin, &gcols, false, &kp, true, gx, true);
                }
            }
            if bufs.wants(*kernel) {
                let mut dkp = vec![S::zero(); geom.cin * width];
                gemm(geom.cin, rows, width, nodes[x.0].value.data(), true, &gcols, false, &mut dkp, false);
                if let Some(gk) = bufs.get(*kernel) {
                    for a in 0..geom.kh {
                        for b in 0..geom.kw {
                            for ci in 0..geom.cin {
                                for co in 0..geom.cout {
                                    gk[((a * geom.kw + b) * geom.cin + ci) * geom.cout + co] +=
                                        dkp[ci * width + (a * geom.kw + b) * geom.cout + co];
                                }
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!("not a convolution"),
    }
}
