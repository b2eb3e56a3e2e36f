pub(crate) mod conv;
mod elementwise;
mod linalg;
mod norm;
mod recurrent;
mod reduce;
mod shape;

pub use recurrent::GruParams;

use crate::graph::{GradBufs, Node, Var};
use crate::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Square,
    Huber,
}

pub(crate) enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    Unary(Var, Unary),
    MatMul(Var, Var),
    Transpose(Var),
    Sum(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Renormalize {
        x: Var,
        axis: usize,
        denom: Vec<S>,
    },
    MaskedSse {
        pred: Var,
        target: Vec<S>,
        valid: Vec<bool>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    GroupNorm {
        x: Var,
        gain: Var,
        bias: Var,
        groups: usize,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Conv2d {
        x: Var,
        kernel: Var,
        geom: conv::ConvGeom,
        cols: Vec<S>,
    },
    ConvTranspose2d {
        x: Var,
        kernel: Var,
        geom: conv::ConvGeom,
    },
    Reshape(Var),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Broadcast {
        x: Var,
        axis: usize,
        times: usize,
    },
}

impl<S: Real> Op<S> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::ScaleRows(..) => "scale_rows",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Unary(_, u) => match u {
                Unary::Relu => "relu",
                Unary::Sigmoid => "sigmoid",
                Unary::Tanh => "tanh",
                Unary::Exp => "exp",
                Unary::Square => "square",
                Unary::Huber => "huber",
            },
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Sum(..) => "sum",
            Op::SumAxis { .. } => "sum_axis",
            Op::Softmax { .. } => "softmax_axis",
            Op::Renormalize { .. } => "renormalize",
            Op::MaskedSse { .. } => "masked_sse",
            Op::LayerNorm { .. } => "layer_norm",
            Op::GroupNorm { .. } => "group_norm",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::Reshape(..) => "reshape",
            Op::Narrow { .. } => "narrow",
            Op::Concat { .. } => "concat",
            Op::Broadcast { .. } => "broadcast",
        }
    }

    pub(crate) fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddBias(a, b)
            | Op::ScaleRows(a, b)
            | Op::MatMul(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Unary(x, _)
            | Op::Transpose(x)
            | Op::Sum(x)
            | Op::Reshape(x) => vec![*x],
            Op::SumAxis { x, .. }
            | Op::Softmax { x, .. }
            | Op::Renormalize { x, .. }
            | Op::Narrow { x, .. }
            | Op::Broadcast { x, .. } => vec![*x],
            Op::MaskedSse { pred, .. } => vec![*pred],
            Op::LayerNorm { x, gain, bias, .. } | Op::GroupNorm { x, gain, bias, .. } => {
                vec![*x, *gain, *bias]
            }
            Op::Conv2d { x, kernel, .. } | Op::ConvTranspose2d { x, kernel, .. } => {
                vec![*x, *kernel]
            }
            Op::Concat { xs, .. } => xs.clone(),
        }
    }

    pub(crate) fn backward(
        &self,
        nodes: &[Node<S>],
        out: &Tensor<S>,
        g: &[S],
        bufs: &mut GradBufs<'_, S>,
    ) {
        let val = |v: &Var| &nodes[v.0].value;
        match self {
            Op::Leaf => {}
            Op::Add(..)
            | Op::Sub(..)
            | Op::Mul(..)
            | Op::AddBias(..)
            | Op::ScaleRows(..)
            | Op::Scale(..)
            | Op::AddScalar(..)
            | Op::Unary(..) => elementwise::backward(self, nodes, out, g, bufs),
            Op::MatMul(a, b) => linalg::matmul_backward(*a, *b, val(a), val(b), g, bufs),
            Op::Transpose(x) => linalg::transpose_backward(*x, val(x), g, bufs),
            Op::Sum(..)
            | Op::SumAxis { .. }
            | Op::Softmax { .. }
            | Op::Renormalize { .. }
            | Op::MaskedSse { .. } => reduce::backward(self, nodes, out, g, bufs),
            Op::LayerNorm { .. } | Op::GroupNorm { .. } => {
                norm::backward(self, nodes, out, g, bufs)
            }
            Op::Conv2d { .. } | Op::ConvTranspose2d { .. } => {
                conv::backward(self, nodes, g, bufs)
            }
            Op::Reshape(..) | Op::Narrow { .. } | Op::Concat { .. } | Op::Broadcast { .. } => {
                shape::backward(self, nodes, out, g, bufs)
            }
        }
    }
}
