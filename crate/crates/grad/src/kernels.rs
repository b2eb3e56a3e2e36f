//! Raw buffer kernels shared by the forward and backward passes.

use crate::Real;

/// `c (+)= op(a)·op(b)` where `op` optionally transposes. Logical extents
/// are `m×k` for `op(a)` and `k×n` for `op(b)`; all buffers are row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<S: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    trans_a: bool,
    b: &[S],
    trans_b: bool,
    c: &mut [S],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { S::one() } else { S::zero() };
    // SAFETY: extents were checked against the slice lengths above and `c`
    // is a distinct mutable borrow.
    unsafe {
        S::gemm(
            m,
            k,
            n,
            S::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits a shape around `axis` into `(outer, len, inner)` block extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn axpy<S: Real>(dst: &mut [S], src: &[S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}
