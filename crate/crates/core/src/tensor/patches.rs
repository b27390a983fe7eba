use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Splits a `[D, H, W]` map into `ph × pw` patches.
///
/// Output is `[ph·pw, (H/ph)·(W/pw), D]`: the first axis is the pixel offset
/// inside a patch (`py·pw + px`), the second the patch index in row-major
/// order, the third the channel. Each offset therefore forms an independent
/// token sequence.
pub fn unfold_patches<T: Scalar>(input: &Tensor<T>, ph: usize, pw: usize) -> Result<Tensor<T>> {
    const OP: &str = "unfold_patches";
    let (d, h, w) = match input.shape() {
        &[d, h, w] => (d, h, w),
        s => return Err(Error::shape(OP, format!("input must be [D,H,W], got {s:?}"))),
    };
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::shape(OP, format!("{h}x{w} is not divisible into {ph}x{pw} patches")));
    }
    let (nh, nw) = (h / ph, w / pw);
    let n = nh * nw;
    let x = input.data();
    let mut out = vec![T::zero(); input.numel()];
    for py in 0..ph {
        for px in 0..pw {
            let area = py * pw + px;
            for gy in 0..nh {
                for gx in 0..nw {
                    let token = gy * nw + gx;
                    let (y, xx) = (gy * ph + py, gx * pw + px);
                    let dst = (area * n + token) * d;
                    for c in 0..d {
                        out[dst + c] = x[(c * h + y) * w + xx];
                    }
                }
            }
        }
    }
    Tensor::new(vec![ph * pw, n, d], out)
}

/// Inverse of [`unfold_patches`] for a map of spatial size `h × w`.
pub fn fold_patches<T: Scalar>(input: &Tensor<T>, ph: usize, pw: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    const OP: &str = "fold_patches";
    let (area, n, d) = match input.shape() {
        &[a, n, d] => (a, n, d),
        s => return Err(Error::shape(OP, format!("input must be [P,N,D], got {s:?}"))),
    };
    if ph == 0 || pw == 0 || !h.is_multiple_of(ph) || !w.is_multiple_of(pw) || area != ph * pw || n != (h / ph) * (w / pw) {
        return Err(Error::shape(
            OP,
            format!("{:?} cannot fold into {h}x{w} with {ph}x{pw} patches", input.shape()),
        ));
    }
    let nw = w / pw;
    let x = input.data();
    let mut out = vec![T::zero(); input.numel()];
    for a in 0..area {
        let (py, px) = (a / pw, a % pw);
        for token in 0..n {
            let (gy, gx) = (token / nw, token % nw);
            let (y, xx) = (gy * ph + py, gx * pw + px);
            let src = (a * n + token) * d;
            for c in 0..d {
                out[(c * h + y) * w + xx] = x[src + c];
            }
        }
    }
    Tensor::new(vec![d, h, w], out)
}
