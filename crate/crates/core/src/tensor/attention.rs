use super::ops::{linear, softmax_in_place};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Projection weights for multi-head self-attention.
///
/// `qkv_weight` is `[3·D, D]`: rows `0..D` project queries, `D..2D` keys and
/// `2D..3D` values. Within each block, head `h` owns rows `h·D/heads..(h+1)·D/heads`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams<'a, T> {
    pub qkv_weight: &'a Tensor<T>,
    pub qkv_bias: Option<&'a Tensor<T>>,
    pub proj_weight: &'a Tensor<T>,
    pub proj_bias: Option<&'a Tensor<T>>,
    pub heads: usize,
}

/// Scaled dot-product self-attention over `[N, D]` tokens.
///
/// Returns the projected output `[N, D]` and the attention probabilities
/// `[heads, N, N]`, each row of which sums to one.
pub fn mhsa<T: Scalar>(input: &Tensor<T>, p: AttentionParams<'_, T>) -> Result<(Tensor<T>, Tensor<T>)> {
    const OP: &str = "mhsa";
    let (n, d) = match input.shape() {
        &[n, d] => (n, d),
        s => return Err(Error::shape(OP, format!("input must be [N,D], got {s:?}"))),
    };
    if p.heads == 0 || d % p.heads != 0 {
        return Err(Error::shape(OP, format!("embed dim {d} not divisible by {} heads", p.heads)));
    }
    if p.qkv_weight.shape() != [3 * d, d] {
        return Err(Error::shape(
            OP,
            format!("qkv weight {:?}, expected [{}, {d}]", p.qkv_weight.shape(), 3 * d),
        ));
    }
    let hd = d / p.heads;
    let qkv = linear(input, p.qkv_weight, p.qkv_bias)?;
    let qkv = qkv.data();
    let scale = T::one() / T::lit(hd as f64).sqrt();

    let mut attn = vec![T::zero(); p.heads * n * n];
    let mut mixed = vec![T::zero(); n * d];
    for h in 0..p.heads {
        let q_off = h * hd;
        let k_off = d + h * hd;
        let v_off = 2 * d + h * hd;
        let probs = &mut attn[h * n * n..(h + 1) * n * n];
        for i in 0..n {
            let q = &qkv[i * 3 * d + q_off..i * 3 * d + q_off + hd];
            let row = &mut probs[i * n..(i + 1) * n];
            for (j, s) in row.iter_mut().enumerate() {
                let k = &qkv[j * 3 * d + k_off..j * 3 * d + k_off + hd];
                *s = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
            }
            softmax_in_place(row);
            let out = &mut mixed[i * d + h * hd..i * d + (h + 1) * hd];
            for (j, &a) in row.iter().enumerate() {
                let v = &qkv[j * 3 * d + v_off..j * 3 * d + v_off + hd];
                for (o, &vv) in out.iter_mut().zip(v) {
                    *o += a * vv;
                }
            }
        }
    }
    let mixed = Tensor::new(vec![n, d], mixed)?;
    let out = linear(&mixed, p.proj_weight, p.proj_bias)?;
    Ok((out, Tensor::new(vec![p.heads, n, n], attn)?))
}
