//! Brute-force f64 reference kernels over flat row-major buffers.

pub fn conv2d_ref(
    x: &[f64],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f64],
    (c_out, k): (usize, usize),
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let cig = c_in / groups;
    let cog = c_out / groups;
    let mut out = vec![0.0; c_out * ho * wo];
    for co in 0..c_out {
        let g = co / cog;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias.map_or(0.0, |b| b[co]);
                for ci in 0..cig {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xi = ((g * cig + ci) * h + iy as usize) * w + ix as usize;
                            let wi = ((co * cig + ci) * k + ky) * k + kx;
                            acc += x[xi] * weight[wi];
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    (out, ho, wo)
}

/// `y[n][o] = Σ_i x[n][i]·w[o][i] + b[o]`.
pub fn linear_ref(x: &[f64], n: usize, d_in: usize, w: &[f64], d_out: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; n * d_out];
    for r in 0..n {
        for o in 0..d_out {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for i in 0..d_in {
                acc += x[r * d_in + i] * w[o * d_in + i];
            }
            y[r * d_out + o] = acc;
        }
    }
    y
}

pub fn softmax_ref(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn layernorm_ref(x: &[f64], d: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        for (i, v) in row.iter().enumerate() {
            out.push((v - mean) / (var + eps).sqrt() * gamma[i] + beta[i]);
        }
    }
    out
}

/// Multi-head attention by definition: per head, softmax(q·kᵀ/√d_h)·v, heads
/// concatenated, then the output projection. Returns `(output, probabilities)`.
pub fn mhsa_ref(
    x: &[f64],
    n: usize,
    d: usize,
    heads: usize,
    qkv_w: &[f64],
    qkv_b: &[f64],
    proj_w: &[f64],
    proj_b: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let hd = d / heads;
    let qkv = linear_ref(x, n, d, qkv_w, 3 * d, Some(qkv_b));
    let q = |t: usize, h: usize, j: usize| qkv[t * 3 * d + h * hd + j];
    let k = |t: usize, h: usize, j: usize| qkv[t * 3 * d + d + h * hd + j];
    let v = |t: usize, h: usize, j: usize| qkv[t * 3 * d + 2 * d + h * hd + j];
    let mut probs = vec![0.0; heads * n * n];
    let mut concat = vec![0.0; n * d];
    for h in 0..heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|t| (0..hd).map(|j| q(i, h, j) * k(t, h, j)).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let p = softmax_ref(&scores);
            for t in 0..n {
                probs[(h * n + i) * n + t] = p[t];
                for j in 0..hd {
                    concat[i * d + h * hd + j] += p[t] * v(t, h, j);
                }
            }
        }
    }
    (linear_ref(&concat, n, d, proj_w, d, Some(proj_b)), probs)
}

/// Largest `|a - b| / max(1, |b|)`.
pub fn max_rel_err(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

use leafvit_core::rng::SplitMix64;
use leafvit_core::tensor::{
    conv2d, fold_patches, layernorm, linear, mhsa, softmax, unfold_patches, AttentionParams, Conv2dParams,
};
use leafvit_core::Tensor;

fn size(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

fn values(rng: &mut SplitMix64, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()
}

fn wide(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn within(op: &str, err: f64, tol: f64) -> Result<(), String> {
    if err <= tol {
        Ok(())
    } else {
        Err(format!("{op}: error {err:.3e} exceeds {tol:.0e}"))
    }
}

pub const CONV_TOL: f64 = 1e-5;
pub const LINEAR_TOL: f64 = 1e-5;
pub const MHSA_TOL: f64 = 1e-5;
pub const SOFTMAX_TOL: f64 = 1e-6;
pub const LAYERNORM_TOL: f64 = 1e-5;

pub fn check_conv(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(seed);
    let groups = [1, 1, 2, 3][rng.below(4) as usize];
    let depthwise = rng.bernoulli(0.25);
    let c_in = groups * size(&mut rng, 1, 4);
    let (c_out, groups) = if depthwise {
        (c_in, c_in)
    } else {
        (groups * size(&mut rng, 1, 4), groups)
    };
    let k: usize = [1, 3, 5][rng.below(3) as usize];
    let pad = rng.below(k as u64 / 2 + 1) as usize;
    let stride = size(&mut rng, 1, 2);
    let h = size(&mut rng, k.saturating_sub(2 * pad).max(1), 12);
    let w = size(&mut rng, k.saturating_sub(2 * pad).max(1), 12);
    let x = values(&mut rng, c_in * h * w);
    let wt = values(&mut rng, c_out * (c_in / groups) * k * k);
    let b = values(&mut rng, c_out);
    let with_bias = rng.bernoulli(0.5);

    let xt = Tensor::from_slice(&[c_in, h, w], &x).unwrap();
    let wt_t = Tensor::from_slice(&[c_out, c_in / groups, k, k], &wt).unwrap();
    let bt = Tensor::from_slice(&[c_out], &b).unwrap();
    let got = conv2d(&xt, &wt_t, with_bias.then_some(&bt), Conv2dParams::new(stride, pad, groups))
        .map_err(|e| format!("conv2d failed: {e}"))?;
    let bw = wide(&b);
    let (want, ho, wo) = conv2d_ref(
        &wide(&x),
        (c_in, h, w),
        &wide(&wt),
        (c_out, k),
        with_bias.then_some(bw.as_slice()),
        stride,
        pad,
        groups,
    );
    if got.shape() != [c_out, ho, wo] {
        return Err(format!("conv2d shape {:?}, expected {:?}", got.shape(), [c_out, ho, wo]));
    }
    within("conv2d", max_rel_err(got.data(), &want), CONV_TOL)
}

pub fn check_linear(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(seed);
    let (n, d_in, d_out) = (size(&mut rng, 1, 9), size(&mut rng, 1, 48), size(&mut rng, 1, 24));
    let x = values(&mut rng, n * d_in);
    let w = values(&mut rng, d_out * d_in);
    let b = values(&mut rng, d_out);
    let got = linear(
        &Tensor::from_slice(&[n, d_in], &x).unwrap(),
        &Tensor::from_slice(&[d_out, d_in], &w).unwrap(),
        Some(&Tensor::from_slice(&[d_out], &b).unwrap()),
    )
    .map_err(|e| format!("linear failed: {e}"))?;
    let want = linear_ref(&wide(&x), n, d_in, &wide(&w), d_out, Some(&wide(&b)));
    within("linear", max_rel_err(got.data(), &want), LINEAR_TOL)
}

pub fn check_mhsa(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(seed);
    let heads = size(&mut rng, 1, 4);
    let d = heads * size(&mut rng, 1, 6);
    let n = size(&mut rng, 1, 10);
    let x = values(&mut rng, n * d);
    let qw = values(&mut rng, 3 * d * d);
    let qb = values(&mut rng, 3 * d);
    let pw = values(&mut rng, d * d);
    let pb = values(&mut rng, d);
    let t = |s: &[usize], v: &[f32]| Tensor::from_slice(s, v).unwrap();
    let (qw_t, qb_t, pw_t, pb_t) = (t(&[3 * d, d], &qw), t(&[3 * d], &qb), t(&[d, d], &pw), t(&[d], &pb));
    let (out, probs) = mhsa(
        &t(&[n, d], &x),
        AttentionParams {
            qkv_weight: &qw_t,
            qkv_bias: Some(&qb_t),
            proj_weight: &pw_t,
            proj_bias: Some(&pb_t),
            heads,
        },
    )
    .map_err(|e| format!("mhsa failed: {e}"))?;
    let (want_out, want_probs) = mhsa_ref(&wide(&x), n, d, heads, &wide(&qw), &wide(&qb), &wide(&pw), &wide(&pb));
    within("mhsa output", max_rel_err(out.data(), &want_out), MHSA_TOL)?;
    within("mhsa probabilities", max_rel_err(probs.data(), &want_probs), MHSA_TOL)
}

pub fn check_softmax(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(seed);
    let (rows, d) = (size(&mut rng, 1, 6), size(&mut rng, 1, 40));
    let scale = rng.uniform(0.1, 30.0);
    let x: Vec<f32> = values(&mut rng, rows * d).iter().map(|v| v * scale as f32).collect();
    let got = softmax(&Tensor::from_slice(&[rows, d], &x).unwrap());
    let want: Vec<f64> = wide(&x).chunks(d).flat_map(softmax_ref).collect();
    within("softmax", max_rel_err(got.data(), &want), SOFTMAX_TOL)?;
    for row in got.data().chunks(d) {
        within("softmax row sum", (row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs(), 1e-5)?;
    }
    Ok(())
}

pub fn check_layernorm(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(seed);
    let (rows, d) = (size(&mut rng, 1, 8), size(&mut rng, 2, 64));
    let shift = rng.uniform(-5.0, 5.0) as f32;
    let x: Vec<f32> = values(&mut rng, rows * d).iter().map(|v| v * 3.0 + shift).collect();
    let g = values(&mut rng, d);
    let b = values(&mut rng, d);
    let got = layernorm(
        &Tensor::from_slice(&[rows, d], &x).unwrap(),
        &Tensor::from_slice(&[d], &g).unwrap(),
        &Tensor::from_slice(&[d], &b).unwrap(),
        1e-5,
    )
    .map_err(|e| format!("layernorm failed: {e}"))?;
    let want = layernorm_ref(&wide(&x), d, &wide(&g), &wide(&b), 1e-5);
    within("layernorm", max_rel_err(got.data(), &want), LAYERNORM_TOL)
}

pub fn check_fold_unfold(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix64::new(seed);
    let (ph, pw) = (size(&mut rng, 1, 3), size(&mut rng, 1, 3));
    let (d, h, w) = (size(&mut rng, 1, 5), ph * size(&mut rng, 1, 6), pw * size(&mut rng, 1, 6));
    let x = Tensor::from_slice(&[d, h, w], &values(&mut rng, d * h * w)).unwrap();
    let u = unfold_patches(&x, ph, pw).map_err(|e| e.to_string())?;
    let back = fold_patches(&u, ph, pw, h, w).map_err(|e| e.to_string())?;
    if back == x {
        Ok(())
    } else {
        Err("fold(unfold(x)) != x".into())
    }
}
