//! Block partitioning, positional encoding and the probability/LLR
//! conversions between the neural and channel-decoder domains.

use crate::autodiff::{AdError, Tensor};
use crate::channel::L_MAX;

/// Number of blocks of width `m` covering `n` positions.
pub fn num_blocks(n: usize, m: usize) -> usize {
    n.div_ceil(m)
}

/// Trailing positions added to reach a multiple of `m`.
pub fn pad_count(n: usize, m: usize) -> usize {
    num_blocks(n, m) * m - n
}

/// `[B, n] -> [B, n_b, m]`, padding each frame with `+1.0`.
pub fn partition_pad(v: &Tensor, m: usize) -> Result<Tensor, AdError> {
    if m == 0 {
        return Err(AdError::Invalid("block width 0".into()));
    }
    let [b, n] = *v.shape() else {
        return Err(AdError::ShapeMismatch(format!("partition of {:?}", v.shape())));
    };
    let pad = pad_count(n, m);
    let padded = if pad == 0 {
        v.clone()
    } else {
        Tensor::concat(&[v, &Tensor::full(&[b, pad], 1.0)], 1)?
    };
    padded.reshape(&[b, num_blocks(n, m), m])
}

/// `[B, n_b, m] -> [B, n]`, dropping the padded tail.
pub fn flatten_strip(x: &Tensor, n: usize) -> Result<Tensor, AdError> {
    let [b, nb, m] = *x.shape() else {
        return Err(AdError::ShapeMismatch(format!("strip of {:?}", x.shape())));
    };
    if nb * m < n {
        return Err(AdError::ShapeMismatch(format!("{nb}x{m} blocks cannot hold {n}")));
    }
    let flat = x.reshape(&[b, nb * m])?;
    if nb * m == n {
        Ok(flat)
    } else {
        flat.slice(1, 0, n)
    }
}

/// Fixed sinusoidal encoding, `[n_b, d]`, column `c` uses `1000^(c/len)`.
pub fn positional_encoding(n_b: usize, d: usize, len: f64) -> Tensor {
    let mut v = Vec::with_capacity(n_b * d);
    for i in 0..n_b {
        for c in 0..d {
            let arg = i as f64 / 1000f64.powf(c as f64 / len);
            v.push(if c % 2 == 0 { arg.sin() } else { arg.cos() });
        }
    }
    Tensor::new(v, &[n_b, d]).expect("sized")
}

/// The `2^m` words of `m` bits, most significant bit first, as a
/// `[2^m, m]` 0/1 matrix.
pub fn word_table(m: usize) -> Tensor {
    let w = 1usize << m;
    let v = (0..w)
        .flat_map(|j| (0..m).map(move |t| ((j >> (m - 1 - t)) & 1) as f64))
        .collect();
    Tensor::new(v, &[w, m]).expect("sized")
}

/// Smallest bit probability kept by [`f_m2d`]; maps to an LLR of `L_MAX`.
pub fn p_floor() -> f64 {
    let e = (-L_MAX).exp();
    e / (1.0 + e)
}

/// Per-bit probabilities of a one from word probabilities `[B, n_b, 2^m]`,
/// flattened to `[B, n]`.
pub fn bit_marginals(p: &Tensor, m: usize, n: usize) -> Result<Tensor, AdError> {
    if p.shape().last() != Some(&(1 << m)) {
        return Err(AdError::ShapeMismatch(format!("{:?} is not over 2^{m} words", p.shape())));
    }
    flatten_strip(&p.matmul(&word_table(m))?, n)
}

/// Word probabilities to channel LLRs `log((1 - p) / p)`, `[B, n]`.
///
/// Both marginals are summed directly from the word probabilities so that
/// saturated bits reach `±L_MAX` without cancellation.
pub fn f_m2d(p: &Tensor, m: usize, n: usize) -> Result<Tensor, AdError> {
    let lo = p_floor();
    let p1 = bit_marginals(p, m, n)?.clip(lo, 1.0 - lo);
    let zeros = word_table(m).neg().add_scalar(1.0);
    let p0 = flatten_strip(&p.matmul(&zeros)?, n)?.clip(lo, 1.0 - lo);
    p0.log().sub(&p1.log())
}

/// Channel-decoder LLRs to the expected symbol `-tanh(x / 2)`.
pub fn f_d2m(x: &Tensor) -> Tensor {
    x.scale(0.5).tanh().neg()
}
