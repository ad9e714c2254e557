//! Differentiable decoders on [`Tensor`]s, batched over the leading axis.
//!
//! Tensor BP reproduces the fast decoder's forward values exactly (same
//! kernels, same accumulation order) without early stopping. Soft SC
//! replaces hard partial sums by soft symbols `tanh(L/2)` and uses the exact
//! sum-product `f`.

use super::bp::ATANH_CLAMP;
use super::{check_update_min_sum, check_update_sum_product, BpConfig, BpVariant, DecodeError};
use crate::autodiff::{AdError, Tensor};
use crate::channel::L_MAX;
use crate::codes::{PolarCodeSpec, TannerGraph};
use std::rc::Rc;

fn batch_of(x: &Tensor, n: usize) -> Result<usize, DecodeError> {
    match x.shape() {
        [b, m] if *m == n => Ok(*b),
        [m] if *m == n => Ok(1),
        s => Err(DecodeError::Length {
            expected: n,
            got: s.last().copied().unwrap_or(0),
        }),
    }
}

/// Check-node update for every check and every frame of `v2c` (`[B, E]`,
/// edges check-major with boundaries `offsets`).
pub fn bp_check(v2c: &Tensor, offsets: Rc<[usize]>, variant: BpVariant) -> Result<Tensor, AdError> {
    let e = *offsets.last().unwrap_or(&0);
    if v2c.shape().last() != Some(&e) {
        return Err(AdError::ShapeMismatch(format!("{:?} messages for {e} edges", v2c.shape())));
    }
    let rows = v2c.numel() / e.max(1);
    let x = v2c.data_rc();
    let mut y = vec![0.0; x.len()];
    for r in 0..rows {
        for w in offsets.windows(2) {
            let (inp, out) = (&x[r * e + w[0]..r * e + w[1]], &mut y[r * e + w[0]..r * e + w[1]]);
            match variant {
                BpVariant::SumProduct => check_update_sum_product(inp, out),
                BpVariant::MinSum => check_update_min_sum(inp, out),
            }
        }
    }
    let y = Rc::new(y);
    let yc = y.clone();
    Tensor::from_op_rc(&[v2c], y, v2c.shape().to_vec(), move |g, _| {
        let mut gx = vec![0.0; g.len()];
        for r in 0..rows {
            for w in offsets.windows(2) {
                let s = r * e + w[0]..r * e + w[1];
                let (inp, out, gi) = (&x[s.clone()], &yc[s.clone()], &g[s.clone()]);
                match variant {
                    BpVariant::SumProduct => sum_product_backward(inp, out, gi, &mut gx[s]),
                    BpVariant::MinSum => min_sum_backward(inp, out, gi, &mut gx[s]),
                }
            }
        }
        vec![Some(gx)]
    })
}

fn sum_product_backward(inp: &[f64], out: &[f64], g: &[f64], gx: &mut [f64]) {
    let d = inp.len();
    let t: Vec<f64> = inp.iter().map(|&m| (m.clamp(-L_MAX, L_MAX) * 0.5).tanh()).collect();
    let mut pre = vec![1.0; d + 1];
    let mut suf = vec![1.0; d + 1];
    for i in 0..d {
        pre[i + 1] = pre[i] * t[i];
        suf[d - 1 - i] = suf[d - i] * t[d - 1 - i];
    }
    let mut acc = vec![0.0; d];
    let mut q = vec![0.0; d];
    for i in 0..d {
        let p = pre[i] * suf[i + 1];
        if p.abs() > ATANH_CLAMP || out[i].abs() >= L_MAX {
            continue;
        }
        let w = g[i] * 2.0 / (1.0 - p * p);
        if w == 0.0 {
            continue;
        }
        // q[j] = product of t over everything except i and j
        let mut run = 1.0;
        for j in 0..d {
            q[j] = run;
            if j != i {
                run *= t[j];
            }
        }
        let mut run = 1.0;
        for j in (0..d).rev() {
            q[j] *= run;
            if j != i {
                run *= t[j];
            }
        }
        for j in (0..d).filter(|&j| j != i) {
            acc[j] += w * q[j];
        }
    }
    for j in 0..d {
        if inp[j].abs() <= L_MAX {
            gx[j] = acc[j] * 0.5 * (1.0 - t[j] * t[j]);
        }
    }
}

fn min_sum_backward(inp: &[f64], out: &[f64], g: &[f64], gx: &mut [f64]) {
    let mag: Vec<f64> = inp.iter().map(|m| m.clamp(-L_MAX, L_MAX).abs()).collect();
    let Some(arg) = (0..inp.len()).reduce(|a, i| if mag[i] < mag[a] { i } else { a }) else {
        return;
    };
    let arg2 = (0..inp.len()).filter(|&i| i != arg).reduce(|a, i| if mag[i] < mag[a] { i } else { a });
    let sgn = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    for i in 0..inp.len() {
        let src = if i == arg {
            match arg2 {
                Some(a) => a,
                None => continue,
            }
        } else {
            arg
        };
        if inp[src].abs() <= L_MAX {
            gx[src] += g[i] * sgn(out[i]) * sgn(inp[src]);
        }
    }
}

pub struct SoftBpOutput {
    /// Clamped posterior LLRs after the last iteration, `[B, n]`.
    pub posterior: Tensor,
    /// Posterior after every iteration.
    pub trace: Vec<Tensor>,
}

/// Flooding BP on a batch of channel LLRs (`[B, n]` or `[n]`).
pub fn bp_decode_soft(graph: &TannerGraph, llr: &Tensor, cfg: &BpConfig) -> Result<SoftBpOutput, DecodeError> {
    if cfg.iterations == 0 {
        return Err(DecodeError::Config("BP needs at least one iteration".into()));
    }
    let n = graph.num_vars();
    batch_of(llr, n)?;
    let ev: Rc<[usize]> = Rc::from(graph.edge_var());
    let offsets: Rc<[usize]> = Rc::from(graph.check_offsets());
    let mut v2c = llr.gather_cols(ev.clone())?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let c2v = bp_check(&v2c, offsets.clone(), cfg.variant)?;
        let total = c2v.scatter_add_cols(ev.clone(), n)?;
        let s = llr.add(&total)?;
        trace.push(s.clip(-L_MAX, L_MAX));
        v2c = s.gather_cols(ev.clone())?.sub(&c2v)?;
    }
    Ok(SoftBpOutput {
        posterior: trace.last().expect("at least one iteration").clone(),
        trace,
    })
}

pub struct SoftScOutput {
    /// Decision LLR of every `u` position, `[B, N]`.
    pub u_llr: Tensor,
    /// `u_llr` restricted to the information set, `[B, k]`.
    pub info_llr: Tensor,
    /// LLRs of the soft re-encoded codeword, `[B, N]`.
    pub codeword_llr: Tensor,
}

/// Soft successive cancellation. Frozen bits are fixed to 0; information
/// bits propagate `tanh(L/2)` as their partial-sum symbol.
pub fn soft_sc_decode(spec: &PolarCodeSpec, llr: &Tensor) -> Result<SoftScOutput, DecodeError> {
    let n = spec.n();
    let b = batch_of(llr, n)?;
    let llr = llr.reshape(&[b, n])?;
    let mut ctx = SoftScCtx {
        frozen: spec.frozen_mask(),
        leaves: Vec::with_capacity(n),
        ones: Tensor::full(&[b, 1], 1.0),
    };
    let s = ctx.node(&llr, 0)?;
    let leaves: Vec<&Tensor> = ctx.leaves.iter().collect();
    let u_llr = Tensor::concat(&leaves, 1)?;
    let info: Vec<&Tensor> = spec.info().iter().map(|&i| &ctx.leaves[i]).collect();
    let info_llr = if info.is_empty() {
        Tensor::zeros(&[b, 0])
    } else {
        Tensor::concat(&info, 1)?
    };
    let codeword_llr = s.atanh_clamped(ATANH_CLAMP).scale(2.0).clip(-L_MAX, L_MAX);
    Ok(SoftScOutput {
        u_llr,
        info_llr,
        codeword_llr,
    })
}

struct SoftScCtx<'a> {
    frozen: &'a [bool],
    leaves: Vec<Tensor>,
    ones: Tensor,
}

impl SoftScCtx<'_> {
    /// Returns the soft partial-sum symbols (`+1` for bit 0) of the subtree.
    fn node(&mut self, input: &Tensor, base: usize) -> Result<Tensor, AdError> {
        let n = input.shape()[1];
        if n == 1 {
            self.leaves.push(input.clone());
            return Ok(if self.frozen[base] {
                self.ones.clone()
            } else {
                input.scale(0.5).tanh()
            });
        }
        let h = n / 2;
        let a = input.slice(1, 0, h)?;
        let b = input.slice(1, h, h)?;
        let f = a
            .scale(0.5)
            .tanh()
            .mul(&b.scale(0.5).tanh())?
            .atanh_clamped(ATANH_CLAMP)
            .scale(2.0)
            .clip(-L_MAX, L_MAX);
        let sl = self.node(&f, base)?;
        let g = b.add(&sl.mul(&a)?)?;
        let sr = self.node(&g, base + h)?;
        Tensor::concat(&[&sl.mul(&sr)?, &sr], 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_gradients;
    use crate::channel::{add_noise, bpsk_map, llr_from_samples, sigma_from_ebn0};
    use crate::codes::{load_code, LinearCode};
    use crate::decoders::{bp_decode, sc_decode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(code: &LinearCode, ebn0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
        let sigma = sigma_from_ebn0(ebn0, code.rate());
        let mut y = bpsk_map(&code.encode(&msg).unwrap());
        add_noise(&mut y, sigma, rng).unwrap();
        llr_from_samples(&y, sigma)
    }

    #[test]
    fn tensor_bp_matches_fast_path_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in ["hamming_7_4", "ldpc_49_24"] {
            let code = load_code(name).unwrap();
            for variant in [BpVariant::SumProduct, BpVariant::MinSum] {
                let cfg = BpConfig {
                    iterations: 6,
                    variant,
                    early_stop: false,
                };
                let frames: Vec<Vec<f64>> = (0..5).map(|_| noisy(&code, 2.0, &mut rng)).collect();
                let flat: Vec<f64> = frames.concat();
                let t = Tensor::new(flat, &[5, code.n()]).unwrap();
                let soft = bp_decode_soft(code.graph(), &t, &cfg).unwrap();
                for (f, llr) in frames.iter().enumerate() {
                    let fast = bp_decode(code.graph(), llr, &cfg, true).unwrap();
                    let row = &soft.posterior.data()[f * code.n()..(f + 1) * code.n()];
                    assert_eq!(row, &fast.posterior[..], "{name} {variant:?}");
                    for (it, tr) in soft.trace.iter().enumerate() {
                        assert_eq!(&tr.data()[f * code.n()..(f + 1) * code.n()], &fast.trace[it][..]);
                    }
                }
            }
        }
    }

    #[test]
    fn bp_check_gradients() {
        let offsets: Rc<[usize]> = Rc::from(vec![0usize, 3, 7, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..18).map(|_| rng.random_range(-3.0..3.0)).collect();
        check_gradients(&[(x.clone(), vec![2, 9])], |t| bp_check(&t[0], offsets.clone(), BpVariant::SumProduct).unwrap(), 1e-4).unwrap();
        check_gradients(&[(x, vec![2, 9])], |t| bp_check(&t[0], offsets.clone(), BpVariant::MinSum).unwrap(), 1e-4).unwrap();
    }

    #[test]
    fn tensor_bp_gradients() {
        let code = load_code("hamming_7_4").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = [noisy(&code, 1.0, &mut rng), noisy(&code, 1.0, &mut rng)].concat();
        check_gradients(
            &[(x, vec![2, 7])],
            |t| bp_decode_soft(code.graph(), &t[0], &BpConfig::sum_product(3)).unwrap().posterior,
            1e-3,
        )
        .unwrap();
    }

    #[test]
    fn soft_sc_zero_in_zero_out() {
        let code = load_code("polar_16_8").unwrap();
        let out = soft_sc_decode(code.polar_spec().unwrap(), &Tensor::zeros(&[2, 16])).unwrap();
        assert!(out.u_llr.data().iter().all(|&v| v == 0.0));
        assert!(out.codeword_llr.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.info_llr.shape(), &[2, 8]);
    }

    #[test]
    fn soft_sc_agrees_with_sc_in_sign() {
        let code = load_code("polar_128_64").unwrap();
        let spec = code.polar_spec().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frames = 2000;
        let batch: Vec<Vec<f64>> = (0..frames).map(|_| noisy(&code, 4.0, &mut rng)).collect();
        let t = Tensor::new(batch.concat(), &[frames, 128]).unwrap();
        let soft = soft_sc_decode(spec, &t).unwrap();
        let (mut agree, mut total) = (0usize, 0usize);
        for (f, llr) in batch.iter().enumerate() {
            let hard = sc_decode(spec, llr).unwrap();
            for (j, &i) in spec.info().iter().enumerate() {
                let s = soft.info_llr.data()[f * 64 + j];
                agree += usize::from(u8::from(s < 0.0) == hard.u_hat[i]);
                total += 1;
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn soft_sc_gradients() {
        let code = load_code("polar_8_4").unwrap();
        let spec = code.polar_spec().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = [noisy(&code, 1.0, &mut rng), noisy(&code, 1.0, &mut rng)].concat();
        check_gradients(
            &[(x.clone(), vec![2, 8])],
            |t| soft_sc_decode(spec, &t[0]).unwrap().info_llr,
            1e-3,
        )
        .unwrap();
        check_gradients(&[(x, vec![2, 8])], |t| soft_sc_decode(spec, &t[0]).unwrap().codeword_llr, 1e-3).unwrap();
    }
}
