use super::DecodeError;
use crate::codes::{polar_transform, PolarCodeSpec};

/// Min-sum `f`, with `sign(0) = +1`.
#[inline]
fn f_min_sum(a: f64, b: f64) -> f64 {
    let m = a.abs().min(b.abs());
    if (a < 0.0) != (b < 0.0) {
        -m
    } else {
        m
    }
}

#[inline]
fn g_step(a: f64, b: f64, beta: u8) -> f64 {
    if beta == 0 {
        b + a
    } else {
        b - a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScOutput {
    pub u_hat: Vec<u8>,
    /// Re-encoded estimate `u_hat G_N`.
    pub codeword: Vec<u8>,
    /// Decision LLR at each information position, in info-set order.
    pub info_llr: Vec<f64>,
}

/// Successive cancellation with per-size scratch slots.
pub struct ScDecoder<'a> {
    spec: &'a PolarCodeSpec,
    scratch: Vec<f64>,
    leaf: Vec<f64>,
    u: Vec<u8>,
    x: Vec<u8>,
}

impl<'a> ScDecoder<'a> {
    pub fn new(spec: &'a PolarCodeSpec) -> Self {
        let n = spec.n();
        Self {
            spec,
            scratch: vec![0.0; n],
            leaf: vec![0.0; n],
            u: vec![0; n],
            x: vec![0; n],
        }
    }

    pub fn decode(&mut self, llr: &[f64]) -> Result<ScOutput, DecodeError> {
        let n = self.spec.n();
        if llr.len() != n {
            return Err(DecodeError::Length {
                expected: n,
                got: llr.len(),
            });
        }
        let mut ctx = ScCtx {
            frozen: self.spec.frozen_mask(),
            leaf: &mut self.leaf,
            u: &mut self.u,
        };
        ctx.node(llr, &mut self.scratch, &mut self.x, 0);
        Ok(ScOutput {
            u_hat: self.u.clone(),
            codeword: self.x.clone(),
            info_llr: self.spec.info().iter().map(|&i| self.leaf[i]).collect(),
        })
    }
}

struct ScCtx<'s> {
    frozen: &'s [bool],
    leaf: &'s mut [f64],
    u: &'s mut [u8],
}

impl ScCtx<'_> {
    /// Decodes the subtree whose channel LLRs are `input`; partial sums go to `out`.
    fn node(&mut self, input: &[f64], scratch: &mut [f64], out: &mut [u8], base: usize) {
        let n = input.len();
        if n == 1 {
            let l = input[0];
            self.leaf[base] = l;
            let bit = if self.frozen[base] { 0 } else { u8::from(l < 0.0) };
            self.u[base] = bit;
            out[0] = bit;
            return;
        }
        let h = n / 2;
        let (lower, child) = scratch[..n].split_at_mut(h);
        for i in 0..h {
            child[i] = f_min_sum(input[i], input[i + h]);
        }
        let (left, right) = out.split_at_mut(h);
        self.node(child, lower, left, base);
        for i in 0..h {
            child[i] = g_step(input[i], input[i + h], left[i]);
        }
        self.node(child, lower, right, base + h);
        for i in 0..h {
            left[i] ^= right[i];
        }
    }
}

pub fn sc_decode(spec: &PolarCodeSpec, llr: &[f64]) -> Result<ScOutput, DecodeError> {
    ScDecoder::new(spec).decode(llr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SclOutput {
    pub u_hat: Vec<u8>,
    pub codeword: Vec<u8>,
    /// Final path metric of the returned path.
    pub metric: f64,
    /// Metric of the returned path after each leaf, in decoding order.
    pub metric_trace: Vec<f64>,
}

/// Successive cancellation list decoding.
///
/// Each tree node is processed once for all surviving paths; a node returns
/// its partial sums per output path and the input path each one descends from.
pub struct SclDecoder<'a> {
    spec: &'a PolarCodeSpec,
    list: usize,
    // indexed by log2 of the node size
    alpha: Vec<Vec<f64>>,
    beta: Vec<[Vec<u8>; 2]>,
    origin: Vec<[Vec<usize>; 2]>,
    metrics: Vec<f64>,
    cand: Vec<(f64, usize, u8)>,
    next_metrics: Vec<f64>,
    leaf_parent: Vec<usize>,
    leaf_metric: Vec<f64>,
}

impl<'a> SclDecoder<'a> {
    pub fn new(spec: &'a PolarCodeSpec, list: usize) -> Result<Self, DecodeError> {
        if list == 0 {
            return Err(DecodeError::Config("list size must be at least 1".into()));
        }
        let n = spec.n();
        let levels = n.trailing_zeros() as usize + 1;
        Ok(Self {
            spec,
            list,
            alpha: (0..levels).map(|l| vec![0.0; list << l]).collect(),
            beta: (0..levels)
                .map(|l| [vec![0; list << l], vec![0; list << l]])
                .collect(),
            origin: (0..levels).map(|_| [vec![0; list], vec![0; list]]).collect(),
            metrics: vec![0.0; list],
            cand: Vec::with_capacity(2 * list),
            next_metrics: vec![0.0; list],
            leaf_parent: vec![0; n * list],
            leaf_metric: vec![0.0; n * list],
        })
    }

    pub fn decode(&mut self, llr: &[f64]) -> Result<SclOutput, DecodeError> {
        let n = self.spec.n();
        if llr.len() != n {
            return Err(DecodeError::Length {
                expected: n,
                got: llr.len(),
            });
        }
        let top = n.trailing_zeros() as usize;
        self.alpha[top][..n].copy_from_slice(llr);
        self.metrics[0] = 0.0;
        let paths = self.node(top, 0, 0, 1);
        let best = (0..paths)
            .min_by(|&a, &b| self.metrics[a].total_cmp(&self.metrics[b]))
            .expect("at least one path");
        let codeword = self.beta[top][0][best * n..(best + 1) * n].to_vec();
        let mut u_hat = codeword.clone();
        polar_transform(&mut u_hat);
        let mut metric_trace = vec![0.0; n];
        let mut q = best;
        for t in (0..n).rev() {
            metric_trace[t] = self.leaf_metric[t * self.list + q];
            q = self.leaf_parent[t * self.list + q];
        }
        Ok(SclOutput {
            u_hat,
            codeword,
            metric: self.metrics[best],
            metric_trace,
        })
    }

    /// Processes the node of size `2^lvl` starting at leaf `base` for `paths`
    /// input paths; returns the number of output paths.
    fn node(&mut self, lvl: usize, base: usize, side: usize, paths: usize) -> usize {
        if lvl == 0 {
            return self.leaf(base, side, paths);
        }
        let s = 1usize << lvl;
        let h = s / 2;
        {
            let (lo, hi) = self.alpha.split_at_mut(lvl);
            let (inp, child) = (&hi[0], &mut lo[lvl - 1]);
            for p in 0..paths {
                let a = &inp[p * s..(p + 1) * s];
                let c = &mut child[p * h..(p + 1) * h];
                for i in 0..h {
                    c[i] = f_min_sum(a[i], a[i + h]);
                }
            }
        }
        let p1 = self.node(lvl - 1, base, 0, paths);
        {
            let (lo, hi) = self.alpha.split_at_mut(lvl);
            let (inp, child) = (&hi[0], &mut lo[lvl - 1]);
            let left = &self.beta[lvl - 1][0];
            let org = &self.origin[lvl - 1][0];
            for q in 0..p1 {
                let a = &inp[org[q] * s..(org[q] + 1) * s];
                let bl = &left[q * h..(q + 1) * h];
                let c = &mut child[q * h..(q + 1) * h];
                for i in 0..h {
                    c[i] = g_step(a[i], a[i + h], bl[i]);
                }
            }
        }
        let p2 = self.node(lvl - 1, base + h, 1, p1);
        let (lo, hi) = self.beta.split_at_mut(lvl);
        let out = &mut hi[0][side];
        let [left, right] = &lo[lvl - 1];
        let (olo, ohi) = self.origin.split_at_mut(lvl);
        let [ol, or] = &olo[lvl - 1];
        let org = &mut ohi[0][side];
        for q in 0..p2 {
            let m = or[q];
            let (bl, br) = (&left[m * h..(m + 1) * h], &right[q * h..(q + 1) * h]);
            let o = &mut out[q * s..(q + 1) * s];
            for i in 0..h {
                o[i] = bl[i] ^ br[i];
                o[i + h] = br[i];
            }
            org[q] = ol[m];
        }
        p2
    }

    fn leaf(&mut self, base: usize, side: usize, paths: usize) -> usize {
        let alpha = &self.alpha[0];
        let l = self.list;
        let out_paths = if self.spec.is_frozen(base) {
            for p in 0..paths {
                if alpha[p] < 0.0 {
                    self.metrics[p] += -alpha[p];
                }
                self.beta[0][side][p] = 0;
                self.origin[0][side][p] = p;
                self.leaf_parent[base * l + p] = p;
                self.leaf_metric[base * l + p] = self.metrics[p];
            }
            paths
        } else {
            self.cand.clear();
            for p in 0..paths {
                let a = alpha[p];
                let hard = u8::from(a < 0.0);
                self.cand.push((self.metrics[p], p, hard));
                self.cand.push((self.metrics[p] + a.abs(), p, 1 - hard));
            }
            // stable: a tie keeps the hard decision ahead of its flip
            self.cand.sort_by(|x, y| x.0.total_cmp(&y.0));
            let keep = self.cand.len().min(l);
            for (q, &(m, p, bit)) in self.cand[..keep].iter().enumerate() {
                self.next_metrics[q] = m;
                self.beta[0][side][q] = bit;
                self.origin[0][side][q] = p;
                self.leaf_parent[base * l + q] = p;
                self.leaf_metric[base * l + q] = m;
            }
            self.metrics[..keep].copy_from_slice(&self.next_metrics[..keep]);
            keep
        };
        out_paths
    }
}

pub fn scl_decode(spec: &PolarCodeSpec, llr: &[f64], list: usize) -> Result<SclOutput, DecodeError> {
    SclDecoder::new(spec, list)?.decode(llr)
}
