//! Building blocks of a block-attention module.

use super::blocks::positional_encoding;
use crate::autodiff::{AdError, Bound, ParamId, ParamSet, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Result<T> = std::result::Result<T, AdError>;

/// `x W + b` over the last axis.
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
}

impl Affine {
    /// Glorot-uniform weights, zero bias.
    pub fn new(ps: &mut ParamSet, name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let a = (6.0 / (din + dout) as f64).sqrt();
        let w = (0..din * dout).map(|_| rng.random_range(-a..a)).collect();
        Ok(Self {
            w: ps.add(format!("{name}.w"), &[din, dout], w)?,
            b: ps.add(format!("{name}.b"), &[dout], vec![0.0; dout])?,
        })
    }

    pub fn apply(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        x.matmul(p.get(self.w))?.add(p.get(self.b))
    }
}

/// Three affine layers, each followed by ReLU.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    layers: [Affine; 3],
}

impl FeatureExtractor {
    pub fn new(ps: &mut ParamSet, name: &str, width: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            layers: [
                Affine::new(ps, &format!("{name}.fe0"), width, d, rng)?,
                Affine::new(ps, &format!("{name}.fe1"), d, d, rng)?,
                Affine::new(ps, &format!("{name}.fe2"), d, d, rng)?,
            ],
        })
    }

    pub fn apply(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.apply(p, &h)?.relu();
        }
        Ok(h)
    }
}

/// Noise-conditioned gate: `x * sigmoid(A2 relu(A1 [x, sigma]))`.
#[derive(Clone, Debug)]
pub struct AttentionFeature {
    a1: Affine,
    a2: Affine,
}

impl AttentionFeature {
    pub fn new(ps: &mut ParamSet, name: &str, d: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            a1: Affine::new(ps, &format!("{name}.a1"), d + 1, d, rng)?,
            a2: Affine::new(ps, &format!("{name}.a2"), d, d, rng)?,
        })
    }

    pub fn mask(&self, p: &Bound, x: &Tensor, sigma: &Tensor) -> Result<Tensor> {
        let h = Tensor::concat(&[x, sigma], 2)?;
        Ok(self.a2.apply(p, &self.a1.apply(p, &h)?.relu())?.sigmoid())
    }

    /// `sigma` is `[B, n_b, 1]`.
    pub fn apply(&self, p: &Bound, x: &Tensor, sigma: &Tensor) -> Result<Tensor> {
        x.mul(&self.mask(p, x, sigma)?)
    }
}

#[derive(Clone, Debug)]
struct Head {
    q: ParamId,
    k: ParamId,
    v: ParamId,
}

/// Gate, self-attention over blocks, residual + layernorm, FFN,
/// residual + layernorm.
#[derive(Clone, Debug)]
pub struct S2sLayer {
    af: AttentionFeature,
    heads: Vec<Head>,
    d_khead: usize,
    out: Affine,
    ln1: (ParamId, ParamId),
    ffn1: Affine,
    ffn2: Affine,
    ln2: (ParamId, ParamId),
}

impl S2sLayer {
    pub fn new(ps: &mut ParamSet, name: &str, d: usize, n_heads: usize, d_khead: usize, ffn: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let af = AttentionFeature::new(ps, &format!("{name}.af"), d, rng)?;
        let a = (6.0 / (d + d_khead) as f64).sqrt();
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let mut mat = |tag: &str| {
                let w = (0..d * d_khead).map(|_| rng.random_range(-a..a)).collect();
                ps.add(format!("{name}.h{h}.{tag}"), &[d, d_khead], w)
            };
            heads.push(Head {
                q: mat("q")?,
                k: mat("k")?,
                v: mat("v")?,
            });
        }
        let out = Affine::new(ps, &format!("{name}.o"), n_heads * d_khead, d, rng)?;
        let ln1 = (
            ps.add(format!("{name}.ln1.g"), &[d], vec![1.0; d])?,
            ps.add(format!("{name}.ln1.b"), &[d], vec![0.0; d])?,
        );
        let ffn1 = Affine::new(ps, &format!("{name}.ffn1"), d, ffn * d, rng)?;
        let ffn2 = Affine::new(ps, &format!("{name}.ffn2"), ffn * d, d, rng)?;
        let ln2 = (
            ps.add(format!("{name}.ln2.g"), &[d], vec![1.0; d])?,
            ps.add(format!("{name}.ln2.b"), &[d], vec![0.0; d])?,
        );
        Ok(Self {
            af,
            heads,
            d_khead,
            out,
            ln1,
            ffn1,
            ffn2,
            ln2,
        })
    }

    /// `x` is `[B, n_b, d]`, `sigma` is `[B, n_b, 1]`.
    pub fn apply(&self, p: &Bound, x: &Tensor, sigma: &Tensor) -> Result<Tensor> {
        let x = self.af.apply(p, x, sigma)?;
        let scale = 1.0 / (self.d_khead as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let q = x.matmul(p.get(h.q))?;
            let k = x.matmul(p.get(h.k))?;
            let v = x.matmul(p.get(h.v))?;
            let att = q.bmm(&k.transpose_last2()?)?.scale(scale).softmax(2)?;
            outs.push(att.bmm(&v)?);
        }
        let cat = if outs.len() == 1 {
            outs.pop().unwrap()
        } else {
            Tensor::concat(&outs.iter().collect::<Vec<_>>(), 2)?
        };
        let h = x.add(&self.out.apply(p, &cat)?)?.layernorm(p.get(self.ln1.0), p.get(self.ln1.1))?;
        let f = self.ffn2.apply(p, &self.ffn1.apply(p, &h)?.relu())?;
        h.add(&f)?.layernorm(p.get(self.ln2.0), p.get(self.ln2.1))
    }
}

/// One neural module: partition, FE, positional encoding, S2S layers and
/// the output map.
#[derive(Clone, Debug)]
pub struct BlockNet {
    pub in_width: usize,
    pub out_width: usize,
    fe: FeatureExtractor,
    layers: Vec<S2sLayer>,
    fmap: Affine,
    n_b: usize,
    pe: Vec<f64>,
}

pub struct NetShape {
    pub n_b: usize,
    pub in_width: usize,
    pub out_width: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_khead: usize,
    pub layers: usize,
    pub ffn: usize,
    pub pe_len: f64,
}

impl BlockNet {
    pub fn new(ps: &mut ParamSet, name: &str, s: &NetShape, rng: &mut ChaCha8Rng) -> Result<Self> {
        let fe = FeatureExtractor::new(ps, &format!("{name}.fe"), s.in_width, s.d_model, rng)?;
        let layers = (0..s.layers)
            .map(|l| S2sLayer::new(ps, &format!("{name}.l{l}"), s.d_model, s.n_heads, s.d_khead, s.ffn, rng))
            .collect::<Result<_>>()?;
        let fmap = Affine::new(ps, &format!("{name}.fmap"), s.d_model, s.out_width, rng)?;
        Ok(Self {
            in_width: s.in_width,
            out_width: s.out_width,
            fe,
            layers,
            fmap,
            n_b: s.n_b,
            pe: positional_encoding(s.n_b, s.d_model, s.pe_len).to_vec(),
        })
    }

    /// Blocks `[B, n_b, in_width]` to `[B, n_b, out_width]` (before any
    /// output activation).
    pub fn forward(&self, p: &Bound, blocks: &Tensor, sigma: &[f64]) -> Result<Tensor> {
        let [b, nb, w] = *blocks.shape() else {
            return Err(AdError::ShapeMismatch(format!("blocks {:?}", blocks.shape())));
        };
        if w != self.in_width || sigma.len() != b {
            return Err(AdError::ShapeMismatch(format!(
                "blocks {:?} with {} noise levels, module width {}",
                blocks.shape(),
                sigma.len(),
                self.in_width
            )));
        }
        let sig = Tensor::new(sigma.iter().flat_map(|&s| std::iter::repeat_n(s, nb)).collect(), &[b, nb, 1])?;
        if nb != self.n_b {
            return Err(AdError::ShapeMismatch(format!("{nb} blocks, module built for {}", self.n_b)));
        }
        let pe = Tensor::new(self.pe.clone(), &[nb, self.pe.len() / nb])?;
        let mut h = self.fe.apply(p, blocks)?.add(&pe)?;
        for l in &self.layers {
            h = l.apply(p, &h, &sig)?;
        }
        self.fmap.apply(p, &h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_gradients;
    use crate::autodiff::Precision;
    use rand::SeedableRng;

    fn shape(n_b: usize, w: usize, out: usize, d: usize, layers: usize) -> NetShape {
        NetShape {
            n_b,
            in_width: w,
            out_width: out,
            d_model: d,
            n_heads: 1,
            d_khead: d,
            layers,
            ffn: 4,
            pe_len: 200.0,
        }
    }

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_fe_gives_zero() {
        let mut ps = ParamSet::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fe = FeatureExtractor::new(&mut ps, "fe", 3, 16, &mut rng).unwrap();
        for id in ps.ids().collect::<Vec<_>>() {
            let z = vec![0.0; ps.values(id).len()];
            ps.set_values(id, &z).unwrap();
        }
        let x = Tensor::new(rand_vec(2 * 5 * 3, 1), &[2, 5, 3]).unwrap();
        let y = fe.apply(&ps.bind(None), &x).unwrap();
        assert_eq!(y.shape(), &[2, 5, 16]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gate_halves() {
        let mut ps = ParamSet::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let af = AttentionFeature::new(&mut ps, "af", 4, &mut rng).unwrap();
        let w2 = ps.find("af.a2.w").unwrap();
        ps.set_values(w2, &[0.0; 16]).unwrap();
        let x = Tensor::new(rand_vec(8, 2), &[1, 2, 4]).unwrap();
        let s = Tensor::full(&[1, 2, 1], 0.7);
        let y = af.apply(&ps.bind(None), &x, &s).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_block_attention_is_value_path() {
        let mut ps = ParamSet::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = S2sLayer::new(&mut ps, "s", 4, 1, 4, 4, &mut rng).unwrap();
        let p = ps.bind(None);
        let x = Tensor::new(rand_vec(4, 4), &[1, 1, 4]).unwrap();
        let s = Tensor::full(&[1, 1, 1], 0.5);
        let got = layer.apply(&p, &x, &s).unwrap();
        // with one block the attention weights are exactly 1
        let g = layer.af.apply(&p, &x, &s).unwrap();
        let v = g.matmul(p.get(layer.heads[0].v)).unwrap();
        let h = g.add(&layer.out.apply(&p, &v).unwrap()).unwrap().layernorm(p.get(layer.ln1.0), p.get(layer.ln1.1)).unwrap();
        let f = layer.ffn2.apply(&p, &layer.ffn1.apply(&p, &h).unwrap().relu()).unwrap();
        let want = h.add(&f).unwrap().layernorm(p.get(layer.ln2.0), p.get(layer.ln2.1)).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut ps = ParamSet::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = S2sLayer::new(&mut ps, "s", 4, 2, 3, 4, &mut rng).unwrap();
        let p = ps.bind(None);
        let x = rand_vec(3 * 4, 6);
        let perm = [2usize, 0, 1];
        let xp: Vec<f64> = perm.iter().flat_map(|&i| x[i * 4..i * 4 + 4].to_vec()).collect();
        let s = Tensor::full(&[1, 3, 1], 0.4);
        let y = layer.apply(&p, &Tensor::new(x, &[1, 3, 4]).unwrap(), &s).unwrap();
        let yp = layer.apply(&p, &Tensor::new(xp, &[1, 3, 4]).unwrap(), &s).unwrap();
        for (r, &i) in perm.iter().enumerate() {
            for c in 0..4 {
                assert!((yp.data()[r * 4 + c] - y.data()[i * 4 + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn submodule_gradients() {
        let mut ps = ParamSet::new(Precision::F64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = BlockNet::new(&mut ps, "net", &shape(2, 3, 3, 8, 1), &mut rng).unwrap();
        let x = rand_vec(2 * 2 * 3, 8);
        let params: Vec<(Vec<f64>, Vec<usize>)> = ps.ids().map(|id| (ps.values(id).to_vec(), ps.shape(id).to_vec())).collect();
        let mut inputs = vec![(x, vec![2, 2, 3])];
        inputs.extend(params);
        check_gradients(
            &inputs,
            |t| {
                let bound = Bound::from_tensors(t[1..].to_vec());
                net.forward(&bound, &t[0], &[0.6, 0.9]).unwrap()
            },
            1e-3,
        )
        .unwrap();
    }
}
