use super::EvalError;
use crate::autodiff::Tensor;
use crate::channel::bpsk_map;
use crate::codes::LinearCode;
use crate::nn::{NormMode, TransCoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Map from codewords to channel symbols.
#[derive(Clone, Copy)]
pub enum Mapper<'a> {
    Bpsk,
    /// Calibrated neural encoder fed with noise level `sigma`.
    Encoder { model: &'a TransCoder, sigma: f64 },
}

impl Mapper<'_> {
    fn map(&self, words: &[u8], n: usize) -> Result<Vec<f64>, EvalError> {
        match self {
            Mapper::Bpsk => Ok(bpsk_map(words)),
            Mapper::Encoder { model, sigma } => {
                if model.calibrated_sigma().is_none() {
                    return Err(EvalError::Uncalibrated);
                }
                let p = model.bind(None);
                let mut out = Vec::with_capacity(words.len());
                for chunk in words.chunks(1000 * n) {
                    let b = chunk.len() / n;
                    let s = model.encode(&p, chunk, &vec![*sigma; b], NormMode::Frozen)?.0;
                    out.extend_from_slice(&Tensor::to_vec(&s));
                }
                Ok(out)
            }
        }
    }
}

/// Pairwise distances between mapped codewords, scaled by `1 / (2 sqrt n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceHistogram {
    /// Equal-width bins over `[0, 1]`; larger distances land in the last bin.
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub distances: Vec<f64>,
    pub exhaustive: bool,
}

impl DistanceHistogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let b = self.counts.len();
        (0..=b).map(|i| i as f64 / b as f64).collect()
    }

    /// Distinct distances, merging values closer than `tol`.
    pub fn support(&self, tol: f64) -> Vec<f64> {
        let mut d = self.distances.clone();
        d.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::new();
        for v in d {
            if out.last().is_none_or(|&l| v - l > tol) {
                out.push(v);
            }
        }
        out
    }
}

/// Every pair of distinct codewords when there are at most `pairs` of them,
/// otherwise `pairs` random pairs of distinct messages.
pub fn distance_histogram(code: &LinearCode, mapper: Mapper, pairs: usize, bins: usize, seed: u64) -> Result<DistanceHistogram, EvalError> {
    let (n, k) = (code.n(), code.k());
    if k == 0 {
        return Err(EvalError::Config("a code with one codeword has no pairs".into()));
    }
    if bins == 0 || pairs == 0 {
        return Err(EvalError::Config("bins and pairs must be positive".into()));
    }
    let msg = |x: u64| -> Vec<u8> { (0..k).map(|i| ((x >> i) & 1) as u8).collect() };
    let total = if k < 32 { Some((1u64 << k) * ((1u64 << k) - 1) / 2) } else { None };
    let exhaustive = total.is_some_and(|t| t <= pairs as u64);
    let mut words = Vec::new();
    let mut index = Vec::new();
    if exhaustive {
        let count = 1u64 << k;
        for x in 0..count {
            words.extend(code.encode(&msg(x)).expect("message length k"));
        }
        for a in 0..count as usize {
            for b in a + 1..count as usize {
                index.push((a, b));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in 0..pairs {
            let a: Vec<u8> = (0..k).map(|_| rng.random_range(0..2u8)).collect();
            let mut b = a.clone();
            while b == a {
                b = (0..k).map(|_| rng.random_range(0..2u8)).collect();
            }
            words.extend(code.encode(&a).expect("message length k"));
            words.extend(code.encode(&b).expect("message length k"));
            index.push((2 * p, 2 * p + 1));
        }
    }
    let s = mapper.map(&words, n)?;
    let norm = 2.0 * (n as f64).sqrt();
    let mut h = DistanceHistogram {
        counts: vec![0; bins],
        overflow: 0,
        distances: Vec::with_capacity(index.len()),
        exhaustive,
    };
    for (a, b) in index {
        let d = s[a * n..(a + 1) * n]
            .iter()
            .zip(&s[b * n..(b + 1) * n])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            / norm;
        if d > 1.0 {
            h.overflow += 1;
        }
        h.counts[((d * bins as f64) as usize).min(bins - 1)] += 1;
        h.distances.push(d);
    }
    Ok(h)
}
