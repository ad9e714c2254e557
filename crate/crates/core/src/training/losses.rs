use crate::autodiff::{AdError, Tensor};
use crate::codes::ParityCheckMatrix;
use crate::nn::{blocks::p_floor, f_d2m};

type Result<T> = std::result::Result<T, AdError>;

fn targets(c: &[u8], shape: &[usize]) -> Result<Tensor> {
    Tensor::new(c.iter().map(|&b| f64::from(b)).collect(), shape)
}

fn batch_rows(x: &Tensor) -> Result<usize> {
    match *x.shape() {
        [b, _] => Ok(b),
        _ => Err(AdError::ShapeMismatch(format!("expected [B, n], got {:?}", x.shape()))),
    }
}

/// Binary cross-entropy of bit-one probabilities `p` against codewords `c`
/// (`[B, n]`, row-major), summed over bits and averaged over frames.
pub fn loss_tc(p: &Tensor, c: &[u8]) -> Result<Tensor> {
    let b = batch_rows(p)?;
    let lo = p_floor();
    let p = p.clip(lo, 1.0 - lo);
    let t = targets(c, p.shape())?;
    let one_minus_t = t.neg().add_scalar(1.0);
    let ll = t.mul(&p.log())?.add(&one_minus_t.mul(&p.neg().add_scalar(1.0).log())?)?;
    Ok(ll.sum().scale(-1.0 / b as f64))
}

/// Cross-entropy of decoder LLRs `x` (bit-one probability `sigmoid(-x)`).
pub fn loss_cd(x: &Tensor, c: &[u8]) -> Result<Tensor> {
    let b = batch_rows(x)?;
    let t = targets(c, x.shape())?;
    // -log sigmoid(-x) = softplus(x), -log sigmoid(x) = softplus(-x)
    let ones = t.mul(&x.softplus())?;
    let zeros = t.neg().add_scalar(1.0).mul(&x.neg().softplus())?;
    Ok(ones.add(&zeros)?.sum().scale(1.0 / b as f64))
}

/// Attainable soft-parity values `0, 2, ..., 2 floor(w_max / 2)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SoftParityAlphabet {
    values: Vec<usize>,
}

impl SoftParityAlphabet {
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let w = h.row_weights().into_iter().max().unwrap_or(0);
        Self {
            values: (0..=w / 2).map(|i| 2 * i).collect(),
        }
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn class_of(&self, v: usize) -> Option<usize> {
        self.values.binary_search(&v).ok()
    }
}

/// Maps decoder LLRs into `[0, 1]`, approaching the bit value as `|x|`
/// grows: `(clip(-tanh(x / 2), -1, 1) + 1) / 2`.
pub fn project(x: &Tensor) -> Tensor {
    f_d2m(x).clip(-1.0, 1.0).add_scalar(1.0).scale(0.5)
}

/// Soft-parity cross-entropy. Logits are negative distances between each
/// row's soft parity and the alphabet values; averaged over rows and frames.
pub fn loss_h(x: &Tensor, c: &[u8], h: &ParityCheckMatrix, alphabet: &SoftParityAlphabet) -> Result<Tensor> {
    let b = batch_rows(x)?;
    let (rows, n) = (h.rows(), h.cols());
    if x.shape()[1] != n || c.len() != b * n {
        return Err(AdError::ShapeMismatch(format!("{:?} against H with {n} columns", x.shape())));
    }
    let bits = h.bits();
    let ht: Vec<f64> = (0..n)
        .flat_map(|j| (0..rows).map(move |r| if bits.get(r, j) { 1.0 } else { 0.0 }))
        .collect();
    let ht = Tensor::new(ht, &[n, rows])?;
    let sp = project(x).matmul(&ht)?.reshape(&[b, rows, 1])?;
    let k = alphabet.len();
    let vals = Tensor::new(alphabet.values().iter().map(|&v| v as f64).collect(), &[k])?;
    let logits = sp.matmul(&Tensor::full(&[1, k], 1.0))?.sub(&vals)?.abs().neg();
    let logp = logits.log_softmax(2)?;
    let mut onehot = vec![0.0; b * rows * k];
    for f in 0..b {
        let cw = &c[f * n..(f + 1) * n];
        for r in 0..rows {
            let v = bits.row_support(r).into_iter().filter(|&j| cw[j] == 1).count();
            let cls = alphabet
                .class_of(v)
                .ok_or_else(|| AdError::Invalid(format!("parity value {v} of row {r} is not in the alphabet")))?;
            onehot[(f * rows + r) * k + cls] = 1.0;
        }
    }
    let onehot = Tensor::new(onehot, &[b, rows, k])?;
    Ok(logp.mul(&onehot)?.sum().scale(-1.0 / (b * rows) as f64))
}

/// `(loss_cd + loss_h) / 2`.
pub fn loss_bp(x: &Tensor, c: &[u8], h: &ParityCheckMatrix, alphabet: &SoftParityAlphabet) -> Result<Tensor> {
    loss_cd(x, c)?.add(&loss_h(x, c, h, alphabet)?).map(|t| t.scale(0.5))
}
