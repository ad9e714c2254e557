use super::blocks::{f_d2m, flatten_strip, num_blocks, partition_pad};
use super::layers::{BlockNet, NetShape};
use crate::autodiff::checkpoint::{self, CheckpointError};
use crate::autodiff::{AdError, Bound, ParamId, ParamSet, Precision, Tape, Tensor};
use crate::codes::LinearCode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

type Result<T> = std::result::Result<T, AdError>;

/// Guard added to the variance in power normalisation.
pub const NORM_EPS: f64 = 1e-8;
/// Weight of the newest batch in the running statistics.
pub const STATS_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub m: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_khead: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Refinement passes after the first decoder run.
    pub refine_iters: usize,
    pub ffn_mult: usize,
    pub pe_len: f64,
    pub precision: Precision,
    pub seed: u64,
}

impl ModelConfig {
    /// Table defaults: m = 3, one 16-wide head, 2 encoder and 3 decoder layers.
    pub fn standard(n: usize) -> Self {
        Self {
            n,
            m: 3,
            d_model: 16,
            n_heads: 1,
            d_khead: 16,
            enc_layers: 2,
            dec_layers: 3,
            refine_iters: 1,
            ffn_mult: 4,
            pe_len: 200.0,
            precision: Precision::F32,
            seed: 0,
        }
    }

    pub fn n_b(&self) -> usize {
        num_blocks(self.n, self.m)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.m > 16 || self.d_model == 0 || self.n_heads == 0 || self.d_khead == 0 || self.ffn_mult == 0 {
            return Err(AdError::Invalid(format!("bad model config {self:?}")));
        }
        Ok(())
    }
}

/// Power-normalisation statistics source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored calibration statistics.
    Frozen,
}

/// Per-index mean and standard deviation of a batch of raw symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// The TransCoder encoder, decoder and refinement decoder with the power
/// normalisation state.
#[derive(Clone, Debug)]
pub struct TransCoder {
    cfg: ModelConfig,
    params: ParamSet,
    enc: BlockNet,
    dec: BlockNet,
    refine: BlockNet,
    rho: ParamId,
    mu: ParamId,
    sd: ParamId,
    calibrated_sigma: Option<f64>,
}

impl TransCoder {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamSet::new(cfg.precision);
        let shape = |w: usize, out: usize, layers: usize| NetShape {
            n_b: cfg.n_b(),
            in_width: w,
            out_width: out,
            d_model: cfg.d_model,
            n_heads: cfg.n_heads,
            d_khead: cfg.d_khead,
            layers,
            ffn: cfg.ffn_mult,
            pe_len: cfg.pe_len,
        };
        let words = 1 << cfg.m;
        let enc = BlockNet::new(&mut ps, "enc", &shape(cfg.m, cfg.m, cfg.enc_layers), &mut rng)?;
        let dec = BlockNet::new(&mut ps, "dec", &shape(cfg.m, words, cfg.dec_layers), &mut rng)?;
        let refine = BlockNet::new(&mut ps, "ref", &shape(2 * cfg.m, words, cfg.dec_layers), &mut rng)?;
        let rho = ps.add("power.rho", &[cfg.n], vec![1.0; cfg.n])?;
        let mu = ps.add("power.mean", &[cfg.n], vec![0.0; cfg.n])?;
        let sd = ps.add("power.std", &[cfg.n], vec![1.0; cfg.n])?;
        Ok(Self {
            cfg,
            params: ps,
            enc,
            dec,
            refine,
            rho,
            mu,
            sd,
            calibrated_sigma: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn rho_id(&self) -> ParamId {
        self.rho
    }

    /// Names of the parameters belonging to the three modules.
    pub fn module_of(&self, id: ParamId) -> &str {
        let name = self.params.name(id);
        name.split('.').next().unwrap_or(name)
    }

    /// Noise level of the stored power statistics, if calibrated.
    pub fn calibrated_sigma(&self) -> Option<f64> {
        self.calibrated_sigma
    }

    /// Parameters as tensors; pass a tape to track gradients.
    pub fn bind(&self, tape: Option<&Tape>) -> Bound {
        self.params.bind(tape)
    }

    fn check_frames(&self, t: &Tensor, sigma: &[f64]) -> Result<usize> {
        match *t.shape() {
            [b, n] if n == self.cfg.n && b == sigma.len() => Ok(b),
            _ => Err(AdError::ShapeMismatch(format!(
                "frames {:?} with {} noise levels for n = {}",
                t.shape(),
                sigma.len(),
                self.cfg.n
            ))),
        }
    }

    /// Raw encoder output before power normalisation, `[B, n]`.
    pub fn encode_raw(&self, p: &Bound, codewords: &[u8], sigma: &[f64]) -> Result<Tensor> {
        let b = sigma.len();
        if codewords.len() != b * self.cfg.n {
            return Err(AdError::ShapeMismatch(format!("{} bits for {b} frames", codewords.len())));
        }
        let s = Tensor::new(codewords.iter().map(|&c| 2.0 * f64::from(c) - 1.0).collect(), &[b, self.cfg.n])?;
        let out = self.enc.forward(p, &partition_pad(&s, self.cfg.m)?, sigma)?;
        flatten_strip(&out, self.cfg.n)
    }

    /// Per-index standardisation. Batch mode also returns the batch
    /// statistics for the running estimate.
    pub fn power_normalize(&self, raw: &Tensor, mode: NormMode) -> Result<(Tensor, Option<BatchStats>)> {
        match mode {
            NormMode::Batch => {
                if raw.shape()[0] < 2 {
                    return Err(AdError::Invalid("batch statistics need at least two frames".into()));
                }
                let mean = raw.mean_axis(0)?;
                let centered = raw.sub(&mean)?;
                let std = centered.mul(&centered)?.mean_axis(0)?.add_scalar(NORM_EPS).sqrt();
                let stats = BatchStats {
                    mean: mean.to_vec(),
                    std: std.to_vec(),
                };
                Ok((centered.div(&std)?, Some(stats)))
            }
            NormMode::Frozen => {
                if self.calibrated_sigma.is_none() {
                    return Err(AdError::Invalid("power statistics are not calibrated".into()));
                }
                let n = self.cfg.n;
                let mean = Tensor::new(self.params.values(self.mu).to_vec(), &[n])?;
                let std = Tensor::new(self.params.values(self.sd).to_vec(), &[n])?;
                Ok((raw.sub(&mean)?.div(&std)?, None))
            }
        }
    }

    /// `s_i = rho_i * s'_i`, requiring `sum rho^2 = n`.
    pub fn power_realloc(&self, p: &Bound, s: &Tensor) -> Result<Tensor> {
        let rho = p.get(self.rho);
        let n = self.cfg.n as f64;
        let sq: f64 = rho.data().iter().map(|r| r * r).sum();
        if ((sq - n) / n).abs() > 1e-6 {
            return Err(AdError::Invalid(format!("sum of squared weights {sq} != {n}")));
        }
        s.mul(rho)
    }

    /// Full transmitter: pre-modulation, block network, normalisation and
    /// reallocation.
    pub fn encode(&self, p: &Bound, codewords: &[u8], sigma: &[f64], mode: NormMode) -> Result<(Tensor, Option<BatchStats>)> {
        let raw = self.encode_raw(p, codewords, sigma)?;
        let (s, stats) = self.power_normalize(&raw, mode)?;
        Ok((self.power_realloc(p, &s)?, stats))
    }

    /// Block word probabilities from channel outputs, `[B, n_b, 2^m]`.
    pub fn decode(&self, p: &Bound, y: &Tensor, sigma: &[f64]) -> Result<Tensor> {
        self.check_frames(y, sigma)?;
        self.dec.forward(p, &partition_pad(y, self.cfg.m)?, sigma)?.softmax(2)
    }

    /// Refined word probabilities from channel outputs and decoder LLRs.
    pub fn refine(&self, p: &Bound, y: &Tensor, x: &Tensor, sigma: &[f64]) -> Result<Tensor> {
        self.check_frames(y, sigma)?;
        self.check_frames(x, sigma)?;
        let m = self.cfg.m;
        let blocks = Tensor::concat(&[&partition_pad(y, m)?, &partition_pad(&f_d2m(x), m)?], 2)?;
        self.refine.forward(p, &blocks, sigma)?.softmax(2)
    }

    /// Folds batch statistics into the stored estimate.
    pub fn update_running_stats(&mut self, stats: &BatchStats) -> Result<()> {
        let blend = |old: &[f64], new: &[f64]| -> Vec<f64> {
            old.iter().zip(new).map(|(o, n)| (1.0 - STATS_MOMENTUM) * o + STATS_MOMENTUM * n).collect()
        };
        let mean = blend(self.params.values(self.mu), &stats.mean);
        let std = blend(self.params.values(self.sd), &stats.std);
        self.params.set_values(self.mu, &mean)?;
        self.params.set_values(self.sd, &std)
    }

    /// Rescales the reallocation weights so that `sum rho^2 = n`.
    pub fn renormalize_rho(&mut self) -> Result<()> {
        let rho = self.params.values(self.rho);
        let sq: f64 = rho.iter().map(|r| r * r).sum();
        if sq <= 0.0 || !sq.is_finite() {
            return Err(AdError::Invalid("reallocation weights collapsed".into()));
        }
        let k = (self.cfg.n as f64 / sq).sqrt();
        let scaled: Vec<f64> = rho.iter().map(|r| r * k).collect();
        self.params.set_values(self.rho, &scaled)
    }

    /// Freezes normalisation statistics measured on `frames` random
    /// codewords of `code` encoded at noise level `sigma`.
    pub fn calibrate(&mut self, code: &LinearCode, sigma: f64, frames: usize, seed: u64) -> Result<()> {
        if code.n() != self.cfg.n || frames < 2 {
            return Err(AdError::Invalid(format!(
                "calibration of n = {} with code n = {} over {frames} frames",
                self.cfg.n,
                code.n()
            )));
        }
        let n = self.cfg.n;
        let p = self.bind(None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
        let chunk = 1000;
        let mut done = 0;
        while done < frames {
            let b = chunk.min(frames - done);
            let bits = random_codewords(code, b, &mut rng);
            let raw = self.encode_raw(&p, &bits, &vec![sigma; b])?;
            for row in raw.data().chunks(n) {
                for i in 0..n {
                    s1[i] += row[i];
                    s2[i] += row[i] * row[i];
                }
            }
            done += b;
        }
        let f = frames as f64;
        let mean: Vec<f64> = s1.iter().map(|s| s / f).collect();
        let std: Vec<f64> = s2
            .iter()
            .zip(&mean)
            .map(|(s, m)| ((s / f - m * m).max(0.0) + NORM_EPS).sqrt())
            .collect();
        self.params.set_values(self.mu, &mean)?;
        self.params.set_values(self.sd, &std)?;
        self.calibrated_sigma = Some(sigma);
        Ok(())
    }

    /// Writes `path` (manifest) and its `.bin` sibling.
    pub fn save(&self, path: &Path) -> std::result::Result<(), CheckpointError> {
        let meta = serde_json::json!({
            "model": self.cfg,
            "calibrated_sigma": self.calibrated_sigma,
        });
        checkpoint::save(path, &self.params, meta)
    }

    /// Rebuilds a model from the configuration stored in the checkpoint.
    pub fn load(path: &Path) -> std::result::Result<Self, CheckpointError> {
        let manifest = checkpoint::read_manifest(path)?;
        let cfg: ModelConfig = serde_json::from_value(manifest.config["model"].clone())?;
        let mut model = Self::new(cfg).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        model.load_into(path)?;
        Ok(model)
    }

    /// Loads parameters into this model; the stored configuration must match.
    pub fn load_into(&mut self, path: &Path) -> std::result::Result<(), CheckpointError> {
        let manifest = checkpoint::read_manifest(path)?;
        let cfg: ModelConfig = serde_json::from_value(manifest.config["model"].clone())?;
        if cfg != self.cfg {
            return Err(CheckpointError::Mismatch(format!(
                "stored d_model {} m {} n {}, expected d_model {} m {} n {}",
                cfg.d_model, cfg.m, cfg.n, self.cfg.d_model, self.cfg.m, self.cfg.n
            )));
        }
        let meta = checkpoint::load(path, &mut self.params)?;
        self.calibrated_sigma = meta["calibrated_sigma"].as_f64();
        Ok(())
    }
}

/// `frames` uniformly random codewords of `code`, concatenated.
pub fn random_codewords(code: &LinearCode, frames: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(frames * code.n());
    for _ in 0..frames {
        let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
        out.extend(code.encode(&msg).expect("message length k"));
    }
    out
}
