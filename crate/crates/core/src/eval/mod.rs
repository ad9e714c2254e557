//! Monte Carlo error-rate measurement, result files, pairwise distance
//! histograms and operation counts.

pub mod flops;
mod histogram;
mod records;

pub use histogram::{distance_histogram, DistanceHistogram, Mapper};
pub use records::{read_results, write_results, EvalRecord};

use crate::autodiff::{AdError, Tensor};
use crate::channel::{add_noise, bpsk_map, clamp_llr, sigma_from_ebn0};
use crate::codes::LinearCode;
use crate::decoders::soft::soft_sc_decode;
use crate::decoders::{bp_decode, BpConfig, DecodeError, DecoderKind};
use crate::nn::{f_m2d, NormMode, TransCoder};
use crate::training::Modules;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::borrow::Cow;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid pipeline: {0}")]
    Config(String),
    #[error("the encoder needs calibrated power statistics")]
    Uncalibrated,
    #[error("no Eb/N0 points given")]
    NoPoints,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Tensor(#[from] AdError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed results file: {0}")]
    Parse(String),
}

/// Stopping rule for one Eb/N0 point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopRule {
    pub min_errors: u64,
    pub min_frames: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_errors: 100,
            min_frames: 10_000,
            max_frames: 10_000_000,
        }
    }
}

impl StopRule {
    /// At least a million frames and a hundred block errors.
    pub fn long() -> Self {
        Self {
            min_errors: 100,
            min_frames: 1_000_000,
            max_frames: 100_000_000,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "long" => Some(Self::long()),
            _ => None,
        }
    }

    fn done(&self, frames: u64, block_errors: u64) -> bool {
        frames >= self.max_frames || (block_errors >= self.min_errors && frames >= self.min_frames)
    }
}

/// Transmitter and receiver chain around one channel decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub modules: Modules,
    /// Decoder for every run; the last run may stop early.
    pub decoder: DecoderKind,
    pub runs: usize,
    /// Frames used to freeze the encoder statistics at each point; 0 keeps
    /// the statistics stored in the model.
    pub calibration_frames: usize,
}

impl PipelineConfig {
    pub fn plain(decoder: DecoderKind) -> Self {
        Self {
            modules: Modules::NONE,
            decoder,
            runs: 1,
            calibration_frames: 0,
        }
    }

    pub fn id(&self) -> String {
        let dec = self.decoder.label();
        if self.runs == 1 {
            format!("{}/{dec}", self.modules.label())
        } else {
            format!("{}/{}x{dec}", self.modules.label(), self.runs)
        }
    }

    fn validate(&self, code: &LinearCode, model: Option<&TransCoder>) -> Result<(), EvalError> {
        self.modules.validate(self.runs).map_err(EvalError::Config)?;
        if self.runs > 1 && matches!(self.decoder, DecoderKind::Scl { .. }) {
            return Err(EvalError::Config("refinement needs a soft-output decoder (bp or sc)".into()));
        }
        self.decoder.instantiate(code)?;
        if self.modules != Modules::NONE {
            let model = model.ok_or_else(|| EvalError::Config(format!("module set {} needs a model", self.modules.label())))?;
            if model.config().n != code.n() {
                return Err(EvalError::Config(format!("model n = {} but code n = {}", model.config().n, code.n())));
            }
            if self.modules.encoder && self.calibration_frames == 0 && model.calibrated_sigma().is_none() {
                return Err(EvalError::Uncalibrated);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct McOptions {
    pub stop: StopRule,
    pub workers: usize,
    pub seed: u64,
    /// Frames per work unit.
    pub chunk: usize,
    /// Replaces the Eb/N0-derived noise level.
    pub sigma_override: Option<f64>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            stop: StopRule::default(),
            workers: 1,
            seed: 0,
            chunk: 500,
            sigma_override: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Counts {
    frames: u64,
    bit_errors: u64,
    block_errors: u64,
}

/// Measures BER and BLER at every point of `ebn0_db`.
pub fn monte_carlo(
    code: &LinearCode,
    model: Option<&TransCoder>,
    pipeline: &PipelineConfig,
    ebn0_db: &[f64],
    opts: &McOptions,
) -> Result<Vec<EvalRecord>, EvalError> {
    if ebn0_db.is_empty() {
        return Err(EvalError::NoPoints);
    }
    if opts.chunk == 0 || opts.workers == 0 {
        return Err(EvalError::Config("chunk size and worker count must be positive".into()));
    }
    pipeline.validate(code, model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(ebn0_db.len());
    for (pi, &db) in ebn0_db.iter().enumerate() {
        let start = Instant::now();
        let sigma = opts.sigma_override.unwrap_or_else(|| sigma_from_ebn0(db, code.rate()));
        let point_seed = opts.seed.wrapping_add((pi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let model = match model {
            Some(m) if pipeline.modules.encoder && pipeline.calibration_frames > 0 => {
                let mut m = m.clone();
                m.calibrate(code, sigma.max(1e-3), pipeline.calibration_frames, point_seed ^ 0xca1b)?;
                Some(Cow::Owned(m))
            }
            m => m.map(Cow::Borrowed),
        };
        let ctx = Point {
            code,
            model: model.as_deref(),
            pipeline,
            sigma,
            seed: point_seed,
        };
        let mut total = Counts::default();
        let mut next = 0u64;
        'waves: while !opts.stop.done(total.frames, total.block_errors) {
            let ranges: Vec<(u64, u64)> = (0..opts.workers)
                .map_while(|w| {
                    let s = next + (w * opts.chunk) as u64;
                    (s < opts.stop.max_frames).then(|| (s, (opts.chunk as u64).min(opts.stop.max_frames - s)))
                })
                .collect();
            next = ranges.last().map_or(next, |r| r.0 + r.1);
            let results: Vec<Result<Counts, EvalError>> = pool.install(|| ranges.par_iter().map(|&(s, len)| ctx.run(s, len as usize)).collect());
            for r in results {
                let c = r?;
                total.frames += c.frames;
                total.bit_errors += c.bit_errors;
                total.block_errors += c.block_errors;
                if opts.stop.done(total.frames, total.block_errors) {
                    break 'waves;
                }
            }
        }
        out.push(EvalRecord::new(
            pipeline.id(),
            code.name(),
            db,
            total.frames,
            total.bit_errors,
            total.block_errors,
            opts.seed,
            start.elapsed().as_secs_f64(),
            code.k(),
        ));
    }
    Ok(out)
}

struct Point<'a> {
    code: &'a LinearCode,
    model: Option<&'a TransCoder>,
    pipeline: &'a PipelineConfig,
    sigma: f64,
    seed: u64,
}

impl Point<'_> {
    fn frame_rng(&self, frame: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame);
        rng
    }

    fn run(&self, first: u64, len: usize) -> Result<Counts, EvalError> {
        let (n, k) = (self.code.n(), self.code.k());
        let mut msgs = Vec::with_capacity(len * k);
        let mut words = Vec::with_capacity(len * n);
        let mut noise = vec![0.0; len * n];
        for (f, z) in noise.chunks_mut(n).enumerate() {
            let mut rng = self.frame_rng(first + f as u64);
            let msg: Vec<u8> = (0..k).map(|_| rng.random_range(0..2u8)).collect();
            words.extend(self.code.encode(&msg).expect("message length k"));
            msgs.extend(msg);
            if self.sigma > 0.0 {
                add_noise(z, self.sigma, &mut rng).expect("positive sigma");
            }
        }
        let llr = self.receive(&words, &noise, len)?;
        let mut dec = self.pipeline.decoder.instantiate(self.code)?;
        let mut c = Counts {
            frames: len as u64,
            ..Counts::default()
        };
        for (l, msg) in llr.chunks(n).zip(msgs.chunks(k)) {
            let est = self.code.message_of(&dec.decode_codeword(l)?);
            let errs = est.iter().zip(msg).filter(|(a, b)| a != b).count() as u64;
            c.bit_errors += errs;
            c.block_errors += u64::from(errs > 0);
        }
        Ok(c)
    }

    /// Channel output to the LLRs handed to the final decoder run.
    fn receive(&self, words: &[u8], noise: &[f64], len: usize) -> Result<Vec<f64>, EvalError> {
        let n = self.code.n();
        let pipe = self.pipeline;
        let sigmas = vec![self.sigma; len];
        let p = self.model.map(|m| m.bind(None));
        let s = match (self.model, &p) {
            (Some(m), Some(p)) if pipe.modules.encoder => m.encode(p, words, &sigmas, NormMode::Frozen)?.0.to_vec(),
            _ => bpsk_map(words),
        };
        let y: Vec<f64> = s.iter().zip(noise).map(|(a, b)| a + b).collect();
        let (Some(model), Some(p)) = (self.model.filter(|_| pipe.modules.decoder), &p) else {
            let scale = -2.0 / (self.sigma * self.sigma);
            return Ok(y.iter().map(|v| clamp_llr(scale * v)).collect());
        };
        let m = model.config().m;
        let yt = Tensor::new(y, &[len, n])?;
        let mut probs = model.decode(p, &yt, &sigmas)?;
        for _ in 1..pipe.runs {
            let llr = f_m2d(&probs, m, n)?;
            let x = match &pipe.decoder {
                DecoderKind::Bp(cfg) => {
                    let cfg = BpConfig {
                        early_stop: false,
                        ..cfg.clone()
                    };
                    let mut post = Vec::with_capacity(len * n);
                    for l in llr.data().chunks(n) {
                        post.extend(bp_decode(self.code.graph(), l, &cfg, false)?.posterior);
                    }
                    Tensor::new(post, &[len, n])?
                }
                DecoderKind::Sc => soft_sc_decode(self.code.polar_spec().expect("validated"), &llr)?.codeword_llr,
                DecoderKind::Scl { .. } => unreachable!("rejected by validation"),
            };
            probs = model.refine(p, &yt, &x, &sigmas)?;
        }
        Ok(f_m2d(&probs, m, n)?.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::load_code;
    use crate::nn::ModelConfig;

    fn quick(stop: StopRule, workers: usize) -> McOptions {
        McOptions {
            stop,
            workers,
            seed: 3,
            chunk: 64,
            sigma_override: None,
        }
    }

    fn bp(iters: usize) -> DecoderKind {
        DecoderKind::Bp(BpConfig::sum_product(iters).with_early_stop(true))
    }

    #[test]
    fn noiseless_channel_stops_at_min_frames() {
        let code = load_code("hamming_7_4").unwrap();
        let opts = McOptions {
            sigma_override: Some(0.0),
            ..quick(
                StopRule {
                    min_errors: 10,
                    min_frames: 300,
                    max_frames: 10_000,
                },
                2,
            )
        };
        let r = monte_carlo(&code, None, &PipelineConfig::plain(bp(5)), &[3.0], &opts).unwrap();
        assert_eq!(r[0].block_errors, 0);
        assert_eq!(r[0].frames, 10_000);
        let stop = StopRule {
            min_errors: 0,
            min_frames: 300,
            max_frames: 10_000,
        };
        let r = monte_carlo(&code, None, &PipelineConfig::plain(bp(5)), &[3.0], &McOptions { stop, ..opts }).unwrap();
        assert_eq!(r[0].frames, 320);
    }

    #[test]
    fn counts_do_not_depend_on_worker_count() {
        let code = load_code("ldpc_49_24").unwrap();
        let stop = StopRule {
            min_errors: 30,
            min_frames: 200,
            max_frames: 20_000,
        };
        let pipe = PipelineConfig::plain(bp(10));
        let a = monte_carlo(&code, None, &pipe, &[1.0, 2.0], &quick(stop, 1)).unwrap();
        let b = monte_carlo(&code, None, &pipe, &[1.0, 2.0], &quick(stop, 3)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.frames, x.bit_errors, x.block_errors), (y.frames, y.bit_errors, y.block_errors));
        }
        assert!(a[0].block_errors >= 30);
    }

    #[test]
    fn lower_error_target_is_a_prefix() {
        let code = load_code("hamming_7_4").unwrap();
        let pipe = PipelineConfig::plain(bp(5));
        let run = |min_errors| {
            let stop = StopRule {
                min_errors,
                min_frames: 0,
                max_frames: 1_000_000,
            };
            monte_carlo(&code, None, &pipe, &[2.0], &quick(stop, 1)).unwrap()[0].clone()
        };
        let (short, long) = (run(20), run(60));
        assert!(short.frames < long.frames);
        // rerunning the long point capped at the short frame count
        let stop = StopRule {
            min_errors: u64::MAX,
            min_frames: 0,
            max_frames: short.frames,
        };
        let capped = monte_carlo(&code, None, &pipe, &[2.0], &quick(stop, 2)).unwrap();
        assert_eq!(capped[0].block_errors, short.block_errors);
    }

    #[test]
    fn pipeline_validation() {
        let code = load_code("hamming_7_4").unwrap();
        let model = TransCoder::new(ModelConfig::standard(7)).unwrap();
        let none = McOptions::default();
        let mut pipe = PipelineConfig::plain(bp(5));
        pipe.modules = "et".parse().unwrap();
        assert!(matches!(monte_carlo(&code, None, &pipe, &[1.0], &none), Err(EvalError::Config(_))));
        assert!(matches!(monte_carlo(&code, Some(&model), &pipe, &[1.0], &none), Err(EvalError::Uncalibrated)));
        assert!(matches!(monte_carlo(&code, None, &PipelineConfig::plain(bp(5)), &[], &none), Err(EvalError::NoPoints)));
        let sc = PipelineConfig::plain(DecoderKind::Sc);
        assert!(matches!(monte_carlo(&code, None, &sc, &[1.0], &none), Err(EvalError::Decode(_))));
    }

    #[test]
    fn neural_pipelines_run_deterministically() {
        let code = load_code("hamming_7_4").unwrap();
        let model = TransCoder::new(ModelConfig::standard(7)).unwrap();
        let pipe = PipelineConfig {
            modules: "full".parse().unwrap(),
            decoder: bp(3),
            runs: 2,
            calibration_frames: 500,
        };
        let stop = StopRule {
            min_errors: 5,
            min_frames: 100,
            max_frames: 2000,
        };
        let a = monte_carlo(&code, Some(&model), &pipe, &[2.0], &quick(stop, 1)).unwrap();
        let b = monte_carlo(&code, Some(&model), &pipe, &[2.0], &quick(stop, 2)).unwrap();
        assert_eq!(a[0].block_errors, b[0].block_errors);
        assert_eq!(a[0].pipeline, "full/2xbp-3");
        assert!(a[0].frames >= 100);
    }
}
