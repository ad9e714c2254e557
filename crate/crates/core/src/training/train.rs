use super::losses::{loss_bp, loss_cd, loss_tc, SoftParityAlphabet};
use crate::autodiff::{lr_schedule, AdError, AdamState, Bound, Tape, Tensor};
use crate::channel::{add_noise, sigma_from_ebn0, L_MAX};
use crate::codes::LinearCode;
use crate::decoders::soft::{bp_decode_soft, soft_sc_decode};
use crate::decoders::{BpConfig, BpVariant, DecodeError};
use crate::nn::{bit_marginals, f_m2d, random_codewords, NormMode, TransCoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] AdError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Cross-entropy on the neural decoder's bit marginals only.
    Tc,
    /// Cross-entropy on the channel decoder output.
    Cd,
    /// Mean of `Cd` and the soft-parity loss.
    Bp,
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tc" => Ok(Self::Tc),
            "cd" => Ok(Self::Cd),
            "bp" => Ok(Self::Bp),
            _ => Err(format!("unknown loss `{s}` (tc, cd, bp)")),
        }
    }
}

/// Which neural modules sit in the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modules {
    pub encoder: bool,
    pub decoder: bool,
    pub refine: bool,
}

impl Modules {
    pub const NONE: Modules = Modules {
        encoder: false,
        decoder: false,
        refine: false,
    };

    pub fn label(&self) -> &'static str {
        match (self.encoder, self.decoder, self.refine) {
            (false, false, false) => "none",
            (true, false, false) => "et",
            (false, true, false) => "dt",
            (true, true, false) => "et+dt",
            (false, true, true) => "dt+rf",
            (true, true, true) => "full",
            _ => "invalid",
        }
    }

    /// Checks the module set against `runs` channel-decoder runs.
    pub fn validate(&self, runs: usize) -> Result<(), String> {
        if self.refine && !self.decoder {
            return Err("the refinement decoder requires the neural decoder".into());
        }
        if runs == 0 {
            return Err("at least one decoder run is required".into());
        }
        if self.refine != (runs >= 2) {
            return Err(format!("{} decoder runs with refinement {}", runs, if self.refine { "on" } else { "off" }));
        }
        Ok(())
    }
}

impl FromStr for Modules {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (encoder, decoder, refine) = match s {
            "none" => (false, false, false),
            "et" => (true, false, false),
            "dt" => (false, true, false),
            "et+dt" => (true, true, false),
            "dt+rf" => (false, true, true),
            "full" => (true, true, true),
            _ => return Err(format!("unknown module set `{s}` (none, et, dt, et+dt, dt+rf, full)")),
        };
        Ok(Self { encoder, decoder, refine })
    }
}

/// Differentiable channel decoder used inside the training graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftDecoder {
    Bp { variant_min_sum: bool },
    Sc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Eb/N0 interval (dB) sampled uniformly per frame.
    pub snr_db: (f64, f64),
    /// Channel-decoder runs `r`.
    pub runs: usize,
    pub iters_per_run: usize,
    pub decoder: SoftDecoder,
    pub loss: LossKind,
    pub modules: Modules,
    pub seed: u64,
    /// Frames in the fixed validation batch; 0 disables validation.
    pub validation_frames: usize,
    /// Validate every this many epochs (and after the last one).
    pub validation_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batches_per_epoch: 1,
            batch_size: 1000,
            lr: 1e-3,
            snr_db: (2.0, 8.0),
            runs: 2,
            iters_per_run: 10,
            decoder: SoftDecoder::Bp { variant_min_sum: false },
            loss: LossKind::Bp,
            modules: Modules {
                encoder: false,
                decoder: true,
                refine: true,
            },
            seed: 0,
            validation_frames: 0,
            validation_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, code: &LinearCode, model: &TransCoder) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size < 2 || self.batches_per_epoch == 0 {
            return bad("batch size must be at least 2 and batches per epoch positive".into());
        }
        if !(self.snr_db.0 <= self.snr_db.1) {
            return bad(format!("empty Eb/N0 interval {:?}", self.snr_db));
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate {}", self.lr));
        }
        self.modules.validate(self.runs).map_err(TrainError::Config)?;
        if self.modules == Modules::NONE {
            return bad("no neural module to train".into());
        }
        if self.loss == LossKind::Tc && !self.modules.decoder {
            return bad("loss tc needs the neural decoder".into());
        }
        if code.n() != model.config().n {
            return bad(format!("model n = {} but code n = {}", model.config().n, code.n()));
        }
        match self.decoder {
            SoftDecoder::Bp { .. } if self.iters_per_run == 0 => bad("BP needs at least one iteration".into()),
            SoftDecoder::Sc if code.polar_spec().is_none() => bad("soft SC needs a polar code".into()),
            _ => Ok(()),
        }
    }

    fn bp(&self) -> BpConfig {
        BpConfig {
            iterations: self.iters_per_run,
            variant: match self.decoder {
                SoftDecoder::Bp { variant_min_sum: true } => BpVariant::MinSum,
                _ => BpVariant::SumProduct,
            },
            early_stop: false,
        }
    }
}

/// One batch of transmissions.
#[derive(Clone, Debug)]
pub struct Batch {
    pub codewords: Vec<u8>,
    pub sigma: Vec<f64>,
    /// `sigma_f * z` per position.
    pub noise: Vec<f64>,
}

impl Batch {
    pub fn sample(code: &LinearCode, frames: usize, snr_db: (f64, f64), rng: &mut ChaCha8Rng) -> Self {
        let n = code.n();
        let codewords = random_codewords(code, frames, rng);
        let sigma: Vec<f64> = (0..frames)
            .map(|_| {
                let db = if snr_db.0 < snr_db.1 { rng.random_range(snr_db.0..snr_db.1) } else { snr_db.0 };
                sigma_from_ebn0(db, code.rate())
            })
            .collect();
        let mut noise = vec![0.0; frames * n];
        for (chunk, &s) in noise.chunks_mut(n).zip(&sigma) {
            add_noise(chunk, s, rng).expect("positive sigma");
        }
        Self {
            codewords,
            sigma,
            noise,
        }
    }

    pub fn frames(&self) -> usize {
        self.sigma.len()
    }
}

/// Loss after every decoder run, plus batch power statistics when the
/// encoder ran.
pub struct ForwardLosses {
    pub runs: Vec<Tensor>,
    pub stats: Option<crate::nn::BatchStats>,
}

/// Builds the pipeline graph for one batch.
pub fn forward_losses(
    model: &TransCoder,
    p: &Bound,
    code: &LinearCode,
    batch: &Batch,
    cfg: &TrainConfig,
    alphabet: &SoftParityAlphabet,
) -> Result<ForwardLosses, TrainError> {
    let n = code.n();
    let b = batch.frames();
    let m = model.config().m;
    let (s, stats) = if cfg.modules.encoder {
        model.encode(p, &batch.codewords, &batch.sigma, NormMode::Batch)?
    } else {
        let bpsk = batch.codewords.iter().map(|&c| 2.0 * f64::from(c) - 1.0).collect();
        (Tensor::new(bpsk, &[b, n])?, None)
    };
    let y = s.add(&Tensor::new(batch.noise.clone(), &[b, n])?)?;
    let scale: Vec<f64> = batch
        .sigma
        .iter()
        .flat_map(|&sg| std::iter::repeat_n(-2.0 / (sg * sg), n))
        .collect();
    let mut runs = Vec::with_capacity(cfg.runs);
    let mut prev: Option<Tensor> = None;
    for run in 0..cfg.runs {
        let probs = if !cfg.modules.decoder {
            None
        } else if run == 0 {
            Some(model.decode(p, &y, &batch.sigma)?)
        } else {
            Some(model.refine(p, &y, prev.as_ref().expect("previous run"), &batch.sigma)?)
        };
        let llr = match &probs {
            Some(pr) => f_m2d(pr, m, n)?,
            None => y.mul(&Tensor::new(scale.clone(), &[b, n])?)?.clip(-L_MAX, L_MAX),
        };
        let dec_in = if cfg.loss == LossKind::Tc { llr.detach() } else { llr };
        let x = match cfg.decoder {
            SoftDecoder::Bp { .. } => bp_decode_soft(code.graph(), &dec_in, &cfg.bp())?.posterior,
            SoftDecoder::Sc => soft_sc_decode(code.polar_spec().expect("validated"), &dec_in)?.codeword_llr,
        };
        let loss = match cfg.loss {
            LossKind::Tc => loss_tc(&bit_marginals(probs.as_ref().expect("validated"), m, n)?, &batch.codewords)?,
            LossKind::Cd => loss_cd(&x, &batch.codewords)?,
            LossKind::Bp => loss_bp(&x, &batch.codewords, code.parity(), alphabet)?,
        };
        runs.push(loss);
        prev = Some(x);
    }
    Ok(ForwardLosses { runs, stats })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub run_losses: Vec<f64>,
    pub mean_loss: f64,
    pub val_loss: Option<f64>,
}

/// Fixed validation set evaluated without gradients.
pub struct Validator {
    batch: Batch,
}

impl Validator {
    pub fn new(code: &LinearCode, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_da7e);
        Self {
            batch: Batch::sample(code, cfg.validation_frames.max(2), cfg.snr_db, &mut rng),
        }
    }

    /// Mean run loss on the validation batch.
    pub fn loss(&self, model: &TransCoder, code: &LinearCode, cfg: &TrainConfig) -> Result<f64, TrainError> {
        let alphabet = SoftParityAlphabet::new(code.parity());
        let p = model.bind(None);
        let out = forward_losses(model, &p, code, &self.batch, cfg, &alphabet)?;
        let vals: Vec<f64> = out.runs.iter().map(|t| t.item()).collect::<Result<_, _>>()?;
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Trains `model` in place. `on_epoch` sees every record as it is produced.
pub fn train(
    model: &mut TransCoder,
    code: &LinearCode,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>, TrainError> {
    cfg.validate(code, model)?;
    let alphabet = SoftParityAlphabet::new(code.parity());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params());
    let validator = (cfg.validation_frames > 0).then(|| Validator::new(code, cfg));
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.epochs, cfg.lr);
        let mut run_sums = vec![0.0; cfg.runs];
        for _ in 0..cfg.batches_per_epoch {
            let batch = Batch::sample(code, cfg.batch_size, cfg.snr_db, &mut rng);
            let tape = Tape::new();
            let p = model.bind(Some(&tape));
            let out = forward_losses(model, &p, code, &batch, cfg, &alphabet)?;
            for (s, l) in run_sums.iter_mut().zip(&out.runs) {
                *s += l.item()?;
            }
            let mut total = out.runs[0].clone();
            for l in &out.runs[1..] {
                total = total.add(l)?;
            }
            let grads = p.grads(&total.scale(1.0 / cfg.runs as f64).backward()?);
            adam.step(model.params_mut(), &grads, lr)?;
            if cfg.modules.encoder {
                model.renormalize_rho()?;
            }
            if let Some(stats) = &out.stats {
                model.update_running_stats(stats)?;
            }
        }
        let run_losses: Vec<f64> = run_sums.iter().map(|s| s / cfg.batches_per_epoch as f64).collect();
        let mean_loss = run_losses.iter().sum::<f64>() / cfg.runs as f64;
        let val_loss = match &validator {
            Some(v) if (epoch + 1) % cfg.validation_every.max(1) == 0 || epoch + 1 == cfg.epochs => Some(v.loss(model, code, cfg)?),
            _ => None,
        };
        let rec = EpochRecord {
            epoch,
            lr,
            run_losses,
            mean_loss,
            val_loss,
        };
        on_epoch(&rec);
        trace.push(rec);
    }
    Ok(trace)
}

/// Writes `epoch, lr, run_1..run_r, mean_loss, val_loss`.
pub fn write_trace_csv(path: &Path, trace: &[EpochRecord]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    let runs = trace.first().map_or(0, |r| r.run_losses.len());
    let mut header = vec!["epoch".to_string(), "lr".to_string()];
    header.extend((1..=runs).map(|j| format!("run_{j}")));
    header.extend(["mean_loss".to_string(), "val_loss".to_string()]);
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![r.epoch.to_string(), r.lr.to_string()];
        row.extend(r.run_losses.iter().map(f64::to_string));
        row.push(r.mean_loss.to_string());
        row.push(r.val_loss.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Precision;
    use crate::codes::load_code;
    use crate::nn::ModelConfig;

    fn small_model(n: usize) -> TransCoder {
        TransCoder::new(ModelConfig {
            n,
            m: 3,
            d_model: 8,
            n_heads: 1,
            d_khead: 8,
            enc_layers: 1,
            dec_layers: 1,
            refine_iters: 1,
            ffn_mult: 2,
            pe_len: 200.0,
            precision: Precision::F64,
            seed: 4,
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            runs: 2,
            iters_per_run: 2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn module_set_parsing() {
        for s in ["none", "et", "dt", "et+dt", "dt+rf", "full"] {
            assert_eq!(s.parse::<Modules>().unwrap().label(), s);
        }
        assert!("rf".parse::<Modules>().is_err());
        assert!("full".parse::<Modules>().unwrap().validate(1).is_err());
        assert!("dt".parse::<Modules>().unwrap().validate(2).is_err());
    }

    #[test]
    fn config_errors() {
        let code = load_code("hamming_7_4").unwrap();
        let model = small_model(7);
        let sc = TrainConfig {
            decoder: SoftDecoder::Sc,
            ..small_cfg()
        };
        assert!(matches!(sc.validate(&code, &model), Err(TrainError::Config(_))));
        let none = TrainConfig {
            modules: Modules::NONE,
            runs: 1,
            ..small_cfg()
        };
        assert!(none.validate(&code, &model).is_err());
        assert!(small_cfg().validate(&code, &small_model(8)).is_err());
    }

    #[test]
    fn run_average_matches_trace() {
        let code = load_code("hamming_7_4").unwrap();
        let mut model = small_model(7);
        let trace = train(&mut model, &code, &small_cfg(), |_| {}).unwrap();
        for r in &trace {
            assert_eq!(r.run_losses.len(), 2);
            let mean = r.run_losses.iter().sum::<f64>() / 2.0;
            assert!((mean - r.mean_loss).abs() < 1e-12);
        }
        assert_eq!(trace[0].lr, 1e-3);
    }

    #[test]
    fn single_run_leaves_refiner_untouched() {
        let code = load_code("hamming_7_4").unwrap();
        let mut model = small_model(7);
        let before = model.params().clone();
        let cfg = TrainConfig {
            runs: 1,
            modules: "dt".parse().unwrap(),
            ..small_cfg()
        };
        train(&mut model, &code, &cfg, |_| {}).unwrap();
        let mut dec_moved = false;
        for id in model.params().ids() {
            let same = model.params().values(id) == before.values(id);
            match model.module_of(id) {
                "ref" | "enc" | "power" => assert!(same, "{}", model.params().name(id)),
                "dec" => dec_moved |= !same,
                _ => {}
            }
        }
        assert!(dec_moved);
    }

    #[test]
    fn training_is_reproducible() {
        let code = load_code("hamming_7_4").unwrap();
        let cfg = TrainConfig {
            modules: "full".parse().unwrap(),
            ..small_cfg()
        };
        let run = || {
            let mut model = small_model(7);
            let t = train(&mut model, &code, &cfg, |_| {}).unwrap();
            (t, model.params().clone())
        };
        let (ta, pa) = run();
        let (tb, pb) = run();
        assert_eq!(ta, tb);
        assert_eq!(pa, pb);
    }

    #[test]
    fn trace_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = vec![EpochRecord {
            epoch: 0,
            lr: 1e-3,
            run_losses: vec![1.0, 2.0],
            mean_loss: 1.5,
            val_loss: None,
        }];
        write_trace_csv(&path, &trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,lr,run_1,run_2,mean_loss,val_loss\n0,0.001,1,2,1.5,\n"));
    }

    #[test]
    fn pipeline_gradient_matches_finite_differences() {
        use crate::autodiff::gradcheck::check_gradients;
        use crate::autodiff::ParamId;
        use crate::codes::ParityCheckMatrix;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<u8>> = (0..6)
            .map(|r| (0..12).map(|c| u8::from(c % 6 == r || rng.random_bool(0.3))).collect())
            .collect();
        let code = LinearCode::from_parity("toy", ParityCheckMatrix::from_rows(&rows).unwrap());
        let model = small_model(12);
        let cfg = TrainConfig {
            runs: 2,
            iters_per_run: 3,
            modules: "dt+rf".parse().unwrap(),
            ..small_cfg()
        };
        let alphabet = SoftParityAlphabet::new(code.parity());
        let batch = Batch::sample(&code, 3, (0.0, 2.0), &mut rng);
        let ps = model.params();
        let ids: Vec<ParamId> = ps.ids().collect();
        let (net_ids, power_ids) = ids.split_at(ids.len() - 3);
        let inputs: Vec<_> = net_ids.iter().map(|&id| (ps.values(id).to_vec(), ps.shape(id).to_vec())).collect();
        let fixed: Vec<Tensor> = power_ids.iter().map(|&id| Tensor::new(ps.values(id).to_vec(), ps.shape(id)).unwrap()).collect();
        check_gradients(
            &inputs,
            |t| {
                let p = Bound::from_tensors(t.iter().cloned().chain(fixed.iter().cloned()).collect());
                let out = forward_losses(&model, &p, &code, &batch, &cfg, &alphabet).unwrap();
                out.runs[0].add(&out.runs[1]).unwrap()
            },
            1e-3,
        )
        .unwrap();
    }
}
