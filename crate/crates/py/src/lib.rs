//! Python bindings: codes, channel helpers, classical decoders, Monte Carlo
//! simulation, the neural coding model and its training loop.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;
use transcoder_core::channel;
use transcoder_core::codes::{load_code, LinearCode};
use transcoder_core::decoders::{BpConfig, BpVariant, DecoderKind};
use transcoder_core::eval::flops::{flop_estimate, FlopParams, FlopTarget};
use transcoder_core::eval::{self, EvalRecord, McOptions, PipelineConfig, StopRule};
use transcoder_core::nn::{self, ModelConfig};
use transcoder_core::training::{self, LossKind, Modules, SoftDecoder, TrainConfig};

fn bits(v: Vec<u8>) -> Vec<u32> {
    v.into_iter().map(u32::from).collect()
}

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn decoder_kind(name: &str, iters: usize, list: usize, early_stop: bool) -> PyResult<DecoderKind> {
    let bp = |variant| {
        DecoderKind::Bp(BpConfig {
            iterations: iters,
            variant,
            early_stop,
        })
    };
    match name {
        "bp" => Ok(bp(BpVariant::SumProduct)),
        "minsum" => Ok(bp(BpVariant::MinSum)),
        "sc" => Ok(DecoderKind::Sc),
        "scl" => Ok(DecoderKind::Scl { list_size: list }),
        _ => Err(PyValueError::new_err(format!("unknown decoder `{name}` (bp, minsum, sc, scl)"))),
    }
}

fn record_dict<'py>(py: Python<'py>, r: &EvalRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("pipeline", &r.pipeline)?;
    d.set_item("code", &r.code)?;
    d.set_item("ebn0_db", r.ebn0_db)?;
    d.set_item("frames", r.frames)?;
    d.set_item("bit_errors", r.bit_errors)?;
    d.set_item("block_errors", r.block_errors)?;
    d.set_item("ber", r.ber)?;
    d.set_item("bler", r.bler)?;
    d.set_item("minus_ln_bler", r.minus_ln_bler)?;
    d.set_item("bler_se", r.bler_se)?;
    Ok(d)
}

/// A binary linear block code.
#[pyclass(name = "Code", frozen)]
struct PyCode {
    inner: LinearCode,
}

#[pymethods]
impl PyCode {
    /// Bundled name, `polar_<N>_<k>`, or alist path.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_code(name).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.graph().num_edges()
    }

    fn encode(&self, message: Vec<u8>) -> PyResult<Vec<u32>> {
        self.inner.encode(&message).map(bits).map_err(err)
    }

    fn syndrome(&self, word: Vec<u8>) -> PyResult<Vec<u32>> {
        self.inner.syndrome(&word).map(bits).map_err(err)
    }

    fn is_codeword(&self, word: Vec<u8>) -> bool {
        self.inner.is_codeword(&word)
    }

    fn message_of(&self, word: Vec<u8>) -> PyResult<Vec<u32>> {
        if word.len() != self.inner.n() {
            return Err(PyValueError::new_err("word length must equal n"));
        }
        Ok(bits(self.inner.message_of(&word)))
    }

    /// Decodes channel LLRs to a codeword estimate.
    #[pyo3(signature = (llr, decoder = "bp", iters = 20, list = 8))]
    fn decode(&self, llr: Vec<f64>, decoder: &str, iters: usize, list: usize) -> PyResult<Vec<u32>> {
        let kind = decoder_kind(decoder, iters, list, true)?;
        let mut dec = kind.instantiate(&self.inner).map_err(err)?;
        dec.decode_codeword(&llr).map(bits).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Code({:?}, n={}, k={})", self.inner.name(), self.inner.n(), self.inner.k())
    }
}

#[pyfunction]
fn sigma_from_ebn0(ebn0_db: f64, rate: f64) -> f64 {
    channel::sigma_from_ebn0(ebn0_db, rate)
}

#[pyfunction]
fn bpsk(bits: Vec<u8>) -> Vec<f64> {
    channel::bpsk_map(&bits)
}

/// `log P(0)/P(1)` of received samples, clamped.
#[pyfunction]
fn channel_llr(y: Vec<f64>, sigma: f64) -> Vec<f64> {
    channel::llr_from_samples(&y, sigma)
}

/// Bit LLRs from block word probabilities given as a flat `[frames, n_b, 2^m]`
/// list.
#[pyfunction]
fn f_m2d(probs: Vec<f64>, frames: usize, m: usize, n: usize) -> PyResult<Vec<f64>> {
    let t = transcoder_core::autodiff::Tensor::new(probs, &[frames, nn::num_blocks(n, m), 1 << m]).map_err(err)?;
    Ok(nn::f_m2d(&t, m, n).map_err(err)?.to_vec())
}

/// Monte Carlo error rates of a plain BPSK pipeline.
#[pyfunction]
#[pyo3(signature = (code, ebn0_db, decoder = "bp", iters = 20, list = 8, min_errors = 100, min_frames = 10_000, max_frames = 10_000_000, seed = 0, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    code: &PyCode,
    ebn0_db: Vec<f64>,
    decoder: &str,
    iters: usize,
    list: usize,
    min_errors: u64,
    min_frames: u64,
    max_frames: u64,
    seed: u64,
    workers: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let pipe = PipelineConfig::plain(decoder_kind(decoder, iters, list, true)?);
    let opts = McOptions {
        stop: StopRule {
            min_errors,
            min_frames,
            max_frames,
        },
        workers,
        seed,
        ..McOptions::default()
    };
    let records = py
        .detach(|| eval::monte_carlo(&code.inner, None, &pipe, &ebn0_db, &opts))
        .map_err(err)?;
    records.iter().map(|r| record_dict(py, r)).collect()
}

/// Normalised pairwise distances of BPSK-mapped codewords.
#[pyfunction]
#[pyo3(signature = (code, pairs = 100_000, bins = 50, seed = 0))]
fn distance_histogram(code: &PyCode, pairs: usize, bins: usize, seed: u64) -> PyResult<(Vec<u64>, Vec<f64>)> {
    let h = eval::distance_histogram(&code.inner, eval::Mapper::Bpsk, pairs, bins, seed).map_err(err)?;
    Ok((h.counts, h.distances))
}

/// Multiplication/addition count of one model part.
#[pyfunction]
#[pyo3(signature = (target, code, iters = 1, m = 3, d_model = 16))]
fn flops(target: &str, code: &PyCode, iters: u64, m: usize, d_model: usize) -> PyResult<u64> {
    let t = match target {
        "bp" => FlopTarget::Bp { iterations: iters },
        "transcoder-layer" => FlopTarget::TranscoderLayer,
        "transcoder-embedding" => FlopTarget::TranscoderEmbedding,
        "transcoder-encoder" => FlopTarget::TranscoderEncoder,
        "transcoder-decoder" => FlopTarget::TranscoderDecoder,
        "crossmpt-layer" => FlopTarget::CrossMptLayer,
        "crossmpt-embedding" => FlopTarget::CrossMptEmbedding,
        "crossmpt-decoder" => FlopTarget::CrossMptDecoder,
        "ecct-layer" => FlopTarget::EcctLayer,
        "ecct-embedding" => FlopTarget::EcctEmbedding,
        "ecct-decoder" => FlopTarget::EcctDecoder,
        _ => return Err(PyValueError::new_err(format!("unknown target `{target}`"))),
    };
    Ok(flop_estimate(t, &FlopParams::for_code(&code.inner, m, d_model)))
}

/// Neural encoder, decoder and refinement decoder.
#[pyclass(name = "TransCoder")]
struct PyTransCoder {
    inner: nn::TransCoder,
}

#[pymethods]
impl PyTransCoder {
    #[new]
    #[pyo3(signature = (n, m = 3, d_model = 16, seed = 0))]
    fn new(n: usize, m: usize, d_model: usize, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig {
            m,
            d_model,
            d_khead: d_model,
            seed,
            ..ModelConfig::standard(n)
        };
        Ok(Self {
            inner: nn::TransCoder::new(cfg).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: nn::TransCoder::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().num_values()
    }

    #[getter]
    fn calibrated_sigma(&self) -> Option<f64> {
        self.inner.calibrated_sigma()
    }

    #[pyo3(signature = (code, sigma, frames = 10_000, seed = 0))]
    fn calibrate(&mut self, code: &PyCode, sigma: f64, frames: usize, seed: u64) -> PyResult<()> {
        self.inner.calibrate(&code.inner, sigma, frames, seed).map_err(err)
    }

    /// Encoded symbols of concatenated codewords.
    fn encode(&self, codewords: Vec<u8>, sigma: f64) -> PyResult<Vec<f64>> {
        let n = self.inner.config().n;
        if codewords.len() % n != 0 {
            return Err(PyValueError::new_err("codeword buffer must be a multiple of n"));
        }
        let p = self.inner.bind(None);
        let b = codewords.len() / n;
        let (s, _) = self.inner.encode(&p, &codewords, &vec![sigma; b], nn::NormMode::Frozen).map_err(err)?;
        Ok(s.to_vec())
    }

    /// Trains in place and returns the per-epoch mean losses.
    #[pyo3(signature = (code, epochs = 100, batch = 256, lr = 1e-3, modules = "dt+rf", loss = "bp", runs = 2, iters_per_run = 10, snr_db = (2.0, 8.0), seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        code: &PyCode,
        epochs: usize,
        batch: usize,
        lr: f64,
        modules: &str,
        loss: &str,
        runs: usize,
        iters_per_run: usize,
        snr_db: (f64, f64),
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let cfg = TrainConfig {
            epochs,
            batch_size: batch,
            lr,
            snr_db,
            runs,
            iters_per_run,
            decoder: if code.inner.polar_spec().is_some() {
                SoftDecoder::Sc
            } else {
                SoftDecoder::Bp { variant_min_sum: false }
            },
            loss: loss.parse::<LossKind>().map_err(err)?,
            modules: modules.parse::<Modules>().map_err(err)?,
            seed,
            ..TrainConfig::default()
        };
        let model = &mut self.inner;
        let trace = py
            .detach(|| training::train(model, &code.inner, &cfg, |_| {}))
            .map_err(err)?;
        Ok(trace.iter().map(|r| r.mean_loss).collect())
    }

    /// Monte Carlo error rates of a pipeline built around this model.
    #[pyo3(signature = (code, ebn0_db, modules = "dt+rf", runs = 2, iters = 10, min_errors = 100, min_frames = 10_000, max_frames = 1_000_000, calibration_frames = 10_000, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        code: &PyCode,
        ebn0_db: Vec<f64>,
        modules: &str,
        runs: usize,
        iters: usize,
        min_errors: u64,
        min_frames: u64,
        max_frames: u64,
        calibration_frames: usize,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let decoder = if code.inner.polar_spec().is_some() { "sc" } else { "bp" };
        let pipe = PipelineConfig {
            modules: modules.parse::<Modules>().map_err(err)?,
            decoder: decoder_kind(decoder, iters, 8, true)?,
            runs,
            calibration_frames,
        };
        let opts = McOptions {
            stop: StopRule {
                min_errors,
                min_frames,
                max_frames,
            },
            seed,
            ..McOptions::default()
        };
        let model = &self.inner;
        let records = py
            .detach(|| eval::monte_carlo(&code.inner, Some(model), &pipe, &ebn0_db, &opts))
            .map_err(err)?;
        records.iter().map(|r| record_dict(py, r)).collect()
    }
}

#[pymodule]
fn transcoder(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCode>()?;
    m.add_class::<PyTransCoder>()?;
    m.add_function(wrap_pyfunction!(sigma_from_ebn0, m)?)?;
    m.add_function(wrap_pyfunction!(bpsk, m)?)?;
    m.add_function(wrap_pyfunction!(channel_llr, m)?)?;
    m.add_function(wrap_pyfunction!(f_m2d, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(distance_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(flops, m)?)?;
    Ok(())
}
