//! Classical channel decoders: flooding belief propagation, polar successive
//! cancellation and list decoding, and their differentiable counterparts.

mod bp;
mod polar;
pub mod soft;

pub use bp::{bp_decode, check_update_min_sum, check_update_sum_product, BpConfig, BpDecoder, BpOutput, BpVariant};
pub use polar::{sc_decode, scl_decode, ScDecoder, ScOutput, SclDecoder, SclOutput};

use crate::codes::LinearCode;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input length {got} does not match block length {expected}")]
    Length { expected: usize, got: usize },
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("decoder `{0}` requires a polar code")]
    NotPolar(&'static str),
    #[error(transparent)]
    Tensor(#[from] crate::autodiff::AdError),
}

/// `x >= 0 -> 0`, `x < 0 -> 1`.
pub fn hard_decision(x: &[f64]) -> Vec<u8> {
    x.iter().map(|&v| u8::from(v < 0.0)).collect()
}

/// Decoder selection for simulation pipelines.
#[derive(Clone, Debug, PartialEq)]
pub enum DecoderKind {
    Bp(BpConfig),
    Sc,
    Scl { list_size: usize },
}

impl DecoderKind {
    pub fn label(&self) -> String {
        match self {
            DecoderKind::Bp(c) => match c.variant {
                BpVariant::SumProduct => format!("bp-{}", c.iterations),
                BpVariant::MinSum => format!("minsum-{}", c.iterations),
            },
            DecoderKind::Sc => "sc".into(),
            DecoderKind::Scl { list_size } => format!("scl-{list_size}"),
        }
    }

    /// Per-thread decoding state for `code`.
    pub fn instantiate<'a>(&self, code: &'a LinearCode) -> Result<FrameDecoder<'a>, DecodeError> {
        Ok(match self {
            DecoderKind::Bp(cfg) => FrameDecoder::Bp(BpDecoder::new(code.graph(), cfg.clone())?),
            DecoderKind::Sc => FrameDecoder::Sc(ScDecoder::new(
                code.polar_spec().ok_or(DecodeError::NotPolar("sc"))?,
            )),
            DecoderKind::Scl { list_size } => FrameDecoder::Scl(SclDecoder::new(
                code.polar_spec().ok_or(DecodeError::NotPolar("scl"))?,
                *list_size,
            )?),
        })
    }
}

/// Reusable decoder instance that maps channel LLRs to a codeword estimate.
pub enum FrameDecoder<'a> {
    Bp(BpDecoder<'a>),
    Sc(ScDecoder<'a>),
    Scl(SclDecoder<'a>),
}

impl FrameDecoder<'_> {
    pub fn decode_codeword(&mut self, llr: &[f64]) -> Result<Vec<u8>, DecodeError> {
        match self {
            FrameDecoder::Bp(d) => Ok(hard_decision(d.decode(llr)?)),
            FrameDecoder::Sc(d) => Ok(d.decode(llr)?.codeword),
            FrameDecoder::Scl(d) => Ok(d.decode(llr)?.codeword),
        }
    }
}
