//! Block-attention neural modules: the TransCoder encoder, decoder and
//! refinement decoder, power normalisation, and the conversions between
//! word probabilities and channel-decoder LLRs.

pub mod blocks;
pub mod layers;
mod model;

pub use blocks::{bit_marginals, f_d2m, f_m2d, flatten_strip, num_blocks, pad_count, partition_pad, positional_encoding, word_table};
pub use model::{random_codewords, BatchStats, ModelConfig, NormMode, TransCoder, NORM_EPS, STATS_MOMENTUM};
