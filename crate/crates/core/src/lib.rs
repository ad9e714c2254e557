//! Channel-coding laboratory: linear block codes, classical decoders, a small
//! reverse-mode autodiff engine and block-attention neural coding modules.

pub mod autodiff;
pub mod channel;
pub mod codes;
pub mod decoders;
pub mod eval;
pub mod gf2;
pub mod nn;
pub mod training;
