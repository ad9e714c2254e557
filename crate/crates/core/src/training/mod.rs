//! Losses and the end-to-end training loop.

pub mod losses;
mod train;

pub use losses::{loss_bp, loss_cd, loss_h, loss_tc, project, SoftParityAlphabet};
pub use train::*;
