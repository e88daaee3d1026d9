//! Polar-code post-processing for discrete-variable QKD.
//!
//! A single polar code structure performs error correction and privacy
//! amplification at once: source indices are split into random bits `R`
//! (good for the eavesdropper), key bits `A` (good for Bob, bad for Eve) and
//! frozen bits `B` (bad for Bob). Alice systematically encodes her sifted key
//! onto the `A` positions and publishes only the codeword bits on `R` and `B`.
//!
//! * [`channel`]: binary entropy, wiretap crossover, secrecy capacity.
//! * [`construction`]: degrading-merge subchannel bounds and an exact oracle.
//! * [`structure`]: the `R`/`A`/`B` partition.
//! * [`codec`]: polar transform, systematic encoder, SC decoder.
//! * [`protocol`]: Alice, Bob and Eve sessions.
//! * [`sim`]: Monte Carlo experiments and reports.

pub mod channel;
pub mod codec;
pub mod construction;
pub mod error;
pub mod protocol;
pub mod sim;
pub mod structure;

pub use error::{Error, Result};
