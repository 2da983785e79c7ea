//! Noisy toric-code states, their renormalization and decoding.
//!
//! [`flow`] has closed-form one-parameter flows, [`lab`] small dense states
//! and channels, [`lattice`] and [`rg`] the anyon lattice and its
//! coarse-graining decoder, [`matching`] a minimum-weight perfect matching
//! decoder and [`tmwpm`] its truncated, block-local variant.

pub mod error;
pub mod flow;
pub mod lab;
pub mod lattice;
pub mod matching;
pub mod rg;
pub mod rng;
pub mod stats;
pub mod tmwpm;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/renormalization.md")]
    mod renormalization {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/truncated.md")]
    mod truncated {}
}
