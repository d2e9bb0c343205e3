//! Simulation and analysis toolkit for phase de-randomization of gain-switched
//! lasers under optical injection.
//!
//! The pipeline runs from synthetic balanced-detector waveforms ([`synth`])
//! through phase extraction ([`phasex`]), wrapped Voigt fitting ([`circfit`]),
//! and the relative q-parameter with bootstrap errors ([`qrel`]), up to
//! polarization scans ([`polscan`]), power sweeps with the isolation threshold
//! ([`sweep`]), and Fock-basis density matrices ([`fockdiag`]).

pub mod circfit;
pub mod circular;
pub mod error;
pub mod faddeeva;
pub mod fockdiag;
pub mod phasex;
pub mod pipeline;
pub mod polscan;
pub mod qrel;
pub mod quad;
pub mod rng;
pub mod sweep;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
