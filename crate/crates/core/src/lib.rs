//! Simulation lab for a randomized-clock AES side-channel countermeasure.
//!
//! * [`clock`]: the four-source mux clock, its closed-form edge model and
//!   timing overhead.
//! * [`aes`]: AES-128 with round states and the last-round leakage model.
//! * [`synth`] and [`format`]: synthetic power traces and their file format.
//! * [`attack`]: filtering, synchronization, CPA, minimum-trace search, FFT
//!   spectra and the dual-core brute-force bound.

pub mod aes;
pub mod attack;
pub mod clock;
pub mod error;
pub mod format;
pub mod presets;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
