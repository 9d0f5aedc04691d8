//! Ego-velocity estimation for FMCW mmWave radar captures.
//!
//! The crate turns interleaved int16 I/Q chirp data into per-frame ego
//! velocity estimates two ways and makes the results directly comparable:
//!
//! * **Phase-slope pipeline** ([`pipeline`]): per-chirp Hann-windowed range
//!   FFTs, greedy peak tracking across frames, phase unwrapping at each
//!   tracked range bin, and an ordinary-least-squares slope of phase versus
//!   slow time converted through `v = -(λ/4π)·dφ/dt`. Because it reads the
//!   *phase* progression inside one frame rather than a Doppler bin index,
//!   it resolves velocities well below the Doppler grid.
//! * **Doppler baseline** ([`doppler`]): the classical range-Doppler map
//!   whose velocity axis is quantized to `λ/(2·N_c·T_rep)` per bin
//!   (≈ 3.4 cm/s at the default 77 GHz / 664-chirp profile).
//!
//! A deterministic stop-and-hop simulator ([`sim`]) provides ground truth,
//! [`capture`] reads and writes the on-disk formats, and [`eval`] joins
//! estimates against truth into CSV reports.
//!
//! Sign convention throughout: positive velocity means the radar approaches
//! the (static) reflectors, i.e. ranges shrink and per-bin phase decreases.
//!
//! With the default `parallel` feature, frame-level batch operations fan out
//! via rayon; the same code paths degrade to sequential loops when the
//! feature is disabled, with bit-identical output either way.

pub mod capture;
pub mod config;
pub mod doppler;
pub mod dsp;
pub mod eval;
pub mod pipeline;
pub mod records;
pub mod sim;

pub(crate) mod par;

pub use capture::{Capture, CaptureError, Frame, IqSample};
pub use config::{
    derive_params, validate_config, ConfigError, DerivedParams, RadarConfig, ValidatedConfig,
    SPEED_OF_LIGHT,
};
pub use records::{FrameTruth, Method, VelocityEstimate};
