//! Radar timing/geometry configuration and the parameters derived from it.
//!
//! Every other module reads dimensions and timing from a [`ValidatedConfig`]:
//! validation happens once, at the boundary (file load, capture header,
//! simulator entry), and downstream code can rely on the invariants instead
//! of re-checking them.
//!
//! The default profile is a desk-scale 77 GHz setup: 29.982 THz/s slope,
//! 10 MHz complex sampling, 256 samples per chirp, 664 chirps per frame at an
//! 86 µs repetition interval, 5 frames per second, one rx channel.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum [m/s] — the single source of truth for every
/// wavelength and range conversion in this crate.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn default_num_rx() -> u32 {
    1
}

/// Static description of one capture's chirp timing and dimensions.
///
/// Serializes as flat JSON with exactly these field names; unknown keys are
/// rejected so config-file typos fail loudly instead of silently falling back
/// to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    /// Carrier frequency f_c [Hz].
    pub carrier_freq: f64,
    /// Chirp slope S [Hz/s].
    pub chirp_slope: f64,
    /// Complex (I/Q) ADC sample rate f_s [Hz].
    pub sample_rate: f64,
    /// Fast-time samples recorded per chirp, N_s.
    pub samples_per_chirp: u32,
    /// Chirps per frame, N_c — the slow-time length.
    pub chirps_per_frame: u32,
    /// Receive channels recorded per chirp.
    #[serde(default = "default_num_rx")]
    pub num_rx: u32,
    /// Chirp-to-chirp repetition interval [s]; the slow-time sample period.
    pub chirp_repetition_time: f64,
    /// Frame-to-frame interval [s].
    pub frame_period: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            carrier_freq: 77.0e9,
            chirp_slope: 29.982e12,
            sample_rate: 10.0e6,
            samples_per_chirp: 256,
            chirps_per_frame: 664,
            num_rx: 1,
            chirp_repetition_time: 86.0e-6,
            frame_period: 0.2,
        }
    }
}

/// A [`RadarConfig`] that has passed [`validate_config`]. Derefs to the
/// inner config; constructing one by hand is deliberately impossible.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(RadarConfig);

impl Deref for ValidatedConfig {
    type Target = RadarConfig;

    fn deref(&self) -> &RadarConfig {
        &self.0
    }
}

impl ValidatedConfig {
    pub fn inner(&self) -> &RadarConfig {
        &self.0
    }

    pub fn into_inner(self) -> RadarConfig {
        self.0
    }
}

/// Why a [`RadarConfig`] was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be finite, got {value}")]
    NotFinite { field: &'static str, value: f64 },
    #[error("{field} must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    /// The ADC would still be sampling when the next chirp starts.
    #[error(
        "sampling window samples_per_chirp/sample_rate = {window:.3e} s \
         exceeds chirp_repetition_time = {limit:.3e} s"
    )]
    SamplingWindowTooLong { window: f64, limit: f64 },
    /// The chirp train of one frame would spill into the next frame slot.
    #[error(
        "chirp span chirps_per_frame*chirp_repetition_time = {span:.3e} s \
         exceeds frame_period = {limit:.3e} s"
    )]
    ChirpSpanTooLong { span: f64, limit: f64 },
}

/// Checks the cross-field timing invariants and wraps the config as proof.
///
/// Rules, in the order they are reported:
/// 1. every float field finite, every field strictly positive (num_rx ≥ 1);
/// 2. the sampling window fits inside one repetition interval:
///    `samples_per_chirp / sample_rate ≤ chirp_repetition_time`;
/// 3. the frame's chirp train fits inside one frame slot:
///    `chirps_per_frame · chirp_repetition_time ≤ frame_period`.
pub fn validate_config(cfg: &RadarConfig) -> Result<ValidatedConfig, ConfigError> {
    let floats = [
        ("carrier_freq", cfg.carrier_freq),
        ("chirp_slope", cfg.chirp_slope),
        ("sample_rate", cfg.sample_rate),
        ("chirp_repetition_time", cfg.chirp_repetition_time),
        ("frame_period", cfg.frame_period),
    ];
    for (field, value) in floats {
        if !value.is_finite() {
            return Err(ConfigError::NotFinite { field, value });
        }
        if value <= 0.0 {
            return Err(ConfigError::NonPositive { field, value });
        }
    }
    let counts = [
        ("samples_per_chirp", cfg.samples_per_chirp),
        ("chirps_per_frame", cfg.chirps_per_frame),
        ("num_rx", cfg.num_rx),
    ];
    for (field, value) in counts {
        if value == 0 {
            return Err(ConfigError::NonPositive { field, value: 0.0 });
        }
    }

    let window = f64::from(cfg.samples_per_chirp) / cfg.sample_rate;
    if window > cfg.chirp_repetition_time {
        return Err(ConfigError::SamplingWindowTooLong {
            window,
            limit: cfg.chirp_repetition_time,
        });
    }
    let span = f64::from(cfg.chirps_per_frame) * cfg.chirp_repetition_time;
    if span > cfg.frame_period {
        return Err(ConfigError::ChirpSpanTooLong {
            span,
            limit: cfg.frame_period,
        });
    }
    Ok(ValidatedConfig(cfg.clone()))
}

/// Quantities derived from a validated config. Pure arithmetic — computing
/// them can never fail.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// Carrier wavelength λ = c / f_c [m].
    pub wavelength: f64,
    /// Range covered by one FFT bin, c·f_s / (2·S·N_fft) [m], where N_fft is
    /// [`range_fft_len`](Self::range_fft_len).
    pub range_bin_spacing: f64,
    /// Velocity per Doppler bin at the native slow-time length,
    /// λ / (2·N_c·T_rep) [m/s].
    pub doppler_resolution: f64,
    /// λ / 4π [m/rad]: multiplies a phase slope [rad/s] into velocity [m/s].
    pub phase_velocity_factor: f64,
    /// Largest velocity the chirp-to-chirp phase step can represent without
    /// aliasing, λ / (4·T_rep) [m/s].
    pub max_unambiguous_velocity: f64,
    /// Fast-time FFT length: samples_per_chirp rounded up to a power of two.
    pub range_fft_len: usize,
}

/// Computes [`DerivedParams`] from a validated config.
pub fn derive_params(cfg: &ValidatedConfig) -> DerivedParams {
    let wavelength = SPEED_OF_LIGHT / cfg.carrier_freq;
    let range_fft_len = (cfg.samples_per_chirp as usize).next_power_of_two();
    let range_bin_spacing =
        SPEED_OF_LIGHT * cfg.sample_rate / (2.0 * cfg.chirp_slope * range_fft_len as f64);
    // Grouped as (2·N_c)·T_rep so doubling N_c scales the denominator by an
    // exact power of two, halving the resolution bit-exactly.
    let doppler_resolution =
        wavelength / (2.0 * f64::from(cfg.chirps_per_frame) * cfg.chirp_repetition_time);
    DerivedParams {
        wavelength,
        range_bin_spacing,
        doppler_resolution,
        phase_velocity_factor: wavelength / (4.0 * PI),
        max_unambiguous_velocity: wavelength / (4.0 * cfg.chirp_repetition_time),
        range_fft_len,
    }
}

// ─────────────────────────────── tests ───────────────────────────────
