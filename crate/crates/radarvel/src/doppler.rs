//! Doppler-FFT baseline estimator.
//!
//! The classical range–Doppler approach: range-FFT every chirp, then a
//! slow-time DFT across chirps at each range bin. The strongest
//! range–Doppler cell names the ego velocity. Resolution is quantized to
//! `λ/(2·M·T_rep)` for an `M`-point slow-time transform — with the default
//! profile about 0.034 m/s per bin, which is exactly the granularity the
//! phase-slope pipeline exists to beat.
//!
//! The slow-time transform runs at the *native* chirp count (times an
//! optional integer pad factor), not rounded up to a power of two: padding
//! to a different length would silently change the velocity quantization,
//! and bin-exact behavior at multiples of the native resolution is part of
//! this estimator's contract.

use thiserror::Error;

use crate::capture::{Capture, Frame};
use crate::config::{derive_params, validate_config, ConfigError, ValidatedConfig};
use crate::dsp::{hann_window, DftPlan};
use crate::par;
use crate::pipeline::{range_profiles, PipelineError};
use crate::records::{Method, VelocityEstimate};

/// Errors from the baseline estimator.
#[derive(Debug, Error)]
pub enum DopplerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Range–Doppler magnitude map of one frame.
///
/// `rows[d][r]` is the magnitude at Doppler row `d`, range bin `r`. Rows are
/// ordered by increasing velocity: row `d` corresponds to
/// `(d − n_doppler/2) · velocity_per_bin`, so receding (negative) velocities
/// occupy the lower half and row `n_doppler/2` is exactly zero.
#[derive(Debug, Clone)]
pub struct DopplerMap {
    pub frame: u32,
    pub rows: Vec<Vec<f64>>,
    pub n_doppler: usize,
    pub n_range: usize,
    /// Velocity step between adjacent rows [m/s].
    pub velocity_per_bin: f64,
}

impl DopplerMap {
    /// Velocity at the center of Doppler row `row`.
    pub fn velocity_of_row(&self, row: usize) -> f64 {
        (row as f64 - (self.n_doppler / 2) as f64) * self.velocity_per_bin
    }
}

/// Range–Doppler map at the native slow-time length (`pad_factor` 1).
pub fn doppler_map(frame: &Frame, cfg: &ValidatedConfig) -> Result<DopplerMap, DopplerError> {
    doppler_map_padded(frame, cfg, 1)
}

/// Range–Doppler map with the slow-time transform zero-padded to
/// `chirps_per_frame × pad_factor` points. Padding interpolates the Doppler
/// spectrum (finer velocity grid) without changing where true peaks sit.
pub fn doppler_map_padded(
    frame: &Frame,
    cfg: &ValidatedConfig,
    pad_factor: usize,
) -> Result<DopplerMap, DopplerError> {
    assert!(pad_factor >= 1, "pad_factor must be at least 1");
    let profiles = range_profiles(frame, cfg)?;
    let params = derive_params(cfg);
    let n_chirps = cfg.chirps_per_frame as usize;
    let n_range = params.range_fft_len;
    let n_doppler = n_chirps * pad_factor;
    let velocity_per_bin = params.wavelength / (2.0 * n_doppler as f64 * cfg.chirp_repetition_time);

    let window = hann_window(n_chirps);
    let plan = DftPlan::new(n_doppler);
    // Doppler spectra per range bin, still in FFT index order
    let mut spectra_mag = vec![vec![0.0; n_range]; n_doppler];
    let mut slow = vec![num_complex::Complex64::new(0.0, 0.0); n_doppler];
    for r in 0..n_range {
        for k in 0..n_chirps {
            slow[k] = profiles.spectra[k][r] * window[k];
        }
        for s in slow.iter_mut().skip(n_chirps) {
            *s = num_complex::Complex64::new(0.0, 0.0);
        }
        let spectrum = plan.forward(&slow);
        for (d, x) in spectrum.iter().enumerate() {
            spectra_mag[d][r] = x.norm();
        }
    }

    // reorder FFT bins into ascending-velocity rows: an approaching target
    // (positive v) shrinks its two-way phase chirp over chirp, i.e. shows a
    // *negative* slow-time frequency, so velocity row d reads FFT bin
    // (n_doppler/2 − d) mod n_doppler
    let half = (n_doppler / 2) as i64;
    let m = n_doppler as i64;
    let rows = (0..n_doppler as i64)
        .map(|d| {
            let idx = (half - d).rem_euclid(m) as usize;
            std::mem::take(&mut spectra_mag[idx])
        })
        .collect();

    Ok(DopplerMap {
        frame: frame.index,
        rows,
        n_doppler,
        n_range,
        velocity_per_bin,
    })
}

/// Velocity of the strongest range–Doppler cell, searched over interior
/// positive-range bins `[1, n_range/2 − 1]` (excluding DC and the mirror
/// half, where real-world leakage piles up).
///
/// An all-zero map (empty scene, or too few range bins to search) reports
/// zero velocity with `tracks: 0`; otherwise `tracks` is 1. Ties go to the
/// lowest (row, bin) pair, making the argmax deterministic.
pub fn doppler_velocity(frame: &Frame, cfg: &ValidatedConfig) -> Result<VelocityEstimate, DopplerError> {
    let map = doppler_map(frame, cfg)?;
    let mut best = 0.0;
    let mut best_row: Option<usize> = None;
    if map.n_range >= 4 {
        for (d, row) in map.rows.iter().enumerate() {
            for &mag in &row[1..map.n_range / 2] {
                if mag > best {
                    best = mag;
                    best_row = Some(d);
                }
            }
        }
    }
    let (velocity, tracks) = match best_row {
        Some(d) => (map.velocity_of_row(d), 1),
        None => (0.0, 0),
    };
    Ok(VelocityEstimate {
        frame: frame.index,
        time_s: f64::from(frame.index) * cfg.frame_period,
        velocity_mps: velocity,
        method: Method::Doppler,
        tracks,
    })
}

/// Baseline estimates for every frame of a capture, in frame order.
/// Frames are independent, so this parallelizes under the `parallel` feature.
pub fn doppler_estimates(capture: &Capture) -> Result<Vec<VelocityEstimate>, DopplerError> {
    let cfg = validate_config(&capture.config)?;
    par::try_map_indexed(capture.frames.len(), |i| {
        doppler_velocity(&capture.frames[i], &cfg)
    })
}

// ─────────────────────────────── tests ───────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::IqSample;
    use crate::config::{validate_config, RadarConfig};

    fn small_cfg() -> ValidatedConfig {
        validate_config(&RadarConfig {
            samples_per_chirp: 16,
            chirps_per_frame: 12,
            chirp_repetition_time: 86.0e-6,
            frame_period: 2.0e-3,
            ..RadarConfig::default()
        })
        .unwrap()
    }

    /// Frame whose chirps all carry the same complex tone at range bin `bin`
    /// — a perfectly stationary target.
    fn stationary_frame(cfg: &ValidatedConfig, bin: usize) -> Frame {
        let n = cfg.samples_per_chirp as usize;
        let chirp: Vec<IqSample> = (0..n)
            .map(|s| {
                let angle = std::f64::consts::TAU * bin as f64 * s as f64 / n as f64;
                IqSample {
                    i: (1000.0 * angle.cos()).round() as i16,
                    q: (1000.0 * angle.sin()).round() as i16,
                }
            })
            .collect();
        let data: Vec<IqSample> = std::iter::repeat(chirp)
            .take(cfg.chirps_per_frame as usize)
            .flatten()
            .collect();
        Frame::new(0, cfg.chirps_per_frame as usize, 1, n, data)
    }

    #[test]
    fn map_dimensions_and_row_velocities() {
        let cfg = small_cfg();
        let frame = stationary_frame(&cfg, 3);
        let map = doppler_map(&frame, &cfg).unwrap();
        assert_eq!(map.n_doppler, 12);
        assert_eq!(map.n_range, 16);
        assert_eq!(map.rows.len(), 12);
        assert!(map.rows.iter().all(|r| r.len() == 16));
        // center row is exactly zero velocity; spacing matches λ/(2MT)
        assert_eq!(map.velocity_of_row(6), 0.0);
        let expected = derive_params(&cfg).wavelength
            / (2.0 * 12.0 * cfg.chirp_repetition_time);
        assert_eq!(map.velocity_per_bin, expected);
        assert_eq!(map.velocity_of_row(7), expected);
        assert_eq!(map.velocity_of_row(5), -expected);
    }

    #[test]
    fn padding_scales_rows_without_moving_the_peak_velocity() {
        let cfg = small_cfg();
        let frame = stationary_frame(&cfg, 3);
        let map = doppler_map_padded(&frame, &cfg, 2).unwrap();
        assert_eq!(map.n_doppler, 24);
        let base = doppler_map(&frame, &cfg).unwrap();
        assert!((map.velocity_per_bin - base.velocity_per_bin / 2.0).abs() < 1e-18);
    }

    #[test]
    fn stationary_tone_peaks_at_zero_velocity_row() {
        let cfg = small_cfg();
        let frame = stationary_frame(&cfg, 3);
        let map = doppler_map(&frame, &cfg).unwrap();
        let mut best = (0usize, 0usize, 0.0f64);
        for (d, row) in map.rows.iter().enumerate() {
            for (r, &m) in row.iter().enumerate() {
                if m > best.2 {
                    best = (d, r, m);
                }
            }
        }
        assert_eq!(best.0, map.n_doppler / 2, "peak row");
        assert_eq!(best.1, 3, "peak range bin");
        let est = doppler_velocity(&frame, &cfg).unwrap();
        assert_eq!(est.velocity_mps, 0.0);
        assert_eq!(est.tracks, 1);
        assert_eq!(est.method, Method::Doppler);
    }

    #[test]
    fn silent_frame_reports_zero_with_no_tracks() {
        let cfg = small_cfg();
        let n = cfg.samples_per_chirp as usize * cfg.chirps_per_frame as usize;
        let frame = Frame::new(
            0,
            cfg.chirps_per_frame as usize,
            1,
            cfg.samples_per_chirp as usize,
            vec![IqSample { i: 0, q: 0 }; n],
        );
        let est = doppler_velocity(&frame, &cfg).unwrap();
        assert_eq!(est.velocity_mps, 0.0);
        assert_eq!(est.tracks, 0);
    }

    #[test]
    fn estimates_are_integer_multiples_of_the_bin_spacing() {
        let cfg = small_cfg();
        let frame = stationary_frame(&cfg, 5);
        let map = doppler_map(&frame, &cfg).unwrap();
        let est = doppler_velocity(&frame, &cfg).unwrap();
        let ratio = est.velocity_mps / map.velocity_per_bin;
        assert!((ratio - ratio.round()).abs() < 1e-12);
    }
}
