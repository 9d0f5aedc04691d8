//! Phase-slope ego-velocity pipeline.
//!
//! Per frame: range-FFT every chirp, pick the strongest range peaks, track
//! them across frames with a ±3-bin gate, and for each track that has proven
//! persistent, regress the unwrapped per-chirp phase at its range bin against
//! slow time. The ego velocity is `v = −(λ/4π)·slope` — a reflector being
//! approached loses two-way path length, so its phase *decreases* and
//! positive velocity comes out of a negative slope. Per-track velocities are
//! fused with a magnitude-weighted lower median, which shrugs off both
//! outlier tracks and weak noise-born tracks without biasing the result when
//! all tracks agree.
//!
//! Tracking is inherently sequential (each frame's associations depend on
//! the tracker state), so [`process_capture`] runs it serially between two
//! embarrassingly parallel stages: range processing before, phase regression
//! after.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::capture::{Capture, Frame};
use crate::config::{derive_params, validate_config, ConfigError, DerivedParams, ValidatedConfig};
use crate::dsp::{fft_complex, hann_window, top_n_peaks, unwrap_phase, DspError, PeakSet};
use crate::par;
use crate::records::{Method, VelocityEstimate};

/// Peaks may wander this many range bins from a track's anchor and still
/// extend it; new tracks must clear every existing anchor by more than this.
pub const TRACK_GATE_BINS: i64 = 3;

/// Knobs for [`process_capture`]. Defaults match the CLI defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineParams {
    /// Strongest range peaks considered per frame (≥ 1).
    pub n_peaks: usize,
    /// Frames of history before a track is trusted for estimation (≥ 1).
    pub min_frames: usize,
    /// Consecutive missed frames a track survives.
    pub miss_tolerance: u32,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            n_peaks: 5,
            min_frames: 3,
            miss_tolerance: 2,
        }
    }
}

/// Errors from the pipeline stages.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frames must be processed in increasing order: frame {got} after {last}")]
    FrameOrder { got: u32, last: u32 },
    #[error("track {track_id} has no observation in frame {frame}")]
    MissingFrame { track_id: u64, frame: u32 },
    #[error("phase regression needs at least 2 chirps, got {len}")]
    InsufficientData { len: usize },
    #[error("no tracks available to fuse")]
    NoTracks,
    #[error("frame {frame} does not match the capture's configured shape")]
    FrameShape { frame: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

// ───────────────────────── range processing ─────────────────────────

/// Range spectra of one frame: one complex spectrum per chirp (rx 0), each
/// `range_fft_len` long.
#[derive(Debug, Clone)]
pub struct RangeProfiles {
    pub frame: u32,
    pub spectra: Vec<Vec<Complex64>>,
}

/// Hann-windowed, zero-padded range FFT of every chirp in the frame (rx 0),
/// phase-referenced to the window center.
///
/// The plain DFT references phase to sample 0, which stamps bin `k` with a
/// linear phase `−π·k·(N_s−1)/N_fft` from the window being centered at
/// sample `(N_s−1)/2`. That term is constant per bin — chirp-to-chirp phase
/// slopes never see it — but removing it makes each value's argument
/// physically meaningful: a reflector read at its bin shows exactly its
/// two-way carrier phase `4πd/λ` (the symmetric window contributes only a
/// real factor).
pub fn range_profiles(
    frame: &Frame,
    cfg: &ValidatedConfig,
) -> Result<RangeProfiles, PipelineError> {
    if !frame.matches_config(cfg) {
        return Err(PipelineError::FrameShape {
            frame: frame.index,
        });
    }
    let n_samples = cfg.samples_per_chirp as usize;
    let n_fft = derive_params(cfg).range_fft_len;
    let window = hann_window(n_samples);
    let centering: Vec<Complex64> = (0..n_fft)
        .map(|k| {
            Complex64::from_polar(
                1.0,
                PI * k as f64 * (n_samples as f64 - 1.0) / n_fft as f64,
            )
        })
        .collect();
    let (n_chirps, _, _) = frame.dims();
    let mut spectra = Vec::with_capacity(n_chirps);
    for chirp in 0..n_chirps {
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for (dst, (s, w)) in buf.iter_mut().zip(frame.chirp(chirp, 0).iter().zip(&window)) {
            *dst = s.to_complex() * w;
        }
        let mut spectrum = fft_complex(&buf, false)?;
        for (x, r) in spectrum.iter_mut().zip(&centering) {
            *x *= r;
        }
        spectra.push(spectrum);
    }
    Ok(RangeProfiles {
        frame: frame.index,
        spectra,
    })
}

/// Strongest peaks of the frame's mean magnitude profile, searched over
/// interior positive-range bins `[1, N/2 − 1]`. Spectra shorter than 4 bins
/// have no interior and yield no peaks.
pub fn frame_peaks(profiles: &RangeProfiles, n_peaks: usize) -> PeakSet {
    assert!(n_peaks >= 1, "n_peaks must be at least 1");
    let n_fft = profiles.spectra.first().map_or(0, Vec::len);
    if n_fft < 4 || profiles.spectra.is_empty() {
        return PeakSet::from_peaks(Vec::new());
    }
    let mut mean = vec![0.0; n_fft];
    for spectrum in &profiles.spectra {
        for (m, x) in mean.iter_mut().zip(spectrum) {
            *m += x.norm();
        }
    }
    let n_chirps = profiles.spectra.len() as f64;
    for m in &mut mean {
        *m /= n_chirps;
    }
    top_n_peaks(&mean, n_peaks, 1, n_fft / 2 - 1)
}

// ──────────────────────────── tracking ────────────────────────────

/// One observation of a track: where its peak sat in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: u32,
    pub bin: usize,
    pub magnitude: f64,
}

/// A persistent range peak followed across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectorTrack {
    pub id: u64,
    /// Lower median of the history bins — robust center of the track.
    pub anchor: usize,
    pub history: Vec<TrackPoint>,
}

impl ReflectorTrack {
    /// The track's observation in `frame`, if it was seen there.
    pub fn point_at(&self, frame: u32) -> Option<TrackPoint> {
        self.history.iter().copied().find(|p| p.frame == frame)
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

fn lower_median_bin(history: &[TrackPoint]) -> usize {
    let mut bins: Vec<usize> = history.iter().map(|p| p.bin).collect();
    bins.sort_unstable();
    bins[(bins.len() - 1) / 2]
}

#[derive(Debug, Clone)]
struct ActiveTrack {
    track: ReflectorTrack,
    misses: u32,
}

/// Tracker state carried between frames. Tracks are stored in creation
/// order, which keeps every association step deterministic.
#[derive(Debug, Clone, Default)]
pub struct TrackerState {
    tracks: Vec<ActiveTrack>,
    next_id: u64,
    last_frame: Option<u32>,
    miss_tolerance: u32,
}

impl TrackerState {
    pub fn new() -> TrackerState {
        TrackerState::with_miss_tolerance(PipelineParams::default().miss_tolerance)
    }

    pub fn with_miss_tolerance(miss_tolerance: u32) -> TrackerState {
        TrackerState {
            tracks: Vec::new(),
            next_id: 0,
            last_frame: None,
            miss_tolerance,
        }
    }

    /// Currently alive tracks, in creation order.
    pub fn active(&self) -> impl Iterator<Item = &ReflectorTrack> {
        self.tracks.iter().map(|a| &a.track)
    }
}

fn gate(anchor: usize, bin: usize) -> bool {
    (anchor as i64 - bin as i64).abs() <= TRACK_GATE_BINS
}

/// Folds one frame's peaks into the tracker.
///
/// Peaks are processed strongest-first. A peak extends the nearest gated
/// track (ties break toward the lower anchor) provided the extension keeps
/// every historical bin within the gate of the re-computed anchor; otherwise
/// it may open a new track, but only if it clears *all* existing anchors —
/// near-anchor stragglers are sidelobes or noise and are dropped. Tracks
/// keep at most one observation per frame. Unmatched tracks accrue a miss;
/// tracks over the miss tolerance retire.
pub fn update_tracks(
    state: &mut TrackerState,
    peaks: &PeakSet,
    frame: u32,
) -> Result<(), PipelineError> {
    if let Some(last) = state.last_frame {
        if frame <= last {
            return Err(PipelineError::FrameOrder { got: frame, last });
        }
    }

    let mut extended = vec![false; state.tracks.len()];
    for peak in peaks.peaks() {
        // nearest gated track not yet extended this frame; ties → lower anchor
        let mut best: Option<(usize, i64, usize)> = None; // (idx, dist, anchor)
        for (idx, active) in state.tracks.iter().enumerate() {
            if extended.get(idx).copied().unwrap_or(false) {
                continue;
            }
            let anchor = active.track.anchor;
            let dist = (anchor as i64 - peak.bin as i64).abs();
            if dist > TRACK_GATE_BINS {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bd, ba)) => dist < bd || (dist == bd && anchor < ba),
            };
            if better {
                best = Some((idx, dist, anchor));
            }
        }

        let point = TrackPoint {
            frame,
            bin: peak.bin,
            magnitude: peak.magnitude,
        };

        let mut matched = false;
        if let Some((idx, _, _)) = best {
            let active = &mut state.tracks[idx];
            active.track.history.push(point);
            let anchor = lower_median_bin(&active.track.history);
            if active.track.history.iter().all(|p| gate(anchor, p.bin)) {
                active.track.anchor = anchor;
                active.misses = 0;
                extended[idx] = true;
                matched = true;
            } else {
                // extension would drag history outside the gate — reject
                active.track.history.pop();
            }
        }

        if !matched {
            // open a new track only well clear of every existing anchor
            let clear = state
                .tracks
                .iter()
                .all(|a| !gate(a.track.anchor, peak.bin));
            if clear {
                state.tracks.push(ActiveTrack {
                    track: ReflectorTrack {
                        id: state.next_id,
                        anchor: peak.bin,
                        history: vec![point],
                    },
                    misses: 0,
                });
                state.next_id += 1;
                extended.push(true);
            }
        }
    }

    for (idx, active) in state.tracks.iter_mut().enumerate() {
        if !extended[idx] {
            active.misses += 1;
        }
    }
    let tolerance = state.miss_tolerance;
    state.tracks.retain(|a| a.misses <= tolerance);
    state.last_frame = Some(frame);
    Ok(())
}

/// Tracks mature enough to trust: at least `min_frames` observations.
/// Returned in creation order.
pub fn select_static_tracks(state: &TrackerState, min_frames: usize) -> Vec<ReflectorTrack> {
    assert!(min_frames >= 1, "min_frames must be at least 1");
    state
        .active()
        .filter(|t| t.len() >= min_frames)
        .cloned()
        .collect()
}

// ───────────────────── phase regression and fusion ─────────────────────

/// Unwrapped per-chirp phase of one track within one frame.
#[derive(Debug, Clone)]
pub struct PhaseSeries {
    pub track_id: u64,
    pub frame: u32,
    /// Chirp-to-chirp spacing [s].
    pub dt: f64,
    pub phases: Vec<f64>,
}

/// Reads the track's range bin out of every chirp spectrum and unwraps the
/// phase sequence.
pub fn extract_phase_series(
    profiles: &RangeProfiles,
    track: &ReflectorTrack,
    cfg: &ValidatedConfig,
) -> Result<PhaseSeries, PipelineError> {
    let point = track
        .point_at(profiles.frame)
        .ok_or(PipelineError::MissingFrame {
            track_id: track.id,
            frame: profiles.frame,
        })?;
    let raw: Vec<f64> = profiles
        .spectra
        .iter()
        .map(|spectrum| spectrum[point.bin].arg())
        .collect();
    Ok(PhaseSeries {
        track_id: track.id,
        frame: profiles.frame,
        dt: cfg.chirp_repetition_time,
        phases: unwrap_phase(&raw)?,
    })
}

/// Ordinary least squares slope of `phases` against `t_k = k·dt`, converted
/// to velocity: `v = −(λ/4π)·slope`.
pub fn estimate_track_velocity(
    series: &PhaseSeries,
    params: &DerivedParams,
) -> Result<f64, PipelineError> {
    let n = series.phases.len();
    if n < 2 {
        return Err(PipelineError::InsufficientData { len: n });
    }
    let t_mean = series.dt * (n as f64 - 1.0) / 2.0;
    let p_mean = series.phases.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &p) in series.phases.iter().enumerate() {
        let t = k as f64 * series.dt - t_mean;
        num += t * (p - p_mean);
        den += t * t;
    }
    Ok(-params.phase_velocity_factor * (num / den))
}

/// Magnitude-weighted lower median of `(velocity, weight)` pairs: the
/// smallest velocity whose cumulative weight reaches half the total.
///
/// With equal weights this is the plain lower median. Weighting by peak
/// magnitude keeps faint noise-born tracks (which carry essentially random
/// velocities) from steering the fused estimate, while genuine reflectors —
/// orders of magnitude stronger — dominate. All-zero weights fall back to
/// the unweighted lower median.
pub fn fuse_velocities(per_track: &[(f64, f64)]) -> Result<f64, PipelineError> {
    if per_track.is_empty() {
        return Err(PipelineError::NoTracks);
    }
    let mut sorted: Vec<(f64, f64)> = per_track.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Ok(sorted[(sorted.len() - 1) / 2].0);
    }
    let mut cumulative = 0.0;
    for &(v, w) in &sorted {
        cumulative += w;
        if cumulative >= total / 2.0 {
            return Ok(v);
        }
    }
    Ok(sorted[sorted.len() - 1].0) // unreachable barring rounding
}

// ─────────────────────────── full pipeline ───────────────────────────

/// Runs the whole pipeline over a capture and returns one estimate per frame
/// that had at least one mature track (tracking is online, so the first
/// `min_frames − 1` frames never produce estimates).
pub fn process_capture(
    capture: &Capture,
    params: &PipelineParams,
) -> Result<Vec<VelocityEstimate>, PipelineError> {
    assert!(params.n_peaks >= 1, "n_peaks must be at least 1");
    assert!(params.min_frames >= 1, "min_frames must be at least 1");
    let cfg = validate_config(&capture.config)?;
    let derived = derive_params(&cfg);
    let n = capture.frames.len();

    // stage 1 (parallel): per-frame range spectra
    let profiles: Vec<RangeProfiles> =
        par::try_map_indexed(n, |i| range_profiles(&capture.frames[i], &cfg))?;

    // stage 2 (serial): online tracking, snapshotting each frame's mature
    // tracks as they stood at that frame
    let mut tracker = TrackerState::with_miss_tolerance(params.miss_tolerance);
    let mut selected: Vec<Vec<ReflectorTrack>> = Vec::with_capacity(n);
    for prof in &profiles {
        let peaks = frame_peaks(prof, params.n_peaks);
        update_tracks(&mut tracker, &peaks, prof.frame)?;
        let mature = select_static_tracks(&tracker, params.min_frames)
            .into_iter()
            .filter(|t| t.point_at(prof.frame).is_some())
            .collect();
        selected.push(mature);
    }

    // stage 3 (parallel): per-frame regression and fusion
    let estimates: Vec<Option<VelocityEstimate>> = par::try_map_indexed(n, |i| -> Result<Option<VelocityEstimate>, PipelineError> {
        let tracks = &selected[i];
        if tracks.is_empty() || cfg.chirps_per_frame < 2 {
            return Ok(None);
        }
        let mut per_track = Vec::with_capacity(tracks.len());
        for track in tracks {
            let series = extract_phase_series(&profiles[i], track, &cfg)?;
            let v = estimate_track_velocity(&series, &derived)?;
            let magnitude = track
                .point_at(profiles[i].frame)
                .map_or(0.0, |p| p.magnitude);
            per_track.push((v, magnitude));
        }
        let fused = fuse_velocities(&per_track)?;
        Ok(Some(VelocityEstimate {
            frame: profiles[i].frame,
            time_s: f64::from(profiles[i].frame) * cfg.frame_period,
            velocity_mps: fused,
            method: Method::Phase,
            tracks: per_track.len() as u32,
        }))
    })?;

    Ok(estimates.into_iter().flatten().collect())
}

// ─────────────────────────────── tests ───────────────────────────────
