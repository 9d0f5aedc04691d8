//! End-to-end physics: synthetic scenes pushed through both estimators,
//! checked against values derived independently from the radar equations.

use std::f64::consts::{PI, TAU};

use radarvel::config::{derive_params, validate_config};
use radarvel::doppler::{doppler_estimates, doppler_map, doppler_map_padded, doppler_velocity};
use radarvel::eval::mae;
use radarvel::pipeline::{
    frame_peaks, process_capture, range_profiles, select_static_tracks, update_tracks,
    PipelineParams, TrackerState,
};
use radarvel::sim::{
    synth_capture, synth_frame, EgoTrajectory, NoiseSpec, Reflector, Scene, TrajectorySegment,
};
use radarvel::{Method, RadarConfig, ValidatedConfig};

fn cfg() -> ValidatedConfig {
    validate_config(&RadarConfig::default()).unwrap()
}

fn reflector(distance_m: f64, amplitude: f64) -> Reflector {
    Reflector {
        distance_m,
        amplitude,
        appear_frame: None,
        disappear_frame: None,
    }
}

fn one_reflector_scene(distance_m: f64) -> Scene {
    Scene {
        reflectors: vec![reflector(distance_m, 1.0)],
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

/// Smallest representative of `angle` in (−π, π].
fn wrap(angle: f64) -> f64 {
    angle - TAU * ((angle - PI) / TAU).ceil()
}

#[test]
fn reflector_on_a_bin_center_peaks_exactly_there() {
    let c = cfg();
    let p = derive_params(&c);
    // ten bins of range: beat frequency lands exactly on FFT bin 10
    let d = 10.0 * p.range_bin_spacing;
    let frame = synth_frame(
        &c,
        &one_reflector_scene(d),
        &EgoTrajectory::constant(0.0),
        &NoiseSpec::noiseless(),
        0,
    )
    .unwrap();
    let profiles = range_profiles(&frame, &c).unwrap();
    let mags: Vec<f64> = profiles.spectra[0].iter().map(|x| x.norm()).collect();
    assert_eq!(argmax(&mags[..p.range_fft_len / 2]), 10);
    // the frame-level peak picker agrees
    let peaks = frame_peaks(&profiles, 1);
    assert_eq!(peaks.peaks()[0].bin, 10);
}

#[test]
fn peak_bin_phase_equals_two_way_carrier_phase() {
    // the simulator references the beat tone to the window center, so the
    // windowed range-FFT value at the peak bin carries exactly 4πd/λ
    let c = cfg();
    let p = derive_params(&c);
    for d in [2.0, 10.0 * p.range_bin_spacing, 7.3] {
        let frame = synth_frame(
            &c,
            &one_reflector_scene(d),
            &EgoTrajectory::constant(0.0),
            &NoiseSpec::noiseless(),
            0,
        )
        .unwrap();
        let profiles = range_profiles(&frame, &c).unwrap();
        let mags: Vec<f64> = profiles.spectra[0].iter().map(|x| x.norm()).collect();
        let bin = argmax(&mags[..p.range_fft_len / 2]);
        let measured = profiles.spectra[0][bin].arg();
        let expected = wrap(4.0 * PI * d / p.wavelength);
        // int16 quantization of the samples is the only noise source here
        assert!(
            wrap(measured - expected).abs() < 1e-4,
            "d={d}: measured {measured}, expected {expected}"
        );
    }
}

#[test]
fn chirp_to_chirp_phase_step_matches_the_radar_equation() {
    let c = cfg();
    let p = derive_params(&c);
    let v = 0.05;
    let frame = synth_frame(
        &c,
        &one_reflector_scene(2.0),
        &EgoTrajectory::constant(v),
        &NoiseSpec::noiseless(),
        0,
    )
    .unwrap();
    let profiles = range_profiles(&frame, &c).unwrap();
    let mags: Vec<f64> = profiles.spectra[0].iter().map(|x| x.norm()).collect();
    let bin = argmax(&mags[..p.range_fft_len / 2]);

    // approaching ⇒ phase decreases by 4π·v·T_rep/λ per chirp
    let expected = -4.0 * PI * v * c.chirp_repetition_time / p.wavelength;
    assert!((expected - (-0.0138787)).abs() < 1e-4, "{expected}");
    let mut prev = profiles.spectra[0][bin].arg();
    for spectrum in &profiles.spectra[1..] {
        let cur = spectrum[bin].arg();
        let step = wrap(cur - prev);
        assert!(
            (step - expected).abs() < 1e-4,
            "step {step} vs {expected}"
        );
        prev = cur;
    }
}

#[test]
fn pipeline_recovers_a_sub_bin_velocity_to_sub_mm_accuracy() {
    let c = cfg();
    let v = 0.02; // under one Doppler bin (≈ 0.0341 m/s)
    let (capture, truth) = synth_capture(
        &c,
        &one_reflector_scene(2.0),
        &EgoTrajectory::constant(v),
        &NoiseSpec::noiseless(),
        20,
    )
    .unwrap();
    let estimates = process_capture(&capture, &PipelineParams::default()).unwrap();
    // online tracking: first estimates appear once a track has 3 frames
    assert_eq!(estimates.len(), 18);
    assert_eq!(estimates[0].frame, 2);
    assert_eq!(estimates.last().unwrap().frame, 19);
    assert!(estimates.iter().all(|e| e.method == Method::Phase));
    // one genuine reflector; its stable window sidelobes may track too, but
    // the magnitude-weighted fusion pins the result to the main lobe
    assert!(estimates.iter().all(|e| e.tracks >= 1));
    assert_eq!(estimates[0].tracks, estimates[17].tracks);
    let err = mae(&estimates, &truth).unwrap();
    assert!(err < 1e-4, "MAE {err}");

    // the whole-bin baseline can only say "one bin's worth"
    let baseline = doppler_estimates(&capture).unwrap();
    let p = derive_params(&c);
    for e in &baseline {
        assert!((e.velocity_mps - p.doppler_resolution).abs() < 1e-9, "{e:?}");
    }
}

#[test]
fn pipeline_tracks_negative_velocities_with_the_same_accuracy() {
    let c = cfg();
    let v = -0.05;
    let (capture, truth) = synth_capture(
        &c,
        &one_reflector_scene(2.0),
        &EgoTrajectory::constant(v),
        &NoiseSpec::noiseless(),
        10,
    )
    .unwrap();
    let estimates = process_capture(&capture, &PipelineParams::default()).unwrap();
    let err = mae(&estimates, &truth).unwrap();
    assert!(err < 1e-4, "MAE {err}");
    assert!(estimates.iter().all(|e| e.velocity_mps < 0.0));
}

#[test]
fn static_scene_reads_zero_on_both_estimators() {
    let c = cfg();
    let (capture, _) = synth_capture(
        &c,
        &one_reflector_scene(2.0),
        &EgoTrajectory::constant(0.0),
        &NoiseSpec::noiseless(),
        6,
    )
    .unwrap();
    for e in process_capture(&capture, &PipelineParams::default()).unwrap() {
        assert!(e.velocity_mps.abs() < 1e-9, "{e:?}");
    }
    for e in doppler_estimates(&capture).unwrap() {
        assert_eq!(e.velocity_mps, 0.0, "{e:?}");
    }
}

#[test]
fn doppler_is_bin_exact_at_multiples_of_its_resolution() {
    let c = cfg();
    let p = derive_params(&c);
    let v = 3.0 * p.doppler_resolution;
    let frame = synth_frame(
        &c,
        &one_reflector_scene(2.0),
        &EgoTrajectory::constant(v),
        &NoiseSpec::noiseless(),
        0,
    )
    .unwrap();
    let est = doppler_velocity(&frame, &c).unwrap();
    assert!((est.velocity_mps - v).abs() < 1e-9, "{est:?}");

    // the peak sits exactly 3 rows above the zero-velocity center row
    let map = doppler_map(&frame, &c).unwrap();
    let (mut best, mut at) = (0.0, (0, 0));
    for (d, row) in map.rows.iter().enumerate() {
        for (r, &m) in row.iter().enumerate().take(map.n_range / 2).skip(1) {
            if m > best {
                best = m;
                at = (d, r);
            }
        }
    }
    assert_eq!(at.0, map.n_doppler / 2 + 3);

    // doubling the slow-time length doubles the row offset, same velocity
    let padded = doppler_map_padded(&frame, &c, 2).unwrap();
    let (mut best, mut at) = (0.0, 0);
    for (d, row) in padded.rows.iter().enumerate() {
        for &m in &row[1..padded.n_range / 2] {
            if m > best {
                best = m;
                at = d;
            }
        }
    }
    assert_eq!(at, padded.n_doppler / 2 + 6);
    assert!((padded.velocity_of_row(at) - v).abs() < 1e-9);
}

#[test]
fn doppler_quantizes_sub_bin_velocities_to_whole_bins() {
    let c = cfg();
    let p = derive_params(&c);
    let (capture, truth) = synth_capture(
        &c,
        &one_reflector_scene(2.0),
        &EgoTrajectory::constant(0.02),
        &NoiseSpec::noiseless(),
        4,
    )
    .unwrap();
    let estimates = doppler_estimates(&capture).unwrap();
    for e in &estimates {
        // 0.02 m/s rounds up to the first bin at ≈ 0.0341 m/s
        assert!((e.velocity_mps - p.doppler_resolution).abs() < 1e-9);
        let ratio = e.velocity_mps / p.doppler_resolution;
        assert!((ratio - ratio.round()).abs() < 1e-9);
    }
    let err = mae(&estimates, &truth).unwrap();
    assert!((err - (p.doppler_resolution - 0.02)).abs() < 1e-9, "{err}");
}

#[test]
fn transient_ghost_reflector_never_contaminates_estimates() {
    let c = cfg();
    let clean = one_reflector_scene(2.0);
    let mut ghosted = clean.clone();
    ghosted.reflectors.push(Reflector {
        distance_m: 4.0,
        amplitude: 0.5,
        appear_frame: Some(5),
        disappear_frame: Some(6),
    });
    let traj = EgoTrajectory::constant(0.02);
    let noise = NoiseSpec::noiseless();
    let (cap_clean, _) = synth_capture(&c, &clean, &traj, &noise, 12).unwrap();
    let (cap_ghost, _) = synth_capture(&c, &ghosted, &traj, &noise, 12).unwrap();

    let est_clean = process_capture(&cap_clean, &PipelineParams::default()).unwrap();
    let est_ghost = process_capture(&cap_ghost, &PipelineParams::default()).unwrap();
    assert_eq!(est_clean.len(), est_ghost.len());
    for (a, b) in est_clean.iter().zip(&est_ghost) {
        assert_eq!(a.frame, b.frame);
        // the ghost's only influence is spectral leakage in its single
        // frame, orders below the tolerance
        assert!(
            (a.velocity_mps - b.velocity_mps).abs() < 1e-5,
            "frame {}: {} vs {}",
            a.frame,
            a.velocity_mps,
            b.velocity_mps
        );
    }

    // replay the tracker over the ghosted capture: the track the ghost opens
    // must never reach the 3-frame maturity bar
    let p = derive_params(&c);
    let ghost_bin = (4.0 / p.range_bin_spacing).round() as i64;
    let mut tracker = TrackerState::new();
    for frame in &cap_ghost.frames {
        let profiles = range_profiles(frame, &c).unwrap();
        update_tracks(&mut tracker, &frame_peaks(&profiles, 5), frame.index).unwrap();
        for track in select_static_tracks(&tracker, 3) {
            assert!(
                (track.anchor as i64 - ghost_bin).abs() > 3,
                "ghost track matured: {track:?}"
            );
        }
    }
}

#[test]
fn velocity_change_mid_capture_is_followed_per_frame() {
    let c = cfg();
    // constant 0.05 m/s for 10 frames, then a hard stop
    let traj = EgoTrajectory {
        segments: vec![
            TrajectorySegment { t_s: 0.0, v_mps: 0.05 },
            TrajectorySegment {
                t_s: 10.0 * c.frame_period,
                v_mps: 0.0,
            },
        ],
    };
    let (capture, truth) = synth_capture(
        &c,
        &one_reflector_scene(3.0),
        &traj,
        &NoiseSpec::noiseless(),
        20,
    )
    .unwrap();
    let estimates = process_capture(&capture, &PipelineParams::default()).unwrap();
    let err = mae(&estimates, &truth).unwrap();
    assert!(err < 1e-4, "MAE {err}");
    // frames well past the stop read zero
    for e in estimates.iter().filter(|e| e.frame >= 11) {
        assert!(e.velocity_mps.abs() < 1e-6, "{e:?}");
    }
}

#[test]
fn multi_reflector_scene_fuses_agreeing_tracks() {
    let c = cfg();
    let scene = Scene {
        reflectors: vec![
            reflector(2.0, 1.0),
            reflector(5.2, 0.6),
            reflector(11.0, 0.3),
        ],
    };
    let v = 0.03;
    let (capture, truth) = synth_capture(
        &c,
        &scene,
        &EgoTrajectory::constant(v),
        &NoiseSpec::noiseless(),
        12,
    )
    .unwrap();
    let estimates = process_capture(&capture, &PipelineParams::default()).unwrap();
    // all three reflectors — and possibly their sidelobes — must agree
    assert!(estimates.iter().all(|e| e.tracks >= 3), "{estimates:?}");
    let err = mae(&estimates, &truth).unwrap();
    assert!(err < 1e-4, "MAE {err}");
}
