//! `radarvel` — synthesize radar captures, estimate ego velocity with the
//! phase-slope pipeline or the Doppler-FFT baseline, and score the results.
//!
//! Exit codes: 0 success, 1 usage or input validation, 2 I/O failure,
//! 3 computation failure.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radarvel::capture::{read_capture, write_capture, CaptureError};
use radarvel::config::{derive_params, validate_config, ConfigError, RadarConfig, ValidatedConfig};
use radarvel::doppler::{doppler_estimates, DopplerError};
use radarvel::eval::{build_report, write_report, EvalError, DEFAULT_BUCKET_EDGES};
use radarvel::eval::mae;
use radarvel::pipeline::{process_capture, PipelineError, PipelineParams};
use radarvel::records::{read_estimates, read_truth, write_estimates, write_truth};
use radarvel::sim::{
    max_scene_distance, synth_capture, EgoTrajectory, NoiseSpec, Reflector, Scene, SceneFile,
    SimError,
};

#[derive(Parser)]
#[command(
    name = "radarvel",
    version,
    about = "Phase-slope radar ego-velocity estimation with a Doppler-FFT baseline"
)]
struct Cli {
    /// Per-frame diagnostics on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a capture (and optional ground truth) from a scene description.
    Simulate {
        /// Radar configuration JSON; defaults to the built-in 77 GHz profile.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scene JSON: reflectors plus ego trajectory.
        #[arg(long)]
        scene: PathBuf,
        /// Number of frames to synthesize.
        #[arg(long, default_value_t = 20)]
        frames: u32,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Signal-to-noise ratio in dB; omit for a noiseless capture.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Output capture path.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth CSV path.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Phase-slope ego-velocity estimates from a capture.
    Estimate {
        #[arg(long)]
        capture: PathBuf,
        /// Output estimate CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Strongest range peaks tracked per frame.
        #[arg(long, default_value_t = 5)]
        n_peaks: usize,
        /// Frames of track history required before estimation.
        #[arg(long, default_value_t = 3)]
        min_frames: usize,
    },
    /// Doppler-FFT baseline estimates from a capture.
    Baseline {
        #[arg(long)]
        capture: PathBuf,
        /// Output estimate CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Join estimate CSVs against ground truth into an accuracy report.
    Evaluate {
        /// Estimate CSVs (repeatable; methods may be mixed).
        #[arg(long, required = true, num_args = 1..)]
        estimates: Vec<PathBuf>,
        /// Ground-truth CSV.
        #[arg(long)]
        truth: PathBuf,
        /// Output report path.
        #[arg(long)]
        out: PathBuf,
        /// True-velocity bucket edges, comma-separated m/s (ascending).
        #[arg(long, value_delimiter = ',')]
        buckets: Option<Vec<f64>>,
    },
    /// Simulate a sweep of constant velocities and score both methods.
    Compare {
        /// Radar configuration JSON; defaults to the built-in 77 GHz profile.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Constant velocities to sweep, comma-separated m/s.
        #[arg(long, value_delimiter = ',', required = true)]
        velocities: Vec<f64>,
        /// Frames per case.
        #[arg(long, default_value_t = 20)]
        frames: u32,
        /// Signal-to-noise ratio in dB; omit for noiseless cases.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Base noise seed; case k uses seed + k.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reflector distance for the synthetic scene [m].
        #[arg(long, default_value_t = 2.0)]
        distance: f64,
        /// Run cases one at a time instead of across threads.
        #[arg(long)]
        serial: bool,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

// ───────────────────────── error → exit code ─────────────────────────

#[derive(Debug)]
enum AppError {
    /// Bad flags or malformed/invalid inputs → exit 1.
    Usage(String),
    /// Filesystem or stream failure → exit 2.
    Io(String),
    /// Synthesis or estimation failure → exit 3.
    Compute(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Io(_) => 2,
            AppError::Compute(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Io(m) | AppError::Compute(m) => m,
        }
    }
}

impl From<io::Error> for AppError {
    fn from(e: io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<CaptureError> for AppError {
    fn from(e: CaptureError) -> Self {
        match e {
            CaptureError::Io(inner) => AppError::Io(inner.to_string()),
            other => AppError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadScene(_) | SimError::BadTrajectory(_) => AppError::Usage(e.to_string()),
            SimError::Range { .. } | SimError::Quantization { .. } => {
                AppError::Compute(e.to_string())
            }
        }
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(inner) => AppError::Usage(inner.to_string()),
            other => AppError::Compute(other.to_string()),
        }
    }
}

impl From<DopplerError> for AppError {
    fn from(e: DopplerError) -> Self {
        match e {
            DopplerError::Config(inner) => AppError::Usage(inner.to_string()),
            DopplerError::Pipeline(inner) => inner.into(),
        }
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(inner) => AppError::Io(inner.to_string()),
            other => AppError::Usage(other.to_string()),
        }
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            AppError::Io(e.to_string())
        } else {
            AppError::Usage(e.to_string())
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            AppError::Io(e.to_string())
        } else {
            AppError::Usage(e.to_string())
        }
    }
}

// ──────────────────────────── file helpers ────────────────────────────

fn open_reader(path: &Path) -> Result<BufReader<File>, AppError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| AppError::Io(format!("cannot open {}: {e}", path.display())))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, AppError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| AppError::Io(format!("cannot create {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ValidatedConfig, AppError> {
    let raw: RadarConfig = match path {
        Some(p) => serde_json::from_reader(open_reader(p)?)
            .map_err(|e| AppError::Usage(format!("invalid config {}: {e}", p.display())))?,
        None => RadarConfig::default(),
    };
    Ok(validate_config(&raw)?)
}

fn load_scene(path: &Path) -> Result<(Scene, EgoTrajectory), AppError> {
    let file: SceneFile = serde_json::from_reader(open_reader(path)?)
        .map_err(|e| AppError::Usage(format!("invalid scene {}: {e}", path.display())))?;
    Ok(file.into_parts())
}

// ─────────────────────────────── main ───────────────────────────────

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            // --help/--version are successful exits; anything else is usage
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Simulate {
            config,
            scene,
            frames,
            seed,
            snr_db,
            out,
            truth,
        } => cmd_simulate(
            config.as_deref(),
            &scene,
            frames,
            seed,
            snr_db,
            &out,
            truth.as_deref(),
            verbose,
        ),
        Command::Estimate {
            capture,
            out,
            n_peaks,
            min_frames,
        } => cmd_estimate(&capture, &out, n_peaks, min_frames, verbose),
        Command::Baseline { capture, out } => cmd_baseline(&capture, &out, verbose),
        Command::Evaluate {
            estimates,
            truth,
            out,
            buckets,
        } => cmd_evaluate(&estimates, &truth, &out, buckets.as_deref()),
        Command::Compare {
            config,
            velocities,
            frames,
            snr_db,
            seed,
            distance,
            serial,
            out,
        } => cmd_compare(
            config.as_deref(),
            &velocities,
            frames,
            snr_db,
            seed,
            distance,
            serial,
            &out,
            verbose,
        ),
    }
}

// ───────────────────────────── commands ─────────────────────────────

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    config: Option<&Path>,
    scene_path: &Path,
    frames: u32,
    seed: u64,
    snr_db: Option<f64>,
    out: &Path,
    truth_path: Option<&Path>,
    verbose: bool,
) -> Result<(), AppError> {
    let cfg = load_config(config)?;
    let (scene, traj) = load_scene(scene_path)?;
    let noise = NoiseSpec { snr_db, seed };
    let (capture, truth) = synth_capture(&cfg, &scene, &traj, &noise, frames)?;

    let mut writer = create_writer(out)?;
    let bytes = write_capture(&mut writer, &capture)?;
    writer.flush()?;

    if let Some(path) = truth_path {
        let mut writer = create_writer(path)?;
        write_truth(&mut writer, &truth)?;
        writer.flush()?;
    }
    if verbose {
        for t in &truth {
            eprintln!("frame {}: truth {:.6} m/s", t.frame, t.velocity_mps);
        }
    }

    let p = derive_params(&cfg);
    println!("wrote {frames} frames ({bytes} bytes) to {}", out.display());
    println!(
        "wavelength {:.4} mm | range bin {:.4} m | doppler bin {:.6} m/s | unambiguous ±{:.3} m/s",
        p.wavelength * 1.0e3,
        p.range_bin_spacing,
        p.doppler_resolution,
        p.max_unambiguous_velocity,
    );
    Ok(())
}

fn cmd_estimate(
    capture_path: &Path,
    out: &Path,
    n_peaks: usize,
    min_frames: usize,
    verbose: bool,
) -> Result<(), AppError> {
    if n_peaks == 0 {
        return Err(AppError::Usage("--n-peaks must be at least 1".into()));
    }
    if min_frames == 0 {
        return Err(AppError::Usage("--min-frames must be at least 1".into()));
    }
    let capture = read_capture(&mut open_reader(capture_path)?)?;
    let params = PipelineParams {
        n_peaks,
        min_frames,
        ..PipelineParams::default()
    };
    let estimates = process_capture(&capture, &params)?;
    if verbose {
        for e in &estimates {
            eprintln!(
                "frame {}: {} tracks fused, v = {:.6} m/s",
                e.frame, e.tracks, e.velocity_mps
            );
        }
    }
    if estimates.is_empty() {
        eprintln!(
            "warning: no estimates produced ({} frames; tracks need {min_frames} frames of history)",
            capture.frames.len()
        );
    }
    let mut writer = create_writer(out)?;
    write_estimates(&mut writer, &estimates)?;
    writer.flush()?;
    println!("wrote {} estimates to {}", estimates.len(), out.display());
    Ok(())
}

fn cmd_baseline(capture_path: &Path, out: &Path, verbose: bool) -> Result<(), AppError> {
    let capture = read_capture(&mut open_reader(capture_path)?)?;
    let estimates = doppler_estimates(&capture)?;
    if verbose {
        for e in &estimates {
            eprintln!("frame {}: v = {:.6} m/s", e.frame, e.velocity_mps);
        }
    }
    if estimates.is_empty() {
        eprintln!("warning: no estimates produced (capture is empty)");
    }
    let mut writer = create_writer(out)?;
    write_estimates(&mut writer, &estimates)?;
    writer.flush()?;
    println!("wrote {} estimates to {}", estimates.len(), out.display());
    Ok(())
}

fn cmd_evaluate(
    estimate_paths: &[PathBuf],
    truth_path: &Path,
    out: &Path,
    buckets: Option<&[f64]>,
) -> Result<(), AppError> {
    let mut estimates = Vec::new();
    for path in estimate_paths {
        estimates.extend(read_estimates(open_reader(path)?)?);
    }
    let truth = read_truth(open_reader(truth_path)?)?;

    let edges: Vec<f64> = match buckets {
        Some(edges) => {
            if edges.len() < 2
                || edges.iter().any(|e| !e.is_finite())
                || edges.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(AppError::Usage(
                    "--buckets needs at least two finite, strictly increasing edges".into(),
                ));
            }
            edges.to_vec()
        }
        None => DEFAULT_BUCKET_EDGES.to_vec(),
    };

    let report = build_report(&estimates, &truth, &edges)?;
    let mut writer = create_writer(out)?;
    write_report(&mut writer, &report)?;
    writer.flush()?;
    for (method, value) in &report.method_mae {
        println!("{method} MAE: {value:.6} m/s");
    }
    println!("wrote report to {}", out.display());
    Ok(())
}

struct CompareCase {
    velocity: f64,
    phase_mae: f64,
    doppler_mae: f64,
    phase_mean: f64,
    doppler_mean: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    config: Option<&Path>,
    velocities: &[f64],
    frames: u32,
    snr_db: Option<f64>,
    seed: u64,
    distance: f64,
    serial: bool,
    out: &Path,
    verbose: bool,
) -> Result<(), AppError> {
    let cfg = load_config(config)?;
    let p = derive_params(&cfg);
    if frames < 3 {
        return Err(AppError::Usage(
            "--frames must be at least 3 so tracks can mature".into(),
        ));
    }
    if !(distance > 0.0 && distance < max_scene_distance(&cfg)) {
        return Err(AppError::Usage(format!(
            "--distance must lie in (0, {:.3}) m",
            max_scene_distance(&cfg)
        )));
    }
    for v in velocities {
        if !v.is_finite() || v.abs() > p.max_unambiguous_velocity {
            return Err(AppError::Usage(format!(
                "velocity {v} outside the ±{:.3} m/s unambiguous range",
                p.max_unambiguous_velocity
            )));
        }
    }

    let run_case = |k: usize, velocity: f64| -> Result<CompareCase, AppError> {
        let scene = Scene {
            reflectors: vec![Reflector {
                distance_m: distance,
                amplitude: 1.0,
                appear_frame: None,
                disappear_frame: None,
            }],
        };
        let traj = EgoTrajectory::constant(velocity);
        let noise = NoiseSpec {
            snr_db,
            seed: seed.wrapping_add(k as u64),
        };
        let (capture, truth) = synth_capture(&cfg, &scene, &traj, &noise, frames)?;
        let phase = process_capture(&capture, &PipelineParams::default())?;
        let doppler = doppler_estimates(&capture)?;
        if phase.is_empty() {
            return Err(AppError::Compute(format!(
                "case {velocity} m/s produced no phase estimates"
            )));
        }
        let mean = |rows: &[radarvel::VelocityEstimate]| {
            rows.iter().map(|e| e.velocity_mps).sum::<f64>() / rows.len() as f64
        };
        Ok(CompareCase {
            velocity,
            phase_mae: mae(&phase, &truth)?,
            doppler_mae: mae(&doppler, &truth)?,
            phase_mean: mean(&phase),
            doppler_mean: mean(&doppler),
        })
    };

    // each case is independent; scoped threads keep cases deterministic via
    // per-case seeds regardless of completion order
    let results: Vec<Result<CompareCase, AppError>> = if serial {
        velocities
            .iter()
            .enumerate()
            .map(|(k, &v)| run_case(k, v))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = velocities
                .iter()
                .enumerate()
                .map(|(k, &v)| scope.spawn(move || run_case(k, v)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("compare case thread panicked"))
                .collect()
        })
    };

    let mut writer = create_writer(out)?;
    writeln!(
        writer,
        "velocity_mps,phase_mae_mps,doppler_mae_mps,phase_mean_mps,doppler_mean_mps"
    )?;
    let mut phase_total = 0.0;
    let mut doppler_total = 0.0;
    let n = results.len();
    for result in results {
        let case = result?;
        if verbose {
            eprintln!(
                "v = {} m/s: phase MAE {:.6}, doppler MAE {:.6}",
                case.velocity, case.phase_mae, case.doppler_mae
            );
        }
        phase_total += case.phase_mae;
        doppler_total += case.doppler_mae;
        writeln!(
            writer,
            "{},{},{},{},{}",
            case.velocity, case.phase_mae, case.doppler_mae, case.phase_mean, case.doppler_mean
        )?;
    }
    writer.flush()?;
    println!(
        "{n} cases | phase sweep MAE {:.6} m/s | doppler sweep MAE {:.6} m/s",
        phase_total / n as f64,
        doppler_total / n as f64
    );
    println!("wrote {}", out.display());
    Ok(())
}
