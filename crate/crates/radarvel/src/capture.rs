//! In-memory capture model and the two on-disk formats.
//!
//! The binary container is little-endian throughout:
//!
//! ```text
//! offset size field
//!      0    4 magic "MMP1"
//!      4    2 version (u16, currently 1)
//!      6    8 carrier_freq (f64)
//!     14    8 chirp_slope (f64)
//!     22    8 sample_rate (f64)
//!     30    4 samples_per_chirp (u32)
//!     34    4 chirps_per_frame (u32)
//!     38    4 num_rx (u32)
//!     42    8 chirp_repetition_time (f64)
//!     50    8 frame_period (f64)
//!     58    4 frame_count (u32)
//!     62      payload
//! ```
//!
//! The payload holds `frame_count` frames, each `chirps_per_frame × num_rx ×
//! samples_per_chirp` samples of an i16 I value followed by an i16 Q value,
//! ordered frame → chirp → rx → sample. [`read_raw_iq`] parses the same
//! sample stream without any header (the format loggers dump over ethernet).
//!
//! Readers never allocate from unvalidated header counts: the implied
//! payload size is checked against an allocation cap (default 4 GiB) before
//! any buffer is sized.

use std::io::{ErrorKind, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use thiserror::Error;

use crate::config::{validate_config, ConfigError, RadarConfig, ValidatedConfig};

/// Container magic.
pub const MAGIC: [u8; 4] = *b"MMP1";
/// Container version this crate reads and writes.
pub const VERSION: u16 = 1;
/// Header size in bytes.
pub const HEADER_LEN: u64 = 62;
/// Default payload allocation cap: 4 GiB.
pub const DEFAULT_ALLOC_CAP: u64 = 4 * 1024 * 1024 * 1024;

/// One quantized I/Q sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IqSample {
    pub i: i16,
    pub q: i16,
}

impl IqSample {
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(f64::from(self.i), f64::from(self.q))
    }
}

/// One frame of samples, stored flat in chirp → rx → sample order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u32,
    n_chirps: usize,
    n_rx: usize,
    n_samples: usize,
    data: Vec<IqSample>,
}

impl Frame {
    /// Wraps a flat sample buffer; `data.len()` must equal
    /// `n_chirps · n_rx · n_samples`.
    pub fn new(index: u32, n_chirps: usize, n_rx: usize, n_samples: usize, data: Vec<IqSample>) -> Frame {
        assert_eq!(
            data.len(),
            n_chirps * n_rx * n_samples,
            "frame buffer does not match dimensions"
        );
        Frame {
            index,
            n_chirps,
            n_rx,
            n_samples,
            data,
        }
    }

    /// (chirps, rx channels, samples per chirp)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_chirps, self.n_rx, self.n_samples)
    }

    /// Fast-time samples of one chirp on one rx channel.
    pub fn chirp(&self, chirp: usize, rx: usize) -> &[IqSample] {
        assert!(chirp < self.n_chirps && rx < self.n_rx);
        let start = (chirp * self.n_rx + rx) * self.n_samples;
        &self.data[start..start + self.n_samples]
    }

    pub fn samples(&self) -> &[IqSample] {
        &self.data
    }

    pub fn matches_config(&self, cfg: &RadarConfig) -> bool {
        self.n_chirps == cfg.chirps_per_frame as usize
            && self.n_rx == cfg.num_rx as usize
            && self.n_samples == cfg.samples_per_chirp as usize
    }
}

/// A config plus its frames. `source` is an in-memory provenance label
/// (typically the file path); it is not part of the on-disk format.
#[derive(Debug, Clone)]
pub struct Capture {
    pub config: RadarConfig,
    pub frames: Vec<Frame>,
    pub source: Option<String>,
}

impl Capture {
    /// Wall-clock span covered by the capture [s].
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * self.config.frame_period
    }
}

/// Payload bytes of a single frame under `cfg`.
pub fn frame_byte_len(cfg: &RadarConfig) -> u64 {
    u64::from(cfg.chirps_per_frame) * u64::from(cfg.num_rx) * u64::from(cfg.samples_per_chirp) * 4
}

/// Errors from capture I/O.
#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    /// Structurally invalid container: bad magic, unsupported version,
    /// payload size lies, oversized allocation, trailing bytes.
    #[error("invalid container: {0}")]
    Format(String),
    /// The stream ended mid-header or mid-frame.
    #[error("truncated input: {0}")]
    Truncated(String),
    /// The embedded config fails validation.
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// An in-memory frame disagrees with the capture's config.
    #[error("frame {index}: dimensions {got:?} do not match config {want:?}")]
    FrameShape {
        index: u32,
        got: (usize, usize, usize),
        want: (usize, usize, usize),
    },
}

fn expected_dims(cfg: &RadarConfig) -> (usize, usize, usize) {
    (
        cfg.chirps_per_frame as usize,
        cfg.num_rx as usize,
        cfg.samples_per_chirp as usize,
    )
}

/// Serializes a capture. The config must validate, frames must match it, and
/// frame indices must run contiguously from 0 — all checked before the first
/// byte is written. Returns the number of bytes written.
pub fn write_capture<W: Write>(sink: &mut W, capture: &Capture) -> Result<u64, CaptureError> {
    validate_config(&capture.config)?;
    let want = expected_dims(&capture.config);
    for (pos, frame) in capture.frames.iter().enumerate() {
        if frame.dims() != want {
            return Err(CaptureError::FrameShape {
                index: frame.index,
                got: frame.dims(),
                want,
            });
        }
        if frame.index as usize != pos {
            return Err(CaptureError::Format(format!(
                "frame indices must be contiguous from 0, found {} at position {pos}",
                frame.index
            )));
        }
    }
    let frame_count = u32::try_from(capture.frames.len())
        .map_err(|_| CaptureError::Format("more than u32::MAX frames".into()))?;

    let cfg = &capture.config;
    sink.write_all(&MAGIC)?;
    sink.write_u16::<LittleEndian>(VERSION)?;
    sink.write_f64::<LittleEndian>(cfg.carrier_freq)?;
    sink.write_f64::<LittleEndian>(cfg.chirp_slope)?;
    sink.write_f64::<LittleEndian>(cfg.sample_rate)?;
    sink.write_u32::<LittleEndian>(cfg.samples_per_chirp)?;
    sink.write_u32::<LittleEndian>(cfg.chirps_per_frame)?;
    sink.write_u32::<LittleEndian>(cfg.num_rx)?;
    sink.write_f64::<LittleEndian>(cfg.chirp_repetition_time)?;
    sink.write_f64::<LittleEndian>(cfg.frame_period)?;
    sink.write_u32::<LittleEndian>(frame_count)?;

    let mut buf = Vec::with_capacity(frame_byte_len(cfg) as usize);
    for frame in &capture.frames {
        buf.clear();
        for s in frame.samples() {
            buf.extend_from_slice(&s.i.to_le_bytes());
            buf.extend_from_slice(&s.q.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    Ok(HEADER_LEN + frame_count as u64 * frame_byte_len(cfg))
}

fn parse_frame(buf: &[u8], index: u32, dims: (usize, usize, usize)) -> Frame {
    let mut data = Vec::with_capacity(buf.len() / 4);
    for pair in buf.chunks_exact(4) {
        data.push(IqSample {
            i: i16::from_le_bytes([pair[0], pair[1]]),
            q: i16::from_le_bytes([pair[2], pair[3]]),
        });
    }
    Frame::new(index, dims.0, dims.1, dims.2, data)
}

/// Reads a capture with the default 4 GiB allocation cap.
pub fn read_capture<R: Read>(source: &mut R) -> Result<Capture, CaptureError> {
    read_capture_limited(source, DEFAULT_ALLOC_CAP)
}

/// Reads a capture, rejecting any header whose implied payload exceeds
/// `alloc_cap` bytes before allocating anything.
pub fn read_capture_limited<R: Read>(
    source: &mut R,
    alloc_cap: u64,
) -> Result<Capture, CaptureError> {
    let mut header = [0u8; HEADER_LEN as usize];
    read_exact_or(source, &mut header, "header")?;

    let mut rd = &header[..];
    let mut magic = [0u8; 4];
    rd.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CaptureError::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = rd.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(CaptureError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let config = RadarConfig {
        carrier_freq: rd.read_f64::<LittleEndian>()?,
        chirp_slope: rd.read_f64::<LittleEndian>()?,
        sample_rate: rd.read_f64::<LittleEndian>()?,
        samples_per_chirp: rd.read_u32::<LittleEndian>()?,
        chirps_per_frame: rd.read_u32::<LittleEndian>()?,
        num_rx: rd.read_u32::<LittleEndian>()?,
        chirp_repetition_time: rd.read_f64::<LittleEndian>()?,
        frame_period: rd.read_f64::<LittleEndian>()?,
    };
    validate_config(&config)?;
    let frame_count = {
        let mut tail = &header[58..];
        tail.read_u32::<LittleEndian>()?
    };

    let per_frame = frame_byte_len(&config);
    let total = per_frame
        .checked_mul(u64::from(frame_count))
        .ok_or_else(|| CaptureError::Format("payload size overflows u64".into()))?;
    if total > alloc_cap {
        return Err(CaptureError::Format(format!(
            "declared payload of {total} bytes exceeds allocation cap of {alloc_cap}"
        )));
    }

    let dims = expected_dims(&config);
    let mut frames = Vec::with_capacity(frame_count as usize);
    let mut buf = vec![0u8; per_frame as usize];
    for index in 0..frame_count {
        read_exact_or(source, &mut buf, &format!("frame {index}"))?;
        frames.push(parse_frame(&buf, index, dims));
    }

    // The payload must end exactly where the header said it would.
    let mut probe = [0u8; 1];
    match source.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(CaptureError::Format(
                "trailing data after the last declared frame".into(),
            ))
        }
        Err(e) if e.kind() == ErrorKind::Interrupted => {}
        Err(e) => return Err(CaptureError::Io(e)),
    }

    Ok(Capture {
        config,
        frames,
        source: None,
    })
}

fn read_exact_or<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<(), CaptureError> {
    source.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            CaptureError::Truncated(format!("stream ended inside {what}"))
        } else {
            CaptureError::Io(e)
        }
    })
}

/// Parses a headerless stream of little-endian interleaved int16 I/Q pairs in
/// frame → chirp → rx → sample order, using `cfg` for the dimensions. The
/// stream must contain a whole number of frames.
pub fn read_raw_iq<R: Read>(
    source: &mut R,
    cfg: &ValidatedConfig,
) -> Result<Vec<Frame>, CaptureError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let per_frame = frame_byte_len(cfg) as usize;
    if bytes.len() % per_frame != 0 {
        return Err(CaptureError::Truncated(format!(
            "{} bytes is not a whole number of {per_frame}-byte frames",
            bytes.len()
        )));
    }
    let dims = expected_dims(cfg);
    Ok(bytes
        .chunks_exact(per_frame)
        .enumerate()
        .map(|(i, chunk)| parse_frame(chunk, i as u32, dims))
        .collect())
}

// ─────────────────────────────── tests ───────────────────────────────
