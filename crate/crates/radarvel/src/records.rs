//! Row types shared by the estimators and the evaluation tools, plus their
//! CSV codecs. Both estimation methods emit [`VelocityEstimate`] rows; the
//! simulator emits [`FrameTruth`] rows; eval joins the two on frame index.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which estimator produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Phase-slope pipeline.
    Phase,
    /// Doppler-FFT baseline.
    Doppler,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Phase => "phase",
            Method::Doppler => "doppler",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Method, String> {
        match s {
            "phase" => Ok(Method::Phase),
            "doppler" => Ok(Method::Doppler),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

/// One per-frame velocity estimate.
/// CSV header: `frame,time_s,velocity_mps,method,tracks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub frame: u32,
    /// Frame start time, frame index · frame_period [s].
    pub time_s: f64,
    pub velocity_mps: f64,
    pub method: Method,
    /// Tracks fused into this estimate. The doppler baseline reports 1, or 0
    /// for a placeholder row from an all-zero map.
    pub tracks: u32,
}

/// One ground-truth row. CSV header: `frame,time_s,velocity_mps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: u32,
    pub time_s: f64,
    pub velocity_mps: f64,
}

pub fn write_estimates<W: Write>(sink: W, rows: &[VelocityEstimate]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    // explicit header so an empty row set still yields a self-describing file
    w.write_record(["frame", "time_s", "velocity_mps", "method", "tracks"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(source: R) -> Result<Vec<VelocityEstimate>, csv::Error> {
    csv::Reader::from_reader(source).deserialize().collect()
}

pub fn write_truth<W: Write>(sink: W, rows: &[FrameTruth]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(["frame", "time_s", "velocity_mps"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(source: R) -> Result<Vec<FrameTruth>, csv::Error> {
    csv::Reader::from_reader(source).deserialize().collect()
}

// ─────────────────────────────── tests ───────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_csv_header_and_round_trip() {
        let rows = vec![
            VelocityEstimate {
                frame: 0,
                time_s: 0.0,
                velocity_mps: 0.02,
                method: Method::Phase,
                tracks: 1,
            },
            VelocityEstimate {
                frame: 1,
                time_s: 0.2,
                velocity_mps: -0.0341,
                method: Method::Doppler,
                tracks: 0,
            },
        ];
        let mut buf = Vec::new();
        write_estimates(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("frame,time_s,velocity_mps,method,tracks\n"),
            "{text}"
        );
        assert!(text.contains(",phase,"));
        assert!(text.contains(",doppler,"));
        assert_eq!(read_estimates(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn truth_csv_header_and_round_trip() {
        let rows = vec![FrameTruth {
            frame: 3,
            time_s: 0.6,
            velocity_mps: 0.005,
        }];
        let mut buf = Vec::new();
        write_truth(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,time_s,velocity_mps\n"), "{text}");
        assert_eq!(read_truth(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn method_labels_round_trip() {
        assert_eq!(Method::Phase.to_string(), "phase");
        assert_eq!(Method::Doppler.to_string(), "doppler");
        assert_eq!("phase".parse::<Method>().unwrap(), Method::Phase);
        assert_eq!("doppler".parse::<Method>().unwrap(), Method::Doppler);
        assert!("dopler".parse::<Method>().is_err());
    }
}
