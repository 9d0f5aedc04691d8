//! Accuracy evaluation: joins estimate streams against ground truth and
//! summarizes the error, overall and bucketed by true velocity.
//!
//! The report is a plain-text artifact with three CSV sections separated by
//! blank lines — per-method MAE, per-bucket MAE, and the joined per-frame
//! rows — written with shortest round-trip float formatting so a parsed
//! report compares equal to the original.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::records::{FrameTruth, Method, VelocityEstimate};

/// Default true-velocity bucket edges [m/s]: below the Doppler bin
/// (≈ 0.0341), around the walking-pace regime, and above.
pub const DEFAULT_BUCKET_EDGES: [f64; 4] = [0.0, 0.0341, 0.05, 0.10];

/// Errors from evaluation and report parsing.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("estimates and truth share no frames")]
    NoOverlap,
    #[error("malformed report: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One frame where truth and at least one estimate met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinedRow {
    pub frame: u32,
    pub truth_mps: f64,
    pub phase_mps: Option<f64>,
    pub doppler_mps: Option<f64>,
}

impl JoinedRow {
    fn value(&self, method: Method) -> Option<f64> {
        match method {
            Method::Phase => self.phase_mps,
            Method::Doppler => self.doppler_mps,
        }
    }
}

/// Per-bucket accuracy of one method. The bucket covers true velocities in
/// `[lo, hi)`; `mae_mps` is `None` when no rows landed in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketRow {
    pub lo: f64,
    pub hi: f64,
    pub method: Method,
    pub mae_mps: Option<f64>,
    pub count: usize,
}

/// The full evaluation result.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// Overall MAE per method, phase before doppler; only methods that
    /// joined at least one frame appear.
    pub method_mae: Vec<(Method, f64)>,
    pub buckets: Vec<BucketRow>,
    pub rows: Vec<JoinedRow>,
}

/// Mean absolute error of `estimates` against `truth`, joined by frame.
/// Every estimate row whose frame has truth contributes one term; rows
/// without a truth frame are ignored. Errors if nothing joins.
pub fn mae(estimates: &[VelocityEstimate], truth: &[FrameTruth]) -> Result<f64, EvalError> {
    let by_frame: BTreeMap<u32, f64> = truth.iter().map(|t| (t.frame, t.velocity_mps)).collect();
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in estimates {
        if let Some(&t) = by_frame.get(&e.frame) {
            sum += (e.velocity_mps - t).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::NoOverlap);
    }
    Ok(sum / n as f64)
}

/// Joins estimates (both methods may be mixed in one slice) against truth,
/// one row per frame that has truth and at least one estimate, in frame
/// order. A later estimate for the same (frame, method) replaces an earlier
/// one.
pub fn join_rows(estimates: &[VelocityEstimate], truth: &[FrameTruth]) -> Vec<JoinedRow> {
    let truth_by_frame: BTreeMap<u32, f64> =
        truth.iter().map(|t| (t.frame, t.velocity_mps)).collect();
    let mut rows: BTreeMap<u32, JoinedRow> = BTreeMap::new();
    for e in estimates {
        let Some(&t) = truth_by_frame.get(&e.frame) else {
            continue;
        };
        let row = rows.entry(e.frame).or_insert(JoinedRow {
            frame: e.frame,
            truth_mps: t,
            phase_mps: None,
            doppler_mps: None,
        });
        match e.method {
            Method::Phase => row.phase_mps = Some(e.velocity_mps),
            Method::Doppler => row.doppler_mps = Some(e.velocity_mps),
        }
    }
    rows.into_values().collect()
}

/// Buckets joined rows by *true* velocity over half-open intervals between
/// consecutive `edges`, plus an underflow bucket `(-inf, edges[0])` and an
/// overflow bucket `[last, +inf)` so every row lands somewhere. Emits one
/// row per (bucket, present method), bucket-major, zero-count buckets
/// included so the report shape is stable.
pub fn bucketed_errors(rows: &[JoinedRow], edges: &[f64]) -> Vec<BucketRow> {
    assert!(edges.len() >= 2, "need at least two bucket edges");
    assert!(
        edges.windows(2).all(|w| w[0] < w[1]),
        "bucket edges must strictly increase"
    );
    let methods: Vec<Method> = [Method::Phase, Method::Doppler]
        .into_iter()
        .filter(|&m| rows.iter().any(|r| r.value(m).is_some()))
        .collect();

    let mut bounds: Vec<(f64, f64)> = Vec::with_capacity(edges.len() + 1);
    bounds.push((f64::NEG_INFINITY, edges[0]));
    bounds.extend(edges.windows(2).map(|w| (w[0], w[1])));
    bounds.push((*edges.last().unwrap(), f64::INFINITY));

    let mut out = Vec::with_capacity(bounds.len() * methods.len());
    for &(lo, hi) in &bounds {
        for &method in &methods {
            let mut sum = 0.0;
            let mut count = 0usize;
            for row in rows {
                if row.truth_mps >= lo && row.truth_mps < hi {
                    if let Some(v) = row.value(method) {
                        sum += (v - row.truth_mps).abs();
                        count += 1;
                    }
                }
            }
            out.push(BucketRow {
                lo,
                hi,
                method,
                mae_mps: (count > 0).then(|| sum / count as f64),
                count,
            });
        }
    }
    out
}

/// Builds the full report. An empty estimate set yields an empty report;
/// non-empty estimates that share no frame with truth are an error.
pub fn build_report(
    estimates: &[VelocityEstimate],
    truth: &[FrameTruth],
    edges: &[f64],
) -> Result<EvalReport, EvalError> {
    let rows = join_rows(estimates, truth);
    if rows.is_empty() {
        if estimates.is_empty() {
            return Ok(EvalReport::default());
        }
        return Err(EvalError::NoOverlap);
    }
    let mut method_mae = Vec::new();
    for method in [Method::Phase, Method::Doppler] {
        let mut sum = 0.0;
        let mut n = 0usize;
        for row in &rows {
            if let Some(v) = row.value(method) {
                sum += (v - row.truth_mps).abs();
                n += 1;
            }
        }
        if n > 0 {
            method_mae.push((method, sum / n as f64));
        }
    }
    let buckets = bucketed_errors(&rows, edges);
    Ok(EvalReport {
        method_mae,
        buckets,
        rows,
    })
}

// ───────────────────────── report serialization ─────────────────────────

const METHOD_HEADER: &str = "method,mae_mps";
const BUCKET_HEADER: &str = "bucket_lo,bucket_hi,method,mae_mps,count";
const ROWS_HEADER: &str = "frame,truth_mps,phase_mps,doppler_mps";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Writes the three-section report. Floats use shortest round-trip
/// formatting; absent values are empty fields.
pub fn write_report<W: Write>(w: &mut W, report: &EvalReport) -> io::Result<()> {
    writeln!(w, "{METHOD_HEADER}")?;
    for (method, mae) in &report.method_mae {
        writeln!(w, "{method},{mae}")?;
    }
    writeln!(w)?;
    writeln!(w, "{BUCKET_HEADER}")?;
    for b in &report.buckets {
        writeln!(
            w,
            "{},{},{},{},{}",
            b.lo,
            b.hi,
            b.method,
            fmt_opt(b.mae_mps),
            b.count
        )?;
    }
    writeln!(w)?;
    writeln!(w, "{ROWS_HEADER}")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.frame,
            r.truth_mps,
            fmt_opt(r.phase_mps),
            fmt_opt(r.doppler_mps)
        )?;
    }
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64, EvalError> {
    s.parse()
        .map_err(|_| EvalError::Format(format!("bad {what}: {s:?}")))
}

fn parse_opt_f64(s: &str, what: &str) -> Result<Option<f64>, EvalError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

/// Parses a report written by [`write_report`] back into memory.
pub fn read_report<R: Read>(r: &mut R) -> Result<EvalReport, EvalError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let sections: Vec<&str> = text.split("\n\n").collect();
    if sections.len() != 3 {
        return Err(EvalError::Format(format!(
            "expected 3 blank-line-separated sections, found {}",
            sections.len()
        )));
    }
    let lines = |section: &str, header: &str| -> Result<Vec<String>, EvalError> {
        let mut it = section.lines();
        match it.next() {
            Some(h) if h == header => Ok(it.map(str::to_owned).collect()),
            other => Err(EvalError::Format(format!(
                "expected header {header:?}, found {other:?}"
            ))),
        }
    };
    let split =
        |line: &str, n: usize, what: &str| -> Result<Vec<String>, EvalError> {
            let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
            if fields.len() != n {
                return Err(EvalError::Format(format!(
                    "{what} row needs {n} fields: {line:?}"
                )));
            }
            Ok(fields)
        };
    let method = |s: &str| -> Result<Method, EvalError> {
        s.parse()
            .map_err(|_| EvalError::Format(format!("unknown method {s:?}")))
    };

    let mut report = EvalReport::default();
    for line in lines(sections[0], METHOD_HEADER)? {
        let f = split(&line, 2, "method")?;
        report
            .method_mae
            .push((method(&f[0])?, parse_f64(&f[1], "mae")?));
    }
    for line in lines(sections[1], BUCKET_HEADER)? {
        let f = split(&line, 5, "bucket")?;
        report.buckets.push(BucketRow {
            lo: parse_f64(&f[0], "bucket_lo")?,
            hi: parse_f64(&f[1], "bucket_hi")?,
            method: method(&f[2])?,
            mae_mps: parse_opt_f64(&f[3], "mae")?,
            count: f[4]
                .parse()
                .map_err(|_| EvalError::Format(format!("bad count: {:?}", f[4])))?,
        });
    }
    for line in lines(sections[2], ROWS_HEADER)? {
        let f = split(&line, 4, "joined")?;
        report.rows.push(JoinedRow {
            frame: f[0]
                .parse()
                .map_err(|_| EvalError::Format(format!("bad frame: {:?}", f[0])))?,
            truth_mps: parse_f64(&f[1], "truth")?,
            phase_mps: parse_opt_f64(&f[2], "phase")?,
            doppler_mps: parse_opt_f64(&f[3], "doppler")?,
        });
    }
    Ok(report)
}

// ─────────────────────────────── tests ───────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn est(frame: u32, v: f64, method: Method) -> VelocityEstimate {
        VelocityEstimate {
            frame,
            time_s: f64::from(frame) * 0.2,
            velocity_mps: v,
            method,
            tracks: 1,
        }
    }

    fn truth(frame: u32, v: f64) -> FrameTruth {
        FrameTruth {
            frame,
            time_s: f64::from(frame) * 0.2,
            velocity_mps: v,
        }
    }

    #[test]
    fn mae_matches_hand_computation() {
        let estimates = [est(0, 0.03, Method::Phase), est(1, 0.05, Method::Phase)];
        let t = [truth(0, 0.02), truth(1, 0.02)];
        let m = mae(&estimates, &t).unwrap();
        assert!((m - 0.02).abs() < 1e-15, "{m}");
    }

    #[test]
    fn mae_ignores_frames_without_truth() {
        let estimates = [
            est(0, 0.03, Method::Phase),
            est(1, 0.05, Method::Phase),
            est(9, 99.0, Method::Phase),
        ];
        let t = [truth(0, 0.02), truth(1, 0.02), truth(2, 0.02)];
        let m = mae(&estimates, &t).unwrap();
        assert!((m - 0.02).abs() < 1e-15, "{m}");
    }

    #[test]
    fn disjoint_frames_are_a_no_overlap_error() {
        let estimates = [est(5, 0.03, Method::Phase)];
        let t = [truth(0, 0.02)];
        assert!(matches!(mae(&estimates, &t), Err(EvalError::NoOverlap)));
        assert!(matches!(
            build_report(&estimates, &t, &DEFAULT_BUCKET_EDGES),
            Err(EvalError::NoOverlap)
        ));
    }

    #[test]
    fn join_merges_methods_and_keeps_frame_order() {
        let estimates = [
            est(1, 0.03, Method::Phase),
            est(0, 0.01, Method::Phase),
            est(1, 0.068, Method::Doppler),
        ];
        let t = [truth(0, 0.02), truth(1, 0.02)];
        let rows = join_rows(&estimates, &t);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].frame, 0);
        assert_eq!(rows[0].phase_mps, Some(0.01));
        assert_eq!(rows[0].doppler_mps, None);
        assert_eq!(rows[1].phase_mps, Some(0.03));
        assert_eq!(rows[1].doppler_mps, Some(0.068));
    }

    #[test]
    fn buckets_are_half_open_with_overflow_rows() {
        let rows = [
            JoinedRow {
                frame: 0,
                truth_mps: -0.01, // underflow
                phase_mps: Some(0.0),
                doppler_mps: None,
            },
            JoinedRow {
                frame: 1,
                truth_mps: 0.02, // [0, 0.05)
                phase_mps: Some(0.03),
                doppler_mps: None,
            },
            JoinedRow {
                frame: 2,
                truth_mps: 0.05, // exactly on an edge → [0.05, 0.1)
                phase_mps: Some(0.06),
                doppler_mps: None,
            },
            JoinedRow {
                frame: 3,
                truth_mps: 0.1, // overflow [0.1, inf)
                phase_mps: Some(0.1),
                doppler_mps: None,
            },
        ];
        let buckets = bucketed_errors(&rows, &[0.0, 0.05, 0.1]);
        // 4 intervals × 1 present method
        assert_eq!(buckets.len(), 4);
        assert_eq!(buckets[0].lo, f64::NEG_INFINITY);
        assert_eq!(buckets[0].count, 1);
        assert_eq!(buckets[1].count, 1);
        assert!((buckets[1].mae_mps.unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(buckets[2].count, 1);
        assert_eq!(buckets[3].hi, f64::INFINITY);
        assert_eq!(buckets[3].count, 1);
        assert!((buckets[3].mae_mps.unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn empty_buckets_report_none_mae() {
        let rows = [JoinedRow {
            frame: 0,
            truth_mps: 0.02,
            phase_mps: Some(0.02),
            doppler_mps: None,
        }];
        let buckets = bucketed_errors(&rows, &[0.0, 0.05, 0.1]);
        assert_eq!(buckets[0].mae_mps, None);
        assert_eq!(buckets[0].count, 0);
    }

    #[test]
    fn per_method_bucket_counts_sum_to_joined_rows() {
        let estimates = [
            est(0, 0.01, Method::Phase),
            est(1, 0.03, Method::Phase),
            est(0, 0.0, Method::Doppler),
        ];
        let t = [truth(0, 0.02), truth(1, 0.04)];
        let report = build_report(&estimates, &t, &DEFAULT_BUCKET_EDGES).unwrap();
        let phase_total: usize = report
            .buckets
            .iter()
            .filter(|b| b.method == Method::Phase)
            .map(|b| b.count)
            .sum();
        let doppler_total: usize = report
            .buckets
            .iter()
            .filter(|b| b.method == Method::Doppler)
            .map(|b| b.count)
            .sum();
        assert_eq!(phase_total, 2);
        assert_eq!(doppler_total, 1);
        assert_eq!(report.method_mae.len(), 2);
        assert_eq!(report.method_mae[0].0, Method::Phase);
    }

    #[test]
    fn written_report_matches_expected_text_exactly() {
        // values chosen so every arithmetic step is exact in binary fp
        let estimates = [est(0, 0.01, Method::Phase), est(1, -0.01, Method::Phase)];
        let t = [truth(0, 0.0), truth(1, 0.0)];
        let report = build_report(&estimates, &t, &[0.0, 0.05]).unwrap();
        let mut buf = Vec::new();
        write_report(&mut buf, &report).unwrap();
        let expected = "\
method,mae_mps
phase,0.01

bucket_lo,bucket_hi,method,mae_mps,count
-inf,0,phase,,0
0,0.05,phase,0.01,2
0.05,inf,phase,,0

frame,truth_mps,phase_mps,doppler_mps
0,0,0.01,
1,0,-0.01,
";
        assert_eq!(String::from_utf8(buf).unwrap(), expected);
    }

    #[test]
    fn report_round_trips_exactly() {
        let estimates = [
            est(0, 0.03, Method::Phase),
            est(0, 0.0341, Method::Doppler),
            est(1, -0.051, Method::Phase),
            est(1, -0.068, Method::Doppler),
            est(2, 0.12, Method::Phase),
        ];
        let t = [truth(0, 0.031), truth(1, -0.05), truth(2, 0.124)];
        let report = build_report(&estimates, &t, &DEFAULT_BUCKET_EDGES).unwrap();
        let mut buf = Vec::new();
        write_report(&mut buf, &report).unwrap();
        let back = read_report(&mut buf.as_slice()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn empty_report_is_headers_only_and_round_trips() {
        let report = build_report(&[], &[], &DEFAULT_BUCKET_EDGES).unwrap();
        assert_eq!(report, EvalReport::default());
        let mut buf = Vec::new();
        write_report(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "method,mae_mps\n\nbucket_lo,bucket_hi,method,mae_mps,count\n\nframe,truth_mps,phase_mps,doppler_mps\n"
        );
        let back = read_report(&mut buf.as_slice()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn malformed_reports_are_rejected() {
        let cases = [
            "",                          // no sections
            "method,mae_mps\n",          // one section
            "wrong,header\n\nbucket_lo,bucket_hi,method,mae_mps,count\n\nframe,truth_mps,phase_mps,doppler_mps\n",
            "method,mae_mps\nphase\n\nbucket_lo,bucket_hi,method,mae_mps,count\n\nframe,truth_mps,phase_mps,doppler_mps\n",
            "method,mae_mps\nsonar,0.1\n\nbucket_lo,bucket_hi,method,mae_mps,count\n\nframe,truth_mps,phase_mps,doppler_mps\n",
        ];
        for text in cases {
            assert!(
                matches!(
                    read_report(&mut text.as_bytes()),
                    Err(EvalError::Format(_))
                ),
                "{text:?}"
            );
        }
    }
}
