//! Numeric kernels: FFT, windowing, phase unwrapping, peak picking.
//!
//! Two independent DFT routes exist on purpose. [`fft_complex`] is the fast
//! radix-2 path used everywhere in production code; [`naive_dft`] is a
//! direct O(n²) transcription of the DFT definition that serves as the
//! correctness oracle in tests — the two are compared, never mixed.
//!
//! Convention: forward transform uses `e^{-j2πkn/N}` with no normalization;
//! the inverse applies `1/N`. `inverse(forward(x)) == x` to float precision.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use thiserror::Error;

/// Errors from the DSP kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    /// [`fft_complex`] only handles power-of-two lengths (≥ 1).
    #[error("FFT length must be a power of two, got {len}")]
    SizeNotPowerOfTwo { len: usize },
    /// Phase unwrapping is meaningless on NaN/infinite samples.
    #[error("non-finite phase value {value} at index {index}")]
    NonFinitePhase { index: usize, value: f64 },
}

// ─────────────────────────────── FFT ───────────────────────────────

/// Iterative radix-2 Cooley-Tukey FFT.
///
/// Forward: `X[k] = Σ_n x[n]·e^{-j2πkn/N}` (no scaling). Inverse flips the
/// exponent sign and divides by N. Rejects non-power-of-two lengths,
/// including 0.
pub fn fft_complex(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>, DspError> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(DspError::SizeNotPowerOfTwo { len: n });
    }
    let mut data = x.to_vec();
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
    }

    // One half-size twiddle table for the final stage; earlier stages stride
    // through it, so every butterfly reads an exactly-computed root of unity.
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddle: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * TAU * k as f64 / n as f64))
        .collect();

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddle[k * stride];
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len *= 2;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in &mut data {
            *v *= scale;
        }
    }
    Ok(data)
}

/// Direct O(n²) DFT of any length ≥ 1, same convention as the forward
/// [`fft_complex`]. Test oracle — intentionally written straight from the
/// definition with no shared code.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    assert!(!x.is_empty(), "naive_dft input must be non-empty");
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                // (k·i) mod n keeps the rotation angle in [0, 2π) and exact.
                let idx = (k * i) % n;
                acc += v * Complex64::from_polar(1.0, -TAU * idx as f64 / n as f64);
            }
            acc
        })
        .collect()
}

/// Precomputed forward DFT of one fixed length. Power-of-two lengths go
/// straight to [`fft_complex`]; everything else runs Bluestein's algorithm
/// (the chirp-z trick: any-length DFT as one power-of-two circular
/// convolution), so a 664-point transform stays O(n log n).
///
/// Build once, apply many times — the doppler map reuses a single plan
/// across all range bins of a frame.
#[derive(Debug, Clone)]
pub struct DftPlan {
    n: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Pow2,
    Bluestein {
        /// Convolution length: next power of two ≥ 2n−1.
        m: usize,
        /// Chirp factors w[j] = e^{-jπ j²/n}, j < n.
        w: Vec<Complex64>,
        /// FFT of the chirp filter (conj(w) wrapped circularly).
        filter_fft: Vec<Complex64>,
    },
}

impl DftPlan {
    pub fn new(n: usize) -> DftPlan {
        assert!(n >= 1, "DFT length must be ≥ 1");
        if n.is_power_of_two() {
            return DftPlan {
                n,
                kind: PlanKind::Pow2,
            };
        }
        let m = (2 * n - 1).next_power_of_two();
        // j² mod 2n stays exact in u128, so chirp angles never lose precision
        // to a huge argument.
        let w: Vec<Complex64> = (0..n)
            .map(|j| {
                let sq = ((j as u128 * j as u128) % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * sq / n as f64)
            })
            .collect();
        let mut filter = vec![Complex64::new(0.0, 0.0); m];
        filter[0] = w[0].conj();
        for j in 1..n {
            filter[j] = w[j].conj();
            filter[m - j] = w[j].conj();
        }
        let filter_fft = fft_complex(&filter, false).expect("m is a power of two");
        DftPlan {
            n,
            kind: PlanKind::Bluestein { m, w, filter_fft },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // a plan always has length ≥ 1
    }

    /// Forward DFT; `x.len()` must equal the planned length.
    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n, "input length does not match plan");
        match &self.kind {
            PlanKind::Pow2 => fft_complex(x, false).expect("planned length is a power of two"),
            PlanKind::Bluestein { m, w, filter_fft } => {
                let mut a = vec![Complex64::new(0.0, 0.0); *m];
                for (j, &v) in x.iter().enumerate() {
                    a[j] = v * w[j];
                }
                let mut freq = fft_complex(&a, false).expect("power of two");
                for (s, f) in freq.iter_mut().zip(filter_fft) {
                    *s *= f;
                }
                let conv = fft_complex(&freq, true).expect("power of two");
                (0..self.n).map(|k| conv[k] * w[k]).collect()
            }
        }
    }
}

// ───────────────────────────── windowing ─────────────────────────────

/// Symmetric Hann window: `w[k] = 0.5·(1 − cos(2πk/(n−1)))`, endpoints 0.
/// The degenerate n = 1 window is `[1.0]`.
pub fn hann_window(n: usize) -> Vec<f64> {
    assert!(n >= 1, "window length must be ≥ 1");
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| 0.5 * (1.0 - (TAU * k as f64 / (n - 1) as f64).cos()))
        .collect()
}

// ──────────────────────────── unwrapping ────────────────────────────

/// Unwraps a wrapped phase sequence: `out[0] = in[0]`, and each consecutive
/// difference is shifted by the multiple of 2π that lands it in (−π, π].
/// Every output stays congruent to its input mod 2π.
pub fn unwrap_phase(phases: &[f64]) -> Result<Vec<f64>, DspError> {
    for (index, &value) in phases.iter().enumerate() {
        if !value.is_finite() {
            return Err(DspError::NonFinitePhase { index, value });
        }
    }
    let mut out = Vec::with_capacity(phases.len());
    for (k, &p) in phases.iter().enumerate() {
        if k == 0 {
            out.push(p);
        } else {
            let d = p - phases[k - 1];
            // smallest shift d − 2π·m inside (−π, π]
            let wrapped = d - TAU * ((d - PI) / TAU).ceil();
            out.push(out[k - 1] + wrapped);
        }
    }
    Ok(out)
}

// ──────────────────────────── peak picking ────────────────────────────

/// One strict local maximum of a magnitude profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub bin: usize,
    pub magnitude: f64,
}

/// Peaks sorted by descending magnitude (ties → lower bin), at most the
/// requested count, bins unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    peaks: Vec<Peak>,
}

impl PeakSet {
    /// Builds a set from arbitrary peaks, enforcing the sort order. Meant
    /// for tests and tools that script tracker inputs; production code gets
    /// its sets from [`top_n_peaks`].
    pub fn from_peaks(mut peaks: Vec<Peak>) -> PeakSet {
        peaks.sort_by(|a, b| {
            b.magnitude
                .total_cmp(&a.magnitude)
                .then(a.bin.cmp(&b.bin))
        });
        if cfg!(debug_assertions) {
            let mut bins: Vec<usize> = peaks.iter().map(|p| p.bin).collect();
            bins.sort_unstable();
            bins.dedup();
            debug_assert_eq!(bins.len(), peaks.len(), "peak bins must be unique");
        }
        PeakSet { peaks }
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Selects up to `n` strict local maxima of `magnitudes` with bin index in
/// `[min_bin, max_bin]`, sorted by descending magnitude (ties → lower bin).
///
/// Strictness (`>` against both neighbors) means a flat plateau produces no
/// peak and one wide lobe cannot occupy several slots. Neighbors are taken
/// from the full profile, so a bin at the window edge still competes against
/// the excluded bin next to it; only true array ends compare one-sided.
pub fn top_n_peaks(magnitudes: &[f64], n: usize, min_bin: usize, max_bin: usize) -> PeakSet {
    assert!(
        min_bin <= max_bin && max_bin < magnitudes.len(),
        "bin range [{min_bin}, {max_bin}] invalid for profile of length {}",
        magnitudes.len()
    );
    let last = magnitudes.len() - 1;
    let mut peaks: Vec<Peak> = (min_bin..=max_bin)
        .filter(|&i| {
            let left_ok = i == 0 || magnitudes[i] > magnitudes[i - 1];
            let right_ok = i == last || magnitudes[i] > magnitudes[i + 1];
            left_ok && right_ok
        })
        .map(|bin| Peak {
            bin,
            magnitude: magnitudes[bin],
        })
        .collect();
    peaks.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.bin.cmp(&b.bin))
    });
    peaks.truncate(n);
    PeakSet { peaks }
}

// ─────────────────────────────── tests ───────────────────────────────
