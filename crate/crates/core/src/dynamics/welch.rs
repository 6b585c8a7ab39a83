use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::FrfCurve;
use crate::error::{Error, Result};

/// Segmenting for the averaged H1 estimator (Hann window).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_len: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
}

impl WelchConfig {
    /// Longest segments that yield `n_segments` averages over `n_samples`.
    pub fn for_segments(n_samples: usize, n_segments: usize, overlap: f64) -> Self {
        let denom = 1.0 + (n_segments.max(1) - 1) as f64 * (1.0 - overlap);
        let mut segment_len = (n_samples as f64 / denom).floor() as usize;
        while segment_len > 1 && (Self { segment_len, overlap }).n_segments(n_samples) < n_segments {
            segment_len -= 1;
        }
        Self { segment_len, overlap }
    }

    fn hop(&self) -> usize {
        let shared = (self.overlap * self.segment_len as f64).round() as usize;
        (self.segment_len - shared.min(self.segment_len - 1)).max(1)
    }

    pub fn n_segments(&self, n_samples: usize) -> usize {
        if n_samples < self.segment_len || self.segment_len == 0 {
            0
        } else {
            (n_samples - self.segment_len) / self.hop() + 1
        }
    }
}

#[derive(Clone, Debug)]
pub struct H1Estimate {
    pub curve: FrfCurve,
    /// Lines dropped because the input auto-spectrum vanished there.
    pub flagged: Vec<f64>,
    pub n_segments: usize,
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Welch-averaged `H1(f) = S_xy(f) / S_xx(f)` on the one-sided FFT grid.
pub fn estimate_frf_h1(input: &[f64], output: &[f64], dt: f64, cfg: &WelchConfig) -> Result<H1Estimate> {
    if input.len() != output.len() {
        return Err(Error::Dimension(format!(
            "input has {} samples, output {}",
            input.len(),
            output.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Data("sampling interval must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.overlap) || cfg.segment_len < 2 {
        return Err(Error::Data("segment length must be >= 2 and overlap in [0, 1)".into()));
    }
    let n_segments = cfg.n_segments(input.len());
    if n_segments < 2 {
        return Err(Error::Data(format!(
            "{} samples give fewer than 2 segments of length {}",
            input.len(),
            cfg.segment_len
        )));
    }

    let len = cfg.segment_len;
    let window = hann(len);
    let fft = FftPlanner::new().plan_fft_forward(len);
    let n_lines = len / 2 + 1;
    let mut sxx = vec![0.0f64; n_lines];
    let mut sxy = vec![Complex::new(0.0f64, 0.0); n_lines];
    let mut xb = vec![Complex::new(0.0, 0.0); len];
    let mut yb = vec![Complex::new(0.0, 0.0); len];
    let hop = cfg.hop();
    for s in 0..n_segments {
        let start = s * hop;
        for i in 0..len {
            xb[i] = Complex::new(input[start + i] * window[i], 0.0);
            yb[i] = Complex::new(output[start + i] * window[i], 0.0);
        }
        fft.process(&mut xb);
        fft.process(&mut yb);
        for l in 0..n_lines {
            sxx[l] += xb[l].norm_sqr();
            sxy[l] += xb[l].conj() * yb[l];
        }
    }

    let df = 1.0 / (len as f64 * dt);
    let mut freqs = Vec::with_capacity(n_lines);
    let mut magnitude = Vec::with_capacity(n_lines);
    let mut flagged = Vec::new();
    for l in 0..n_lines {
        let f = l as f64 * df;
        if sxx[l] == 0.0 || !sxx[l].is_finite() {
            flagged.push(f);
            continue;
        }
        freqs.push(f);
        magnitude.push((sxy[l] / sxx[l]).norm());
    }
    if freqs.is_empty() {
        return Err(Error::Data("input auto-spectrum is zero at every line".into()));
    }
    Ok(H1Estimate {
        curve: FrfCurve::new(freqs, magnitude, 0, 0)?,
        flagged,
        n_segments,
    })
}
