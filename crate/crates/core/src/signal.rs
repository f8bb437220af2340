//! Uniformly sampled real signals and the small set of DSP primitives shared
//! by the simulator and the reconstruction chain.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// A real signal sampled at `fs`, whose first sample sits at time `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfRecord {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub t0: f64,
}

impl RfRecord {
    pub fn new(samples: Vec<f64>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample rate must be positive, got {fs}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("start time must be finite".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, fs, t0 })
    }

    pub fn zeros(len: usize, fs: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            fs,
            t0: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Time of sample `n`.
    pub fn time_at(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.fs
    }

    pub fn energy(&self) -> f64 {
        dot(&self.samples, &self.samples)
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            fs: self.fs,
            t0: self.t0,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear convolution with an odd-length kernel, cropped so the kernel center
/// adds no delay. Output length equals input length.
pub fn convolve_same(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    debug_assert!(kernel.len() % 2 == 1);
    let half = (kernel.len() / 2) as isize;
    let n = signal.len() as isize;
    let mut out = vec![0.0; signal.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = 0.0;
        for (j, &k) in kernel.iter().enumerate() {
            let src = i + half - j as isize;
            if src >= 0 && src < n {
                acc += k * signal[src as usize];
            }
        }
        *o = acc;
    }
    out
}

/// Cross-correlation over valid lags: `out[l] = sum_n taps[n] * data[n + l]`
/// for `l` in `0..=data.len() - taps.len()`.
pub fn correlate_valid(data: &[f64], taps: &[f64]) -> Vec<f64> {
    if taps.len() > data.len() {
        return Vec::new();
    }
    (0..=data.len() - taps.len())
        .map(|l| dot(taps, &data[l..l + taps.len()]))
        .collect()
}

/// Full cross-correlation `out[l + taps.len() - 1] = sum_n taps[n] * data[n + l]`
/// for `l` in `-(taps.len() - 1)..data.len()`.
pub fn correlate_full(data: &[f64], taps: &[f64]) -> Vec<f64> {
    let k = taps.len() as isize;
    let n = data.len() as isize;
    if k == 0 || n == 0 {
        return Vec::new();
    }
    (-(k - 1)..n)
        .map(|l| {
            let lo = 0.max(-l);
            let hi = k.min(n - l);
            (lo..hi).map(|i| taps[i as usize] * data[(i + l) as usize]).sum()
        })
        .collect()
}

/// Thin wrapper around a planned forward/inverse FFT pair of one length.
pub(crate) struct FftPair {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),

        }
    }
}

pub(crate) fn to_complex(x: &[f64], len: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    buf
}

/// One-sided periodogram `|X[k]|^2 / n` of `x` zero-padded to `nfft` points,
/// for bins `0..=nfft/2`.
pub fn periodogram(x: &[f64], nfft: usize) -> Vec<f64> {
    let nfft = nfft.max(x.len()).max(1);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut buf = to_complex(x, nfft);
    fft.process(&mut buf);
    let norm = x.len().max(1) as f64;
    buf[..=nfft / 2].iter().map(|c| c.norm_sqr() / norm).collect()
}

/// Vertex offset of the parabola through three equally spaced samples,
/// in units of the spacing, relative to the middle one.
pub fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// Index of the largest value; first occurrence wins.
pub fn argmax(x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in x.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolve_same_with_delta_is_identity() {
        let x = [1.0, -2.0, 3.0, 0.5];
        assert_eq!(convolve_same(&x, &[0.0, 1.0, 0.0]), x.to_vec());
    }

    #[test]
    fn correlate_full_matches_direct_sum() {
        let data = [1.0, 2.0, 3.0];
        let taps = [1.0, -1.0];
        // lags -1, 0, 1, 2
        assert_eq!(correlate_full(&data, &taps), vec![-1.0, -1.0, -1.0, 3.0]);
        assert_eq!(correlate_valid(&data, &taps), vec![-1.0, -1.0]);
    }

    #[test]
    fn record_rejects_bad_rate() {
        assert!(RfRecord::new(vec![0.0], 0.0, 0.0).is_err());
        assert!(RfRecord::new(vec![f64::NAN], 1.0, 0.0).is_err());
    }

    #[test]
    fn parabola_vertex() {
        // y = -(x - 0.25)^2 sampled at -1, 0, 1
        let f = |x: f64| -(x - 0.25) * (x - 0.25);
        let off = parabolic_offset(f(-1.0), f(0.0), f(1.0));
        assert!((off - 0.25).abs() < 1e-12);
    }
}
