//! From compressed lines to an M-mode image: envelope, upsampling, depth
//! mapping, resampling onto a linear grid and optional temporal compounding.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::probe::ProbeConfig;
use crate::signal::{to_complex, FftPair};

/// Order of rectification and analytic-signal detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// Analytic-signal magnitude of the rectified line.
    #[default]
    Rectified,
    /// Analytic-signal magnitude of the raw line.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
}

impl DepthGrid {
    pub fn new(z_min: f64, z_max: f64, dz: f64) -> Result<Self> {
        if !(z_min >= 0.0 && z_max > z_min && dz > 0.0 && z_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth grid needs 0 <= z_min < z_max and dz > 0 (got {z_min}, {z_max}, {dz})"
            )));
        }
        Ok(Self { z_min, z_max, dz })
    }

    /// `[0, r_max]` sampled every lambda/8.
    pub fn default_for(probe: &ProbeConfig, r_max: f64) -> Self {
        Self {
            z_min: 0.0,
            z_max: r_max,
            dz: probe.wavelength() / 8.0,
        }
    }

    pub fn len(&self) -> usize {
        ((self.z_max - self.z_min) / self.dz + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depths(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.z_min + i as f64 * self.dz).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MModeOptions {
    pub upsample: usize,
    pub grid: DepthGrid,
    /// Hamming half-width in columns; 0 disables compounding.
    pub compounding: usize,
    pub envelope: EnvelopeMode,
}

impl MModeOptions {
    pub fn new(grid: DepthGrid) -> Self {
        Self {
            upsample: 4,
            grid,
            compounding: 0,
            envelope: EnvelopeMode::default(),
        }
    }
}

/// Non-negative image stored column by column (one column per slow-time
/// sample).
#[derive(Debug, Clone, PartialEq)]
pub struct MModeImage {
    pub values: Vec<f64>,
    pub depth_grid: Vec<f64>,
    pub time_grid: Vec<f64>,
}

impl MModeImage {
    pub fn n_depths(&self) -> usize {
        self.depth_grid.len()
    }

    pub fn n_columns(&self) -> usize {
        self.time_grid.len()
    }

    pub fn get(&self, depth_index: usize, column: usize) -> f64 {
        self.values[column * self.n_depths() + depth_index]
    }

    pub fn column(&self, column: usize) -> &[f64] {
        let n = self.n_depths();
        &self.values[column * n..(column + 1) * n]
    }

    pub fn row(&self, depth_index: usize) -> Vec<f64> {
        (0..self.n_columns()).map(|w| self.get(depth_index, w)).collect()
    }

    /// Index of the grid depth closest to `depth`.
    pub fn nearest_depth(&self, depth: f64) -> usize {
        let mut best = 0;
        for (i, z) in self.depth_grid.iter().enumerate() {
            if (z - depth).abs() < (self.depth_grid[best] - depth).abs() {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * gain).collect(),
            ..self.clone()
        }
    }
}

fn analytic_magnitude(line: &[f64], fft: &FftPair) -> Vec<f64> {
    let n = line.len();
    let mut buf = to_complex(line, n);
    fft.forward.process(&mut buf);
    // keep DC (and Nyquist), double positive, drop negative frequencies
    let half = n / 2;
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        if k < n.div_ceil(2) {
            *b *= 2.0;
        } else if !(n.is_multiple_of(2) && k == half) {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    fft.inverse.process(&mut buf);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

/// Magnitude of the analytic signal of `line`.
pub fn envelope(line: &[f64]) -> Vec<f64> {
    envelope_with(line, EnvelopeMode::Analytic)
}

pub fn envelope_with(line: &[f64], mode: EnvelopeMode) -> Vec<f64> {
    if line.is_empty() {
        return Vec::new();
    }
    let fft = FftPair::new(line.len());
    match mode {
        EnvelopeMode::Analytic => analytic_magnitude(line, &fft),
        EnvelopeMode::Rectified => {
            let rectified: Vec<f64> = line.iter().map(|v| v.abs()).collect();
            analytic_magnitude(&rectified, &fft)
        }
    }
}

/// Band-limited interpolation by `factor` (spectrum zero padding). Sample
/// `factor * i` of the output equals sample `i` of the input.
pub fn upsample(line: &[f64], factor: usize) -> Vec<f64> {
    let n = line.len();
    if factor <= 1 || n == 0 {
        return line.to_vec();
    }
    let m = n * factor;
    let small = FftPair::new(n);
    let big = FftPair::new(m);
    let mut spec = to_complex(line, n);
    small.forward.process(&mut spec);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let pos = n.div_ceil(2);
    out[..pos].copy_from_slice(&spec[..pos]);
    for k in pos..n {
        out[m - (n - k)] = spec[k];
    }
    if n.is_multiple_of(2) {
        // split the Nyquist bin so the result stays real
        let nyq = spec[n / 2] * 0.5;
        out[n / 2] = nyq;
        out[m - n / 2] = nyq;
    }
    big.inverse.process(&mut out);
    out.iter().map(|c| c.re / n as f64).collect()
}

/// Depth of an echo with round-trip time `t_tof`, for a scatterer midway
/// between emitter and receiver.
pub fn depth_map(t_tof: f64, probe: &ProbeConfig) -> Result<f64> {
    let path = t_tof * probe.c;
    let baseline = probe.delta_x();
    if !(path >= baseline) {
        return Err(Error::ImpossibleEcho {
            path_m: path,
            baseline_m: baseline,
        });
    }
    Ok((path * path - baseline * baseline).sqrt() / 2.0)
}

/// Round-trip time of an echo from depth `z`; inverse of [`depth_map`].
pub fn depth_to_tof(z: f64, probe: &ProbeConfig) -> f64 {
    let dx = probe.delta_x();
    (4.0 * z * z + dx * dx).sqrt() / probe.c
}

/// Detected, upsampled and resampled column for one compressed line.
pub fn line_to_column(line: &[f64], fs: f64, probe: &ProbeConfig, opts: &MModeOptions) -> Result<Vec<f64>> {
    let env = envelope_with(line, opts.envelope);
    let up = opts.upsample.max(1);
    let fine: Vec<f64> = upsample(&env, up).into_iter().map(|v| v.max(0.0)).collect();
    let rate = fs * up as f64;
    let lag_depth = |lag: usize| depth_map(lag as f64 / rate, probe).unwrap_or(0.0);
    let last = fine.len().saturating_sub(1);
    let available = if fine.is_empty() { 0.0 } else { lag_depth(last) };
    let depths = opts.grid.depths();
    if depths.last().is_some_and(|&z| z > available + 1e-12) {
        return Err(Error::GridOutOfRange {
            requested: opts.grid.z_max,
            available,
        });
    }
    Ok(depths
        .iter()
        .map(|&z| {
            let pos = depth_to_tof(z, probe) * rate;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let (z_lo, z_hi) = (lag_depth(lo), lag_depth(hi));
            if hi == lo || z_hi <= z_lo {
                return fine[hi];
            }
            let w = ((z - z_lo) / (z_hi - z_lo)).clamp(0.0, 1.0);
            fine[lo] * (1.0 - w) + fine[hi] * w
        })
        .collect())
}

/// Hamming weights over `-halfwidth..=halfwidth`.
pub fn hamming(halfwidth: usize) -> Vec<f64> {
    if halfwidth == 0 {
        return vec![1.0];
    }
    let len = 2 * halfwidth;
    (0..=len)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / len as f64).cos())
        .collect()
}

/// Replaces each column by the Hamming-weighted mean of its neighbours,
/// renormalising the weights at the image edges.
pub fn compound(image: &MModeImage, halfwidth: usize) -> MModeImage {
    if halfwidth == 0 {
        return image.clone();
    }
    let weights = hamming(halfwidth);
    let cols = image.n_columns();
    let depths = image.n_depths();
    let columns: Vec<Vec<f64>> = par::map_indexed(cols, |w| {
        let mut acc = vec![0.0; depths];
        let mut total = 0.0;
        for (k, &wt) in weights.iter().enumerate() {
            let Some(src) = (w + k).checked_sub(halfwidth).filter(|&s| s < cols) else {
                continue;
            };
            total += wt;
            for (a, v) in acc.iter_mut().zip(image.column(src)) {
                *a += wt * v;
            }
        }
        acc.iter().map(|a| a / total).collect()
    });
    MModeImage {
        values: columns.concat(),
        ..image.clone()
    }
}

/// Builds the image from compressed lines, one per entry of `times`.
pub fn assemble_mmode(
    lines: &[Vec<f64>],
    times: &[f64],
    fs: f64,
    probe: &ProbeConfig,
    opts: &MModeOptions,
) -> Result<MModeImage> {
    if lines.len() != times.len() {
        return Err(Error::LengthMismatch {
            what: "one time stamp per line",
            expected: lines.len(),
            actual: times.len(),
        });
    }
    if let Some(bad) = lines.iter().find(|l| l.len() != lines[0].len()) {
        return Err(Error::LengthMismatch {
            what: "compressed line length",
            expected: lines[0].len(),
            actual: bad.len(),
        });
    }
    let columns: Vec<Result<Vec<f64>>> = par::map_indexed(lines.len(), |w| line_to_column(&lines[w], fs, probe, opts));
    let mut values = Vec::with_capacity(lines.len() * opts.grid.len());
    for c in columns {
        values.extend(c?);
    }
    let image = MModeImage {
        values,
        depth_grid: opts.grid.depths(),
        time_grid: times.to_vec(),
    };
    Ok(compound(&image, opts.compounding))
}
