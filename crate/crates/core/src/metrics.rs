//! Image and signal quality measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmode::MModeImage;
use crate::probe::ProbeConfig;
use crate::signal::{argmax, parabolic_offset, periodogram, RfRecord};

/// PSNR reported for columns without any noise.
pub const PSNR_CAP_DB: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineMetrics {
    pub islr: f64,
    pub islr_db: f64,
    pub pslr_db: f64,
    pub mlw_halfpower: f64,
    pub peak_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkCount {
    pub count: usize,
    /// `(start, end)` slow-time stamps of every run.
    pub intervals: Vec<(f64, f64)>,
}

pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

fn check_peak(line: &[f64], peak_index: usize) -> Result<()> {
    if peak_index >= line.len() {
        return Err(Error::InvalidArgument(format!(
            "peak index {peak_index} outside line of {} samples",
            line.len()
        )));
    }
    Ok(())
}

/// Energy outside `peak_index +- mainlobe_halfwidth` over the energy inside.
pub fn islr(line: &[f64], peak_index: usize, mainlobe_halfwidth: usize) -> Result<f64> {
    check_peak(line, peak_index)?;
    let (mut main, mut side) = (0.0, 0.0);
    for (i, v) in line.iter().enumerate() {
        if i.abs_diff(peak_index) <= mainlobe_halfwidth {
            main += v * v;
        } else {
            side += v * v;
        }
    }
    if main <= 0.0 {
        return Err(Error::ZeroMainlobe);
    }
    Ok(side / main)
}

/// Largest sidelobe magnitude relative to the peak, in dB.
pub fn pslr(line: &[f64], peak_index: usize, mainlobe_halfwidth: usize) -> Result<f64> {
    check_peak(line, peak_index)?;
    let peak = line[peak_index].abs();
    if peak <= 0.0 {
        return Err(Error::ZeroMainlobe);
    }
    let side = line
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(peak_index) > mainlobe_halfwidth)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    Ok(20.0 * (side / peak).log10())
}

/// Width between the half-power crossings around the global peak of an
/// envelope sampled every `spacing` metres, in wavelengths.
pub fn mainlobe_width_halfpower(envelope_line: &[f64], spacing: f64, probe: &ProbeConfig) -> Result<f64> {
    let peak = argmax(envelope_line).ok_or(Error::ZeroMainlobe)?;
    let top = envelope_line[peak];
    if top <= 0.0 {
        return Err(Error::ZeroMainlobe);
    }
    let level = top / std::f64::consts::SQRT_2;
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for i in range {
            let v = envelope_line[i];
            if v < level {
                let prev = envelope_line[(i as isize - step) as usize];
                let frac = (prev - level) / (prev - v);
                return Some(i as f64 - step as f64 * (1.0 - frac));
            }
        }
        None
    };
    let left = crossing(&mut (0..peak).rev(), -1).ok_or(Error::NoHalfPowerCrossing { side: "shallow" })?;
    let right = crossing(&mut (peak + 1..envelope_line.len()), 1).ok_or(Error::NoHalfPowerCrossing { side: "deep" })?;
    Ok((right - left) * spacing / probe.wavelength())
}

/// Line metrics of one image column; sidelobe measures use a mainlobe of
/// `mainlobe_halfwidth` metres each side of the peak.
pub fn line_metrics(
    column: &[f64],
    depths: &[f64],
    mainlobe_halfwidth: f64,
    probe: &ProbeConfig,
) -> Result<LineMetrics> {
    let peak = argmax(column).ok_or(Error::ZeroMainlobe)?;
    let dz = grid_spacing(depths)?;
    let hw = (mainlobe_halfwidth / dz).round() as usize;
    let ratio = islr(column, peak, hw)?;
    Ok(LineMetrics {
        islr: ratio,
        islr_db: to_db(ratio),
        pslr_db: pslr(column, peak, hw)?,
        mlw_halfpower: mainlobe_width_halfpower(column, dz, probe)?,
        peak_depth: depths[peak],
    })
}

fn grid_spacing(depths: &[f64]) -> Result<f64> {
    if depths.len() < 2 {
        return Err(Error::InvalidArgument("depth grid needs two points".into()));
    }
    Ok(depths[1] - depths[0])
}

fn rows_within(image: &MModeImage, lo: f64, hi: f64) -> std::ops::Range<usize> {
    let start = image.depth_grid.partition_point(|&z| z < lo);
    let end = image.depth_grid.partition_point(|&z| z <= hi);
    start..end.max(start)
}

/// Mean over columns of the ISLR of the image restricted to `[z_lo, z_hi]`,
/// the mainlobe being the rows within `mainlobe_halfwidth` metres of each
/// column's peak. Energies are taken on the detected image.
pub fn islr_in_region(image: &MModeImage, z_lo: f64, z_hi: f64, mainlobe_halfwidth: f64) -> Result<f64> {
    let rows = rows_within(image, z_lo, z_hi);
    if rows.is_empty() {
        return Err(Error::GridOutOfRange {
            requested: z_hi,
            available: image.depth_grid.last().copied().unwrap_or(0.0),
        });
    }
    let dz = grid_spacing(&image.depth_grid)?;
    let hw = (mainlobe_halfwidth / dz).round() as usize;
    let mut total = 0.0;
    for w in 0..image.n_columns() {
        let part = &image.column(w)[rows.clone()];
        let peak = argmax(part).ok_or(Error::ZeroMainlobe)?;
        total += islr(part, peak, hw)?;
    }
    Ok(total / image.n_columns().max(1) as f64)
}

/// Peak over `+- peak_window` of `depth` against the RMS of the surrounding
/// `noise_band`, per column, averaged in dB over slow time.
pub fn psnr_at_depth(image: &MModeImage, depth: f64, peak_window: f64, noise_band: f64) -> Result<f64> {
    let inner = rows_within(image, depth - peak_window, depth + peak_window);
    let outer = rows_within(image, depth - peak_window - noise_band, depth + peak_window + noise_band);
    let noise_rows: Vec<usize> = outer.filter(|r| !inner.contains(r)).collect();
    if noise_rows.is_empty() || inner.is_empty() {
        return Err(Error::EmptyNoiseBand { depth });
    }
    let mut sum_db = 0.0;
    for w in 0..image.n_columns() {
        let col = image.column(w);
        let peak = col[inner.clone()].iter().copied().fold(0.0, f64::max);
        let rms = (noise_rows.iter().map(|&r| col[r] * col[r]).sum::<f64>() / noise_rows.len() as f64).sqrt();
        sum_db += if rms > 0.0 {
            (20.0 * (peak / rms).log10()).min(PSNR_CAP_DB)
        } else {
            PSNR_CAP_DB
        };
    }
    Ok(sum_db / image.n_columns().max(1) as f64)
}

fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn padded_len(n: usize) -> usize {
    (n.max(1) * 16).next_power_of_two()
}

/// Spectral peak of `rf` inside the probe band, minus `fc`.
pub fn estimate_doppler_shift(rf: &RfRecord, probe: &ProbeConfig) -> Result<f64> {
    let window = hann(rf.len());
    let tapered: Vec<f64> = rf.samples.iter().zip(&window).map(|(a, b)| a * b).collect();
    let nfft = padded_len(rf.len());
    let spec = periodogram(&tapered, nfft);
    let df = rf.fs / nfft as f64;
    let (lo, hi) = probe.band();
    let first = ((lo / df).ceil() as usize).max(1);
    let last = ((hi / df).floor() as usize).min(spec.len() - 2);
    if first > last {
        return Err(Error::NoInBandPeak);
    }
    let k = first + argmax(&spec[first..=last]).ok_or(Error::NoInBandPeak)?;
    if spec[k] <= 0.0 {
        return Err(Error::NoInBandPeak);
    }
    let offset = parabolic_offset(spec[k - 1], spec[k], spec[k + 1]);
    Ok((k as f64 + offset) * df - probe.fc)
}

/// Runs of the row nearest `depth` at or above `threshold_frac` of its max.
pub fn count_blinks(image: &MModeImage, depth: f64, threshold_frac: f64) -> BlinkCount {
    let row = image.row(image.nearest_depth(depth));
    let top = row.iter().copied().fold(0.0, f64::max);
    let mut intervals = Vec::new();
    if top > 0.0 {
        let threshold = threshold_frac * top;
        let mut start: Option<usize> = None;
        for (w, &v) in row.iter().enumerate() {
            match (v >= threshold, start) {
                (true, None) => start = Some(w),
                (false, Some(s)) => {
                    intervals.push((image.time_grid[s], image.time_grid[w - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            intervals.push((image.time_grid[s], image.time_grid[row.len() - 1]));
        }
    }
    BlinkCount {
        count: intervals.len(),
        intervals,
    }
}

/// Sub-grid depth of the brightest row within `[z_lo, z_hi]`, per column.
pub fn peak_depth_trace(image: &MModeImage, z_lo: f64, z_hi: f64) -> Result<Vec<f64>> {
    let rows = rows_within(image, z_lo, z_hi);
    if rows.len() < 3 {
        return Err(Error::GridOutOfRange {
            requested: z_hi,
            available: image.depth_grid.last().copied().unwrap_or(0.0),
        });
    }
    let dz = grid_spacing(&image.depth_grid)?;
    Ok((0..image.n_columns())
        .map(|w| {
            let part = &image.column(w)[rows.clone()];
            let k = argmax(part).unwrap_or(0);
            let offset = if k > 0 && k + 1 < part.len() {
                parabolic_offset(part[k - 1], part[k], part[k + 1])
            } else {
                0.0
            };
            image.depth_grid[rows.start + k] + offset * dz
        })
        .collect())
}

/// Frequency of the strongest non-DC component of a uniformly sampled
/// sequence.
pub fn dominant_frequency(trace: &[f64], rate: f64) -> Result<f64> {
    if trace.len() < 4 {
        return Err(Error::NoInBandPeak);
    }
    let mean = trace.iter().sum::<f64>() / trace.len() as f64;
    let centred: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let nfft = padded_len(trace.len());
    let spec = periodogram(&centred, nfft);
    // skip the DC lobe: one native bin
    let first = nfft / trace.len();
    let k = first + argmax(&spec[first..spec.len() - 1]).ok_or(Error::NoInBandPeak)?;
    if spec[k] <= 0.0 {
        return Err(Error::NoInBandPeak);
    }
    let offset = if k > 0 {
        parabolic_offset(spec[k - 1], spec[k], spec[k + 1])
    } else {
        0.0
    };
    Ok((k as f64 + offset) * rate / nfft as f64)
}
