//! Two mono-element probe: geometry and the piezoelectric impulse response
//! applied once at emission and once at reception.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{convolve_same, RfRecord};

pub type Point3 = [f64; 3];

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Envelope level, relative to its peak, at which the impulse response is cut.
pub const KERNEL_TRUNCATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Center frequency (Hz).
    pub fc: f64,
    /// Sampling frequency (Hz).
    pub fs: f64,
    /// Fractional bandwidth at -6 dB.
    pub bw_frac: f64,
    /// Speed of sound (m/s).
    pub c: f64,
    pub p_e: Point3,
    pub p_r: Point3,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            fc: 5e6,
            fs: 30e6,
            bw_frac: 0.9,
            c: 1540.0,
            p_e: [-15e-3, 0.0, 0.0],
            p_r: [15e-3, 0.0, 0.0],
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProbe(m));
        if !(self.fc > 0.0 && self.fc.is_finite()) {
            return bad(format!("fc must be positive, got {}", self.fc));
        }
        if !(self.bw_frac > 0.0 && self.bw_frac < 2.0) {
            return bad(format!("bw_frac must lie in (0, 2), got {}", self.bw_frac));
        }
        let f_hi = self.fc * (1.0 + self.bw_frac / 2.0);
        if !(self.fs > 2.0 * f_hi) {
            return bad(format!(
                "fs = {} Hz aliases the passband edge at {} Hz",
                self.fs, f_hi
            ));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("sound speed must be positive, got {}", self.c));
        }
        if self.p_e == self.p_r {
            return bad("emitter and receiver coincide".into());
        }
        Ok(())
    }

    /// Lateral distance between emitter and receiver.
    pub fn delta_x(&self) -> f64 {
        (self.p_e[0] - self.p_r[0]).abs()
    }

    pub fn ts(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn wavelength(&self) -> f64 {
        self.c / self.fc
    }

    /// Band edges `fc * (1 -/+ bw_frac / 2)`.
    pub fn band(&self) -> (f64, f64) {
        let half = self.fc * self.bw_frac / 2.0;
        (self.fc - half, self.fc + half)
    }

    /// Standard deviation of the Gaussian spectral lobe placing the -6 dB
    /// points at the band edges.
    pub fn spectral_sigma(&self) -> f64 {
        (self.fc * self.bw_frac / 2.0) / (2.0 * LN_2).sqrt()
    }

    /// Round-trip path emitter -> point -> receiver divided by c.
    pub fn time_of_flight(&self, point: &Point3) -> f64 {
        (distance(&self.p_e, point) + distance(point, &self.p_r)) / self.c
    }
}

/// Gaussian-enveloped cosine at `fc` with the configured -6 dB fractional
/// bandwidth. Unit peak, odd length, centered (`t0` is negative).
pub fn impulse_response(config: &ProbeConfig) -> Result<RfRecord> {
    config.validate()?;
    let sigma_t = 1.0 / (2.0 * PI * config.spectral_sigma());
    let half_span = sigma_t * (-2.0 * KERNEL_TRUNCATION.ln()).sqrt();
    let half = (half_span * config.fs).floor() as i64;
    let samples = (-half..=half)
        .map(|n| {
            let t = n as f64 / config.fs;
            (-t * t / (2.0 * sigma_t * sigma_t)).exp() * (2.0 * PI * config.fc * t).cos()
        })
        .collect();
    Ok(RfRecord {
        samples,
        fs: config.fs,
        t0: -(half as f64) / config.fs,
    })
}

/// Filters `signal` by the element impulse response with zero added delay.
pub fn apply_transducer(signal: &RfRecord, config: &ProbeConfig) -> Result<RfRecord> {
    let kernel = impulse_response(config)?;
    apply_kernel(signal, &kernel, config)
}

/// Same as [`apply_transducer`] with a precomputed kernel.
pub fn apply_kernel(signal: &RfRecord, kernel: &RfRecord, config: &ProbeConfig) -> Result<RfRecord> {
    if (signal.fs - config.fs).abs() > 1e-9 * config.fs {
        return Err(Error::SampleRateMismatch {
            signal: signal.fs,
            probe: config.fs,
        });
    }
    Ok(RfRecord {
        samples: convolve_same(&signal.samples, &kernel.samples),
        fs: signal.fs,
        t0: signal.t0,
    })
}
