//! Sliding-window extraction of coherent reference/echo pairs.
//!
//! A reference window of `n_e` samples is cut from the transducer-matched
//! emission around `t_E`; the paired echo window starts at the same instant
//! and is longer by the round trip to `r_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::ProbeConfig;
use crate::signal::RfRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    /// Center of the first reference window (s).
    pub t_e_first: f64,
    pub step_samples: usize,
    pub n_windows: usize,
    pub n_e: usize,
    pub r_max: f64,
}

impl WindowPlan {
    /// Largest plan with `step_samples` spacing whose first window starts at
    /// the first sample of both signals.
    pub fn fit(
        x_pe: &RfRecord,
        y: &RfRecord,
        n_e: usize,
        step_samples: usize,
        r_max: f64,
        probe: &ProbeConfig,
    ) -> Result<Self> {
        check_odd(n_e)?;
        if step_samples == 0 {
            return Err(Error::InvalidArgument("window step must be at least one sample".into()));
        }
        let n_r = echo_len(n_e, r_max, probe);
        let support = x_pe.len().min(y.len());
        if support < n_r {
            return Err(Error::PlanOverrun { max_windows: 0 });
        }
        let n_windows = (support - n_r) / step_samples + 1;
        Ok(Self {
            t_e_first: x_pe.t0 + (n_e / 2) as f64 / probe.fs,
            step_samples,
            n_windows,
            n_e,
            r_max,
        })
    }

    /// Slow-time frame rate `fs / step`.
    pub fn frame_rate(&self, probe: &ProbeConfig) -> f64 {
        probe.fs / self.step_samples as f64
    }

    pub fn centers(&self, probe: &ProbeConfig) -> Vec<f64> {
        (0..self.n_windows)
            .map(|w| self.t_e_first + (w * self.step_samples) as f64 / probe.fs)
            .collect()
    }

    /// Keeps every `factor`-th window.
    pub fn decimated(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            step_samples: self.step_samples * factor,
            n_windows: self.n_windows.div_ceil(factor),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub x_w: RfRecord,
    pub y_w: RfRecord,
    pub t_e_center: f64,
}

fn check_odd(n_e: usize) -> Result<()> {
    if n_e.is_multiple_of(2) {
        Err(Error::EvenWindow(n_e))
    } else {
        Ok(())
    }
}

/// `N_R = N_E + ceil(2 r_max / (c Ts))`.
pub fn echo_len(n_e: usize, r_max: f64, probe: &ProbeConfig) -> usize {
    let extra = 2.0 * r_max * probe.fs / probe.c;
    // absorb float noise on exact integers
    n_e + (extra - 1e-9).ceil().max(0.0) as usize
}

/// Nearest sample index of time `t` in `rec` (may be negative).
fn index_of(rec: &RfRecord, t: f64) -> i64 {
    ((t - rec.t0) * rec.fs).round() as i64
}

fn slice(rec: &RfRecord, start: i64, len: usize) -> Result<RfRecord> {
    let end = start + len as i64;
    if start < 0 || end > rec.len() as i64 {
        return Err(Error::OutOfSupport {
            start,
            end,
            len: rec.len(),
        });
    }
    let s = start as usize;
    Ok(RfRecord {
        samples: rec.samples[s..s + len].to_vec(),
        fs: rec.fs,
        t0: rec.time_at(s),
    })
}

/// The `n_e` samples of `x_pe` within `n_e / 2` samples of `t_e_center`.
pub fn reference_window(x_pe: &RfRecord, t_e_center: f64, n_e: usize) -> Result<RfRecord> {
    check_odd(n_e)?;
    let center = index_of(x_pe, t_e_center);
    slice(x_pe, center - (n_e / 2) as i64, n_e)
}

/// `N_R` samples of `y` starting with the reference window.
pub fn echo_window(
    y: &RfRecord,
    t_e_center: f64,
    n_e: usize,
    r_max: f64,
    probe: &ProbeConfig,
) -> Result<RfRecord> {
    check_odd(n_e)?;
    let start = index_of(y, t_e_center) - (n_e / 2) as i64;
    slice(y, start, echo_len(n_e, r_max, probe))
}

/// Center time `t_R^w` of the echo window paired with `t_e_center`.
pub fn echo_center(t_e_center: f64, n_e: usize, r_max: f64, probe: &ProbeConfig) -> f64 {
    let t_e = n_e as f64 / probe.fs;
    let t_r = t_e + 2.0 * r_max / probe.c;
    t_e_center - t_e / 2.0 + t_r / 2.0
}

pub fn extract_pair(
    x_pe: &RfRecord,
    y: &RfRecord,
    t_e_center: f64,
    n_e: usize,
    r_max: f64,
    probe: &ProbeConfig,
) -> Result<WindowPair> {
    Ok(WindowPair {
        x_w: reference_window(x_pe, t_e_center, n_e)?,
        y_w: echo_window(y, t_e_center, n_e, r_max, probe)?,
        t_e_center,
    })
}

/// All pairs of `plan`. Fails with the largest feasible window count when the
/// plan runs past either signal.
pub fn plan_windows(
    plan: &WindowPlan,
    x_pe: &RfRecord,
    y: &RfRecord,
    probe: &ProbeConfig,
) -> Result<Vec<WindowPair>> {
    check_odd(plan.n_e)?;
    let centers = plan.centers(probe);
    let fits = |t: f64| extract_pair(x_pe, y, t, plan.n_e, plan.r_max, probe).is_ok();
    // centers only move forward, so the feasible windows form a prefix
    let feasible = centers.iter().take_while(|&&t| fits(t)).count();
    if feasible < centers.len() {
        return Err(Error::PlanOverrun {
            max_windows: feasible,
        });
    }
    centers
        .into_iter()
        .map(|t| extract_pair(x_pe, y, t, plan.n_e, plan.r_max, probe))
        .collect()
}
