//! Point-scatterer media: time-parameterized trajectories and echogenicity,
//! linear-in-frequency attenuation and the four reference scenarios.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::Point3;
use crate::waveform::rayleigh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static {
        z0: f64,
    },
    /// `z(t) = z0 + peak_to_peak / 2 * sin(2 pi f_osc t + phase)`
    SinusoidalAxial {
        z0: f64,
        f_osc: f64,
        peak_to_peak: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Moves at `v` between `t_start` and `t_stop`, at rest otherwise.
    ConstantVelocity {
        z0: f64,
        v: f64,
        #[serde(default)]
        t_start: f64,
        #[serde(default = "unbounded")]
        t_stop: f64,
    },
    /// Piecewise-linear path through `(t, z)` knots, held constant outside.
    Piecewise { knots: Vec<(f64, f64)> },
}

fn unbounded() -> f64 {
    f64::INFINITY
}

impl Motion {
    pub fn depth_at(&self, t: f64) -> f64 {
        match *self {
            Motion::Static { z0 } => z0,
            Motion::SinusoidalAxial {
                z0,
                f_osc,
                peak_to_peak,
                phase,
            } => z0 + 0.5 * peak_to_peak * (2.0 * PI * f_osc * t + phase).sin(),
            Motion::ConstantVelocity {
                z0,
                v,
                t_start,
                t_stop,
            } => z0 + v * (t.clamp(t_start, t_stop) - t_start),
            Motion::Piecewise { ref knots } => piecewise_depth(knots, t),
        }
    }

    /// Supremum of `|dz/dt|` over all times.
    pub fn max_speed(&self) -> f64 {
        match *self {
            Motion::Static { .. } => 0.0,
            Motion::SinusoidalAxial {
                f_osc, peak_to_peak, ..
            } => PI * f_osc * peak_to_peak.abs(),
            Motion::ConstantVelocity { v, .. } => v.abs(),
            Motion::Piecewise { ref knots } => knots
                .windows(2)
                .filter(|w| w[1].0 > w[0].0)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn is_static(&self) -> bool {
        self.max_speed() == 0.0
    }
}

fn piecewise_depth(knots: &[(f64, f64)], t: f64) -> f64 {
    match knots {
        [] => 0.0,
        [only] => only.1,
        _ => {
            if t <= knots[0].0 {
                return knots[0].1;
            }
            for w in knots.windows(2) {
                let ((t0, z0), (t1, z1)) = (w[0], w[1]);
                if t <= t1 {
                    if t1 <= t0 {
                        return z1;
                    }
                    return z0 + (z1 - z0) * (t - t0) / (t1 - t0);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blink {
    pub t_on: f64,
    pub t_off: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Echogenicity {
    Constant {
        amplitude: f64,
    },
    /// Zero outside the listed `[t_on, t_off]` intervals.
    Blinking { blinks: Vec<Blink> },
    /// Time-constant amplitude drawn once from Rayleigh(scale).
    RayleighRandom {
        scale: f64,
        seed: u64,
        #[serde(skip)]
        value: Option<f64>,
    },
}

impl Echogenicity {
    pub fn rayleigh(scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Echogenicity::RayleighRandom {
            scale,
            seed,
            value: Some(rayleigh(&mut rng, scale)),
        }
    }

    pub fn amplitude_at(&self, t: f64) -> f64 {
        match self {
            Echogenicity::Constant { amplitude } => *amplitude,
            Echogenicity::Blinking { blinks } => blinks
                .iter()
                .find(|b| t >= b.t_on && t <= b.t_off)
                .map_or(0.0, |b| b.amplitude),
            Echogenicity::RayleighRandom { scale, seed, value } => match value {
                Some(v) => *v,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    rayleigh(&mut rng, *scale)
                }
            },
        }
    }

    /// Fills in the cached Rayleigh draw after deserialization.
    pub fn resolved(self) -> Self {
        match self {
            Echogenicity::RayleighRandom {
                scale,
                seed,
                value: None,
            } => Echogenicity::rayleigh(scale, seed),
            other => other,
        }
    }

    fn min_value(&self) -> f64 {
        match self {
            Echogenicity::Constant { amplitude } => *amplitude,
            Echogenicity::Blinking { blinks } => {
                blinks.iter().map(|b| b.amplitude).fold(0.0, f64::min)
            }
            Echogenicity::RayleighRandom { scale, .. } => scale.min(0.0),
        }
    }
}

/// One point scatterer on the probe's central line (lateral position 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererTrajectory {
    pub motion: Motion,
    pub echogenicity: Echogenicity,
}

impl ScattererTrajectory {
    pub fn new(motion: Motion, echogenicity: Echogenicity) -> Self {
        Self {
            motion,
            echogenicity,
        }
    }

    pub fn fixed(z0: f64, amplitude: f64) -> Self {
        Self::new(Motion::Static { z0 }, Echogenicity::Constant { amplitude })
    }

    pub fn validate(&self, c: f64) -> Result<()> {
        let speed = self.motion.max_speed();
        if !(speed < c) {
            return Err(Error::Supersonic { index: 0, speed, c });
        }
        if self.echogenicity.min_value() < 0.0 {
            return Err(Error::InvalidArgument("echogenicity must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn position_at(traj: &ScattererTrajectory, t: f64) -> Point3 {
    [0.0, 0.0, traj.motion.depth_at(t)]
}

pub fn echogenicity_at(traj: &ScattererTrajectory, t: f64) -> f64 {
    traj.echogenicity.amplitude_at(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationModel {
    /// dB / MHz / cm
    pub alpha: f64,
    pub enabled: bool,
}

impl Default for AttenuationModel {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            enabled: false,
        }
    }
}

impl AttenuationModel {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn on(alpha: f64) -> Self {
        Self {
            alpha,
            enabled: true,
        }
    }
}

/// Amplitude factor `10^(-alpha * fc[MHz] * (r_emit + r_recv)[cm] / 20)`.
pub fn attenuation_factor(model: &AttenuationModel, fc: f64, r_emit: f64, r_recv: f64) -> f64 {
    if !model.enabled || model.alpha == 0.0 {
        return 1.0;
    }
    let db = model.alpha * (fc * 1e-6) * ((r_emit + r_recv) * 100.0);
    10f64.powf(-db / 20.0)
}

pub fn attenuation_db(model: &AttenuationModel, fc: f64, r_emit: f64, r_recv: f64) -> f64 {
    -20.0 * attenuation_factor(model, fc, r_emit, r_recv).log10()
}

/// Scatterers plus the propagation model they are imaged through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub scatterers: Vec<ScattererTrajectory>,
    pub attenuation: AttenuationModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Oscillating,
    Blinking,
    Cyst,
    AttenuatedColumn,
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oscillating" => Ok(PresetName::Oscillating),
            "blinking" => Ok(PresetName::Blinking),
            "cyst" => Ok(PresetName::Cyst),
            "attenuated_column" => Ok(PresetName::AttenuatedColumn),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Oscillating => "oscillating",
            PresetName::Blinking => "blinking",
            PresetName::Cyst => "cyst",
            PresetName::AttenuatedColumn => "attenuated_column",
        }
    }
}

/// Knobs of the reference scenarios that have no single canonical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetParams {
    /// Wavelength used for cyst spacing (m).
    pub wavelength: f64,
    /// Acquisition span the blinks are spread over (s).
    pub blink_window: (f64, f64),
    pub blink_count: usize,
    pub blink_duration: (f64, f64),
    /// Minimum quiet time between consecutive blinks (s).
    pub blink_min_gap: f64,
    pub cyst_center: f64,
    /// Peak radial displacement of the cyst boundary (m).
    pub cyst_dilation: f64,
    pub cyst_rate: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            wavelength: 1540.0 / 5e6,
            blink_window: (40e-6, 1.02e-3),
            blink_count: 20,
            blink_duration: (10e-6, 20e-6),
            blink_min_gap: 15e-6,
            cyst_center: 30e-3,
            cyst_dilation: 1e-3,
            cyst_rate: 500.0,
        }
    }
}

pub fn preset(name: &str, seed: u64) -> Result<Medium> {
    preset_with(name.parse()?, seed, &PresetParams::default())
}

pub fn preset_with(name: PresetName, seed: u64, params: &PresetParams) -> Result<Medium> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let medium = match name {
        PresetName::Oscillating => Medium {
            scatterers: vec![ScattererTrajectory::new(
                Motion::SinusoidalAxial {
                    z0: 30e-3,
                    f_osc: 12e3,
                    peak_to_peak: 0.1e-3,
                    phase: 0.0,
                },
                Echogenicity::Constant { amplitude: 1.0 },
            )],
            attenuation: AttenuationModel::off(),
        },
        PresetName::Blinking => Medium {
            scatterers: vec![ScattererTrajectory::new(
                Motion::Static { z0: 30e-3 },
                Echogenicity::Blinking {
                    blinks: random_blinks(&mut rng, params)?,
                },
            )],
            attenuation: AttenuationModel::off(),
        },
        PresetName::Cyst => cyst(&mut rng, params),
        PresetName::AttenuatedColumn => Medium {
            scatterers: [30e-3, 45e-3, 60e-3, 75e-3, 90e-3, 105e-3]
                .into_iter()
                .map(|z| ScattererTrajectory::fixed(z, 1.0))
                .collect(),
            attenuation: AttenuationModel::on(1.5),
        },
    };
    Ok(medium)
}

/// Non-overlapping blinks placed by rejection sampling, sorted by onset.
fn random_blinks(rng: &mut ChaCha8Rng, p: &PresetParams) -> Result<Vec<Blink>> {
    let mut blinks: Vec<Blink> = Vec::with_capacity(p.blink_count);
    let mut attempts = 0usize;
    while blinks.len() < p.blink_count {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::InvalidArgument(format!(
                "cannot place {} blinks in the acquisition window",
                p.blink_count
            )));
        }
        let len = rng.random_range(p.blink_duration.0..=p.blink_duration.1);
        let t_on = rng.random_range(p.blink_window.0..(p.blink_window.1 - len));
        let t_off = t_on + len;
        let clash = blinks
            .iter()
            .any(|b| t_on < b.t_off + p.blink_min_gap && b.t_on < t_off + p.blink_min_gap);
        if !clash {
            let amplitude = rng.random_range(0.5..=1.0);
            blinks.push(Blink {
                t_on,
                t_off,
                amplitude,
            });
        }
    }
    blinks.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
    Ok(blinks)
}

/// 50 bright cyst scatterers spaced by one wavelength on average, dilating
/// sinusoidally about the center, inside 950 static Rayleigh(0.05) background
/// scatterers (ten per wavelength of depth).
fn cyst(rng: &mut ChaCha8Rng, p: &PresetParams) -> Medium {
    const CYST: usize = 50;
    const BACKGROUND_PER_LAMBDA: usize = 10;
    const BACKGROUND_SPAN: usize = 95;
    let lambda = p.wavelength;
    let radius = CYST as f64 * lambda / 2.0;
    let mut scatterers = Vec::with_capacity(CYST + BACKGROUND_SPAN * BACKGROUND_PER_LAMBDA);
    for j in 0..CYST {
        let jitter: f64 = rng.random_range(-0.5..0.5);
        let offset = (j as f64 + 0.5 + jitter) * lambda - radius;
        let amplitude = rng.random_range(0.5..1.5);
        // radial dilation: displacement scales with distance to the center
        let peak_to_peak = 2.0 * p.cyst_dilation * offset.abs() / radius;
        let phase = if offset < 0.0 { PI } else { 0.0 };
        scatterers.push(ScattererTrajectory::new(
            Motion::SinusoidalAxial {
                z0: p.cyst_center + offset,
                f_osc: p.cyst_rate,
                peak_to_peak,
                phase,
            },
            Echogenicity::Constant { amplitude },
        ));
    }
    let top = p.cyst_center - BACKGROUND_SPAN as f64 * lambda / 2.0;
    for cell in 0..BACKGROUND_SPAN {
        for _ in 0..BACKGROUND_PER_LAMBDA {
            let z = top + (cell as f64 + rng.random::<f64>()) * lambda;
            let seed = rng.random::<u64>();
            scatterers.push(ScattererTrajectory::new(
                Motion::Static { z0: z },
                Echogenicity::rayleigh(0.05, seed),
            ));
        }
    }
    Medium {
        scatterers,
        attenuation: AttenuationModel::off(),
    }
}
