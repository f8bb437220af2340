//! Scenario configuration files.
//!
//! A configuration is TOML. Every field is optional except a medium (either
//! a top-level `preset` or explicit `[[medium.scatterers]]`); missing fields
//! take the defaults of the chosen preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decode::{default_mainlobe_halfwidth, FilterKind, DEFAULT_LOADING};
use crate::error::{Error, Result};
use crate::medium::{preset_with, AttenuationModel, Medium, PresetName, PresetParams, ScattererTrajectory};
use crate::mmode::{depth_map, DepthGrid, EnvelopeMode, MModeOptions};
use crate::probe::ProbeConfig;
use crate::waveform::pulse_repetition_interval;
use crate::window::echo_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionMode {
    Ceui,
    Pe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    pub preset: Option<PresetName>,
    pub scatterers: Vec<ScattererTrajectory>,
    pub attenuation: AttenuationModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionConfig {
    pub mode: EmissionMode,
    pub sigma: f64,
    pub seed: u64,
    pub duration: f64,
    pub cycles_per_chip: u32,
    /// Also image the medium with the pulse-echo baseline in CEUI mode.
    pub pe_baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowsConfig {
    pub n_e: usize,
    pub step: usize,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub filters: Vec<FilterKind>,
    pub mainlobe_halfwidth: usize,
    pub loading: f64,
    /// Decode every `decimate`-th window only.
    pub decimate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MModeConfig {
    pub upsample: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
    pub compounding: usize,
    pub db_range: f64,
    pub envelope: EnvelopeMode,
}

impl MModeConfig {
    pub fn options(&self) -> Result<MModeOptions> {
        Ok(MModeOptions {
            upsample: self.upsample,
            grid: DepthGrid::new(self.z_min, self.z_max, self.dz)?,
            compounding: self.compounding,
            envelope: self.envelope,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Depths at which PSNR is reported.
    pub depths: Vec<f64>,
    pub peak_window: f64,
    pub noise_band: f64,
    /// Half-width of the mainlobe used by the sidelobe measures (m).
    pub mainlobe_halfwidth: f64,
    pub blink_depth: Option<f64>,
    pub blink_threshold: f64,
    /// Depth span searched for the peak-depth trace.
    pub trace_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerConfig {
    /// Rates of change of the emitter-scatterer-receiver path (m/s).
    pub velocities: Vec<f64>,
    pub depth: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Where the run writes; left out of serialized copies so artifacts do
    /// not depend on it.
    #[serde(default, skip_serializing)]
    pub output: PathBuf,
    pub probe: ProbeConfig,
    pub medium: MediumConfig,
    pub emission: EmissionConfig,
    pub windows: WindowsConfig,
    pub decode: DecodeConfig,
    pub mmode: MModeConfig,
    pub metrics: MetricsConfig,
    pub noise: NoiseConfig,
    pub doppler: DopplerConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    preset: Option<PresetName>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    #[serde(default)]
    probe: RawProbe,
    #[serde(default)]
    medium: RawMedium,
    #[serde(default)]
    emission: RawEmission,
    #[serde(default)]
    windows: RawWindows,
    #[serde(default)]
    decode: RawDecode,
    #[serde(default)]
    mmode: RawMMode,
    #[serde(default)]
    metrics: RawMetrics,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    doppler: RawDoppler,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    fc: Option<f64>,
    fs: Option<f64>,
    bw_frac: Option<f64>,
    c: Option<f64>,
    p_e: Option<[f64; 3]>,
    p_r: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMedium {
    scatterers: Option<Vec<ScattererTrajectory>>,
    attenuation: Option<AttenuationModel>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmission {
    mode: Option<EmissionMode>,
    sigma: Option<f64>,
    seed: Option<u64>,
    duration: Option<f64>,
    cycles_per_chip: Option<u32>,
    pe_baseline: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindows {
    n_e: Option<usize>,
    step: Option<usize>,
    r_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecode {
    filters: Option<Vec<FilterKind>>,
    mainlobe_halfwidth: Option<usize>,
    loading: Option<f64>,
    decimate: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMMode {
    upsample: Option<usize>,
    z_min: Option<f64>,
    z_max: Option<f64>,
    dz: Option<f64>,
    compounding: Option<usize>,
    db_range: Option<f64>,
    envelope: Option<EnvelopeMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    depths: Option<Vec<f64>>,
    peak_window: Option<f64>,
    noise_band: Option<f64>,
    mainlobe_halfwidth: Option<f64>,
    blink_depth: Option<f64>,
    blink_threshold: Option<f64>,
    trace_range: Option<(f64, f64)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    snr_db: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoppler {
    velocities: Option<Vec<f64>>,
    depth: Option<f64>,
    duration: Option<f64>,
}

/// Per-preset defaults.
struct PresetDefaults {
    duration: f64,
    n_e: usize,
    r_max: f64,
    compounding: usize,
    decimate: usize,
    depths: Vec<f64>,
    blink_depth: Option<f64>,
    trace_range: Option<(f64, f64)>,
}

fn preset_defaults(preset: Option<PresetName>) -> PresetDefaults {
    let base = PresetDefaults {
        duration: 500e-6,
        n_e: 251,
        r_max: 0.04,
        compounding: 0,
        decimate: 1,
        depths: Vec::new(),
        blink_depth: None,
        trace_range: None,
    };
    match preset {
        Some(PresetName::Oscillating) => PresetDefaults {
            trace_range: Some((29e-3, 31e-3)),
            ..base
        },
        Some(PresetName::Blinking) => PresetDefaults {
            duration: 1.1e-3,
            blink_depth: Some(30e-3),
            ..base
        },
        Some(PresetName::Cyst) => PresetDefaults {
            duration: 1e-3,
            n_e: 2001,
            compounding: 10,
            decimate: 4,
            ..base
        },
        Some(PresetName::AttenuatedColumn) => PresetDefaults {
            duration: 600e-6,
            n_e: 4501,
            r_max: 0.115,
            decimate: 20,
            depths: vec![30e-3, 45e-3, 60e-3, 75e-3, 90e-3, 105e-3],
            ..base
        },
        None => base,
    }
}

/// Command-line overrides applied before defaults are derived.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub decimate: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text, overrides).map_err(|e| match e {
        Error::Validation(_) => e,
        other => Error::Config {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let config = resolve(raw, overrides)?;
    validate(&config)?;
    Ok(config)
}

fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<ScenarioConfig> {
    if raw.emission.mode == Some(EmissionMode::Pe) {
        let ceui_only = [
            ("windows.step", raw.windows.step.is_some()),
            ("windows.n_e", raw.windows.n_e.is_some()),
            ("emission.sigma", raw.emission.sigma.is_some()),
            ("decode.filters", raw.decode.filters.is_some()),
        ];
        if let Some((field, _)) = ceui_only.iter().find(|(_, set)| *set) {
            return Err(Error::Validation(format!(
                "{field} only applies to continuous emission (emission.mode = \"pe\")"
            )));
        }
    }
    if raw.preset.is_none() && raw.medium.scatterers.is_none() {
        return Err(Error::Validation(
            "a medium is required: set `preset` or list [[medium.scatterers]]".into(),
        ));
    }
    let d = preset_defaults(raw.preset);
    let base = ProbeConfig::default();
    let p = raw.probe;
    let probe = ProbeConfig {
        fc: p.fc.unwrap_or(base.fc),
        fs: p.fs.unwrap_or(base.fs),
        bw_frac: p.bw_frac.unwrap_or(base.bw_frac),
        c: p.c.unwrap_or(base.c),
        p_e: p.p_e.unwrap_or(base.p_e),
        p_r: p.p_r.unwrap_or(base.p_r),
    };
    probe.validate()?;
    let seed = overrides.seed.or(raw.seed).unwrap_or(0);
    // an explicit --seed reseeds every stream
    let derived = |explicit: Option<u64>, offset: u64| match overrides.seed {
        Some(_) => seed.wrapping_add(offset),
        None => explicit.unwrap_or(seed.wrapping_add(offset)),
    };
    let preset_attenuation = match raw.preset {
        Some(PresetName::AttenuatedColumn) => AttenuationModel::on(1.5),
        _ => AttenuationModel::off(),
    };
    let medium = MediumConfig {
        preset: raw.preset,
        scatterers: raw
            .medium
            .scatterers
            .unwrap_or_default()
            .into_iter()
            .map(|s| ScattererTrajectory::new(s.motion, s.echogenicity.resolved()))
            .collect(),
        attenuation: raw.medium.attenuation.unwrap_or(preset_attenuation),
    };
    let e = raw.emission;
    let emission = EmissionConfig {
        mode: e.mode.unwrap_or(EmissionMode::Ceui),
        sigma: e.sigma.unwrap_or(1.0),
        seed: derived(e.seed, 1),
        duration: e.duration.unwrap_or(d.duration),
        cycles_per_chip: e.cycles_per_chip.unwrap_or(1),
        pe_baseline: e.pe_baseline.unwrap_or(true),
    };
    let windows = WindowsConfig {
        n_e: raw.windows.n_e.unwrap_or(d.n_e),
        step: raw.windows.step.unwrap_or(21),
        r_max: raw.windows.r_max.unwrap_or(d.r_max),
    };
    let decode = DecodeConfig {
        filters: raw
            .decode
            .filters
            .unwrap_or_else(|| vec![FilterKind::Matched, FilterKind::MismatchedIslr]),
        mainlobe_halfwidth: raw
            .decode
            .mainlobe_halfwidth
            .unwrap_or_else(|| default_mainlobe_halfwidth(&probe)),
        loading: raw.decode.loading.unwrap_or(DEFAULT_LOADING),
        decimate: overrides.decimate.or(raw.decode.decimate).unwrap_or(d.decimate),
    };
    let m = raw.mmode;
    let dz = m.dz.unwrap_or(probe.wavelength() / 8.0);
    let mmode = MModeConfig {
        upsample: m.upsample.unwrap_or(4),
        z_min: m.z_min.unwrap_or(0.0),
        z_max: m.z_max.unwrap_or_else(|| reachable_depth(windows.r_max, &probe, dz)),
        dz,
        compounding: m.compounding.unwrap_or(d.compounding),
        db_range: m.db_range.unwrap_or(40.0),
        envelope: m.envelope.unwrap_or_default(),
    };
    let mt = raw.metrics;
    let metrics = MetricsConfig {
        depths: mt.depths.unwrap_or(d.depths),
        peak_window: mt.peak_window.unwrap_or(probe.wavelength()),
        noise_band: mt.noise_band.unwrap_or(5e-3),
        mainlobe_halfwidth: mt.mainlobe_halfwidth.unwrap_or(probe.wavelength() / 4.0),
        blink_depth: mt.blink_depth.or(d.blink_depth),
        blink_threshold: mt.blink_threshold.unwrap_or(0.3),
        trace_range: mt.trace_range.or(d.trace_range),
    };
    let noise = NoiseConfig {
        snr_db: raw.noise.snr_db.unwrap_or(10.0),
        seed: derived(raw.noise.seed, 2),
    };
    let doppler = DopplerConfig {
        velocities: raw.doppler.velocities.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 3.0, 4.0]),
        depth: raw.doppler.depth.unwrap_or(30e-3),
        duration: raw.doppler.duration.unwrap_or(2e-3),
    };
    let name = raw
        .name
        .clone()
        .unwrap_or_else(|| raw.preset.map_or("custom", PresetName::as_str).to_string());
    Ok(ScenarioConfig {
        output: overrides
            .output
            .clone()
            .or(raw.output)
            .unwrap_or_else(|| PathBuf::from("out").join(&name)),
        name,
        seed,
        probe,
        medium,
        emission,
        windows,
        decode,
        mmode,
        metrics,
        noise,
        doppler,
    })
}

/// Deepest grid depth (a multiple of `dz`) that the echo window reaches.
fn reachable_depth(r_max: f64, probe: &ProbeConfig, dz: f64) -> f64 {
    let limit = depth_map(2.0 * r_max / probe.c, probe).unwrap_or(0.0);
    (limit / dz).floor() * dz
}

fn fail(message: String) -> Result<()> {
    Err(Error::Validation(message))
}

pub fn validate(c: &ScenarioConfig) -> Result<()> {
    c.probe.validate()?;
    let w = &c.windows;
    if w.n_e.is_multiple_of(2) || w.n_e < 3 {
        return fail(format!("windows.n_e must be odd and at least 3, got {}", w.n_e));
    }
    if w.step == 0 {
        return fail("windows.step must be at least 1".into());
    }
    if !(w.r_max > 0.0 && w.r_max.is_finite()) {
        return fail(format!("windows.r_max must be positive, got {}", w.r_max));
    }
    let e = &c.emission;
    if !(e.duration > 0.0 && e.duration.is_finite()) {
        return fail(format!("emission.duration must be positive, got {}", e.duration));
    }
    if !(e.sigma > 0.0 && e.sigma.is_finite()) {
        return fail(format!("emission.sigma must be positive, got {}", e.sigma));
    }
    if e.cycles_per_chip == 0 {
        return fail("emission.cycles_per_chip must be at least 1".into());
    }
    let n_total = (e.duration * c.probe.fs).round() as usize;
    if e.mode == EmissionMode::Ceui {
        let n_r = echo_len(w.n_e, w.r_max, &c.probe);
        if n_total < n_r {
            return fail(format!(
                "emission.duration gives {n_total} samples but one echo window needs {n_r}"
            ));
        }
        if c.decode.filters.is_empty() {
            return fail("decode.filters must name at least one filter".into());
        }
    }
    let pri = pulse_repetition_interval(w.r_max, c.probe.c);
    if e.mode == EmissionMode::Pe || e.pe_baseline {
        let pulse = 13.0 * e.cycles_per_chip as f64 / c.probe.fc;
        if pulse >= pri {
            return fail(format!("Barker pulse ({pulse:.3e} s) exceeds the repetition interval ({pri:.3e} s)"));
        }
        if e.duration < 2.0 * pri {
            return fail(format!(
                "emission.duration must cover at least one full pulse-echo cycle ({:.3e} s)",
                2.0 * pri
            ));
        }
    }
    if c.decode.decimate == 0 {
        return fail("decode.decimate must be at least 1".into());
    }
    if !(c.decode.loading >= 0.0 && c.decode.loading.is_finite()) {
        return fail(format!("decode.loading must be non-negative, got {}", c.decode.loading));
    }
    let m = &c.mmode;
    if m.upsample == 0 {
        return fail("mmode.upsample must be at least 1".into());
    }
    if !(m.db_range > 0.0) {
        return fail(format!("mmode.db_range must be positive, got {}", m.db_range));
    }
    if DepthGrid::new(m.z_min, m.z_max, m.dz).is_err() {
        return fail(format!(
            "mmode grid needs 0 <= z_min < z_max and dz > 0 (got {}, {}, {})",
            m.z_min, m.z_max, m.dz
        ));
    }
    let reachable = depth_map(2.0 * w.r_max / c.probe.c, &c.probe).unwrap_or(0.0);
    if m.z_max > reachable + 1e-12 {
        return fail(format!(
            "mmode.z_max = {} m lies beyond the deepest depth the echo window reaches ({reachable:.5} m)",
            m.z_max
        ));
    }
    if c.noise.snr_db.is_nan() {
        return fail("noise.snr_db is NaN".into());
    }
    let mt = &c.metrics;
    for &z in mt.depths.iter().chain(mt.blink_depth.iter()) {
        if !(m.z_min..=m.z_max).contains(&z) {
            return fail(format!("metric depth {z} m lies outside the depth grid"));
        }
    }
    if !(0.0..=1.0).contains(&mt.blink_threshold) {
        return fail(format!("metrics.blink_threshold must lie in [0, 1], got {}", mt.blink_threshold));
    }
    for (i, s) in c.medium.scatterers.iter().enumerate() {
        s.validate(c.probe.c).map_err(|e| Error::Validation(format!("scatterer {i}: {e}")))?;
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn medium(&self) -> Result<Medium> {
        let mut medium = match self.medium.preset {
            Some(name) => preset_with(name, self.seed, &PresetParams::default())?,
            None => Medium {
                scatterers: Vec::new(),
                attenuation: AttenuationModel::off(),
            },
        };
        medium.scatterers.extend(self.medium.scatterers.iter().cloned());
        medium.attenuation = self.medium.attenuation;
        Ok(medium)
    }

    pub fn n_samples(&self) -> usize {
        (self.emission.duration * self.probe.fs).round() as usize
    }

    /// Largest reference length keeping motion below a quarter wavelength of
    /// phase drift: `pi * dz * fs / v_max`.
    pub fn reference_length_bound(dz: f64, fs: f64, v_max: f64) -> f64 {
        std::f64::consts::PI * dz * fs / v_max
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
