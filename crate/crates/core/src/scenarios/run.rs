//! End-to-end runs: simulation, reconstruction of every requested image,
//! metrics and the artifact directory with its manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::{compress, matched_filter, mismatched_filter_islr, FilterKind};
use crate::error::{Error, Result, StageExt};
use crate::io;
use crate::medium::{Medium, Motion, ScattererTrajectory, Echogenicity};
use crate::metrics::{self, BlinkCount};
use crate::mmode::{assemble_mmode, depth_map, depth_to_tof, MModeImage};
use crate::par;
use crate::probe::{apply_kernel, distance, impulse_response, ProbeConfig};
use crate::rfsim::{add_band_limited_noise, add_noise_for_power, synthesize_rf};
use crate::signal::RfRecord;
use crate::waveform::{gen_barker13_pulse, gen_noise_excitation, gen_pe_emission_train, pulse_repetition_interval, pulse_starts};
use crate::window::{echo_len, extract_pair, WindowPlan};

use super::config::{EmissionMode, ScenarioConfig};

pub const IMAGE_CEUI_MF: &str = "ceui_mf";
pub const IMAGE_CEUI_MMF: &str = "ceui_mmf";
pub const IMAGE_PE: &str = "pe";

/// Seed offset separating the pulse-echo noise stream from the CEUI one.
const PE_NOISE_STREAM: u64 = 0x5045;

/// Signals of one acquisition scheme: emitted (after the element), the
/// reference used for decoding, and the noisy received RF.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub emission: RfRecord,
    pub reference: RfRecord,
    pub rf: RfRecord,
}

#[derive(Debug, Clone, Default)]
pub struct Simulation {
    pub ceui: Option<Acquisition>,
    pub pe: Option<Acquisition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ImageMetrics {
    pub columns: usize,
    /// Slow-time sampling rate of the image (Hz).
    pub frame_rate: f64,
    pub islr_mean: Option<f64>,
    /// Mean ISLR over the trajectory span plus one mainlobe half-width.
    pub islr_region: Option<f64>,
    /// Mean ISLR over every depth the reference correlates with.
    pub islr_wide: Option<f64>,
    pub pslr_db_mean: Option<f64>,
    pub mlw_mean: Option<f64>,
    pub peak_depth_mean: Option<f64>,
    /// `(depth, PSNR dB)` pairs.
    pub psnr_db: Vec<(f64, f64)>,
    pub blinks: Option<BlinkCount>,
    pub trace_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub scenario: u64,
    pub emission: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ScenarioConfig,
    pub seeds: Seeds,
    pub threads: usize,
    pub files: Vec<FileEntry>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
    pub metrics: BTreeMap<String, ImageMetrics>,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn hash_of(&self, file: &str) -> Option<&str> {
        self.files.iter().find(|f| f.path == file).map(|f| f.sha256.as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    /// Skip writing the raw RF signals.
    pub skip_signals: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub images: BTreeMap<String, MModeImage>,
    /// Reference length used by each image, for region metrics.
    pub reference_len: BTreeMap<String, usize>,
}

struct Timer(Vec<(String, f64)>, Instant);

impl Timer {
    fn new() -> Self {
        Self(Vec::new(), Instant::now())
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.push((stage.to_string(), (now - self.1).as_secs_f64()));
        self.1 = now;
    }
}

fn element_kernel(probe: &ProbeConfig) -> Result<RfRecord> {
    impulse_response(probe).stage("probe")
}

/// Emitted signal and decoding reference of the continuous emission.
pub fn ceui_emission(cfg: &ScenarioConfig) -> Result<(RfRecord, RfRecord)> {
    let kernel = element_kernel(&cfg.probe)?;
    let e = gen_noise_excitation(cfg.n_samples(), &cfg.probe, cfg.emission.sigma, cfg.emission.seed)
        .stage("waveform")?;
    let x = apply_kernel(&e.samples, &kernel, &cfg.probe).stage("probe")?;
    let x_pe = apply_kernel(&x, &kernel, &cfg.probe).stage("probe")?;
    Ok((x, x_pe))
}

/// Emitted pulse train and decoding reference of the pulse-echo baseline.
pub fn pe_emission(cfg: &ScenarioConfig) -> Result<(RfRecord, RfRecord)> {
    let kernel = element_kernel(&cfg.probe)?;
    let pulse = gen_barker13_pulse(&cfg.probe, cfg.emission.cycles_per_chip).stage("waveform")?;
    let train = gen_pe_emission_train(&pulse, cfg.windows.r_max, cfg.emission.duration, &cfg.probe)
        .stage("waveform")?;
    let x = apply_kernel(&train, &kernel, &cfg.probe).stage("probe")?;
    let x_pe = apply_kernel(&x, &kernel, &cfg.probe).stage("probe")?;
    Ok((x, x_pe))
}

fn runs_ceui(cfg: &ScenarioConfig) -> bool {
    cfg.emission.mode == EmissionMode::Ceui
}

fn runs_pe(cfg: &ScenarioConfig) -> bool {
    cfg.emission.mode == EmissionMode::Pe || cfg.emission.pe_baseline
}

/// Mean power of one Barker pulse after both element passes; the pulse-echo
/// noise level is referred to it rather than to the mostly silent train.
fn pe_pulse_power(cfg: &ScenarioConfig, x: &RfRecord) -> f64 {
    let len = 13 * (cfg.emission.cycles_per_chip as f64 * cfg.probe.fs / cfg.probe.fc).round() as usize;
    let n = len.min(x.len());
    x.samples[..n].iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation> {
    let medium = cfg.medium().stage("medium")?;
    let n = cfg.n_samples();
    let mut sim = Simulation::default();
    if runs_ceui(cfg) {
        let (x, x_pe) = ceui_emission(cfg)?;
        let clean = synthesize_rf(&medium.scatterers, &x, &cfg.probe, &medium.attenuation, n).stage("rfsim")?;
        let rf = add_band_limited_noise(&clean, cfg.noise.snr_db, &cfg.probe, &x, cfg.noise.seed).stage("rfsim")?;
        sim.ceui = Some(Acquisition {
            emission: x,
            reference: x_pe,
            rf,
        });
    }
    if runs_pe(cfg) {
        let (x, x_pe) = pe_emission(cfg)?;
        let clean = synthesize_rf(&medium.scatterers, &x, &cfg.probe, &medium.attenuation, n).stage("rfsim")?;
        let rf = add_noise_for_power(
            &clean,
            cfg.noise.snr_db,
            &cfg.probe,
            pe_pulse_power(cfg, &x),
            cfg.noise.seed ^ PE_NOISE_STREAM,
        )
        .stage("rfsim")?;
        sim.pe = Some(Acquisition {
            emission: x,
            reference: x_pe,
            rf,
        });
    }
    Ok(sim)
}

/// Window plan of the continuous emission, decimated as configured.
pub fn ceui_plan(cfg: &ScenarioConfig, acq: &Acquisition) -> Result<WindowPlan> {
    let plan = WindowPlan::fit(
        &acq.reference,
        &acq.rf,
        cfg.windows.n_e,
        cfg.windows.step,
        cfg.windows.r_max,
        &cfg.probe,
    )
    .stage("window")?;
    Ok(plan.decimated(cfg.decode.decimate))
}

fn image_name(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::Matched => IMAGE_CEUI_MF,
        FilterKind::MismatchedIslr => IMAGE_CEUI_MMF,
    }
}

/// Compressed lines of every window, one set per configured filter.
pub fn ceui_lines(cfg: &ScenarioConfig, acq: &Acquisition, plan: &WindowPlan) -> Result<Vec<Vec<Vec<f64>>>> {
    let centers = plan.centers(&cfg.probe);
    let per_window: Vec<Result<Vec<Vec<f64>>>> = par::map_indexed(centers.len(), |w| {
        let pair = extract_pair(
            &acq.reference,
            &acq.rf,
            centers[w],
            plan.n_e,
            plan.r_max,
            &cfg.probe,
        )
        .stage("window")?;
        cfg.decode
            .filters
            .iter()
            .map(|&kind| {
                let filter = match kind {
                    FilterKind::Matched => matched_filter(&pair.x_w.samples),
                    FilterKind::MismatchedIslr => {
                        mismatched_filter_islr(&pair.x_w.samples, cfg.decode.mainlobe_halfwidth, cfg.decode.loading)
                    }
                }
                .stage("decode")?;
                Ok(compress(&pair.y_w, &filter).stage("decode")?.samples)
            })
            .collect()
    });
    let mut by_filter = vec![Vec::with_capacity(centers.len()); cfg.decode.filters.len()];
    for lines in per_window {
        for (slot, line) in by_filter.iter_mut().zip(lines?) {
            slot.push(line);
        }
    }
    Ok(by_filter)
}

/// Length of the pulse-echo reference window: the pulse plus both element
/// tails on each side, rounded up to odd.
pub fn pe_reference_len(cfg: &ScenarioConfig) -> Result<usize> {
    let tail = element_kernel(&cfg.probe)?.len() / 2;
    let pulse = 13 * (cfg.emission.cycles_per_chip as f64 * cfg.probe.fs / cfg.probe.fc).round() as usize;
    Ok((pulse + 4 * tail) | 1)
}

fn padded_slice(rec: &RfRecord, start: i64, len: usize) -> Vec<f64> {
    (0..len as i64)
        .map(|i| {
            let k = start + i;
            if k >= 0 && (k as usize) < rec.len() {
                rec.samples[k as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Pulse-echo lines: one per pulse whose whole listening window was recorded,
/// decoded with the matched filter. Returns `(times, lines)`.
pub fn pe_lines(cfg: &ScenarioConfig, acq: &Acquisition) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let probe = &cfg.probe;
    let tail = (element_kernel(probe)?.len() / 2) as i64;
    let pulse_len = 13 * (cfg.emission.cycles_per_chip as f64 * probe.fs / probe.fc).round() as usize;
    let n_ref = pe_reference_len(cfg)?;
    let n_echo = echo_len(n_ref, cfg.windows.r_max, probe);
    let pri = pulse_repetition_interval(cfg.windows.r_max, probe.c);
    // before t = 0 nothing was emitted, so the leading padding is exact
    let starts: Vec<i64> = pulse_starts(pulse_len, pri, probe.fs, acq.reference.len())
        .into_iter()
        .map(|s| s as i64 - 2 * tail)
        .filter(|&s| s + n_echo as i64 <= acq.rf.len() as i64)
        .collect();
    if starts.is_empty() {
        return Err(Error::PlanOverrun { max_windows: 0 }.at("window"));
    }
    let lines: Vec<Result<Vec<f64>>> = par::map_indexed(starts.len(), |p| {
        let x_w = padded_slice(&acq.reference, starts[p], n_ref);
        let y_w = RfRecord {
            samples: padded_slice(&acq.rf, starts[p], n_echo),
            fs: probe.fs,
            t0: 0.0,
        };
        let filter = matched_filter(&x_w).stage("decode")?;
        Ok(compress(&y_w, &filter).stage("decode")?.samples)
    });
    let times = starts
        .iter()
        .map(|&s| (s as f64 + (n_ref / 2) as f64) / probe.fs)
        .collect();
    Ok((times, lines.into_iter().collect::<Result<_>>()?))
}

pub fn reconstruct(cfg: &ScenarioConfig, sim: &Simulation) -> Result<Reconstruction> {
    let opts = cfg.mmode.options().stage("mmode")?;
    let mut images = BTreeMap::new();
    let mut reference_len = BTreeMap::new();
    if let Some(acq) = &sim.ceui {
        let plan = ceui_plan(cfg, acq)?;
        let times = plan.centers(&cfg.probe);
        let lines = ceui_lines(cfg, acq, &plan)?;
        for (kind, lines) in cfg.decode.filters.iter().zip(lines) {
            let image = assemble_mmode(&lines, &times, cfg.probe.fs, &cfg.probe, &opts).stage("mmode")?;
            images.insert(image_name(*kind).to_string(), image);
            reference_len.insert(image_name(*kind).to_string(), cfg.windows.n_e);
        }
    }
    if let Some(acq) = &sim.pe {
        let (times, lines) = pe_lines(cfg, acq)?;
        let image = assemble_mmode(&lines, &times, cfg.probe.fs, &cfg.probe, &opts).stage("mmode")?;
        images.insert(IMAGE_PE.to_string(), image);
        reference_len.insert(IMAGE_PE.to_string(), pe_reference_len(cfg)?);
    }
    Ok(Reconstruction { images, reference_len })
}

/// Depth span swept by the medium's scatterers over `times`.
fn trajectory_span(medium: &Medium, times: &[f64]) -> Option<(f64, f64)> {
    let mut span: Option<(f64, f64)> = None;
    for s in &medium.scatterers {
        for &t in times {
            let z = s.motion.depth_at(t);
            span = Some(match span {
                None => (z, z),
                Some((lo, hi)) => (lo.min(z), hi.max(z)),
            });
        }
    }
    span
}

/// Depth span swept by the scatterers, widened by `margin` on both sides.
pub fn optimized_range(medium: &Medium, times: &[f64], margin: f64) -> Option<(f64, f64)> {
    let (lo, hi) = trajectory_span(medium, times)?;
    Some(((lo - margin).max(0.0), hi + margin))
}

/// Span of every echo correlated with a `k`-sample reference: the trajectory
/// span widened by the full correlation extent.
pub fn correlation_range(medium: &Medium, times: &[f64], k: usize, probe: &ProbeConfig) -> Option<(f64, f64)> {
    let (lo, hi) = trajectory_span(medium, times)?;
    let extent = (k.saturating_sub(1)) as f64 / probe.fs;
    let deeper = depth_map(depth_to_tof(hi, probe) + extent, probe).ok()?;
    let shallower = depth_map(depth_to_tof(lo, probe) - extent, probe).unwrap_or(0.0);
    Some((shallower, deeper))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn image_metrics(
    cfg: &ScenarioConfig,
    medium: &Medium,
    image: &MModeImage,
    reference_len: usize,
) -> Result<ImageMetrics> {
    let probe = &cfg.probe;
    let mc = &cfg.metrics;
    let per_column: Vec<metrics::LineMetrics> = (0..image.n_columns())
        .filter_map(|w| metrics::line_metrics(image.column(w), &image.depth_grid, mc.mainlobe_halfwidth, probe).ok())
        .collect();
    let frame_rate = if image.n_columns() > 1 {
        (image.n_columns() - 1) as f64 / (image.time_grid[image.n_columns() - 1] - image.time_grid[0])
    } else {
        0.0
    };
    let region_islr = |range: Option<(f64, f64)>| {
        range.and_then(|(lo, hi)| metrics::islr_in_region(image, lo, hi.min(cfg.mmode.z_max), mc.mainlobe_halfwidth).ok())
    };
    let islr_region = region_islr(optimized_range(medium, &image.time_grid, mc.mainlobe_halfwidth));
    let islr_wide = region_islr(correlation_range(medium, &image.time_grid, reference_len, probe));
    let psnr_db = mc
        .depths
        .iter()
        .map(|&z| Ok((z, metrics::psnr_at_depth(image, z, mc.peak_window, mc.noise_band)?)))
        .collect::<Result<Vec<_>>>()?;
    let blinks = mc.blink_depth.map(|z| metrics::count_blinks(image, z, mc.blink_threshold));
    let trace_frequency = match mc.trace_range {
        Some((lo, hi)) if image.n_columns() >= 4 => {
            let trace = metrics::peak_depth_trace(image, lo, hi)?;
            metrics::dominant_frequency(&trace, frame_rate).ok()
        }
        _ => None,
    };
    Ok(ImageMetrics {
        columns: image.n_columns(),
        frame_rate,
        islr_mean: mean(per_column.iter().map(|m| m.islr)),
        islr_region,
        islr_wide,
        pslr_db_mean: mean(per_column.iter().map(|m| m.pslr_db)),
        mlw_mean: mean(per_column.iter().map(|m| m.mlw_halfpower)),
        peak_depth_mean: mean(per_column.iter().map(|m| m.peak_depth)),
        psnr_db,
        blinks,
        trace_frequency,
    })
}

fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = std::fs::read(path)?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"))
}

fn report_entries(all: &BTreeMap<String, ImageMetrics>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (name, m) in all {
        out.push((format!("{name}.columns"), m.columns.to_string()));
        out.push((format!("{name}.frame_rate_hz"), format!("{:.6e}", m.frame_rate)));
        out.push((format!("{name}.islr_mean"), fmt_opt(m.islr_mean)));
        out.push((format!("{name}.islr_region"), fmt_opt(m.islr_region)));
        out.push((format!("{name}.islr_wide"), fmt_opt(m.islr_wide)));
        out.push((format!("{name}.pslr_db_mean"), fmt_opt(m.pslr_db_mean)));
        out.push((format!("{name}.mlw_lambda_mean"), fmt_opt(m.mlw_mean)));
        out.push((format!("{name}.peak_depth_mean_m"), fmt_opt(m.peak_depth_mean)));
        for (z, p) in &m.psnr_db {
            out.push((format!("{name}.psnr_db@{:.1}mm", z * 1e3), format!("{p:.4}")));
        }
        if let Some(b) = &m.blinks {
            out.push((format!("{name}.blink_runs"), b.count.to_string()));
        }
        out.push((format!("{name}.trace_frequency_hz"), fmt_opt(m.trace_frequency)));
    }
    if let (Some(mmf), Some(mf)) = (all.get(IMAGE_CEUI_MMF), all.get(IMAGE_CEUI_MF)) {
        if let (Some(a), Some(b)) = (mmf.mlw_mean, mf.mlw_mean) {
            out.push(("ceui_mmf_over_mf.mlw_ratio".into(), format!("{:.4}", a / b)));
        }
        if let (Some(a), Some(b)) = (mmf.islr_region, mf.islr_region) {
            out.push(("ceui_mmf_over_mf.islr_region_ratio".into(), format!("{:.4}", a / b)));
        }
    }
    if let (Some(mmf), Some(pe)) = (all.get(IMAGE_CEUI_MMF), all.get(IMAGE_PE)) {
        for ((z, a), (_, b)) in mmf.psnr_db.iter().zip(&pe.psnr_db) {
            out.push((format!("ceui_mmf_minus_pe.psnr_db@{:.1}mm", z * 1e3), format!("{:.4}", a - b)));
        }
    }
    out
}

fn metrics_table(all: &BTreeMap<String, ImageMetrics>) -> Vec<Vec<String>> {
    all.iter()
        .map(|(name, m)| {
            vec![
                name.clone(),
                m.columns.to_string(),
                fmt_opt(m.islr_region),
                fmt_opt(m.pslr_db_mean),
                fmt_opt(m.mlw_mean),
                m.blinks.as_ref().map_or("n/a".into(), |b| b.count.to_string()),
                fmt_opt(m.trace_frequency),
            ]
        })
        .collect()
}

/// Writes the RF signals of a simulation into `dir`; returns the file names.
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).stage("io")?;
    let mut names = Vec::new();
    for (prefix, acq) in [("ceui", &sim.ceui), ("pe", &sim.pe)] {
        if let Some(acq) = acq {
            for (suffix, rec) in [("reference", &acq.reference), ("rf", &acq.rf)] {
                let name = format!("{prefix}_{suffix}.sig");
                io::write_signal(rec, &dir.join(&name)).stage("io")?;
                names.push(name);
            }
        }
    }
    Ok(names)
}

/// Writes images, metrics and the manifest for an already reconstructed run.
fn finish_run(
    cfg: &ScenarioConfig,
    medium: &Medium,
    recon: &Reconstruction,
    mut timer: Timer,
    threads: usize,
) -> Result<RunManifest> {
    let dir = &cfg.output;
    let mut all = BTreeMap::new();
    for (name, image) in &recon.images {
        let k = recon.reference_len.get(name).copied().unwrap_or(cfg.windows.n_e);
        all.insert(name.clone(), image_metrics(cfg, medium, image, k).stage("metrics")?);
    }
    timer.lap("metrics");
    std::fs::create_dir_all(dir).stage("io")?;
    for (name, image) in &recon.images {
        io::write_mmode_csv(image, &dir.join(format!("mmode_{name}.csv"))).stage("io")?;
        io::write_mmode_png(image, &dir.join(format!("mmode_{name}.png")), cfg.mmode.db_range).stage("io")?;
    }
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).stage("io")?;
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&all)?).stage("io")?;
    io::write_report(&report_entries(&all), &dir.join("report.txt")).stage("io")?;
    io::write_csv_table(
        &["image", "columns", "islr_region", "pslr_db", "mlw_lambda", "blink_runs", "trace_hz"],
        &metrics_table(&all),
        &dir.join("metrics.csv"),
    )
    .stage("io")?;
    timer.lap("write");
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: Seeds {
            scenario: cfg.seed,
            emission: cfg.emission.seed,
            noise: cfg.noise.seed,
        },
        threads,
        files: inventory(dir)?,
        timings: timer.0,
        metrics: all,
    };
    std::fs::write(dir.join(RunManifest::FILE_NAME), serde_json::to_string_pretty(&manifest)?).stage("io")?;
    Ok(manifest)
}

/// Every regular file under `dir` except the manifest, sorted by path.
fn inventory(dir: &Path) -> Result<Vec<FileEntry>> {
    let mut paths: Vec<PathBuf> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).stage("io")? {
            let p = entry.stage("io")?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != RunManifest::FILE_NAME) {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let (bytes, sha256) = sha256_file(&p).stage("io")?;
            let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            Ok(FileEntry {
                path: rel,
                bytes,
                sha256,
            })
        })
        .collect()
}

pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunManifest> {
    par::with_threads(opts.threads, || {
        let mut timer = Timer::new();
        let medium = cfg.medium().stage("medium")?;
        let sim = simulate(cfg)?;
        timer.lap("simulate");
        if !opts.skip_signals {
            write_simulation(&sim, &cfg.output)?;
        }
        let recon = reconstruct(cfg, &sim)?;
        timer.lap("reconstruct");
        finish_run(cfg, &medium, &recon, timer, par::current_threads())
    })
}

/// Decodes a recorded RF signal with the reference regenerated from `cfg`.
pub fn reconstruct_from_file(cfg: &ScenarioConfig, rf_path: &Path, opts: &RunOptions) -> Result<RunManifest> {
    par::with_threads(opts.threads, || {
        let mut timer = Timer::new();
        let rf = io::read_signal(rf_path).stage("io")?;
        if (rf.fs - cfg.probe.fs).abs() > 1e-9 * cfg.probe.fs {
            return Err(Error::SampleRateMismatch {
                signal: rf.fs,
                probe: cfg.probe.fs,
            }
            .at("io"));
        }
        let mut sim = Simulation::default();
        let (emission, reference) = match cfg.emission.mode {
            EmissionMode::Ceui => ceui_emission(cfg)?,
            EmissionMode::Pe => pe_emission(cfg)?,
        };
        let acq = Some(Acquisition {
            emission,
            reference,
            rf,
        });
        match cfg.emission.mode {
            EmissionMode::Ceui => sim.ceui = acq,
            EmissionMode::Pe => sim.pe = acq,
        }
        let medium = cfg.medium().stage("medium")?;
        let recon = reconstruct(cfg, &sim)?;
        timer.lap("reconstruct");
        finish_run(cfg, &medium, &recon, timer, par::current_threads())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub image: String,
    pub metric: String,
    pub a: f64,
    pub b: f64,
}

impl ComparisonRow {
    pub fn delta(&self) -> f64 {
        self.b - self.a
    }

    pub fn ratio(&self) -> f64 {
        self.b / self.a
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:<24} {:>14} {:>14} {:>14} {:>10}", "image", "metric", "a", "b", "b - a", "b / a")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:<24} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.4}",
                r.image,
                r.metric,
                r.a,
                r.b,
                r.delta(),
                r.ratio()
            )?;
        }
        Ok(())
    }
}

fn metric_values(m: &ImageMetrics) -> Vec<(String, f64)> {
    let mut v = Vec::new();
    let mut push = |name: &str, x: Option<f64>| {
        if let Some(x) = x {
            v.push((name.to_string(), x));
        }
    };
    push("islr_region", m.islr_region);
    push("islr_wide", m.islr_wide);
    push("islr_mean", m.islr_mean);
    push("pslr_db_mean", m.pslr_db_mean);
    push("mlw_mean", m.mlw_mean);
    push("trace_frequency", m.trace_frequency);
    push("blink_runs", m.blinks.as_ref().map(|b| b.count as f64));
    for (z, p) in &m.psnr_db {
        v.push((format!("psnr_db@{:.1}mm", z * 1e3), *p));
    }
    v
}

/// Per-metric comparison of the images both runs produced.
pub fn compare_runs(a: &RunManifest, b: &RunManifest) -> Result<Comparison> {
    let (ga, gb) = (&a.config.mmode, &b.config.mmode);
    if (ga.z_min, ga.z_max, ga.dz) != (gb.z_min, gb.z_max, gb.dz) {
        return Err(Error::GridMismatch(format!(
            "depth grids [{}, {}] / {} and [{}, {}] / {}",
            ga.z_min, ga.z_max, ga.dz, gb.z_min, gb.z_max, gb.dz
        )));
    }
    let mut rows = Vec::new();
    for (name, ma) in &a.metrics {
        let Some(mb) = b.metrics.get(name) else { continue };
        let vb: BTreeMap<String, f64> = metric_values(mb).into_iter().collect();
        for (metric, x) in metric_values(ma) {
            if let Some(&y) = vb.get(&metric) {
                rows.push(ComparisonRow {
                    image: name.clone(),
                    metric,
                    a: x,
                    b: y,
                });
            }
        }
    }
    Ok(Comparison { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerPoint {
    /// Rate of change of the two-way path (m/s), positive when approaching.
    pub velocity: f64,
    pub expected_hz: f64,
    pub estimated_hz: f64,
}

impl DopplerPoint {
    pub fn relative_error(&self) -> f64 {
        if self.expected_hz == 0.0 {
            self.estimated_hz.abs()
        } else {
            ((self.estimated_hz - self.expected_hz) / self.expected_hz).abs()
        }
    }
}

/// `d(R_E + R_R)/dz` for an on-axis point at depth `z`.
pub fn path_gain(probe: &ProbeConfig, z: f64) -> f64 {
    let p = [0.0, 0.0, z];
    z / distance(&probe.p_e, &p) + z / distance(&probe.p_r, &p)
}

/// Tone of one velocity: a scatterer approaching through `depth` at
/// mid-acquisition under continuous sinusoidal insonification at `fc`.
pub fn doppler_point(cfg: &ScenarioConfig, velocity: f64) -> Result<DopplerPoint> {
    let probe = &cfg.probe;
    let d = &cfg.doppler;
    let n = (d.duration * probe.fs).round() as usize;
    let axial = velocity / path_gain(probe, d.depth);
    let scatterer = ScattererTrajectory::new(
        Motion::ConstantVelocity {
            z0: d.depth + axial * d.duration / 2.0,
            v: -axial,
            t_start: 0.0,
            t_stop: f64::INFINITY,
        },
        Echogenicity::Constant { amplitude: 1.0 },
    );
    let kernel = element_kernel(probe)?;
    let w = 2.0 * std::f64::consts::PI * probe.fc / probe.fs;
    let tone = RfRecord {
        samples: (0..n).map(|i| cfg.emission.sigma * (w * i as f64).cos()).collect(),
        fs: probe.fs,
        t0: 0.0,
    };
    let x = apply_kernel(&tone, &kernel, probe).stage("probe")?;
    let medium = cfg.medium.attenuation;
    let clean = synthesize_rf(std::slice::from_ref(&scatterer), &x, probe, &medium, n).stage("rfsim")?;
    let rf = add_band_limited_noise(&clean, cfg.noise.snr_db, probe, &x, cfg.noise.seed).stage("rfsim")?;
    // drop the silence before the first echo and the element transient
    let first = probe.time_of_flight(&[0.0, 0.0, d.depth + axial * d.duration / 2.0]);
    let skip = ((first * probe.fs).ceil() as usize + kernel.len()).min(n);
    let tail = RfRecord {
        samples: rf.samples[skip..].to_vec(),
        fs: probe.fs,
        t0: skip as f64 / probe.fs,
    };
    let estimated_hz = metrics::estimate_doppler_shift(&tail, probe).stage("metrics")?;
    Ok(DopplerPoint {
        velocity,
        expected_hz: probe.fc * velocity / probe.c,
        estimated_hz,
    })
}

pub fn doppler_sweep(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<DopplerPoint>> {
    par::with_threads(opts.threads, || {
        cfg.doppler.velocities.iter().map(|&v| doppler_point(cfg, v)).collect()
    })
}

pub fn write_doppler_sweep(points: &[DopplerPoint], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).stage("io")?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                format!("{}", p.velocity),
                format!("{:.3}", p.expected_hz),
                format!("{:.3}", p.estimated_hz),
                format!("{:.5}", p.relative_error()),
            ]
        })
        .collect();
    let path = dir.join("doppler.csv");
    io::write_csv_table(&["velocity_m_s", "expected_hz", "estimated_hz", "relative_error"], &rows, &path)
        .stage("io")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{parse_config, Overrides};

    fn oscillating() -> ScenarioConfig {
        parse_config("preset = \"oscillating\"", &Overrides::default()).unwrap()
    }

    #[test]
    fn path_gain_limits() {
        let probe = ProbeConfig::default();
        assert!((path_gain(&probe, 1.0) - 2.0).abs() < 1e-3);
        assert!(path_gain(&probe, 1e-6) < 1e-3);
        let z = 0.03;
        let h = 1e-7;
        let numeric = (probe.time_of_flight(&[0.0, 0.0, z + h]) - probe.time_of_flight(&[0.0, 0.0, z - h])) * probe.c / (2.0 * h);
        assert!((path_gain(&probe, z) - numeric).abs() < 1e-6);
    }

    #[test]
    fn ranges_cover_the_trajectory() {
        let cfg = oscillating();
        let medium = cfg.medium().unwrap();
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 1e-6).collect();
        let (lo, hi) = optimized_range(&medium, &times, 1e-4).unwrap();
        assert!((lo - (0.03 - 5e-5 - 1e-4)).abs() < 1e-6 && (hi - (0.03 + 5e-5 + 1e-4)).abs() < 1e-6);
        let (wlo, whi) = correlation_range(&medium, &times, 251, &cfg.probe).unwrap();
        assert!(wlo < lo && whi > hi);
        let empty = Medium {
            scatterers: Vec::new(),
            attenuation: medium.attenuation,
        };
        assert!(optimized_range(&empty, &times, 0.0).is_none());
    }

    #[test]
    fn pulse_echo_reference_is_odd_and_covers_the_pulse() {
        let cfg = oscillating();
        let k = pe_reference_len(&cfg).unwrap();
        assert_eq!(k % 2, 1);
        assert!(k > 78);
    }

    #[test]
    fn doppler_error_is_relative() {
        let p = DopplerPoint {
            velocity: 2.0,
            expected_hz: 100.0,
            estimated_hz: 103.0,
        };
        assert!((p.relative_error() - 0.03).abs() < 1e-12);
    }
}
