//! Received-signal synthesis for media that move while they are insonified.
//!
//! For every reception sample the backscatter instant of each scatterer is
//! found by root solving `t_S + R_R(t_S) / c = t_R`, the matching emission
//! instant follows from `t_E = t_S - R_E(t_S) / c`, and the contribution
//! `A(t_S) * x(t_E)` is accumulated with linear interpolation on both the
//! echogenicity and the emission. The sum is then filtered by the receiving
//! element.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::medium::{attenuation_factor, position_at, AttenuationModel, Motion, ScattererTrajectory};
use crate::par;
use crate::probe::{distance, impulse_response, Point3, ProbeConfig};
use crate::signal::{convolve_same, RfRecord};

/// Bisection stops once the bracket is narrower than this fraction of a sample.
pub const ROOT_TOLERANCE_SAMPLES: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofTriplet {
    pub t_e: f64,
    pub t_s: f64,
    pub t_r: f64,
}

impl TofTriplet {
    pub fn time_of_flight(&self) -> f64 {
        self.t_r - self.t_e
    }
}

/// Backscatter time for a reception at `t_r`, or `None` when the echo would
/// predate the start of the acquisition.
pub fn solve_backscatter_time(traj: &ScattererTrajectory, t_r: f64, probe: &ProbeConfig) -> Option<f64> {
    backscatter_time(&traj.motion, &probe.p_r, t_r, probe.c, probe.ts() * ROOT_TOLERANCE_SAMPLES)
}

/// Full emission/backscatter/reception triplet for a reception at `t_r`.
pub fn tof_triplet(traj: &ScattererTrajectory, t_r: f64, probe: &ProbeConfig) -> Option<TofTriplet> {
    let t_s = solve_backscatter_time(traj, t_r, probe)?;
    let p = position_at(traj, t_s);
    Some(TofTriplet {
        t_e: t_s - distance(&probe.p_e, &p) / probe.c,
        t_s,
        t_r,
    })
}

fn backscatter_time(motion: &Motion, receiver: &Point3, t_r: f64, c: f64, tol: f64) -> Option<f64> {
    let range = |t: f64| distance(&[0.0, 0.0, motion.depth_at(t)], receiver);
    if let Motion::Static { z0 } = *motion {
        let t_s = t_r - distance(&[0.0, 0.0, z0], receiver) / c;
        return (t_s >= 0.0).then_some(t_s);
    }
    // g is strictly increasing for subsonic motion
    let g = |t: f64| t + range(t) / c - t_r;
    if g(0.0) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, t_r);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn check_subsonic(scatterers: &[ScattererTrajectory], c: f64) -> Result<()> {
    for (index, s) in scatterers.iter().enumerate() {
        let speed = s.motion.max_speed();
        if !(speed < c) {
            return Err(Error::Supersonic { index, speed, c });
        }
    }
    Ok(())
}

#[inline]
fn sample_or_zero(x: &[f64], i: i64) -> f64 {
    if i >= 0 && (i as usize) < x.len() {
        x[i as usize]
    } else {
        0.0
    }
}

#[inline]
fn interp(x: &[f64], pos: f64) -> f64 {
    let i = pos.floor();
    let a = pos - i;
    let i = i as i64;
    (1.0 - a) * sample_or_zero(x, i) + a * sample_or_zero(x, i + 1)
}

struct Scene<'a> {
    scatterers: &'a [ScattererTrajectory],
    emissions: Vec<&'a [f64]>,
    emitters: &'a [Point3],
    attenuation: &'a AttenuationModel,
    probe: &'a ProbeConfig,
}

impl Scene<'_> {
    /// Raw (unfiltered) echo at reception sample `n_r` for one receiver.
    /// Contributions are summed in ascending scatterer order, then emitter order.
    fn echo_at(&self, receiver: &Point3, n_r: usize) -> f64 {
        let probe = self.probe;
        let ts = probe.ts();
        let samples_per_metre = probe.fs / probe.c;
        let mut acc = 0.0;
        for s in self.scatterers {
            let n_s = match s.motion {
                Motion::Static { z0 } => {
                    let r = distance(&[0.0, 0.0, z0], receiver);
                    let n_s = n_r as f64 - r * samples_per_metre;
                    if n_s < 0.0 {
                        continue;
                    }
                    n_s
                }
                _ => match backscatter_time(
                    &s.motion,
                    receiver,
                    n_r as f64 * ts,
                    probe.c,
                    ts * ROOT_TOLERANCE_SAMPLES,
                ) {
                    Some(t_s) => t_s * probe.fs,
                    None => continue,
                },
            };
            let base = n_s.floor();
            let beta = n_s - base;
            let a0 = s.echogenicity.amplitude_at(base * ts);
            let a1 = s.echogenicity.amplitude_at((base + 1.0) * ts);
            let amp = (1.0 - beta) * a0 + beta * a1;
            if amp == 0.0 {
                continue;
            }
            let p = position_at(s, n_s * ts);
            let r_recv = distance(&p, receiver);
            for (x, emitter) in self.emissions.iter().zip(self.emitters) {
                let r_emit = distance(emitter, &p);
                let n_e = n_s - r_emit * samples_per_metre;
                let gain = attenuation_factor(self.attenuation, probe.fc, r_emit, r_recv);
                acc += amp * interp(x, n_e) * gain;
            }
        }
        acc
    }

    fn receive(&self, receiver: &Point3, kernel: &[f64], n_samples: usize) -> Vec<f64> {
        let mut raw = vec![0.0; n_samples];
        par::fill_indexed(&mut raw, |n| self.echo_at(receiver, n));
        convolve_same(&raw, kernel)
    }
}

/// SISO synthesis. `emission` is the transducer-filtered emitted signal
/// (`x = e * i`), sampled at the probe rate and starting at t = 0.
pub fn synthesize_rf(
    scatterers: &[ScattererTrajectory],
    emission: &RfRecord,
    probe: &ProbeConfig,
    attenuation: &AttenuationModel,
    n_samples: usize,
) -> Result<RfRecord> {
    let mut out = mimo_synthesize_rf(
        scatterers,
        std::slice::from_ref(emission),
        &[probe.p_e],
        &[probe.p_r],
        probe,
        attenuation,
        n_samples,
    )?;
    Ok(out.remove(0))
}

/// Multiple-emitter, multiple-receiver synthesis. Each receiver solves one
/// backscatter time per scatterer (independent of the emitter) and sums the
/// contributions of every emitter.
pub fn mimo_synthesize_rf(
    scatterers: &[ScattererTrajectory],
    emissions: &[RfRecord],
    emitters: &[Point3],
    receivers: &[Point3],
    probe: &ProbeConfig,
    attenuation: &AttenuationModel,
    n_samples: usize,
) -> Result<Vec<RfRecord>> {
    probe.validate()?;
    if emitters.len() != emissions.len() {
        return Err(Error::EmitterCountMismatch {
            emitters: emitters.len(),
            emissions: emissions.len(),
        });
    }
    for e in emissions {
        if (e.fs - probe.fs).abs() > 1e-9 * probe.fs {
            return Err(Error::SampleRateMismatch {
                signal: e.fs,
                probe: probe.fs,
            });
        }
    }
    check_subsonic(scatterers, probe.c)?;
    let kernel = impulse_response(probe)?;
    let scene = Scene {
        scatterers,
        emissions: emissions.iter().map(|e| e.samples.as_slice()).collect(),
        emitters,
        attenuation,
        probe,
    };
    Ok(receivers
        .iter()
        .map(|r| RfRecord {
            samples: scene.receive(r, &kernel.samples, n_samples),
            fs: probe.fs,
            t0: 0.0,
        })
        .collect())
}

/// Adds white Gaussian noise whose power inside the probe band is
/// `P_x * 10^(-snr_db / 10)`, with `P_x` the mean power of `emission`.
/// An infinite `snr_db` leaves the signal untouched.
pub fn add_band_limited_noise(
    signal: &RfRecord,
    snr_db: f64,
    probe: &ProbeConfig,
    emission: &RfRecord,
    seed: u64,
) -> Result<RfRecord> {
    add_noise_for_power(signal, snr_db, probe, emission.mean_power(), seed)
}

/// [`add_band_limited_noise`] with the reference power given directly.
pub fn add_noise_for_power(
    signal: &RfRecord,
    snr_db: f64,
    probe: &ProbeConfig,
    emission_power: f64,
    seed: u64,
) -> Result<RfRecord> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("snr_db is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let variance = noise_variance(snr_db, probe, emission_power);
    let std = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = signal
        .samples
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + std * n
        })
        .collect();
    Ok(RfRecord {
        samples,
        fs: signal.fs,
        t0: signal.t0,
    })
}

/// Total variance of white noise whose in-band share meets the target SNR.
pub fn noise_variance(snr_db: f64, probe: &ProbeConfig, emission_power: f64) -> f64 {
    let in_band = emission_power * 10f64.powf(-snr_db / 10.0);
    let bandwidth = probe.fc * probe.bw_frac;
    in_band * (probe.fs / 2.0) / bandwidth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Echogenicity;

    fn on_axis_receiver_probe() -> ProbeConfig {
        ProbeConfig {
            p_e: [-15e-3, 0.0, 0.0],
            p_r: [0.0, 0.0, 0.0],
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn static_closed_form() {
        let probe = ProbeConfig::default();
        let s = ScattererTrajectory::fixed(30e-3, 1.0);
        let t_r = 50e-6;
        let t_s = solve_backscatter_time(&s, t_r, &probe).unwrap();
        let r = distance(&[0.0, 0.0, 30e-3], &probe.p_r);
        assert_eq!(t_s, t_r - r / probe.c);
        let trip = tof_triplet(&s, t_r, &probe).unwrap();
        assert!((trip.time_of_flight() - 43.56e-6).abs() < 0.01e-6);
        assert!(trip.t_e <= trip.t_s && trip.t_s <= trip.t_r);
        assert!(solve_backscatter_time(&s, 10e-6, &probe).is_none());
    }

    #[test]
    fn linear_motion_matches_hand_solution() {
        // receiver on the axis: R_R(t) = z(t), so t_S + z(t_S)/c = t_R is linear
        let probe = on_axis_receiver_probe();
        let (z0, v, t0) = (30e-3, 2.0, 5e-6);
        let s = ScattererTrajectory::new(
            Motion::ConstantVelocity {
                z0,
                v,
                t_start: t0,
                t_stop: f64::INFINITY,
            },
            Echogenicity::Constant { amplitude: 1.0 },
        );
        for t_r in [40e-6, 100e-6, 900e-6] {
            let analytic = (t_r - (z0 - v * t0) / probe.c) / (1.0 + v / probe.c);
            let got = solve_backscatter_time(&s, t_r, &probe).unwrap();
            assert!((got - analytic).abs() * probe.fs < 1e-3, "{got} {analytic}");
        }
    }

    #[test]
    fn residual_within_tolerance_for_oscillation() {
        let probe = ProbeConfig::default();
        let s = crate::medium::preset("oscillating", 0).unwrap().scatterers.remove(0);
        for i in 0..200 {
            let t_r = 45e-6 + i as f64 * 1.7e-6;
            let t_s = solve_backscatter_time(&s, t_r, &probe).unwrap();
            let g = t_s + distance(&position_at(&s, t_s), &probe.p_r) / probe.c - t_r;
            assert!(g.abs() < probe.ts() * 1e-3);
        }
    }

    #[test]
    fn noise_level_and_disabled_flag() {
        let probe = ProbeConfig::default();
        let sig = RfRecord::zeros(100, probe.fs);
        let same = add_noise_for_power(&sig, f64::INFINITY, &probe, 1.0, 1).unwrap();
        assert_eq!(same, sig);
        let v1 = noise_variance(10.0, &probe, 1.0);
        let v4 = noise_variance(10.0, &probe, 4.0);
        assert!((v4 / v1 - 4.0).abs() < 1e-12);
        assert!((v1 - 0.1 * 15.0 / 4.5).abs() < 1e-12);
    }

    #[test]
    fn supersonic_and_mismatch_errors() {
        let probe = ProbeConfig::default();
        let x = RfRecord::zeros(10, probe.fs);
        let fast = ScattererTrajectory::new(
            Motion::ConstantVelocity {
                z0: 0.03,
                v: -1600.0,
                t_start: 0.0,
                t_stop: 1.0,
            },
            Echogenicity::Constant { amplitude: 1.0 },
        );
        let r = synthesize_rf(&[fast], &x, &probe, &AttenuationModel::off(), 10);
        assert!(matches!(r, Err(Error::Supersonic { index: 0, .. })));
        let r = mimo_synthesize_rf(
            &[],
            std::slice::from_ref(&x),
            &[probe.p_e, probe.p_r],
            &[probe.p_r],
            &probe,
            &AttenuationModel::off(),
            10,
        );
        assert!(matches!(r, Err(Error::EmitterCountMismatch { .. })));
    }
}
