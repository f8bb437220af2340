//! Emission waveforms: the continuous random excitation used for continuous
//! insonification, the Barker-13 coded pulse and the pulse-echo train.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::probe::ProbeConfig;
use crate::signal::RfRecord;

/// Canonical 13-chip Barker sequence.
pub const BARKER13: [i8; 13] = [1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1];

#[derive(Debug, Clone)]
pub struct ContinuousExcitation {
    pub samples: RfRecord,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CodedPulse {
    pub samples: RfRecord,
    pub code: Vec<i8>,
    pub cycles_per_chip: u32,
}

impl CodedPulse {
    pub fn samples_per_chip(&self) -> usize {
        self.samples.len() / self.code.len()
    }
}

/// Draws a Rayleigh(sigma) variate by inversion.
pub(crate) fn rayleigh<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    // 1 - u keeps the argument of ln in (0, 1]
    let u: f64 = rng.random();
    sigma * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// `e[n] = A[n] cos(2 pi fc n / fs + theta[n])` with `A ~ Rayleigh(sigma)` and
/// `theta ~ U[0, 2 pi)`, one fresh pair per sample. The marginal of `e` is
/// exactly N(0, sigma^2).
pub fn gen_noise_excitation(
    n_samples: usize,
    config: &ProbeConfig,
    sigma: f64,
    seed: u64,
) -> Result<ContinuousExcitation> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("excitation needs at least one sample".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 2.0 * PI * config.fc / config.fs;
    let samples = (0..n_samples)
        .map(|n| {
            let a = rayleigh(&mut rng, sigma);
            let theta = rng.random_range(0.0..2.0 * PI);
            a * (w * n as f64 + theta).cos()
        })
        .collect();
    Ok(ContinuousExcitation {
        samples: RfRecord {
            samples,
            fs: config.fs,
            t0: 0.0,
        },
        sigma,
        seed,
    })
}

/// Carrier at `fc` whose sign follows [`BARKER13`], `cycles_per_chip` carrier
/// periods per chip.
pub fn gen_barker13_pulse(config: &ProbeConfig, cycles_per_chip: u32) -> Result<CodedPulse> {
    if cycles_per_chip == 0 {
        return Err(Error::InvalidArgument("cycles_per_chip must be at least 1".into()));
    }
    let exact = cycles_per_chip as f64 * config.fs / config.fc;
    let per_chip = exact.round() as usize;
    if per_chip == 0 || (exact - per_chip as f64).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "chip length of {exact} samples is not an integer"
        )));
    }
    let w = 2.0 * PI * config.fc / config.fs;
    let samples = (0..per_chip * BARKER13.len())
        .map(|n| BARKER13[n / per_chip] as f64 * (w * n as f64).cos())
        .collect();
    Ok(CodedPulse {
        samples: RfRecord {
            samples,
            fs: config.fs,
            t0: 0.0,
        },
        code: BARKER13.to_vec(),
        cycles_per_chip,
    })
}

/// Pulse repetition interval `2 r_max / c`.
pub fn pulse_repetition_interval(r_max: f64, c: f64) -> f64 {
    2.0 * r_max / c
}

/// Start sample of every pulse of a train that fits entirely in `n_total`.
pub fn pulse_starts(pulse_len: usize, pri: f64, fs: f64, n_total: usize) -> Vec<usize> {
    (0..)
        .map(|p| (p as f64 * pri * fs).round() as usize)
        .take_while(|&s| s + pulse_len <= n_total)
        .collect()
}

/// Zero signal with one pulse copy every PRI, the first starting at t = 0.
/// Only whole pulses are placed.
pub fn gen_pe_emission_train(
    pulse: &CodedPulse,
    r_max: f64,
    duration: f64,
    config: &ProbeConfig,
) -> Result<RfRecord> {
    let pri = pulse_repetition_interval(r_max, config.c);
    let len = pulse.samples.len();
    if len as f64 / config.fs >= pri {
        return Err(Error::PulseLongerThanPri {
            pulse_s: len as f64 / config.fs,
            pri_s: pri,
        });
    }
    let n_total = (duration * config.fs).round() as usize;
    let mut samples = vec![0.0; n_total];
    for start in pulse_starts(len, pri, config.fs, n_total) {
        samples[start..start + len].copy_from_slice(&pulse.samples.samples);
    }
    Ok(RfRecord {
        samples,
        fs: config.fs,
        t0: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aperiodic_autocorr(code: &[i8]) -> Vec<i32> {
        let n = code.len() as i32;
        (-(n - 1)..n)
            .map(|k| {
                (0..n)
                    .filter(|&i| i + k >= 0 && i + k < n)
                    .map(|i| code[i as usize] as i32 * code[(i + k) as usize] as i32)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn barker_autocorrelation_and_pslr() {
        let ac = aperiodic_autocorr(&BARKER13);
        assert_eq!(ac[12], 13);
        let side = ac
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 12)
            .map(|(_, v)| v.abs())
            .max()
            .unwrap();
        assert_eq!(side, 1);
        let pslr = 20.0 * (side as f64 / 13.0).log10();
        assert!((pslr - -22.28).abs() < 0.01);
    }

    #[test]
    fn barker_pulse_length() {
        let p = gen_barker13_pulse(&ProbeConfig::default(), 1).unwrap();
        assert_eq!(p.samples.len(), 78);
        assert_eq!(p.samples_per_chip(), 6);
        // sixth chip is negative: first sample of chip 5 is -cos(0)
        assert_eq!(p.samples.samples[30], -1.0);
        assert!(gen_barker13_pulse(&ProbeConfig::default(), 0).is_err());
    }

    #[test]
    fn pe_train_counts() {
        let probe = ProbeConfig::default();
        let pulse = gen_barker13_pulse(&probe, 1).unwrap();
        let pri = pulse_repetition_interval(0.04, probe.c);
        assert!((pri - 51.948e-6).abs() < 1e-9);
        assert!((1.0 / pri - 19.25e3).abs() < 5.0);
        let count = |d: f64| {
            let train = gen_pe_emission_train(&pulse, 0.04, d, &probe).unwrap();
            pulse_starts(78, pri, probe.fs, train.len()).len()
        };
        assert_eq!(count(365e-6), 7);
        assert_eq!(count(40e-6), 1);
        let err = gen_pe_emission_train(&pulse, 0.001, 1e-4, &probe);
        assert!(matches!(err, Err(Error::PulseLongerThanPri { .. })));
    }

    #[test]
    fn excitation_is_reproducible_and_degenerate_at_zero_sigma() {
        let probe = ProbeConfig::default();
        let a = gen_noise_excitation(1000, &probe, 1.0, 7).unwrap();
        let b = gen_noise_excitation(1000, &probe, 1.0, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        let z = gen_noise_excitation(100, &probe, 0.0, 7).unwrap();
        assert!(z.samples.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn excitation_decorrelates() {
        let probe = ProbeConfig::default();
        let e = gen_noise_excitation(10_000, &probe, 1.0, 11).unwrap().samples.samples;
        let r0: f64 = e.iter().map(|v| v * v).sum();
        for k in 1..200 {
            let rk: f64 = e.iter().zip(&e[k..]).map(|(a, b)| a * b).sum();
            assert!((rk / r0).abs() < 0.1, "lag {k}: {}", rk / r0);
        }
    }
}
