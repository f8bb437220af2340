//! Pulse compression of window pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::probe::ProbeConfig;
use crate::signal::{correlate_full, correlate_valid, dot, RfRecord};

/// Default diagonal loading, relative to the mean diagonal.
pub const DEFAULT_LOADING: f64 = 1e-6;

/// Filters up to this length are designed with a dense Cholesky factorization.
const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Matched,
    MismatchedIslr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingFilter {
    pub taps: Vec<f64>,
    pub kind: FilterKind,
    pub mainlobe_halfwidth: Option<usize>,
    pub loading: Option<f64>,
}

impl DecodingFilter {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    pub values: Vec<f64>,
    pub center_index: usize,
}

/// How the normal equations of the mismatched design are solved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Solver {
    #[default]
    Auto,
    /// Dense Cholesky on the assembled matrix.
    Dense,
    /// Levinson on the Toeplitz part plus a low-rank correction for the
    /// excluded mainlobe lags.
    Structured,
}

/// Half-width (samples) of a lambda/2 wide mainlobe band.
pub fn default_mainlobe_halfwidth(probe: &ProbeConfig) -> usize {
    (probe.wavelength() / (2.0 * probe.c) * probe.fs / 2.0).round() as usize
}

pub fn matched_filter(x_w: &[f64]) -> Result<DecodingFilter> {
    let energy = dot(x_w, x_w);
    if !(energy > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let norm = energy.sqrt();
    Ok(DecodingFilter {
        taps: x_w.iter().map(|v| v / norm).collect(),
        kind: FilterKind::Matched,
        mainlobe_halfwidth: None,
        loading: None,
    })
}

pub fn mismatched_filter_islr(x_w: &[f64], mainlobe_halfwidth: usize, loading: f64) -> Result<DecodingFilter> {
    mismatched_filter_with(x_w, mainlobe_halfwidth, loading, Solver::Auto)
}

/// Filter minimising the sidelobe energy of its correlation with `x_w`
/// relative to the peak, with lags `|l| <= mainlobe_halfwidth` treated as
/// mainlobe. The taps carry the same energy as `x_w`.
pub fn mismatched_filter_with(
    x_w: &[f64],
    mainlobe_halfwidth: usize,
    loading: f64,
    solver: Solver,
) -> Result<DecodingFilter> {
    let k = x_w.len();
    let energy = dot(x_w, x_w);
    if !(energy > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(Error::InvalidArgument(format!("loading must be non-negative, got {loading}")));
    }
    let autocorr: Vec<f64> = (0..k).map(|m| dot(&x_w[..k - m], &x_w[m..])).collect();
    let band: Vec<Vec<f64>> = band_vectors(x_w, mainlobe_halfwidth);
    let trace = k as f64 * autocorr[0] - band.iter().map(|a| dot(a, a)).sum::<f64>();
    let diag = loading * trace / k as f64;

    let use_dense = match solver {
        Solver::Auto => k <= DENSE_LIMIT,
        Solver::Dense => true,
        Solver::Structured => false,
    };
    let u = if use_dense {
        let mut m = DMatrix::from_fn(k, k, |i, j| autocorr[i.abs_diff(j)]);
        for a in &band {
            for j in 0..k {
                if a[j] == 0.0 {
                    continue;
                }
                for i in 0..k {
                    m[(i, j)] -= a[i] * a[j];
                }
            }
        }
        for i in 0..k {
            m[(i, i)] += diag;
        }
        linalg::cholesky_solve(m, x_w)?
    } else {
        structured_solve(&autocorr, diag, &band, x_w)?
    };

    let u_energy = dot(&u, &u);
    if !(u_energy > 0.0 && u_energy.is_finite()) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let sign = if dot(&u, x_w) < 0.0 { -1.0 } else { 1.0 };
    let gain = sign * (energy / u_energy).sqrt();
    Ok(DecodingFilter {
        taps: u.iter().map(|v| v * gain).collect(),
        kind: FilterKind::MismatchedIslr,
        mainlobe_halfwidth: Some(mainlobe_halfwidth),
        loading: Some(loading),
    })
}

/// Shifted copies `a_l[n] = x[n + l]` for the mainlobe lags.
fn band_vectors(x: &[f64], halfwidth: usize) -> Vec<Vec<f64>> {
    let k = x.len() as i64;
    let hw = (halfwidth as i64).min(k - 1);
    (-hw..=hw)
        .map(|l| {
            (0..k)
                .map(|n| {
                    let idx = n + l;
                    if (0..k).contains(&idx) {
                        x[idx as usize]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Solves `(T + d I - U U^T) u = b` through the Woodbury identity.
fn structured_solve(autocorr: &[f64], diag: f64, band: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let mut col = autocorr.to_vec();
    col[0] += diag;
    let mut rhs = Vec::with_capacity(band.len() + 1);
    rhs.push(b.to_vec());
    rhs.extend(band.iter().cloned());
    let mut z = linalg::levinson_solve(&col, &rhs)?;
    let z_b = z.remove(0);
    let m = band.len();
    if m == 0 {
        return Ok(z_b);
    }
    // capacitance I - U^T T^-1 U is SPD whenever the full matrix is
    let cap = DMatrix::from_fn(m, m, |i, j| {
        let v = dot(&band[i], &z[j]);
        if i == j {
            1.0 - v
        } else {
            -v
        }
    });
    let cap = cap.symmetric_part();
    let proj: Vec<f64> = band.iter().map(|a| dot(a, &z_b)).collect();
    let w = linalg::cholesky_solve(cap, &proj)?;
    let mut u = z_b;
    for (zj, wj) in z.iter().zip(&w) {
        for (ui, zi) in u.iter_mut().zip(zj) {
            *ui += wj * zi;
        }
    }
    Ok(u)
}

/// `I_w = y_w * h` over the valid lags; lag 0 is an echo starting at the
/// window start.
pub fn compress(y_w: &RfRecord, filter: &DecodingFilter) -> Result<RfRecord> {
    if filter.is_empty() || filter.len() > y_w.len() {
        return Err(Error::LengthMismatch {
            what: "echo window shorter than filter",
            expected: filter.len(),
            actual: y_w.len(),
        });
    }
    Ok(RfRecord {
        samples: correlate_valid(&y_w.samples, &filter.taps),
        fs: y_w.fs,
        t0: 0.0,
    })
}

/// Full cross-correlation of `x_w` with the filter taps.
pub fn psf(x_w: &[f64], filter: &DecodingFilter) -> Result<Psf> {
    if x_w.len() != filter.len() {
        return Err(Error::LengthMismatch {
            what: "psf reference",
            expected: filter.len(),
            actual: x_w.len(),
        });
    }
    Ok(Psf {
        values: correlate_full(x_w, &filter.taps),
        center_index: filter.len() - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{gen_noise_excitation, BARKER13};

    fn noise(k: usize, seed: u64) -> Vec<f64> {
        gen_noise_excitation(k, &ProbeConfig::default(), 1.0, seed)
            .unwrap()
            .samples
            .samples
    }

    fn impulse(k: usize, at: usize) -> Vec<f64> {
        let mut x = vec![0.0; k];
        x[at] = 1.0;
        x
    }

    fn band_islr(p: &Psf, hw: usize) -> f64 {
        let (mut main, mut side) = (0.0, 0.0);
        for (i, v) in p.values.iter().enumerate() {
            if i.abs_diff(p.center_index) <= hw {
                main += v * v;
            } else {
                side += v * v;
            }
        }
        side / main
    }

    #[test]
    fn matched_normalisation_and_impulse() {
        let x = noise(251, 3);
        let h = matched_filter(&x).unwrap();
        assert!((dot(&h.taps, &h.taps) - 1.0).abs() < 1e-12);
        let p = psf(&x, &h).unwrap();
        assert!((p.values[p.center_index] - dot(&x, &x).sqrt()).abs() < 1e-9);
        let c = p.center_index;
        for t in 1..=c {
            assert!((p.values[c + t] - p.values[c - t]).abs() < 1e-9);
        }
        let d = impulse(9, 4);
        let hd = matched_filter(&d).unwrap();
        assert_eq!(hd.taps, d);
        let pd = psf(&d, &hd).unwrap();
        assert_eq!(pd.values, impulse(17, 8));
        assert!(matches!(matched_filter(&[0.0; 4]), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn barker_chip_psf() {
        let code: Vec<f64> = BARKER13.iter().map(|&c| c as f64).collect();
        let p = psf(&code, &matched_filter(&code).unwrap()).unwrap();
        let scale = 13f64.sqrt();
        for (i, v) in p.values.iter().enumerate() {
            let lag = i.abs_diff(12);
            let expect = match lag {
                0 => 13.0,
                l if l % 2 == 1 => 0.0,
                _ => 1.0,
            };
            assert!((v * scale - expect).abs() < 1e-12, "lag {lag}: {}", v * scale);
        }
    }

    #[test]
    fn mismatched_energy_and_dominance() {
        for seed in 0..4 {
            let x = noise(101, seed);
            for hw in [0, 2] {
                let mm = mismatched_filter_islr(&x, hw, DEFAULT_LOADING).unwrap();
                let e = dot(&x, &x);
                assert!((dot(&mm.taps, &mm.taps) - e).abs() / e < 1e-10);
                assert!(dot(&mm.taps, &x) > 0.0);
                let mf = matched_filter(&x).unwrap();
                let a = band_islr(&psf(&x, &mm).unwrap(), hw);
                let b = band_islr(&psf(&x, &mf).unwrap(), hw);
                assert!(a < b, "{a} {b}");
            }
        }
    }

    #[test]
    fn mismatched_impulse_direction() {
        let d = impulse(21, 10);
        let h = mismatched_filter_islr(&d, 2, 1e-6).unwrap();
        for (i, v) in h.taps.iter().enumerate() {
            let expect = if i == 10 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-9, "{i} {v}");
        }
        assert!(matches!(
            mismatched_filter_with(&d, 2, 0.0, Solver::Dense),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn solvers_agree() {
        let x = noise(151, 9);
        let a = mismatched_filter_with(&x, 2, 1e-6, Solver::Dense).unwrap();
        let b = mismatched_filter_with(&x, 2, 1e-6, Solver::Structured).unwrap();
        let err = a.taps.iter().zip(&b.taps).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = a.taps.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err / scale < 1e-6, "{}", err / scale);
    }

    #[test]
    fn loading_continuity() {
        let x = noise(48, 21);
        let taps = |eps: f64| mismatched_filter_with(&x, 1, eps, Solver::Dense).unwrap().taps;
        let exact = taps(0.0);
        let mut last = f64::INFINITY;
        for eps in [1e-4, 1e-6, 1e-8] {
            let d = taps(eps).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= last);
            last = d;
        }
        assert!(last < 1e-5, "{last}");
    }

    #[test]
    fn compression_lags() {
        let probe = ProbeConfig::default();
        let x = noise(51, 5);
        let h = matched_filter(&x).unwrap();
        let mut y = vec![0.0; 200];
        y[17..17 + 51].copy_from_slice(&x);
        let out = compress(&RfRecord::new(y.clone(), probe.fs, 0.0).unwrap(), &h).unwrap();
        assert_eq!(out.len(), 150);
        let peak = crate::signal::argmax(&out.samples).unwrap();
        assert_eq!(peak, 17);
        assert!((out.samples[17] - dot(&x, &x).sqrt()).abs() < 1e-9);
        let scaled = compress(&RfRecord::new(y.iter().map(|v| 3.0 * v).collect(), probe.fs, 0.0).unwrap(), &h).unwrap();
        for (a, b) in scaled.samples.iter().zip(&out.samples) {
            assert!((a - 3.0 * b).abs() < 1e-12);
        }
        let short = RfRecord::new(vec![0.0; 10], probe.fs, 0.0).unwrap();
        assert!(matches!(compress(&short, &h), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn default_halfwidth() {
        assert_eq!(default_mainlobe_halfwidth(&ProbeConfig::default()), 2);
    }
}
