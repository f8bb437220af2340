//! Reference implementations written independently of the library, used to
//! check the simulator and the mismatched filter.
#![allow(dead_code)]

use ceui::probe::{impulse_response, ProbeConfig};
use ceui::signal::RfRecord;

#[derive(Debug, Clone, Copy)]
pub struct PointTarget {
    pub depth: f64,
    pub amplitude: f64,
}

fn at(x: &[f64], k: i64) -> f64 {
    if k >= 0 && (k as usize) < x.len() {
        x[k as usize]
    } else {
        0.0
    }
}

fn linear_sample(x: &[f64], pos: f64) -> f64 {
    let i = pos.floor();
    let frac = pos - i;
    let i = i as i64;
    at(x, i) * (1.0 - frac) + at(x, i + 1) * frac
}

fn path_length(probe: &ProbeConfig, depth: f64) -> (f64, f64) {
    let leg = |p: &[f64; 3]| (p[0] * p[0] + p[1] * p[1] + (depth - p[2]).powi(2)).sqrt();
    (leg(&probe.p_e), leg(&probe.p_r))
}

/// Brute-force echo of static on-axis targets: every target contributes the
/// emission delayed by its round trip and scaled by its amplitude and by
/// `10^(-alpha * f[MHz] * path[cm] / 20)`; the sum is then convolved with the
/// element response sample by sample.
pub fn delayed_sum(targets: &[PointTarget], emission: &[f64], probe: &ProbeConfig, alpha: f64, n: usize) -> Vec<f64> {
    let mut raw = vec![0.0; n];
    for t in targets {
        let (r_e, r_r) = path_length(probe, t.depth);
        let gain = 10f64.powf(-alpha * (probe.fc / 1e6) * ((r_e + r_r) * 100.0) / 20.0);
        let delay = (r_e + r_r) / probe.c * probe.fs;
        for (i, out) in raw.iter_mut().enumerate() {
            *out += t.amplitude * gain * linear_sample(emission, i as f64 - delay);
        }
    }
    let kernel = impulse_response(probe).unwrap().samples;
    let half = (kernel.len() / 2) as i64;
    (0..n as i64)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * at(&raw, i + half - j as i64))
                .sum()
        })
        .collect()
}

pub fn peak_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn record(samples: Vec<f64>, probe: &ProbeConfig) -> RfRecord {
    RfRecord::new(samples, probe.fs, 0.0).unwrap()
}

/// `c[l + K - 1] = sum_n h[n] x[n + l]` for every lag `l` in `-(K-1)..K`.
pub fn correlation(x: &[f64], h: &[f64]) -> Vec<f64> {
    let k = x.len() as i64;
    (-(k - 1)..k)
        .map(|l| (0..k).map(|n| h[n as usize] * at(x, n + l)).sum())
        .collect()
}

/// Sidelobe energy outside `|l| <= hw` over the squared zero-lag peak.
pub fn peak_islr(x: &[f64], h: &[f64], hw: usize) -> f64 {
    let c = correlation(x, h);
    let mid = x.len() - 1;
    let side: f64 = c
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(mid) > hw)
        .map(|(_, v)| v * v)
        .sum();
    side / (c[mid] * c[mid])
}

/// Sidelobe energy over the energy inside the mainlobe band `|l| <= hw`.
pub fn band_islr(x: &[f64], h: &[f64], hw: usize) -> f64 {
    let c = correlation(x, h);
    let mid = x.len() - 1;
    let (mut main, mut side) = (0.0, 0.0);
    for (i, v) in c.iter().enumerate() {
        if i.abs_diff(mid) > hw {
            side += v * v;
        } else {
            main += v * v;
        }
    }
    side / main
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn onto_sphere(h: &mut [f64], radius2: f64) {
    let s = (radius2 / norm2(h)).sqrt();
    h.iter_mut().for_each(|v| *v *= s);
}

fn peak_islr_gradient(x: &[f64], h: &[f64], hw: usize) -> (f64, Vec<f64>) {
    let k = x.len();
    let c = correlation(x, h);
    let mid = k - 1;
    let p = c[mid];
    let side: f64 = (0..c.len()).filter(|i| i.abs_diff(mid) > hw).map(|i| c[i] * c[i]).sum();
    let j = side / (p * p);
    let grad = (0..k)
        .map(|n| {
            let mut d_side = 0.0;
            for (i, ci) in c.iter().enumerate() {
                if i.abs_diff(mid) > hw {
                    let l = i as i64 - mid as i64;
                    d_side += 2.0 * ci * at(x, n as i64 + l);
                }
            }
            let d_peak = 2.0 * p * x[n];
            (d_side * p * p - side * d_peak) / (p * p * p * p)
        })
        .collect();
    (j, grad)
}

/// Projected gradient descent of [`peak_islr`] on the sphere
/// `|h|^2 = |x|^2`, started from the matched filter, with Armijo
/// backtracking and an adaptive step.
pub fn numeric_min_islr(x: &[f64], hw: usize, iterations: usize) -> Vec<f64> {
    let radius2 = norm2(x);
    let mut h = x.to_vec();
    let mut step = 1e-3 * radius2.sqrt();
    let (mut j, mut g) = peak_islr_gradient(x, &h, hw);
    for _ in 0..iterations {
        // tangent component only
        let radial = h.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / radius2;
        let tangent: Vec<f64> = g.iter().zip(&h).map(|(gi, hi)| gi - radial * hi).collect();
        let slope = norm2(&tangent);
        if slope.sqrt() < 1e-15 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = h.iter().zip(&tangent).map(|(a, t)| a - step * t).collect();
            onto_sphere(&mut trial, radius2);
            let (jt, gt) = peak_islr_gradient(x, &trial, hw);
            if jt <= j - 1e-4 * step * slope {
                h = trial;
                j = jt;
                g = gt;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    h
}
