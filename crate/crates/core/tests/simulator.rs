mod common;

use ceui::medium::{AttenuationModel, Echogenicity, Motion, ScattererTrajectory};
use ceui::probe::{apply_transducer, ProbeConfig};
use ceui::rfsim::{mimo_synthesize_rf, synthesize_rf};
use ceui::waveform::gen_noise_excitation;
use common::{delayed_sum, max_abs_diff, peak_abs, record, PointTarget};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 3000;

fn emission(seed: u64, probe: &ProbeConfig) -> Vec<f64> {
    let e = gen_noise_excitation(N, probe, 1.0, seed).unwrap();
    apply_transducer(&e.samples, probe).unwrap().samples
}

fn random_targets(rng: &mut ChaCha8Rng, count: usize) -> Vec<PointTarget> {
    (0..count)
        .map(|_| PointTarget {
            depth: rng.random_range(5e-3..35e-3),
            amplitude: rng.random_range(0.1..1.0),
        })
        .collect()
}

fn trajectories(targets: &[PointTarget]) -> Vec<ScattererTrajectory> {
    targets.iter().map(|t| ScattererTrajectory::fixed(t.depth, t.amplitude)).collect()
}

#[test]
fn static_media_match_delayed_sum() {
    let probe = ProbeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for count in 1..=10 {
        let x = emission(count as u64, &probe);
        let targets = random_targets(&mut rng, count);
        for (alpha, atten) in [(0.0, AttenuationModel::off()), (1.5, AttenuationModel::on(1.5))] {
            let got = synthesize_rf(&trajectories(&targets), &record(x.clone(), &probe), &probe, &atten, N).unwrap();
            let want = delayed_sum(&targets, &x, &probe, alpha, N);
            let err = max_abs_diff(&got.samples, &want) / peak_abs(&want);
            assert!(err < 1e-9, "{count} scatterers, alpha {alpha}: {err:e}");
        }
    }
}

#[test]
fn sample_aligned_delay_is_exact() {
    // receiver on the emitter: a target at c * 50 / (2 fs) sits exactly 50 samples away
    let probe = ProbeConfig {
        p_e: [0.0, 0.0, 0.0],
        p_r: [0.0, 0.0, 1e-9],
        ..ProbeConfig::default()
    };
    let mut x = vec![0.0; 200];
    x[10] = 1.0;
    let z = 50.0 * probe.c / (2.0 * probe.fs);
    let got = synthesize_rf(
        &[ScattererTrajectory::fixed(z, 1.0)],
        &record(x.clone(), &probe),
        &probe,
        &AttenuationModel::off(),
        200,
    )
    .unwrap();
    let want = delayed_sum(&[PointTarget { depth: z, amplitude: 1.0 }], &x, &probe, 0.0, 200);
    assert!(max_abs_diff(&got.samples, &want) < 1e-6);
    let peak = got.samples.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 60);
}

#[test]
fn single_emitter_mimo_is_siso() {
    let probe = ProbeConfig::default();
    let x = record(emission(3, &probe), &probe);
    let scatterers = vec![
        ScattererTrajectory::fixed(20e-3, 0.7),
        ScattererTrajectory::new(
            Motion::SinusoidalAxial {
                z0: 30e-3,
                f_osc: 12e3,
                peak_to_peak: 1e-4,
                phase: 0.0,
            },
            Echogenicity::Constant { amplitude: 1.0 },
        ),
    ];
    let siso = synthesize_rf(&scatterers, &x, &probe, &AttenuationModel::on(0.5), N).unwrap();
    let mimo = mimo_synthesize_rf(
        &scatterers,
        std::slice::from_ref(&x),
        &[probe.p_e],
        &[probe.p_r],
        &probe,
        &AttenuationModel::on(0.5),
        N,
    )
    .unwrap();
    assert_eq!(mimo.len(), 1);
    assert_eq!(mimo[0].samples, siso.samples);
}

#[test]
fn disjoint_emitters_superpose() {
    let probe = ProbeConfig::default();
    let full = emission(11, &probe);
    let mut first = full.clone();
    let mut second = full.clone();
    first[N / 2..].iter_mut().for_each(|v| *v = 0.0);
    second[..N / 2].iter_mut().for_each(|v| *v = 0.0);
    let other = [-5e-3, 0.0, 0.0];
    let scatterers = vec![ScattererTrajectory::fixed(25e-3, 1.0), ScattererTrajectory::fixed(31e-3, 0.4)];
    let atten = AttenuationModel::off();
    let both = mimo_synthesize_rf(
        &scatterers,
        &[record(first.clone(), &probe), record(second.clone(), &probe)],
        &[probe.p_e, other],
        &[probe.p_r],
        &probe,
        &atten,
        N,
    )
    .unwrap();
    let a = synthesize_rf(&scatterers, &record(first, &probe), &probe, &atten, N).unwrap();
    let moved = ProbeConfig { p_e: other, ..probe };
    let b = synthesize_rf(&scatterers, &record(second, &probe), &moved, &atten, N).unwrap();
    let sum: Vec<f64> = a.samples.iter().zip(&b.samples).map(|(p, q)| p + q).collect();
    let err = max_abs_diff(&both[0].samples, &sum) / peak_abs(&sum);
    assert!(err < 1e-12, "{err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_in_emission(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let probe = ProbeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets = random_targets(&mut rng, 3);
        let s = trajectories(&targets);
        let x1 = emission(seed, &probe);
        let x2 = emission(seed + 1, &probe);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let atten = AttenuationModel::off();
        let y1 = synthesize_rf(&s, &record(x1, &probe), &probe, &atten, N).unwrap();
        let y2 = synthesize_rf(&s, &record(x2, &probe), &probe, &atten, N).unwrap();
        let y = synthesize_rf(&s, &record(mix, &probe), &probe, &atten, N).unwrap();
        let want: Vec<f64> = y1.samples.iter().zip(&y2.samples).map(|(p, q)| a * p + b * q).collect();
        let scale = peak_abs(&y1.samples).max(peak_abs(&y2.samples)) * (a.abs() + b.abs()).max(1.0);
        prop_assert!(max_abs_diff(&y.samples, &want) <= 1e-12 * scale);
    }

    #[test]
    fn amplitude_scales_output(seed in 0u64..1000, gain in 0.01f64..10.0) {
        let probe = ProbeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets = random_targets(&mut rng, 4);
        let scaled: Vec<PointTarget> = targets
            .iter()
            .map(|t| PointTarget { amplitude: t.amplitude * gain, ..*t })
            .collect();
        let x = record(emission(seed, &probe), &probe);
        let atten = AttenuationModel::on(0.7);
        let y = synthesize_rf(&trajectories(&targets), &x, &probe, &atten, N).unwrap();
        let z = synthesize_rf(&trajectories(&scaled), &x, &probe, &atten, N).unwrap();
        let want: Vec<f64> = y.samples.iter().map(|v| v * gain).collect();
        prop_assert!(max_abs_diff(&z.samples, &want) <= 1e-12 * peak_abs(&want));
    }
}
