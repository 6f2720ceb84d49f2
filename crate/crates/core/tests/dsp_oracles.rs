use std::f64::consts::PI;

use deepemo_core::dsp::{fft, hz_to_mel, ifft, mel_to_hz, Complex64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    // Reduce the phase index first so large N keeps full precision.
                    let angle = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                    v * Complex64::new(angle.cos(), angle.sin())
                })
                .sum()
        })
        .collect()
}

fn random_signal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn max_rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn fft_matches_naive_dft_for_all_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for log_n in 1..=10 {
        let n = 1usize << log_n;
        for _ in 0..20 {
            let x = random_signal(n, &mut rng);
            let err = max_rel_err(&fft(&x).unwrap(), &naive_dft(&x));
            assert!(err < 1e-9, "n = {n}: {err:e}");
        }
    }
}

#[test]
fn parseval_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let n = 1usize << (1 + i % 12);
        let x = random_signal(n, &mut rng);
        let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let freq: f64 = fft(&x).unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!((time - freq).abs() / time < 1e-9, "n = {n}");
    }
}

#[test]
fn mel_round_trip_and_reference_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let f = rng.gen_range(0.0..24_000.0);
        let back = mel_to_hz(hz_to_mel(f).unwrap()).unwrap();
        assert!(
            (back - f).abs() <= 1e-12 * f.max(f64::MIN_POSITIVE),
            "{f} -> {back}"
        );
    }
    assert!((hz_to_mel(700.0).unwrap() - 2595.0 * 2f64.log10()).abs() < 1e-9);
}

proptest! {
    #[test]
    fn inverse_recovers_signal(log_n in 0u32..9, seed in any::<u64>()) {
        let x = random_signal(1 << log_n, &mut ChaCha8Rng::seed_from_u64(seed));
        let back = ifft(&fft(&x).unwrap()).unwrap();
        prop_assert!(max_rel_err(&back, &x) < 1e-12);
    }

    #[test]
    fn fft_is_linear(log_n in 1u32..8, seed in any::<u64>(), a in -4.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (random_signal(1 << log_n, &mut rng), random_signal(1 << log_n, &mut rng));
        let combo: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p * a + q).collect();
        let expect: Vec<Complex64> =
            fft(&x).unwrap().iter().zip(fft(&y).unwrap()).map(|(p, q)| p * a + q).collect();
        prop_assert!(max_rel_err(&fft(&combo).unwrap(), &expect) < 1e-12);
    }
}
