use alloc::vec::Vec;
use core::f64::consts::PI;

/// Periodic Hann window: `w[k] = 0.5 - 0.5 cos(2πk/n)`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * libm::cos(2.0 * PI * k as f64 / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_points() {
        let w = hann_window(4);
        let expected = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn starts_at_zero() {
        for n in 2..64 {
            assert_eq!(hann_window(n)[0], 0.0);
        }
        assert_eq!(hann_window(1), [0.0]);
    }

    #[test]
    fn eighth_point() {
        // 0.5 - 0.5 cos(pi/2)
        assert!((hann_window(8)[2] - 0.5).abs() < 1e-15);
    }
}
