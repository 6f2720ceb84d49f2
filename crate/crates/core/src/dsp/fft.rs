use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use super::DspError;

/// Precomputed twiddles and bit-reversal table for one transform length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex64>,
    rev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self, DspError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(DspError::NonPowerOfTwoLength(n));
        }
        // Each twiddle is evaluated directly rather than by recurrence so the
        // error stays at a few ulps regardless of n.
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(libm::cos(theta), libm::sin(theta))
            })
            .collect();
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Ok(Self { n, twiddles, rev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward DFT, in place.
    pub fn process(&self, buf: &mut [Complex64]) -> Result<(), DspError> {
        if buf.len() != self.n {
            return Err(DspError::NonPowerOfTwoLength(buf.len()));
        }
        for i in 0..self.n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
        Ok(())
    }
}

/// In-place iterative radix-2 forward FFT.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<(), DspError> {
    FftPlan::new(buf.len())?.process(buf)
}

/// Forward FFT: `X[k] = Σ x[n] e^{-2πikn/N}`, no normalization.
pub fn fft(buf: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    let mut out = buf.to_vec();
    fft_in_place(&mut out)?;
    Ok(out)
}

/// Inverse transform via conjugate, forward FFT, conjugate, scale by 1/N.
pub fn ifft(buf: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    let mut out: Vec<Complex64> = buf.iter().map(|c| c.conj()).collect();
    fft_in_place(&mut out)?;
    let scale = 1.0 / buf.len() as f64;
    for c in &mut out {
        *c = c.conj() * scale;
    }
    Ok(out)
}
