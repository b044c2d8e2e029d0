//! Discrete Fourier transforms on `Complex64` buffers.
//!
//! Forward uses `exp(-2 pi i jk/N)`; inverse uses `exp(+2 pi i jk/N)` and
//! divides by `N`. Power-of-two lengths use an iterative radix-2 kernel,
//! other lengths fall back to the direct sum.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    // exp(-2 pi i k / n), k < n
    twiddles: Vec<Complex64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "transform length must be positive");
        let twiddles = (0..n).map(|k| cis(-2.0 * PI * k as f64 / n as f64)).collect();
        Self { n, twiddles }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length does not match the plan");
        if self.n.is_power_of_two() {
            self.radix2(buf, inverse);
        } else {
            let out = self.direct(buf, inverse);
            buf.copy_from_slice(&out);
        }
    }

    fn twiddle(&self, k: usize, inverse: bool) -> Complex64 {
        let w = self.twiddles[k % self.n];
        if inverse {
            w.conj()
        } else {
            w
        }
    }

    fn direct(&self, buf: &[Complex64], inverse: bool) -> Vec<Complex64> {
        (0..self.n)
            .map(|k| {
                buf.iter()
                    .enumerate()
                    .map(|(j, v)| v * self.twiddle(j * k % self.n, inverse))
                    .sum()
            })
            .collect()
    }

    fn radix2(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let bits = n.trailing_zeros();
        if bits == 0 {
            return;
        }
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let w = self.twiddle(k * stride, inverse);
                    let a = buf[start + k];
                    let b = buf[start + k + len / 2] * w;
                    buf[start + k] = a + b;
                    buf[start + k + len / 2] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// `exp(i theta)`.
pub fn cis(theta: f64) -> Complex64 {
    Complex64::new(libm::cos(theta), libm::sin(theta))
}

/// Signed integer wavenumber of FFT bin `k` for length `n`.
pub fn wavenumber(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Spectral derivative of samples on a uniform grid of spacing `step`,
/// zeroing modes with `|k| > n/3` (two-thirds rule) and the Nyquist bin.
pub fn spectral_derivative(plan: &FftPlan, samples: &mut [Complex64], step: f64) {
    let n = plan.len();
    plan.forward(samples);
    let length = n as f64 * step;
    for (k, v) in samples.iter_mut().enumerate() {
        let m = wavenumber(k, n);
        if 3 * m.unsigned_abs() as usize > n || (n % 2 == 0 && k == n / 2) {
            *v = Complex64::new(0.0, 0.0);
        } else {
            *v *= Complex64::new(0.0, 2.0 * PI * m as f64 / length);
        }
    }
    plan.inverse(samples);
}
