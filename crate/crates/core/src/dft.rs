//! Length-`m` discrete Fourier transform helpers.
//!
//! Dense transforms go through `rustfft`. Sparse evaluation (few nonzero
//! input positions) uses a twiddle table indexed by `(i * p) mod m`, which
//! is exact in the index arithmetic and cheaper than a full FFT when the
//! support is small.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Dft {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `twiddle[j] = exp(-2πi j / m)`
    twiddle: Arc<[Complex64]>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("m", &self.m).finish()
    }
}

impl Dft {
    pub fn new(m: usize) -> Self {
        assert!(m > 0, "DFT length must be positive");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let twiddle = (0..m)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64))
            .collect();
        Dft {
            m,
            forward,
            inverse,
            twiddle,
        }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn twiddle(&self, i: usize, p: usize) -> Complex64 {
        self.twiddle[(i * p) % self.m]
    }

    /// Full spectrum of the zero-padded real vector `x` (`x.len() <= m`).
    pub fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.m);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.m];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// `|DFT_m(x)|²` of the zero-padded vector.
    pub fn power_spectrum(&self, x: &[f64]) -> Vec<f64> {
        self.spectrum(x).into_iter().map(|z| z.norm_sqr()).collect()
    }

    /// Spectrum of a vector that is zero outside `positions` (0-based).
    pub fn sparse_spectrum_into(&self, positions: &[usize], values: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(positions.len(), values.len());
        debug_assert_eq!(out.len(), self.m);
        out.fill(Complex64::new(0.0, 0.0));
        for (&p, &v) in positions.iter().zip(values) {
            if v == 0.0 {
                continue;
            }
            let step = p % self.m;
            let mut idx = 0usize;
            for o in out.iter_mut() {
                *o += self.twiddle[idx] * v;
                idx += step;
                if idx >= self.m {
                    idx -= self.m;
                }
            }
        }
    }

    /// Real part of the (normalized) inverse DFT. Applied to squared
    /// magnitudes this is the circular autocorrelation of the signal.
    pub fn inverse_real(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.m);
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.m as f64;
        buf.into_iter().map(|z| z.re * scale).collect()
    }
}
