//! Fourier-multiplier operators on the periodic grid: the heat semigroup
//! `P_t` (multiplier `exp(−(2πk/Lx)² t)`) and the spectral derivative.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::SpaceGrid;

#[derive(Clone)]
pub struct Spectral {
    space: SpaceGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("space", &self.space).finish()
    }
}

impl Spectral {
    pub fn new(space: SpaceGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = space.n_x();
        Self { space, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    /// Signed frequency index of FFT bin `j`.
    fn freq(&self, j: usize) -> i64 {
        let n = self.space.n_x() as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    fn apply_multiplier(&self, f: &[f64], mult: impl Fn(i64) -> Complex64) -> Vec<f64> {
        let n = f.len();
        let mut buf: Vec<Complex64> = f.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (j, c) in buf.iter_mut().enumerate() {
            *c *= mult(self.freq(j));
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// `P_t f`.
    pub fn heat(&self, f: &[f64], t: f64) -> Vec<f64> {
        let k0 = 2.0 * std::f64::consts::PI / self.space.length();
        self.apply_multiplier(f, |k| {
            let w = k0 * k as f64;
            Complex64::new((-w * w * t).exp(), 0.0)
        })
    }

    /// `∫_0^t P_s f ds`.
    pub fn heat_integral(&self, f: &[f64], t: f64) -> Vec<f64> {
        let k0 = 2.0 * std::f64::consts::PI / self.space.length();
        self.apply_multiplier(f, |k| {
            let a = (k0 * k as f64).powi(2);
            let m = if a * t < 1e-8 { t * (1.0 - 0.5 * a * t) } else { -(-a * t).exp_m1() / a };
            Complex64::new(m, 0.0)
        })
    }

    /// Spectral first derivative; the Nyquist bin is dropped.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let n = self.space.n_x() as i64;
        let k0 = 2.0 * std::f64::consts::PI / self.space.length();
        self.apply_multiplier(f, |k| {
            if n % 2 == 0 && k == n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k0 * k as f64)
            }
        })
    }
}
