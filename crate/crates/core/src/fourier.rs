//! Fourier multipliers on a uniform periodic grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse transforms and wavenumbers for `n` points on a period of
/// length `length`.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl Spectral {
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n >= 2, "need at least two points");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let base = 2.0 * PI / length;
        let k = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                base * m
            })
            .collect();
        Self { n, length, forward, inverse, k }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Wavenumbers in FFT order; the Nyquist entry is `+pi n / length`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    fn is_nyquist(&self, j: usize) -> bool {
        self.n.is_multiple_of(2) && j == self.n / 2
    }

    pub fn forward(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform including the `1/n` normalisation; returns the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.n as f64;
        spec.iter().map(|z| z.re * scale).collect()
    }

    /// Applies the multiplier `symbol(k, is_nyquist)` to `v`.
    pub fn apply<F>(&self, v: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(f64, bool) -> Complex64,
    {
        assert_eq!(v.len(), self.n);
        let mut spec = self.forward(v);
        for (j, z) in spec.iter_mut().enumerate() {
            *z *= symbol(self.k[j], self.is_nyquist(j));
        }
        self.inverse(spec)
    }

    /// `d/dx`; the Nyquist mode is dropped so the result stays real.
    pub fn derivative(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, |k, nyq| {
            if nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        })
    }

    pub fn second_derivative(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, |k, _| Complex64::new(-k * k, 0.0))
    }

    /// `(1 - d^2/dx^2)^{-1}`, symbol `1 / (1 + k^2)`.
    pub fn helmholtz_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, |k, _| Complex64::new(1.0 / (1.0 + k * k), 0.0))
    }

    /// `1 - d^2/dx^2`.
    pub fn helmholtz(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, |k, _| Complex64::new(1.0 + k * k, 0.0))
    }

    /// Zero-mean antiderivative: the pseudo-inverse of `d/dx`, which discards
    /// the mean (and the Nyquist mode) of `v`.
    pub fn antiderivative(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v, |k, nyq| {
            if nyq || k == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / k)
            }
        })
    }

    /// Two-thirds rule: zeroes every mode with `|j| > n/3`.
    pub fn dealias(&self, v: &[f64]) -> Vec<f64> {
        let cutoff = self.n as f64 / 3.0;
        let base = 2.0 * PI / self.length;
        self.apply(v, |k, _| {
            if (k / base).abs() > cutoff {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, length: f64) -> Vec<f64> {
        (0..n).map(|j| j as f64 * length / n as f64).collect()
    }

    #[test]
    fn helmholtz_inverse_examples() {
        let length = 10.0;
        let s = Spectral::new(64, length);
        let x = grid(64, length);
        let constant = vec![0.4; 64];
        for v in s.helmholtz_inverse(&constant) {
            assert_relative_eq!(v, 0.4, max_relative = 1e-14);
        }
        let k = 2.0 * PI / length;
        let c: Vec<f64> = x.iter().map(|x| (k * x).cos()).collect();
        let out = s.helmholtz_inverse(&c);
        for (o, ci) in out.iter().zip(&c) {
            assert!((o - ci / (1.0 + k * k)).abs() < 1e-14);
        }
        let v: Vec<f64> = x.iter().map(|x| (k * x).sin().exp()).collect();
        let back = s.helmholtz(&s.helmholtz_inverse(&v));
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn helmholtz_inverse_is_periodised_kernel_convolution() {
        // convolution with e^{-|x|}/2 periodised over [0, L): closed form
        // cosh(|x - L/2|) / (2 sinh(L/2)) for a point mass at 0
        let (n, length) = (256, 12.0);
        let s = Spectral::new(n, length);
        let dx = length / n as f64;
        let mut delta = vec![0.0; n];
        delta[0] = 1.0 / dx;
        let out = s.helmholtz_inverse(&delta);
        // spectral truncation of the kernel: compare away from its corner at 0
        for (j, o) in out.iter().enumerate().skip(n / 4).take(n / 2) {
            let x = j as f64 * dx;
            let exact = (x - length / 2.0).cosh() / (2.0 * (length / 2.0).sinh());
            assert!((o - exact).abs() < 5e-3, "{o} vs {exact}");
        }
    }

    #[test]
    fn derivative_and_antiderivative() {
        let length = 2.0 * PI;
        let s = Spectral::new(32, length);
        let x = grid(32, length);
        let v: Vec<f64> = x.iter().map(|x| (3.0 * x).sin() + 2.0).collect();
        let d = s.derivative(&v);
        for (di, xi) in d.iter().zip(&x) {
            assert!((di - 3.0 * (3.0 * xi).cos()).abs() < 1e-12);
        }
        let back = s.antiderivative(&d);
        for (b, xi) in back.iter().zip(&x) {
            assert!((b - (3.0 * xi).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn dealias_keeps_low_modes_only() {
        let length = 2.0 * PI;
        let s = Spectral::new(48, length);
        let x = grid(48, length);
        let low: Vec<f64> = x.iter().map(|x| (5.0 * x).cos()).collect();
        let high: Vec<f64> = x.iter().map(|x| (20.0 * x).cos()).collect();
        let sum: Vec<f64> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
        for (a, b) in s.dealias(&sum).iter().zip(&low) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
