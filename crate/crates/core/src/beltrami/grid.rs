//! Uniform complex grids on `[-L, L]^2` and convolution with the Cauchy and
//! Beurling kernels.
//!
//! Grid node `(i, j)` sits at `z = (-L + i h) + i (-L + j h)` with `h = 2L/N`
//! and is stored at `j * N + i`. The origin is node `(N/2, N/2)`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    n: usize,
    half_width: f64,
    values: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(n: usize, half_width: f64, values: Vec<Complex64>) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::invalid("grid size must be a power of two, at least 4"));
        }
        if !(half_width >= 2.0) || !half_width.is_finite() {
            return Err(Error::invalid("grid half-width must be finite and at least 2"));
        }
        if values.len() != n * n {
            return Err(Error::invalid("grid value count must be N^2"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        Ok(Self { n, half_width, values })
    }

    pub fn from_fn(n: usize, half_width: f64, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        let h = 2.0 * half_width / n as f64;
        let values = (0..n * n)
            .map(|k| f(Complex64::new(-half_width + (k % n) as f64 * h, -half_width + (k / n) as f64 * h)))
            .collect();
        Self::new(n, half_width, values)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            n: self.n,
            half_width: self.half_width,
            values: vec![Complex64::new(0.0, 0.0); self.n * self.n],
        }
    }

    pub(crate) fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.n * self.n);
        Self {
            n: self.n,
            half_width: self.half_width,
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn point(&self, k: usize) -> Complex64 {
        let h = self.spacing();
        Complex64::new(-self.half_width + (k % self.n) as f64 * h, -self.half_width + (k / self.n) as f64 * h)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[j * self.n + i]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Bilinear interpolation; `None` outside the grid's node hull.
    pub fn sample(&self, z: Complex64) -> Option<Complex64> {
        let h = self.spacing();
        let fx = (z.re + self.half_width) / h;
        let fy = (z.im + self.half_width) / h;
        let top = (self.n - 1) as f64;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= top && fy <= top) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.n - 2);
        let j = (fy.floor() as usize).min(self.n - 2);
        let (s, t) = (fx - i as f64, fy - j as f64);
        Some(
            self.get(i, j) * ((1.0 - s) * (1.0 - t))
                + self.get(i + 1, j) * (s * (1.0 - t))
                + self.get(i, j + 1) * ((1.0 - s) * t)
                + self.get(i + 1, j + 1) * (s * t),
        )
    }

    /// Discrete `L^2` norm over the nodes with `|z| <= radius`.
    pub fn l2_norm_in_disc(&self, radius: f64) -> f64 {
        let h = self.spacing();
        let s: f64 = (0..self.values.len())
            .filter(|&k| self.point(k).norm() <= radius)
            .map(|k| self.values[k].norm_sqr())
            .sum();
        (s * h * h).sqrt()
    }
}

/// One-dimensional derivative weights: fourth-order central in the
/// interior, second-order one-sided next to the edges.
fn derivative(f: impl Fn(usize) -> Complex64, k: usize, n: usize, h: f64) -> Complex64 {
    if k >= 2 && k + 2 < n {
        (f(k - 2) - f(k - 1) * 8.0 + f(k + 1) * 8.0 - f(k + 2)) / (12.0 * h)
    } else if k >= 1 && k + 1 < n {
        (f(k + 1) - f(k - 1)) / (2.0 * h)
    } else if k == 0 {
        (f(0) * -3.0 + f(1) * 4.0 - f(2)) / (2.0 * h)
    } else {
        (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) / (2.0 * h)
    }
}

/// Wirtinger derivatives `(f_z, f_zbar)` by finite differences.
pub fn wirtinger(f: &ComplexGrid) -> (ComplexGrid, ComplexGrid) {
    let n = f.n;
    let h = f.spacing();
    let pairs: Vec<(Complex64, Complex64)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n, k / n);
            let fx = derivative(|a| f.get(a, j), i, n, h);
            let fy = derivative(|b| f.get(i, b), j, n, h);
            let iy = Complex64::i() * fy;
            ((fx - iy) * 0.5, (fx + iy) * 0.5)
        })
        .collect();
    let (fz, fzb): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    (f.with_values(fz), f.with_values(fzb))
}

fn fft_rows(data: &mut [Complex64], m: usize, fft: &Arc<dyn Fft<f64>>) {
    data.par_chunks_mut(m).for_each(|row| fft.process(row));
}

fn transpose(data: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = data[j * m + i];
        }
    });
    out
}

fn fft2(data: Vec<Complex64>, m: usize, fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    let mut data = data;
    fft_rows(&mut data, m, fft);
    let mut t = transpose(&data, m);
    fft_rows(&mut t, m, fft);
    transpose(&t, m)
}

/// Linear (non-periodic) convolution of grid data with a fixed kernel,
/// computed on a zero-padded `2N x 2N` box by FFT.
pub struct Convolver {
    n: usize,
    m: usize,
    kernel_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Convolver {
    /// `kernel(w)` is evaluated at every lattice offset `w != 0`; the value
    /// at `w = 0` is zero and the quadrature weight `h^2` is included.
    fn new(n: usize, h: f64, kernel: impl Fn(Complex64) -> Complex64 + Sync) -> Self {
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let signed = |k: usize| if k < n { k as f64 } else { k as f64 - m as f64 };
        let values: Vec<Complex64> = (0..m * m)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (k % m, k / m);
                if a == 0 && b == 0 || a == n || b == n {
                    Complex64::new(0.0, 0.0)
                } else {
                    kernel(Complex64::new(signed(a) * h, signed(b) * h)) * (h * h)
                }
            })
            .collect();
        let kernel_hat = fft2(values, m, &forward);
        Self {
            n,
            m,
            kernel_hat,
            forward,
            inverse,
        }
    }

    /// `(1/pi) / w`: the Cauchy transform `C f(z) = (1/pi) int f(zeta) / (z - zeta)`.
    pub fn cauchy(n: usize, h: f64) -> Self {
        Self::new(n, h, |w| 1.0 / (PI * w))
    }

    /// `-(1/pi) / w^2`: the principal-value Beurling transform.
    pub fn beurling(n: usize, h: f64) -> Self {
        Self::new(n, h, |w| -1.0 / (PI * w * w))
    }

    pub fn apply(&self, f: &ComplexGrid) -> ComplexGrid {
        assert_eq!(f.size(), self.n, "grid size mismatch");
        let (n, m) = (self.n, self.m);
        let mut padded = vec![Complex64::new(0.0, 0.0); m * m];
        for j in 0..n {
            padded[j * m..j * m + n].copy_from_slice(&f.values[j * n..(j + 1) * n]);
        }
        let mut hat = fft2(padded, m, &self.forward);
        hat.par_iter_mut().zip(&self.kernel_hat).for_each(|(a, b)| *a *= b);
        let out = fft2(hat, m, &self.inverse);
        let scale = 1.0 / (m * m) as f64;
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            values.extend(out[j * m..j * m + n].iter().map(|v| v * scale));
        }
        f.with_values(values)
    }
}
