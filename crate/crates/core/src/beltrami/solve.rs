//! Neumann-series solution of the Beltrami equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{ComplexGrid, Convolver};
use crate::error::{Error, Result};

/// A compactly supported Beltrami coefficient on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BeltramiField {
    grid: ComplexGrid,
    k: f64,
}

impl BeltramiField {
    /// Requires `sup |mu| < 1` and `mu = 0` at nodes outside the closed unit disc.
    pub fn new(grid: ComplexGrid) -> Result<Self> {
        let k = grid.sup_norm();
        if !(k < 1.0) {
            return Err(Error::invalid(format!("Beltrami coefficient has sup norm {k} >= 1")));
        }
        for (idx, v) in grid.values().iter().enumerate() {
            if v.norm() > 0.0 && grid.point(idx).norm() > 1.0 {
                return Err(Error::invalid("Beltrami coefficient must vanish outside the unit disc"));
            }
        }
        Ok(Self { grid, k })
    }

    /// Samples `f` on the closed unit disc and extends by zero.
    pub fn from_fn(n: usize, half_width: f64, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        let grid = ComplexGrid::from_fn(n, half_width, |z| {
            if z.norm() <= 1.0 {
                f(z)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })?;
        Self::new(grid)
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    /// `sup |mu|`.
    pub fn bound(&self) -> f64 {
        self.k
    }
}

/// Smooth radial cut-off: 1 on `[0, inner]`, 0 beyond `outer`, `C^infinity` between.
pub fn smooth_cutoff(r: f64, inner: f64, outer: f64) -> f64 {
    let psi = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let s = (outer - r) / (outer - inner);
    let (a, b) = (psi(s), psi(1.0 - s));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// `amplitude * e^{i arg}` on `|z| < 1/2`, decaying smoothly to zero by `|z| = 0.9`.
pub fn smooth_bump(amplitude: f64, arg: f64) -> impl Fn(Complex64) -> Complex64 {
    move |z| Complex64::from_polar(amplitude * smooth_cutoff(z.norm(), 0.5, 0.9), arg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeltramiConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BeltramiConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// Normalised solution `phi = z + C h` with `phi_zbar = h`, `phi_z = 1 + S h`.
#[derive(Clone, Debug)]
pub struct BeltramiSolution {
    pub phi: ComplexGrid,
    pub phi_z: ComplexGrid,
    pub phi_zbar: ComplexGrid,
    pub iterations: usize,
    /// Relative residual `|h - mu (1 + S h)| / |1 + S h|` on the unit disc,
    /// one entry per evaluated iterate.
    pub residual_history: Vec<f64>,
    /// Norms of successive Neumann increments.
    pub increments: Vec<f64>,
    /// Ratios of successive increments.
    pub contraction: Vec<f64>,
    pub residual: f64,
    /// `max |phi(z) - z|` on the outer edge of the box.
    pub far_field: f64,
}

impl BeltramiSolution {
    /// `phi` at an arbitrary point by bilinear interpolation.
    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        self.phi.sample(z)
    }
}

/// Solves `phi_zbar = mu phi_z` with `phi(z) = z + O(1/z)`.
///
/// Iterates `h <- mu S h + mu` until the relative residual on the unit disc
/// drops below `tol`; the Beurling transform `S` and the Cauchy transform
/// are lattice sums evaluated by zero-padded FFT convolution.
pub fn solve_beltrami(mu: &BeltramiField, config: &BeltramiConfig) -> Result<BeltramiSolution> {
    if !(config.tol > 0.0) {
        return Err(Error::invalid("Beltrami tolerance must be positive"));
    }
    let grid = mu.grid();
    let zero = grid.zeros_like();
    if mu.bound() == 0.0 {
        let phi = ComplexGrid::from_fn(grid.size(), grid.half_width(), |z| z)?;
        let one = grid.with_values(vec![Complex64::new(1.0, 0.0); grid.values().len()]);
        return Ok(BeltramiSolution {
            phi,
            phi_z: one,
            phi_zbar: zero,
            iterations: 0,
            residual_history: vec![0.0],
            increments: Vec::new(),
            contraction: Vec::new(),
            residual: 0.0,
            far_field: 0.0,
        });
    }
    let n = grid.size();
    let h_step = grid.spacing();
    let beurling = Convolver::beurling(n, h_step);
    let m = grid.values();

    let mut h = grid.clone();
    let mut residual_history = Vec::new();
    let mut increments: Vec<f64> = Vec::new();
    let mut contraction = Vec::new();
    let mut iterations = 0;
    loop {
        let sh = beurling.apply(&h);
        let phi_z: Vec<Complex64> = sh.values().iter().map(|s| s + 1.0).collect();
        let next: Vec<Complex64> = m.iter().zip(&phi_z).map(|(a, b)| a * b).collect();
        let diff = grid.with_values(h.values().iter().zip(&next).map(|(a, b)| a - b).collect());
        let residual = diff.l2_norm_in_disc(1.0) / grid.with_values(phi_z.clone()).l2_norm_in_disc(1.0);
        residual_history.push(residual);
        if residual <= config.tol {
            let cauchy = Convolver::cauchy(n, h_step);
            let ch = cauchy.apply(&h);
            let phi_values: Vec<Complex64> =
                (0..n * n).map(|k| grid.point(k) + ch.values()[k]).collect();
            let far_field = (0..n * n)
                .filter(|&k| {
                    let (i, j) = (k % n, k / n);
                    i == 0 || j == 0 || i == n - 1 || j == n - 1
                })
                .map(|k| ch.values()[k].norm())
                .fold(0.0, f64::max);
            return Ok(BeltramiSolution {
                phi: grid.with_values(phi_values),
                phi_z: grid.with_values(phi_z),
                phi_zbar: h,
                iterations,
                residual_history,
                increments,
                contraction,
                residual,
                far_field,
            });
        }
        if iterations == config.max_iter {
            return Err(Error::NotConverged {
                solver: "Neumann iteration for the Beltrami equation",
                iterations,
                residual,
                history: residual_history,
            });
        }
        let inc = diff.l2_norm_in_disc(1.0);
        if let Some(&prev) = increments.last() {
            contraction.push(inc / prev);
        }
        increments.push(inc);
        h = grid.with_values(next);
        iterations += 1;
    }
}
