//! Small-matrix algebra of the graph area integrand.
//!
//! For a gradient `Z` in `R^{n x 2}` with columns `Z1`, `Z2` the area factor
//! of the graph map is `A(Z) = sqrt(1 + |Z|^2 + sum_{a<b} det(Z^{ab})^2)`,
//! where `Z^{ab}` is the 2x2 block made of rows `a` and `b`. Its derivative
//! `DA(Z)` and the inner stress `B(Z) = A(Z) id - Z^T DA(Z)` drive the outer
//! and inner variation equations respectively.
//!
//! The hot paths work on column slices (`kernel`) so that mesh assembly can
//! evaluate the integrand without allocating; the public functions wrap
//! them for [`GradientMatrix`].

mod identities;
pub(crate) mod kernel;
mod svd;

pub use identities::{boundedness_scan, verify_identities, BoundednessConfig, BoundednessReport, DecadeStats};
pub use svd::{svd2, Svd2};

use nalgebra::{DMatrix, Matrix2, MatrixXx2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;

/// The symplectic rotation `J = [[0, -1], [1, 0]]`.
pub fn symplectic() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

/// An `n x 2` real matrix with finite entries, `n >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix {
    m: MatrixXx2<f64>,
}

impl GradientMatrix {
    pub fn new(m: MatrixXx2<f64>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::invalid("gradient matrix needs at least one row"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gradient matrix has non-finite entries"));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[[f64; 2]]) -> Result<Self> {
        Self::new(MatrixXx2::from_fn(rows.len(), |i, j| rows[i][j]))
    }

    pub fn from_columns(c1: &[f64], c2: &[f64]) -> Result<Self> {
        if c1.len() != c2.len() {
            return Err(Error::invalid("columns have different lengths"));
        }
        Self::new(MatrixXx2::from_fn(c1.len(), |i, j| if j == 0 { c1[i] } else { c2[i] }))
    }

    pub fn from_mat2(m: &Mat2) -> Result<Self> {
        Self::new(MatrixXx2::from_fn(2, |i, j| m[(i, j)]))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "codimension must be positive");
        Self {
            m: MatrixXx2::zeros(n),
        }
    }

    /// The outer product `a (x) b`.
    pub fn outer(a: &[f64], b: [f64; 2]) -> Result<Self> {
        Self::new(MatrixXx2::from_fn(a.len(), |i, j| a[i] * b[j]))
    }

    pub fn codim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &MatrixXx2<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> MatrixXx2<f64> {
        self.m
    }

    /// Both columns as contiguous slices.
    pub fn columns(&self) -> (&[f64], &[f64]) {
        self.m.as_slice().split_at(self.codim())
    }

    pub fn norm_squared(&self) -> f64 {
        self.m.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    /// `det(Z^{ab})`.
    pub fn minor(&self, a: usize, b: usize) -> f64 {
        self.m[(a, 0)] * self.m[(b, 1)] - self.m[(a, 1)] * self.m[(b, 0)]
    }

    /// Largest `|det(Z^{ab})|` over `a < b`; zero when `n = 1`.
    pub fn max_abs_minor(&self) -> f64 {
        let (z1, z2) = self.columns();
        kernel::max_abs_minor(z1, z2)
    }

    /// Top 2x2 block. Panics when `n < 2`.
    pub fn top_block(&self) -> Mat2 {
        Mat2::new(self.m[(0, 0)], self.m[(0, 1)], self.m[(1, 0)], self.m[(1, 1)])
    }

    /// Rows `2..n` as an `(n-2) x 2` matrix.
    pub fn bottom_block(&self) -> DMatrix<f64> {
        let n = self.codim();
        DMatrix::from_fn(n.saturating_sub(2), 2, |i, j| self.m[(i + 2, j)])
    }

    /// `N Z M`; dimensions are checked by nalgebra.
    pub fn transform(&self, left: &DMatrix<f64>, right: &Mat2) -> Result<Self> {
        let z = DMatrix::from_column_slice(self.codim(), 2, self.m.as_slice());
        let p = left * z * right;
        Self::new(MatrixXx2::from_fn(p.nrows(), |i, j| p[(i, j)]))
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(&self.m * s)
    }

    pub fn add_scaled(&self, other: &GradientMatrix, s: f64) -> Result<Self> {
        if other.codim() != self.codim() {
            return Err(Error::invalid("codimension mismatch"));
        }
        Self::new(&self.m + &other.m * s)
    }

    pub fn dot(&self, other: &GradientMatrix) -> f64 {
        self.m.dot(&other.m)
    }
}

/// Block pair `(X | Y)` with `X` in `R^{2x2}` stacked over `Y` in `R^{(n-2)x2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPair {
    pub x: Mat2,
    pub y: DMatrix<f64>,
}

impl BlockPair {
    pub fn new(x: Mat2, y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() > 0 && y.ncols() != 2 {
            return Err(Error::invalid(format!(
                "bottom block must have two columns, got {}",
                y.ncols()
            )));
        }
        let y = if y.nrows() == 0 { DMatrix::zeros(0, 2) } else { y };
        Ok(Self { x, y })
    }

    pub fn codim(&self) -> usize {
        2 + self.y.nrows()
    }

    pub fn stacked(&self) -> Result<GradientMatrix> {
        let n = self.codim();
        GradientMatrix::new(MatrixXx2::from_fn(n, |i, j| {
            if i < 2 {
                self.x[(i, j)]
            } else {
                self.y[(i - 2, j)]
            }
        }))
    }
}

/// `g = id + Z^T Z`, with `E = g11`, `F = g12`, `G = g22`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducedMetric {
    pub g: Mat2,
}

impl InducedMetric {
    pub fn e(&self) -> f64 {
        self.g[(0, 0)]
    }

    pub fn f(&self) -> f64 {
        self.g[(0, 1)]
    }

    pub fn g22(&self) -> f64 {
        self.g[(1, 1)]
    }

    pub fn det(&self) -> f64 {
        self.g.determinant()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        sym_eigenvalues(&self.g)
    }
}

/// The inner stress `B(Z)`: symmetric, positive diagonal, unit determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerStress(Mat2);

impl InnerStress {
    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat2 {
        self.0
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// Checks symmetry, positive diagonal and `det = 1` against `tol`.
    pub fn satisfies_invariants(&self, tol: f64) -> bool {
        let b = &self.0;
        (b[(0, 1)] - b[(1, 0)]).abs() <= tol
            && b[(0, 0)] > 0.0
            && b[(1, 1)] > 0.0
            && (self.det() - 1.0).abs() <= tol
    }
}

/// Area factor `A(Z)`, always `>= 1`.
pub fn area(z: &GradientMatrix) -> f64 {
    let (z1, z2) = z.columns();
    kernel::area(z1, z2)
}

/// `DA(Z) = (Z + sum_{a<b} det(Z^{ab}) C_ab(Z)) / A(Z)`.
pub fn area_gradient(z: &GradientMatrix) -> GradientMatrix {
    let n = z.codim();
    let (z1, z2) = z.columns();
    let mut out = vec![0.0; 2 * n];
    let (o1, o2) = out.split_at_mut(n);
    kernel::area_gradient(z1, z2, o1, o2);
    GradientMatrix {
        m: MatrixXx2::from_column_slice(&out),
    }
}

pub fn inner_stress(z: &GradientMatrix) -> InnerStress {
    let (z1, z2) = z.columns();
    InnerStress(kernel::inner_stress(z1, z2))
}

pub fn inner_stress_blocks(p: &BlockPair) -> InnerStress {
    let n = p.codim();
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);
    for i in 0..2 {
        z1.push(p.x[(i, 0)]);
        z2.push(p.x[(i, 1)]);
    }
    for i in 0..p.y.nrows() {
        z1.push(p.y[(i, 0)]);
        z2.push(p.y[(i, 1)]);
    }
    InnerStress(kernel::inner_stress(&z1, &z2))
}

/// `cof(M)` with `M cof(M) = det(M) id`.
pub fn cof2(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

pub fn metric(z: &GradientMatrix) -> InducedMetric {
    let (z1, z2) = z.columns();
    InducedMetric {
        g: kernel::metric(z1, z2),
    }
}

/// `|M|^2 / det(M)` when `det(M) > 0`, `+inf` otherwise. Minimum 2, attained
/// exactly on conformal matrices.
pub fn qc_distortion(m: &Mat2) -> f64 {
    let d = m.determinant();
    if d > 0.0 {
        m.norm_squared() / d
    } else {
        f64::INFINITY
    }
}

/// Default first step of [`area_hessian_fd`]; the second is half of it.
pub const HESSIAN_STEP: f64 = 1e-3;
/// Default step for central-difference gradients.
pub const GRADIENT_STEP: f64 = 1e-5;

/// Second directional derivative `D^2 A(Z)[W, W]` by central differences at
/// steps `h` and `h/2`, combined by Richardson extrapolation.
pub fn area_hessian_fd(z: &GradientMatrix, w: &GradientMatrix, h: f64) -> Result<f64> {
    if w.codim() != z.codim() {
        return Err(Error::invalid("direction has a different codimension"));
    }
    if (w.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "direction must have unit norm, got {}",
            w.norm()
        )));
    }
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::invalid(format!("step must lie in (0, 1e-3], got {h}")));
    }
    let a0 = area(z);
    let second = |step: f64| -> Result<f64> {
        let ap = area(&z.add_scaled(w, step)?);
        let am = area(&z.add_scaled(w, -step)?);
        Ok((ap - 2.0 * a0 + am) / (step * step))
    };
    let coarse = second(h)?;
    let fine = second(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Central-difference gradient of [`area`]; used as an independent check of
/// [`area_gradient`].
pub fn area_gradient_fd(z: &GradientMatrix, step: f64) -> GradientMatrix {
    let n = z.codim();
    let mut m = z.matrix().clone();
    let mut out = MatrixXx2::zeros(n);
    for j in 0..2 {
        for i in 0..n {
            let orig = m[(i, j)];
            m[(i, j)] = orig + step;
            let (c1, c2) = m.as_slice().split_at(n);
            let ap = kernel::area(c1, c2);
            m[(i, j)] = orig - step;
            let (c1, c2) = m.as_slice().split_at(n);
            let am = kernel::area(c1, c2);
            m[(i, j)] = orig;
            out[(i, j)] = (ap - am) / (2.0 * step);
        }
    }
    GradientMatrix { m: out }
}

/// Frobenius norm of the Jacobian of `Z -> B(Z)`, by central differences with
/// step `step * (1 + |Z|)`.
pub fn stress_jacobian_norm_fd(z: &GradientMatrix, step: f64) -> f64 {
    let n = z.codim();
    let h = step * (1.0 + z.norm());
    let mut m = z.matrix().clone();
    let mut total = 0.0;
    for j in 0..2 {
        for i in 0..n {
            let orig = m[(i, j)];
            m[(i, j)] = orig + h;
            let (c1, c2) = m.as_slice().split_at(n);
            let bp = kernel::inner_stress(c1, c2);
            m[(i, j)] = orig - h;
            let (c1, c2) = m.as_slice().split_at(n);
            let bm = kernel::inner_stress(c1, c2);
            m[(i, j)] = orig;
            total += ((bp - bm) / (2.0 * h)).norm_squared();
        }
    }
    total.sqrt()
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [mean - r, mean + r]
}

/// Square root of a symmetric positive definite 2x2 matrix:
/// `sqrt(P) = (P + sqrt(det P) id) / sqrt(tr P + 2 sqrt(det P))`.
pub fn spd_sqrt(p: &Mat2) -> Result<Mat2> {
    let det = p.determinant();
    let tr = p.trace();
    if !(det > 0.0 && tr > 0.0) {
        return Err(Error::invalid("matrix is not positive definite"));
    }
    let s = det.sqrt();
    Ok((p + Mat2::identity() * s) / (tr + 2.0 * s).sqrt())
}

/// Largest singular-value ratio `t` with `t + 1/t <= K`.
pub fn max_stretch(k: f64) -> f64 {
    0.5 * (k + (k * k - 4.0).max(0.0).sqrt())
}

/// Random quasiconformal matrix with `|X| = norm`, `det X > 0` and
/// `|X|^2 <= K det X`: singular-value ratio log-uniform in `[1, t_max(K)]`,
/// left and right factors uniform rotations.
pub fn qc_matrix(rng: &mut impl rand::Rng, k: f64, norm: f64) -> Mat2 {
    let t = crate::rng::log_uniform(rng, 1.0, max_stretch(k) * (1.0 - 1e-12));
    let s = norm / (t * t + 1.0).sqrt();
    let u = crate::rng::random_rotation(rng);
    let v = crate::rng::random_rotation(rng);
    u * Mat2::new(t * s, 0.0, 0.0, s) * v
}
