//! Inversion of piecewise-linear planar maps and the factorization of a
//! graph map through the solution of its Beltrami equation.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::ComplexGrid;
use super::solve::{solve_beltrami, BeltramiConfig, BeltramiField};
use super::{beltrami_coefficient, PlanarMap};
use crate::error::{Error, Result};
use crate::matcore::metric;
use crate::mesh::{DiscreteMap, Mesh, Point};

/// Preimages of `targets` under `phi`.
///
/// Each target is located in the image triangulation; since `phi` is affine
/// on the cell, the preimage is the same barycentric combination of the
/// source vertices (the Newton step from any point of the cell is exact).
pub fn invert_points(phi: &PlanarMap, targets: &[Point]) -> Result<Vec<Point>> {
    let image = phi.image_mesh()?;
    let source = phi.mesh();
    targets
        .par_iter()
        .enumerate()
        .map(|(index, &y)| {
            let (t, bc) = image.locate(y).ok_or(Error::OutOfDomain { index, x: y[0], y: y[1] })?;
            let tri = source.triangles()[t];
            let mut x = [0.0; 2];
            for k in 0..3 {
                let p = source.nodes()[tri[k]];
                x[0] += bc[k] * p[0];
                x[1] += bc[k] * p[1];
            }
            Ok(x)
        })
        .collect()
}

/// `phi^{-1}` sampled at the nodes of `targets`, as a map on that mesh.
pub fn invert_map(phi: &PlanarMap, targets: Arc<Mesh>) -> Result<PlanarMap> {
    let pre = invert_points(phi, targets.nodes())?;
    PlanarMap::new(DiscreteMap::new(targets, 2, pre.into_iter().flatten().collect())?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizeConfig {
    /// Grid size `N` (a power of two).
    pub grid: usize,
    /// Half side `L` of the computational box.
    pub half_width: f64,
    pub beltrami: BeltramiConfig,
}

impl Default for FactorizeConfig {
    fn default() -> Self {
        Self {
            grid: 512,
            half_width: 4.0,
            beltrami: BeltramiConfig::default(),
        }
    }
}

/// Result of [`factorize`].
#[derive(Clone, Debug)]
pub struct Factorization {
    /// `phi` on the mesh of `u`.
    pub phi: PlanarMap,
    /// `v = u o phi^{-1}` on the image triangulation `phi(mesh)`.
    pub v: DiscreteMap,
    /// Beltrami coefficient per cell of `u`.
    pub mu: Vec<Complex64>,
    pub mu_sup: f64,
    pub iterations: usize,
    pub beltrami_residual: f64,
    pub residual_history: Vec<f64>,
    pub far_field: f64,
    /// `rho = sqrt(det g) / det Dphi` per cell.
    pub rho: Vec<f64>,
    /// Largest relative mismatch `|g / rho - Dphi^T Dphi| / |Dphi^T Dphi|`.
    pub conformal_mismatch: f64,
    pub min_jacobian: f64,
}

/// Factors `u = v o phi` with `phi` solving the Beltrami equation of the
/// induced metric of `u` and `v` harmonic on `phi(B_1)`.
///
/// The mesh of `u` must lie in the closed unit disc. The coefficient is
/// constant per cell; grid nodes in the disc but outside the mesh take the
/// value of the nearest cell.
pub fn factorize(u: &DiscreteMap, config: &FactorizeConfig) -> Result<Factorization> {
    let mesh = u.mesh();
    if mesh.nodes().iter().any(|p| p[0].hypot(p[1]) > 1.0 + 1e-12) {
        return Err(Error::invalid("factorization needs a mesh inside the closed unit disc"));
    }
    let mu: Vec<Complex64> = (0..mesh.triangle_count())
        .map(|t| beltrami_coefficient(&metric(&u.gradient(t)), t))
        .collect::<Result<_>>()?;
    let mu_sup = mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
    if !(mu_sup < 1.0) {
        return Err(Error::invalid(format!("Beltrami coefficient has sup norm {mu_sup} >= 1")));
    }
    let centroids: Vec<Point> = (0..mesh.triangle_count()).map(|t| mesh.centroid(t)).collect();
    let field = BeltramiField::new(ComplexGrid::from_fn(config.grid, config.half_width, |z| {
        if z.norm() > 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        let p = [z.re, z.im];
        let t = match mesh.locate(p) {
            Some((t, _)) => t,
            None => nearest(&centroids, p),
        };
        mu[t]
    })?)?;
    let sol = solve_beltrami(&field, &config.beltrami)?;

    let mut values = Vec::with_capacity(2 * mesh.node_count());
    for &p in mesh.nodes() {
        let w = sol.eval(Complex64::new(p[0], p[1])).ok_or(Error::invalid("mesh leaves the grid"))?;
        values.push(w.re);
        values.push(w.im);
    }
    let phi = PlanarMap::new(DiscreteMap::new(u.mesh_arc().clone(), 2, values)?)?;
    let image = Arc::new(phi.image_mesh()?);
    let v = DiscreteMap::new(image, u.codim(), u.values().to_vec())?;

    let mut rho = Vec::with_capacity(mesh.triangle_count());
    let mut mismatch: f64 = 0.0;
    let mut min_jacobian = f64::INFINITY;
    for t in 0..mesh.triangle_count() {
        let g = metric(&u.gradient(t)).g;
        let d = phi.jacobian(t);
        let det = d.determinant();
        min_jacobian = min_jacobian.min(det);
        let r = g.determinant().sqrt() / det;
        let dtd = d.transpose() * d;
        mismatch = mismatch.max((g / r - dtd).norm() / dtd.norm());
        rho.push(r);
    }
    Ok(Factorization {
        phi,
        v,
        mu,
        mu_sup,
        iterations: sol.iterations,
        beltrami_residual: sol.residual,
        residual_history: sol.residual_history,
        far_field: sol.far_field,
        rho,
        conformal_mismatch: mismatch,
        min_jacobian,
    })
}

fn nearest(points: &[Point], p: Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, q) in points.iter().enumerate() {
        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Samples `v` on the nodes of an `n x n` grid over the bounding box of its
/// mesh; nodes outside the mesh are `None`.
pub fn resample(v: &DiscreteMap, n: usize) -> Vec<(Point, Option<Vec<f64>>)> {
    let nodes = v.mesh().nodes();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let step = |d: usize| (hi[d] - lo[d]) / (n.max(2) - 1) as f64;
    (0..n * n)
        .map(|k| {
            let p = [lo[0] + (k % n) as f64 * step(0), lo[1] + (k / n) as f64 * step(1)];
            (p, v.interpolate(p))
        })
        .collect()
}
