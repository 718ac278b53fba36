//! Beltrami coefficients of graph metrics, the Beltrami equation, planar map
//! inversion and the factorization `u = v o phi` with `v` harmonic.
//!
//! For a gradient `Du` with induced metric `g = id + Du^T Du` (entries
//! `E, F, G`), the coefficient
//! `mu = (E - G + 2iF) / (E + G + 2 sqrt(EG - F^2))`
//! makes any solution of `phi_zbar = mu phi_z` conformal for `g`, i.e.
//! `g = rho Dphi^T Dphi` for some `rho > 0`.

mod factor;
mod grid;
mod solve;

#[cfg(test)]
mod tests;

pub use factor::{factorize, invert_map, invert_points, resample, FactorizeConfig, Factorization};
pub use grid::{wirtinger, ComplexGrid, Convolver};
pub use solve::{smooth_bump, smooth_cutoff, solve_beltrami, BeltramiConfig, BeltramiField, BeltramiSolution};

pub use crate::graphsolve::{outer_residual, outer_residual_in};

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{lumped_mass, weak_residual, Dirichlet, Stiffness, TestSpace};
use crate::graphsolve::InnerFlux;
use crate::matcore::{qc_distortion, InducedMetric, Mat2};
use crate::mesh::{DiscreteMap, Mesh, Point};

/// Slack allowed below the identity when checking `g >= id`.
pub const METRIC_TOL: f64 = 1e-9;

/// Beltrami coefficient of one metric; `cell` labels errors.
pub fn beltrami_coefficient(g: &InducedMetric, cell: usize) -> Result<Complex64> {
    let m = &g.g;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMetric {
            cell,
            reason: "non-finite entries".into(),
        });
    }
    if (m[(0, 1)] - m[(1, 0)]).abs() > METRIC_TOL * (1.0 + m.norm()) {
        return Err(Error::InvalidMetric {
            cell,
            reason: "metric is not symmetric".into(),
        });
    }
    let [lo, _] = g.eigenvalues();
    if lo < 1.0 - METRIC_TOL * (1.0 + m.norm()) {
        return Err(Error::InvalidMetric {
            cell,
            reason: format!("smallest eigenvalue {lo} is below 1"),
        });
    }
    let (e, f, gg) = (g.e(), g.f(), g.g22());
    let root = (e * gg - f * f).max(0.0).sqrt();
    Ok(Complex64::new(e - gg, 2.0 * f) / (e + gg + 2.0 * root))
}

/// A piecewise-linear planar map on a mesh, optionally carrying a
/// quasiconformality bound that every cell satisfies.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarMap {
    map: DiscreteMap,
    qc_bound: Option<f64>,
}

impl PlanarMap {
    pub fn new(map: DiscreteMap) -> Result<Self> {
        if map.codim() != 2 {
            return Err(Error::invalid("planar maps have two components"));
        }
        Ok(Self { map, qc_bound: None })
    }

    pub fn identity(mesh: Arc<Mesh>) -> Self {
        let map = DiscreteMap::from_fn(mesh, 2, |p| p.to_vec()).expect("finite nodes");
        Self { map, qc_bound: None }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(Point) -> Point) -> Result<Self> {
        Self::new(DiscreteMap::from_fn(mesh, 2, |p| f(p).to_vec())?)
    }

    /// Attaches the bound `K`, checking `|Dphi|^2 <= K det Dphi` on every cell.
    pub fn with_qc_bound(mut self, k: f64) -> Result<Self> {
        for t in 0..self.map.mesh().triangle_count() {
            let d = qc_distortion(&self.jacobian(t));
            if !(d <= k) {
                return Err(Error::invalid(format!("cell {t} has distortion {d} above {k}")));
            }
        }
        self.qc_bound = Some(k);
        Ok(self)
    }

    pub fn qc_bound(&self) -> Option<f64> {
        self.qc_bound
    }

    pub fn map(&self) -> &DiscreteMap {
        &self.map
    }

    pub fn mesh(&self) -> &Mesh {
        self.map.mesh()
    }

    pub fn point(&self, node: usize) -> Point {
        let v = self.map.value(node);
        [v[0], v[1]]
    }

    pub fn jacobian(&self, t: usize) -> Mat2 {
        self.map.gradient(t).top_block()
    }

    /// Largest cell distortion.
    pub fn max_distortion(&self) -> f64 {
        (0..self.mesh().triangle_count())
            .map(|t| qc_distortion(&self.jacobian(t)))
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, p: Point) -> Option<Point> {
        self.map.interpolate(p).map(|v| [v[0], v[1]])
    }

    /// The image triangulation; fails with [`Error::NotInjective`] on the
    /// first cell whose orientation is not positive.
    pub fn image_mesh(&self) -> Result<Mesh> {
        let nodes = (0..self.mesh().node_count()).map(|i| self.point(i)).collect();
        self.mesh().with_nodes(nodes)
    }
}

/// How [`harmonic_residual`] measures the discrete Laplacian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarmonicNorm {
    /// Lumped-mass `L^2` norm of the stiffness residual at interior nodes;
    /// on uniform grid meshes this is the five-point Laplacian.
    #[default]
    StrongL2,
    /// `H^1`-dual norm of the weak Laplacian over the mesh's own hat functions.
    DualH1,
}

/// Discrete harmonicity defect of `v`, summed over components.
pub fn harmonic_residual(v: &DiscreteMap, norm: HarmonicNorm) -> Result<f64> {
    match norm {
        HarmonicNorm::DualH1 => weak_residual(v, TestSpace::Native, &Dirichlet),
        HarmonicNorm::StrongL2 => {
            let mesh = v.mesh();
            let k = Stiffness::new(mesh)?;
            let mass = lumped_mass(mesh);
            let n = v.codim();
            let mut lap = vec![0.0; n * mesh.node_count()];
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let g = mesh.basis_gradients(t);
                let a = mesh.areas()[t];
                for p in 0..3 {
                    if k.slot(tri[p]).is_none() {
                        continue;
                    }
                    for q in 0..3 {
                        let kij = a * (g[p][0] * g[q][0] + g[p][1] * g[q][1]);
                        for c in 0..n {
                            lap[tri[p] * n + c] += kij * v.value(tri[q])[c];
                        }
                    }
                }
            }
            let mut total = 0.0;
            for c in 0..n {
                let s: f64 = k
                    .interior()
                    .iter()
                    .map(|&i| lap[i * n + c] * lap[i * n + c] / mass[i])
                    .sum();
                total += s.sqrt();
            }
            Ok(total)
        }
    }
}

/// Dual-norm residual of `div B(Dw | Dpsi) = 0`, where `psi` carries the
/// remaining `n - 2` components on the same mesh (absent when `n = 2`).
pub fn inner_residual(w: &PlanarMap, psi: Option<&DiscreteMap>, space: TestSpace) -> Result<f64> {
    let stacked = match psi {
        None => w.map.clone(),
        Some(psi) => {
            if psi.mesh() != w.mesh() {
                return Err(Error::invalid("w and psi must live on the same mesh"));
            }
            let n = 2 + psi.codim();
            let mut values = Vec::with_capacity(n * w.mesh().node_count());
            for i in 0..w.mesh().node_count() {
                values.extend_from_slice(w.map.value(i));
                values.extend_from_slice(psi.value(i));
            }
            DiscreteMap::new(w.map.mesh_arc().clone(), n, values)?
        }
    };
    weak_residual(&stacked, space, &InnerFlux)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `|Dv|` below the gradient tolerance.
    E1,
    /// All 2x2 minors below the minor tolerance.
    Zset,
    /// Some minor is bounded away from zero.
    Oset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLabels {
    pub labels: Vec<Region>,
    pub tol_grad: f64,
    pub tol_minor: f64,
    pub counts: [usize; 3],
    /// Lumped area of the E1 nodes.
    pub e1_measure: f64,
}

/// Default thresholds: `1e-3` times the largest cell gradient.
pub fn default_region_tolerances(v: &DiscreteMap) -> (f64, f64) {
    let lip = v.lipschitz_estimate().max(f64::MIN_POSITIVE);
    (1e-3 * lip, 1e-3 * lip)
}

/// Labels every node by its area-averaged gradient.
pub fn classify_regions(v: &DiscreteMap, tol_grad: f64, tol_minor: f64) -> Result<RegionLabels> {
    if !(tol_grad >= 0.0 && tol_minor >= 0.0) {
        return Err(Error::invalid("region tolerances must be non-negative"));
    }
    let mesh = v.mesh();
    let n = v.codim();
    let mut z1 = vec![0.0; n * mesh.node_count()];
    let mut z2 = vec![0.0; n * mesh.node_count()];
    let mut weight = vec![0.0; mesh.node_count()];
    let (mut c1, mut c2) = (vec![0.0; n], vec![0.0; n]);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        v.cell_columns(t, &mut c1, &mut c2);
        let a = mesh.areas()[t];
        for &i in tri {
            weight[i] += a;
            for c in 0..n {
                z1[i * n + c] += a * c1[c];
                z2[i * n + c] += a * c2[c];
            }
        }
    }
    let mut labels = Vec::with_capacity(mesh.node_count());
    let mut counts = [0usize; 3];
    let mass = lumped_mass(mesh);
    let mut e1_measure = 0.0;
    for i in 0..mesh.node_count() {
        let a: Vec<f64> = z1[i * n..(i + 1) * n].iter().map(|x| x / weight[i]).collect();
        let b: Vec<f64> = z2[i * n..(i + 1) * n].iter().map(|x| x / weight[i]).collect();
        let norm = a.iter().chain(&b).map(|x| x * x).sum::<f64>().sqrt();
        let label = if norm <= tol_grad {
            e1_measure += mass[i];
            Region::E1
        } else if crate::matcore::kernel::max_abs_minor(&a, &b) <= tol_minor {
            Region::Zset
        } else {
            Region::Oset
        };
        counts[label as usize] += 1;
        labels.push(label);
    }
    Ok(RegionLabels {
        labels,
        tol_grad,
        tol_minor,
        counts,
        e1_measure,
    })
}
