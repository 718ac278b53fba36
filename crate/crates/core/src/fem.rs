//! Piecewise-linear finite element plumbing: the Dirichlet stiffness matrix,
//! harmonic extension and discrete H^1-dual norms of flux functionals.
//!
//! A flux functional on a mesh is `psi -> sum_T |T| <F_T, D psi_T>` where
//! `F_T` is an `r x 2` matrix per triangle and `psi` ranges over
//! piecewise-linear `R^r`-valued fields vanishing on the boundary. Its dual
//! norm with respect to `|D psi|_{L^2}` is `sqrt(sum_c r_c^T K^{-1} r_c)`,
//! one stiffness solve per component.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{DiscreteMap, Mesh};
use crate::sparse::{solve_cg, CsrMatrix};

/// Relative tolerance of the inner stiffness solves.
pub const SOLVE_TOL: f64 = 1e-13;

/// Test functions used by the weak residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSpace {
    /// Hat functions of the mesh the map lives on. A discrete critical point
    /// has zero residual here by construction.
    Native,
    /// Hat functions of the once red-refined mesh, which measures
    /// consistency rather than the algebraic residual.
    #[default]
    Refined,
}

/// Stiffness matrix restricted to interior nodes.
#[derive(Clone, Debug)]
pub struct Stiffness {
    interior: Vec<usize>,
    slot: Vec<Option<usize>>,
    matrix: CsrMatrix,
}

impl Stiffness {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let interior = mesh.interior_nodes();
        if interior.is_empty() {
            return Err(Error::InvalidMesh("mesh has no interior nodes".into()));
        }
        let mut slot = vec![None; mesh.node_count()];
        for (k, &i) in interior.iter().enumerate() {
            slot[i] = Some(k);
        }
        let mut triplets = Vec::with_capacity(9 * mesh.triangle_count());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let g = mesh.basis_gradients(t);
            let a = mesh.areas()[t];
            for p in 0..3 {
                let Some(row) = slot[tri[p]] else { continue };
                for q in 0..3 {
                    let Some(col) = slot[tri[q]] else { continue };
                    triplets.push((row, col, a * (g[p][0] * g[q][0] + g[p][1] * g[q][1])));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(interior.len(), triplets);
        Ok(Self {
            interior,
            slot,
            matrix,
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn slot(&self, node: usize) -> Option<usize> {
        self.slot[node]
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_cg(&self.matrix, rhs, SOLVE_TOL, 20 * self.interior.len() + 100)
    }

    /// `sqrt(r^T K^{-1} r)` for a residual given per interior slot.
    pub fn dual_norm_sq(&self, r: &[f64]) -> Result<f64> {
        let x = self.solve(r)?;
        Ok(r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().max(0.0))
    }
}

/// Replaces the interior values of `u` by the discrete harmonic extension of
/// its boundary values.
pub fn harmonic_extension(u: &DiscreteMap) -> Result<DiscreteMap> {
    let mesh = u.mesh();
    let k = Stiffness::new(mesh)?;
    let n = u.codim();
    let mut values = u.values().to_vec();
    for c in 0..n {
        let mut rhs = vec![0.0; k.interior.len()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let g = mesh.basis_gradients(t);
            let a = mesh.areas()[t];
            for p in 0..3 {
                let Some(row) = k.slot[tri[p]] else { continue };
                for q in 0..3 {
                    if k.slot[tri[q]].is_none() {
                        let kij = a * (g[p][0] * g[q][0] + g[p][1] * g[q][1]);
                        rhs[row] -= kij * u.value(tri[q])[c];
                    }
                }
            }
        }
        let x = k.solve(&rhs)?;
        for (slot, &i) in k.interior.iter().enumerate() {
            values[i * n + c] = x[slot];
        }
    }
    u.with_values(values)
}

/// Flux of a map on one triangle: receives the gradient columns of the map
/// and writes the `rows` entries of both flux columns.
pub trait CellFlux: Sync {
    fn rows(&self, codim: usize) -> usize;
    fn eval(&self, z1: &[f64], z2: &[f64], f1: &mut [f64], f2: &mut [f64]);
}

/// Residual vector of the flux functional, laid out as `rows` blocks of
/// interior-slot vectors.
pub fn flux_residual(u: &DiscreteMap, k: &Stiffness, flux: &dyn CellFlux) -> Vec<Vec<f64>> {
    let mesh = u.mesh();
    let n = u.codim();
    let rows = flux.rows(n);
    let per_cell: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.triangle_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(z1, z2), t| {
                u.cell_columns(t, z1, z2);
                let mut f1 = vec![0.0; rows];
                let mut f2 = vec![0.0; rows];
                flux.eval(z1, z2, &mut f1, &mut f2);
                (f1, f2)
            },
        )
        .collect();
    let mut r = vec![vec![0.0; k.interior.len()]; rows];
    for (t, (f1, f2)) in per_cell.iter().enumerate() {
        let tri = mesh.triangles()[t];
        let g = mesh.basis_gradients(t);
        let a = mesh.areas()[t];
        for p in 0..3 {
            let Some(slot) = k.slot[tri[p]] else { continue };
            for c in 0..rows {
                r[c][slot] += a * (f1[c] * g[p][0] + f2[c] * g[p][1]);
            }
        }
    }
    r
}

/// H^1-dual norm of the flux functional over the chosen test space.
pub fn weak_residual(u: &DiscreteMap, space: TestSpace, flux: &dyn CellFlux) -> Result<f64> {
    let refined;
    let u = match space {
        TestSpace::Native => u,
        TestSpace::Refined => {
            let (fine, parents) = u.mesh().refine();
            refined = u.prolongate(Arc::new(fine), &parents)?;
            &refined
        }
    };
    let k = Stiffness::new(u.mesh())?;
    let r = flux_residual(u, &k, flux);
    let parts: Vec<Result<f64>> = r.par_iter().map(|rc| k.dual_norm_sq(rc)).collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total.sqrt())
}

/// The identity flux `F = Du`, whose functional is the weak Laplacian.
pub struct Dirichlet;

impl CellFlux for Dirichlet {
    fn rows(&self, codim: usize) -> usize {
        codim
    }

    fn eval(&self, z1: &[f64], z2: &[f64], f1: &mut [f64], f2: &mut [f64]) {
        f1.copy_from_slice(z1);
        f2.copy_from_slice(z2);
    }
}

/// Lumped mass of each node, `sum_{T ni i} |T| / 3`.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &i in tri {
            m[i] += mesh.areas()[t] / 3.0;
        }
    }
    m
}
