//! Discrete area energy of piecewise-linear graphs and a safeguarded
//! quasi-Newton descent producing outer-critical maps.
//!
//! The energy of `u` on a mesh is `E(u) = sum_T A(Du_T) |T|`. Its gradient
//! with respect to interior nodal values is assembled from `DA` per
//! triangle; boundary rows are zero because boundary values are fixed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{harmonic_extension, weak_residual, CellFlux, Stiffness, TestSpace};
use crate::matcore::kernel;
use crate::mesh::{DiscreteMap, Mesh, Point};

pub mod presets;


/// Starting point of the descent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initializer {
    /// Discrete harmonic extension of the boundary data.
    #[default]
    Harmonic,
    /// Zero interior values.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Stop once `|grad| <= tol * sqrt(interior nodes)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step reduction factor during backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Number of stored quasi-Newton pairs; zero gives preconditioned
    /// steepest descent.
    pub memory: usize,
    /// Use the stiffness matrix as the initial inverse Hessian.
    pub precondition: bool,
    pub initializer: Initializer,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            memory: 10,
            precondition: true,
            initializer: Initializer::Harmonic,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("backtrack factor must lie in (0, 1)"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::invalid("sufficient-decrease constant must lie in (0, 1)"));
        }
        if self.max_backtracks == 0 {
            return Err(Error::invalid("at least one backtracking step is required"));
        }
        Ok(())
    }
}

/// Fixed values on the boundary nodes of a mesh, in the order of
/// [`Mesh::boundary_nodes`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    codim: usize,
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl BoundaryData {
    pub fn new(mesh: &Mesh, codim: usize, values: Vec<f64>) -> Result<Self> {
        let nodes = mesh.boundary_nodes();
        if codim == 0 {
            return Err(Error::invalid("codimension must be positive"));
        }
        if values.len() != codim * nodes.len() {
            return Err(Error::invalid(format!(
                "expected {} boundary values, got {}",
                codim * nodes.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("boundary data must be finite"));
        }
        Ok(Self { codim, nodes, values })
    }

    pub fn from_fn(mesh: &Mesh, codim: usize, f: impl Fn(Point) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::new();
        for i in mesh.boundary_nodes() {
            let v = f(mesh.nodes()[i]);
            if v.len() != codim {
                return Err(Error::invalid("boundary function returned the wrong number of components"));
            }
            values.extend(v);
        }
        Self::new(mesh, codim, values)
    }

    /// The boundary trace of a map.
    pub fn from_map(u: &DiscreteMap) -> Self {
        let nodes = u.mesh().boundary_nodes();
        let values = nodes.iter().flat_map(|&i| u.value(i).iter().copied()).collect();
        Self {
            codim: u.codim(),
            nodes,
            values,
        }
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// A map carrying these boundary values and zero inside.
    pub fn to_map(&self, mesh: Arc<Mesh>) -> Result<DiscreteMap> {
        if mesh.boundary_nodes() != self.nodes {
            return Err(Error::invalid("boundary data belongs to a different mesh"));
        }
        let n = self.codim;
        let mut values = vec![0.0; n * mesh.node_count()];
        for (k, &i) in self.nodes.iter().enumerate() {
            values[i * n..(i + 1) * n].copy_from_slice(&self.values[k * n..(k + 1) * n]);
        }
        DiscreteMap::new(mesh, n, values)
    }
}

fn per_cell<T: Send>(u: &DiscreteMap, f: impl Fn(&[f64], &[f64]) -> T + Sync) -> Vec<T> {
    let n = u.codim();
    (0..u.mesh().triangle_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(z1, z2), t| {
                u.cell_columns(t, z1, z2);
                f(z1, z2)
            },
        )
        .collect()
}

/// `sum_T A(Du_T) |T|`.
pub fn assemble_energy(u: &DiscreteMap) -> f64 {
    let cells = per_cell(u, kernel::area);
    cells.iter().zip(u.mesh().areas()).map(|(a, w)| a * w).sum()
}

/// Gradient of [`assemble_energy`] with respect to the nodal values,
/// node-major, with boundary rows zeroed.
pub fn assemble_gradient(u: &DiscreteMap) -> Vec<f64> {
    let n = u.codim();
    let mesh = u.mesh();
    let cells = per_cell(u, |z1, z2| {
        let mut o1 = vec![0.0; n];
        let mut o2 = vec![0.0; n];
        kernel::area_gradient(z1, z2, &mut o1, &mut o2);
        (o1, o2)
    });
    let mut g = vec![0.0; n * mesh.node_count()];
    for (t, (o1, o2)) in cells.iter().enumerate() {
        let tri = mesh.triangles()[t];
        let b = mesh.basis_gradients(t);
        let w = mesh.areas()[t];
        for k in 0..3 {
            let i = tri[k];
            if mesh.is_boundary(i) {
                continue;
            }
            for a in 0..n {
                g[i * n + a] += w * (o1[a] * b[k][0] + o2[a] * b[k][1]);
            }
        }
    }
    g
}

/// `E(u + t d) - E(u)`, evaluated per triangle without cancelling the two
/// energies against each other.
pub fn energy_difference(u: &DiscreteMap, d: &DiscreteMap, t: f64) -> f64 {
    let n = u.codim();
    let mesh = u.mesh();
    let cells: Vec<f64> = (0..mesh.triangle_count())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]),
            |(z1, z2, e1, e2, w1, w2), k| {
                u.cell_columns(k, z1, z2);
                d.cell_columns(k, e1, e2);
                for a in 0..n {
                    e1[a] *= t;
                    e2[a] *= t;
                    w1[a] = z1[a] + e1[a];
                    w2[a] = z2[a] + e2[a];
                }
                let mut delta = 0.0;
                for a in 0..n {
                    delta += e1[a] * (2.0 * z1[a] + e1[a]) + e2[a] * (2.0 * z2[a] + e2[a]);
                }
                for a in 0..n {
                    for b in (a + 1)..n {
                        let m = z1[a] * z2[b] - z2[a] * z1[b];
                        let dm = z1[a] * e2[b] + e1[a] * z2[b] - z2[a] * e1[b] - e2[a] * z1[b]
                            + (e1[a] * e2[b] - e2[a] * e1[b]);
                        delta += dm * (2.0 * m + dm);
                    }
                }
                delta / (kernel::area(z1, z2) + kernel::area(w1, w2))
            },
        )
        .collect();
    cells.iter().zip(mesh.areas()).map(|(a, w)| a * w).sum()
}

/// Outcome of a successful descent.
#[derive(Clone, Debug)]
pub struct Minimized {
    pub map: DiscreteMap,
    pub iterations: usize,
    pub grad_norm: f64,
    pub energy_history: Vec<f64>,
    pub grad_history: Vec<f64>,
}

struct Preconditioner {
    stiffness: Stiffness,
    codim: usize,
}

impl Preconditioner {
    /// `K^{-1}` applied componentwise on interior nodes.
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.codim;
        let interior = self.stiffness.interior();
        let mut out = vec![0.0; v.len()];
        for c in 0..n {
            let rhs: Vec<f64> = interior.iter().map(|&i| v[i * n + c]).collect();
            let x = crate::sparse::solve_cg(self.stiffness.matrix(), &rhs, 1e-10, 10 * interior.len() + 100)?;
            for (slot, &i) in interior.iter().enumerate() {
                out[i * n + c] = x[slot];
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the discrete area energy with the given boundary values.
///
/// Limited-memory BFGS with the stiffness matrix as initial inverse Hessian
/// and Armijo backtracking; the memory is dropped and a preconditioned
/// gradient step taken whenever the quasi-Newton direction fails.
pub fn minimize(boundary: &BoundaryData, config: &SolveConfig, mesh: Arc<Mesh>) -> Result<Minimized> {
    config.validate()?;
    let start = boundary.to_map(mesh.clone())?;
    let start = match config.initializer {
        Initializer::Harmonic => harmonic_extension(&start)?,
        Initializer::Zero => start,
    };
    minimize_from(start, config)
}

/// Descent started from an explicit iterate; its boundary values are kept.
pub fn minimize_from(start: DiscreteMap, config: &SolveConfig) -> Result<Minimized> {
    config.validate()?;
    let mesh = start.mesh_arc().clone();
    let n = start.codim();
    let interior = mesh.interior_nodes().len();
    if interior == 0 {
        return Err(Error::InvalidMesh("mesh has no interior nodes".into()));
    }
    let target = config.tol * (interior as f64).sqrt();
    let precond = if config.precondition {
        Some(Preconditioner {
            stiffness: Stiffness::new(&mesh)?,
            codim: n,
        })
    } else {
        None
    };
    let apply_h0 = |v: &[f64]| -> Result<Vec<f64>> {
        match &precond {
            Some(p) => p.apply(v),
            None => Ok(v.to_vec()),
        }
    };

    let mut u = start;
    let mut g = assemble_gradient(&u);
    let mut gnorm = dot(&g, &g).sqrt();
    let mut energy_history = vec![assemble_energy(&u)];
    let mut grad_history = vec![gnorm];
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();

    let mut iterations = 0;
    while gnorm > target {
        if iterations == config.max_iter {
            return Err(Error::MinimizeNotConverged {
                iterations,
                grad_norm: gnorm,
                last_iterate: Box::new(u),
            });
        }
        let mut accepted = None;
        for attempt in 0..2 {
            let use_memory = attempt == 0 && !pairs.is_empty();
            let mut d = if use_memory {
                two_loop(&g, &pairs, &apply_h0)?
            } else {
                apply_h0(&g)?
            };
            d.iter_mut().for_each(|v| *v = -*v);
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                pairs.clear();
                continue;
            }
            let dmap = u.with_values(d)?;
            let mut t = 1.0;
            for _ in 0..config.max_backtracks {
                let de = energy_difference(&u, &dmap, t);
                if de <= config.armijo * t * slope {
                    accepted = Some((dmap.clone(), t));
                    break;
                }
                t *= config.backtrack;
            }
            if accepted.is_some() {
                break;
            }
            pairs.clear();
        }
        let Some((dmap, t)) = accepted else {
            return Err(Error::MinimizeNotConverged {
                iterations,
                grad_norm: gnorm,
                last_iterate: Box::new(u),
            });
        };
        let values: Vec<f64> = u.values().iter().zip(dmap.values()).map(|(a, b)| a + t * b).collect();
        let next = u.with_values(values)?;
        let g_next = assemble_gradient(&next);
        let s: Vec<f64> = dmap.values().iter().map(|v| t * v).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if config.memory > 0 && sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == config.memory {
                pairs.remove(0);
            }
            pairs.push((s, y, 1.0 / sy));
        }
        u = next;
        g = g_next;
        gnorm = dot(&g, &g).sqrt();
        iterations += 1;
        energy_history.push(assemble_energy(&u));
        grad_history.push(gnorm);
    }
    Ok(Minimized {
        map: u,
        iterations,
        grad_norm: gnorm,
        energy_history,
        grad_history,
    })
}

fn two_loop(
    g: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>, f64)],
    apply_h0: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[k] = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= alpha[k] * yi);
    }
    let (s, y, _) = pairs.last().expect("non-empty memory");
    let hy = apply_h0(y)?;
    let gamma = dot(s, y) / dot(y, &hy);
    let mut r: Vec<f64> = apply_h0(&q)?.into_iter().map(|v| gamma * v).collect();
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (alpha[k] - beta) * si);
    }
    Ok(r)
}

struct OuterFlux;

impl CellFlux for OuterFlux {
    fn rows(&self, codim: usize) -> usize {
        codim
    }

    fn eval(&self, z1: &[f64], z2: &[f64], f1: &mut [f64], f2: &mut [f64]) {
        kernel::area_gradient(z1, z2, f1, f2);
    }
}

/// Flux `B(Du)` of the inner variation, tested against `R^2`-valued fields.
pub(crate) struct InnerFlux;

impl CellFlux for InnerFlux {
    fn rows(&self, _codim: usize) -> usize {
        2
    }

    fn eval(&self, z1: &[f64], z2: &[f64], f1: &mut [f64], f2: &mut [f64]) {
        let b = kernel::inner_stress(z1, z2);
        f1[0] = b[(0, 0)];
        f1[1] = b[(1, 0)];
        f2[0] = b[(0, 1)];
        f2[1] = b[(1, 1)];
    }
}

/// Dual-norm residual of `div DA(Du) = 0` over the default test space.
pub fn outer_residual(u: &DiscreteMap) -> Result<f64> {
    outer_residual_in(u, TestSpace::default())
}

pub fn outer_residual_in(u: &DiscreteMap, space: TestSpace) -> Result<f64> {
    weak_residual(u, space, &OuterFlux)
}

/// Dual-norm residual of `div B(Du) = 0` over the default test space.
pub fn inner_variation_residual(u: &DiscreteMap) -> Result<f64> {
    inner_variation_residual_in(u, TestSpace::default())
}

pub fn inner_variation_residual_in(u: &DiscreteMap, space: TestSpace) -> Result<f64> {
    weak_residual(u, space, &InnerFlux)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallDetReport {
    pub max_minor: f64,
    pub eps: f64,
    pub pass: bool,
}

/// Largest `|det(Du^{ab})|` over triangles and row pairs, compared with `eps`.
pub fn small_det_check(u: &DiscreteMap, eps: f64) -> SmallDetReport {
    let max_minor = u.max_abs_minor();
    SmallDetReport {
        max_minor,
        eps,
        pass: max_minor <= eps,
    }
}
