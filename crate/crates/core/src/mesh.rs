//! Triangle meshes of planar domains and piecewise-linear maps on them.
//!
//! Node ordering of the built-in meshes:
//!
//! * [`Mesh::rectangle`]: row-major, node `(i, j)` has index `j * (nx + 1) + i`;
//!   every cell is split along its rising diagonal.
//! * [`Mesh::disc`]: the centre first, then rings `k = 1..=R` of `6k` nodes at
//!   radius `k / R`, counter-clockwise from the positive real axis. The total
//!   node count is `1 + 3R(R + 1)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{kernel, GradientMatrix, Mat2};

pub type Point = [f64; 2];

/// Barycentric coordinates of a point inside a triangle.
pub type Barycentric = [f64; 3];

const LOCATE_SLACK: f64 = 1e-10;

#[derive(Debug)]
struct Locator {
    origin: Point,
    cell: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

#[derive(Debug)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    grads: Vec<[Point; 3]>,
    locator: OnceLock<Locator>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Self {
            nodes: self.nodes.clone(),
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            areas: self.areas.clone(),
            grads: self.grads.clone(),
            locator: OnceLock::new(),
        }
    }
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.triangles == other.triangles && self.boundary == other.boundary
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Boundary flags derived from edges that belong to a single triangle.
fn edge_boundary(node_count: usize, triangles: &[[usize; 3]]) -> Result<Vec<bool>> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let e = (tri[k], tri[(k + 1) % 3]);
            if let Some(prev) = directed.insert(e, t) {
                return Err(Error::InvalidMesh(format!(
                    "edge ({}, {}) is used with the same orientation by triangles {prev} and {t}",
                    e.0, e.1
                )));
            }
        }
    }
    let mut boundary = vec![false; node_count];
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) {
            boundary[a] = true;
            boundary[b] = true;
        }
    }
    Ok(boundary)
}

impl Mesh {
    /// Builds a mesh, checking orientation and conformity. Boundary flags are
    /// derived from the edge structure when `boundary` is `None`; otherwise
    /// they must agree with it.
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Option<Vec<bool>>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh("node coordinates must be finite".into()));
        }
        let mut used = vec![false; nodes.len()];
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a node")));
            }
            for &i in tri {
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("node {i} belongs to no triangle")));
        }
        let derived = edge_boundary(nodes.len(), &triangles)?;
        let boundary = match boundary {
            None => derived,
            Some(flags) => {
                if flags != derived {
                    return Err(Error::InvalidMesh(
                        "boundary flags disagree with the edges of the triangulation".into(),
                    ));
                }
                flags
            }
        };
        Self::assemble(nodes, triangles, boundary, |t| {
            Error::InvalidMesh(format!("triangle {t} is degenerate or negatively oriented"))
        })
    }

    fn assemble(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        on_flip: impl Fn(usize) -> Error,
    ) -> Result<Self> {
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let a = signed_area(p[0], p[1], p[2]);
            let scale = (0..3)
                .map(|k| {
                    let (u, v) = (p[k], p[(k + 1) % 3]);
                    (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)
                })
                .fold(0.0, f64::max);
            if !(a > 1e-14 * scale) {
                return Err(on_flip(t));
            }
            let mut g = [[0.0; 2]; 3];
            for k in 0..3 {
                let (pj, pk) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                g[k] = [(pj[1] - pk[1]) / (2.0 * a), (pk[0] - pj[0]) / (2.0 * a)];
            }
            areas.push(a);
            grads.push(g);
        }
        Ok(Self {
            nodes,
            triangles,
            boundary,
            areas,
            grads,
            locator: OnceLock::new(),
        })
    }

    /// Uniform mesh of `[x0, x1] x [y0, y1]` with `nx x ny` cells.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::invalid("rectangle needs positive extent and cell counts"));
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = x0 + (x1 - x0) * i as f64 / nx as f64;
                let y = y0 + (y1 - y0) * j as f64 / ny as f64;
                nodes.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Self::new(nodes, triangles, None)
    }

    /// The unit square `[0, 1]^2` split into `cells x cells` squares.
    pub fn unit_square(cells: usize) -> Result<Self> {
        Self::rectangle(0.0, 1.0, 0.0, 1.0, cells, cells)
    }

    /// Structured polar mesh of the unit disc with `rings` rings.
    pub fn disc(rings: usize) -> Result<Self> {
        if rings == 0 {
            return Err(Error::invalid("disc mesh needs at least one ring"));
        }
        let r = rings as f64;
        let mut nodes = vec![[0.0, 0.0]];
        let mut ring_start = vec![0usize];
        for k in 1..=rings {
            ring_start.push(nodes.len());
            let m = 6 * k;
            for j in 0..m {
                let th = 2.0 * PI * j as f64 / m as f64;
                let rad = k as f64 / r;
                nodes.push([rad * th.cos(), rad * th.sin()]);
            }
        }
        let mut triangles = Vec::with_capacity(6 * rings * rings);
        for j in 0..6 {
            triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
        }
        for k in 2..=rings {
            let (n_in, n_out) = (6 * (k - 1), 6 * k);
            let (s_in, s_out) = (ring_start[k - 1], ring_start[k]);
            let inner = |i: usize| s_in + i % n_in;
            let outer = |j: usize| s_out + j % n_out;
            let (mut i, mut j) = (0, 0);
            while i < n_in || j < n_out {
                if j < n_out && (i == n_in || (j + 1) * n_in <= (i + 1) * n_out) {
                    triangles.push([inner(i), outer(j), outer(j + 1)]);
                    j += 1;
                } else {
                    triangles.push([inner(i), outer(j), inner(i + 1)]);
                    i += 1;
                }
            }
        }
        Self::new(nodes, triangles, None)
    }

    /// Red refinement: every triangle is split into four through its edge
    /// midpoints. Returns the refined mesh and, for each new node (indices
    /// `node_count()..`), the two parent nodes of its edge.
    pub fn refine(&self) -> (Mesh, Vec<[usize; 2]>) {
        let n = self.nodes.len();
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut parents: Vec<[usize; 2]> = Vec::new();
        let mut nodes = self.nodes.clone();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *edge_id.entry(key).or_insert_with(|| {
                parents.push([key.0, key.1]);
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                n + parents.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        let mesh = Mesh::new(nodes, triangles, None).expect("refinement of a valid mesh is valid");
        (mesh, parents)
    }

    /// Same connectivity with moved nodes. A triangle whose orientation is
    /// lost yields [`Error::NotInjective`].
    pub fn with_nodes(&self, nodes: Vec<Point>) -> Result<Mesh> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::invalid("node count changed"));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("node coordinates must be finite"));
        }
        Self::assemble(nodes, self.triangles.clone(), self.boundary.clone(), |cell| {
            Error::NotInjective { cell }
        })
    }

    /// The mesh mapped by a linear map with positive determinant.
    pub fn transformed(&self, m: &Mat2) -> Result<Mesh> {
        if !(m.determinant() > 0.0) {
            return Err(Error::invalid("domain transformation must preserve orientation"));
        }
        let nodes = self
            .nodes
            .iter()
            .map(|p| [m[(0, 0)] * p[0] + m[(0, 1)] * p[1], m[(1, 0)] * p[0] + m[(1, 1)] * p[1]])
            .collect();
        self.with_nodes(nodes)
    }

    /// The sub-mesh of triangles selected by `keep`, with the map from new to
    /// old node indices.
    pub fn submesh(&self, keep: impl Fn(usize) -> bool) -> Result<(Mesh, Vec<usize>)> {
        let mut new_index = vec![usize::MAX; self.nodes.len()];
        let mut old_of_new = Vec::new();
        let mut triangles = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if !keep(t) {
                continue;
            }
            let mut out = [0; 3];
            for (k, &i) in tri.iter().enumerate() {
                if new_index[i] == usize::MAX {
                    new_index[i] = old_of_new.len();
                    old_of_new.push(i);
                }
                out[k] = new_index[i];
            }
            triangles.push(out);
        }
        let nodes = old_of_new.iter().map(|&i| self.nodes[i]).collect();
        Ok((Mesh::new(nodes, triangles, None)?, old_of_new))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Gradients of the three barycentric coordinate functions of triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> &[Point; 3] {
        &self.grads[t]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let (p, q) = (self.nodes[tri[k]], self.nodes[tri[(k + 1) % 3]]);
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> Barycentric {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let total = self.areas[t];
        [
            signed_area(p, pb, pc) / total,
            signed_area(pa, p, pc) / total,
            signed_area(pa, pb, p) / total,
        ]
    }

    fn locator(&self) -> &Locator {
        self.locator.get_or_init(|| {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for p in &self.nodes {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
            let side = (self.triangles.len() as f64).sqrt().ceil().max(1.0) as usize;
            let (nx, ny) = (side, side);
            let cell = [
                ((hi[0] - lo[0]) / nx as f64).max(f64::MIN_POSITIVE),
                ((hi[1] - lo[1]) / ny as f64).max(f64::MIN_POSITIVE),
            ];
            let mut buckets = vec![Vec::new(); nx * ny];
            let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
            for (t, tri) in self.triangles.iter().enumerate() {
                let xs = tri.map(|i| self.nodes[i][0]);
                let ys = tri.map(|i| self.nodes[i][1]);
                let bx0 = clamp((xs.iter().copied().fold(f64::INFINITY, f64::min) - lo[0]) / cell[0], nx);
                let bx1 = clamp((xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo[0]) / cell[0], nx);
                let by0 = clamp((ys.iter().copied().fold(f64::INFINITY, f64::min) - lo[1]) / cell[1], ny);
                let by1 = clamp((ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo[1]) / cell[1], ny);
                for by in by0..=by1 {
                    for bx in bx0..=bx1 {
                        buckets[by * nx + bx].push(t);
                    }
                }
            }
            Locator {
                origin: lo,
                cell,
                nx,
                ny,
                buckets,
            }
        })
    }

    /// The triangle containing `p` and its barycentric coordinates, or `None`
    /// when `p` lies outside the mesh. Points on shared edges resolve to the
    /// triangle with the largest minimal coordinate.
    pub fn locate(&self, p: Point) -> Option<(usize, Barycentric)> {
        let loc = self.locator();
        let fx = (p[0] - loc.origin[0]) / loc.cell[0];
        let fy = (p[1] - loc.origin[1]) / loc.cell[1];
        if !(fx > -1e-9 && fy > -1e-9 && fx < loc.nx as f64 + 1e-9 && fy < loc.ny as f64 + 1e-9) {
            return None;
        }
        let bx = (fx.max(0.0) as usize).min(loc.nx - 1);
        let by = (fy.max(0.0) as usize).min(loc.ny - 1);
        let mut best: Option<(usize, Barycentric, f64)> = None;
        for &t in &loc.buckets[by * loc.nx + bx] {
            let bc = self.barycentric(t, p);
            let m = bc[0].min(bc[1]).min(bc[2]);
            if m >= -LOCATE_SLACK && best.as_ref().is_none_or(|b| m > b.2) {
                best = Some((t, bc, m));
            }
        }
        best.map(|(t, bc, _)| (t, bc))
    }
}

/// A piecewise-linear map `mesh -> R^n` given by its nodal values.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMap {
    mesh: Arc<Mesh>,
    codim: usize,
    values: Vec<f64>,
}

impl DiscreteMap {
    /// `values` is node-major: the value at node `i` is `values[i*n..(i+1)*n]`.
    pub fn new(mesh: Arc<Mesh>, codim: usize, values: Vec<f64>) -> Result<Self> {
        if codim == 0 {
            return Err(Error::invalid("codimension must be positive"));
        }
        if values.len() != codim * mesh.node_count() {
            return Err(Error::invalid(format!(
                "expected {} values for {} nodes and codimension {codim}, got {}",
                codim * mesh.node_count(),
                mesh.node_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("map values must be finite"));
        }
        Ok(Self { mesh, codim, values })
    }

    /// Nodal interpolant of `f`.
    pub fn from_fn(mesh: Arc<Mesh>, codim: usize, f: impl Fn(Point) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(codim * mesh.node_count());
        for &p in mesh.nodes() {
            let v = f(p);
            if v.len() != codim {
                return Err(Error::invalid("function returned the wrong number of components"));
            }
            values.extend(v);
        }
        Self::new(mesh, codim, values)
    }

    pub fn zeros(mesh: Arc<Mesh>, codim: usize) -> Self {
        assert!(codim >= 1, "codimension must be positive");
        let len = codim * mesh.node_count();
        Self {
            mesh,
            codim,
            values: vec![0.0; len],
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.codim..(node + 1) * self.codim]
    }

    /// Same mesh, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.mesh.clone(), self.codim, values)
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.codim).copied().collect()
    }

    /// The map made of components `range`.
    pub fn components(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.codim {
            return Err(Error::invalid("component range out of bounds"));
        }
        let k = range.len();
        let mut values = Vec::with_capacity(k * self.mesh.node_count());
        for i in 0..self.mesh.node_count() {
            values.extend_from_slice(&self.value(i)[range.clone()]);
        }
        Self::new(self.mesh.clone(), k, values)
    }

    /// `x -> N u(x)` for an `m x n` matrix `N`.
    pub fn left_multiply(&self, n: &DMatrix<f64>) -> Result<Self> {
        if n.ncols() != self.codim {
            return Err(Error::invalid("matrix does not match the codimension"));
        }
        let m = n.nrows();
        let mut values = vec![0.0; m * self.mesh.node_count()];
        for i in 0..self.mesh.node_count() {
            let v = self.value(i);
            for r in 0..m {
                values[i * m + r] = (0..self.codim).map(|c| n[(r, c)] * v[c]).sum();
            }
        }
        Self::new(self.mesh.clone(), m, values)
    }

    /// Writes the constant gradient on triangle `t` as two columns.
    pub fn cell_columns(&self, t: usize, z1: &mut [f64], z2: &mut [f64]) {
        let g = self.mesh.basis_gradients(t);
        let tri = self.mesh.triangles()[t];
        z1.fill(0.0);
        z2.fill(0.0);
        for k in 0..3 {
            let v = self.value(tri[k]);
            for a in 0..self.codim {
                z1[a] += v[a] * g[k][0];
                z2[a] += v[a] * g[k][1];
            }
        }
    }

    pub fn gradient(&self, t: usize) -> GradientMatrix {
        let mut z1 = vec![0.0; self.codim];
        let mut z2 = vec![0.0; self.codim];
        self.cell_columns(t, &mut z1, &mut z2);
        GradientMatrix::from_columns(&z1, &z2).expect("finite nodal values give finite gradients")
    }

    /// Largest `|det(Du^{ab})|` over triangles and row pairs.
    pub fn max_abs_minor(&self) -> f64 {
        let mut z1 = vec![0.0; self.codim];
        let mut z2 = vec![0.0; self.codim];
        let mut m: f64 = 0.0;
        for t in 0..self.mesh.triangle_count() {
            self.cell_columns(t, &mut z1, &mut z2);
            m = m.max(kernel::max_abs_minor(&z1, &z2));
        }
        m
    }

    /// Largest Frobenius norm of the cell gradients.
    pub fn lipschitz_estimate(&self) -> f64 {
        let mut z1 = vec![0.0; self.codim];
        let mut z2 = vec![0.0; self.codim];
        let mut m: f64 = 0.0;
        for t in 0..self.mesh.triangle_count() {
            self.cell_columns(t, &mut z1, &mut z2);
            let s: f64 = z1.iter().chain(z2.iter()).map(|v| v * v).sum();
            m = m.max(s.sqrt());
        }
        m
    }

    /// Value of the piecewise-linear map at an arbitrary point.
    pub fn interpolate(&self, p: Point) -> Option<Vec<f64>> {
        let (t, bc) = self.mesh.locate(p)?;
        let tri = self.mesh.triangles()[t];
        let mut out = vec![0.0; self.codim];
        for k in 0..3 {
            for (o, v) in out.iter_mut().zip(self.value(tri[k])) {
                *o += bc[k] * v;
            }
        }
        Some(out)
    }

    /// The map on the refined mesh (linear interpolation at edge midpoints).
    pub fn prolongate(&self, fine: Arc<Mesh>, parents: &[[usize; 2]]) -> Result<Self> {
        let n = self.mesh.node_count();
        if fine.node_count() != n + parents.len() {
            return Err(Error::invalid("refined mesh does not match the parent list"));
        }
        let mut values = self.values.clone();
        for &[a, b] in parents {
            for c in 0..self.codim {
                values.push(0.5 * (self.value(a)[c] + self.value(b)[c]));
            }
        }
        Self::new(fine, self.codim, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_mesh_counts_and_area() {
        for r in 1..6 {
            let m = Mesh::disc(r).unwrap();
            assert_eq!(m.node_count(), 1 + 3 * r * (r + 1));
            assert_eq!(m.triangle_count(), 6 * r * r);
            assert_eq!(m.boundary_nodes().len(), 6 * r);
            // Area of the inscribed 6R-gon.
            let k = (6 * r) as f64;
            let polygon = 0.5 * k * (2.0 * PI / k).sin();
            assert!((m.total_area() - polygon).abs() < 1e-12);
        }
    }

    #[test]
    fn square_mesh_layout() {
        let m = Mesh::unit_square(4).unwrap();
        assert_eq!(m.node_count(), 25);
        assert_eq!(m.triangle_count(), 32);
        assert_eq!(m.nodes()[7], [0.5, 0.25]);
        assert_eq!(m.boundary_nodes().len(), 16);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
        assert!((m.mesh_size() - 0.25 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_flipped_and_inconsistent_meshes() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(Mesh::new(nodes.clone(), vec![[0, 2, 1]], None), Err(Error::InvalidMesh(_))));
        assert!(matches!(
            Mesh::new(nodes.clone(), vec![[0, 1, 2]], Some(vec![true, false, true])),
            Err(Error::InvalidMesh(_))
        ));
        assert!(matches!(
            Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]], None),
            Err(Error::InvalidMesh(_))
        ));
        let four = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!(Mesh::new(four.clone(), vec![[0, 1, 2], [1, 3, 2]], None).is_ok());
        assert!(matches!(Mesh::new(four, vec![[0, 1, 2], [1, 2, 3]], None), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn basis_gradients_reproduce_linear_functions() {
        let mesh = Arc::new(Mesh::disc(3).unwrap());
        let u = DiscreteMap::from_fn(mesh.clone(), 2, |p| vec![2.0 * p[0] - p[1] + 1.0, 0.5 * p[1]]).unwrap();
        for t in 0..mesh.triangle_count() {
            let g = u.gradient(t);
            let expect = GradientMatrix::from_rows(&[[2.0, -1.0], [0.0, 0.5]]).unwrap();
            assert!((g.matrix() - expect.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn refinement_quadruples_and_keeps_area() {
        let m = Mesh::disc(2).unwrap();
        let (f, parents) = m.refine();
        assert_eq!(f.triangle_count(), 4 * m.triangle_count());
        assert_eq!(f.node_count(), m.node_count() + parents.len());
        assert!((f.total_area() - m.total_area()).abs() < 1e-13);
        assert_eq!(f.boundary_nodes().len(), 2 * m.boundary_nodes().len());
        let u = DiscreteMap::from_fn(Arc::new(m), 1, |p| vec![p[0] * p[0]]).unwrap();
        let v = u.prolongate(Arc::new(f), &parents).unwrap();
        for (k, &[a, b]) in parents.iter().enumerate() {
            let i = u.mesh().node_count() + k;
            assert_eq!(v.value(i)[0], 0.5 * (u.value(a)[0] + u.value(b)[0]));
        }
    }

    #[test]
    fn locate_and_interpolate() {
        let mesh = Arc::new(Mesh::disc(4).unwrap());
        let u = DiscreteMap::from_fn(mesh.clone(), 1, |p| vec![3.0 * p[0] - 2.0 * p[1]]).unwrap();
        for &p in &[[0.1, 0.2], [-0.5, 0.3], [0.0, 0.0], [0.7, -0.1], [1.0, 0.0]] {
            let v = u.interpolate(p).unwrap()[0];
            assert!((v - (3.0 * p[0] - 2.0 * p[1])).abs() < 1e-12, "{p:?}");
        }
        assert!(mesh.locate([1.2, 0.0]).is_none());
        assert!(mesh.locate([0.0, 1.0]).is_some());
    }

    #[test]
    fn with_nodes_detects_folds() {
        let mesh = Mesh::unit_square(2).unwrap();
        let mut nodes = mesh.nodes().to_vec();
        nodes[4] = [2.0, 2.0];
        assert!(matches!(mesh.with_nodes(nodes), Err(Error::NotInjective { .. })));
    }

    #[test]
    fn submesh_keeps_selected_triangles() {
        let mesh = Mesh::unit_square(4).unwrap();
        let (sub, map) = mesh.submesh(|t| mesh.centroid(t)[0] < 0.5).unwrap();
        assert_eq!(sub.triangle_count(), 16);
        assert!((sub.total_area() - 0.5).abs() < 1e-14);
        for (new, &old) in map.iter().enumerate() {
            assert_eq!(sub.nodes()[new], mesh.nodes()[old]);
        }
    }
}
