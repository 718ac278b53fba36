//! Versioned JSON files for meshes, maps and grids, CSV dumps, and atomic
//! file writes.
//!
//! Every JSON document carries a `schema` tag; readers reject unknown tags.
//!
//! | schema | fields |
//! |---|---|
//! | `minsurf.mesh/v1` | `nodes: [[x, y]]`, `triangles: [[i, j, k]]` (counter-clockwise), `boundary: [bool]` |
//! | `minsurf.discrete-map/v1` | `mesh` (as above, without its own tag), `codim`, `values` node-major |
//! | `minsurf.complex-grid/v1` | `n`, `half_width`, `spacing`, `values: [[re, im]]` row-major, node `(i, j)` at `j n + i` |
//! | `minsurf.scan-report/v1` | see [`crate::report::ScanReport`] |

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::ComplexGrid;
use crate::error::{Error, Result};
use crate::graphsolve::BoundaryData;
use crate::mesh::{DiscreteMap, Mesh, Point};
use crate::report::Histogram;

pub const MESH_SCHEMA: &str = "minsurf.mesh/v1";
pub const MAP_SCHEMA: &str = "minsurf.discrete-map/v1";
pub const GRID_SCHEMA: &str = "minsurf.complex-grid/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshData {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
}

impl MeshData {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        Self {
            nodes: mesh.nodes().to_vec(),
            triangles: mesh.triangles().to_vec(),
            boundary: mesh.boundary_flags().to_vec(),
        }
    }

    pub fn into_mesh(self) -> Result<Mesh> {
        Mesh::new(self.nodes, self.triangles, Some(self.boundary))
    }
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    schema: String,
    #[serde(flatten)]
    mesh: MeshData,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    schema: String,
    mesh: MeshData,
    codim: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    schema: String,
    n: usize,
    half_width: f64,
    spacing: f64,
    values: Vec<[f64; 2]>,
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Schema(format!("expected schema '{expected}', found '{found}'")))
    }
}

/// Reads the `schema` tag without interpreting the rest of the document.
pub fn schema_of(json: &str) -> Result<String> {
    #[derive(Deserialize)]
    struct Tag {
        schema: String,
    }
    let tag: Tag = serde_json::from_str(json).map_err(|e| Error::Schema(format!("missing schema tag: {e}")))?;
    Ok(tag.schema)
}

pub fn mesh_to_json(mesh: &Mesh) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MeshFile {
        schema: MESH_SCHEMA.into(),
        mesh: MeshData::from_mesh(mesh),
    })?)
}

pub fn mesh_from_json(json: &str) -> Result<Mesh> {
    check_schema(&schema_of(json)?, MESH_SCHEMA)?;
    let f: MeshFile = serde_json::from_str(json)?;
    f.mesh.into_mesh()
}

pub fn map_to_json(u: &DiscreteMap) -> Result<String> {
    Ok(serde_json::to_string_pretty(&MapFile {
        schema: MAP_SCHEMA.into(),
        mesh: MeshData::from_mesh(u.mesh()),
        codim: u.codim(),
        values: u.values().to_vec(),
    })?)
}

pub fn map_from_json(json: &str) -> Result<DiscreteMap> {
    check_schema(&schema_of(json)?, MAP_SCHEMA)?;
    let f: MapFile = serde_json::from_str(json)?;
    DiscreteMap::new(Arc::new(f.mesh.into_mesh()?), f.codim, f.values)
}

pub fn grid_to_json(g: &ComplexGrid) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GridFile {
        schema: GRID_SCHEMA.into(),
        n: g.size(),
        half_width: g.half_width(),
        spacing: g.spacing(),
        values: g.values().iter().map(|z| [z.re, z.im]).collect(),
    })?)
}

pub fn grid_from_json(json: &str) -> Result<ComplexGrid> {
    check_schema(&schema_of(json)?, GRID_SCHEMA)?;
    let f: GridFile = serde_json::from_str(json)?;
    let g = ComplexGrid::new(f.n, f.half_width, f.values.iter().map(|v| Complex64::new(v[0], v[1])).collect())?;
    if (g.spacing() - f.spacing).abs() > 1e-12 * g.spacing() {
        return Err(Error::Schema(format!(
            "spacing {} does not match 2 L / (N - 1) = {}",
            f.spacing,
            g.spacing()
        )));
    }
    Ok(g)
}

/// `node,x,y,u1,...,un`, one row per node.
pub fn map_csv(u: &DiscreteMap) -> String {
    let mut out = String::from("node,x,y");
    for c in 1..=u.codim() {
        let _ = write!(out, ",u{c}");
    }
    out.push('\n');
    for (i, p) in u.mesh().nodes().iter().enumerate() {
        let _ = write!(out, "{i},{},{}", p[0], p[1]);
        for v in u.value(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `i,j,x,y,re,im`, row-major.
pub fn grid_csv(g: &ComplexGrid) -> String {
    let mut out = String::from("i,j,x,y,re,im\n");
    let n = g.size();
    for (k, z) in g.values().iter().enumerate() {
        let p = g.point(k);
        let _ = writeln!(out, "{},{},{},{},{},{}", k % n, k / n, p.re, p.im, z.re, z.im);
    }
    out
}

/// `bin_lo,bin_hi,count`; underflow and overflow rows use infinite edges.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    let _ = writeln!(out, "-inf,{},{}", h.lo, h.underflow);
    for (k, c) in h.counts.iter().enumerate() {
        let (a, b) = h.bin_edges(k);
        let _ = writeln!(out, "{a},{b},{c}");
    }
    let _ = writeln!(out, "{},inf,{}", h.hi, h.overflow);
    out
}

/// Reads boundary values from `node,u1,...,un` rows (a header line is
/// optional). Every boundary node must appear exactly once.
pub fn boundary_from_csv(mesh: &Mesh, text: &str) -> Result<BoundaryData> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Ok(node) = fields[0].parse::<usize>() else {
            if rows.is_empty() && ln == 0 {
                continue;
            }
            return Err(Error::invalid(format!("line {}: bad node index '{}'", ln + 1, fields[0])));
        };
        let vals = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("line {}: {e}", ln + 1)))?;
        rows.push((node, vals));
    }
    let codim = rows.first().map(|r| r.1.len()).unwrap_or(0);
    if codim == 0 {
        return Err(Error::invalid("boundary file has no values"));
    }
    let mut values = vec![None; mesh.node_count()];
    for (node, vals) in rows {
        if vals.len() != codim {
            return Err(Error::invalid(format!("node {node}: expected {codim} values")));
        }
        if node >= mesh.node_count() || !mesh.is_boundary(node) {
            return Err(Error::invalid(format!("node {node} is not a boundary node")));
        }
        if values[node].replace(vals).is_some() {
            return Err(Error::invalid(format!("node {node} appears twice")));
        }
    }
    let mut flat = Vec::new();
    for i in mesh.boundary_nodes() {
        let v = values[i]
            .take()
            .ok_or_else(|| Error::invalid(format!("boundary node {i} has no value")))?;
        flat.extend(v);
    }
    BoundaryData::new(mesh, codim, flat)
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
