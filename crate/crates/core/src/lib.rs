//! Numerical workbench for the two-dimensional minimal surface system.
//!
//! The crate is organised around five pieces:
//!
//! * [`matcore`]: exact small-matrix algebra of the graph area integrand
//!   (area, its gradient, the inner stress `B`, cofactors, 2x2 SVD).
//! * [`graphsolve`]: piecewise-linear meshes, the discrete area energy and a
//!   safeguarded descent solver producing outer-critical maps, plus weak
//!   residuals of the outer and inner variation equations.
//! * [`beltrami`]: Beltrami coefficients from the induced metric, a Neumann
//!   series solver for the Beltrami equation, planar map inversion and the
//!   harmonic-after-quasiconformal factorization of a map.
//! * [`ineqlab`]: seeded sampling scans that estimate the constants in the
//!   rank-one convexity and quasiconformal stress inequalities.
//! * [`io`]: versioned JSON schemas and CSV dumps shared with the CLI.

pub mod beltrami;
pub mod error;
pub mod fem;
pub mod graphsolve;
pub mod ineqlab;
pub mod io;
pub mod matcore;
pub mod mesh;
pub mod report;
pub mod rng;
pub mod sparse;
pub mod tolerance;

pub use error::{Error, Result};
pub use matcore::{GradientMatrix, InducedMetric, InnerStress, Mat2};
pub use mesh::{DiscreteMap, Mesh};
pub use report::ScanReport;
