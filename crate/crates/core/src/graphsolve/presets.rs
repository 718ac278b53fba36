//! Named analytic boundary data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    /// `x -> Z x + b` with `Z` given by its rows.
    Affine { rows: Vec<[f64; 2]>, offset: Vec<f64> },
    /// `z -> scale * (Re z^2, Im z^2)`.
    Holomorphic { scale: f64 },
    /// Scalar `x -> scale * (x1^2 - x2^2)`.
    Saddle { scale: f64 },
    /// Scalar `x -> scale * sin(pi x1) sinh(pi x2) / sinh(pi)`.
    Sine { scale: f64 },
}

impl Preset {
    /// Looks up a preset by name; `scale` multiplies the data.
    pub fn named(name: &str, scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::invalid("preset scale must be finite"));
        }
        Ok(match name {
            "affine" => Preset::Affine {
                rows: vec![[scale, 0.5 * scale], [-0.25 * scale, scale]],
                offset: vec![0.0, 0.0],
            },
            "z2" | "holomorphic" => Preset::Holomorphic { scale },
            "saddle" => Preset::Saddle { scale },
            "sine" => Preset::Sine { scale },
            other => return Err(Error::invalid(format!("unknown boundary preset '{other}'"))),
        })
    }

    pub fn codim(&self) -> usize {
        match self {
            Preset::Affine { rows, .. } => rows.len(),
            Preset::Holomorphic { .. } => 2,
            Preset::Saddle { .. } | Preset::Sine { .. } => 1,
        }
    }

    pub fn eval(&self, p: Point) -> Vec<f64> {
        let [x, y] = p;
        match self {
            Preset::Affine { rows, offset } => rows
                .iter()
                .enumerate()
                .map(|(a, r)| r[0] * x + r[1] * y + offset.get(a).copied().unwrap_or(0.0))
                .collect(),
            Preset::Holomorphic { scale } => vec![scale * (x * x - y * y), scale * 2.0 * x * y],
            Preset::Saddle { scale } => vec![scale * (x * x - y * y)],
            Preset::Sine { scale } => {
                let pi = std::f64::consts::PI;
                vec![scale * (pi * x).sin() * (pi * y).sinh() / pi.sinh()]
            }
        }
    }
}
