//! Randomized checks of the convexity and inner-stress inequalities, with
//! empirical estimates of their constants.
//!
//! Every scan draws sample `i` from its own generator (see [`crate::rng`]), so
//! a report depends only on its configuration and seed, and any violation can
//! be re-evaluated from its index with [`replay`].

mod convexity;
mod sample;
mod sptnull;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use convexity::{
    convexity_pairs_report, convexity_rank_one_scan, convexity_ratio, hessian_margin, hessian_rank_one_scan,
    small_det_convexity_scan, small_det_level, HessianCheck,
};
pub use sample::{qc_pair_sample, rank_one_sample, small_det_sample};
pub use sptnull::{
    orthogonal_split, orthogonal_split_scan, reduction_to_m0_check, sptnull_scan, ReductionCheck, SptnullTerms,
};

use crate::error::{Error, Result};
use crate::report::{ScanReport, Violation};

/// Pairs closer than this, relative to `max(|X|, |Y|)`, are left out of ratio
/// statistics and logged as excluded.
pub const PAIR_EXCLUSION: f64 = 1e-9;

/// `{10^k : k = -2..=6}`.
pub fn default_c1_grid() -> Vec<f64> {
    (-2..=6).map(|k| 10f64.powi(k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    /// Bound on `|X|` for the convexity scans.
    pub lambda_bound: f64,
    /// Quasiconformality constant, `|X|^2 <= K det X`.
    pub k: f64,
    /// Lower bound on `det X`.
    pub eps3: f64,
    /// Bound on `|M|`.
    pub l: f64,
    pub n: usize,
    pub samples: u64,
    pub seed: u64,
    /// Slack allowed before a margin counts as a violation.
    pub tol: f64,
    /// Bound on `|X|` for the quasiconformal pairs.
    pub cap: f64,
    pub c1_grid: Vec<f64>,
    /// Geometric bisection steps after the decade search in the small
    /// determinant scan.
    pub bisection_steps: u32,
    /// Margin `lambda` for the small determinant scan; estimated from a
    /// rank-one scan when absent.
    pub convexity_margin: Option<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            lambda_bound: 2.0,
            k: 4.0,
            eps3: 0.5,
            l: 1.0,
            n: 2,
            samples: 100_000,
            seed: 0,
            tol: 1e-6,
            cap: 10.0,
            c1_grid: default_c1_grid(),
            bisection_steps: 8,
            convexity_margin: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        positive("lambda bound", self.lambda_bound)?;
        positive("K", self.k)?;
        positive("eps3", self.eps3)?;
        positive("L", self.l)?;
        positive("tol", self.tol)?;
        positive("cap", self.cap)?;
        if self.k < 2.0 {
            return Err(Error::invalid(format!("K must be at least 2, got {}", self.k)));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("codimension must be at least 2, got {}", self.n)));
        }
        if self.samples == 0 {
            return Err(Error::invalid("scans need at least one sample"));
        }
        if self.c1_grid.is_empty() {
            return Err(Error::invalid("C1 grid is empty"));
        }
        for &c in &self.c1_grid {
            positive("C1 grid entry", c)?;
        }
        if self.bisection_steps > 60 {
            return Err(Error::invalid("at most 60 bisection steps"));
        }
        if let Some(m) = self.convexity_margin {
            positive("convexity margin", m)?;
        }
        Ok(())
    }

    /// Checks the extra feasibility condition of the quasiconformal sampler.
    pub fn validate_qc(&self) -> Result<()> {
        self.validate()?;
        sample::QcRange::new(self.k, self.eps3, self.cap).map(|_| ())
    }

    pub(crate) fn echo(&self, report: ScanReport) -> ScanReport {
        report
            .with_config("lambda_bound", self.lambda_bound)
            .with_config("k", self.k)
            .with_config("eps3", self.eps3)
            .with_config("l", self.l)
            .with_config("n", self.n)
            .with_config("tol", self.tol)
            .with_config("cap", self.cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanKind {
    Rank1Convexity,
    Rank1Hessian,
    SmallDet,
    Sptnull,
    OrthogonalSplit,
}

impl ScanKind {
    pub const ALL: [ScanKind; 5] = [
        ScanKind::Rank1Convexity,
        ScanKind::Rank1Hessian,
        ScanKind::SmallDet,
        ScanKind::Sptnull,
        ScanKind::OrthogonalSplit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScanKind::Rank1Convexity => "rank1-convexity",
            ScanKind::Rank1Hessian => "rank1-hessian",
            ScanKind::SmallDet => "small-det",
            ScanKind::Sptnull => "sptnull",
            ScanKind::OrthogonalSplit => "orthogonal-split",
        }
    }
}

impl fmt::Display for ScanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScanKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scan kind '{s}'")))
    }
}

/// Runs one scan. The small determinant scan takes its margin from
/// `cfg.convexity_margin`, or from a preceding rank-one scan with the same
/// configuration.
pub fn run_scan(kind: ScanKind, cfg: &ScanConfig) -> Result<ScanReport> {
    match kind {
        ScanKind::Rank1Convexity => convexity_rank_one_scan(cfg),
        ScanKind::Rank1Hessian => hessian_rank_one_scan(cfg),
        ScanKind::SmallDet => {
            let lambda = match cfg.convexity_margin {
                Some(l) => l,
                None => {
                    let r = convexity_rank_one_scan(cfg)?;
                    r.constants
                        .get("lambda_est")
                        .copied()
                        .ok_or_else(|| Error::Degenerate("rank-one scan produced no margin".into()))?
                }
            };
            small_det_convexity_scan(cfg, lambda)
        }
        ScanKind::Sptnull => sptnull_scan(cfg, &cfg.c1_grid),
        ScanKind::OrthogonalSplit => orthogonal_split_scan(cfg.samples, cfg.seed, 1e-12),
    }
}

/// Re-evaluates the sample behind a violation record from `(cfg.seed,
/// v.index)` and reports whether it is still a violation with bitwise equal
/// inputs.
pub fn replay(cfg: &ScanConfig, v: &Violation) -> Result<bool> {
    match v.item.as_str() {
        convexity::RANK_ONE_ITEM => convexity::replay_rank_one(cfg, v),
        convexity::HESSIAN_ITEM => convexity::replay_hessian(cfg, v),
        convexity::SMALL_DET_ITEM => convexity::replay_small_det(cfg, v),
        item if item.starts_with(sptnull::ITEM_PREFIX) => sptnull::replay(cfg, v),
        other => Err(Error::invalid(format!("no replay for item '{other}'"))),
    }
}
