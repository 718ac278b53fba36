//! Seeded scan reports shared by the identity suite and the inequality scans.

use std::collections::BTreeMap;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SCAN_REPORT_SCHEMA: &str = "minsurf.scan-report/v1";

/// At most this many violation records are kept; the count is always exact.
pub const MAX_VIOLATION_RECORDS: usize = 64;
pub const MAX_EXCLUDED_RECORDS: usize = 16;

/// Samples are evaluated in parallel chunks of this size and merged in index order.
const CHUNK: u64 = 1 << 14;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub checked: u64,
    pub skipped: u64,
    pub violations: u64,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl ItemStats {
    pub fn record(&mut self, value: f64, violated: bool) {
        self.checked += 1;
        if violated {
            self.violations += 1;
        }
        // NaN compares false, so it would be silently dropped; keep it visible.
        let v = if value.is_nan() { f64::INFINITY } else { value };
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
    }

    pub fn skip(&mut self) {
        self.skipped += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub item: String,
    pub index: u64,
    /// Named input matrices, row-major.
    pub inputs: BTreeMap<String, Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRecord {
    pub index: u64,
    pub reason: String,
}

/// Fixed-bin histogram of a ratio statistic, plot-ready via [`crate::io::histogram_csv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, v: f64) {
        if !(v >= self.lo) {
            self.underflow += 1;
        } else if v >= self.hi {
            self.overflow += 1;
        } else {
            let bins = self.counts.len();
            let k = (((v - self.lo) / (self.hi - self.lo)) * bins as f64) as usize;
            self.counts[k.min(bins - 1)] += 1;
        }
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * k as f64, self.lo + w * (k + 1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema: String,
    pub kind: String,
    pub seed: u64,
    pub samples: u64,
    pub evaluated: u64,
    pub excluded: u64,
    pub config: BTreeMap<String, serde_json::Value>,
    pub constants: BTreeMap<String, f64>,
    pub items: BTreeMap<String, ItemStats>,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
    pub excluded_records: Vec<ExcludedRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata: BTreeMap<String, ScanReport>,
    /// Intermediate runs of a parameter search. Their violations are part of
    /// the search and do not count against the report.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub levels: BTreeMap<String, ScanReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
    /// Kept out of the serialized form so report files stay byte-identical
    /// across reruns.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ScanReport {
    pub fn new(kind: &str, seed: u64, samples: u64) -> Self {
        Self {
            schema: SCAN_REPORT_SCHEMA.to_string(),
            kind: kind.to_string(),
            seed,
            samples,
            evaluated: 0,
            excluded: 0,
            config: BTreeMap::new(),
            constants: BTreeMap::new(),
            items: BTreeMap::new(),
            violation_count: 0,
            violations: Vec::new(),
            excluded_records: Vec::new(),
            strata: BTreeMap::new(),
            levels: BTreeMap::new(),
            histogram: None,
            wall_time: Duration::ZERO,
        }
    }

    pub fn with_config(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn set_constant(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.constants.insert(key.to_string(), value);
        }
    }

    pub fn item_mut(&mut self, key: &str) -> &mut ItemStats {
        self.items.entry(key.to_string()).or_default()
    }

    pub fn push_violation(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < MAX_VIOLATION_RECORDS {
            self.violations.push(v);
        }
    }

    pub fn push_excluded(&mut self, index: u64, reason: impl Into<String>) {
        self.excluded += 1;
        if self.excluded_records.len() < MAX_EXCLUDED_RECORDS {
            self.excluded_records.push(ExcludedRecord {
                index,
                reason: reason.into(),
            });
        }
    }

    /// True when neither this report nor any stratum recorded a violation.
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0 && self.strata.values().all(|s| s.is_clean())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Evaluates `f(i)` for `i in 0..count` in parallel and feeds the results to
/// `sink` in index order, so reductions are independent of the thread count.
pub fn for_each_sample<T, F, S>(count: u64, f: F, mut sink: S)
where
    T: Send,
    F: Fn(u64) -> T + Sync,
    S: FnMut(u64, T),
{
    let mut start = 0;
    while start < count {
        let end = (start + CHUNK).min(count);
        let out: Vec<T> = (start..end).into_par_iter().map(&f).collect();
        for (k, t) in out.into_iter().enumerate() {
            sink(start + k as u64, t);
        }
        start = end;
    }
}

/// Row-major entries of a matrix, for violation records.
pub fn row_major<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
