//! Absolute-plus-relative comparisons used throughout the crate.

/// Default absolute part of a comparison threshold.
pub const ABS_TOL: f64 = 1e-12;
/// Default relative part of a comparison threshold.
pub const REL_TOL: f64 = 1e-9;

/// Threshold `abs + rel * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: ABS_TOL,
            rel: REL_TOL,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    /// Same value for the absolute and relative part.
    pub fn uniform(tol: f64) -> Self {
        Self { abs: tol, rel: tol }
    }

    pub fn threshold(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.threshold(a.abs().max(b.abs()))
    }
}

/// Normalised deviation `|d| / (1 + scale)`; a value `<= tol` means the pair
/// agrees under `Tolerance::uniform(tol)`.
pub fn scaled_deviation(diff_norm: f64, scale: f64) -> f64 {
    diff_norm / (1.0 + scale.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_mixes_both_parts() {
        let t = Tolerance::new(1e-12, 1e-9);
        assert!(t.close(1.0, 1.0 + 5e-10));
        assert!(!t.close(1.0, 1.0 + 5e-9));
        assert!(t.close(0.0, 5e-13));
    }
}
