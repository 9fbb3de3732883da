//! Floating-point comparison policy shared by every module.

use serde::{Deserialize, Serialize};

pub const DEFAULT_REL_TOL: f64 = 1e-12;
pub const DEFAULT_ABS_TOL: f64 = 1e-14;

/// Relative tolerance with an absolute floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: DEFAULT_REL_TOL,
            abs: DEFAULT_ABS_TOL,
        }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }

    fn slack(&self, scale: f64) -> f64 {
        (self.rel * scale.abs()).max(self.abs)
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.slack(a.abs().max(b.abs()))
    }

    /// `a <= b` up to the tolerance.
    pub fn le(&self, a: f64, b: f64) -> bool {
        a <= b + self.slack(a.abs().max(b.abs()))
    }
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn normalized_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}
