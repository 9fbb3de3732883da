//! Verification report types shared by every check family.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::matrix::MatrixOp;

pub type Inputs = BTreeMap<String, Value>;

/// One identity, quantified over all its cases; `residual` is the worst case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub identity: String,
    pub residual: f64,
    pub tolerance: f64,
    /// `residual <= tolerance`.
    pub pass: bool,
    /// A deliberately perturbed identity; it is expected to fail.
    #[serde(default)]
    pub negative_control: bool,
    pub cases: usize,
    pub inputs: Inputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    pub fn new(
        check: impl Into<String>,
        identity: impl Into<String>,
        residual: f64,
        tolerance: f64,
        cases: usize,
    ) -> Self {
        CheckResult {
            check: check.into(),
            identity: identity.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            negative_control: false,
            cases,
            inputs: Inputs::new(),
            note: None,
        }
    }

    pub fn control(mut self) -> Self {
        self.negative_control = true;
        self
    }

    pub fn input(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.inputs.insert(key.to_string(), value.into());
        self
    }

    pub fn inputs(mut self, inputs: &Inputs) -> Self {
        self.inputs.extend(inputs.clone());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Genuine checks must pass; negative controls must fail.
    pub fn ok(&self) -> bool {
        self.pass != self.negative_control
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub family: String,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(family: impl Into<String>) -> Self {
        VerificationReport {
            family: family.into(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
        self.notes.extend(other.notes);
    }

    pub fn ok(&self) -> bool {
        self.checks.iter().all(CheckResult::ok)
    }

    pub fn genuine(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.negative_control)
    }

    pub fn controls(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.negative_control)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.ok())
    }

    /// Worst residual over genuine checks.
    pub fn max_residual(&self) -> f64 {
        self.genuine().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// Running maximum of residuals with a case counter.
#[derive(Debug, Clone, Copy, Default)]
pub struct Worst {
    pub residual: f64,
    pub cases: usize,
}

impl Worst {
    pub fn record(&mut self, residual: f64) {
        // NaN must surface as a failure.
        if residual.is_nan() || residual > self.residual {
            self.residual = residual;
        }
        self.cases += 1;
    }

    pub fn record_matrices(&mut self, lhs: &MatrixOp, rhs: &MatrixOp) {
        let r = lhs
            .residual(rhs)
            .expect("both sides materialized at the same truncation");
        self.record(r);
    }

    pub fn merge(&mut self, other: Worst) {
        let cases = self.cases + other.cases;
        self.record(other.residual);
        self.cases = cases;
    }

    pub fn finish(
        self,
        check: impl Into<String>,
        identity: impl Into<String>,
        tolerance: f64,
    ) -> CheckResult {
        CheckResult::new(check, identity, self.residual, tolerance, self.cases)
    }
}

/// Amount by which `lhs ≤ rhs` is violated, normalized by `max(1, |rhs|)`.
pub fn excess(lhs: f64, rhs: f64) -> f64 {
    if lhs.is_nan() || rhs.is_nan() {
        return f64::NAN;
    }
    (lhs - rhs).max(0.0) / 1f64.max(rhs.abs())
}
