//! Statistical toolkit and the named checks binding the simulators to
//! closed-form laws.

pub mod checks;
pub mod stats;

use std::fmt;

pub use checks::*;

/// How a row's estimate is judged against its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparison {
    /// `|estimate − target| ≤ tolerance`.
    Within,
    /// `estimate > target` (p-values, ratios).
    Above,
    /// `estimate ≤ target`.
    AtMost,
}

/// One line of a check report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub label: String,
    pub target: f64,
    /// Where the target comes from.
    pub source: String,
    pub estimate: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    /// Informational rows do not affect the check's verdict.
    pub gating: bool,
}

impl CheckRow {
    pub fn within(label: impl Into<String>, source: impl Into<String>, target: f64, estimate: f64, std_error: f64, tolerance: f64) -> Self {
        CheckRow {
            label: label.into(),
            target,
            source: source.into(),
            estimate,
            std_error,
            tolerance,
            comparison: Comparison::Within,
            pass: (estimate - target).abs() <= tolerance,
            gating: true,
        }
    }

    pub fn above(label: impl Into<String>, source: impl Into<String>, threshold: f64, estimate: f64) -> Self {
        CheckRow {
            label: label.into(),
            target: threshold,
            source: source.into(),
            estimate,
            std_error: 0.0,
            tolerance: 0.0,
            comparison: Comparison::Above,
            pass: estimate > threshold,
            gating: true,
        }
    }

    pub fn at_most(label: impl Into<String>, source: impl Into<String>, bound: f64, estimate: f64) -> Self {
        CheckRow {
            label: label.into(),
            target: bound,
            source: source.into(),
            estimate,
            std_error: 0.0,
            tolerance: 0.0,
            comparison: Comparison::AtMost,
            pass: estimate <= bound,
            gating: true,
        }
    }

    pub fn informational(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = se;
        self
    }
}

/// Result of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub rows: Vec<CheckRow>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn row(&mut self, row: CheckRow) -> &mut Self {
        self.rows.push(row);
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().filter(|r| r.gating).all(|r| r.pass)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", if self.pass() { "PASS" } else { "FAIL" }, self.name)?;
        for r in &self.rows {
            let verdict = match (r.pass, r.gating) {
                (true, true) => "ok  ",
                (false, true) => "FAIL",
                (_, false) => "info",
            };
            let rel = match r.comparison {
                Comparison::Within => format!("target {:.6} ± {:.2e}", r.target, r.tolerance),
                Comparison::Above => format!("needs > {:.4}", r.target),
                Comparison::AtMost => format!("needs ≤ {:.3e}", r.target),
            };
            write!(f, "  {verdict} {:<40} estimate {:.6}", r.label, r.estimate)?;
            if r.std_error > 0.0 {
                write!(f, " (se {:.2e})", r.std_error)?;
            }
            writeln!(f, "  {rel}  [{}]", r.source)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}
