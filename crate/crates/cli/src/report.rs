use std::fmt;

use serde::Serialize;

/// How a command ended, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or input files (exit 2).
    Usage(String),
    /// The computation ran but a check or solve failed (exit 1).
    Check(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Check(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Check(m) => f.write_str(m),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs` when the check compares a ratio with a target.
    pub ratio: Option<f64>,
    /// Absent for values that are reported but not asserted.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// `|lhs - rhs| <= tol`.
    pub fn close(name: &str, lhs: f64, rhs: f64, tol: f64) -> Check {
        Check { name: name.into(), lhs, rhs, ratio: None, tolerance: Some(tol), pass: (lhs - rhs).abs() <= tol }
    }

    /// `lhs <= rhs`, with the tolerance recording the bound.
    pub fn at_most(name: &str, lhs: f64, rhs: f64) -> Check {
        Check { name: name.into(), lhs, rhs, ratio: Some(lhs / rhs), tolerance: Some(rhs), pass: lhs <= rhs }
    }

    /// `lhs >= rhs`.
    pub fn at_least(name: &str, lhs: f64, rhs: f64) -> Check {
        Check { name: name.into(), lhs, rhs, ratio: Some(lhs / rhs), tolerance: Some(rhs), pass: lhs >= rhs }
    }

    /// `|lhs / rhs - 1| <= rel`.
    pub fn relative(name: &str, lhs: f64, rhs: f64, rel: f64) -> Check {
        let ratio = lhs / rhs;
        Check { name: name.into(), lhs, rhs, ratio: Some(ratio), tolerance: Some(rel), pass: (ratio - 1.0).abs() <= rel }
    }

    pub fn info(name: &str, lhs: f64, rhs: f64) -> Check {
        let ratio = if rhs != 0.0 { Some(lhs / rhs) } else { None };
        Check { name: name.into(), lhs, rhs, ratio, tolerance: None, pass: true }
    }

    pub fn failed(name: &str, reason: &str) -> Check {
        Check { name: format!("{name}: {reason}"), lhs: f64::NAN, rhs: f64::NAN, ratio: None, tolerance: None, pass: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suite: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(suite: &str, checks: Vec<Check>) -> Report {
        Report { suite: suite.into(), pass: checks.iter().all(|c| c.pass), checks }
    }
}
