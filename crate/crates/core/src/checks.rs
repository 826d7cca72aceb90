//! Named verification experiments with pinned grids and tolerances, shared
//! by the acceptance test suite and the CLI preset runner.

use crate::error::SolveResult;

/// Outcome of one named check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub id: String,
    pub name: String,
    pub pass: bool,
    /// Per-criterion measured quantities with their bounds.
    pub details: Vec<CheckDetail>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckDetail {
    pub label: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckResult {
    pub(crate) fn new(id: &str, name: &str) -> Self {
        CheckResult {
            id: id.into(),
            name: name.into(),
            pass: true,
            details: Vec::new(),
        }
    }

    pub(crate) fn le(&mut self, label: &str, measured: f64, bound: f64) -> &mut Self {
        let pass = measured <= bound;
        self.pass &= pass;
        self.details.push(CheckDetail {
            label: label.into(),
            measured,
            bound,
            pass,
        });
        self
    }

    pub(crate) fn ge(&mut self, label: &str, measured: f64, bound: f64) -> &mut Self {
        let pass = measured >= bound;
        self.pass &= pass;
        self.details.push(CheckDetail {
            label: label.into(),
            measured,
            bound,
            pass,
        });
        self
    }

    /// One-line summary in the form "A1 PASS  mms-nonlinear".
    pub fn summary(&self) -> String {
        format!(
            "{:>3} {}  {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name
        )
    }
}

pub const ALL_CHECK_IDS: [&str; 12] = [
    "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12",
];

/// Run one named check.
pub fn run_check(id: &str) -> SolveResult<CheckResult> {
    match id {
        "A1" => suite::mms_nonlinear(),
        "A2" => suite::xi_parameter_bound(),
        "A3" => suite::linear_path_equivalence(),
        "A4" => suite::gauduchon_closed_form(),
        "A5" => suite::hopf_bracket_constants_check(),
        "A6" => suite::soliton_identity(),
        "A7" => suite::tricerri_fixtures(),
        "A8" => suite::dim_two_round_trip(),
        "A9" => suite::uniformization(),
        "A10" => suite::hopf_flat_bundle(),
        "A11" => suite::estimate_identities(),
        "A12" => suite::prescribed_ricci(),
        other => Err(crate::error::SolveError::Geometry(
            crate::error::GeomError::InvalidParameter(format!("unknown check id {other}")),
        )),
    }
}

pub mod suite;
