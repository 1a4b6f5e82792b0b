//! Machine-readable verification reports.
//!
//! A report is one JSON document per command run: a suite name, the inputs
//! that pin determinism (family, mesh, seed), a list of checks, and a
//! summary. Checks are sorted by name (then cell, then degree) before
//! serialization, so the byte stream depends only on the inputs and the
//! seed. Every scalar quantity is emitted as an exact rational string
//! `p/q`; no floating point appears anywhere.

use serde::Serialize;

use fesys::rat::Rat;

/// Render a rational as `p/q`, always including the denominator, so exact
/// zero reads `0/1` and integers read `n/1`.
pub fn rat_str(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Render a dimension vector as `[a, b, c]`.
pub fn dims_str(dims: &[usize]) -> String {
    let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    pub status: Status,
    pub expected: String,
    pub actual: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub status: Status,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suite: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub summary: Summary,
}

/// Accumulates checks for one report. `finish` fixes the deterministic
/// order and computes the summary.
pub struct ReportBuilder {
    suite: String,
    family: Option<String>,
    mesh: Option<String>,
    seed: u64,
    checks: Vec<Check>,
}

impl ReportBuilder {
    pub fn new(suite: &str, seed: u64) -> Self {
        ReportBuilder {
            suite: suite.to_string(),
            family: None,
            mesh: None,
            seed,
            checks: Vec::new(),
        }
    }

    pub fn family(mut self, family: &str) -> Self {
        self.family = Some(family.to_string());
        self
    }

    pub fn mesh(mut self, mesh: &str) -> Self {
        self.mesh = Some(mesh.to_string());
        self
    }

    /// Record one check; `expected == actual` decides the status.
    pub fn check(&mut self, name: &str, expected: impl ToString, actual: impl ToString) {
        self.check_at(name, None, None, expected, actual);
    }

    /// Record one check attached to a cell and/or degree.
    pub fn check_at(
        &mut self,
        name: &str,
        cell: Option<usize>,
        degree: Option<usize>,
        expected: impl ToString,
        actual: impl ToString,
    ) {
        let expected = expected.to_string();
        let actual = actual.to_string();
        let status = if expected == actual {
            Status::Pass
        } else {
            Status::Fail
        };
        self.checks.push(Check {
            name: name.to_string(),
            cell,
            degree,
            status,
            expected,
            actual,
        });
    }

    /// Record a boolean property (expected `true`).
    pub fn require(&mut self, name: &str, ok: bool) {
        self.check(name, true, ok);
    }

    /// Record a boolean property on a cell/degree (expected `true`).
    pub fn require_at(&mut self, name: &str, cell: Option<usize>, degree: Option<usize>, ok: bool) {
        self.check_at(name, cell, degree, true, ok);
    }

    pub fn finish(mut self) -> Report {
        self.checks.sort_by(|a, b| {
            (&a.name, a.cell, a.degree).cmp(&(&b.name, b.cell, b.degree))
        });
        let total = self.checks.len();
        let passed = self
            .checks
            .iter()
            .filter(|c| c.status == Status::Pass)
            .count();
        let failed = total - passed;
        Report {
            suite: self.suite,
            family: self.family,
            mesh: self.mesh,
            seed: self.seed,
            checks: self.checks,
            summary: Summary {
                total,
                passed,
                failed,
                status: if failed == 0 { Status::Pass } else { Status::Fail },
            },
        }
    }
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.summary.status == Status::Pass
    }

    /// The canonical byte rendering: pretty JSON plus a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fesys::rat::rat;

    #[test]
    fn rational_strings_always_carry_denominators() {
        assert_eq!(rat_str(&rat(0, 1)), "0/1");
        assert_eq!(rat_str(&rat(3, 1)), "3/1");
        assert_eq!(rat_str(&rat(-4, 6)), "-2/3");
    }

    #[test]
    fn checks_are_sorted_and_summarized() {
        let mut b = ReportBuilder::new("demo", 7);
        b.check_at("b", Some(2), None, 1, 1);
        b.check_at("b", Some(1), None, 1, 2);
        b.check("a", "x", "x");
        let report = b.finish();
        let names: Vec<(&str, Option<usize>)> = report
            .checks
            .iter()
            .map(|c| (c.name.as_str(), c.cell))
            .collect();
        assert_eq!(names, vec![("a", None), ("b", Some(1)), ("b", Some(2))]);
        assert_eq!(report.summary.total, 3);
        assert_eq!(report.summary.passed, 2);
        assert_eq!(report.summary.failed, 1);
        assert_eq!(report.summary.status, Status::Fail);
        assert!(!report.all_pass());
    }

    #[test]
    fn json_rendering_is_deterministic() {
        let make = || {
            let mut b = ReportBuilder::new("demo", 0).family("jm");
            b.check("zeta", 1, 1);
            b.check("alpha", 2, 2);
            b.finish().to_json()
        };
        assert_eq!(make(), make());
        let json = make();
        assert!(json.contains("\"suite\": \"demo\""));
        assert!(json.contains("\"family\": \"jm\""));
        assert!(json.ends_with('\n'));
    }
}
