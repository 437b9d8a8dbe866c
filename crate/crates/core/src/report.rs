//! Pass/fail records for numerical checks.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

/// One check: `pass` iff `max_deviation ≤ tolerance` and every structural
/// condition held.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub parameters: BTreeMap<String, Value>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(check: &str, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            check: check.to_string(),
            parameters: BTreeMap::new(),
            max_deviation,
            tolerance,
            pass: max_deviation <= tolerance,
        }
    }

    /// A check that could not be evaluated; the error becomes a parameter.
    pub fn errored(check: &str, tolerance: f64, error: impl std::fmt::Display) -> Self {
        let mut r = Self::new(check, f64::INFINITY, tolerance);
        r.pass = false;
        r.parameters.insert("error".into(), Value::String(error.to_string()));
        r
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    /// Adds a structural condition; a false condition fails the check.
    pub fn require(mut self, key: &str, ok: bool) -> Self {
        self.parameters.insert(key.to_string(), Value::Bool(ok));
        self.pass &= ok;
        self
    }
}

/// Report of a whole suite run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub parameters: BTreeMap<String, Value>,
    pub checks: Vec<CheckReport>,
    pub failed: Vec<String>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn new(suite: &str, parameters: BTreeMap<String, Value>, checks: Vec<CheckReport>) -> Self {
        let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.check.clone()).collect();
        Self { suite: suite.to_string(), parameters, pass: failed.is_empty(), failed, checks }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_logic() {
        assert!(CheckReport::new("a", 1e-9, 1e-8).pass);
        assert!(!CheckReport::new("a", 1e-7, 1e-8).pass);
        assert!(!CheckReport::new("a", f64::NAN, 1e-8).pass);
        assert!(!CheckReport::new("a", 0.0, 1.0).require("branch", false).pass);
        assert!(!CheckReport::errored("a", 1.0, "boom").pass);
    }

    #[test]
    fn json_is_key_ordered() {
        let r = CheckReport::new("x", 0.5, 1.0).param("zeta", 1).param("alpha", 2.5);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"check":"x","parameters":{"alpha":2.5,"zeta":1},"max_deviation":0.5,"tolerance":1.0,"pass":true}"#
        );
        let suite = SuiteReport::new("s", BTreeMap::new(), vec![r, CheckReport::new("y", 2.0, 1.0)]);
        assert_eq!(suite.failed, vec!["y".to_string()]);
        assert!(!suite.pass);
    }
}
