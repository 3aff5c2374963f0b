//! `report.json`: one entry per checked criterion plus run metadata.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Closed interval `[lower, upper]`; a missing side is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bound {
    pub fn at_most(upper: f64) -> Self {
        Self {
            lower: None,
            upper: Some(upper),
        }
    }

    pub fn at_least(lower: f64) -> Self {
        Self {
            lower: Some(lower),
            upper: None,
        }
    }

    pub fn between(lower: f64, upper: f64) -> Self {
        Self {
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    /// NaN is never admitted.
    pub fn admits(&self, x: f64) -> bool {
        !x.is_nan() && self.lower.is_none_or(|l| x >= l) && self.upper.is_none_or(|u| x <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    /// Acceptance criterion this entry belongs to, when run as part of the suite.
    pub group: Option<u32>,
    /// `null` in JSON when the quantity could not be computed.
    pub measured: f64,
    pub bound: Bound,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    pub fn new(name: impl Into<String>, measured: f64, bound: Bound, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            group: None,
            measured,
            bound,
            pass: bound.admits(measured),
            detail: detail.into(),
        }
    }

    /// A check that could not be evaluated; it fails.
    pub fn failed(name: impl Into<String>, bound: Bound, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            group: None,
            measured: f64::NAN,
            bound,
            pass: false,
            detail: detail.into(),
        }
    }

    pub fn in_group(mut self, group: u32) -> Self {
        self.group = Some(group);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: String,
    /// The resolved configuration in its text form.
    pub config: String,
    pub criteria: Vec<Criterion>,
    /// Values computed along the way that are not themselves checked.
    pub measurements: BTreeMap<String, f64>,
    /// Hex FNV-1a digests of the encoded ensemble summaries, keyed by run.
    pub digests: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub all_pass: bool,
}

impl Report {
    pub fn new(kind: &str, config: String) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: kind.into(),
            config,
            criteria: Vec::new(),
            measurements: BTreeMap::new(),
            digests: BTreeMap::new(),
            warnings: Vec::new(),
            all_pass: true,
        }
    }

    pub fn push(&mut self, c: Criterion) {
        self.all_pass &= c.pass;
        self.criteria.push(c);
    }

    pub fn measure(&mut self, key: impl Into<String>, value: f64) {
        self.measurements.insert(key.into(), value);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings.push(message);
    }

    /// `(name, pass)` of every criterion, in order.
    pub fn verdicts(&self) -> Vec<(String, bool)> {
        self.criteria.iter().map(|c| (c.name.clone(), c.pass)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Bound::at_most(1.0).admits(1.0));
        assert!(!Bound::at_most(1.0).admits(1.0 + 1e-15));
        assert!(!Bound::at_most(1.0).admits(f64::NAN));
        assert!(Bound::between(-0.8, -0.2).admits(-0.5));
        assert!(!Bound::between(-0.8, -0.2).admits(-0.1));
        assert!(Bound::at_least(4.0).admits(5.0));
    }

    #[test]
    fn report_schema() {
        let mut r = Report::new("variance", "kind = variance\n".into());
        r.push(Criterion::new("a", 0.5, Bound::at_most(1.0), ""));
        assert!(r.all_pass);
        r.push(Criterion::failed("b", Bound::at_most(1.0), "no data").in_group(3));
        assert!(!r.all_pass);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema_version"], REPORT_SCHEMA_VERSION);
        for c in v["criteria"].as_array().unwrap() {
            for key in ["name", "measured", "bound", "pass"] {
                assert!(c.get(key).is_some(), "{key}");
            }
        }
        assert!(v["criteria"][1]["measured"].is_null());
        assert_eq!(r.verdicts(), vec![("a".to_string(), true), ("b".to_string(), false)]);
    }
}
