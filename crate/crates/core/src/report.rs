//! Structured pass/fail records with measured slacks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of one inequality or identity check.
///
/// `slack_min` is the smallest measured slack (nonnegative when the checked
/// inequality holds) and `slack_argmin` the parameter where it occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub spec: String,
    pub params: BTreeMap<String, String>,
    #[serde(with = "nullable")]
    pub slack_min: f64,
    #[serde(with = "nullable")]
    pub slack_argmin: f64,
    pub conditional_flags: Vec<String>,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(check: impl Into<String>, spec: impl Into<String>) -> Self {
        CheckResult {
            check: check.into(),
            spec: spec.into(),
            params: BTreeMap::new(),
            slack_min: f64::INFINITY,
            slack_argmin: f64::NAN,
            conditional_flags: Vec::new(),
            pass: true,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn flag(&mut self, flag: impl Into<String>) {
        let f = flag.into();
        if !self.conditional_flags.contains(&f) {
            self.conditional_flags.push(f);
        }
    }

    pub fn is_conditional(&self) -> bool {
        !self.conditional_flags.is_empty()
    }

    /// Finishes the record from a tracker and a lower threshold on the slack.
    pub fn finish(mut self, tracker: &SlackTracker, threshold: f64) -> Self {
        self.slack_min = tracker.min;
        self.slack_argmin = tracker.argmin;
        self.pass = tracker.min >= threshold;
        self
    }
}

/// Non-finite floats travel as JSON `null` and come back as NaN.
pub mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Running minimum of a slack over a parameter.
#[derive(Debug, Clone, Copy)]
pub struct SlackTracker {
    pub min: f64,
    pub argmin: f64,
    pub count: usize,
}

impl Default for SlackTracker {
    fn default() -> Self {
        SlackTracker {
            min: f64::INFINITY,
            argmin: f64::NAN,
            count: 0,
        }
    }
}

impl SlackTracker {
    pub fn push(&mut self, at: f64, slack: f64) {
        self.count += 1;
        if slack < self.min || self.min.is_nan() || slack.is_nan() {
            self.min = slack;
            self.argmin = at;
        }
    }

    pub fn merge(&mut self, other: &SlackTracker) {
        self.count += other.count;
        if other.min < self.min || other.min.is_nan() {
            self.min = other.min;
            self.argmin = other.argmin;
        }
    }
}
