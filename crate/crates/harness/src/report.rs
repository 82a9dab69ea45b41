//! Versioned JSON reports.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "nullable")]
    pub statistic: f64,
    #[serde(with = "nullable")]
    pub threshold: f64,
    /// How `statistic` is compared with `threshold`, e.g. `<=`.
    pub comparison: String,
    pub pass: bool,
    /// Set when the estimate is too noisy to be conclusive; never a failure.
    pub flagged: bool,
    pub runtime_s: f64,
    pub details: Value,
}

impl Check {
    pub fn at_most(name: &str, statistic: f64, threshold: f64) -> Self {
        Check::new(name, statistic, threshold, "<=", statistic <= threshold)
    }

    pub fn at_least(name: &str, statistic: f64, threshold: f64) -> Self {
        Check::new(name, statistic, threshold, ">=", statistic >= threshold)
    }

    /// A check recording a statistic without asserting anything about it.
    pub fn info(name: &str, statistic: f64, threshold: f64) -> Self {
        Check::new(name, statistic, threshold, "info", true)
    }

    pub fn failed(name: &str, error: impl std::fmt::Display) -> Self {
        let mut c = Check::new(name, f64::NAN, f64::NAN, "error", false);
        c.details = serde_json::json!({ "error": error.to_string() });
        c
    }

    fn new(name: &str, statistic: f64, threshold: f64, comparison: &str, pass: bool) -> Self {
        Check {
            name: name.to_string(),
            statistic,
            threshold,
            comparison: comparison.to_string(),
            pass,
            flagged: false,
            runtime_s: 0.0,
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn flag(mut self) -> Self {
        self.flagged = true;
        self
    }

    pub fn summary(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let flag = if self.flagged { " [flagged]" } else { "" };
        format!(
            "{}: {verdict}{flag} ({:.6e} {} {:.6e}, {:.2}s)",
            self.name, self.statistic, self.comparison, self.threshold, self.runtime_s
        )
    }
}

/// Runs `f`, stamps its wall time and turns an error into a failed check.
pub fn timed<E: std::fmt::Display>(name: &str, f: impl FnOnce() -> Result<Check, E>) -> Check {
    let start = Instant::now();
    let mut c = match f() {
        Ok(c) => c,
        Err(e) => Check::failed(name, e),
    };
    c.runtime_s = start.elapsed().as_secs_f64();
    c
}

// Non-finite values are written as `null` and read back as NaN.
mod nullable {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub seed: u64,
    pub command: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        Report {
            schema: SCHEMA.to_string(),
            seed,
            command: command.to_string(),
            generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            checks: Vec::new(),
            all_pass: true,
        }
    }

    /// Panics if a check of the same name was already recorded.
    pub fn push(&mut self, check: Check) {
        assert!(
            self.checks.iter().all(|c| c.name != check.name),
            "check `{}` recorded twice",
            check.name
        );
        self.all_pass &= check.pass;
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        for c in other.checks {
            self.push(c);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// JSON with the timestamp and runtimes zeroed, for comparing runs.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.generated_at = 0;
        for c in &mut r.checks {
            c.runtime_s = 0.0;
        }
        r.to_json()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn read(path: &Path) -> std::io::Result<Report> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
