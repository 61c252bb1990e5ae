use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// The property being checked.
    pub invariant: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Contents of `report.json`.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub results: Value,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            passed: true,
            checks: Vec::new(),
            files: Vec::new(),
            results: Value::Null,
        }
    }

    /// Records `value < threshold`.
    pub fn below(&mut self, name: &str, invariant: &str, value: f64, threshold: f64) {
        let passed = value < threshold;
        self.push(name, invariant, passed, value, threshold, format!("{value:.3e} < {threshold:.3e}"));
    }

    /// Records a boolean property; `value` is carried for context.
    pub fn holds(&mut self, name: &str, invariant: &str, passed: bool, value: f64) {
        self.push(name, invariant, passed, value, f64::NAN, String::new());
    }

    fn push(&mut self, name: &str, invariant: &str, passed: bool, value: f64, threshold: f64, detail: String) {
        self.passed &= passed;
        self.checks.push(Check {
            name: name.to_string(),
            invariant: invariant.to_string(),
            passed,
            value,
            threshold,
            detail,
        });
    }

    pub fn file(&mut self, path: &Path) {
        self.files.push(path.display().to_string());
    }

    pub fn print(&self) {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            if c.passed {
                println!("{status} {}", c.name);
            } else {
                println!("{status} {}: {} [{}]", c.name, c.detail, c.invariant);
            }
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        bchlab::io::write_json(&dir.join("report.json"), self)?;
        Ok(())
    }
}
