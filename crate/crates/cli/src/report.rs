//! Reports and their deterministic JSON and CSV encodings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use mdimlab::systems::SystemDescriptor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Format;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub system: Option<SystemDescriptor>,
    pub passed: bool,
    /// One line per failed audit: module, operation and offending item.
    pub failures: Vec<String>,
    pub summary: BTreeMap<String, Value>,
    pub table: Table,
}

impl Report {
    pub fn new(command: &str, seed: u64, system: Option<SystemDescriptor>, table: Table) -> Self {
        Report {
            command: command.to_string(),
            seed,
            system,
            passed: true,
            failures: Vec::new(),
            summary: BTreeMap::new(),
            table,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn fail(&mut self, msg: impl Into<String>) {
        self.passed = false;
        self.failures.push(msg.into());
    }

    /// Records a failure unless `ok`.
    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.fail(msg());
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Serialises `report` in `format`.
pub fn encode(report: &Report, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&report.table.columns).map_err(|e| CliError::Io(e.to_string()))?;
            for row in &report.table.rows {
                w.write_record(row.iter().map(cell)).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Writes the encoded report to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn emit_report(report: &Report, format: Format, path: &Path) -> Result<(), CliError> {
    let bytes = encode(report, format)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(&bytes).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
