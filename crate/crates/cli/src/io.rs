use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    write_text(path, &body)
}

const HYP_FIELDS: &[&str] = &["hypothesis", "prediction", "generation", "output", "target", "text"];
const REF_FIELDS: &[&str] = &["reference", "target", "text"];

/// Reads one text per line. Files whose first non-blank line is a JSON
/// object are read as JSON lines, taking the first present field of
/// `fields`; otherwise every line is taken verbatim.
fn read_texts(path: &Path, fields: &[&str]) -> Result<Vec<String>, CliError> {
    let body = read_to_string(path)?;
    let jsonl = body
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    if !jsonl {
        return Ok(body.lines().map(String::from).collect());
    }
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .map_err(|e| CliError::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let text = fields
            .iter()
            .find_map(|f| v.get(*f).and_then(Value::as_str))
            .ok_or_else(|| {
                CliError::invalid(format!(
                    "{}:{}: none of the fields {fields:?} holds a string",
                    path.display(),
                    i + 1
                ))
            })?;
        out.push(text.to_string());
    }
    Ok(out)
}

pub fn read_hypotheses(path: &Path) -> Result<Vec<String>, CliError> {
    read_texts(path, HYP_FIELDS)
}

pub fn read_references(path: &Path) -> Result<Vec<String>, CliError> {
    read_texts(path, REF_FIELDS)
}
