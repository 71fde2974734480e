//! Reading observation files and JSON configuration.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

/// One numeric column, optional header, values strictly inside (0, 1).
pub fn read_data(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut offenders = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 1 {
            return Err(CliError::Input(format!(
                "{}: line {line}: expected one column, found {}",
                path.display(),
                rec.len()
            )));
        }
        match rec[0].parse::<f64>() {
            Ok(x) if x > 0.0 && x < 1.0 => values.push(x),
            Ok(x) => offenders.push(format!("line {line}: {x}")),
            // a non-numeric first row is a header
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::Input(format!(
                    "{}: line {line}: cannot parse `{}` as a number",
                    path.display(),
                    &rec[0]
                )))
            }
        }
    }
    if !offenders.is_empty() {
        return Err(CliError::Input(format!(
            "{}: {} value(s) outside (0, 1): {}",
            path.display(),
            offenders.len(),
            offenders.join(", ")
        )));
    }
    if values.len() < 2 {
        return Err(CliError::Input(format!("{}: need at least two observations", path.display())));
    }
    Ok(values)
}

/// Data as written into a run directory: one value per line.
pub fn data_csv(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for v in values {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

/// Global settings pulled out of a configuration file; the remaining keys
/// belong to the command.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    pub command: Map<String, Value>,
}

pub fn read_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Input(format!("{}: configuration must be a JSON object", path.display())));
    };
    let bad = |key: &str| CliError::Input(format!("{}: bad value for `{key}`", path.display()));
    let seed = match map.remove("seed") {
        Some(v) => Some(v.as_u64().ok_or_else(|| bad("seed"))?),
        None => None,
    };
    let out = match map.remove("out") {
        Some(v) => Some(v.as_str().ok_or_else(|| bad("out"))?.to_string()),
        None => None,
    };
    let threads = match map.remove("threads") {
        Some(v) => Some(v.as_u64().ok_or_else(|| bad("threads"))? as usize),
        None => None,
    };
    Ok(FileConfig { seed, out, threads, command: map })
}

/// Deserialize command parameters from the file's remaining keys.
pub fn command_params<T: serde::de::DeserializeOwned>(map: &Map<String, Value>) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(map.clone())).map_err(|e| CliError::Input(format!("configuration: {e}")))
}
