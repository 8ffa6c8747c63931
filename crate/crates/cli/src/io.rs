use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Reads and decodes a JSON document, reporting the line and column of any
/// syntax or schema error.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!(
            "{what} file {}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Io(format!("cannot create temporary file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("cannot move output into {}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn to_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, &to_pretty(value)?)
}

/// A comma-separated list of numbers such as `1.5,-2,3`.
#[derive(Clone, Debug, PartialEq)]
pub struct NumList(pub Vec<f64>);

pub fn parse_list(s: &str) -> Result<NumList, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{t:?} is not a finite number"))
        })
        .collect::<Result<_, _>>()
        .map(NumList)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Order(pub Vec<usize>);

pub fn parse_order(s: &str) -> Result<Order, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("{t:?} is not a coordinate index")))
        .collect::<Result<_, _>>()
        .map(Order)
}
