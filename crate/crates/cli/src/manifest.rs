//! Tensor manifests: one `name shape path` entry per line. Blank lines and
//! lines starting with `#` are ignored; relative paths resolve against the
//! manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use seedlm::Shape;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub shape: Shape,
    pub path: PathBuf,
}

pub fn read(path: &Path) -> Result<Vec<Entry>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse(&text, base).map_err(|msg| CliError::usage(format!("{}: {msg}", path.display())))
}

pub fn parse(text: &str, base: &Path) -> Result<Vec<Entry>, String> {
    let mut entries: Vec<Entry> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, shape, file] = fields[..] else {
            return Err(format!("line {}: expected `name shape path`", lineno + 1));
        };
        let shape: Shape = shape
            .parse()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if entries.iter().any(|e| e.name == name) {
            return Err(format!("line {}: duplicate tensor name '{name}'", lineno + 1));
        }
        entries.push(Entry {
            name: name.to_string(),
            shape,
            path: base.join(file),
        });
    }
    Ok(entries)
}

pub fn render(entries: &[Entry]) -> String {
    entries
        .iter()
        .map(|e| format!("{} {} {}\n", e.name, e.shape, e.path.display()))
        .collect()
}
