//! Annotated fixture files.
//!
//! The first line of a fixture is a header comment naming the dialect and,
//! for seeded-error fixtures, the expected finding count per class:
//!
//! ```text
//! (* dialect: siemens_scl; expect: UNDEFINED=1, CALL=2 *)
//! ```
//!
//! Classes not listed are expected to be zero.

use std::path::{Path, PathBuf};

use crate::diag::ErrorClass;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub path: PathBuf,
    pub dialect: String,
    /// Expected per-class counts in `ErrorClass::ALL` order; `None` for
    /// fixtures that must be clean.
    pub expect: Option<[usize; 5]>,
    pub source: String,
}

impl Fixture {
    pub fn name(&self) -> String {
        self.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    }
}

pub fn parse_header(source: &str) -> Result<(String, Option<[usize; 5]>), String> {
    let first = source.lines().next().unwrap_or("").trim();
    let inner = first
        .strip_prefix("(*")
        .and_then(|s| s.strip_suffix("*)"))
        .ok_or_else(|| "missing header comment".to_string())?;
    let mut dialect = None;
    let mut expect = None;
    for part in inner.split(';') {
        let Some((key, value)) = part.split_once(':') else { continue };
        match key.trim() {
            "dialect" => dialect = Some(value.trim().to_string()),
            "expect" => {
                let mut counts = [0usize; 5];
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (class, n) = item.split_once('=').ok_or_else(|| format!("bad expectation `{item}`"))?;
                    let class = ErrorClass::parse(class).ok_or_else(|| format!("unknown class `{class}`"))?;
                    let n: usize = n.trim().parse().map_err(|_| format!("bad count in `{item}`"))?;
                    let idx = ErrorClass::ALL.iter().position(|c| *c == class).unwrap();
                    counts[idx] = n;
                }
                expect = Some(counts);
            }
            other => return Err(format!("unknown header key `{other}`")),
        }
    }
    Ok((dialect.ok_or("header names no dialect")?, expect))
}

/// Loads every `*.st` file under `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Fixture>, String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "st"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let source = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let (dialect, expect) = parse_header(&source).map_err(|e| format!("{}: {e}", path.display()))?;
            Ok(Fixture { path, dialect, expect, source })
        })
        .collect()
}
