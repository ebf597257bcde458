//! Declarative vendor dialect profiles.
//!
//! A profile describes one vendor's flavour of Structured Text: reserved
//! words, elementary and complex types, builtin signatures, conversion
//! naming rules, the implicit widening lattice, and the patterns used to
//! read diagnostics from an external compiler. Profiles are TOML files;
//! two are shipped in-crate (`siemens_scl`, `codesys_st`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::ErrorClass;
use crate::signature::{Signature, SignatureSource};

const SIEMENS_SCL: &str = include_str!("../profiles/siemens_scl.toml");
const CODESYS_ST: &str = include_str!("../profiles/codesys_st.toml");

#[derive(Debug, Error)]
pub enum DialectError {
    #[error("unknown dialect id `{0}`")]
    Unknown(String),
    #[error("failed to read dialect profile {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid dialect profile {path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Extensions {
    /// `REGION name ... END_REGION` blocks.
    #[serde(default)]
    pub regions: bool,
    /// `GOTO label;` and `label: statement`.
    #[serde(default)]
    pub goto_labels: bool,
    /// `"Name"` is a quoted identifier rather than a wide string.
    #[serde(default)]
    pub quoted_identifiers: bool,
    /// `#local` prefix on local variable references.
    #[serde(default)]
    pub hash_locals: bool,
    /// `Variant` may be used as a declared type.
    #[serde(default)]
    pub variant_type: bool,
    /// Source-file layout with `VERSION : x.y` and a `BEGIN` body marker.
    #[serde(default)]
    pub begin_block: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConversionRules {
    /// When true, only `SRC_TO_DST` names are accepted; `TO_DST` is malformed.
    #[serde(default = "default_true")]
    pub require_source_type: bool,
}

impl Default for ConversionRules {
    fn default() -> Self {
        ConversionRules { require_source_type: true }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructField {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<StructField>,
}

/// Regex with named groups `line`, `col` (optional) and `message`,
/// matched line by line against external compiler output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticPattern {
    pub regex: String,
}

/// Ordered first-match classification of external compiler messages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationRule {
    pub pattern: String,
    pub class: ErrorClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DialectProfile {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub reserved_words: BTreeSet<String>,
    pub elementary_types: BTreeSet<String>,
    #[serde(default)]
    pub complex_types: BTreeSet<String>,
    #[serde(default)]
    pub builtins: Vec<Signature>,
    #[serde(default)]
    pub structs: Vec<StructDef>,
    #[serde(default)]
    pub conversion: ConversionRules,
    #[serde(default)]
    pub extensions: Extensions,
    /// Source type -> target types it implicitly widens into.
    #[serde(default)]
    pub widening: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub diagnostic_patterns: Vec<DiagnosticPattern>,
    #[serde(default)]
    pub classification_rules: Vec<ClassificationRule>,
    #[serde(skip)]
    builtin_index: HashMap<String, usize>,
}

impl DialectProfile {
    pub fn from_toml(text: &str, origin: &str) -> Result<DialectProfile, DialectError> {
        let mut profile: DialectProfile = toml::from_str(text).map_err(|e| DialectError::Invalid {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        profile.normalize();
        profile.validate().map_err(|message| DialectError::Invalid {
            path: origin.to_string(),
            message,
        })?;
        Ok(profile)
    }

    fn normalize(&mut self) {
        let up = |set: &BTreeSet<String>| set.iter().map(|s| s.to_ascii_uppercase()).collect();
        self.reserved_words = up(&self.reserved_words);
        self.elementary_types = up(&self.elementary_types);
        self.complex_types = up(&self.complex_types);
        self.widening = self
            .widening
            .iter()
            .map(|(k, v)| {
                (k.to_ascii_uppercase(), v.iter().map(|t| t.to_ascii_uppercase()).collect())
            })
            .collect();
        self.builtin_index = self
            .builtins
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.to_ascii_uppercase(), i))
            .collect();
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty dialect id".into());
        }
        if let Some(t) = self.elementary_types.intersection(&self.complex_types).next() {
            return Err(format!("type `{t}` is both elementary and complex"));
        }
        for (src, dsts) in &self.widening {
            if !self.elementary_types.contains(src) {
                return Err(format!("widening source `{src}` is not an elementary type"));
            }
            if let Some(d) = dsts.iter().find(|d| !self.elementary_types.contains(*d)) {
                return Err(format!("widening target `{d}` is not an elementary type"));
            }
        }
        for sig in &self.builtins {
            if let Some(p) = sig.params.iter().find(|p| p.type_name.trim().is_empty()) {
                return Err(format!("builtin `{}` parameter `{}` has no type", sig.name, p.name));
            }
        }
        Ok(())
    }

    pub fn is_elementary(&self, name: &str) -> bool {
        self.elementary_types.contains(&name.to_ascii_uppercase())
    }

    pub fn is_complex(&self, name: &str) -> bool {
        self.complex_types.contains(&name.to_ascii_uppercase())
    }

    pub fn is_reserved(&self, word: &str) -> bool {
        self.reserved_words.contains(&word.to_ascii_uppercase())
    }

    /// Whether `from` implicitly converts to `to` (identity included).
    pub fn widens(&self, from: &str, to: &str) -> bool {
        let (from, to) = (from.to_ascii_uppercase(), to.to_ascii_uppercase());
        from == to || self.widening.get(&from).is_some_and(|v| v.contains(&to))
    }

    pub fn struct_def(&self, name: &str) -> Option<&StructDef> {
        self.structs.iter().find(|s| s.name.eq_ignore_ascii_case(name))
    }
}

impl SignatureSource for DialectProfile {
    fn lookup(&self, name: &str) -> Option<&Signature> {
        self.builtin_index.get(&name.to_ascii_uppercase()).map(|&i| &self.builtins[i])
    }
}

/// Loaded dialect profiles, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct DialectRegistry {
    profiles: BTreeMap<String, Arc<DialectProfile>>,
}

impl DialectRegistry {
    /// Registry holding the profiles shipped with this crate.
    pub fn builtin() -> Self {
        let mut reg = DialectRegistry::default();
        for (text, origin) in [(SIEMENS_SCL, "siemens_scl.toml"), (CODESYS_ST, "codesys_st.toml")] {
            let p = DialectProfile::from_toml(text, origin).expect("shipped profile is valid");
            reg.insert(p);
        }
        reg
    }

    pub fn insert(&mut self, profile: DialectProfile) {
        self.profiles.insert(profile.id.clone(), Arc::new(profile));
    }

    /// Loads every `*.toml` file in `dir`, overriding same-id entries.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), DialectError> {
        let io_err = |source| DialectError::Io { path: dir.display().to_string(), source };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)
                .map_err(|source| DialectError::Io { path: path.display().to_string(), source })?;
            self.insert(DialectProfile::from_toml(&text, &path.display().to_string())?);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Arc<DialectProfile>, DialectError> {
        self.profiles.get(id).cloned().ok_or_else(|| DialectError::Unknown(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}
