//! Prompt templates with `{{name}}` placeholders.
//!
//! Defaults are compiled in from `templates/`; a directory passed to
//! [`Templates::with_overrides`] replaces any file it contains.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

const DEFAULTS: &[(&str, &str)] = &[
    ("classify.system", include_str!("../templates/classify.system.txt")),
    ("classify.user", include_str!("../templates/classify.user.txt")),
    ("plan.system", include_str!("../templates/plan.system.txt")),
    ("plan_linear.user", include_str!("../templates/plan_linear.user.txt")),
    ("plan_state_machine.user", include_str!("../templates/plan_state_machine.user.txt")),
    ("rerank.system", include_str!("../templates/rerank.system.txt")),
    ("rerank.user", include_str!("../templates/rerank.user.txt")),
    ("api_filter.system", include_str!("../templates/api_filter.system.txt")),
    ("api_filter.user", include_str!("../templates/api_filter.user.txt")),
    ("index.system", include_str!("../templates/index.system.txt")),
    ("index.user", include_str!("../templates/index.user.txt")),
    ("generate.system", include_str!("../templates/generate.system.txt")),
    ("gen_task", include_str!("../templates/gen_task.txt")),
    ("gen_plan", include_str!("../templates/gen_plan.txt")),
    ("gen_apis", include_str!("../templates/gen_apis.txt")),
    ("gen_fewshot", include_str!("../templates/gen_fewshot.txt")),
    ("gen_dialect", include_str!("../templates/gen_dialect.txt")),
    ("repair.system", include_str!("../templates/repair.system.txt")),
    ("repair.user", include_str!("../templates/repair.user.txt")),
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` references unbound placeholder `{name}`")]
    Unbound { template: String, name: String },
    #[error("template override {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone)]
pub struct Templates {
    map: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates { map: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Templates {
    /// Defaults overlaid with every `<name>.txt` in `dir` whose name is a
    /// known template.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Templates::default();
        let io = |e: std::io::Error| TemplateError::Io { path: dir.display().to_string(), message: e.to_string() };
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".txt")) else {
                continue;
            };
            if !t.map.contains_key(name) {
                return Err(TemplateError::Unknown(name.to_string()));
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| TemplateError::Io { path: path.display().to_string(), message: e.to_string() })?;
            t.map.insert(name.to_string(), text);
        }
        Ok(t)
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self.map.get(name).ok_or_else(|| TemplateError::Unknown(name.to_string()))?;
        let mut out = String::with_capacity(text.len());
        let mut rest = text.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let Some(close) = after.find("}}") else {
                out.push_str(&rest[open..]);
                rest = "";
                break;
            };
            let key = after[..close].trim();
            let value = vars.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| TemplateError::Unbound {
                template: name.to_string(),
                name: key.to_string(),
            })?;
            out.push_str(value);
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out.trim_end().to_string())
    }
}
