//! Snippet-replacement patches located by exact text.

use plc_st::Section;
use serde::{Deserialize, Serialize};

fn implementation() -> Section {
    Section::Implementation
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub find: String,
    pub replace: String,
    #[serde(default = "implementation")]
    pub section: Section,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PatchStatus {
    Applied { offset: usize },
    NotFound,
    Ambiguous { count: usize },
    EmptyFind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchOutcome {
    pub index: usize,
    #[serde(flatten)]
    pub status: PatchStatus,
}

/// Start offsets of every occurrence of `needle`, overlapping ones included.
pub fn occurrences(hay: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(i) = hay[from..].find(needle) {
        out.push(from + i);
        let step = hay[from + i..].chars().next().map_or(1, char::len_utf8);
        from += i + step;
    }
    out
}

/// Applies edits in order, each against the result of the previous ones.
/// An edit whose snippet is missing, empty or occurs more than once is
/// skipped and logged.
pub fn apply_patches(source: &str, set: &PatchSet) -> (String, Vec<PatchOutcome>) {
    let mut text = source.to_string();
    let mut outcomes = Vec::with_capacity(set.patches.len());
    for (index, p) in set.patches.iter().enumerate() {
        let status = if p.find.is_empty() {
            PatchStatus::EmptyFind
        } else {
            match occurrences(&text, &p.find).as_slice() {
                [] => PatchStatus::NotFound,
                [at] => {
                    text.replace_range(*at..*at + p.find.len(), &p.replace);
                    PatchStatus::Applied { offset: *at }
                }
                many => PatchStatus::Ambiguous { count: many.len() },
            }
        };
        if !matches!(status, PatchStatus::Applied { .. }) {
            tracing::info!(index, ?status, "patch skipped");
        }
        outcomes.push(PatchOutcome { index, status });
    }
    (text, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(find: &str, replace: &str) -> Patch {
        Patch { find: find.into(), replace: replace.into(), section: Section::Declaration }
    }

    #[test]
    fn local_replacement() {
        let src = "VAR\n    iX : INT := 'a';\nEND_VAR\n";
        let (out, o) = apply_patches(src, &PatchSet { patches: vec![patch("iX : INT := 'a';", "iX : INT := 0;")] });
        assert_eq!(out, "VAR\n    iX : INT := 0;\nEND_VAR\n");
        assert_eq!(o[0].status, PatchStatus::Applied { offset: 8 });
    }

    #[test]
    fn ambiguous_and_missing_are_skipped() {
        let src = "a := 1;\na := 1;\n";
        let set = PatchSet { patches: vec![patch("a := 1;", "a := 2;"), patch("zzz", "y"), patch("", "y")] };
        let (out, o) = apply_patches(src, &set);
        assert_eq!(out, src);
        assert_eq!(o[0].status, PatchStatus::Ambiguous { count: 2 });
        assert_eq!(o[1].status, PatchStatus::NotFound);
        assert_eq!(o[2].status, PatchStatus::EmptyFind);
    }

    #[test]
    fn overlapping_occurrences_count() {
        assert_eq!(occurrences("aaa", "aa"), [0, 1]);
        assert_eq!(occurrences("ééé", "é"), [0, 2, 4]);
    }

    #[test]
    fn later_edits_see_earlier_results() {
        let set = PatchSet { patches: vec![patch("x", "yy"), patch("yy", "z")] };
        assert_eq!(apply_patches("x", &set).0, "z");
    }

    #[test]
    fn section_defaults_to_implementation() {
        let p: Patch = serde_json::from_str(r#"{"find":"a","replace":"b"}"#).unwrap();
        assert_eq!(p.section, Section::Implementation);
    }
}
