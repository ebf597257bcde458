//! Callable signatures shared by dialect builtins and vendor API libraries.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
    #[serde(rename = "INOUT")]
    InOut,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "IN",
            Direction::Out => "OUT",
            Direction::InOut => "INOUT",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One typed, directed parameter (`t_i, v_i, s_i, d_i`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub direction: Direction,
    #[serde(default)]
    pub description: String,
}

impl ParamSpec {
    pub fn new(name: &str, type_name: &str, direction: Direction) -> Self {
        ParamSpec {
            name: name.to_string(),
            type_name: type_name.to_string(),
            direction,
            description: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum PouKind {
    #[default]
    #[serde(rename = "FUNCTION")]
    Function,
    #[serde(rename = "FUNCTION_BLOCK")]
    FunctionBlock,
}

impl PouKind {
    pub fn keyword(self) -> &'static str {
        match self {
            PouKind::Function => "FUNCTION",
            PouKind::FunctionBlock => "FUNCTION_BLOCK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub name: String,
    #[serde(default)]
    pub kind: PouKind,
    #[serde(default)]
    pub return_type: Option<String>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    /// The last IN parameter may repeat (MAX, MIN, CONCAT, ...).
    #[serde(default)]
    pub variadic: bool,
}

impl Signature {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    pub fn inputs(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.direction != Direction::Out)
    }

    /// Human-readable one-line rendering used in prompts and messages.
    pub fn render(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{} {} : {}", p.direction, p.name, p.type_name))
            .collect();
        let mut s = format!("{} {}({})", self.kind.keyword(), self.name, params.join("; "));
        if let Some(rt) = &self.return_type {
            s.push_str(" : ");
            s.push_str(rt);
        }
        s
    }
}

/// Anything that can resolve a callable by case-insensitive name.
pub trait SignatureSource {
    fn lookup(&self, name: &str) -> Option<&Signature>;
}

impl SignatureSource for () {
    fn lookup(&self, _name: &str) -> Option<&Signature> {
        None
    }
}

/// A simple owned signature table keyed by uppercase name.
#[derive(Debug, Clone, Default)]
pub struct SignatureTable {
    by_name: HashMap<String, Signature>,
}

impl SignatureTable {
    pub fn new(sigs: impl IntoIterator<Item = Signature>) -> Self {
        let by_name = sigs.into_iter().map(|s| (s.name.to_ascii_uppercase(), s)).collect();
        SignatureTable { by_name }
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

impl SignatureSource for SignatureTable {
    fn lookup(&self, name: &str) -> Option<&Signature> {
        self.by_name.get(&name.to_ascii_uppercase())
    }
}
