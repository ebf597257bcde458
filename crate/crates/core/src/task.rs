//! Generation requests and plans.

use plc_st::{ParamSpec, PouKind};
use serde::{Deserialize, Serialize};

fn default_unit_kind() -> PouKind {
    PouKind::FunctionBlock
}

/// One generation request: requirement, typed interface, unit kind and
/// target dialect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub req: String,
    #[serde(default)]
    pub io: Vec<ParamSpec>,
    #[serde(default = "default_unit_kind")]
    pub unit_kind: PouKind,
    #[serde(default)]
    pub vendor_target: String,
}

impl Task {
    /// One line per interface variable, e.g. `IN start : BOOL (start request)`.
    pub fn io_summary(&self) -> String {
        self.io
            .iter()
            .map(|p| {
                let mut line = format!("{} {} : {}", p.direction, p.name, p.type_name);
                if !p.description.is_empty() {
                    line.push_str(&format!(" ({})", p.description));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Text used for similarity between tasks and cases: name, requirement
    /// and interface.
    pub fn metadata_text(&self) -> String {
        let mut s = format!("{}\n{}", self.name, self.req);
        let io = self.io_summary();
        if !io.is_empty() {
            s.push('\n');
            s.push_str(&io);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanKind {
    #[default]
    Linear,
    StateMachine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpec {
    pub name: String,
    /// Free text; may mention actions taken while in the state.
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSpec {
    #[serde(alias = "from")]
    pub from_state: String,
    #[serde(alias = "to")]
    pub to_state: String,
    pub condition: String,
}

/// Natural-language plan: a step list or a state machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Plan {
    pub kind: PlanKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<StateSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<TransitionSpec>,
}

impl Plan {
    pub fn linear(steps: Vec<String>) -> Plan {
        Plan { kind: PlanKind::Linear, steps, ..Plan::default() }
    }

    pub fn state_machine(states: Vec<StateSpec>, transitions: Vec<TransitionSpec>) -> Plan {
        Plan { kind: PlanKind::StateMachine, states, transitions, ..Plan::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty() && self.states.is_empty() && self.transitions.is_empty()
    }

    /// Retrieval queries: each step, or each state description and each
    /// transition condition.
    pub fn queries(&self) -> Vec<String> {
        match self.kind {
            PlanKind::Linear => self.steps.clone(),
            PlanKind::StateMachine => self
                .states
                .iter()
                .map(|s| format!("{} {}", s.name, s.description))
                .chain(self.transitions.iter().map(|t| t.condition.clone()))
                .collect(),
        }
    }

    /// Short one-line description used when listing cases.
    pub fn headline(&self) -> String {
        match self.kind {
            PlanKind::Linear => self.steps.first().cloned().unwrap_or_default(),
            PlanKind::StateMachine => {
                let names: Vec<&str> = self.states.iter().map(|s| s.name.as_str()).collect();
                format!("state machine over {}", names.join(", "))
            }
        }
    }

    /// Plain-text rendering for prompts.
    pub fn render(&self) -> String {
        match self.kind {
            PlanKind::Linear => self
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {s}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"),
            PlanKind::StateMachine => {
                let mut out = String::from("States:\n");
                for s in &self.states {
                    out.push_str(&format!("- {}: {}\n", s.name, s.description));
                }
                out.push_str("Transitions:\n");
                for t in &self.transitions {
                    out.push_str(&format!("- {} -> {} when {}\n", t.from_state, t.to_state, t.condition));
                }
                out.trim_end().to_string()
            }
        }
    }

    /// Every natural-language text in the plan.
    pub fn texts(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.steps.iter().map(String::as_str).collect();
        for s in &self.states {
            v.push(&s.name);
            v.push(&s.description);
        }
        for t in &self.transitions {
            v.push(&t.condition);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_json_shape() {
        let p: Plan = serde_json::from_str(
            r#"{"kind":"STATE_MACHINE","states":[{"name":"Idle","description":"wait"}],"transitions":[{"from":"Idle","to":"Idle","condition":"always"}]}"#,
        )
        .unwrap();
        assert_eq!(p.kind, PlanKind::StateMachine);
        assert_eq!(p.transitions[0].from_state, "Idle");
        assert_eq!(p.queries(), vec!["Idle wait".to_string(), "always".to_string()]);
    }

    #[test]
    fn task_defaults_to_function_block() {
        let t: Task = serde_json::from_str(r#"{"name":"a","req":"b"}"#).unwrap();
        assert_eq!(t.unit_kind, PouKind::FunctionBlock);
        assert!(t.io.is_empty());
    }
}
