//! Prompt templates with `{placeholder}` substitution.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

const TARGET_CLASS: &str = include_str!("../../prompts/target_class.txt");
const VIEW_SELECTION: &str = include_str!("../../prompts/view_selection.txt");
const CANDIDATE_SCREENING: &str = include_str!("../../prompts/candidate_screening.txt");
const JOINT_DECISION: &str = include_str!("../../prompts/joint_decision.txt");
const VISUAL_FALLBACK: &str = include_str!("../../prompts/visual_fallback.txt");

/// Appended to a prompt when the first reply could not be used.
pub const REASK_SUFFIX: &str =
    "\n\nYour previous reply could not be used. Answer again with only the JSON object described above.\n";

/// Lead-ins that precede the candidate id list in the templates.
const ID_LIST_LEAD_INS: [&str; 2] = [
    "The object ID should be chosen from this list: ",
    "Object IDs to choose from: ",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TargetClass,
    ViewSelection,
    VisualFallback,
    CandidateScreening,
    JointDecision,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::TargetClass,
        Stage::ViewSelection,
        Stage::VisualFallback,
        Stage::CandidateScreening,
        Stage::JointDecision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TargetClass => "target_class",
            Stage::ViewSelection => "view_selection",
            Stage::VisualFallback => "visual_fallback",
            Stage::CandidateScreening => "candidate_screening",
            Stage::JointDecision => "joint_decision",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            Stage::TargetClass => TARGET_CLASS,
            Stage::ViewSelection => VIEW_SELECTION,
            Stage::VisualFallback => VISUAL_FALLBACK,
            Stage::CandidateScreening => CANDIDATE_SCREENING,
            Stage::JointDecision => JOINT_DECISION,
        }
    }

    /// First line of the template; identifies the stage of a rendered prompt.
    pub fn header(self) -> &'static str {
        self.template().lines().next().unwrap_or_default()
    }

    pub fn detect(prompt: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| prompt.starts_with(s.header()))
    }
}

/// Replaces each `{name}` whose name is a key of `vars`. Other braces,
/// including the JSON examples in the templates, are left as written.
pub fn render_template(template: &str, vars: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        match vars.get(name) {
            Some(value) if name_len > 0 && after[name_len..].starts_with('}') => {
                out.push_str(value);
                rest = &after[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// `[3, 5, 8]`
pub fn format_id_list(ids: &[u32]) -> String {
    let inner: Vec<String> = ids.iter().map(u32::to_string).collect();
    format!("[{}]", inner.join(", "))
}

pub fn target_class_prompt(text: &str) -> String {
    render_template(TARGET_CLASS, &HashMap::from([("text", text.to_string())]))
}

pub fn view_selection_prompt(target_class: &str, text: &str) -> String {
    render_template(
        VIEW_SELECTION,
        &HashMap::from([("target_class", target_class.to_string()), ("text", text.to_string())]),
    )
}

pub fn candidate_screening_prompt(target_class: &str, text: &str, n_topk: usize, ids: &[u32]) -> String {
    render_template(
        CANDIDATE_SCREENING,
        &HashMap::from([
            ("target_class", target_class.to_string()),
            ("text", text.to_string()),
            ("n_topk", n_topk.to_string()),
            ("object_id_list", format_id_list(ids)),
        ]),
    )
}

pub fn joint_decision_prompt(target_class: &str, text: &str, ids: &[u32]) -> String {
    render_template(
        JOINT_DECISION,
        &HashMap::from([
            ("target_class", target_class.to_string()),
            ("text", text.to_string()),
            ("object_id_list", format_id_list(ids)),
        ]),
    )
}

pub fn visual_fallback_prompt(target_class: &str, text: &str, ids: &[u32]) -> String {
    render_template(
        VISUAL_FALLBACK,
        &HashMap::from([
            ("target_class", target_class.to_string()),
            ("text", text.to_string()),
            ("object_id_list", format_id_list(ids)),
        ]),
    )
}

/// Candidate ids listed in a rendered screening, fallback or joint prompt.
pub fn extract_id_list(prompt: &str) -> Option<Vec<u32>> {
    ID_LIST_LEAD_INS.iter().find_map(|lead| {
        let start = prompt.find(lead)? + lead.len();
        let line = prompt[start..].lines().next()?;
        serde_json::from_str(line.trim()).ok()
    })
}

/// The `k` of a rendered screening prompt ("top-4").
pub fn extract_top_k(prompt: &str) -> Option<usize> {
    let start = prompt.find("select top-")? + "select top-".len();
    let digits: String = prompt[start..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}
