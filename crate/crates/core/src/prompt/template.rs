use serde::{Deserialize, Serialize};

use crate::corpus::TaskSpec;
use crate::error::{Error, Result};

/// One input template and one output template.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplatePair {
    pub template_in: String,
    pub template_out: String,
}

impl TemplatePair {
    pub fn new(template_in: impl Into<String>, template_out: impl Into<String>) -> Self {
        TemplatePair {
            template_in: template_in.into(),
            template_out: template_out.into(),
        }
    }

    pub fn of_task(task: &TaskSpec) -> Self {
        Self::new(task.template_in.clone(), task.template_out.clone())
    }
}

/// Templates for every demonstration and for the test example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemoTemplates {
    Shared(TemplatePair),
    PerDemo { demos: Vec<TemplatePair>, test: TemplatePair },
}

impl DemoTemplates {
    pub fn shared(pair: TemplatePair) -> Self {
        DemoTemplates::Shared(pair)
    }

    pub fn standard(task: &TaskSpec) -> Self {
        Self::shared(TemplatePair::of_task(task))
    }

    pub fn for_demo(&self, i: usize, shots: usize) -> Result<&TemplatePair> {
        match self {
            DemoTemplates::Shared(pair) => Ok(pair),
            DemoTemplates::PerDemo { demos, .. } => {
                if demos.len() != shots {
                    return Err(Error::Template(format!(
                        "template set covers {} demonstrations, prompt has {shots}",
                        demos.len()
                    )));
                }
                Ok(&demos[i])
            }
        }
    }

    pub fn for_test(&self) -> &TemplatePair {
        match self {
            DemoTemplates::Shared(pair) => pair,
            DemoTemplates::PerDemo { test, .. } => test,
        }
    }

    /// Every pair in prompt order, test last.
    pub fn pairs(&self, shots: usize) -> Vec<&TemplatePair> {
        match self {
            DemoTemplates::Shared(pair) => vec![pair; shots + 1],
            DemoTemplates::PerDemo { demos, test } => demos.iter().chain([test]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece<'a> {
    Literal(&'a str),
    Slot,
}

pub fn split_template(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(i) = rest.find("{}") {
        if i > 0 {
            out.push(Piece::Literal(&rest[..i]));
        }
        out.push(Piece::Slot);
        rest = &rest[i + 2..];
    }
    if !rest.is_empty() {
        out.push(Piece::Literal(rest));
    }
    out
}

/// Text of `template_out` up to its slot, without trailing whitespace:
/// the cue the test example ends on.
pub fn output_prefix(template_out: &str) -> &str {
    let head = template_out.split("{}").next().unwrap_or("");
    head.trim_end_matches([' ', '\t'])
}

/// Cue words of a template: for each colon, the text before it on the
/// same line.
pub fn cues(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in template.split('\n') {
        let mut start = 0;
        for (i, _) in line.match_indices(':') {
            let seg = &line[start..i];
            let seg = seg.rsplit("{}").next().unwrap_or(seg).trim();
            if !seg.is_empty() {
                out.push(seg);
            }
            start = i + 1;
        }
    }
    out
}

/// Replaces cue words in order; the number of replacements must match.
pub fn replace_cues(template: &str, new: &[&str]) -> Result<String> {
    let found = cues(template);
    if found.len() != new.len() {
        return Err(Error::Template(format!(
            "template {template:?} has {} cues, got {} replacements",
            found.len(),
            new.len()
        )));
    }
    let mut out = String::with_capacity(template.len());
    let mut cursor = 0;
    let mut next = new.iter();
    for cue in found {
        let at = cursor + template[cursor..].find(cue).expect("cue located earlier");
        out.push_str(&template[cursor..at]);
        out.push_str(next.next().expect("counts checked"));
        cursor = at + cue.len();
    }
    out.push_str(&template[cursor..]);
    Ok(out)
}

/// Removes cue words (with their colons and following spaces), keeping
/// slots and newlines.
pub fn strip_cues(template: &str) -> String {
    let mut out = String::new();
    for piece in split_template(template) {
        match piece {
            Piece::Slot => out.push_str("{}"),
            Piece::Literal(text) => out.extend(text.chars().filter(|&c| c == '\n')),
        }
    }
    out
}
