//! Template variants: random-string cues, swapped cues and fixed word sets.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskSpec;
use crate::error::{Error, Result};
use crate::prompt::template::{cues, replace_cues};
use crate::prompt::{DemoTemplates, TemplatePair};

pub const RANDOM_CUE_LEN: usize = 15;

pub const NAMED_SETS: [&str; 4] = ["template1", "template2", "template3", "template4"];

/// Demonstrations per prompt for every named set.
pub const NAMED_SET_SHOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Standard,
    RandomFixed,
    RandomNonfixed,
    Swap,
    NamedSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateVariant {
    pub kind: VariantKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub templates: DemoTemplates,
}

impl TemplateVariant {
    pub fn standard(task: &TaskSpec) -> Self {
        TemplateVariant {
            kind: VariantKind::Standard,
            name: None,
            seed: None,
            templates: DemoTemplates::standard(task),
        }
    }
}

/// Serializable request for a variant, resolved against a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantSpec {
    Standard,
    RandomFixed { seed: u64 },
    RandomNonfixed { seed: u64 },
    Swap,
    NamedSet { name: String },
}

impl VariantSpec {
    pub fn materialize(&self, task: &TaskSpec, shots: usize) -> Result<TemplateVariant> {
        let base = TemplatePair::of_task(task);
        match self {
            VariantSpec::Standard => Ok(TemplateVariant::standard(task)),
            VariantSpec::RandomFixed { seed } => Ok(gen_random_template(&base, *seed, true, shots)),
            VariantSpec::RandomNonfixed { seed } => {
                Ok(gen_random_template(&base, *seed, false, shots))
            }
            VariantSpec::Swap => swap_templates(task),
            VariantSpec::NamedSet { name } => named_template_set(name),
        }
    }
}

fn random_cue(rng: &mut ChaCha8Rng) -> String {
    (0..RANDOM_CUE_LEN)
        .map(|_| rng.random_range(b'a'..=b'z') as char)
        .collect()
}

fn fresh_cues(rng: &mut ChaCha8Rng, n: usize, used: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let cue = random_cue(rng);
        if used.insert(cue.clone()) {
            out.push(cue);
        }
    }
    out
}

fn with_cues(base: &TemplatePair, new: &[String]) -> Result<TemplatePair> {
    let n_in = cues(&base.template_in).len();
    let (cin, cout): (Vec<&str>, Vec<&str>) = {
        let refs: Vec<&str> = new.iter().map(String::as_str).collect();
        (refs[..n_in].to_vec(), refs[n_in..].to_vec())
    };
    Ok(TemplatePair::new(
        replace_cues(&base.template_in, &cin)?,
        replace_cues(&base.template_out, &cout)?,
    ))
}

/// Replaces every cue with a random 15-letter string. `fixed` shares one
/// cue set across all demonstrations and the test; otherwise every cue in
/// the variant is distinct.
pub fn gen_random_template(
    base: &TemplatePair,
    seed: u64,
    fixed: bool,
    demo_count: usize,
) -> TemplateVariant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_pair = cues(&base.template_in).len() + cues(&base.template_out).len();
    let mut used = HashSet::new();
    let templates = if fixed {
        let c = fresh_cues(&mut rng, per_pair, &mut used);
        DemoTemplates::shared(with_cues(base, &c).expect("cue counts come from base"))
    } else {
        let mut pairs: Vec<TemplatePair> = (0..=demo_count)
            .map(|_| {
                let c = fresh_cues(&mut rng, per_pair, &mut used);
                with_cues(base, &c).expect("cue counts come from base")
            })
            .collect();
        let test = pairs.pop().expect("at least the test pair");
        DemoTemplates::PerDemo { demos: pairs, test }
    };
    TemplateVariant {
        kind: if fixed {
            VariantKind::RandomFixed
        } else {
            VariantKind::RandomNonfixed
        },
        name: None,
        seed: Some(seed),
        templates,
    }
}

/// Exchanges input and output cues. With two input slots the cues rotate:
/// (A, B | C) becomes (C, A | B).
pub fn swap_pair(pair: &TemplatePair) -> Result<TemplatePair> {
    let cin = cues(&pair.template_in);
    let cout = cues(&pair.template_out);
    if cout.len() != 1 || cin.is_empty() {
        return Err(Error::Template(format!(
            "cannot swap {} input cues with {} output cues",
            cin.len(),
            cout.len()
        )));
    }
    let all: Vec<&str> = cin.iter().chain(&cout).copied().collect();
    let distinct: HashSet<&str> = all.iter().copied().collect();
    if distinct.len() != all.len() {
        return Err(Error::Template(format!(
            "swap would be a no-op: repeated cue in {all:?}"
        )));
    }
    let mut rotated = vec![cout[0]];
    rotated.extend(&cin[..cin.len() - 1]);
    Ok(TemplatePair::new(
        replace_cues(&pair.template_in, &rotated)?,
        replace_cues(&pair.template_out, &[cin[cin.len() - 1]])?,
    ))
}

pub fn swap_templates(task: &TaskSpec) -> Result<TemplateVariant> {
    Ok(TemplateVariant {
        kind: VariantKind::Swap,
        name: None,
        seed: None,
        templates: DemoTemplates::shared(swap_pair(&TemplatePair::of_task(task))?),
    })
}

fn cue_pair(cin: &str, cout: &str) -> TemplatePair {
    TemplatePair::new(format!("{cin}: {{}}\n"), format!("{cout}: {{}}\n\n"))
}

/// Word-cue sets for single-input tasks. `template1` and `template3` use
/// different cues for each of three demonstrations and the test;
/// `template2` and `template4` repeat one pair.
pub fn named_template_set(which: &str) -> Result<TemplateVariant> {
    let per_demo = |demos: [(&str, &str); NAMED_SET_SHOTS], test: (&str, &str)| DemoTemplates::PerDemo {
        demos: demos.iter().map(|&(a, b)| cue_pair(a, b)).collect(),
        test: cue_pair(test.0, test.1),
    };
    let templates = match which {
        "template1" => per_demo(
            [("dog", "cat"), ("juice", "wine"), ("sleep", "wake")],
            ("bunny", "easter"),
        ),
        "template2" => DemoTemplates::shared(cue_pair("dog", "cat")),
        "template3" => per_demo(
            [("article", "answer"), ("input", "output"), ("text", "label")],
            ("sentence", "result"),
        ),
        "template4" => DemoTemplates::shared(cue_pair("article", "answer")),
        other => return Err(Error::UnknownTemplateSet(other.to_string())),
    };
    Ok(TemplateVariant {
        kind: VariantKind::NamedSet,
        name: Some(which.to_string()),
        seed: None,
        templates,
    })
}
