//! Prompt assembly with per-token span bookkeeping.
//!
//! Layout: `BOS · I · Σ_i (T_in(x_i) · T_out(y_i)) · T_in(x_test) · cue`,
//! where `cue` is the output template up to its slot (e.g. `Answer:`).
//! Every prompt segment is tokenized on its own, so each token knows which
//! component it came from.

pub mod template;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{count_slots, DatasetRecord, TaskSpec};
use crate::error::{Error, Result};
use crate::tokenizer::{pre_tokenize, TokenId, Tokenizer, NEWLINE};
pub use template::{DemoTemplates, TemplatePair};
use template::{output_prefix, split_template, Piece};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenClass {
    Bos,
    Instr,
    TempIn,
    TempOut,
    Colon,
    Newline,
    Stop,
    Cont,
    Label,
    TestIn,
    TestTemp,
}

impl TokenClass {
    pub const ALL: [TokenClass; 11] = [
        TokenClass::Bos,
        TokenClass::Instr,
        TokenClass::TempIn,
        TokenClass::TempOut,
        TokenClass::Colon,
        TokenClass::Newline,
        TokenClass::Stop,
        TokenClass::Cont,
        TokenClass::Label,
        TokenClass::TestIn,
        TokenClass::TestTemp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TokenClass::Bos => "BOS",
            TokenClass::Instr => "INSTR",
            TokenClass::TempIn => "TEMP_IN",
            TokenClass::TempOut => "TEMP_OUT",
            TokenClass::Colon => "COLON",
            TokenClass::Newline => "NEWLINE",
            TokenClass::Stop => "STOP",
            TokenClass::Cont => "CONT",
            TokenClass::Label => "LABEL",
            TokenClass::TestIn => "TEST_IN",
            TokenClass::TestTemp => "TEST_TEMP",
        }
    }

    /// Template cue words and colons.
    pub fn is_template(self) -> bool {
        matches!(self, TokenClass::TempIn | TokenClass::TempOut | TokenClass::Colon)
    }

    pub fn is_test(self) -> bool {
        matches!(self, TokenClass::TestIn | TokenClass::TestTemp)
    }
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TokenClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TokenClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Ablation(format!("unknown token class {s:?}")))
    }
}

/// Prompt component a token was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Bos,
    Instruction,
    TemplateIn,
    TemplateOut,
    Input,
    Label,
    TestTemplateIn,
    TestTemplateOut,
    TestInput,
}

/// Where a token came from: component, demonstration, and the byte offset
/// of its word inside the segment text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub component: Component,
    pub demo_index: i32,
    pub offset: usize,
    /// Index into [`BuiltPrompt::words`].
    pub word: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub class: TokenClass,
    pub demo_index: i32,
    pub component: Component,
    pub offset: usize,
}

/// Class, demonstration index and origin for every token of a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpanMap {
    pub spans: Vec<Span>,
}

impl SpanMap {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn class(&self, i: usize) -> TokenClass {
        self.spans[i].class
    }

    pub fn classes(&self) -> impl Iterator<Item = TokenClass> + '_ {
        self.spans.iter().map(|s| s.class)
    }

    pub fn positions_of(&self, class: TokenClass) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.class(i) == class).collect()
    }

    pub fn counts(&self) -> BTreeMap<TokenClass, usize> {
        let mut out = BTreeMap::new();
        for c in self.classes() {
            *out.entry(c).or_insert(0) += 1;
        }
        out
    }

    pub fn count(&self, class: TokenClass) -> usize {
        self.classes().filter(|&c| c == class).count()
    }

    /// First position belonging to the test example, or the length when
    /// there is none.
    pub fn test_start(&self) -> usize {
        self.spans
            .iter()
            .position(|s| s.class.is_test())
            .unwrap_or(self.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub inputs: Vec<String>,
    pub label: String,
    pub templates: TemplatePair,
}

/// Prompt text before tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptComponents {
    pub instruction: String,
    pub demos: Vec<Demonstration>,
    pub test_inputs: Vec<String>,
    pub test_templates: TemplatePair,
}

fn record_inputs(r: &DatasetRecord) -> Vec<String> {
    let mut v = vec![r.text_a.clone()];
    v.extend(r.text_b.clone());
    v
}

impl PromptComponents {
    pub fn new(
        task: &TaskSpec,
        demos: &[DatasetRecord],
        test: &DatasetRecord,
        templates: &DemoTemplates,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(demos.len());
        for (i, d) in demos.iter().enumerate() {
            let label = task
                .verbalizers
                .get(d.label)
                .ok_or_else(|| Error::Template(format!("demo {i}: label id {} out of range", d.label)))?;
            out.push(Demonstration {
                inputs: record_inputs(d),
                label: label.clone(),
                templates: templates.for_demo(i, demos.len())?.clone(),
            });
        }
        let c = PromptComponents {
            instruction: task.instruction.clone(),
            demos: out,
            test_inputs: record_inputs(test),
            test_templates: templates.for_test().clone(),
        };
        c.check_slots()?;
        Ok(c)
    }

    pub fn standard(task: &TaskSpec, demos: &[DatasetRecord], test: &DatasetRecord) -> Result<Self> {
        Self::new(task, demos, test, &DemoTemplates::standard(task))
    }

    fn check_slots(&self) -> Result<()> {
        let pairs = self
            .demos
            .iter()
            .map(|d| (&d.templates, d.inputs.len()))
            .chain([(&self.test_templates, self.test_inputs.len())]);
        for (i, (t, n)) in pairs.enumerate() {
            let slots = count_slots(&t.template_in);
            if slots != n {
                return Err(Error::Template(format!(
                    "segment {i}: template_in {:?} has {slots} slots for {n} inputs",
                    t.template_in
                )));
            }
            if count_slots(&t.template_out) != 1 {
                return Err(Error::Template(format!(
                    "template_out {:?} needs exactly one slot",
                    t.template_out
                )));
            }
        }
        Ok(())
    }

    /// Full prompt text, test cue included, BOS excluded.
    pub fn render(&self) -> String {
        let mut s = self.instruction.clone();
        for d in &self.demos {
            s.push_str(&fill(&d.templates.template_in, &d.inputs));
            s.push_str(&fill(&d.templates.template_out, std::slice::from_ref(&d.label)));
        }
        s.push_str(&fill(&self.test_templates.template_in, &self.test_inputs));
        s.push_str(output_prefix(&self.test_templates.template_out));
        s
    }
}

fn fill(template: &str, values: &[String]) -> String {
    let mut out = String::new();
    let mut vals = values.iter();
    for p in split_template(template) {
        match p {
            Piece::Literal(t) => out.push_str(t),
            Piece::Slot => out.push_str(vals.next().map(String::as_str).unwrap_or("")),
        }
    }
    out
}

/// Token sequence with spans. `label_slot` is where the answer would start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltPrompt {
    pub tokens: Vec<TokenId>,
    pub origins: Vec<Origin>,
    pub words: Vec<String>,
    pub spans: SpanMap,
    pub test_start: usize,
    pub label_slot: usize,
}

impl BuiltPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn demo_count(&self) -> usize {
        self.origins
            .iter()
            .filter(|o| o.component == Component::Label)
            .map(|o| o.demo_index)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn dump(&self, tok: &dyn Tokenizer) -> Result<PromptDump> {
        let mut tokens = Vec::with_capacity(self.len());
        for &t in &self.tokens {
            tokens.push(tok.vocab().surface(t)?.to_string());
        }
        Ok(PromptDump {
            tokens,
            classes: self.spans.classes().collect(),
            demo_index: self.spans.spans.iter().map(|s| s.demo_index).collect(),
        })
    }
}

/// Golden-file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDump {
    pub tokens: Vec<String>,
    pub classes: Vec<TokenClass>,
    pub demo_index: Vec<i32>,
}

struct Builder<'a> {
    tok: &'a dyn Tokenizer,
    tokens: Vec<TokenId>,
    origins: Vec<Origin>,
    words: Vec<String>,
}

impl Builder<'_> {
    fn push(&mut self, text: &str, component: Component, demo_index: i32) -> Result<()> {
        for w in pre_tokenize(text) {
            let offset = w.as_ptr() as usize - text.as_ptr() as usize;
            let word = self.words.len();
            self.words.push(w.to_string());
            for id in self.tok.encode_word(w)? {
                self.tokens.push(id);
                self.origins.push(Origin {
                    component,
                    demo_index,
                    offset,
                    word,
                });
            }
        }
        Ok(())
    }

    fn push_template(
        &mut self,
        template: &str,
        values: &[String],
        literal: Component,
        slot: Component,
        demo_index: i32,
    ) -> Result<()> {
        let mut vals = values.iter();
        for p in split_template(template) {
            match p {
                Piece::Literal(t) => self.push(t, literal, demo_index)?,
                Piece::Slot => {
                    let v = vals.next().expect("slot counts checked");
                    self.push(v, slot, demo_index)?
                }
            }
        }
        Ok(())
    }
}

/// Tokenizes components into a prompt and classifies every token.
pub fn build_prompt(
    components: &PromptComponents,
    stopwords: &[String],
    tok: &dyn Tokenizer,
) -> Result<BuiltPrompt> {
    components.check_slots()?;
    let mut b = Builder {
        tok,
        tokens: vec![tok.vocab().bos()],
        origins: vec![Origin {
            component: Component::Bos,
            demo_index: -1,
            offset: 0,
            word: 0,
        }],
        words: vec![String::new()],
    };
    b.push(&components.instruction, Component::Instruction, -1)?;
    for (i, d) in components.demos.iter().enumerate() {
        let i = i as i32;
        b.push_template(&d.templates.template_in, &d.inputs, Component::TemplateIn, Component::Input, i)?;
        b.push_template(
            &d.templates.template_out,
            std::slice::from_ref(&d.label),
            Component::TemplateOut,
            Component::Label,
            i,
        )?;
    }
    let t = components.demos.len() as i32;
    let test_start = b.tokens.len();
    b.push_template(
        &components.test_templates.template_in,
        &components.test_inputs,
        Component::TestTemplateIn,
        Component::TestInput,
        t,
    )?;
    b.push(
        output_prefix(&components.test_templates.template_out),
        Component::TestTemplateOut,
        t,
    )?;
    let mut prompt = BuiltPrompt {
        label_slot: b.tokens.len(),
        tokens: b.tokens,
        origins: b.origins,
        words: b.words,
        spans: SpanMap::default(),
        test_start,
    };
    prompt.spans = classify_with(&prompt, &stopword_set(stopwords));
    Ok(prompt)
}

/// Standard-template prompt for a task.
pub fn assemble_prompt(
    task: &TaskSpec,
    demos: &[DatasetRecord],
    test: &DatasetRecord,
    tok: &dyn Tokenizer,
) -> Result<BuiltPrompt> {
    let c = PromptComponents::standard(task, demos, test)?;
    build_prompt(&c, &task.stopwords, tok)
}

fn stopword_set(stopwords: &[String]) -> HashSet<String> {
    stopwords.iter().map(|s| s.to_lowercase()).collect()
}

/// Recomputes token classes from origins and the task's stopwords.
pub fn classify_spans(prompt: &BuiltPrompt, task: &TaskSpec) -> SpanMap {
    classify_with(prompt, &stopword_set(&task.stopwords))
}

fn classify_with(prompt: &BuiltPrompt, stopwords: &HashSet<String>) -> SpanMap {
    let spans = prompt
        .origins
        .iter()
        .map(|o| {
            let word = prompt.words[o.word].as_str();
            Span {
                class: class_of(o.component, word, stopwords),
                demo_index: o.demo_index,
                component: o.component,
                offset: o.offset,
            }
        })
        .collect();
    SpanMap { spans }
}

fn class_of(component: Component, word: &str, stopwords: &HashSet<String>) -> TokenClass {
    match component {
        Component::Bos => TokenClass::Bos,
        Component::Instruction => TokenClass::Instr,
        Component::TemplateIn | Component::TemplateOut if word == ":" => TokenClass::Colon,
        Component::TemplateIn | Component::TemplateOut if word == NEWLINE => TokenClass::Newline,
        Component::TemplateIn => TokenClass::TempIn,
        Component::TemplateOut => TokenClass::TempOut,
        Component::Input if word == NEWLINE => TokenClass::Newline,
        Component::Input if stopwords.contains(&word.to_lowercase()) => TokenClass::Stop,
        Component::Input => TokenClass::Cont,
        Component::Label => TokenClass::Label,
        Component::TestInput => TokenClass::TestIn,
        Component::TestTemplateIn | Component::TestTemplateOut => TokenClass::TestTemp,
    }
}

/// Draws `k` distinct indices below `size`, in draw order.
pub fn sample_demonstrations(size: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > size {
        return Err(Error::Sampling { k, size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, size, k).into_vec())
}

pub fn sample_demo_records(
    dataset: &[DatasetRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    Ok(sample_demonstrations(dataset.len(), k, seed)?
        .into_iter()
        .map(|i| dataset[i].clone())
        .collect())
}
