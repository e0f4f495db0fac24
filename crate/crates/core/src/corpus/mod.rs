//! Classification datasets, task descriptions and stopword lists.
//!
//! Datasets are JSONL (`{"text", "text_b"?, "label"}`) or CSV with a
//! `text[,text_b],label` header. Labels are verbalizer strings and are
//! matched exactly (case-sensitive) against the task's verbalizer list.

pub mod builtin;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled example. `label` indexes into [`TaskSpec::verbalizers`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: usize,
}

/// Instruction, templates, verbalizers and stopwords for one task.
///
/// `template_in` carries one `{}` slot (or two for premise/hypothesis
/// tasks); `template_out` carries exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub verbalizers: Vec<String>,
    pub instruction: String,
    pub template_in: String,
    pub template_out: String,
    #[serde(default)]
    pub stopwords: Vec<String>,
    /// Truncate input texts to this many characters at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_chars: Option<usize>,
}

impl TaskSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn input_slots(&self) -> usize {
        count_slots(&self.template_in)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.verbalizers.iter().position(|v| v == label)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        let lower = word.to_lowercase();
        self.stopwords.iter().any(|s| *s == lower)
    }
}

pub fn count_slots(template: &str) -> usize {
    template.matches("{}").count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    InputSlots(usize),
    OutputSlots(usize),
    NoVerbalizers,
    EmptyVerbalizer(usize),
    VerbalizersNotDistinct(String),
    EmptyStopwords,
    LabelOutOfRange { record: usize, label: usize },
    EmptyText { record: usize },
    MissingSecondInput { record: usize },
    UnexpectedSecondInput { record: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InputSlots(n) => write!(f, "template_in has {n} slots, expected 1 or 2"),
            Violation::OutputSlots(n) => write!(f, "template_out has {n} slots, expected 1"),
            Violation::NoVerbalizers => write!(f, "no verbalizers"),
            Violation::EmptyVerbalizer(i) => write!(f, "verbalizer {i} is empty"),
            Violation::VerbalizersNotDistinct(v) => {
                write!(f, "verbalizers not distinct ({v:?} repeats)")
            }
            Violation::EmptyStopwords => write!(f, "stopword list is empty"),
            Violation::LabelOutOfRange { record, label } => {
                write!(f, "record {record}: label id {label} out of range")
            }
            Violation::EmptyText { record } => write!(f, "record {record}: empty text"),
            Violation::MissingSecondInput { record } => {
                write!(f, "record {record}: two-slot template but no text_b")
            }
            Violation::UnexpectedSecondInput { record } => {
                write!(f, "record {record}: one-slot template but text_b present")
            }
        }
    }
}

/// Checks the task's own invariants. Stopwords are not required here;
/// see [`require_stopwords`].
pub fn validate_task(task: &TaskSpec) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let slots_in = count_slots(&task.template_in);
    if !(1..=2).contains(&slots_in) {
        out.push(Violation::InputSlots(slots_in));
    }
    let slots_out = count_slots(&task.template_out);
    if slots_out != 1 {
        out.push(Violation::OutputSlots(slots_out));
    }
    if task.verbalizers.is_empty() {
        out.push(Violation::NoVerbalizers);
    }
    let mut seen = HashSet::new();
    for (i, v) in task.verbalizers.iter().enumerate() {
        if v.trim().is_empty() {
            out.push(Violation::EmptyVerbalizer(i));
        }
        if !seen.insert(v.as_str()) {
            out.push(Violation::VerbalizersNotDistinct(v.clone()));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn require_stopwords(task: &TaskSpec) -> std::result::Result<(), Vec<Violation>> {
    if task.stopwords.is_empty() {
        Err(vec![Violation::EmptyStopwords])
    } else {
        Ok(())
    }
}

/// Checks every record against the task shape.
pub fn validate_records(
    task: &TaskSpec,
    records: &[DatasetRecord],
) -> std::result::Result<(), Vec<Violation>> {
    let two_slot = task.input_slots() == 2;
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.label >= task.verbalizers.len() {
            out.push(Violation::LabelOutOfRange {
                record: i,
                label: r.label,
            });
        }
        if r.text_a.is_empty() {
            out.push(Violation::EmptyText { record: i });
        }
        match (two_slot, r.text_b.is_some()) {
            (true, false) => out.push(Violation::MissingSecondInput { record: i }),
            (false, true) => out.push(Violation::UnexpectedSecondInput { record: i }),
            _ => {}
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: String,
    #[serde(default)]
    text_b: Option<String>,
    label: String,
}

#[derive(Serialize)]
struct RawRecordOut<'a> {
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text_b: Option<&'a str>,
    label: &'a str,
}

/// Loads a JSONL or CSV dataset (chosen by the `.csv` extension).
pub fn load_dataset(path: &Path, task: &TaskSpec) -> Result<Vec<DatasetRecord>> {
    validate_task(task).map_err(Error::InvalidTask)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let raw = if is_csv {
        read_csv(path)?
    } else {
        read_jsonl(path)?
    };
    let mut records = Vec::with_capacity(raw.len());
    for (line, r) in raw {
        let label = task.label_id(&r.label).ok_or(Error::UnknownLabel {
            label: r.label.clone(),
            line,
        })?;
        let record = DatasetRecord {
            text_a: truncate_chars(r.text, task.max_chars),
            text_b: r.text_b.map(|t| truncate_chars(t, task.max_chars)),
            label,
        };
        records.push(record);
    }
    validate_records(task, &records).map_err(Error::InvalidTask)?;
    Ok(records)
}

fn truncate_chars(text: String, max: Option<usize>) -> String {
    match max {
        Some(n) if text.chars().count() > n => text.chars().take(n).collect(),
        _ => text,
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<(usize, RawRecord)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        out.push((line, rec));
    }
    Ok(out)
}

/// Writes records as JSONL with verbalizer strings as labels.
pub fn write_jsonl(path: &Path, task: &TaskSpec, records: &[DatasetRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        let label = task
            .verbalizers
            .get(r.label)
            .ok_or_else(|| Error::Config(format!("label id {} out of range", r.label)))?;
        let row = RawRecordOut {
            text: &r.text_a,
            text_b: r.text_b.as_deref(),
            label,
        };
        serde_json::to_writer(&mut buf, &row)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Parses a stopword list: one surface per line, the two-character escape
/// `\n` standing for the newline token. Blank lines are skipped and
/// duplicates dropped, keeping the first occurrence.
pub fn parse_stopword_list(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let surface = if line == "\\n" { "\n" } else { line };
        if seen.insert(surface.to_string()) {
            out.push(surface.to_string());
        }
    }
    out
}

pub fn load_stopword_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list = parse_stopword_list(&text);
    if list.is_empty() {
        return Err(Error::EmptyStopwords(path.to_path_buf()));
    }
    Ok(list)
}

pub fn write_stopword_list(path: &Path, words: &[String]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for w in words {
        let line = if w == "\n" { "\\n" } else { w.as_str() };
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
