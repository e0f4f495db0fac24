//! Markdown tables for result aggregates, and a parser for reading them back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{format_pct, format_signed, Aggregates, SettingAggregate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    RepAblation,
    TokenAblation,
    Perturbation,
}

impl Layout {
    fn title(self) -> &'static str {
        match self {
            Layout::RepAblation => "Representation-level ablation",
            Layout::TokenAblation => "Token-level ablation",
            Layout::Perturbation => "Template perturbation",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::RepAblation => "rep_ablation",
            Layout::TokenAblation => "token_ablation",
            Layout::Perturbation => "perturbation",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rep_ablation" => Ok(Layout::RepAblation),
            "token_ablation" => Ok(Layout::TokenAblation),
            "perturbation" => Ok(Layout::Perturbation),
            other => Err(Error::UnknownStrategy {
                kind: "layout",
                name: other.to_string(),
            }),
        }
    }
}

/// Display label for a setting name.
pub fn row_label(name: &str) -> String {
    let class = |p: &str| name.strip_prefix(p).filter(|s| ["cont", "stop", "temp"].contains(s));
    if let Some(c) = class("zs+") {
        return format!("+ {c}");
    }
    if let Some(c) = class("icl-").or_else(|| class("tok-")) {
        return format!("- {c}");
    }
    match name {
        "zero-shot" => "Zero-shot".into(),
        "standard" => "Standard ICL".into(),
        "random-fixed" => "Random_fixed".into(),
        "random-nonfixed" => "Random_nonfixed".into(),
        "swap" => "Swap".into(),
        n if n.starts_with("template") && n.len() == 9 => format!("Template{}", &n[8..]),
        n => n.to_string(),
    }
}

/// Reference rows first, each followed by the rows compared against it,
/// in config order.
fn groups(settings: &[SettingAggregate]) -> Vec<Vec<&SettingAggregate>> {
    let present = |n: &str| settings.iter().any(|s| s.name == n);
    let head_of = |s: &SettingAggregate| match s.reference.as_deref() {
        Some(r) if present(r) => r.to_string(),
        _ => s.name.clone(),
    };
    let mut heads: Vec<String> = Vec::new();
    for s in settings {
        let h = head_of(s);
        if !heads.contains(&h) {
            heads.push(h);
        }
    }
    heads
        .iter()
        .map(|h| {
            let mut g: Vec<&SettingAggregate> = settings.iter().filter(|s| s.name == *h).collect();
            g.extend(settings.iter().filter(|s| s.name != *h && head_of(s) == *h));
            g
        })
        .collect()
}

fn bold(s: String, on: bool) -> String {
    if on {
        format!("**{s}**")
    } else {
        s
    }
}

pub fn emit_markdown(aggs: &Aggregates, layout: Layout) -> String {
    let with_delta = aggs.settings.iter().any(|s| s.delta_avg.is_some());
    let mut out = format!("## {}\n\n", layout.title());
    let mut header = vec!["Setting".to_string()];
    header.extend(aggs.datasets.iter().cloned());
    header.push("Avg.".into());
    if with_delta {
        header.push("ΔAvg.".into());
    }
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    let mut sep = vec![":---".to_string()];
    sep.extend((1..header.len()).map(|_| "---:".to_string()));
    out.push_str(&format!("|{}|\n", sep.join("|")));

    for g in groups(&aggs.settings) {
        let value = |s: &SettingAggregate, col: usize| match aggs.datasets.get(col) {
            Some(d) => s.per_dataset[d],
            None => s.avg,
        };
        let n_cols = aggs.datasets.len() + 1;
        let best: Vec<f64> = (0..n_cols)
            .map(|c| g.iter().map(|s| value(s, c)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let worst = g
            .iter()
            .filter_map(|s| s.delta_avg.filter(|d| *d < 0.0).map(|d| (s.name.as_str(), d)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n);
        for s in &g {
            let mut cells = vec![row_label(&s.name)];
            for c in 0..n_cols {
                let v = value(s, c);
                cells.push(bold(format_pct(v), g.len() > 1 && v == best[c]));
            }
            if with_delta {
                cells.push(match s.delta_avg {
                    Some(d) if worst == Some(s.name.as_str()) => format!("<u>{}</u>", format_signed(d)),
                    Some(d) => format_signed(d),
                    None => String::new(),
                });
            }
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub columns: Vec<String>,
    pub rows: Vec<ParsedRow>,
}

fn cells(line: &str) -> Vec<String> {
    line.trim()
        .trim_matches('|')
        .split('|')
        .map(|c| c.trim().to_string())
        .collect()
}

fn number(cell: &str) -> Result<Option<f64>> {
    let bare = cell.replace("**", "").replace("<u>", "").replace("</u>", "");
    let bare = bare.trim().trim_start_matches('+');
    if bare.is_empty() {
        return Ok(None);
    }
    bare.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("table cell {cell:?} is not a number")))
}

/// Reads the first table in `text`. Columns exclude the label column.
pub fn parse_markdown(text: &str) -> Result<ParsedTable> {
    let mut lines = text.lines().skip_while(|l| !l.trim_start().starts_with('|'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("no table found".into()))?;
    let columns = cells(header).into_iter().skip(1).collect::<Vec<_>>();
    lines.next();
    let mut rows = Vec::new();
    for l in lines.take_while(|l| l.trim_start().starts_with('|')) {
        let c = cells(l);
        if c.len() != columns.len() + 1 {
            return Err(Error::Config(format!("row {l:?} has {} cells", c.len())));
        }
        rows.push(ParsedRow {
            label: c[0].clone(),
            values: c[1..].iter().map(|x| number(x)).collect::<Result<_>>()?,
        });
    }
    Ok(ParsedTable { columns, rows })
}

/// Long-form series (setting, dataset, accuracy in points) for plotting;
/// the `Avg.` pseudo-dataset carries each setting's average.
pub fn bars_csv(aggs: &Aggregates) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["setting", "dataset", "accuracy"])?;
    for s in &aggs.settings {
        for d in &aggs.datasets {
            w.write_record([s.name.as_str(), d.as_str(), &s.per_dataset[d].to_string()])?;
        }
        w.write_record([s.name.as_str(), "Avg.", &s.avg.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv utf-8: {e}")))
}
