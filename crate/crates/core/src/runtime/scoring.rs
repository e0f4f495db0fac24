use std::sync::Arc;

use super::model::LanguageModel;
use super::plan::VisibilityPlan;
use crate::error::{Error, Result};
use crate::prompt::BuiltPrompt;
use crate::tokenizer::{TokenId, Tokenizer};

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Turns next-token logits after a prompt into one score per verbalizer.
pub trait LabelScorer: Send + Sync {
    fn name(&self) -> &'static str;

    /// `plan = None` means full causal attention. Verbalizers are
    /// non-empty token sequences continuing the prompt.
    fn score(
        &self,
        lm: &dyn LanguageModel,
        prompt: &[TokenId],
        plan: Option<&VisibilityPlan>,
        verbalizers: &[Vec<TokenId>],
    ) -> Result<Vec<f64>>;
}

fn check_verbalizers(verbalizers: &[Vec<TokenId>]) -> Result<()> {
    match verbalizers.iter().position(Vec::is_empty) {
        Some(i) => Err(Error::EmptyVerbalizer(i)),
        None => Ok(()),
    }
}

fn last_position(prompt: &[TokenId]) -> Result<usize> {
    prompt
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidPlan("cannot score after an empty prompt".into()))
}

/// Summed teacher-forced log-probability of every verbalizer token.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullVerbalizer;

impl LabelScorer for FullVerbalizer {
    fn name(&self) -> &'static str {
        "full"
    }

    fn score(
        &self,
        lm: &dyn LanguageModel,
        prompt: &[TokenId],
        plan: Option<&VisibilityPlan>,
        verbalizers: &[Vec<TokenId>],
    ) -> Result<Vec<f64>> {
        check_verbalizers(verbalizers)?;
        let last = last_position(prompt)?;
        let mut scores = vec![0.0; verbalizers.len()];
        if verbalizers.iter().any(|v| v.len() == 1) {
            let lp = log_softmax(&lm.logits(prompt, plan, &[last])?[0]);
            for (s, v) in scores.iter_mut().zip(verbalizers) {
                if v.len() == 1 {
                    *s = lp[v[0].index()];
                }
            }
        }
        for (s, v) in scores.iter_mut().zip(verbalizers) {
            if v.len() == 1 {
                continue;
            }
            let extra = v.len() - 1;
            let mut seq = prompt.to_vec();
            seq.extend_from_slice(&v[..extra]);
            let ext = plan.map(|p| p.extend(extra));
            let positions: Vec<usize> = (last..last + v.len()).collect();
            let rows = lm.logits(&seq, ext.as_ref(), &positions)?;
            *s = rows
                .iter()
                .zip(v)
                .map(|(r, t)| log_softmax(r)[t.index()])
                .sum();
        }
        Ok(scores)
    }
}

/// Log-probability of the first verbalizer token only.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstToken;

impl LabelScorer for FirstToken {
    fn name(&self) -> &'static str {
        "first_token"
    }

    fn score(
        &self,
        lm: &dyn LanguageModel,
        prompt: &[TokenId],
        plan: Option<&VisibilityPlan>,
        verbalizers: &[Vec<TokenId>],
    ) -> Result<Vec<f64>> {
        check_verbalizers(verbalizers)?;
        let last = last_position(prompt)?;
        let lp = log_softmax(&lm.logits(prompt, plan, &[last])?[0]);
        Ok(verbalizers.iter().map(|v| lp[v[0].index()]).collect())
    }
}

pub const SCORER_NAMES: [&str; 2] = ["full", "first_token"];

pub fn scorer_by_name(name: &str) -> Result<Arc<dyn LabelScorer>> {
    match name {
        "full" => Ok(Arc::new(FullVerbalizer)),
        "first_token" => Ok(Arc::new(FirstToken)),
        other => Err(Error::UnknownStrategy {
            kind: "label scorer",
            name: other.to_string(),
        }),
    }
}

/// Scores each verbalizer string as a continuation of the prompt. The
/// verbalizer is tokenized as its own words, so it follows the final cue
/// as a separate word.
pub fn score_labels(
    prompt: &BuiltPrompt,
    plan: Option<&VisibilityPlan>,
    verbalizers: &[String],
    tok: &dyn Tokenizer,
    lm: &dyn LanguageModel,
    scorer: &dyn LabelScorer,
) -> Result<Vec<f64>> {
    let mut encoded = Vec::with_capacity(verbalizers.len());
    for (i, v) in verbalizers.iter().enumerate() {
        let ids = tok.tokenize(v)?;
        if ids.is_empty() {
            return Err(Error::EmptyVerbalizer(i));
        }
        encoded.push(ids);
    }
    scorer.score(lm, &prompt.tokens, plan, &encoded)
}
