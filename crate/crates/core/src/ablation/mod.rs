//! Ablation specs and what they turn into: visibility plans for the test
//! example (representation level) or rewritten prompt components (token
//! level).

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::template::strip_cues;
use crate::prompt::{Component, PromptComponents, SpanMap, TokenClass};
use crate::runtime::VisibilityPlan;
use crate::tokenizer::{join_words, pre_tokenize, NEWLINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Representation,
    Token,
}

/// `Keep`: zero-shot plus the listed classes. `Drop`: standard ICL minus them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Keep,
    Drop,
}

/// Selectable classes. `Temp` stands for its three subclasses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassSel {
    Cont,
    Stop,
    Temp,
    TempIn,
    TempOut,
    Colon,
    Newline,
}

impl ClassSel {
    pub fn expand(self) -> &'static [TokenClass] {
        match self {
            ClassSel::Cont => &[TokenClass::Cont],
            ClassSel::Stop => &[TokenClass::Stop],
            ClassSel::Temp => &[TokenClass::TempIn, TokenClass::TempOut, TokenClass::Colon],
            ClassSel::TempIn => &[TokenClass::TempIn],
            ClassSel::TempOut => &[TokenClass::TempOut],
            ClassSel::Colon => &[TokenClass::Colon],
            ClassSel::Newline => &[TokenClass::Newline],
        }
    }
}

impl fmt::Display for ClassSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassSel::Cont => "CONT",
            ClassSel::Stop => "STOP",
            ClassSel::Temp => "TEMP",
            ClassSel::TempIn => "TEMP_IN",
            ClassSel::TempOut => "TEMP_OUT",
            ClassSel::Colon => "COLON",
            ClassSel::Newline => "NEWLINE",
        };
        f.write_str(s)
    }
}

/// How demo newline keys are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewlinePolicy {
    /// Hidden whenever STOP or any template subclass is hidden.
    #[default]
    MaskIfEither,
    /// Follows its own segment: template newlines go with their template
    /// subclass, input newlines with STOP.
    OwnClassOnly,
    /// Always visible.
    NeverMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BosPolicy {
    #[default]
    Keep,
    Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropScope {
    #[default]
    DemosAndTest,
    DemosOnly,
}

/// Candidate pool for fixed-size random subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubsetPool {
    Cont,
    Stop,
    Temp,
    All,
}

impl SubsetPool {
    pub fn contains(self, c: TokenClass) -> bool {
        match self {
            SubsetPool::Cont => c == TokenClass::Cont,
            SubsetPool::Stop => c == TokenClass::Stop,
            SubsetPool::Temp => c.is_template(),
            SubsetPool::All => c.is_template() || matches!(c, TokenClass::Cont | TokenClass::Stop | TokenClass::Newline),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSubset {
    pub pool: SubsetPool,
    pub n: usize,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    #[serde(default)]
    pub mode: Mode,
    pub direction: Direction,
    #[serde(default)]
    pub classes: BTreeSet<ClassSel>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub include_labels: bool,
    #[serde(default, skip_serializing_if = "is_default")]
    pub newline_policy: NewlinePolicy,
    #[serde(default, skip_serializing_if = "is_default")]
    pub bos_policy: BosPolicy,
    #[serde(default, skip_serializing_if = "is_default")]
    pub token_drop_scope: DropScope,
    /// Token-level template drop keeps the test example's output cue.
    #[serde(default, skip_serializing_if = "is_default")]
    pub retain_test_cue: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_subset: Option<RandomSubset>,
}

impl AblationSpec {
    pub fn new(mode: Mode, direction: Direction, classes: &[ClassSel]) -> Self {
        AblationSpec {
            mode,
            direction,
            classes: classes.iter().copied().collect(),
            include_labels: true,
            newline_policy: NewlinePolicy::default(),
            bos_policy: BosPolicy::default(),
            token_drop_scope: DropScope::default(),
            retain_test_cue: false,
            random_subset: None,
        }
    }

    pub fn keep(classes: &[ClassSel]) -> Self {
        Self::new(Mode::Representation, Direction::Keep, classes)
    }

    pub fn drop(classes: &[ClassSel]) -> Self {
        Self::new(Mode::Representation, Direction::Drop, classes)
    }

    pub fn token_drop(classes: &[ClassSel]) -> Self {
        Self::new(Mode::Token, Direction::Drop, classes)
    }

    pub fn with_newline_policy(mut self, p: NewlinePolicy) -> Self {
        self.newline_policy = p;
        self
    }

    fn chosen(&self) -> BTreeSet<TokenClass> {
        self.classes
            .iter()
            .flat_map(|c| c.expand().iter().copied())
            .collect()
    }

    /// Classes a spec can select.
    pub fn universe(&self) -> BTreeSet<TokenClass> {
        [
            TokenClass::Cont,
            TokenClass::Stop,
            TokenClass::TempIn,
            TokenClass::TempOut,
            TokenClass::Colon,
        ]
        .into()
    }

    fn check_classes(&self) -> Result<()> {
        if self.classes.contains(&ClassSel::Newline) {
            return Err(Error::Ablation(
                "NEWLINE is not selectable; set newline_policy instead".into(),
            ));
        }
        Ok(())
    }

    /// Prompt classes (before the test span) the test example may see.
    pub fn effective_keep(&self) -> Result<BTreeSet<TokenClass>> {
        self.check_classes()?;
        let chosen = self.chosen();
        let universe = self.universe();
        let mut keep: BTreeSet<TokenClass> = match self.direction {
            Direction::Keep => chosen.intersection(&universe).copied().collect(),
            Direction::Drop => universe.difference(&chosen).copied().collect(),
        };
        match self.newline_policy {
            NewlinePolicy::NeverMask => {
                keep.insert(TokenClass::Newline);
            }
            NewlinePolicy::OwnClassOnly => {}
            NewlinePolicy::MaskIfEither => {
                let all_visible = [
                    TokenClass::Stop,
                    TokenClass::TempIn,
                    TokenClass::TempOut,
                    TokenClass::Colon,
                ]
                .iter()
                .all(|c| keep.contains(c));
                if all_visible {
                    keep.insert(TokenClass::Newline);
                }
            }
        }
        keep.insert(TokenClass::Instr);
        if self.bos_policy == BosPolicy::Keep {
            keep.insert(TokenClass::Bos);
        }
        if self.include_labels {
            keep.insert(TokenClass::Label);
        }
        Ok(keep)
    }
}

impl fmt::Display for AblationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.direction {
            Direction::Keep => "+",
            Direction::Drop => "-",
        };
        let classes: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        let mode = match self.mode {
            Mode::Representation => "rep",
            Mode::Token => "tok",
        };
        write!(f, "{mode}{sign}{{{}}}", classes.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutcome {
    pub plan: VisibilityPlan,
    /// Selected classes with no tokens in the prompt.
    pub warnings: Vec<String>,
}

fn plan_from_keep(spans: &SpanMap, visible: impl Fn(usize) -> bool) -> VisibilityPlan {
    let ts = spans.test_start();
    VisibilityPlan::from_fn(spans.len(), |q, k| q < ts || k >= ts || visible(k))
        .expect("rule is causal and keeps the diagonal")
}

/// Visibility plan for a representation-level spec.
pub fn build_plan(spans: &SpanMap, spec: &AblationSpec) -> Result<PlanOutcome> {
    if spec.mode != Mode::Representation {
        return Err(Error::Ablation("build_plan needs a representation-mode spec".into()));
    }
    if let Some(rs) = &spec.random_subset {
        let out = subset_plan(spans, rs.pool, rs.n, rs.seed)?;
        let warnings = out.shortfall_warning().into_iter().collect();
        return Ok(PlanOutcome {
            plan: out.plan,
            warnings,
        });
    }
    let keep = spec.effective_keep()?;
    let ts = spans.test_start();
    let present: HashSet<TokenClass> = spans.spans[..ts].iter().map(|s| s.class).collect();
    let mut warnings = Vec::new();
    for c in &spec.classes {
        if !c.expand().iter().any(|x| present.contains(x)) {
            warnings.push(format!("class {c} has no tokens in this prompt"));
        }
    }
    let own = spec.newline_policy == NewlinePolicy::OwnClassOnly;
    let plan = plan_from_keep(spans, |k| {
        let s = &spans.spans[k];
        let class = if own && s.class == TokenClass::Newline {
            newline_owner(s.component)
        } else {
            s.class
        };
        keep.contains(&class)
    });
    Ok(PlanOutcome { plan, warnings })
}

fn newline_owner(component: Component) -> TokenClass {
    match component {
        Component::TemplateIn => TokenClass::TempIn,
        Component::TemplateOut => TokenClass::TempOut,
        _ => TokenClass::Stop,
    }
}

/// The opposite-direction spec selecting the remaining classes, which
/// yields the same plan.
pub fn complement(spec: &AblationSpec) -> Result<AblationSpec> {
    spec.check_classes()?;
    let chosen = spec.chosen();
    let universe = spec.universe();
    if let Some(c) = chosen.iter().find(|c| !universe.contains(c)) {
        return Err(Error::Ablation(format!("{c} is outside the complement universe")));
    }
    let rest: BTreeSet<TokenClass> = universe.difference(&chosen).copied().collect();
    let mut classes = BTreeSet::new();
    let temp = [TokenClass::TempIn, TokenClass::TempOut, TokenClass::Colon];
    if temp.iter().all(|t| rest.contains(t)) {
        classes.insert(ClassSel::Temp);
    }
    for c in rest {
        let sel = match c {
            TokenClass::Cont => Some(ClassSel::Cont),
            TokenClass::Stop => Some(ClassSel::Stop),
            t if classes.contains(&ClassSel::Temp) && temp.contains(&t) => None,
            TokenClass::TempIn => Some(ClassSel::TempIn),
            TokenClass::TempOut => Some(ClassSel::TempOut),
            TokenClass::Colon => Some(ClassSel::Colon),
            _ => None,
        };
        classes.extend(sel);
    }
    let mut out = spec.clone();
    out.direction = match spec.direction {
        Direction::Keep => Direction::Drop,
        Direction::Drop => Direction::Keep,
    };
    out.classes = classes;
    Ok(out)
}

fn filter_words(text: &str, mut keep: impl FnMut(&str) -> bool) -> String {
    let words: Vec<&str> = pre_tokenize(text).into_iter().filter(|w| keep(w)).collect();
    join_words(&words)
}

/// Token-level ablation: rewrites the prompt text before encoding.
///
/// STOP and CONT remove words from demonstration inputs. A listed `\n` is
/// removed from inputs with STOP; otherwise newlines in inputs stay. TEMP
/// removes cue words and colons from templates, keeping slots and
/// newlines. Instruction and labels are never touched.
pub fn drop_tokens(
    components: &PromptComponents,
    spec: &AblationSpec,
    stopwords: &[String],
) -> Result<PromptComponents> {
    if spec.mode != Mode::Token {
        return Err(Error::Ablation("drop_tokens needs a token-mode spec".into()));
    }
    let coarse = [ClassSel::Cont, ClassSel::Stop, ClassSel::Temp];
    if let Some(c) = spec.classes.iter().find(|c| !coarse.contains(c)) {
        return Err(Error::Ablation(format!(
            "token-level ablation takes CONT, STOP or TEMP, not {c}"
        )));
    }
    let dropped: BTreeSet<ClassSel> = match spec.direction {
        Direction::Drop => spec.classes.clone(),
        Direction::Keep => coarse
            .iter()
            .filter(|c| !spec.classes.contains(c))
            .copied()
            .collect(),
    };
    let stops: HashSet<String> = stopwords.iter().map(|s| s.to_lowercase()).collect();
    let drop_stop = dropped.contains(&ClassSel::Stop);
    let drop_cont = dropped.contains(&ClassSel::Cont);
    let drop_temp = dropped.contains(&ClassSel::Temp);

    let mut out = components.clone();
    for d in &mut out.demos {
        if drop_stop || drop_cont {
            for input in &mut d.inputs {
                *input = filter_words(input, |w| {
                    let is_stop = stops.contains(&w.to_lowercase());
                    if w == NEWLINE {
                        return !(drop_stop && is_stop);
                    }
                    !((drop_stop && is_stop) || (drop_cont && !is_stop))
                });
            }
        }
        if drop_temp {
            d.templates.template_in = strip_cues(&d.templates.template_in);
            d.templates.template_out = strip_cues(&d.templates.template_out);
        }
    }
    if drop_temp && spec.token_drop_scope == DropScope::DemosAndTest {
        let t = &mut out.test_templates;
        t.template_in = strip_cues(&t.template_in);
        if !spec.retain_test_cue {
            t.template_out = strip_cues(&t.template_out);
        }
    }
    Ok(out)
}

/// Plan keeping labels (plus instruction and BOS) and a seeded sample of
/// prompt positions from one pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetOutcome {
    pub plan: VisibilityPlan,
    pub requested: usize,
    pub available: usize,
    pub kept: Vec<usize>,
}

impl SubsetOutcome {
    pub fn shortfall(&self) -> usize {
        self.requested.saturating_sub(self.available)
    }

    fn shortfall_warning(&self) -> Option<String> {
        (self.shortfall() > 0).then(|| {
            format!(
                "requested {} tokens, only {} available",
                self.requested, self.available
            )
        })
    }
}

pub fn subset_plan(spans: &SpanMap, pool: SubsetPool, n: usize, seed: u64) -> Result<SubsetOutcome> {
    let ts = spans.test_start();
    let candidates: Vec<usize> = (0..ts).filter(|&k| pool.contains(spans.class(k))).collect();
    let take = n.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    kept.sort_unstable();
    let chosen: HashSet<usize> = kept.iter().copied().collect();
    let plan = plan_from_keep(spans, |k| {
        matches!(
            spans.class(k),
            TokenClass::Label | TokenClass::Instr | TokenClass::Bos
        ) || chosen.contains(&k)
    });
    Ok(SubsetOutcome {
        plan,
        requested: n,
        available: candidates.len(),
        kept,
    })
}
