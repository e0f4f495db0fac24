//! Sweeps over settings, seeds and datasets, with aggregates and
//! significance tests.

mod setting;
mod stats;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use setting::{
    setting_by_name, CustomSetting, Perturbed, Renamed, RepAblation, Setting, SettingConfig,
    Standard, TokenAblation, ZeroShot, CANONICAL, PRESETS, STANDARD, ZERO_SHOT,
};
pub use stats::{
    accuracy, delta_avg, format_pct, format_signed, ln_gamma, mean, paired_t_test, pct_verdict,
    regularized_beta, round_half_away, student_t_two_sided, TTest,
};

use crate::ablation::ClassSel;
use crate::corpus::{builtin, load_dataset, DatasetRecord, TaskSpec};
use crate::error::{Error, Result, ResultExt};
use crate::prompt::{build_prompt, sample_demo_records, BuiltPrompt, PromptComponents, TokenClass};
use crate::report::Layout;
use crate::runtime::{argmax, load_model, score_labels, scorer_by_name, LabelScorer, LanguageModel, Precision};
use crate::tokenizer::{tokenizer_by_name, Tokenizer, Vocabulary};

pub const SIGNIFICANCE: f64 = 0.05;

/// Task given by builtin name, by JSON file path, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskRef {
    Named(String),
    Inline(TaskSpec),
}

impl TaskRef {
    pub fn path(&self) -> Option<&Path> {
        match self {
            TaskRef::Named(n) if !builtin::TASK_NAMES.contains(&n.as_str()) => Some(Path::new(n)),
            _ => None,
        }
    }

    pub fn load(&self) -> Result<TaskSpec> {
        match self {
            TaskRef::Inline(t) => Ok(t.clone()),
            TaskRef::Named(n) => match self.path() {
                Some(p) => TaskSpec::from_json_file(p),
                None => builtin::task(n),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Defaults to the task name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub task: TaskRef,
    pub train: PathBuf,
    pub test: PathBuf,
}

fn default_tokenizer() -> String {
    "word".into()
}

fn default_scorer() -> String {
    "full".into()
}

fn default_shots() -> usize {
    4
}

fn default_seeds() -> Vec<u64> {
    (1..=15).collect()
}

fn default_n_test() -> usize {
    500
}

fn default_settings() -> Vec<SettingConfig> {
    CANONICAL.iter().map(|s| SettingConfig::Preset(s.to_string())).collect()
}

fn default_delta() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetConfig>,
    /// Weight archive directory.
    pub model: PathBuf,
    /// Defaults to `vocab.json` inside the model directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default = "default_scorer")]
    pub scorer: String,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub test_shuffle_seed: u64,
    #[serde(default = "default_settings")]
    pub settings: Vec<SettingConfig>,
    /// 1-based index into the builtin alternative instructions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_variant: Option<usize>,
    /// Margin in points for the performance-critical verdict.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub layout: Layout,
    /// Worker threads; absent uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.model);
        if let Some(v) = &mut self.vocab {
            rebase(base, v);
        }
        for d in &mut self.datasets {
            rebase(base, &mut d.train);
            rebase(base, &mut d.test);
            if let TaskRef::Named(n) = &mut d.task {
                if !builtin::TASK_NAMES.contains(&n.as_str()) && Path::new(n).is_relative() {
                    *n = base.join(&*n).to_string_lossy().into_owned();
                }
            }
        }
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.vocab.clone().unwrap_or_else(|| self.model.join("vocab.json"))
    }

    /// Every file whose bytes can change the results.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut out = vec![
            self.model.join(crate::runtime::MANIFEST_FILE),
            self.model.join(crate::runtime::BLOB_FILE),
            self.vocab_path(),
        ];
        for d in &self.datasets {
            out.extend(d.task.path().map(Path::to_path_buf));
            out.push(d.train.clone());
            out.push(d.test.clone());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        unique(self.settings.iter().map(SettingConfig::name), "setting")?;
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        unique(self.seeds.iter().map(|s| s.to_string()), "seed")?;
        if self.n_test == 0 {
            return Err(Error::Config("n_test must be positive".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("delta must be non-negative, got {}", self.delta)));
        }
        Ok(())
    }
}

fn unique<S: AsRef<str>>(names: impl Iterator<Item = S>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_ref().to_string()) {
            return Err(Error::Config(format!("duplicate {what} {:?}", n.as_ref())));
        }
    }
    Ok(())
}

pub struct LoadedDataset {
    pub name: String,
    pub task: TaskSpec,
    pub train: Vec<DatasetRecord>,
    /// Already shuffled and cut to `n_test`.
    pub test: Vec<DatasetRecord>,
}

/// First `n_test` records after a seeded shuffle.
pub fn sample_test(records: &[DatasetRecord], n_test: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    if n_test > records.len() {
        return Err(Error::Config(format!(
            "n_test {n_test} exceeds test split of {} records",
            records.len()
        )));
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(idx[..n_test].iter().map(|&i| records[i].clone()).collect())
}

/// Everything a sweep needs, loaded.
pub struct Suite {
    pub datasets: Vec<LoadedDataset>,
    pub settings: Vec<Box<dyn Setting>>,
    pub seeds: Vec<u64>,
    pub shots: usize,
    pub delta: f64,
    pub lm: Arc<dyn LanguageModel>,
    pub tok: Arc<dyn Tokenizer>,
    pub scorer: Arc<dyn LabelScorer>,
    pub threads: Option<usize>,
}

impl Suite {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (model_cfg, lm) = load_model(&cfg.model, cfg.precision)?;
        let vocab = Arc::new(Vocabulary::load(&cfg.vocab_path())?);
        if vocab.len() > model_cfg.vocab_size {
            return Err(Error::ModelConfig(format!(
                "vocabulary has {} entries but the model only {}",
                vocab.len(),
                model_cfg.vocab_size
            )));
        }
        let tok = tokenizer_by_name(&cfg.tokenizer, vocab)?;
        let scorer = scorer_by_name(&cfg.scorer)?;
        let mut datasets = Vec::with_capacity(cfg.datasets.len());
        for d in &cfg.datasets {
            let mut task = d.task.load()?;
            if let Some(i) = cfg.instruction_variant {
                task.instruction = builtin::instruction_variant(&task.name, i)?;
            }
            let name = d.name.clone().unwrap_or_else(|| task.name.clone());
            let train = load_dataset(&d.train, &task)?;
            let test = load_dataset(&d.test, &task)?;
            let test = sample_test(&test, cfg.n_test, cfg.test_shuffle_seed)
                .context(|| format!("dataset {name}"))?;
            datasets.push(LoadedDataset { name, task, train, test });
        }
        unique(datasets.iter().map(|d| d.name.as_str()), "dataset")?;
        let settings = cfg
            .settings
            .iter()
            .map(SettingConfig::resolve)
            .collect::<Result<Vec<_>>>()?;
        Ok(Suite {
            datasets,
            settings,
            seeds: cfg.seeds.clone(),
            shots: cfg.shots,
            delta: cfg.delta,
            lm,
            tok,
            scorer,
            threads: cfg.threads,
        })
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

struct Job<'a> {
    dataset: &'a LoadedDataset,
    setting: &'a dyn Setting,
    seed: u64,
    demos: Vec<DatasetRecord>,
    templates: crate::prompt::DemoTemplates,
}

impl Job<'_> {
    fn label(&self) -> String {
        format!(
            "setting {}, dataset {}, seed {}",
            self.setting.name(),
            self.dataset.name,
            self.seed
        )
    }
}

struct Outcome {
    prediction: usize,
    warnings: Vec<String>,
}

fn predict(suite: &Suite, job: &Job, test: &DatasetRecord) -> Result<Outcome> {
    let task = &job.dataset.task;
    let c = PromptComponents::new(task, &job.demos, test, &job.templates)?;
    let c = job.setting.rewrite(c, task)?;
    let prompt = build_prompt(&c, &task.stopwords, suite.tok.as_ref())?;
    let outcome = job.setting.plan(&prompt)?;
    let plan = outcome.as_ref().map(|o| &o.plan);
    let scores = score_labels(
        &prompt,
        plan,
        &task.verbalizers,
        suite.tok.as_ref(),
        suite.lm.as_ref(),
        suite.scorer.as_ref(),
    )?;
    Ok(Outcome {
        prediction: argmax(&scores),
        warnings: outcome.map(|o| o.warnings).unwrap_or_default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub setting: String,
    pub dataset: String,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingInfo {
    pub name: String,
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingAggregate {
    pub name: String,
    pub reference: Option<String>,
    /// Mean accuracy over seeds, in points.
    pub per_dataset: BTreeMap<String, f64>,
    pub avg: f64,
    pub delta_avg: Option<f64>,
}

/// JSON has no infinities; constant paired differences give t = ±inf.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            x if x.is_finite() => s.serialize_f64(x),
            x if x.is_nan() => s.serialize_str("nan"),
            x if x > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub setting: String,
    pub reference: String,
    pub dataset: String,
    #[serde(with = "lenient_f64")]
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub class: ClassSel,
    pub keep_only: f64,
    pub zero_shot: f64,
    pub standard: f64,
    pub dropped: f64,
    pub delta: f64,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub datasets: Vec<String>,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub settings: Vec<SettingAggregate>,
    pub t_tests: Vec<PairTest>,
    pub verdicts: Vec<Verdict>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Mean tokens per class over standard prompts, by dataset.
    #[serde(default)]
    pub token_counts: BTreeMap<String, BTreeMap<TokenClass, f64>>,
}

fn per_seed<'a>(rows: &'a [ResultRow], setting: &str, dataset: &str, seeds: &[u64]) -> Result<Vec<f64>> {
    seeds
        .iter()
        .map(|&seed| {
            rows.iter()
                .find(|r| r.setting == setting && r.dataset == dataset && r.seed == seed)
                .map(|r| r.accuracy)
                .ok_or_else(|| {
                    Error::Config(format!("no row for setting {setting}, dataset {dataset}, seed {seed}"))
                })
        })
        .collect()
}

impl Aggregates {
    /// Everything here is a function of the rows and the setting list.
    pub fn compute(
        rows: &[ResultRow],
        settings: &[SettingInfo],
        datasets: &[String],
        seeds: &[u64],
        delta: f64,
    ) -> Result<Self> {
        let mut aggs = Vec::with_capacity(settings.len());
        for s in settings {
            let mut per_dataset = BTreeMap::new();
            for d in datasets {
                let accs = per_seed(rows, &s.name, d, seeds)?;
                per_dataset.insert(d.clone(), 100.0 * mean(&accs));
            }
            let avg = mean(&per_dataset.values().copied().collect::<Vec<_>>());
            aggs.push(SettingAggregate {
                name: s.name.clone(),
                reference: s.reference.clone(),
                per_dataset,
                avg,
                delta_avg: None,
            });
        }
        let lookup: BTreeMap<String, BTreeMap<String, f64>> = aggs
            .iter()
            .map(|a| (a.name.clone(), a.per_dataset.clone()))
            .collect();
        let mut t_tests = Vec::new();
        for a in &mut aggs {
            let Some(r) = a.reference.as_deref() else { continue };
            let Some(ref_rows) = lookup.get(r) else { continue };
            a.delta_avg = Some(delta_avg(&a.per_dataset, ref_rows)?);
            if seeds.len() < 2 {
                continue;
            }
            for d in datasets {
                let x = per_seed(rows, &a.name, d, seeds)?;
                let y = per_seed(rows, r, d, seeds)?;
                let t = paired_t_test(&x, &y)?;
                t_tests.push(PairTest {
                    setting: a.name.clone(),
                    reference: r.to_string(),
                    dataset: d.clone(),
                    t: t.t,
                    df: t.df,
                    p: t.p,
                    significant: t.significant(SIGNIFICANCE),
                });
            }
        }
        let avg_of = |n: &str| aggs.iter().find(|a| a.name == n).map(|a| a.avg);
        let mut verdicts = Vec::new();
        for (class, suffix) in [(ClassSel::Cont, "cont"), (ClassSel::Stop, "stop"), (ClassSel::Temp, "temp")] {
            let found = (
                avg_of(&format!("zs+{suffix}")),
                avg_of(ZERO_SHOT),
                avg_of(STANDARD),
                avg_of(&format!("icl-{suffix}")),
            );
            if let (Some(keep_only), Some(zero_shot), Some(standard), Some(dropped)) = found {
                verdicts.push(Verdict {
                    class,
                    keep_only,
                    zero_shot,
                    standard,
                    dropped,
                    delta,
                    critical: pct_verdict(keep_only, zero_shot, standard, dropped, delta),
                });
            }
        }
        Ok(Aggregates {
            datasets: datasets.to_vec(),
            seeds: seeds.to_vec(),
            delta,
            settings: aggs,
            t_tests,
            verdicts,
            warnings: Vec::new(),
            token_counts: BTreeMap::new(),
        })
    }

    pub fn setting_infos(&self) -> Vec<SettingInfo> {
        self.settings
            .iter()
            .map(|s| SettingInfo {
                name: s.name.clone(),
                reference: s.reference.clone(),
            })
            .collect()
    }

    /// Recomputes from rows, carrying over warnings and token counts.
    pub fn recompute(&self, rows: &[ResultRow]) -> Result<Self> {
        let mut a = Self::compute(rows, &self.setting_infos(), &self.datasets, &self.seeds, self.delta)?;
        a.warnings = self.warnings.clone();
        a.token_counts = self.token_counts.clone();
        Ok(a)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Aggregates,
}

impl ResultTable {
    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv utf-8: {e}")))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Mean token count per class, every class listed.
pub fn token_count_report(prompts: &[BuiltPrompt]) -> BTreeMap<TokenClass, f64> {
    let mut totals: BTreeMap<TokenClass, usize> = TokenClass::ALL.iter().map(|&c| (c, 0)).collect();
    for p in prompts {
        for (c, n) in p.spans.counts() {
            *totals.entry(c).or_default() += n;
        }
    }
    let n = prompts.len().max(1) as f64;
    totals.into_iter().map(|(c, t)| (c, t as f64 / n)).collect()
}

/// TEMP_IN + TEMP_OUT + COLON from a per-class report.
pub fn template_total(report: &BTreeMap<TokenClass, f64>) -> f64 {
    [TokenClass::TempIn, TokenClass::TempOut, TokenClass::Colon]
        .iter()
        .map(|c| report.get(c).copied().unwrap_or(0.0))
        .sum()
}

/// Runs every (setting, dataset, seed) cell. Rows come out in setting,
/// dataset, seed order regardless of scheduling.
pub fn run_loaded(suite: &Suite) -> Result<ResultTable> {
    let mut jobs = Vec::new();
    for setting in &suite.settings {
        for dataset in &suite.datasets {
            for &seed in &suite.seeds {
                let shots = setting.shots(suite.shots);
                let label = || format!("setting {}, dataset {}, seed {seed}", setting.name(), dataset.name);
                let demos = sample_demo_records(&dataset.train, shots, seed).context(label)?;
                let templates = setting.templates(&dataset.task, shots, seed).context(label)?;
                jobs.push(Job {
                    dataset,
                    setting: setting.as_ref(),
                    seed,
                    demos,
                    templates,
                });
            }
        }
    }
    let work: Vec<(usize, usize)> = jobs
        .iter()
        .enumerate()
        .flat_map(|(j, job)| (0..job.dataset.test.len()).map(move |i| (j, i)))
        .collect();
    let outcomes: Vec<Result<Outcome>> = suite.install(|| {
        work.par_iter()
            .map(|&(j, i)| {
                let job = &jobs[j];
                predict(suite, job, &job.dataset.test[i])
                    .context(|| format!("{}, example {i}", job.label()))
            })
            .collect()
    })?;
    let mut outcomes = outcomes.into_iter();
    let mut rows = Vec::with_capacity(jobs.len());
    let mut warnings = BTreeSet::new();
    for job in &jobs {
        let gold: Vec<usize> = job.dataset.test.iter().map(|r| r.label).collect();
        let mut preds = Vec::with_capacity(gold.len());
        for _ in 0..gold.len() {
            let o = outcomes.next().expect("one outcome per work item")?;
            for w in o.warnings {
                warnings.insert(format!("{} on {}: {w}", job.setting.name(), job.dataset.name));
            }
            preds.push(o.prediction);
        }
        rows.push(ResultRow {
            setting: job.setting.name().to_string(),
            dataset: job.dataset.name.clone(),
            seed: job.seed,
            accuracy: accuracy(&preds, &gold).context(|| job.label())?,
        });
    }
    let infos: Vec<SettingInfo> = suite
        .settings
        .iter()
        .map(|s| SettingInfo {
            name: s.name().to_string(),
            reference: s.reference().map(str::to_string),
        })
        .collect();
    let names: Vec<String> = suite.datasets.iter().map(|d| d.name.clone()).collect();
    let mut aggregates = Aggregates::compute(&rows, &infos, &names, &suite.seeds, suite.delta)?;
    aggregates.warnings = warnings.into_iter().collect();
    aggregates.token_counts = suite.install(|| standard_token_counts(suite))??;
    Ok(ResultTable { rows, aggregates })
}

fn standard_token_counts(suite: &Suite) -> Result<BTreeMap<String, BTreeMap<TokenClass, f64>>> {
    let mut out = BTreeMap::new();
    for d in &suite.datasets {
        let cells: Vec<(u64, usize)> = suite
            .seeds
            .iter()
            .flat_map(|&s| (0..d.test.len()).map(move |i| (s, i)))
            .collect();
        let prompts = cells
            .par_iter()
            .map(|&(seed, i)| {
                let demos = sample_demo_records(&d.train, suite.shots, seed)?;
                let c = PromptComponents::standard(&d.task, &demos, &d.test[i])?;
                build_prompt(&c, &d.task.stopwords, suite.tok.as_ref())
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(d.name.clone(), token_count_report(&prompts));
    }
    Ok(out)
}

pub fn run_suite(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_loaded(&Suite::from_config(cfg)?)
}

#[cfg(test)]
mod tests;
