//! Command-line verbs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_dataset, write_jsonl, DatasetRecord, TaskSpec};
use crate::error::{Error, Result};
use crate::experiment::{
    rows_from_csv, run_suite, Aggregates, DatasetConfig, ExperimentConfig, SettingConfig, TaskRef,
};
use crate::prompt::{build_prompt, sample_demo_records, PromptComponents};
use crate::report::{bars_csv, emit_markdown, Layout};
use crate::runtime::{ModelConfig, PosEncoding, WeightArchive};
use crate::synthetic;
use crate::tokenizer::{pre_tokenize, tokenizer_by_name, Vocabulary};

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATES_FILE: &str = "aggregates.json";
pub const REPORT_FILE: &str = "report.md";
pub const RUN_MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.json";

#[derive(Debug, Parser)]
#[command(name = "pct", version, about = "Token-type ablations for in-context learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment config and write results, aggregates, report and manifest.
    Run(RunArgs),
    /// List the tokens of one prompt with their classes.
    Inspect(InspectArgs),
    /// Render a finished run as a markdown table or plotting CSV.
    Report(ReportArgs),
    /// Write a randomly initialized weight archive.
    GenWeights(GenWeightsArgs),
    /// Write a toy classification task with splits, vocabulary and a sample config.
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "PCT_OUT_DIR", default_value = "pct-out")]
    pub out: PathBuf,
    /// Overrides the config's worker count.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Builtin task name or task JSON file.
    #[arg(long)]
    pub task: String,
    /// Demonstration as `LABEL=TEXT`; `TEXT_A|||TEXT_B` for two inputs.
    #[arg(long = "demo")]
    pub demos: Vec<String>,
    /// Dataset file to draw demonstrations from.
    #[arg(long)]
    pub demo_file: Option<PathBuf>,
    #[arg(long, requires = "demo_file")]
    pub shots: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub test: String,
    #[arg(long)]
    pub test_b: Option<String>,
    /// Vocabulary file; by default every word of the prompt is a token.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "word")]
    pub tokenizer: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `run`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "rep_ablation")]
    pub layout: Layout,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct GenWeightsArgs {
    /// Model config JSON; `vocab_size` is taken from the vocabulary.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub pos_encoding: Option<PosArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PosArg {
    Rotary,
    None,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PathBuf,
    pub config_sha256: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_run(args: &RunArgs) -> Result<RunManifest> {
    let started = now();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let table = run_suite(&cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let outputs: Vec<PathBuf> = [RESULTS_FILE, AGGREGATES_FILE, REPORT_FILE, RUN_MANIFEST_FILE]
        .iter()
        .map(|f| args.out.join(f))
        .collect();
    write(&outputs[0], table.to_csv()?)?;
    write(&outputs[1], table.aggregates.to_json()?)?;
    write(&outputs[2], emit_markdown(&table.aggregates, cfg.layout))?;
    let inputs = cfg
        .input_files()
        .into_iter()
        .map(|p| Ok(FileDigest { sha256: sha256_file(&p)?, path: p }))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: args.config.clone(),
        config_sha256: sha256_file(&args.config)?,
        started_unix: started,
        finished_unix: now(),
        inputs,
        outputs: outputs.clone(),
    };
    write(&outputs[3], serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn parse_demo(task: &TaskSpec, arg: &str) -> Result<DatasetRecord> {
    let (label, text) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("demo {arg:?} is not LABEL=TEXT")))?;
    let label = task
        .label_id(label)
        .ok_or_else(|| Error::Config(format!("demo label {label:?} is not a verbalizer")))?;
    let (a, b) = match text.split_once("|||") {
        Some((a, b)) => (a.trim().to_string(), Some(b.trim().to_string())),
        None => (text.to_string(), None),
    };
    Ok(DatasetRecord {
        text_a: a,
        text_b: b,
        label,
    })
}

/// Token listing for one prompt, as text rows or JSON.
pub fn cmd_inspect(args: &InspectArgs) -> Result<String> {
    let task = TaskRef::Named(args.task.clone()).load()?;
    let mut demos = args
        .demos
        .iter()
        .map(|d| parse_demo(&task, d))
        .collect::<Result<Vec<_>>>()?;
    if let Some(f) = &args.demo_file {
        let pool = load_dataset(f, &task)?;
        demos.extend(match args.shots {
            Some(k) => sample_demo_records(&pool, k, args.seed)?,
            None => pool,
        });
    }
    let test = DatasetRecord {
        text_a: args.test.clone(),
        text_b: args.test_b.clone(),
        label: 0,
    };
    let components = PromptComponents::standard(&task, &demos, &test)?;
    let vocab = match &args.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::from_words(pre_tokenize(&components.render())),
    };
    let tok = tokenizer_by_name(&args.tokenizer, Arc::new(vocab))?;
    let prompt = build_prompt(&components, &task.stopwords, tok.as_ref())?;
    let dump = prompt.dump(tok.as_ref())?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&dump)? + "\n");
    }
    let mut out = String::from("index\ttoken\tclass\tdemo\n");
    for (i, ((t, c), d)) in dump.tokens.iter().zip(&dump.classes).zip(&dump.demo_index).enumerate() {
        out.push_str(&format!("{i}\t{}\t{c}\t{d}\n", t.escape_debug()));
    }
    Ok(out)
}

/// Aggregates recomputed from a run's CSV rows.
pub fn load_run(dir: &Path) -> Result<Aggregates> {
    let rows = rows_from_csv(&read(&dir.join(RESULTS_FILE))?)?;
    let stored: Aggregates = serde_json::from_str(&read(&dir.join(AGGREGATES_FILE))?)?;
    stored.recompute(&rows)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let aggs = load_run(&args.run)?;
    match args.format {
        ReportFormat::Markdown => Ok(emit_markdown(&aggs, args.layout)),
        ReportFormat::Csv => bars_csv(&aggs),
    }
}

pub fn default_model_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 4,
        d_model: 64,
        d_ff: 256,
        vocab_size,
        max_positions: 2048,
        pos_encoding: PosEncoding::Rotary,
        norm_eps: 1e-5,
        tied_head: false,
        rope_theta: 10000.0,
    }
}

pub fn cmd_gen_weights(args: &GenWeightsArgs) -> Result<ModelConfig> {
    let vocab = Vocabulary::load(&args.vocab)?;
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str::<ModelConfig>(&read(p)?)?,
        None => default_model_config(vocab.len()),
    };
    cfg.vocab_size = cfg.vocab_size.max(vocab.len());
    if let Some(p) = args.pos_encoding {
        cfg.pos_encoding = match p {
            PosArg::Rotary => PosEncoding::Rotary,
            PosArg::None => PosEncoding::None,
        };
    }
    cfg.validate()?;
    WeightArchive::random_init(&cfg, args.seed).save(&args.out)?;
    vocab.save(&args.out.join(VOCAB_FILE))?;
    Ok(cfg)
}

pub fn cmd_gen_synthetic(args: &GenSyntheticArgs) -> Result<ExperimentConfig> {
    let c = synthetic::generate(args.classes, args.train, args.test, args.seed)?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("task.json"), serde_json::to_string_pretty(&c.task)? + "\n")?;
    write_jsonl(&out.join("train.jsonl"), &c.task, &c.train)?;
    write_jsonl(&out.join("test.jsonl"), &c.task, &c.test)?;
    c.vocab.save(&out.join(VOCAB_FILE))?;
    let cfg = ExperimentConfig {
        datasets: vec![DatasetConfig {
            name: None,
            task: TaskRef::Named("task.json".into()),
            train: "train.jsonl".into(),
            test: "test.jsonl".into(),
        }],
        model: "model".into(),
        vocab: None,
        tokenizer: "word".into(),
        scorer: "full".into(),
        precision: Default::default(),
        shots: 4,
        seeds: (1..=5).collect(),
        n_test: args.test,
        test_shuffle_seed: 0,
        settings: crate::experiment::CANONICAL
            .iter()
            .map(|s| SettingConfig::Preset(s.to_string()))
            .collect(),
        instruction_variant: None,
        delta: 10.0,
        layout: Layout::RepAblation,
        threads: None,
    };
    write(&out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    Ok(cfg)
}

/// One line, safe to grep: `error[kind]: message`.
pub fn error_line(e: &Error) -> String {
    format!("error[{}]: {}", e.kind(), e.to_string().replace('\n', "\\n"))
}

/// Runs a parsed command, printing to stdout. Returns the exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|m| {
            format!("wrote {}\n", m.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))
        }),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Report(a) => cmd_report(a),
        Command::GenWeights(a) => cmd_gen_weights(a).map(|c| {
            format!(
                "wrote {} ({} layers, d_model {}, vocab {})\n",
                a.out.display(),
                c.n_layers,
                c.d_model,
                c.vocab_size
            )
        }),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a).map(|_| {
            format!(
                "wrote {dir}; next: pct gen-weights --vocab {dir}/{VOCAB_FILE} --out {dir}/model\n",
                dir = a.out.display()
            )
        }),
    };
    match result {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            2
        }
    }
}
