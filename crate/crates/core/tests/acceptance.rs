//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so every line is printed even when an earlier check fails.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pct::ablation::{build_plan, drop_tokens, AblationSpec, ClassSel, NewlinePolicy};
use pct::corpus::{builtin, DatasetRecord, TaskSpec};
use pct::experiment::{
    delta_avg, mean, paired_t_test, run_loaded, setting_by_name, LoadedDataset, Suite, CANONICAL,
};
use pct::perturbation::{gen_random_template, swap_pair, RANDOM_CUE_LEN};
use pct::prompt::template::cues;
use pct::prompt::{
    assemble_prompt, build_prompt, classify_spans, sample_demo_records, Component, PromptComponents,
    TemplatePair, TokenClass,
};
use pct::runtime::{
    build_model, score_labels, FullVerbalizer, Model, ModelConfig, PosEncoding, Precision,
    VisibilityPlan, WeightArchive,
};
use pct::synthetic;
use pct::tokenizer::{pre_tokenize, Tokenizer, Vocabulary, WordTokenizer};

struct Check {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Result<String, String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn word_vocab(texts: &[String]) -> Arc<Vocabulary> {
    let mut words = Vec::new();
    for t in texts {
        words.extend(pre_tokenize(t).into_iter().map(str::to_string));
    }
    Arc::new(Vocabulary::from_words(words))
}

fn components_vocab(c: &PromptComponents, extra: &[String]) -> Arc<Vocabulary> {
    let mut texts = vec![c.render()];
    texts.extend(extra.iter().cloned());
    word_vocab(&texts)
}

fn rec(text: &str, label: usize) -> DatasetRecord {
    DatasetRecord {
        text_a: text.into(),
        text_b: None,
        label,
    }
}

// Accuracy rows per model in dataset order AGNews, SST2, TREC, DBPedia, RTE, CB,
// followed by the printed summary column.
struct TableBlock {
    model: &'static str,
    rows: [(&'static str, [f64; 6]); 8],
    printed: [f64; 8],
}

const BLOCKS: [TableBlock; 3] = [
    TableBlock {
        model: "Llama 2 7B",
        rows: [
            ("zero-shot", [50.2, 50.4, 57.2, 6.4, 51.6, 0.0]),
            ("zs+cont", [0.9, 61.0, 50.6, 12.9, 48.7, 53.2]),
            ("zs+stop", [49.0, 78.1, 54.4, 61.6, 65.3, 47.9]),
            ("zs+temp", [81.1, 82.6, 55.2, 65.5, 63.9, 55.4]),
            ("standard", [85.0, 93.2, 58.3, 66.7, 66.3, 55.0]),
            ("icl-cont", [82.4, 85.5, 54.3, 64.2, 59.6, 55.7]),
            ("icl-stop", [84.8, 88.0, 51.7, 65.7, 65.8, 53.2]),
            ("icl-temp", [0.9, 61.0, 50.6, 12.9, 48.5, 53.6]),
        ],
        printed: [36.0, 1.9, 23.4, 31.3, 70.7, -3.8, -2.5, -32.8],
    },
    TableBlock {
        model: "OpenLlama 3B",
        rows: [
            ("zero-shot", [22.0, 20.0, 23.6, 5.4, 44.4, 1.8]),
            ("zs+cont", [26.2, 52.1, 30.1, 7.4, 51.9, 37.9]),
            ("zs+stop", [36.7, 82.9, 32.0, 52.4, 58.8, 56.2]),
            ("zs+temp", [56.5, 86.7, 27.1, 62.2, 56.4, 52.3]),
            ("standard", [63.7, 91.2, 21.9, 61.9, 57.4, 52.0]),
            ("icl-cont", [58.2, 86.9, 27.6, 61.9, 56.5, 51.7]),
            ("icl-stop", [51.8, 78.9, 28.8, 30.3, 53.6, 45.2]),
            ("icl-temp", [26.2, 52.1, 30.1, 7.4, 51.9, 37.9]),
        ],
        printed: [19.5, 14.8, 33.7, 37.4, 58.0, -0.9, -9.9, -23.8],
    },
    TableBlock {
        model: "Llama 33B",
        rows: [
            ("zero-shot", [70.2, 88.6, 60.6, 30.2, 58.1, 19.6]),
            ("zs+cont", [24.4, 61.7, 62.1, 10.5, 65.2, 63.6]),
            ("zs+stop", [72.9, 92.7, 66.7, 69.1, 69.6, 63.0]),
            ("zs+temp", [80.5, 95.2, 65.2, 75.2, 79.0, 80.0]),
            ("standard", [85.0, 96.5, 68.1, 78.4, 78.5, 83.3]),
            ("icl-cont", [82.3, 95.4, 64.9, 76.1, 80.4, 82.0]),
            ("icl-stop", [84.8, 94.9, 62.1, 77.3, 70.5, 74.4]),
            ("icl-temp", [24.4, 61.7, 60.6, 10.5, 67.7, 68.5]),
        ],
        printed: [54.6, -6.7, 17.7, 24.6, 81.6, -1.5, -4.3, -32.7],
    },
];

const DATASETS: [&str; 6] = ["agnews", "sst2", "trec", "dbpedia", "rte", "cb"];

fn arithmetic_reproduction() -> Result<String, String> {
    let tol = 0.05 + 1e-9;
    let mut misses = Vec::new();
    let mut checked = 0;
    for block in &BLOCKS {
        let maps: BTreeMap<&str, BTreeMap<String, f64>> = block
            .rows
            .iter()
            .map(|(name, acc)| {
                let m = DATASETS.iter().map(|d| d.to_string()).zip(acc.iter().copied()).collect();
                (*name, m)
            })
            .collect();
        for (i, (name, acc)) in block.rows.iter().enumerate() {
            let reference = match *name {
                "zero-shot" | "standard" => None,
                n if n.starts_with("zs+") => Some("zero-shot"),
                _ => Some("standard"),
            };
            let got = match reference {
                None => mean(acc),
                Some(r) => delta_avg(&maps[name], &maps[r]).map_err(|e| e.to_string())?,
            };
            checked += 1;
            if (got - block.printed[i]).abs() > tol {
                misses.push(format!("{} {name}: {got:.3} vs {}", block.model, block.printed[i]));
            }
        }
    }
    ensure(misses.is_empty(), || format!("{} of {checked} cells off: {}", misses.len(), misses.join("; ")))?;
    Ok(format!("{checked} cells within 0.05"))
}

const POOL: [&str; 16] = [
    "the", "of", "and", "into", ",", ".", "\n", "market", "shares", "rose", "team", "won", "league",
    "chip", "launch", "talks",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..12);
    let words: Vec<&str> = (0..n).map(|_| *POOL.choose(rng).unwrap()).collect();
    words.join(" ")
}

fn random_components(rng: &mut ChaCha8Rng, task: &TaskSpec) -> PromptComponents {
    let shots = rng.random_range(0..6);
    let slots = task.input_slots();
    let record = |rng: &mut ChaCha8Rng| DatasetRecord {
        text_a: random_text(rng),
        text_b: (slots == 2).then(|| random_text(rng)),
        label: rng.random_range(0..task.verbalizers.len()),
    };
    let demos: Vec<DatasetRecord> = (0..shots).map(|_| record(rng)).collect();
    let test = record(rng);
    PromptComponents::standard(task, &demos, &test).unwrap()
}

fn complement_law() -> Result<String, String> {
    let tasks = [builtin::task("agnews").unwrap(), builtin::task("rte").unwrap(), builtin::task("trec").unwrap()];
    let coarse = [ClassSel::Cont, ClassSel::Stop, ClassSel::Temp];
    let policies = [NewlinePolicy::MaskIfEither, NewlinePolicy::OwnClassOnly, NewlinePolicy::NeverMask];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for i in 0..50 {
        let task = &tasks[i % tasks.len()];
        let c = random_components(&mut rng, task);
        let tok = WordTokenizer::new(components_vocab(&c, &[]));
        let p = build_prompt(&c, &task.stopwords, &tok).map_err(|e| e.to_string())?;
        for z in coarse {
            let xy: Vec<ClassSel> = coarse.iter().copied().filter(|&c| c != z).collect();
            for policy in policies {
                let d = AblationSpec::drop(&xy).with_newline_policy(policy);
                let k = AblationSpec::keep(&[z]).with_newline_policy(policy);
                let pd = build_plan(&p.spans, &d).map_err(|e| e.to_string())?.plan;
                let pk = build_plan(&p.spans, &k).map_err(|e| e.to_string())?.plan;
                ensure(pd.to_matrix() == pk.to_matrix(), || {
                    format!("prompt {i}: drop {xy:?} and keep {z} differ under {policy:?}")
                })?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} plan pairs equal over 50 prompts"))
}

fn d64(pos: PosEncoding, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 4,
        d_model: 64,
        d_ff: 256,
        vocab_size,
        max_positions: 256,
        pos_encoding: pos,
        norm_eps: 1e-5,
        tied_head: false,
        rope_theta: 10000.0,
    }
}

fn masking_noop() -> Result<String, String> {
    let cfg = d64(PosEncoding::Rotary, 300);
    let w = WeightArchive::random_init(&cfg, 11);
    let m = Model::<f64>::new(&cfg, &w).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for len in [1usize, 7, 32, 96] {
        let tokens: Vec<_> = (0..len).map(|_| pct::tokenizer::TokenId(rng.random_range(0..300))).collect();
        let rows: Vec<usize> = (0..len).collect();
        let plain = m.forward(&tokens, &rows).map_err(|e| e.to_string())?;
        let planned = m
            .forward_with_plan(&tokens, &VisibilityPlan::full_causal(len), &rows)
            .map_err(|e| e.to_string())?;
        for (a, b) in plain.iter().flatten().zip(planned.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst == 0.0, || format!("max abs logit difference {worst:e}"))?;
    Ok("max abs logit difference 0".into())
}

fn zero_shot_equivalence() -> Result<String, String> {
    let corpus = synthetic::generate(4, 60, 20, 17).map_err(|e| e.to_string())?;
    let vocab = Arc::new(corpus.vocab.clone());
    let tok = WordTokenizer::new(vocab.clone());
    let cfg = d64(PosEncoding::None, vocab.len());
    let w = WeightArchive::random_init(&cfg, 3);
    let mut mask_all = AblationSpec::keep(&[]);
    mask_all.include_labels = false;
    let mut worst_f32 = 0.0f64;
    for precision in [Precision::F64, Precision::F32] {
        let lm = build_model(&cfg, &w, precision).map_err(|e| e.to_string())?;
        for (i, test) in corpus.test.iter().enumerate() {
            let demos = sample_demo_records(&corpus.train, 1 + i % 5, i as u64).map_err(|e| e.to_string())?;
            let full = assemble_prompt(&corpus.task, &demos, test, &tok).map_err(|e| e.to_string())?;
            let zs = assemble_prompt(&corpus.task, &[], test, &tok).map_err(|e| e.to_string())?;
            let plan = build_plan(&full.spans, &mask_all).map_err(|e| e.to_string())?.plan;
            let v = &corpus.task.verbalizers;
            let a = score_labels(&full, Some(&plan), v, &tok, lm.as_ref(), &FullVerbalizer).map_err(|e| e.to_string())?;
            let b = score_labels(&zs, None, v, &tok, lm.as_ref(), &FullVerbalizer).map_err(|e| e.to_string())?;
            for (x, y) in a.iter().zip(&b) {
                match precision {
                    Precision::F64 => ensure(x == y, || format!("f64 prompt {i}: {x} vs {y}"))?,
                    Precision::F32 => {
                        let rel = (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
                        worst_f32 = worst_f32.max(rel);
                        ensure(rel <= 1e-5, || format!("f32 prompt {i}: relative {rel:e}"))?;
                    }
                }
            }
        }
    }
    Ok(format!("20 prompts; f64 exact, f32 worst relative {worst_f32:e}"))
}

fn chance_band() -> Result<String, String> {
    let c = synthetic::generate(4, 200, 200, 0).map_err(|e| e.to_string())?;
    let cfg = pct::cli::default_model_config(c.vocab.len());
    let w = WeightArchive::random_init(&cfg, 0);
    let suite = Suite {
        datasets: vec![LoadedDataset {
            name: "synthetic".into(),
            task: c.task,
            train: c.train,
            test: c.test,
        }],
        settings: CANONICAL.iter().map(|s| setting_by_name(s).unwrap()).collect(),
        seeds: vec![1, 2],
        shots: 4,
        delta: 10.0,
        lm: build_model(&cfg, &w, Precision::F32).map_err(|e| e.to_string())?,
        tok: Arc::new(WordTokenizer::new(Arc::new(c.vocab))),
        scorer: Arc::new(FullVerbalizer),
        threads: None,
    };
    let table = run_loaded(&suite).map_err(|e| e.to_string())?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &table.rows {
        ensure((0.15..=0.35).contains(&r.accuracy), || {
            format!("{} seed {}: accuracy {}", r.setting, r.seed, r.accuracy)
        })?;
        lo = lo.min(r.accuracy);
        hi = hi.max(r.accuracy);
    }
    Ok(format!("{} runs, accuracy in [{lo:.3}, {hi:.3}]", table.rows.len()))
}

fn taxonomy_gold() -> Result<String, String> {
    #[derive(serde::Deserialize)]
    struct Gold {
        tokens: Vec<String>,
        classes: Vec<String>,
        demo_index: Vec<i32>,
    }
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/agnews_two_shot_gold.json");
    let gold: Gold = serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let task = builtin::task("agnews").map_err(|e| e.to_string())?;
    let demos = [
        rec("Radio veteran Karmazin joins Sirius. Sirius Satellite Radio Inc. named former Viacom Inc. president Mel...", 2),
        rec("Numbers point to NY. NEW YORK - The New York Yankees can achieve two milestones with one more victory...", 1),
    ];
    let test = rec("First class to the moon.", 3);
    let c = PromptComponents::standard(&task, &demos, &test).map_err(|e| e.to_string())?;
    let tok = WordTokenizer::new(components_vocab(&c, &[]));
    let p = assemble_prompt(&task, &demos, &test, &tok).map_err(|e| e.to_string())?;
    let spans = classify_spans(&p, &task);
    ensure(spans.len() == gold.tokens.len(), || {
        format!("{} tokens vs {} gold", spans.len(), gold.tokens.len())
    })?;
    for (i, s) in spans.spans.iter().enumerate() {
        let surface = tok.vocab().surface(p.tokens[i]).map_err(|e| e.to_string())?;
        let ok = surface == gold.tokens[i] && s.class.name() == gold.classes[i] && s.demo_index == gold.demo_index[i];
        ensure(ok, || {
            format!(
                "token {i}: {surface:?} {} {} vs gold {:?} {} {}",
                s.class, s.demo_index, gold.tokens[i], gold.classes[i], gold.demo_index[i]
            )
        })?;
    }
    Ok(format!("{} tokens match", spans.len()))
}

fn perturbation_contracts() -> Result<String, String> {
    let agnews = builtin::task("agnews").unwrap();
    let rte = builtin::task("rte").unwrap();
    let shape = |cue: &str| cue.len() == RANDOM_CUE_LEN && cue.bytes().all(|b| b.is_ascii_lowercase());
    let check_pattern = |pair: &TemplatePair| -> Result<(), String> {
        for t in [&pair.template_in, &pair.template_out] {
            for line in t.split('\n') {
                for piece in line.split("{}").filter(|s| !s.trim().is_empty()) {
                    let piece = piece.trim();
                    let ok = piece.strip_suffix(':').is_some_and(shape);
                    ensure(ok, || format!("cue {piece:?} does not match ^[a-z]{{15}}:$"))?;
                }
            }
        }
        Ok(())
    };
    for task in [&agnews, &rte] {
        let base = TemplatePair::of_task(task);
        for seed in 0..1000u64 {
            let fixed = gen_random_template(&base, seed, true, 4);
            let pairs = fixed.templates.pairs(4);
            ensure(pairs.iter().all(|p| *p == pairs[0]) && fixed.templates.for_test() == pairs[0], || {
                format!("{}: random_fixed seed {seed} differs across demos", task.name)
            })?;
            check_pattern(pairs[0])?;

            let nonfixed = gen_random_template(&base, seed, false, 4);
            let all = nonfixed.templates.pairs(4);
            ensure(all.len() == 5, || format!("seed {seed}: {} pairs for 4 demos and the test", all.len()))?;
            let mut seen = HashSet::new();
            for p in &all {
                check_pattern(p)?;
                for cue in cues(&p.template_in).into_iter().chain(cues(&p.template_out)) {
                    ensure(seen.insert(cue.to_string()), || {
                        format!("{}: random_nonfixed seed {seed} repeats cue {cue}", task.name)
                    })?;
                }
            }
        }
    }
    let mut swapped = 0;
    for name in builtin::TASK_NAMES {
        let task = builtin::task(name).unwrap();
        if task.input_slots() != 1 {
            continue;
        }
        let base = TemplatePair::of_task(&task);
        let once = swap_pair(&base).map_err(|e| e.to_string())?;
        ensure(once != base, || format!("{name}: swap is a no-op"))?;
        let twice = swap_pair(&once).map_err(|e| e.to_string())?;
        ensure(twice == base, || format!("{name}: swap twice gives {twice:?}"))?;
        swapped += 1;
    }
    Ok(format!("1000 seeds x 2 tasks; swap involution on {swapped} single-input tasks"))
}

// Reference values computed with 50-digit arithmetic.
const T_ORACLE: [(&[f64], &[f64], f64, f64); 10] = [
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 4.2426406871192851464, 0.01323559956368268952),
    (
        &[0.823, 0.851, 0.809, 0.834, 0.842],
        &[0.792, 0.801, 0.788, 0.815, 0.799],
        5.4187125237317361835,
        0.0056218174921551439865,
    ),
    (
        &[0.50, 0.52, 0.49, 0.51, 0.50, 0.53, 0.48],
        &[0.51, 0.50, 0.50, 0.52, 0.49, 0.50, 0.51],
        0.0,
        1.0,
    ),
    (
        &[0.643, 0.629, 0.655, 0.601, 0.662, 0.618, 0.640, 0.633, 0.649, 0.627, 0.611, 0.658, 0.636, 0.645, 0.622],
        &[0.262, 0.255, 0.281, 0.240, 0.270, 0.259, 0.266, 0.249, 0.277, 0.258, 0.244, 0.273, 0.261, 0.268, 0.251],
        164.81134202941999446,
        2.0171382880648804707e-24,
    ),
    (&[0.7, 0.7, 0.7], &[0.7, 0.7, 0.7], 0.0, 1.0),
    (&[0.1, 0.9], &[0.2, 0.3], 0.71428571428571428571, 0.6051369134225068599),
    (
        &[0.31, 0.35, 0.29, 0.33, 0.30, 0.36],
        &[0.30, 0.34, 0.31, 0.30, 0.33, 0.35],
        0.18318582636182792789,
        0.86184881547515027956,
    ),
    (
        &[55.2, 61.9, 58.3, 60.1, 57.7],
        &[54.0, 62.5, 57.1, 61.0, 55.9],
        1.0,
        0.37390096630005888501,
    ),
    (
        &[0.2, 0.4, 0.1, 0.5, 0.3, 0.6, 0.2, 0.4, 0.3, 0.5],
        &[0.3, 0.2, 0.4, 0.1, 0.5, 0.2, 0.6, 0.3, 0.1, 0.4],
        0.45226701686664543397,
        0.66178033051916046767,
    ),
    (&[12.0, 15.5, 9.25, 20.0], &[2.0, 1.5, 3.25, 4.0], 5.1863575932195190962, 0.013919080272080693127),
];

fn statistics_oracle() -> Result<String, String> {
    let mut worst_t = 0.0f64;
    let mut worst_p = 0.0f64;
    for (i, (a, b, t, p)) in T_ORACLE.iter().enumerate() {
        let r = paired_t_test(a, b).map_err(|e| e.to_string())?;
        let dt = (r.t - t).abs();
        let dp = (r.p - p).abs();
        ensure(dt <= 1e-6 && dp <= 1e-6, || format!("pair {i}: t {} p {} vs {t} {p}", r.t, r.p))?;
        worst_t = worst_t.max(dt);
        worst_p = worst_p.max(dp);
    }
    Ok(format!("10 pairs, max |dt| {worst_t:.1e}, max |dp| {worst_p:.1e}"))
}

fn pct(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pct")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("pct {}: {}", args.join(" "), String::from_utf8_lossy(&out.stdout))
    })
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = d.join("data");
    pct(&["gen-synthetic", "--out", &s(&data), "--classes", "4", "--train", "60", "--test", "40", "--seed", "3"])?;
    pct(&["gen-weights", "--vocab", &s(&data.join("vocab.json")), "--seed", "1", "--out", &s(&data.join("model"))])?;
    let config = s(&data.join("config.json"));
    let wide = std::thread::available_parallelism().map_or(8, |n| n.get()).max(8).to_string();
    let runs = [("a", "1"), ("b", "1"), ("c", wide.as_str())];
    for (name, threads) in runs {
        pct(&["run", "--config", &config, "--out", &s(&d.join(name)), "--threads", threads])?;
    }
    let mut compared = 0;
    for file in [pct::cli::RESULTS_FILE, pct::cli::AGGREGATES_FILE, pct::cli::REPORT_FILE] {
        let first = fs::read(d.join("a").join(file)).map_err(|e| e.to_string())?;
        for (name, _) in &runs[1..] {
            let other = fs::read(d.join(name).join(file)).map_err(|e| e.to_string())?;
            ensure(first == other, || format!("{file} differs in run {name}"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} artifact pairs byte-identical, threads 1 vs {wide}"))
}

fn token_drop_contract() -> Result<String, String> {
    let task = builtin::task("agnews").unwrap();
    let demos = [
        rec("Radio veteran Karmazin joins Sirius. Sirius Satellite Radio Inc. named former Viacom Inc. president Mel...", 2),
        rec("Numbers point to NY. NEW YORK - The New York Yankees can achieve two milestones with one more victory...", 1),
        rec("Oil prices climb into record territory as supply of crude tightens, and traders worry.\nMore to come.", 2),
        rec("The Mars rover sends back images of the dusty plains and a strange rock.", 3),
    ];
    let test = rec("Markets rally into the close.", 2);
    let c = PromptComponents::standard(&task, &demos, &test).map_err(|e| e.to_string())?;
    let tok = WordTokenizer::new(components_vocab(&c, &[]));
    let before = build_prompt(&c, &task.stopwords, &tok).map_err(|e| e.to_string())?;

    let no_temp = drop_tokens(&c, &AblationSpec::token_drop(&[ClassSel::Temp]), &task.stopwords)
        .map_err(|e| e.to_string())?;
    let after = build_prompt(&no_temp, &task.stopwords, &tok).map_err(|e| e.to_string())?;
    let spans = classify_spans(&after, &task);
    for cl in [TokenClass::TempIn, TokenClass::TempOut, TokenClass::Colon] {
        ensure(spans.count(cl) == 0, || format!("{cl} count {} after TEMP drop", spans.count(cl)))?;
    }
    for cl in [TokenClass::Newline, TokenClass::Label] {
        let (b, a) = (before.spans.count(cl), spans.count(cl));
        ensure(a == b, || format!("{cl} count {b} became {a}"))?;
    }

    let no_stop = drop_tokens(&c, &AblationSpec::token_drop(&[ClassSel::Stop]), &task.stopwords)
        .map_err(|e| e.to_string())?;
    let after = build_prompt(&no_stop, &task.stopwords, &tok).map_err(|e| e.to_string())?;
    let listed: HashSet<String> = task.stopwords.iter().map(|s| s.to_lowercase()).collect();
    let mut body = 0;
    for (i, o) in after.origins.iter().enumerate() {
        if o.component != Component::Input {
            continue;
        }
        let word = tok.detokenize(&after.tokens[i..=i]).map_err(|e| e.to_string())?;
        let raw = tok.vocab().surface(after.tokens[i]).map_err(|e| e.to_string())?;
        ensure(!listed.contains(&word.to_lowercase()) && !listed.contains(&raw.to_lowercase()), || {
            format!("demo {} keeps stopword {raw:?}", o.demo_index)
        })?;
        body += 1;
    }
    ensure(body > 0, || "STOP drop removed every demo token".into())?;
    Ok(format!("TEMP recount clean; {body} demo-body tokens free of stopwords"))
}

fn main() -> ExitCode {
    let checks = [
        Check { id: 1, name: "arithmetic reproduction", limit: Some(Duration::from_secs(1)), run: arithmetic_reproduction },
        Check { id: 2, name: "complement law", limit: Some(Duration::from_secs(5)), run: complement_law },
        Check { id: 3, name: "masking no-op", limit: Some(Duration::from_secs(1)), run: masking_noop },
        Check { id: 4, name: "zero-shot equivalence", limit: Some(Duration::from_secs(10)), run: zero_shot_equivalence },
        Check { id: 5, name: "chance band", limit: Some(Duration::from_secs(60)), run: chance_band },
        Check { id: 6, name: "taxonomy gold", limit: Some(Duration::from_secs(1)), run: taxonomy_gold },
        Check { id: 7, name: "perturbation contracts", limit: Some(Duration::from_secs(5)), run: perturbation_contracts },
        Check { id: 8, name: "statistics oracle", limit: None, run: statistics_oracle },
        Check { id: 9, name: "determinism", limit: None, run: determinism },
        Check { id: 10, name: "token-drop contract", limit: None, run: token_drop_contract },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &checks {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || c.id.to_string() == *f) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {} ({detail}; {elapsed:.2?})", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {} ({why}; {elapsed:.2?})", c.id, c.name);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
