use super::*;
use crate::prompt::assemble_prompt;
use crate::runtime::{build_model, ModelConfig, PosEncoding, WeightArchive, FullVerbalizer};
use crate::synthetic;
use crate::tokenizer::{SubwordTokenizer, WordTokenizer};

fn tiny_suite(settings: &[&str], seeds: &[u64], n_test: usize) -> Suite {
    let c = synthetic::generate(4, 40, n_test, 9).unwrap();
    let cfg = ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        vocab_size: c.vocab.len(),
        max_positions: 2048,
        pos_encoding: PosEncoding::Rotary,
        norm_eps: 1e-5,
        tied_head: false,
        rope_theta: 10000.0,
    };
    let w = WeightArchive::random_init(&cfg, 1);
    Suite {
        datasets: vec![LoadedDataset {
            name: "synthetic".into(),
            task: c.task,
            train: c.train,
            test: c.test,
        }],
        settings: settings.iter().map(|s| setting_by_name(s).unwrap()).collect(),
        seeds: seeds.to_vec(),
        shots: 4,
        delta: 10.0,
        lm: build_model(&cfg, &w, Precision::F32).unwrap(),
        tok: Arc::new(WordTokenizer::new(Arc::new(c.vocab))),
        scorer: Arc::new(FullVerbalizer),
        threads: None,
    }
}

#[test]
fn one_row_per_setting_and_seed() {
    let s = tiny_suite(&["standard", "zs+temp", "zs+stop", "zs+cont"], &[1, 2, 3], 6);
    let t = run_loaded(&s).unwrap();
    assert_eq!(t.rows.len(), 12);
    assert_eq!(t.rows[0].setting, "standard");
    assert_eq!(t.rows[3].setting, "zs+temp");
    assert_eq!(t.rows.iter().map(|r| r.seed).take(3).collect::<Vec<_>>(), [1, 2, 3]);
    for r in &t.rows {
        // six test examples
        assert_eq!((r.accuracy * 6.0).fract(), 0.0);
    }
    // no zero-shot row, so keep-only settings have nothing to compare to
    assert!(t.aggregates.settings[1].delta_avg.is_none());
}

#[test]
fn rerun_and_thread_count_do_not_change_bytes() {
    let names = ["standard", "zero-shot", "icl-temp", "tok-stop", "random-nonfixed", "swap"];
    let mut a = tiny_suite(&names, &[1, 2], 8);
    // random cues need byte fallback
    a.tok = Arc::new(SubwordTokenizer::new(Arc::new(a.tok.vocab().clone())));
    let first = run_loaded(&a).unwrap();
    a.threads = Some(1);
    let single = run_loaded(&a).unwrap();
    a.threads = Some(8);
    let wide = run_loaded(&a).unwrap();
    assert_eq!(first.to_csv().unwrap(), single.to_csv().unwrap());
    assert_eq!(first.to_csv().unwrap(), wide.to_csv().unwrap());
    assert_eq!(first.aggregates.to_json().unwrap(), wide.aggregates.to_json().unwrap());
}

#[test]
fn aggregates_recompute_from_csv() {
    let s = tiny_suite(&CANONICAL, &[1, 2, 3], 8);
    let t = run_loaded(&s).unwrap();
    let rows = rows_from_csv(&t.to_csv().unwrap()).unwrap();
    assert_eq!(rows, t.rows);
    assert_eq!(t.aggregates.recompute(&rows).unwrap(), t.aggregates);
    assert_eq!(t.aggregates.verdicts.len(), 3);
    // three settings per reference, one dataset
    assert_eq!(t.aggregates.t_tests.len(), 6);
    let zs = &t.aggregates.settings[0];
    let plus = &t.aggregates.settings[1];
    assert_eq!(plus.delta_avg, Some(plus.avg - zs.avg));
}

#[test]
fn errors_carry_setting_and_seed() {
    let mut s = tiny_suite(&["standard"], &[5], 4);
    s.shots = 1000;
    let msg = run_loaded(&s).unwrap_err().to_string();
    assert!(msg.contains("setting standard"), "{msg}");
    assert!(msg.contains("seed 5"), "{msg}");
}

#[test]
fn token_counts() {
    let c = synthetic::generate(4, 20, 10, 2).unwrap();
    let tok = WordTokenizer::new(Arc::new(c.vocab.clone()));
    let zs: Vec<_> = c.test.iter().map(|t| assemble_prompt(&c.task, &[], t, &tok).unwrap()).collect();
    let r = token_count_report(&zs);
    for cl in [TokenClass::Cont, TokenClass::Stop, TokenClass::Label] {
        assert_eq!(r[&cl], 0.0);
    }
    let shots: Vec<_> = c
        .test
        .iter()
        .map(|t| assemble_prompt(&c.task, &c.train[..4], t, &tok).unwrap())
        .collect();
    let r = token_count_report(&shots);
    let total: usize = shots.iter().map(|p| p.len()).sum();
    let summed: f64 = r.values().sum::<f64>() * shots.len() as f64;
    assert_eq!(summed.round() as usize, total);
    let mut cont = 0usize;
    for p in &shots {
        cont += (0..p.len()).filter(|&i| p.spans.class(i) == TokenClass::Cont).count();
    }
    assert_eq!(r[&TokenClass::Cont], cont as f64 / shots.len() as f64);
    assert!(template_total(&r) > 0.0);
}

#[test]
fn test_sampling() {
    let recs = synthetic::records(4, 30, 1);
    let a = sample_test(&recs, 10, 7).unwrap();
    assert_eq!(a, sample_test(&recs, 10, 7).unwrap());
    assert_ne!(a, sample_test(&recs, 10, 8).unwrap());
    assert_eq!(sample_test(&recs, 30, 7).unwrap().len(), 30);
    assert!(sample_test(&recs, 31, 7).is_err());
}

#[test]
fn config_defaults_and_validation() {
    let json = r#"{"datasets": [{"task": "agnews", "train": "tr.jsonl", "test": "te.jsonl"}], "model": "m"}"#;
    let mut cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg.shots, 4);
    assert_eq!(cfg.seeds, (1..=15).collect::<Vec<u64>>());
    assert_eq!(cfg.n_test, 500);
    assert_eq!(cfg.delta, 10.0);
    assert_eq!(cfg.settings.len(), 8);
    cfg.validate().unwrap();
    cfg.rebase(Path::new("/base"));
    assert_eq!(cfg.vocab_path(), Path::new("/base/m/vocab.json"));
    assert_eq!(cfg.datasets[0].train, Path::new("/base/tr.jsonl"));
    assert!(cfg.datasets[0].task.path().is_none());
    cfg.settings.push(SettingConfig::Preset("standard".into()));
    assert!(cfg.validate().is_err());
    let bad = r#"{"datasets": [], "model": "m", "bogus": 1}"#;
    assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
}

#[test]
fn infinite_t_survives_json() {
    let t = PairTest {
        setting: "a".into(),
        reference: "b".into(),
        dataset: "d".into(),
        t: f64::NEG_INFINITY,
        df: 2,
        p: 0.0,
        significant: true,
    };
    let json = serde_json::to_string(&t).unwrap();
    assert!(json.contains(r#""t":"-inf""#), "{json}");
    assert_eq!(serde_json::from_str::<PairTest>(&json).unwrap(), t);
    let finite: PairTest = serde_json::from_str(&json.replace(r#""-inf""#, "1.5")).unwrap();
    assert_eq!(finite.t, 1.5);
}
