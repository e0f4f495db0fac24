//! Toy classification corpus with a matching vocabulary.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DatasetRecord, TaskSpec};
use crate::error::{Error, Result};
use crate::tokenizer::{byte_surface, pre_tokenize, Vocabulary};

pub const LABELS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"];

const SYLLABLES: [&str; 12] = ["ba", "de", "ki", "lo", "mu", "ne", "po", "ra", "si", "tu", "vo", "ze"];

const FILLER: [&str; 10] = ["the", "a", "of", "and", "to", "in", "is", "it", "on", ","];

const WORDS_PER_CLASS: usize = 16;

pub struct SyntheticCorpus {
    pub task: TaskSpec,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
    pub vocab: Vocabulary,
}

fn class_words(k: usize) -> Vec<String> {
    (0..WORDS_PER_CLASS)
        .map(|j| {
            let i = k * WORDS_PER_CLASS + j;
            let a = SYLLABLES[i % SYLLABLES.len()];
            let b = SYLLABLES[(i / SYLLABLES.len()) % SYLLABLES.len()];
            let c = SYLLABLES[(i * 7 + k) % SYLLABLES.len()];
            format!("{a}{b}{c}")
        })
        .collect()
}

pub fn task(classes: usize) -> Result<TaskSpec> {
    if !(2..=LABELS.len()).contains(&classes) {
        return Err(Error::Config(format!(
            "synthetic tasks have 2 to {} classes, got {classes}",
            LABELS.len()
        )));
    }
    let labels: Vec<String> = LABELS[..classes].iter().map(|s| s.to_string()).collect();
    let (last, head) = labels.split_last().expect("at least two labels");
    let instruction = format!("Classify the text into {}, and {last}.\n\n", head.join(", "));
    let mut stopwords: Vec<String> = FILLER.iter().map(|s| s.to_string()).collect();
    stopwords.push(".".into());
    Ok(TaskSpec {
        name: "synthetic".into(),
        verbalizers: labels,
        instruction,
        template_in: "Input: {}\n".into(),
        template_out: "Label: {}\n\n".into(),
        stopwords,
        max_chars: None,
    })
}

fn sentence(rng: &mut ChaCha8Rng, words: &[String]) -> String {
    let n = rng.random_range(8..=14);
    let parts: Vec<&str> = (0..n)
        .map(|_| {
            if rng.random_bool(0.6) {
                words.choose(rng).expect("class words").as_str()
            } else {
                *FILLER[..FILLER.len() - 1].choose(rng).expect("filler")
            }
        })
        .collect();
    format!("{}.", parts.join(" "))
}

/// Records cycle through labels in order, so every split is balanced up
/// to one record per class.
pub fn records(classes: usize, n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<Vec<String>> = (0..classes).map(class_words).collect();
    (0..n)
        .map(|i| {
            let label = i % classes;
            DatasetRecord {
                text_a: sentence(&mut rng, &words[label]),
                text_b: None,
                label,
            }
        })
        .collect()
}

/// Every word the task and its records can produce, plus byte pieces.
pub fn vocabulary(task: &TaskSpec, classes: usize) -> Vocabulary {
    let mut words: Vec<String> = Vec::new();
    for text in [&task.instruction, &task.template_in, &task.template_out] {
        words.extend(pre_tokenize(&text.replace("{}", " ")).iter().map(|w| w.to_string()));
    }
    words.extend(task.verbalizers.iter().cloned());
    words.extend(FILLER.iter().map(|s| s.to_string()));
    words.push(".".into());
    for k in 0..classes {
        words.extend(class_words(k));
    }
    words.extend((0..=255u8).map(byte_surface));
    Vocabulary::from_words(words)
}

pub fn generate(classes: usize, n_train: usize, n_test: usize, seed: u64) -> Result<SyntheticCorpus> {
    let task = task(classes)?;
    let vocab = vocabulary(&task, classes);
    Ok(SyntheticCorpus {
        train: records(classes, n_train, seed),
        test: records(classes, n_test, seed.wrapping_add(1)),
        vocab,
        task,
    })
}
