//! Ready-made task descriptions for the six classification benchmarks,
//! their instruction-derived stopword lists and alternative instructions.

use super::{parse_stopword_list, TaskSpec};
use crate::error::{Error, Result};

pub const TASK_NAMES: [&str; 6] = ["agnews", "sst2", "rte", "cb", "trec", "dbpedia"];

pub const NLTK_STOPWORDS: &str = include_str!("../../data/stopwords/nltk.txt");
const AGNEWS_STOPWORDS: &str = include_str!("../../data/stopwords/agnews.txt");
const SST2_STOPWORDS: &str = include_str!("../../data/stopwords/sst2.txt");
const RTE_STOPWORDS: &str = include_str!("../../data/stopwords/rte.txt");
const CB_STOPWORDS: &str = include_str!("../../data/stopwords/cb.txt");
const TREC_STOPWORDS: &str = include_str!("../../data/stopwords/trec.txt");
const DBPEDIA_STOPWORDS: &str = include_str!("../../data/stopwords/dbpedia.txt");

const DBPEDIA_LABELS: [&str; 14] = [
    "Company",
    "School",
    "Artist",
    "Athlete",
    "Politician",
    "Transportation",
    "Building",
    "Nature",
    "Village",
    "Animal",
    "Plant",
    "Album",
    "Film",
    "Book",
];

fn spec(
    name: &str,
    verbalizers: &[&str],
    instruction: &str,
    template_in: &str,
    template_out: &str,
    stopwords: &str,
) -> TaskSpec {
    TaskSpec {
        name: name.to_string(),
        verbalizers: verbalizers.iter().map(|s| s.to_string()).collect(),
        instruction: format!("{instruction}\n\n"),
        template_in: template_in.to_string(),
        template_out: template_out.to_string(),
        stopwords: parse_stopword_list(stopwords),
        max_chars: None,
    }
}

pub fn task(name: &str) -> Result<TaskSpec> {
    let t = match name {
        "agnews" => spec(
            "agnews",
            &["World", "Sports", "Business", "Technology"],
            "Classify the news articles into the categories of World, Sports, Business, and Technology.",
            "Article: {}\n",
            "Answer: {}\n\n",
            AGNEWS_STOPWORDS,
        ),
        "sst2" => spec(
            "sst2",
            &["Positive", "Negative"],
            "Classify the reviews into the categories of Positive and Negative.",
            "Review: {}\n",
            "Sentiment: {}\n\n",
            SST2_STOPWORDS,
        ),
        "rte" => spec(
            "rte",
            &["True", "False"],
            "Classify the entailment of the hypothesis and the premise into the categories of True and False.",
            "Hypothesis: {}\nPremise: {}\n",
            "Answer: {}\n\n",
            RTE_STOPWORDS,
        ),
        "cb" => spec(
            "cb",
            &["true", "neither", "false"],
            "Classify the entailment of the hypothesis and the premise into the categories of true, neither and false.",
            "Hypothesis: {}\nPremise: {}\n",
            "Answer: {}\n\n",
            CB_STOPWORDS,
        ),
        "trec" => spec(
            "trec",
            &["Number", "Location", "Person", "Description", "Entity", "Abbreviation"],
            "Classify the questions based on whether their answer type is a Number, Location, Person, Description, Entity, or Abbreviation.",
            "Question: {}\n",
            "Answer Type: {}\n\n",
            TREC_STOPWORDS,
        ),
        "dbpedia" => spec(
            "dbpedia",
            &DBPEDIA_LABELS,
            "Classify the documents based on whether they are about a Company, School, Artist, Athlete, Politician, Transportation, Building, Nature, Village, Animal, Plant, Album, Film, or Book.",
            "Article: {}\n",
            "Answer: {}\n\n",
            DBPEDIA_STOPWORDS,
        ),
        other => {
            return Err(Error::UnknownStrategy {
                kind: "builtin task",
                name: other.to_string(),
            })
        }
    };
    Ok(t)
}

/// Alternative instructions (1-based index), with the trailing blank line
/// the prompt layout expects.
pub fn instruction_variant(task: &str, index: usize) -> Result<String> {
    let text = match (task, index) {
        ("agnews", 1) => "Classify the text into World, Sports, Business, and Technology.",
        ("agnews", 2) => "Classify the articles based on whether they are in the categories of World, Sports, Business, and Technology.",
        ("agnews", 3) => "Classify the news to World, Sports, Business, and Technology.",
        ("dbpedia", 1) => "Classify the text into Company, School, Artist, Athlete, Politician, Transportation, Building, Nature, Village, Animal, Plant, Album, Film, and Book.",
        ("dbpedia", 2) => "Classify the documents into the categories of Company, School, Artist, Athlete, Politician, Transportation, Building, Nature, Village, Animal, Plant, Album, Film, and Book.",
        ("dbpedia", 3) => "Classify the articles based on whether they are in the categories of Company, School, Artist, Athlete, Politician, Transportation, Building, Nature, Village, Animal, Plant, Album, Film, and Book.",
        _ => {
            return Err(Error::UnknownStrategy {
                kind: "instruction variant",
                name: format!("{task}#{index}"),
            })
        }
    };
    Ok(format!("{text}\n\n"))
}

pub fn nltk_stopwords() -> Vec<String> {
    parse_stopword_list(NLTK_STOPWORDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rte_stopwords_deduplicated() {
        let t = task("rte").unwrap();
        assert_eq!(t.stopwords, vec!["the", "of", "into", "and", ".", "\n"]);
    }

    #[test]
    fn instruction_variants() {
        assert!(instruction_variant("agnews", 2)
            .unwrap()
            .starts_with("Classify the articles based on"));
        assert!(instruction_variant("sst2", 1).is_err());
    }
}
