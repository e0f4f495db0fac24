//! Word-level reference tokenizer and a greedy subword tokenizer with byte
//! fallback, both behind the [`Tokenizer`] trait.
//!
//! Both share one pre-tokenizer: split on whitespace, emit every `\n` as a
//! word of its own, and peel trailing `. , : ; ? !` characters off each word.

mod vocab;

use std::collections::HashMap;
use std::sync::Arc;

pub use vocab::{
    byte_surface, parse_byte_surface, Specials, SurfaceTable, TokenId, VocabManifest, Vocabulary,
    DEFAULT_BOS, NEWLINE,
};

use crate::error::{Error, Result};

pub const SPLIT_PUNCTUATION: [char; 6] = ['.', ',', ':', ';', '?', '!'];

/// Marks the first piece of every word in the subword tokenizer.
pub const WORD_MARKER: char = '\u{2581}';

pub fn is_split_punctuation(word: &str) -> bool {
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if SPLIT_PUNCTUATION.contains(&c))
}

fn push_word<'a>(out: &mut Vec<&'a str>, word: &'a str) {
    let end = word.trim_end_matches(SPLIT_PUNCTUATION).len();
    if end > 0 {
        out.push(&word[..end]);
    }
    // split punctuation is ASCII, one byte per char
    for i in end..word.len() {
        out.push(&word[i..i + 1]);
    }
}

/// Splits text into reference words.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                push_word(&mut out, &text[s..i]);
            }
            if c == '\n' {
                out.push(&text[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        push_word(&mut out, &text[s..]);
    }
    out
}

/// Joins words with single spaces, except around newlines and before
/// split punctuation.
pub fn join_words<S: AsRef<str>>(words: &[S]) -> String {
    let mut out = String::new();
    let mut prev_newline = true;
    for w in words {
        let w = w.as_ref();
        let attach = prev_newline || w == NEWLINE || is_split_punctuation(w);
        if !attach {
            out.push(' ');
        }
        out.push_str(w);
        prev_newline = w == NEWLINE;
    }
    out
}

pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn vocab(&self) -> &Vocabulary;

    /// Encodes one pre-tokenized word into one or more pieces.
    fn encode_word(&self, word: &str) -> Result<Vec<TokenId>>;

    /// Recovers the word sequence behind a token sequence.
    fn decode_words(&self, ids: &[TokenId]) -> Result<Vec<String>>;

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        for w in pre_tokenize(text) {
            out.extend(self.encode_word(w)?);
        }
        Ok(out)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        Ok(join_words(&self.decode_words(ids)?))
    }
}

/// One vocabulary entry per word; unknown words are an error.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    vocab: Arc<Vocabulary>,
}

impl WordTokenizer {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        WordTokenizer { vocab }
    }
}

impl Tokenizer for WordTokenizer {
    fn name(&self) -> &'static str {
        "word"
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn encode_word(&self, word: &str) -> Result<Vec<TokenId>> {
        if word == NEWLINE {
            return Ok(vec![self.vocab.newline()]);
        }
        self.vocab
            .id(word)
            .map(|id| vec![id])
            .ok_or_else(|| Error::UnknownSurface(word.to_string()))
    }

    fn decode_words(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let s = self.vocab.surface(id)?;
            if id != self.vocab.bos() {
                out.push(s.to_string());
            }
        }
        Ok(out)
    }
}

/// Greedy longest-match over vocabulary surfaces. Each word is encoded as
/// `WORD_MARKER + word`; characters with no matching surface fall back to
/// `<0xHH>` byte pieces.
#[derive(Debug, Clone)]
pub struct SubwordTokenizer {
    vocab: Arc<Vocabulary>,
    byte_ids: [Option<TokenId>; 256],
    id_bytes: HashMap<TokenId, u8>,
}

impl SubwordTokenizer {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        let mut byte_ids = [None; 256];
        let mut id_bytes = HashMap::new();
        for b in 0..=255u8 {
            if let Some(id) = vocab.id(&byte_surface(b)) {
                byte_ids[b as usize] = Some(id);
                id_bytes.insert(id, b);
            }
        }
        SubwordTokenizer {
            vocab,
            byte_ids,
            id_bytes,
        }
    }

    fn is_matchable(&self, id: TokenId) -> bool {
        id != self.vocab.bos() && id != self.vocab.newline() && !self.id_bytes.contains_key(&id)
    }
}

impl Tokenizer for SubwordTokenizer {
    fn name(&self) -> &'static str {
        "subword"
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn encode_word(&self, word: &str) -> Result<Vec<TokenId>> {
        if word == NEWLINE {
            return Ok(vec![self.vocab.newline()]);
        }
        let marked = format!("{WORD_MARKER}{word}");
        let max_len = self.vocab.max_surface_len();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < marked.len() {
            let rest = &marked[pos..];
            let mut best = None;
            let mut end = rest.len().min(max_len);
            while end > 0 {
                if rest.is_char_boundary(end) {
                    if let Some(id) = self.vocab.id(&rest[..end]) {
                        if self.is_matchable(id) {
                            best = Some((id, end));
                            break;
                        }
                    }
                }
                end -= 1;
            }
            match best {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    let c = rest.chars().next().expect("non-empty remainder");
                    let mut buf = [0u8; 4];
                    for b in c.encode_utf8(&mut buf).bytes() {
                        let id = self.byte_ids[b as usize]
                            .ok_or_else(|| Error::UnknownSurface(c.to_string()))?;
                        out.push(id);
                    }
                    pos += c.len_utf8();
                }
            }
        }
        Ok(out)
    }

    fn decode_words(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        let mut words = Vec::new();
        let mut buf: Vec<u8> = Vec::new();
        let flush = |buf: &mut Vec<u8>, words: &mut Vec<String>| -> Result<()> {
            if buf.is_empty() {
                return Ok(());
            }
            let text = String::from_utf8(std::mem::take(buf))
                .map_err(|_| Error::Vocab("byte pieces do not form UTF-8".into()))?;
            words.extend(
                text.split(WORD_MARKER)
                    .filter(|w| !w.is_empty())
                    .map(str::to_string),
            );
            Ok(())
        };
        for &id in ids {
            let surface = self.vocab.surface(id)?;
            if id == self.vocab.bos() {
                continue;
            }
            if id == self.vocab.newline() {
                flush(&mut buf, &mut words)?;
                words.push(NEWLINE.to_string());
            } else if let Some(&b) = self.id_bytes.get(&id) {
                buf.push(b);
            } else {
                buf.extend_from_slice(surface.as_bytes());
            }
        }
        flush(&mut buf, &mut words)?;
        Ok(words)
    }
}

/// Looks a tokenizer up by its registered name.
pub fn tokenizer_by_name(name: &str, vocab: Arc<Vocabulary>) -> Result<Arc<dyn Tokenizer>> {
    match name {
        "word" => Ok(Arc::new(WordTokenizer::new(vocab))),
        "subword" => Ok(Arc::new(SubwordTokenizer::new(vocab))),
        other => Err(Error::UnknownStrategy {
            kind: "tokenizer",
            name: other.to_string(),
        }),
    }
}

pub const TOKENIZER_NAMES: [&str; 2] = ["word", "subword"];
