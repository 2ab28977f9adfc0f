//! Fixed answer vocabulary with begin, end and unknown markers.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const BEGIN: &str = "<s>";
pub const END: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerVocab {
    /// Specials come first, followed by `words` in order with duplicates
    /// and specials dropped.
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in [BEGIN, END, UNK]
            .into_iter()
            .map(str::to_string)
            .chain(words.into_iter().map(|w| w.as_ref().trim().to_lowercase()))
        {
            if !w.is_empty() && !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        v
    }

    /// The `size - 3` most frequent answer words, ties broken alphabetically.
    pub fn from_answers<'a>(answers: impl IntoIterator<Item = &'a str>, size: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for a in answers {
            for w in a.split_whitespace() {
                *counts.entry(w.to_lowercase()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::new(ranked.into_iter().take(size.saturating_sub(3)).map(|(w, _)| w))
    }

    /// One word per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.words.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn begin(&self) -> usize {
        0
    }

    pub fn end(&self) -> usize {
        1
    }

    pub fn unk(&self) -> usize {
        2
    }

    pub fn is_special(&self, i: usize) -> bool {
        i < 3
    }
}
