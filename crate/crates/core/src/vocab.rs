//! Vocabulary and WordPiece tokenization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
/// Marks a subword that continues the previous piece of the same word.
pub const CONTINUATION_PREFIX: &str = "##";

pub const PAD_ID: usize = 0;

/// Words longer than this (in characters) become a single UNK.
const MAX_WORD_CHARS: usize = 100;

/// Dense token ↔ id map. Id 0 is always PAD.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocab::new(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(Error::Schema(format!(
                "vocabulary must start with {PAD_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Schema(format!("empty token at vocabulary index {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let unk = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::Schema(format!("vocabulary lacks {UNK_TOKEN}")))?;
        Ok(Self { tokens, index, unk })
    }

    /// `[PAD]`, `[UNK]`, then the distinct `words` in first-seen order.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in words {
            let w = w.as_ref();
            if !w.is_empty() && seen.insert(w.to_string()) {
                tokens.push(w.to_string());
            }
        }
        Self::new(tokens).expect("constructed vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> usize {
        PAD_ID
    }

    pub fn unk_id(&self) -> usize {
        self.unk
    }

    /// Greedy longest-match segmentation of a single word. A word that cannot
    /// be fully covered maps to one UNK.
    pub fn wordpiece(&self, word: &str) -> Vec<usize> {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() {
            return Vec::new();
        }
        if chars.len() > MAX_WORD_CHARS {
            return vec![self.unk];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, CONTINUATION_PREFIX);
                }
                if let Some(id) = self.id(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => return vec![self.unk],
            }
        }
        pieces
    }

    /// Lowercases, splits, and segments `text` without padding.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        basic_tokenize(text)
            .iter()
            .flat_map(|w| self.wordpiece(w))
            .collect()
    }

    /// [`Vocab::tokenize`], truncated or right-padded with PAD to `max_seq`.
    pub fn encode(&self, text: &str, max_seq: usize) -> Vec<usize> {
        let mut ids = self.tokenize(text);
        ids.truncate(max_seq);
        ids.resize(max_seq, PAD_ID);
        ids
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != PAD_ID)
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace() && !c.is_control())
}

/// Lowercase, split on whitespace, and split every punctuation character
/// into its own token.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars().flat_map(char::to_lowercase) {
            if is_punctuation(c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else if !c.is_control() {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}
