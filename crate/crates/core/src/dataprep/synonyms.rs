//! Synonym replacement read from a `token<TAB>alt1,alt2,...` file.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymMap {
    map: BTreeMap<String, Vec<String>>,
}

impl SynonymMap {
    pub fn new(map: BTreeMap<String, Vec<String>>) -> Result<Self> {
        for (k, alts) in &map {
            if alts.is_empty() {
                return Err(Error::invalid(format!("{k:?} has no replacements")));
            }
            if alts.iter().any(|a| a == k) {
                return Err(Error::invalid(format!("{k:?} lists itself as a replacement")));
            }
            if alts.iter().any(|a| a.is_empty() || a.contains(char::is_whitespace)) {
                return Err(Error::invalid(format!("{k:?} has an empty or multi-word replacement")));
            }
        }
        Ok(Self { map })
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (line, l) in io::data_lines(text) {
            let loc = format!("{origin}:{line}");
            let (k, alts) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(&loc, "expected token<TAB>alternatives"))?;
            let alts: Vec<String> = alts
                .split(',')
                .map(|a| a.trim().to_string())
                .filter(|a| !a.is_empty())
                .collect();
            if map.insert(k.trim().to_string(), alts).is_some() {
                return Err(Error::parse(&loc, format!("duplicate entry for {k:?}")));
            }
        }
        Self::new(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_text(path)?, &path.display().to_string())
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.map.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Splits `"female,"` into `("", "female", ",")`.
fn core(token: &str) -> (&str, &str, &str) {
    let is_p = |c: char| c.is_ascii_punctuation();
    let start = token.len() - token.trim_start_matches(is_p).len();
    let end = token.trim_end_matches(is_p).len().max(start);
    (&token[..start], &token[start..end], &token[end..])
}

/// Replaces each space-separated token found in `map` with probability `p`,
/// keeping surrounding punctuation. Spacing is preserved exactly.
pub fn augment_synonyms(sentence: &str, map: &SynonymMap, p: f64, seed: u64) -> Result<String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("replacement probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out: Vec<String> = sentence
        .split(' ')
        .map(|tok| {
            let (pre, word, post) = core(tok);
            match map.get(word) {
                Some(alts) if rng.random_bool(p) => {
                    let pick = &alts[rng.random_range(0..alts.len())];
                    format!("{pre}{pick}{post}")
                }
                _ => tok.to_string(),
            }
        })
        .collect();
    Ok(out.join(" "))
}
