//! Word-level vocabulary with reserved special tokens.
//!
//! Normalization lowercases the text, splits on whitespace and detaches
//! punctuation into single-character tokens. Subword merging is deliberately
//! absent; corpora at this scale do not need it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token identifier. Ids `0..NUM_SPECIALS` are reserved.
pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const MASK: TokenId = 3;
pub const COND_OPEN: TokenId = 4;
pub const COND_CLOSE: TokenId = 5;
pub const UNK: TokenId = 6;

/// Number of reserved special ids.
pub const NUM_SPECIALS: usize = 7;

/// Surface forms for the special ids. None of these can be produced by
/// `normalize` since they contain `<` and `>`.
const SPECIAL_FORMS: [&str; NUM_SPECIALS] =
    ["<pad>", "<bos>", "<eos>", "<mask>", "<cond>", "</cond>", "<unk>"];

/// Lowercase and split into word tokens. Runs of alphanumeric characters
/// form one token; every other non-whitespace character becomes its own
/// single-character token.
pub fn normalize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_lowercase().collect());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Bijection between normalized word tokens and dense ids, with the special
/// ids up front. Tokens absent from the table encode to [`UNK`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Build a vocabulary from `(token, frequency)` counts, keeping tokens
    /// with frequency `>= min_freq`. Ids are assigned by descending
    /// frequency, ties by token string, so construction is deterministic.
    pub fn from_counts(counts: &HashMap<String, usize>, min_freq: usize) -> Vocabulary {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_freq)
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> =
            SPECIAL_FORMS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(kept.into_iter().map(|(t, _)| t.clone()));

        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocabulary { id_to_token, token_to_id }
    }

    /// Total size including specials.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    /// Id of a normalized token, or `None` when out of vocabulary.
    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    /// Surface form of an id.
    pub fn token_of(&self, id: TokenId) -> Result<&str> {
        self.id_to_token
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::TokenOutOfRange { id, vocab: self.len() })
    }

    /// Encode normalized word tokens; unknown words map to [`UNK`].
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<TokenId> {
        words
            .iter()
            .map(|w| self.id_of(w.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Normalize raw text and encode it.
    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        let words = normalize(text);
        self.encode_words(&words)
    }

    /// Decode ids back to a space-joined normalized string.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token_of(id)?);
        }
        Ok(out)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    /// Non-special ids in order.
    pub fn word_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (NUM_SPECIALS as TokenId..self.len() as TokenId).map(|i| i as TokenId)
    }
}

/// On-disk form: the non-special tokens in id order.
#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        VocabFile { tokens: self.id_to_token[NUM_SPECIALS..].to_vec() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = VocabFile::deserialize(deserializer)?;
        let mut id_to_token: Vec<String> =
            SPECIAL_FORMS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(file.tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Ok(Vocabulary { id_to_token, token_to_id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts_of(texts: &[&str]) -> HashMap<String, usize> {
        let mut counts = HashMap::new();
        for t in texts {
            for w in normalize(t) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        counts
    }

    #[test]
    fn normalize_lowercases_and_detaches_punctuation() {
        assert_eq!(normalize("Show me the weather."), vec!["show", "me", "the", "weather", "."]);
        assert_eq!(normalize("what's up"), vec!["what", "'", "s", "up"]);
        assert_eq!(normalize("  "), Vec::<String>::new());
    }

    #[test]
    fn min_freq_one_keeps_every_token() {
        let v = Vocabulary::from_counts(&counts_of(&["play a song", "play a movie"]), 1);
        assert_eq!(v.len() - NUM_SPECIALS, 4);
        for w in ["play", "a", "song", "movie"] {
            assert!(v.id_of(w).is_some(), "missing {w}");
        }
    }

    #[test]
    fn below_threshold_tokens_encode_to_unk() {
        let v = Vocabulary::from_counts(&counts_of(&["play a song", "play a movie"]), 2);
        assert_eq!(v.len() - NUM_SPECIALS, 2);
        assert_eq!(v.encode_text("play a song"), vec![v.id_of("play").unwrap(), v.id_of("a").unwrap(), UNK]);
    }

    #[test]
    fn empty_after_thresholding_is_specials_only() {
        let v = Vocabulary::from_counts(&counts_of(&["one two three"]), 99);
        assert_eq!(v.len(), NUM_SPECIALS);
        assert_eq!(v.encode_text("one two"), vec![UNK, UNK]);
    }

    #[test]
    fn encode_decode_round_trips_normalized_text() {
        let v = Vocabulary::from_counts(&counts_of(&["find me a bus to the city"]), 1);
        let ids = v.encode_text("Find me a BUS to the city");
        assert_eq!(v.decode(&ids).unwrap(), "find me a bus to the city");
    }

    #[test]
    fn serde_round_trip_preserves_ids() {
        let v = Vocabulary::from_counts(&counts_of(&["a b c a b a"]), 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn specials_cannot_be_produced_by_normalization() {
        for form in SPECIAL_FORMS {
            assert_ne!(normalize(form).len(), 1, "{form} must not survive as one token");
        }
    }
}
