use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Mention;

pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

/// Word to id map. Ids 0 and 1 are reserved for PAD and UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    /// Keeps every word whose corpus frequency is strictly greater than
    /// `min_count`. Ids are assigned by descending frequency, then
    /// lexicographically, so the result does not depend on input order.
    pub fn build<'a, I>(mentions: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a Mention>,
    {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for m in mentions {
            for t in &m.tokens {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|&(w, c)| c > min_count && w != PAD_TOKEN && w != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let words = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(kept.into_iter().map(|(w, _)| w))
            .map(str::to_string)
            .collect();
        Self::from_words(words, min_count)
    }

    fn from_words(words: Vec<String>, min_count: usize) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self {
            words,
            index,
            min_count,
        }
    }

    /// Restores the lookup index after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn hash(&self) -> String {
        let mut text = format!("min_count={}\n", self.min_count);
        for w in &self.words {
            text.push_str(w);
            text.push('\n');
        }
        super::sha256_hex(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn mention(tokens: &[&str]) -> Mention {
        Mention {
            head: "h".into(),
            tail: "t".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            head_pos: 0,
            tail_pos: 1,
            labels: BTreeSet::from([0]),
        }
    }

    #[test]
    fn min_count_is_strict() {
        let ms = [mention(&["a", "b", "a"]), mention(&["a", "c", "b"])];
        let v = Vocabulary::build(&ms, 1);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("c"), Vocabulary::UNK);
        assert_eq!(v.id(PAD_TOKEN), Vocabulary::PAD);
    }

    #[test]
    fn order_independent() {
        let a = [mention(&["x", "y", "z"]), mention(&["z", "y"])];
        let b = [mention(&["z", "y"]), mention(&["x", "y", "z"])];
        assert_eq!(Vocabulary::build(&a, 0), Vocabulary::build(&b, 0));
        assert_eq!(
            Vocabulary::build(&a, 0).hash(),
            Vocabulary::build(&b, 0).hash()
        );
    }
}
