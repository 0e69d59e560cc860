use std::collections::{BTreeMap, HashMap};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Token <-> id mapping. Ids 0..4 are reserved for the special tokens; the
/// remaining tokens are ordered by descending frequency, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const BOS_ID: usize = 2;
    pub const EOS_ID: usize = 3;

    pub fn from_corpus<S: AsRef<str>>(sentences: &[Vec<S>]) -> Self {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for s in sentences {
            for tok in s {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut ordered: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(t, _)| ![PAD, UNK, BOS, EOS].contains(t))
            .collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(ordered.into_iter().map(|(t, _)| t.to_owned()))
    }

    /// Builds a vocabulary from non-special tokens in id order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = [PAD, UNK, BOS, EOS].iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().filter(|t| ![PAD, UNK, BOS, EOS].contains(&t.as_str())));
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(UNK)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_owned()).collect()
    }

    /// Non-special tokens in id order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.tokens[4..]
    }
}
