//! Byte-pair encoding: merge learning over a word frequency table and
//! rank-ordered application.
//!
//! Word-final symbols carry an internal `</w>` marker. Exported tokens use the
//! `@@` continuation convention instead: every subword except the last one of
//! a word ends in `@@`, so `"lo@@ wer"` joins back to `"lower"`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::DataError;

pub const END_OF_WORD: &str = "</w>";
pub const CONTINUATION: &str = "@@";
const VERSION_HEADER: &str = "#version: 0.2";

/// Ordered merge rules; application order is learning order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BpeCodes {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

/// For every original word, the span of subword tokens it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    spans: Vec<Range<usize>>,
}

impl Segmentation {
    /// Validates that `spans` partition `0..num_tokens` in order.
    pub fn new(spans: Vec<Range<usize>>, num_tokens: usize) -> Result<Self, DataError> {
        let mut next = 0;
        for (k, span) in spans.iter().enumerate() {
            if span.start != next || span.end <= span.start {
                return Err(DataError::Invalid(format!(
                    "word {} has span {:?}; spans must partition the tokens in order",
                    k, span
                )));
            }
            next = span.end;
        }
        if next != num_tokens {
            return Err(DataError::Invalid(format!(
                "spans cover {} of {} tokens",
                next, num_tokens
            )));
        }
        Ok(Segmentation { spans })
    }

    /// Every token is its own word.
    pub fn identity(num_tokens: usize) -> Self {
        Segmentation {
            spans: (0..num_tokens).map(|i| i..i + 1).collect(),
        }
    }

    /// Recovers word spans from `@@`-marked tokens.
    pub fn from_marked_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut spans = Vec::new();
        let mut start = 0;
        for (i, tok) in tokens.iter().enumerate() {
            if !tok.as_ref().ends_with(CONTINUATION) || i + 1 == tokens.len() {
                spans.push(start..i + 1);
                start = i + 1;
            }
        }
        Segmentation { spans }
    }

    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    pub fn num_words(&self) -> usize {
        self.spans.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.spans.last().map(|s| s.end).unwrap_or(0)
    }
}

/// Joins `@@`-marked subwords back into words.
pub fn merge_subwords<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        match tok.strip_suffix(CONTINUATION) {
            Some(prefix) => current.push_str(prefix),
            None => {
                current.push_str(tok);
                words.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

fn initial_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == chars.len() {
                format!("{}{}", c, END_OF_WORD)
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merge_pair(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{}{}", left, right));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

impl BpeCodes {
    pub fn from_merges(merges: Vec<(String, String)>) -> Result<Self, DataError> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, pair) in merges.iter().enumerate() {
            if ranks.insert(pair.clone(), rank).is_some() {
                return Err(DataError::Invalid(format!(
                    "duplicate merge pair {} {}",
                    pair.0, pair.1
                )));
            }
        }
        Ok(BpeCodes { merges, ranks })
    }

    /// Learns up to `merges` rules from a whitespace-tokenized corpus.
    ///
    /// Each step merges the most frequent adjacent symbol pair; equal
    /// frequencies go to the lexicographically smallest pair. Learning stops
    /// early once no adjacent pair is left.
    pub fn learn<S: AsRef<str>>(corpus: &[Vec<S>], merges: usize) -> Result<Self, DataError> {
        let mut freqs: BTreeMap<&str, u64> = BTreeMap::new();
        for sentence in corpus {
            for word in sentence {
                *freqs.entry(word.as_ref()).or_default() += 1;
            }
        }
        if freqs.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let mut words: Vec<(Vec<String>, u64)> = freqs
            .into_iter()
            .map(|(w, f)| (initial_symbols(w), f))
            .collect();

        let mut learned = Vec::with_capacity(merges);
        while learned.len() < merges {
            let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (symbols, freq) in &words {
                for pair in symbols.windows(2) {
                    *counts.entry((&pair[0], &pair[1])).or_default() += freq;
                }
            }
            let best = counts
                .into_iter()
                .max_by(|(pa, fa), (pb, fb)| fa.cmp(fb).then_with(|| pb.cmp(pa)));
            let Some(((left, right), _)) = best else { break };
            let (left, right) = (left.to_owned(), right.to_owned());
            for (symbols, _) in words.iter_mut() {
                if symbols.len() > 1 {
                    *symbols = merge_pair(symbols, &left, &right);
                }
            }
            learned.push((left, right));
        }
        BpeCodes::from_merges(learned)
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Subword symbols of a single word, `</w>` stripped and `@@` added to
    /// every non-final piece.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| {
                    self.ranks
                        .get(&(p[0].clone(), p[1].clone()))
                        .map(|&r| (r, p[0].clone(), p[1].clone()))
                })
                .min_by_key(|(r, _, _)| *r);
            match best {
                Some((_, left, right)) => symbols = merge_pair(&symbols, &left, &right),
                None => break,
            }
        }
        let last = symbols.len() - 1;
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if i == last {
                    s.strip_suffix(END_OF_WORD).map(str::to_owned).unwrap_or(s)
                } else {
                    format!("{}{}", s, CONTINUATION)
                }
            })
            .collect()
    }

    /// Segments a sentence, recording each word's token span.
    pub fn apply<S: AsRef<str>>(&self, sentence: &[S]) -> (Vec<String>, Segmentation) {
        let mut cache: HashMap<&str, Vec<String>> = HashMap::new();
        let mut tokens = Vec::new();
        let mut spans = Vec::with_capacity(sentence.len());
        for word in sentence {
            let word = word.as_ref();
            let pieces = cache
                .entry(word)
                .or_insert_with(|| self.segment_word(word));
            let start = tokens.len();
            tokens.extend(pieces.iter().cloned());
            spans.push(start..tokens.len());
        }
        (tokens, Segmentation { spans })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(VERSION_HEADER);
        out.push('\n');
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, DataError> {
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with("#version") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(DataError::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: format!("expected two space-separated symbols, got {:?}", line),
                });
            }
            merges.push((parts[0].to_owned(), parts[1].to_owned()));
        }
        BpeCodes::from_merges(merges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        fs::write(&path, self.to_text()).map_err(|e| DataError::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        BpeCodes::parse(&text, &path.display().to_string())
    }
}
