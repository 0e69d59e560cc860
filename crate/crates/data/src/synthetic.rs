//! Synthetic agreement language.
//!
//! Source sentences have the shape
//! `[the] SUBJ (PREP NOUN){1..4} VERB [DET] OBJ`, where every noun inside the
//! prepositional chain has the opposite grammatical number of the subject.
//! The target language copies nouns, translates function words, and marks
//! the verb with a suffix that agrees with the subject. The noun nearest to
//! the verb is therefore always the wrong cue for agreement.

use std::fs;
use std::path::Path;

use treeattn_core::SeededRng;

use crate::conllu::{to_conllu, GoldTree};
use crate::corpus::write_tokenized;
use crate::DataError;

pub const NOUNS: &[&str] = &[
    "boy", "girl", "dog", "cat", "farmer", "teacher", "bird", "horse", "king", "doctor",
    "student", "baker", "pilot", "singer", "sailor",
];
pub const VERBS: &[&str] = &[
    "ordered", "saw", "liked", "found", "helped", "called", "painted", "visited", "chased", "fed",
];
const PREPOSITIONS: &[(&str, &str)] = &[
    ("near", "bij"),
    ("with", "met"),
    ("behind", "achter"),
    ("beside", "naast"),
    ("of", "van"),
    ("from", "uit"),
];
const DETERMINERS: &[(&str, &str)] = &[("the", "de"), ("a", "een")];
pub const SINGULAR_SUFFIX: &str = "_sg";
pub const PLURAL_SUFFIX: &str = "_pl";
pub const MAX_DISTRACTORS: usize = 4;
pub const MAX_LEN: usize = 12;

/// Coarse class of a target token, used for gate analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetClass {
    Verb,
    Noun,
    Function,
    Other,
}

pub fn target_class(token: &str) -> TargetClass {
    if token.ends_with(SINGULAR_SUFFIX) || token.ends_with(PLURAL_SUFFIX) {
        TargetClass::Verb
    } else if PREPOSITIONS.iter().any(|(_, t)| *t == token) || DETERMINERS.iter().any(|(_, t)| *t == token) {
        TargetClass::Function
    } else if NOUNS.iter().any(|n| *n == token || token.strip_suffix('s') == Some(n)) {
        TargetClass::Noun
    } else {
        TargetClass::Other
    }
}

/// Verb stem and number (`true` = plural) of an inflected target verb.
pub fn parse_target_verb(token: &str) -> Option<(&str, bool)> {
    if let Some(stem) = token.strip_suffix(SINGULAR_SUFFIX) {
        Some((stem, false))
    } else {
        token.strip_suffix(PLURAL_SUFFIX).map(|stem| (stem, true))
    }
}

pub fn inflect(verb: &str, plural: bool) -> String {
    format!("{}{}", verb, if plural { PLURAL_SUFFIX } else { SINGULAR_SUFFIX })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementSentence {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub gold: GoldTree,
    pub plural_subject: bool,
    /// 0-based source positions.
    pub subject: usize,
    pub verb: usize,
    pub distractors: Vec<usize>,
    /// 0-based position of the inflected verb in the target.
    pub target_verb: usize,
}

impl AgreementSentence {
    /// The distractor noun closest to the verb.
    pub fn nearest_distractor(&self) -> usize {
        *self.distractors.last().expect("at least one distractor")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementCorpus {
    pub sentences: Vec<AgreementSentence>,
}

fn noun_form(noun: &str, plural: bool) -> String {
    if plural {
        format!("{}s", noun)
    } else {
        noun.to_owned()
    }
}

fn generate(rng: &mut SeededRng) -> AgreementSentence {
    let plural = rng.bernoulli(0.5);
    let distractor_count = 1 + rng.index(MAX_DISTRACTORS);

    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut heads = Vec::new();
    let mut upos = Vec::new();

    // Heads are filled in once the verb position is known; placeholders
    // point at word indices (0-based) and are shifted to 1-based at the end.
    const VERB_SLOT: usize = usize::MAX;

    source.push("the".to_owned());
    target.push("de".to_owned());
    heads.push(1);
    upos.push("DET");

    let subject = source.len();
    let subject_noun = *rng.choose(NOUNS);
    source.push(noun_form(subject_noun, plural));
    target.push(noun_form(subject_noun, plural));
    heads.push(VERB_SLOT);
    upos.push("NOUN");

    let mut distractors = Vec::new();
    let mut previous_noun = subject;
    for _ in 0..distractor_count {
        let (prep, prep_t) = *rng.choose(PREPOSITIONS);
        let noun = *rng.choose(NOUNS);
        let prep_pos = source.len();
        source.push(prep.to_owned());
        target.push(prep_t.to_owned());
        heads.push(prep_pos + 1);
        upos.push("ADP");
        let noun_pos = source.len();
        source.push(noun_form(noun, !plural));
        target.push(noun_form(noun, !plural));
        heads.push(previous_noun);
        upos.push("NOUN");
        distractors.push(noun_pos);
        previous_noun = noun_pos;
    }

    let verb = source.len();
    let verb_word = *rng.choose(VERBS);
    source.push(verb_word.to_owned());
    let target_verb = target.len();
    target.push(inflect(verb_word, plural));
    heads.push(VERB_SLOT);
    upos.push("VERB");

    let object_plural = rng.bernoulli(0.5);
    let with_det = source.len() + 2 <= MAX_LEN && rng.bernoulli(0.5);
    if with_det {
        let (det, det_t) = if object_plural {
            DETERMINERS[0]
        } else {
            *rng.choose(DETERMINERS)
        };
        source.push(det.to_owned());
        target.push(det_t.to_owned());
        heads.push(source.len());
        upos.push("DET");
    }
    let object = *rng.choose(NOUNS);
    source.push(noun_form(object, object_plural));
    target.push(noun_form(object, object_plural));
    heads.push(verb);
    upos.push("NOUN");

    // to 1-based heads with the verb as root
    let heads: Vec<usize> = heads
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            if k == verb {
                0
            } else if h == VERB_SLOT {
                verb + 1
            } else {
                h + 1
            }
        })
        .collect();
    let gold = GoldTree::new(
        source.clone(),
        heads,
        upos.iter().map(|s| s.to_string()).collect(),
    )
    .expect("generated trees are well formed");

    AgreementSentence {
        source,
        target,
        gold,
        plural_subject: plural,
        subject,
        verb,
        distractors,
        target_verb,
    }
}

/// Generates `size` sentences; deterministic given `seed`.
pub fn make_synthetic_corpus(size: usize, seed: u64) -> AgreementCorpus {
    let mut rng = SeededRng::new(seed);
    AgreementCorpus {
        sentences: (0..size).map(|_| generate(&mut rng)).collect(),
    }
}

impl AgreementCorpus {
    pub fn sources(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.source.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.target.clone()).collect()
    }

    pub fn gold_trees(&self) -> Vec<GoldTree> {
        self.sentences.iter().map(|s| s.gold.clone()).collect()
    }

    /// Writes `src.txt`, `tgt.txt` and `gold.conllu` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        write_tokenized(dir.join("src.txt"), &self.sources())?;
        write_tokenized(dir.join("tgt.txt"), &self.targets())?;
        let path = dir.join("gold.conllu");
        fs::write(&path, to_conllu(&self.gold_trees())).map_err(|e| DataError::io(&path, e))
    }
}

/// Random token sequences whose translation is the sequence itself.
pub fn make_copy_corpus(size: usize, vocab_size: usize, seed: u64) -> Vec<(Vec<String>, Vec<String>)> {
    let mut rng = SeededRng::new(seed);
    (0..size)
        .map(|_| {
            let len = 3 + rng.index(6);
            let s: Vec<String> = (0..len).map(|_| format!("w{}", rng.index(vocab_size))).collect();
            (s.clone(), s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_respect_the_grammar() {
        let corpus = make_synthetic_corpus(2000, 1);
        for s in &corpus.sentences {
            assert!(s.source.len() <= MAX_LEN, "{:?}", s.source);
            assert_eq!(s.source.len(), s.target.len());
            assert_eq!(s.gold.heads.iter().filter(|&&h| h == 0).count(), 1);
            assert_eq!(s.gold.heads[s.verb], 0);
            assert_eq!(s.gold.heads[s.subject], s.verb + 1);
            let (_, plural) = parse_target_verb(&s.target[s.target_verb]).unwrap();
            assert_eq!(plural, s.plural_subject);
            for &d in &s.distractors {
                assert_eq!(s.source[d].ends_with('s'), !s.plural_subject);
            }
            assert!(treeattn_core::matrix_tree::is_arborescence(
                &s.gold
                    .heads
                    .iter()
                    .enumerate()
                    .map(|(k, &h)| if h == 0 { k } else { h - 1 })
                    .collect::<Vec<_>>()
            ));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(make_synthetic_corpus(50, 9), make_synthetic_corpus(50, 9));
        assert_ne!(make_synthetic_corpus(50, 9), make_synthetic_corpus(50, 10));
    }

    #[test]
    fn numbers_are_balanced() {
        let corpus = make_synthetic_corpus(10_000, 1);
        let plural = corpus.sentences.iter().filter(|s| s.plural_subject).count();
        let share = plural as f64 / 10_000.0;
        assert!((share - 0.5).abs() <= 0.02, "plural share {}", share);
    }

    #[test]
    fn verb_ignores_adjacent_distractor() {
        let corpus = make_synthetic_corpus(500, 4);
        let s = corpus
            .sentences
            .iter()
            .find(|s| !s.plural_subject && s.distractors.len() == 1)
            .unwrap();
        assert!(s.source[s.nearest_distractor()].ends_with('s'));
        assert!(s.target[s.target_verb].ends_with(SINGULAR_SUFFIX));
        assert_eq!(s.nearest_distractor() + 1, s.verb);
    }

    #[test]
    fn target_classes() {
        assert_eq!(target_class("ordered_sg"), TargetClass::Verb);
        assert_eq!(target_class("de"), TargetClass::Function);
        assert_eq!(target_class("bij"), TargetClass::Function);
        assert_eq!(target_class("girls"), TargetClass::Noun);
        assert_eq!(target_class("</s>"), TargetClass::Other);
    }
}
