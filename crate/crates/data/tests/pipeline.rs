use proptest::prelude::*;
use treeattn_core::SeededRng;
use treeattn_data::batch::{make_batches, SentencePair};
use treeattn_data::bpe::merge_subwords;
use treeattn_data::conllu::{parse_conllu, to_conllu};
use treeattn_data::{make_synthetic_corpus, read_conllu, BpeCodes, Vocab};

#[test]
fn bpe_round_trip_over_synthetic_corpus() {
    let corpus = make_synthetic_corpus(1000, 3).sources();
    let codes = BpeCodes::learn(&corpus, 40).unwrap();
    for sentence in &corpus {
        let (tokens, seg) = codes.apply(sentence);
        assert_eq!(seg.num_words(), sentence.len());
        assert_eq!(seg.num_tokens(), tokens.len());
        assert_eq!(&merge_subwords(&tokens), sentence);
        for (span, word) in seg.spans().iter().zip(sentence) {
            let glued: String = tokens[span.clone()]
                .iter()
                .map(|t| t.trim_end_matches("@@"))
                .collect();
            assert_eq!(&glued, word);
        }
    }
    assert_eq!(codes, BpeCodes::learn(&corpus, 40).unwrap());
}

#[test]
fn conllu_token_count_matches_word_lines() {
    let text = "# sent_id = 1\n\
1-2\tdont\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tdo\t_\tAUX\t_\t_\t3\t_\t_\t_\n\
2\tnot\t_\tPART\t_\t_\t3\t_\t_\t_\n\
3\tgo\t_\tVERB\t_\t_\t0\t_\t_\t_\n\
3.1\tgone\t_\tVERB\t_\t_\t_\t_\t_\t_\n\
4\t.\t_\tPUNCT\t_\t_\t3\t_\t_\t_\n\
\n\
1\tyes\t_\tINTJ\t_\t_\t0\t_\t_\t_\n\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample.conllu");
    std::fs::write(&path, text).unwrap();
    let trees = read_conllu(&path).unwrap();
    let expected = text
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| {
            let id = l.split('\t').next().unwrap();
            !id.contains('-') && !id.contains('.')
        })
        .count();
    assert_eq!(trees.iter().map(|t| t.len()).sum::<usize>(), expected);
    assert_eq!(trees[0].heads, vec![3, 3, 0, 3]);
    assert_eq!(parse_conllu(&to_conllu(&trees), "again").unwrap(), trees);
}

#[test]
fn synthetic_corpus_writes_readable_files() {
    let corpus = make_synthetic_corpus(20, 8);
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path()).unwrap();
    let pairs =
        treeattn_data::read_parallel(dir.path().join("src.txt"), dir.path().join("tgt.txt")).unwrap();
    let (src, tgt): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    assert_eq!(src, corpus.sources());
    assert_eq!(tgt, corpus.targets());
    assert_eq!(read_conllu(dir.path().join("gold.conllu")).unwrap(), corpus.gold_trees());
}

#[test]
fn vocab_ids_are_reproducible() {
    let corpus = make_synthetic_corpus(300, 5).targets();
    let a = Vocab::from_corpus(&corpus);
    let b = Vocab::from_corpus(&corpus);
    assert_eq!(a, b);
    for s in &corpus {
        assert_eq!(&a.decode(&a.encode(s)), s);
    }
}

proptest! {
    #[test]
    fn batching_preserves_every_sentence(
        lengths in proptest::collection::vec((1usize..9, 1usize..9), 1..80),
        batch_size in 1usize..10,
        seed in 0u64..1000,
    ) {
        let pairs: Vec<SentencePair> = lengths
            .iter()
            .enumerate()
            .map(|(i, &(s, t))| SentencePair {
                source: (0..s).map(|k| 4 + i + k).collect(),
                target: (0..t).map(|k| 4 + i * 2 + k).collect(),
            })
            .collect();
        let batches = make_batches(&pairs, batch_size, &mut SeededRng::new(seed));
        let mut seen = vec![false; pairs.len()];
        for batch in &batches {
            prop_assert!(batch.len() <= batch_size);
            for (b, &i) in batch.indices.iter().enumerate() {
                prop_assert!(!seen[i]);
                seen[i] = true;
                prop_assert_eq!(batch.source(b), &pairs[i].source[..]);
                prop_assert_eq!(batch.target(b), &pairs[i].target[..]);
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let again = make_batches(&pairs, batch_size, &mut SeededRng::new(seed));
        prop_assert_eq!(batches, again);
    }
}
