use treeattn_core::SeededRng;

use crate::vocab::Vocab;

/// Sentences per sorting window.
pub const SORT_WINDOW: usize = 1000;

/// Numerized sentence pair (no BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Padded mini-batch. Rows are sentences; padding uses [`Vocab::PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Corpus indices of the sentences in this batch.
    pub indices: Vec<usize>,
    pub source: Vec<Vec<usize>>,
    pub target: Vec<Vec<usize>>,
    pub source_lengths: Vec<usize>,
    pub target_lengths: Vec<usize>,
}

impl Batch {
    pub fn from_pairs(indices: Vec<usize>, pairs: &[SentencePair]) -> Self {
        let chosen: Vec<&SentencePair> = indices.iter().map(|&i| &pairs[i]).collect();
        let source_lengths: Vec<usize> = chosen.iter().map(|p| p.source.len()).collect();
        let target_lengths: Vec<usize> = chosen.iter().map(|p| p.target.len()).collect();
        let pad = |seqs: Vec<&Vec<usize>>, width: usize| -> Vec<Vec<usize>> {
            seqs.into_iter()
                .map(|s| {
                    let mut row = s.clone();
                    row.resize(width, Vocab::PAD_ID);
                    row
                })
                .collect()
        };
        let src_width = source_lengths.iter().copied().max().unwrap_or(0);
        let tgt_width = target_lengths.iter().copied().max().unwrap_or(0);
        Batch {
            source: pad(chosen.iter().map(|p| &p.source).collect(), src_width),
            target: pad(chosen.iter().map(|p| &p.target).collect(), tgt_width),
            indices,
            source_lengths,
            target_lengths,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Unpadded source of sentence `b`.
    pub fn source(&self, b: usize) -> &[usize] {
        &self.source[b][..self.source_lengths[b]]
    }

    pub fn target(&self, b: usize) -> &[usize] {
        &self.target[b][..self.target_lengths[b]]
    }

    /// `true` for real (non-padded) target positions.
    pub fn target_mask(&self) -> Vec<Vec<bool>> {
        self.target
            .iter()
            .zip(&self.target_lengths)
            .map(|(row, &len)| (0..row.len()).map(|i| i < len).collect())
            .collect()
    }
}

/// Shuffles, sorts each window of [`SORT_WINDOW`] sentences by source length,
/// cuts batches and shuffles the batch order. Deterministic given `rng`.
pub fn make_batches(pairs: &[SentencePair], batch_size: usize, rng: &mut SeededRng) -> Vec<Batch> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);
    let mut batches = Vec::new();
    for window in order.chunks_mut(SORT_WINDOW) {
        window.sort_by_key(|&i| pairs[i].source.len());
        for chunk in window.chunks(batch_size) {
            batches.push(Batch::from_pairs(chunk.to_vec(), pairs));
        }
    }
    rng.shuffle(&mut batches);
    batches
}

/// Batches in corpus order without shuffling, for evaluation.
pub fn sequential_batches(pairs: &[SentencePair], batch_size: usize) -> Vec<Batch> {
    assert!(batch_size > 0, "batch size must be positive");
    let indices: Vec<usize> = (0..pairs.len()).collect();
    indices
        .chunks(batch_size)
        .map(|c| Batch::from_pairs(c.to_vec(), pairs))
        .collect()
}
