use serde::{Deserialize, Serialize};

use super::{Mention, Vocabulary};

/// Default clip for relative token distances.
pub const DEFAULT_POSITION_CLIP: usize = 30;

/// Maps a signed token distance to a row of a position-embedding table.
///
/// Distances are clamped to `[-clip, clip]` and shifted by `clip`; one
/// extra row past the end is reserved for padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionFeaturizer {
    pub clip: usize,
}

impl Default for PositionFeaturizer {
    fn default() -> Self {
        Self {
            clip: DEFAULT_POSITION_CLIP,
        }
    }
}

impl PositionFeaturizer {
    pub fn new(clip: usize) -> Self {
        Self { clip }
    }

    /// Number of distinct distances, `2 * clip + 1`.
    pub fn distances(&self) -> usize {
        2 * self.clip + 1
    }

    /// Rows in the position table, including the PAD row.
    pub fn table_rows(&self) -> usize {
        self.distances() + 1
    }

    pub fn pad_id(&self) -> usize {
        self.distances()
    }

    pub fn id(&self, distance: isize) -> usize {
        let c = self.clip as isize;
        (distance.clamp(-c, c) + c) as usize
    }
}

/// Per-token indices into the word and the two position tables.
///
/// Grids hold only the true tokens. Padding up to a fixed length would add
/// PAD rows, which embed to zero and are never pooled over, so the encoder
/// works on the unpadded form; [`FeatureGrid::padded`] materialises the
/// fixed-length view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub words: Vec<usize>,
    pub pos_head: Vec<usize>,
    pub pos_tail: Vec<usize>,
    /// Sorted entity positions.
    pub p1: usize,
    pub p2: usize,
}

impl FeatureGrid {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Rows padded with PAD ids to `max_len` (never truncates).
    pub fn padded(&self, max_len: usize, pos_pad: usize) -> FeatureGrid {
        let target = max_len.max(self.len());
        let pad = |v: &Vec<usize>, id: usize| {
            let mut out = v.clone();
            out.resize(target, id);
            out
        };
        FeatureGrid {
            words: pad(&self.words, Vocabulary::PAD),
            pos_head: pad(&self.pos_head, pos_pad),
            pos_tail: pad(&self.pos_tail, pos_pad),
            p1: self.p1,
            p2: self.p2,
        }
    }
}

pub fn featurize(m: &Mention, vocab: &Vocabulary, posf: &PositionFeaturizer) -> FeatureGrid {
    let (p1, p2) = m.sorted_positions();
    let rel = |i: usize, anchor: usize| posf.id(i as isize - anchor as isize);
    FeatureGrid {
        words: m.tokens.iter().map(|t| vocab.id(t)).collect(),
        pos_head: (0..m.len()).map(|i| rel(i, m.head_pos)).collect(),
        pos_tail: (0..m.len()).map(|i| rel(i, m.tail_pos)).collect(),
        p1,
        p2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn mention(n: usize, head: usize, tail: usize) -> Mention {
        Mention {
            head: "h".into(),
            tail: "t".into(),
            tokens: (0..n).map(|i| format!("w{i}")).collect(),
            head_pos: head,
            tail_pos: tail,
            labels: BTreeSet::from([0]),
        }
    }

    #[test]
    fn relative_distances_to_head() {
        let posf = PositionFeaturizer::new(30);
        let vocab = Vocabulary::build(&[mention(5, 1, 3)], 0);
        let g = featurize(&mention(5, 1, 3), &vocab, &posf);
        let rel: Vec<isize> = g.pos_head.iter().map(|&id| id as isize - 30).collect();
        assert_eq!(rel, vec![-1, 0, 1, 2, 3]);
        assert_eq!((g.p1, g.p2), (1, 3));
    }

    #[test]
    fn clamps_long_distances() {
        let posf = PositionFeaturizer::new(30);
        assert_eq!(posf.id(45), 60);
        assert_eq!(posf.id(-45), 0);
        assert_eq!(posf.table_rows(), 62);
        assert_eq!(posf.pad_id(), 61);
    }

    #[test]
    fn unknown_word_maps_to_unk_and_sorted_positions() {
        let posf = PositionFeaturizer::default();
        let vocab = Vocabulary::build(&[mention(2, 0, 1)], 0);
        let mut m = mention(4, 3, 0);
        m.tokens[2] = "never-seen".into();
        let g = featurize(&m, &vocab, &posf);
        assert_eq!(g.words[2], Vocabulary::UNK);
        assert_eq!((g.p1, g.p2), (0, 3));
        let p = g.padded(6, posf.pad_id());
        assert_eq!(p.len(), 6);
        assert_eq!(p.words[5], Vocabulary::PAD);
        assert_eq!(p.pos_tail[4], posf.pad_id());
    }
}
