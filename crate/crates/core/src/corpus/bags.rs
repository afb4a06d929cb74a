use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{featurize, FeatureGrid, Mention, PositionFeaturizer, RelationSchema, Vocabulary};
use crate::error::CorpusError;

/// All mentions of one entity pair with the union of their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag {
    pub head: String,
    pub tail: String,
    pub labels: BTreeSet<usize>,
    pub mentions: Vec<Mention>,
}

/// Groups mentions by entity pair. Bags come out sorted by pair; mentions
/// keep input order within a bag. A label union containing both NR and a
/// positive relation drops NR.
pub fn build_bags(mentions: &[Mention], nr: usize) -> Vec<Bag> {
    let mut groups: BTreeMap<(&str, &str), Vec<&Mention>> = BTreeMap::new();
    for m in mentions {
        groups.entry(m.entity_pair()).or_default().push(m);
    }
    groups
        .into_iter()
        .map(|((head, tail), ms)| {
            let mut labels: BTreeSet<usize> =
                ms.iter().flat_map(|m| m.labels.iter().copied()).collect();
            if labels.len() > 1 {
                labels.remove(&nr);
            }
            Bag {
                head: head.to_string(),
                tail: tail.to_string(),
                labels,
                mentions: ms.into_iter().cloned().collect(),
            }
        })
        .collect()
}

/// A bag reduced to what the model consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedBag {
    pub head: String,
    pub tail: String,
    /// Sorted, non-empty.
    pub labels: Vec<usize>,
    pub sentences: Vec<FeatureGrid>,
}

impl EncodedBag {
    pub fn from_bag(bag: &Bag, vocab: &Vocabulary, posf: &PositionFeaturizer) -> Self {
        Self {
            head: bag.head.clone(),
            tail: bag.tail.clone(),
            labels: bag.labels.iter().copied().collect(),
            sentences: bag
                .mentions
                .iter()
                .map(|m| featurize(m, vocab, posf))
                .collect(),
        }
    }

    pub fn is_nr_only(&self, nr: usize) -> bool {
        self.labels == [nr]
    }
}

/// Percentage of label sets that are exactly `{NR}`.
pub fn nr_proportion<'a, I>(label_sets: I, nr: usize) -> Result<f64, CorpusError>
where
    I: IntoIterator<Item = &'a BTreeSet<usize>>,
{
    let mut total = 0usize;
    let mut nr_only = 0usize;
    for labels in label_sets {
        total += 1;
        if labels.len() == 1 && labels.contains(&nr) {
            nr_only += 1;
        }
    }
    if total == 0 {
        return Err(CorpusError::Empty("nr_proportion".into()));
    }
    Ok(100.0 * nr_only as f64 / total as f64)
}

/// Mention-level NR proportion of a mention list.
pub fn mention_nr_proportion(mentions: &[Mention], nr: usize) -> Result<f64, CorpusError> {
    nr_proportion(mentions.iter().map(|m| &m.labels), nr)
}

/// Mention-level NR proportion over the mentions held in bags.
pub fn bag_nr_proportion(bags: &[Bag], nr: usize) -> Result<f64, CorpusError> {
    nr_proportion(
        bags.iter()
            .flat_map(|b| b.mentions.iter().map(|m| &m.labels)),
        nr,
    )
}

/// Corpus-level counts reported by ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub mentions: usize,
    pub bags: usize,
    pub relations: usize,
    pub nr_mentions: usize,
    pub nr_bags: usize,
    /// Positive (pair, relation) facts.
    pub facts: usize,
    pub multi_label_bags: usize,
}

impl DatasetStats {
    pub fn compute(name: &str, bags: &[Bag], schema: &RelationSchema) -> Self {
        let nr = schema.nr();
        let nr_only = |l: &BTreeSet<usize>| l.len() == 1 && l.contains(&nr);
        Self {
            name: name.to_string(),
            mentions: bags.iter().map(|b| b.mentions.len()).sum(),
            bags: bags.len(),
            relations: schema.len(),
            nr_mentions: bags
                .iter()
                .flat_map(|b| &b.mentions)
                .filter(|m| nr_only(&m.labels))
                .count(),
            nr_bags: bags.iter().filter(|b| nr_only(&b.labels)).count(),
            facts: bags
                .iter()
                .map(|b| b.labels.iter().filter(|&&l| l != nr).count())
                .sum(),
            multi_label_bags: bags.iter().filter(|b| b.labels.len() > 1).count(),
        }
    }

    /// Mention-level NR percentage.
    pub fn nr_percent(&self) -> f64 {
        if self.mentions == 0 {
            0.0
        } else {
            100.0 * self.nr_mentions as f64 / self.mentions as f64
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>12}", "split", self.name)?;
        writeln!(f, "{:<18} {:>12}", "mentions", self.mentions)?;
        writeln!(f, "{:<18} {:>12}", "entity pairs", self.bags)?;
        writeln!(f, "{:<18} {:>12}", "relation facts", self.facts)?;
        writeln!(f, "{:<18} {:>12}", "relations", self.relations)?;
        writeln!(
            f,
            "{:<18} {:>12}",
            "multi-label bags", self.multi_label_bags
        )?;
        writeln!(f, "{:<18} {:>12}", "NR mentions", self.nr_mentions)?;
        writeln!(f, "{:<18} {:>12}", "NR bags", self.nr_bags)?;
        writeln!(f, "{:<18} {:>12.2}", "NR proportion (%)", self.nr_percent())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(head: &str, tail: &str, labels: &[usize]) -> Mention {
        Mention {
            head: head.into(),
            tail: tail.into(),
            tokens: vec![head.into(), "x".into(), tail.into()],
            head_pos: 0,
            tail_pos: 2,
            labels: labels.iter().copied().collect(),
        }
    }

    #[test]
    fn same_pair_two_relations() {
        let bags = build_bags(
            &[
                m("Patsy Ramsey", "Atlanta", &[1]),
                m("Patsy Ramsey", "Atlanta", &[2]),
            ],
            0,
        );
        assert_eq!(bags.len(), 1);
        assert_eq!(bags[0].labels.len(), 2);
    }

    #[test]
    fn distinct_pairs() {
        assert_eq!(
            build_bags(&[m("a", "b", &[1]), m("a", "c", &[1])], 0).len(),
            2
        );
    }

    #[test]
    fn nr_dropped_next_to_positive() {
        let bags = build_bags(&[m("a", "b", &[0]), m("a", "b", &[2])], 0);
        assert_eq!(bags[0].labels, BTreeSet::from([2]));
    }

    #[test]
    fn nr_proportion_cases() {
        let ms = [m("a", "b", &[1]), m("a", "c", &[2])];
        assert_eq!(mention_nr_proportion(&ms, 0).unwrap(), 0.0);
        let ms = [
            m("a", "b", &[0]),
            m("a", "c", &[2]),
            m("a", "d", &[0]),
            m("a", "e", &[0]),
        ];
        assert_eq!(mention_nr_proportion(&ms, 0).unwrap(), 75.0);
        assert_eq!(bag_nr_proportion(&build_bags(&ms, 0), 0).unwrap(), 75.0);
        assert!(mention_nr_proportion(&[], 0).is_err());
    }

    #[test]
    fn stats_counts() {
        let schema = RelationSchema::from_names(&["NR", "a", "b"]).unwrap();
        let ms = [m("x", "y", &[1]), m("x", "y", &[2]), m("x", "z", &[0])];
        let s = DatasetStats::compute("train", &build_bags(&ms, 0), &schema);
        assert_eq!(
            (s.mentions, s.bags, s.nr_mentions, s.nr_bags, s.facts),
            (3, 2, 1, 1, 2)
        );
        assert!(s.to_string().contains("33.33"));
    }

    fn arb_mentions() -> impl Strategy<Value = Vec<Mention>> {
        proptest::collection::vec((0usize..4, 0usize..4, 0usize..4), 0..30).prop_map(|v| {
            v.into_iter()
                .map(|(h, t, l)| m(&format!("h{h}"), &format!("t{t}"), &[l]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn every_mention_in_one_bag(ms in arb_mentions()) {
            let bags = build_bags(&ms, 0);
            prop_assert_eq!(bags.iter().map(|b| b.mentions.len()).sum::<usize>(), ms.len());
            for b in &bags {
                prop_assert!(!b.mentions.is_empty());
                prop_assert!(b.mentions.iter().all(|x| x.head == b.head && x.tail == b.tail));
                prop_assert!(b.labels.len() == 1 || !b.labels.contains(&0));
            }
            if !ms.is_empty() {
                let p = mention_nr_proportion(&ms, 0).unwrap();
                prop_assert!((0.0..=100.0).contains(&p));
            }
        }

        #[test]
        fn order_independent_contents(ms in arb_mentions(), seed in any::<u64>()) {
            let mut shuffled = ms.clone();
            crate::numeric::SeededRng::new(seed).shuffle(&mut shuffled);
            let a = build_bags(&ms, 0);
            let b = build_bags(&shuffled, 0);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!((&x.head, &x.tail, &x.labels), (&y.head, &y.tail, &y.labels));
                let mut xs = x.mentions.clone();
                let mut ys = y.mentions.clone();
                xs.sort_by(|p, q| format!("{p:?}").cmp(&format!("{q:?}")));
                ys.sort_by(|p, q| format!("{p:?}").cmp(&format!("{q:?}")));
                prop_assert_eq!(xs, ys);
            }
        }
    }
}
