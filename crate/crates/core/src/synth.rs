//! Deterministic synthetic corpus: 8 relations plus NR, 70% NR bags, and
//! two entailment-style ties (`rel_1` always comes with `rel_2`, `rel_3`
//! with `rel_4`).
//!
//! Positive mentions put a trigger word of one of the bag's relations
//! between the two entities, except for a share of noisy mentions with no
//! trigger. NR mentions may carry a trigger outside the entity span.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{DatasetStats, Mention, MentionRecord, RelationSchema, NR_NAME};
use crate::error::CorpusError;
use crate::numeric::{mix_seed, SeededRng};

pub const RELATIONS: usize = 8;
/// Label sets of positive bags, cycled in this order.
pub const TEMPLATES: [&[usize]; 8] = [&[1, 2], &[2], &[3, 4], &[4], &[5], &[6], &[7], &[8]];
const TRIGGERS_PER_RELATION: usize = 3;
const FILLER_WORDS: usize = 60;
const NOISY_MENTION: f64 = 0.15;
const NR_DISTRACTOR: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub bags: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn nr_bags(&self) -> usize {
        self.bags * 7 / 10
    }

    pub fn positive_bags(&self) -> usize {
        self.bags - self.nr_bags()
    }

    /// Bags generated from template `t`.
    pub fn template_bags(&self, t: usize) -> usize {
        let p = self.positive_bags();
        p / TEMPLATES.len() + usize::from(t < p % TEMPLATES.len())
    }
}

/// `sum_{j < count} (1 + j % 4)`: mentions of `count` consecutive bags.
fn mentions_for(count: usize) -> usize {
    let (full, rem) = (count / 4, count % 4);
    count + 6 * full + rem * rem.saturating_sub(1) / 2
}

fn bag_mentions(j: usize) -> usize {
    1 + j % 4
}

pub fn schema() -> RelationSchema {
    let mut names = vec![NR_NAME.to_string()];
    names.extend((1..=RELATIONS).map(|r| format!("rel_{r}")));
    RelationSchema::from_names(&names).expect("synthetic schema is valid")
}

/// Counts the generator guarantees, derived from the design alone.
pub fn expected_stats(name: &str, cfg: &SynthConfig) -> DatasetStats {
    let nr_bags = cfg.nr_bags();
    let nr_mentions = mentions_for(nr_bags);
    let mentions = nr_mentions + mentions_for(cfg.positive_bags());
    let mut facts = 0;
    let mut multi = 0;
    for (t, labels) in TEMPLATES.iter().enumerate() {
        let n = cfg.template_bags(t);
        facts += n * labels.len();
        if labels.len() > 1 {
            multi += n;
        }
    }
    DatasetStats {
        name: name.to_string(),
        mentions,
        bags: cfg.bags,
        relations: RELATIONS + 1,
        nr_mentions,
        nr_bags,
        facts,
        multi_label_bags: multi,
    }
}

fn trigger(relation: usize, k: usize) -> String {
    format!("trig{relation}{}", (b'a' + k as u8) as char)
}

/// Between `min` and `min + spread - 1` filler words.
fn fillers(rng: &mut SeededRng, min: usize, spread: usize) -> Vec<String> {
    let n = min + rng.below(spread);
    (0..n)
        .map(|_| format!("w{}", rng.below(FILLER_WORDS)))
        .collect()
}

/// Left context, head, middle, tail, right context.
fn sentence(
    rng: &mut SeededRng,
    head: &str,
    tail: &str,
    middle_trigger: Option<String>,
    outside_trigger: Option<String>,
) -> (Vec<String>, usize, usize) {
    let mut left = fillers(rng, 0, 4);
    let mut middle = fillers(rng, 1, 3);
    let mut right = fillers(rng, 0, 4);
    if let Some(t) = middle_trigger {
        let at = rng.below(middle.len() + 1);
        middle.insert(at, t);
    }
    if let Some(t) = outside_trigger {
        if rng.bernoulli(0.5) {
            let at = rng.below(left.len() + 1);
            left.insert(at, t);
        } else {
            let at = rng.below(right.len() + 1);
            right.insert(at, t);
        }
    }
    let head_pos = left.len();
    let mut tokens = left;
    tokens.push(head.to_string());
    tokens.extend(middle);
    let tail_pos = tokens.len();
    tokens.push(tail.to_string());
    tokens.extend(right);
    (tokens, head_pos, tail_pos)
}

/// Mentions of one split. `split` prefixes entity names so splits share no
/// pairs.
pub fn generate(split: &str, cfg: &SynthConfig) -> Vec<Mention> {
    let mut rng = SeededRng::new(mix_seed(
        cfg.seed,
        &[split.len() as u64, split.bytes().map(u64::from).sum()],
    ));
    let mut out = Vec::new();
    let mut pair = 0usize;
    let mut emit = |rng: &mut SeededRng, labels: &[usize], j: usize, out: &mut Vec<Mention>| {
        let head = format!("{split}_h{pair}");
        let tail = format!("{split}_t{pair}");
        pair += 1;
        for _ in 0..bag_mentions(j) {
            let (middle, outside) = if labels == [0] {
                let d = rng
                    .bernoulli(NR_DISTRACTOR)
                    .then(|| trigger(1 + rng.below(RELATIONS), rng.below(TRIGGERS_PER_RELATION)));
                (None, d)
            } else if rng.bernoulli(NOISY_MENTION) {
                (None, None)
            } else {
                let r = labels[rng.below(labels.len())];
                (Some(trigger(r, rng.below(TRIGGERS_PER_RELATION))), None)
            };
            let (tokens, head_pos, tail_pos) = sentence(rng, &head, &tail, middle, outside);
            out.push(Mention {
                head: head.clone(),
                tail: tail.clone(),
                tokens,
                head_pos,
                tail_pos,
                labels: labels.iter().copied().collect::<BTreeSet<usize>>(),
            });
        }
    };
    for j in 0..cfg.nr_bags() {
        emit(&mut rng, &[0], j, &mut out);
    }
    let mut j = 0;
    for (t, labels) in TEMPLATES.iter().enumerate() {
        for _ in 0..cfg.template_bags(t) {
            emit(&mut rng, labels, j, &mut out);
            j += 1;
        }
    }
    rng.shuffle(&mut out);
    out
}

/// Paths of a written corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub schema: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

fn write_jsonl(
    path: &Path,
    mentions: &[Mention],
    schema: &RelationSchema,
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in mentions {
        let line = serde_json::to_string(&MentionRecord::from_mention(m, schema))
            .map_err(|e| CorpusError::Schema(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Writes `relations.tsv`, `train.jsonl` and `test.jsonl` into `dir`.
pub fn write_corpus(
    dir: &Path,
    train: &SynthConfig,
    test: &SynthConfig,
) -> Result<SynthFiles, CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let schema = schema();
    let files = SynthFiles {
        schema: dir.join("relations.tsv"),
        train: dir.join("train.jsonl"),
        test: dir.join("test.jsonl"),
    };
    fs::write(&files.schema, schema.to_text()).map_err(|e| CorpusError::io(&files.schema, e))?;
    write_jsonl(&files.train, &generate("train", train), &schema)?;
    write_jsonl(&files.test, &generate("test", test), &schema)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_bags;

    #[test]
    fn closed_form_mention_count() {
        for count in 0..40 {
            let direct: usize = (0..count).map(bag_mentions).sum();
            assert_eq!(mentions_for(count), direct, "count {count}");
        }
    }

    #[test]
    fn default_design_counts() {
        let s = expected_stats(
            "train",
            &SynthConfig {
                bags: 2000,
                seed: 1,
            },
        );
        assert_eq!((s.bags, s.nr_bags), (2000, 1400));
        assert_eq!((s.mentions, s.nr_mentions), (5000, 3500));
        assert_eq!(s.nr_percent(), 70.0);
        assert_eq!(s.facts, 750);
        assert_eq!(s.multi_label_bags, 150);
    }

    #[test]
    fn generated_matches_expected() {
        let schema = schema();
        for (split, bags) in [("train", 2000), ("test", 1000), ("x", 37)] {
            let cfg = SynthConfig { bags, seed: 3 };
            let ms = generate(split, &cfg);
            let stats = DatasetStats::compute(split, &build_bags(&ms, schema.nr()), &schema);
            assert_eq!(stats, expected_stats(split, &cfg));
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig { bags: 200, seed: 9 };
        let a = generate("train", &cfg);
        assert_eq!(a, generate("train", &cfg));
        assert_ne!(a, generate("train", &SynthConfig { seed: 10, ..cfg }));
        for m in &a {
            assert_eq!(m.tokens[m.head_pos], m.head);
            assert_eq!(m.tokens[m.tail_pos], m.tail);
            assert!(m.head_pos < m.tail_pos && m.tokens.len() <= 16);
        }
    }
}
