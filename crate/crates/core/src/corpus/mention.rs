use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RelationSchema;
use crate::error::CorpusError;

/// Default maximum sentence length in tokens.
pub const DEFAULT_MAX_LEN: usize = 120;

/// One sentence with its two marked entity positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub head: String,
    pub tail: String,
    pub tokens: Vec<String>,
    pub head_pos: usize,
    pub tail_pos: usize,
    pub labels: BTreeSet<usize>,
}

impl Mention {
    pub fn entity_pair(&self) -> (&str, &str) {
        (&self.head, &self.tail)
    }

    /// Entity positions in ascending order.
    pub fn sorted_positions(&self) -> (usize, usize) {
        if self.head_pos <= self.tail_pos {
            (self.head_pos, self.tail_pos)
        } else {
            (self.tail_pos, self.head_pos)
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// On-disk JSON-lines record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MentionRecord {
    pub head: String,
    pub tail: String,
    #[serde(default)]
    pub relations: Vec<String>,
    pub tokens: Vec<String>,
    pub head_pos: usize,
    pub tail_pos: usize,
}

impl MentionRecord {
    pub fn from_mention(m: &Mention, schema: &RelationSchema) -> Self {
        Self {
            head: m.head.clone(),
            tail: m.tail.clone(),
            relations: m
                .labels
                .iter()
                .filter_map(|&id| schema.name(id).map(str::to_string))
                .collect(),
            tokens: m.tokens.clone(),
            head_pos: m.head_pos,
            tail_pos: m.tail_pos,
        }
    }
}

/// Validates a record and cuts it to `max_len` tokens around the entities.
///
/// An empty `relations` list means the sentence expresses no relation and
/// is labeled `NR`.
pub fn validate_record(
    rec: MentionRecord,
    schema: &RelationSchema,
    max_len: usize,
) -> Result<Mention, String> {
    let n = rec.tokens.len();
    if n == 0 {
        return Err("empty token list".into());
    }
    if rec.head_pos >= n || rec.tail_pos >= n {
        return Err(format!(
            "entity index out of range: head_pos {}, tail_pos {}, {} tokens",
            rec.head_pos, rec.tail_pos, n
        ));
    }
    if rec.head_pos == rec.tail_pos {
        return Err(format!("head_pos and tail_pos both {}", rec.head_pos));
    }
    let mut labels = BTreeSet::new();
    for name in &rec.relations {
        let id = schema
            .id(name)
            .ok_or_else(|| format!("unknown relation {name:?}"))?;
        labels.insert(id);
    }
    if labels.is_empty() {
        labels.insert(schema.nr());
    }

    let (lo, hi) = (
        rec.head_pos.min(rec.tail_pos),
        rec.head_pos.max(rec.tail_pos),
    );
    let mut tokens = rec.tokens;
    let mut shift = 0;
    if n > max_len {
        if hi - lo + 1 > max_len {
            return Err(format!(
                "entities {} tokens apart cannot fit in max_len {max_len}",
                hi - lo
            ));
        }
        shift = if hi < max_len { 0 } else { hi + 1 - max_len };
        tokens = tokens[shift..shift + max_len].to_vec();
    }
    Ok(Mention {
        head: rec.head,
        tail: rec.tail,
        tokens,
        head_pos: rec.head_pos - shift,
        tail_pos: rec.tail_pos - shift,
        labels,
    })
}

/// Parses a JSON-lines mention file. Blank lines are skipped; a file with
/// no records is an error.
pub fn load_mentions(
    path: &Path,
    schema: &RelationSchema,
    max_len: usize,
) -> Result<Vec<Mention>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let out = read_mentions(BufReader::new(file), path, schema, max_len)?;
    if out.is_empty() {
        return Err(CorpusError::Empty(path.display().to_string()));
    }
    Ok(out)
}

pub fn read_mentions<R: BufRead>(
    reader: R,
    path: &Path,
    schema: &RelationSchema,
    max_len: usize,
) -> Result<Vec<Mention>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MentionRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::parse(path, line_no, e.to_string()))?;
        let m = validate_record(rec, schema, max_len)
            .map_err(|msg| CorpusError::parse(path, line_no, msg))?;
        out.push(m);
    }
    Ok(out)
}
