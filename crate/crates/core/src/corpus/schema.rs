use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

/// Name of the distinguished no-relation label.
pub const NR_NAME: &str = "NR";

/// Dense relation ids `0..C` with exactly one `NR`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    names: Vec<String>,
    nr: usize,
}

impl RelationSchema {
    /// Builds a schema where `names[i]` gets id `i`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, CorpusError> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let mut seen = HashMap::new();
        for (id, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(CorpusError::Schema(format!(
                    "invalid relation name {name:?}"
                )));
            }
            if seen.insert(name.as_str(), id).is_some() {
                return Err(CorpusError::Schema(format!("duplicate relation {name}")));
            }
        }
        let nr = *seen
            .get(NR_NAME)
            .ok_or_else(|| CorpusError::Schema(format!("missing {NR_NAME}")))?;
        Ok(Self { names, nr })
    }

    /// Reads `name<TAB>id` lines.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CorpusError> {
        let mut entries: Vec<(usize, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (name, id) = line
                .split_once('\t')
                .ok_or_else(|| CorpusError::parse(path, line_no, "expected name<TAB>id"))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| CorpusError::parse(path, line_no, format!("bad id {id:?}")))?;
            entries.push((id, name.trim().to_string()));
        }
        entries.sort();
        for (expected, (id, name)) in entries.iter().enumerate() {
            if *id != expected {
                return Err(CorpusError::Schema(format!(
                    "ids must be dense from 0; relation {name} has id {id}, expected {expected}"
                )));
            }
        }
        let names: Vec<&str> = entries.iter().map(|(_, n)| n.as_str()).collect();
        Self::from_names(&names)
    }

    pub fn to_text(&self) -> String {
        self.names
            .iter()
            .enumerate()
            .map(|(id, n)| format!("{n}\t{id}\n"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Stable content hash, hex encoded.
    pub fn hash(&self) -> String {
        super::sha256_hex(self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_unordered_lines() {
        let s = RelationSchema::parse("b\t2\nNR\t0\na\t1\n", Path::new("s.tsv")).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.nr(), 0);
        assert_eq!(s.id("b"), Some(2));
        assert_eq!(s.name(1), Some("a"));
    }

    #[test]
    fn rejects_missing_nr_and_gaps() {
        assert!(RelationSchema::parse("a\t0\nb\t1\n", Path::new("s")).is_err());
        assert!(RelationSchema::parse("NR\t0\nb\t2\n", Path::new("s")).is_err());
        assert!(RelationSchema::parse("NR\t0\nNR\t1\n", Path::new("s")).is_err());
        let err = RelationSchema::parse("NR\t0\nb 1\n", Path::new("s")).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RelationSchema::from_names(&["NR", "x"]).unwrap();
        let b = RelationSchema::from_names(&["NR", "y"]).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
