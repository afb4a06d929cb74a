//! Mention ingestion, vocabulary, position features, bag assembly and
//! dataset statistics.

mod bags;
mod embeddings;
mod features;
mod mention;
mod schema;
mod vocab;

pub use bags::{
    bag_nr_proportion, build_bags, mention_nr_proportion, nr_proportion, Bag, DatasetStats,
    EncodedBag,
};
pub use embeddings::{load_embeddings, random_embeddings, read_embeddings, OOV_INIT_RANGE};
pub use features::{featurize, FeatureGrid, PositionFeaturizer, DEFAULT_POSITION_CLIP};
pub use mention::{
    load_mentions, read_mentions, validate_record, Mention, MentionRecord, DEFAULT_MAX_LEN,
};
pub use schema::{RelationSchema, NR_NAME};
pub use vocab::{Vocabulary, PAD_TOKEN, UNK_TOKEN};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CorpusError;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

const CACHE_MAGIC: &[u8; 8] = b"RRDATA01";

/// Ingestion options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub min_count: usize,
    pub max_len: usize,
    pub position_clip: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_count: 0,
            max_len: DEFAULT_MAX_LEN,
            position_clip: DEFAULT_POSITION_CLIP,
        }
    }
}

/// Featurised train/test splits sharing the training vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub schema: RelationSchema,
    pub vocab: Vocabulary,
    pub ingest: IngestConfig,
    pub train: Vec<EncodedBag>,
    pub test: Vec<EncodedBag>,
    pub train_stats: DatasetStats,
    pub test_stats: Option<DatasetStats>,
}

impl PreparedDataset {
    /// Builds the vocabulary from `train` and featurises both splits with it.
    pub fn from_mentions(
        schema: RelationSchema,
        train: &[Mention],
        test: Option<&[Mention]>,
        ingest: IngestConfig,
    ) -> Self {
        let vocab = Vocabulary::build(train, ingest.min_count);
        let posf = PositionFeaturizer::new(ingest.position_clip);
        let encode = |bags: &[Bag]| -> Vec<EncodedBag> {
            bags.iter()
                .map(|b| EncodedBag::from_bag(b, &vocab, &posf))
                .collect()
        };
        let train_bags = build_bags(train, schema.nr());
        let train_stats = DatasetStats::compute("train", &train_bags, &schema);
        let (test_enc, test_stats) = match test {
            Some(ms) => {
                let bags = build_bags(ms, schema.nr());
                let stats = DatasetStats::compute("test", &bags, &schema);
                (encode(&bags), Some(stats))
            }
            None => (Vec::new(), None),
        };
        Self {
            train: encode(&train_bags),
            test: test_enc,
            schema,
            vocab,
            ingest,
            train_stats,
            test_stats,
        }
    }

    pub fn position_featurizer(&self) -> PositionFeaturizer {
        PositionFeaturizer::new(self.ingest.position_clip)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(CACHE_MAGIC)
            .map_err(|e| CorpusError::io(path, e))?;
        bincode::serialize_into(&mut w, self).map_err(|e| CorpusError::Cache(e.to_string()))?;
        w.flush().map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| CorpusError::io(path, e))?;
        if &magic != CACHE_MAGIC {
            return Err(CorpusError::Cache(format!(
                "{} is not a prepared dataset",
                path.display()
            )));
        }
        let mut ds: Self =
            bincode::deserialize_from(r).map_err(|e| CorpusError::Cache(e.to_string()))?;
        ds.vocab.reindex();
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip() {
        let schema = RelationSchema::from_names(&["NR", "r"]).unwrap();
        let text = r#"{"head":"a","tail":"b","relations":["r"],"tokens":["a","is","b"],"head_pos":0,"tail_pos":2}
{"head":"a","tail":"c","relations":["NR"],"tokens":["c","and","a"],"head_pos":2,"tail_pos":0}"#;
        let ms = read_mentions(text.as_bytes(), Path::new("t"), &schema, 120).unwrap();
        let ds = PreparedDataset::from_mentions(schema, &ms, Some(&ms), IngestConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.bin");
        ds.save(&p).unwrap();
        let back = PreparedDataset::load(&p).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.vocab.id("is"), ds.vocab.id("is"));
        assert_ne!(back.vocab.id("is"), Vocabulary::UNK);

        std::fs::write(&p, b"garbage!").unwrap();
        assert!(matches!(
            PreparedDataset::load(&p),
            Err(CorpusError::Cache(_))
        ));
    }
}
