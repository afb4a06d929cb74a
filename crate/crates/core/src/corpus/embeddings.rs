use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::Vocabulary;
use crate::error::CorpusError;
use crate::numeric::{DenseMatrix, SeededRng};

/// Range of the uniform init for words without a pretrained vector.
pub const OOV_INIT_RANGE: f64 = 0.25;

/// Loads whitespace-separated `word v1 .. vd` lines into a `|vocab| x d`
/// matrix. An optional leading `<count> <dim>` header is accepted.
///
/// Vocabulary words missing from the file (UNK included) are drawn from
/// `U[-0.25, 0.25]` in id order; the PAD row is zero.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    rng: &mut SeededRng,
) -> Result<DenseMatrix<f64>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_embeddings(BufReader::new(file), path, vocab, rng)
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
    path: &Path,
    vocab: &Vocabulary,
    rng: &mut SeededRng,
) -> Result<DenseMatrix<f64>, CorpusError> {
    let mut dim: Option<usize> = None;
    let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if line_no == 1 && fields.len() == 2 {
            if let (Ok(_), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }
        let values = fields[1..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CorpusError::parse(path, line_no, format!("bad value: {e}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::parse(path, line_no, "non-finite value"));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(CorpusError::parse(
                    path,
                    line_no,
                    format!("expected {d} values, found {}", values.len()),
                ));
            }
            Some(_) => {}
        }
        let word = fields[0];
        if word == super::PAD_TOKEN || !vocab.contains(word) {
            continue;
        }
        let id = vocab.id(word);
        if found[id].is_none() {
            found[id] = Some(values);
        }
    }
    let dim = match dim {
        Some(d) if d > 0 => d,
        _ => return Err(CorpusError::Empty(path.display().to_string())),
    };

    let mut m = DenseMatrix::zeros(vocab.len(), dim);
    for (id, vec) in found.into_iter().enumerate() {
        if id == Vocabulary::PAD {
            continue;
        }
        match vec {
            Some(v) => m.row_mut(id).copy_from_slice(&v),
            None => fill_uniform(m.row_mut(id), rng),
        }
    }
    Ok(m)
}

/// Word table with every non-PAD row drawn from `U[-0.25, 0.25]`.
pub fn random_embeddings(vocab_len: usize, dim: usize, rng: &mut SeededRng) -> DenseMatrix<f64> {
    let mut m = DenseMatrix::zeros(vocab_len, dim);
    for id in 0..vocab_len {
        if id != Vocabulary::PAD {
            fill_uniform(m.row_mut(id), rng);
        }
    }
    m
}

fn fill_uniform(row: &mut [f64], rng: &mut SeededRng) {
    for x in row {
        *x = rng.uniform_in(-OOV_INIT_RANGE, OOV_INIT_RANGE);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Mention;
    use std::collections::BTreeSet;

    fn vocab() -> Vocabulary {
        let m = Mention {
            head: "h".into(),
            tail: "t".into(),
            tokens: vec!["born".into(), "lived".into(), "oov".into()],
            head_pos: 0,
            tail_pos: 1,
            labels: BTreeSet::from([0]),
        };
        Vocabulary::build(&[m], 0)
    }

    fn file(dim: usize, words: &[&str]) -> String {
        let mut s = format!("{} {dim}\n", words.len());
        for (k, w) in words.iter().enumerate() {
            s.push_str(w);
            for j in 0..dim {
                s.push_str(&format!(" {}", (k * dim + j) as f64 * 0.01));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn pretrained_rows_oov_and_pad() {
        let v = vocab();
        let text = file(50, &["born", "lived", "unused"]);
        let m = read_embeddings(
            text.as_bytes(),
            Path::new("e.txt"),
            &v,
            &mut SeededRng::new(3),
        )
        .unwrap();
        assert_eq!(m.shape(), (5, 50));
        assert_eq!(m.row(v.id("born"))[1], 0.01);
        assert_eq!(m.row(v.id("lived"))[0], 0.5);
        assert!(m.row(Vocabulary::PAD).iter().all(|&x| x == 0.0));
        for id in [Vocabulary::UNK, v.id("oov")] {
            assert!(m.row(id).iter().all(|x| x.abs() <= 0.25));
            assert!(m.row(id).iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn headerless_and_inconsistent_dims() {
        let v = vocab();
        let m = read_embeddings(
            "born 1 2\nlived 3 4\n".as_bytes(),
            Path::new("e"),
            &v,
            &mut SeededRng::new(0),
        )
        .unwrap();
        assert_eq!(m.cols(), 2);
        let err = read_embeddings(
            "born 1 2\nlived 3 4 5\n".as_bytes(),
            Path::new("e"),
            &v,
            &mut SeededRng::new(0),
        )
        .unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
