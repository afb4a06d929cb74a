//! Bag representations from sentence embeddings: uniform average or
//! relation-conditioned attention.

use crate::error::ModelError;
use crate::numeric::{axpy, dot, softmax, DenseMatrix, Real};

/// Fixed scale on the sentence/class similarity before the softmax.
pub const ATTENTION_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct BagRepr<T> {
    pub r: Vec<T>,
    pub alpha: Vec<T>,
    /// Conditioning relation for attention; `None` for the average.
    pub relation: Option<usize>,
}

fn check_sentences<T: Real>(sentences: &[Vec<T>]) -> Result<usize, ModelError> {
    let first = sentences.first().ok_or(ModelError::EmptyBag)?;
    let d = first.len();
    for s in sentences {
        if s.len() != d {
            return Err(ModelError::Dimension {
                what: "sentence embedding",
                expected: d,
                actual: s.len(),
            });
        }
    }
    Ok(d)
}

fn mix<T: Real>(sentences: &[Vec<T>], alpha: &[T], d: usize) -> Vec<T> {
    let mut r = vec![T::zero(); d];
    for (s, &a) in sentences.iter().zip(alpha) {
        axpy(a, s, &mut r);
    }
    r
}

pub fn aggregate_ave<T: Real>(sentences: &[Vec<T>]) -> Result<BagRepr<T>, ModelError> {
    let d = check_sentences(sentences)?;
    let n = T::from_usize(sentences.len()).unwrap();
    let mut r = vec![T::zero(); d];
    for s in sentences {
        axpy(T::one(), s, &mut r);
    }
    r.iter_mut().for_each(|x| *x = *x / n);
    Ok(BagRepr {
        r,
        alpha: vec![T::one() / n; sentences.len()],
        relation: None,
    })
}

/// `e_j = 0.5 <W[c], s_j>`, `alpha = softmax(e)`, `r = sum alpha_j s_j`.
pub fn aggregate_att<T: Real>(
    sentences: &[Vec<T>],
    relation: usize,
    classes: &DenseMatrix<T>,
) -> Result<BagRepr<T>, ModelError> {
    let d = check_sentences(sentences)?;
    if relation >= classes.rows() {
        return Err(ModelError::BadRelation(relation));
    }
    if classes.cols() != d {
        return Err(ModelError::Dimension {
            what: "class embedding",
            expected: d,
            actual: classes.cols(),
        });
    }
    let w = classes.row(relation);
    let a = T::lit(ATTENTION_SCALE);
    let e: Vec<T> = sentences.iter().map(|s| a * dot(w, s)).collect();
    let alpha = softmax(&e)?;
    Ok(BagRepr {
        r: mix(sentences, &alpha, d),
        alpha,
        relation: Some(relation),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorGrads<T> {
    pub sentences: Vec<Vec<T>>,
    /// Gradient reaching the conditioning class row through the attention
    /// weights.
    pub class_row: Option<(usize, Vec<T>)>,
}

pub fn aggregator_backward<T: Real>(
    grad_r: &[T],
    repr: &BagRepr<T>,
    sentences: &[Vec<T>],
    classes: &DenseMatrix<T>,
) -> Result<AggregatorGrads<T>, ModelError> {
    let d = check_sentences(sentences)?;
    if grad_r.len() != d || repr.alpha.len() != sentences.len() {
        return Err(ModelError::Dimension {
            what: "bag gradient",
            expected: d,
            actual: grad_r.len(),
        });
    }
    let mut grads: Vec<Vec<T>> = repr
        .alpha
        .iter()
        .map(|&a| grad_r.iter().map(|&g| a * g).collect())
        .collect();
    let Some(c) = repr.relation else {
        return Ok(AggregatorGrads {
            sentences: grads,
            class_row: None,
        });
    };
    if c >= classes.rows() {
        return Err(ModelError::BadRelation(c));
    }
    // d alpha_j = <grad_r, s_j>; d e_j = alpha_j (d alpha_j - sum_i alpha_i d alpha_i)
    let d_alpha: Vec<T> = sentences.iter().map(|s| dot(grad_r, s)).collect();
    let mean = dot(&repr.alpha, &d_alpha);
    let a = T::lit(ATTENTION_SCALE);
    let w = classes.row(c);
    let mut grad_w = vec![T::zero(); d];
    for (j, s) in sentences.iter().enumerate() {
        let de = repr.alpha[j] * (d_alpha[j] - mean);
        axpy(a * de, w, &mut grads[j]);
        axpy(a * de, s, &mut grad_w);
    }
    Ok(AggregatorGrads {
        sentences: grads,
        class_row: Some((c, grad_w)),
    })
}
