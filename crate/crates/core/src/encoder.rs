//! Piecewise convolutional sentence encoder.
//!
//! A sentence of `n` tokens becomes `q` (`n x d_w`, word vector followed by
//! the head- and tail-distance vectors), each kernel slides a window of
//! `window` rows forward from every position with rows past the end read as
//! zero, the resulting `d_s x n` map is max-pooled separately over the three
//! token ranges `[0, p1]`, `(p1, p2]`, `(p2, n)`, and the pooled vector goes
//! through `tanh` and inverted dropout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::FeatureGrid;
use crate::error::ModelError;
use crate::numeric::{
    axpy, bernoulli_mask, dot, tanh_eval, tanh_grad, DenseMatrix, Real, SeededRng,
};

/// Pooling pieces per kernel.
pub const PIECES: usize = 3;

/// Pooled vector, winning column per piece, smallest winner/runner-up gap.
pub type Pooled<T> = (Vec<T>, Vec<Option<usize>>, f64);
/// Sentence embedding, tanh output, dropout mask.
pub type Finished<T> = (Vec<T>, Vec<T>, Vec<T>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub kernels: usize,
    pub window: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self {
            word_dim: 50,
            pos_dim: 5,
            kernels: 230,
            window: 3,
        }
    }
}

impl EncoderShape {
    /// Width of one token row of `q`.
    pub fn token_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    /// Length of a sentence embedding.
    pub fn feature_dim(&self) -> usize {
        self.kernels * PIECES
    }

    /// Flattened kernel length, `window * token_dim`.
    pub fn kernel_len(&self) -> usize {
        self.window * self.token_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T> {
    pub shape: EncoderShape,
    pub words: DenseMatrix<T>,
    pub pos_head: DenseMatrix<T>,
    pub pos_tail: DenseMatrix<T>,
    /// One row per kernel; entry `w * token_dim + c` weighs column `c` of
    /// the `w`-th row in the window.
    pub kernels: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> EncoderParams<T> {
    pub fn zeros(shape: EncoderShape, vocab_len: usize, pos_rows: usize) -> Self {
        Self {
            shape,
            words: DenseMatrix::zeros(vocab_len, shape.word_dim),
            pos_head: DenseMatrix::zeros(pos_rows, shape.pos_dim),
            pos_tail: DenseMatrix::zeros(pos_rows, shape.pos_dim),
            kernels: DenseMatrix::zeros(shape.kernels, shape.kernel_len()),
            bias: vec![T::zero(); shape.kernels],
        }
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let s = self.shape;
        let checks = [
            ("word embedding width", s.word_dim, self.words.cols()),
            ("head position width", s.pos_dim, self.pos_head.cols()),
            ("tail position width", s.pos_dim, self.pos_tail.cols()),
            (
                "tail position rows",
                self.pos_head.rows(),
                self.pos_tail.rows(),
            ),
            ("kernel count", s.kernels, self.kernels.rows()),
            ("kernel length", s.kernel_len(), self.kernels.cols()),
            ("bias length", s.kernels, self.bias.len()),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(ModelError::Dimension {
                    what,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Dropout mode for a forward pass.
pub enum Dropout<'a> {
    Eval,
    Train { rng: &'a mut SeededRng, p_keep: f64 },
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SentenceCache<T> {
    pub words: Vec<usize>,
    pub pos_head: Vec<usize>,
    pub pos_tail: Vec<usize>,
    pub q: DenseMatrix<T>,
    /// Winning column per `(kernel, piece)`; `None` for an empty piece.
    pub argmax: Vec<Option<usize>>,
    /// `tanh` of the pooled vector.
    pub activation: Vec<T>,
    /// Dropout multipliers, already divided by `p_keep`.
    pub mask: Vec<T>,
    /// Smallest gap between the winner and runner-up of any piece.
    pub pool_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SentenceEmbedding<T> {
    pub s: Vec<T>,
    pub cache: SentenceCache<T>,
}

pub fn embed_tokens<T: Real>(
    grid: &FeatureGrid,
    params: &EncoderParams<T>,
) -> Result<DenseMatrix<T>, ModelError> {
    let shape = params.shape;
    let n = grid.len();
    if grid.pos_head.len() != n || grid.pos_tail.len() != n {
        return Err(ModelError::Dimension {
            what: "position ids",
            expected: n,
            actual: grid.pos_head.len().min(grid.pos_tail.len()),
        });
    }
    let lookup = |table: &'static str, m: &DenseMatrix<T>, id: usize| {
        if id < m.rows() {
            Ok(())
        } else {
            Err(ModelError::IndexOutOfBounds {
                what: table,
                index: id,
                len: m.rows(),
            })
        }
    };
    let mut q = DenseMatrix::zeros(n, shape.token_dim());
    for i in 0..n {
        let (w, ph, pt) = (grid.words[i], grid.pos_head[i], grid.pos_tail[i]);
        lookup("word", &params.words, w)?;
        lookup("head position", &params.pos_head, ph)?;
        lookup("tail position", &params.pos_tail, pt)?;
        let row = q.row_mut(i);
        let (wd, pd) = (shape.word_dim, shape.pos_dim);
        row[..wd].copy_from_slice(params.words.row(w));
        row[wd..wd + pd].copy_from_slice(params.pos_head.row(ph));
        row[wd + pd..].copy_from_slice(params.pos_tail.row(pt));
    }
    Ok(q)
}

/// Same-length convolution: `m[k][i] = <q[i..i+window], K_k> + b[k]`.
pub fn convolve<T: Real>(q: &DenseMatrix<T>, params: &EncoderParams<T>) -> DenseMatrix<T> {
    let n = q.rows();
    let dw = q.cols();
    let window = params.shape.window;
    let mut m = DenseMatrix::zeros(params.shape.kernels, n);
    let qd = q.as_slice();
    for k in 0..params.shape.kernels {
        let kernel = params.kernels.row(k);
        let b = params.bias[k];
        for i in 0..n {
            // rows past the end are zero, so only the real rows contribute
            let len = window.min(n - i) * dw;
            let v = dot(&qd[i * dw..i * dw + len], &kernel[..len]) + b;
            m.set(k, i, v);
        }
    }
    m
}

/// Max over the three pieces of every kernel row.
///
/// Returns the pooled vector (`kernel * 3 + piece` layout), the winning
/// column of each piece, and the smallest winner/runner-up gap. Ties go to
/// the lowest column; an empty piece pools to zero.
pub fn piecewise_maxpool<T: Real>(
    m: &DenseMatrix<T>,
    p1: usize,
    p2: usize,
) -> Result<Pooled<T>, ModelError> {
    let n = m.cols();
    if p1 > p2 || p2 >= n {
        return Err(ModelError::IndexOutOfBounds {
            what: "entity position",
            index: p2.max(p1),
            len: n,
        });
    }
    let pieces = [(0, p1 + 1), (p1 + 1, p2 + 1), (p2 + 1, n)];
    let mut z = Vec::with_capacity(m.rows() * PIECES);
    let mut argmax = Vec::with_capacity(m.rows() * PIECES);
    let mut gap = f64::INFINITY;
    for k in 0..m.rows() {
        let row = m.row(k);
        for &(lo, hi) in &pieces {
            if lo >= hi {
                z.push(T::zero());
                argmax.push(None);
                continue;
            }
            let mut best = lo;
            let mut second = T::neg_infinity();
            for i in lo + 1..hi {
                if row[i] > row[best] {
                    second = row[best];
                    best = i;
                } else if row[i] > second {
                    second = row[i];
                }
            }
            if hi - lo > 1 {
                gap = gap.min((row[best] - second).to_f64_lossy());
            }
            z.push(row[best]);
            argmax.push(Some(best));
        }
    }
    Ok((z, argmax, gap))
}

/// `tanh` followed by inverted dropout. Returns `(s, tanh output, mask)`.
pub fn finish<T: Real>(z_all: &[T], dropout: Dropout<'_>) -> Result<Finished<T>, ModelError> {
    let y: Vec<T> = z_all.iter().map(|&z| tanh_eval(z)).collect();
    let mask = match dropout {
        Dropout::Eval => vec![T::one(); y.len()],
        Dropout::Train { rng, p_keep } => {
            let scale = T::lit(1.0 / p_keep);
            bernoulli_mask::<T>(rng, y.len(), p_keep)?
                .into_iter()
                .map(|h| h * scale)
                .collect()
        }
    };
    let s = y.iter().zip(&mask).map(|(&a, &h)| a * h).collect();
    Ok((s, y, mask))
}

/// Full forward pass for one sentence.
pub fn encode<T: Real>(
    grid: &FeatureGrid,
    params: &EncoderParams<T>,
    dropout: Dropout<'_>,
) -> Result<SentenceEmbedding<T>, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::Dimension {
            what: "sentence length",
            expected: 1,
            actual: 0,
        });
    }
    let q = embed_tokens(grid, params)?;
    let m = convolve(&q, params);
    let (z, argmax, pool_gap) = piecewise_maxpool(&m, grid.p1, grid.p2)?;
    let (s, activation, mask) = finish(&z, dropout)?;
    Ok(SentenceEmbedding {
        s,
        cache: SentenceCache {
            words: grid.words.clone(),
            pos_head: grid.pos_head.clone(),
            pos_tail: grid.pos_tail.clone(),
            q,
            argmax,
            activation,
            mask,
            pool_gap,
        },
    })
}

/// Gradients of the encoder parameters. Word rows are stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads<T> {
    pub words: BTreeMap<usize, Vec<T>>,
    pub pos_head: DenseMatrix<T>,
    pub pos_tail: DenseMatrix<T>,
    pub kernels: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> EncoderGrads<T> {
    pub fn zeros_like(params: &EncoderParams<T>) -> Self {
        Self {
            words: BTreeMap::new(),
            pos_head: DenseMatrix::zeros(params.pos_head.rows(), params.pos_head.cols()),
            pos_tail: DenseMatrix::zeros(params.pos_tail.rows(), params.pos_tail.cols()),
            kernels: DenseMatrix::zeros(params.kernels.rows(), params.kernels.cols()),
            bias: vec![T::zero(); params.bias.len()],
        }
    }

    /// `self += other`
    pub fn accumulate(&mut self, other: &Self) {
        for (&id, row) in &other.words {
            let dst = self
                .words
                .entry(id)
                .or_insert_with(|| vec![T::zero(); row.len()]);
            axpy(T::one(), row, dst);
        }
        axpy(
            T::one(),
            other.pos_head.as_slice(),
            self.pos_head.as_mut_slice(),
        );
        axpy(
            T::one(),
            other.pos_tail.as_slice(),
            self.pos_tail.as_mut_slice(),
        );
        axpy(
            T::one(),
            other.kernels.as_slice(),
            self.kernels.as_mut_slice(),
        );
        axpy(T::one(), &other.bias, &mut self.bias);
    }

    /// Dense view of the word gradient, shaped like the word table.
    pub fn words_dense(&self, rows: usize, cols: usize) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(rows, cols);
        for (&id, row) in &self.words {
            m.row_mut(id).copy_from_slice(row);
        }
        m
    }
}

/// Accumulates the gradient of one sentence into `grads`.
pub fn encoder_backward<T: Real>(
    grad_s: &[T],
    cache: &SentenceCache<T>,
    params: &EncoderParams<T>,
    grads: &mut EncoderGrads<T>,
) -> Result<(), ModelError> {
    let shape = params.shape;
    let df = shape.feature_dim();
    for (what, actual) in [
        ("sentence gradient", grad_s.len()),
        ("cached activation", cache.activation.len()),
        ("cached mask", cache.mask.len()),
        ("cached argmax", cache.argmax.len()),
    ] {
        if actual != df {
            return Err(ModelError::Dimension {
                what,
                expected: df,
                actual,
            });
        }
    }
    let n = cache.q.rows();
    let dw = shape.token_dim();
    let qd = cache.q.as_slice();
    let mut grad_q = vec![T::zero(); n * dw];
    for (idx, winner) in cache.argmax.iter().enumerate() {
        let Some(i) = *winner else { continue };
        let g = grad_s[idx] * cache.mask[idx] * tanh_grad(cache.activation[idx]);
        if g == T::zero() {
            continue;
        }
        let k = idx / PIECES;
        let len = shape.window.min(n - i) * dw;
        grads.bias[k] = grads.bias[k] + g;
        axpy(
            g,
            &qd[i * dw..i * dw + len],
            &mut grads.kernels.row_mut(k)[..len],
        );
        axpy(
            g,
            &params.kernels.row(k)[..len],
            &mut grad_q[i * dw..i * dw + len],
        );
    }
    let (wd, pd) = (shape.word_dim, shape.pos_dim);
    for i in 0..n {
        let row = &grad_q[i * dw..(i + 1) * dw];
        if row.iter().all(|&x| x == T::zero()) {
            continue;
        }
        let w = grads
            .words
            .entry(cache.words[i])
            .or_insert_with(|| vec![T::zero(); wd]);
        axpy(T::one(), &row[..wd], w);
        axpy(
            T::one(),
            &row[wd..wd + pd],
            grads.pos_head.row_mut(cache.pos_head[i]),
        );
        axpy(
            T::one(),
            &row[wd + pd..],
            grads.pos_tail.row_mut(cache.pos_tail[i]),
        );
    }
    Ok(())
}
