//! The full model: encoder parameters plus class embeddings, with the
//! per-bag forward/backward pass used by training and gradient checks.

use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregate_att, aggregate_ave};
use crate::corpus::EncodedBag;
use crate::encoder::{
    encode, encoder_backward, Dropout, EncoderGrads, EncoderParams, SentenceCache,
};
use crate::error::ModelError;
use crate::losses::{bag_loss, regularizer, score, LossConfig, LossVariant};
use crate::numeric::{axpy, DenseMatrix, Real, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingModel<T> {
    pub encoder: EncoderParams<T>,
    /// One row per relation, NR included.
    pub classes: DenseMatrix<T>,
    pub nr: usize,
}

impl<T: Real> RankingModel<T> {
    pub fn num_relations(&self) -> usize {
        self.classes.rows()
    }

    pub fn check_shapes(&self) -> Result<(), ModelError> {
        self.encoder.check_shapes()?;
        let df = self.encoder.shape.feature_dim();
        if self.classes.cols() != df {
            return Err(ModelError::Dimension {
                what: "class embedding width",
                expected: df,
                actual: self.classes.cols(),
            });
        }
        if self.nr >= self.classes.rows() {
            return Err(ModelError::BadRelation(self.nr));
        }
        Ok(())
    }

    /// Sentence embeddings of a bag without dropout.
    pub fn embed_bag(&self, bag: &EncodedBag) -> Result<Vec<Vec<T>>, ModelError> {
        bag.sentences
            .iter()
            .map(|g| encode(g, &self.encoder, Dropout::Eval).map(|e| e.s))
            .collect()
    }

    /// `F(r, c)` for every non-NR relation `c`, ascending by id. The bag is
    /// averaged for [`LossVariant::Ave`]; otherwise it is re-attended per
    /// candidate relation.
    pub fn score_relations(
        &self,
        bag: &EncodedBag,
        variant: LossVariant,
    ) -> Result<Vec<(usize, T)>, ModelError> {
        let sentences = self.embed_bag(bag)?;
        let ave = if variant.uses_attention() {
            None
        } else {
            Some(aggregate_ave(&sentences)?)
        };
        (0..self.num_relations())
            .filter(|&c| c != self.nr)
            .map(|c| {
                let r = match &ave {
                    Some(rep) => rep.r.clone(),
                    None => aggregate_att(&sentences, c, &self.classes)?.r,
                };
                Ok((c, score(&r, c, &self.classes)?))
            })
            .collect()
    }

    /// Applies `self -= step * grads`.
    pub fn apply(&mut self, grads: &ModelGrads<T>, step: T) {
        let enc = &mut self.encoder;
        for (&id, row) in &grads.encoder.words {
            axpy(-step, row, enc.words.row_mut(id));
        }
        axpy(
            -step,
            grads.encoder.pos_head.as_slice(),
            enc.pos_head.as_mut_slice(),
        );
        axpy(
            -step,
            grads.encoder.pos_tail.as_slice(),
            enc.pos_tail.as_mut_slice(),
        );
        axpy(
            -step,
            grads.encoder.kernels.as_slice(),
            enc.kernels.as_mut_slice(),
        );
        axpy(-step, &grads.encoder.bias, &mut enc.bias);
        axpy(-step, grads.classes.as_slice(), self.classes.as_mut_slice());
    }

    pub fn is_finite(&self) -> bool {
        let e = &self.encoder;
        e.words.is_finite()
            && e.pos_head.is_finite()
            && e.pos_tail.is_finite()
            && e.kernels.is_finite()
            && e.bias.iter().all(|x| x.is_finite())
            && self.classes.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub encoder: EncoderGrads<T>,
    pub classes: DenseMatrix<T>,
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(model: &RankingModel<T>) -> Self {
        Self {
            encoder: EncoderGrads::zeros_like(&model.encoder),
            classes: DenseMatrix::zeros(model.classes.rows(), model.classes.cols()),
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        self.encoder.accumulate(&other.encoder);
        axpy(
            T::one(),
            other.classes.as_slice(),
            self.classes.as_mut_slice(),
        );
    }
}

/// Per-bag loss with its term breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BagOutcome<T> {
    pub loss: T,
    pub pos_term: T,
    pub neg_term: T,
    /// Distance to the nearest kink of the piecewise-smooth objective.
    pub kink_margin: f64,
}

/// How a forward pass applies dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutSpec {
    Off,
    /// Mask stream seeded by `seed`.
    On {
        seed: u64,
        p_keep: f64,
    },
}

/// Loss of one bag and its gradient on every parameter.
pub fn bag_gradient<T: Real>(
    model: &RankingModel<T>,
    bag: &EncodedBag,
    cfg: &LossConfig,
    dropout: DropoutSpec,
) -> Result<(BagOutcome<T>, ModelGrads<T>), ModelError> {
    if bag.sentences.is_empty() {
        return Err(ModelError::EmptyBag);
    }
    let mut rng = match dropout {
        DropoutSpec::On { seed, .. } => Some(SeededRng::new(seed)),
        DropoutSpec::Off => None,
    };
    let mut sentences = Vec::with_capacity(bag.sentences.len());
    let mut caches: Vec<SentenceCache<T>> = Vec::with_capacity(bag.sentences.len());
    let mut pool_gap = f64::INFINITY;
    for grid in &bag.sentences {
        let mode = match (&mut rng, dropout) {
            (Some(rng), DropoutSpec::On { p_keep, .. }) => Dropout::Train { rng, p_keep },
            _ => Dropout::Eval,
        };
        let e = encode(grid, &model.encoder, mode)?;
        pool_gap = pool_gap.min(e.cache.pool_gap);
        sentences.push(e.s);
        caches.push(e.cache);
    }
    let loss = bag_loss(&sentences, &bag.labels, &model.classes, model.nr, cfg)?;
    let mut grads = ModelGrads {
        encoder: EncoderGrads::zeros_like(&model.encoder),
        classes: loss.grad_classes,
    };
    for (g, cache) in loss.grad_sentences.iter().zip(&caches) {
        encoder_backward(g, cache, &model.encoder, &mut grads.encoder)?;
    }
    Ok((
        BagOutcome {
            loss: loss.loss,
            pos_term: loss.pos_term,
            neg_term: loss.neg_term,
            kink_margin: loss.kink_margin.min(pool_gap),
        },
        grads,
    ))
}

/// Loss of one bag without dropout (no gradient).
pub fn bag_loss_value<T: Real>(
    model: &RankingModel<T>,
    bag: &EncodedBag,
    cfg: &LossConfig,
) -> Result<T, ModelError> {
    let sentences = model.embed_bag(bag)?;
    Ok(bag_loss(&sentences, &bag.labels, &model.classes, model.nr, cfg)?.loss)
}

/// The class-tie regularizer on this model's class embeddings.
pub fn class_regularizer<T: Real>(
    model: &RankingModel<T>,
    cfg: &LossConfig,
) -> Result<(T, DenseMatrix<T>), ModelError> {
    regularizer(&model.classes, model.nr, cfg)
}
