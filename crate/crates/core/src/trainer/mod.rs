//! Parameter initialisation, mini-batch SGD, checkpoints and the gradient
//! check harness.

mod checkpoint;
mod gradcheck;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_VERSION,
};
pub use gradcheck::{
    analytic_gradient, grad_check, grad_check_with, GradCheckConfig, GradCheckReport, GradientFn,
    VariantReport, PARAMETER_GROUPS,
};

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{random_embeddings, EncodedBag};
use crate::encoder::{EncoderParams, EncoderShape};
use crate::error::ModelError;
use crate::losses::LossConfig;
use crate::model::{
    bag_gradient, class_regularizer, BagOutcome, DropoutSpec, ModelGrads, RankingModel,
};
use crate::numeric::{mix_seed, DenseMatrix, SeededRng};
use crate::Model;

type BagResult = Result<(BagOutcome<f64>, ModelGrads<f64>), ModelError>;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub p_keep: f64,
    pub loss: LossConfig,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 160,
            learning_rate: 0.03,
            epochs: 1,
            seed: 1,
            p_keep: 0.5,
            loss: LossConfig::default(),
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ModelError::Config(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.p_keep > 0.0 && self.p_keep <= 1.0) {
            return Err(ModelError::Config(format!(
                "p_keep {} outside (0, 1]",
                self.p_keep
            )));
        }
        Ok(())
    }
}

/// Sizes that fix every parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub encoder: EncoderShape,
    pub vocab_size: usize,
    /// Rows of each position table, PAD included.
    pub pos_rows: usize,
    pub relations: usize,
    pub nr: usize,
}

/// Half-width of the Glorot uniform range.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill_glorot(m: &mut DenseMatrix<f64>, fan_in: usize, fan_out: usize, rng: &mut SeededRng) {
    let b = glorot_bound(fan_in, fan_out);
    for x in m.as_mut_slice() {
        *x = rng.uniform_in(-b, b);
    }
}

/// Fresh parameters. Position tables, kernels and class embeddings are
/// Glorot-uniform, the bias is zero, and the word table is `pretrained`
/// when given, otherwise `U[-0.25, 0.25]`. PAD rows (word id 0 and the last
/// position row) are zero.
pub fn init_params(
    dims: ModelDims,
    seed: u64,
    pretrained: Option<DenseMatrix<f64>>,
) -> Result<Model, ModelError> {
    let shape = dims.encoder;
    let mut rng = SeededRng::new(mix_seed(seed, &[STREAM_INIT]));
    let mut enc = EncoderParams::zeros(shape, dims.vocab_size, dims.pos_rows);
    for table in [&mut enc.pos_head, &mut enc.pos_tail] {
        fill_glorot(table, dims.pos_rows, shape.pos_dim, &mut rng);
        if dims.pos_rows > 0 {
            table.row_mut(dims.pos_rows - 1).fill(0.0);
        }
    }
    fill_glorot(
        &mut enc.kernels,
        shape.kernel_len(),
        shape.kernels,
        &mut rng,
    );
    let mut classes = DenseMatrix::zeros(dims.relations, shape.feature_dim());
    fill_glorot(&mut classes, shape.feature_dim(), dims.relations, &mut rng);
    enc.words = match pretrained {
        Some(v) => {
            if v.shape() != (dims.vocab_size, shape.word_dim) {
                return Err(ModelError::Config(format!(
                    "pretrained embeddings are {}x{}, model expects {}x{}",
                    v.rows(),
                    v.cols(),
                    dims.vocab_size,
                    shape.word_dim
                )));
            }
            v
        }
        None => random_embeddings(dims.vocab_size, shape.word_dim, &mut rng),
    };
    let model = RankingModel {
        encoder: enc,
        classes,
        nr: dims.nr,
    };
    model.check_shapes()?;
    Ok(model)
}

/// One epoch's summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    /// `pos_term + neg_term + reg_term`.
    pub mean_loss: f64,
    /// Positive-hinge loss per bag.
    pub pos_term: f64,
    /// Negative-hinge loss per bag.
    pub neg_term: f64,
    /// Regularizer per batch.
    pub reg_term: f64,
    pub wall_seconds: f64,
    /// Best F-measure on the validation split, when one is supplied.
    pub val_f: Option<f64>,
}

/// Runs epoch `epoch` (0-based): shuffles, batches and applies `theta -= lr * (sum of gradients) / B`,
/// where the sum covers every bag of the batch plus the regularizer once.
///
/// Each bag's dropout stream is derived from `(seed, epoch, bag index)` and
/// per-bag gradients are reduced in batch order, so the result does not
/// depend on the number of worker threads.
pub fn train_epoch(
    model: &mut Model,
    bags: &[EncodedBag],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochReport, ModelError> {
    if bags.is_empty() {
        return Err(ModelError::EmptyBag);
    }
    cfg.validate()?;
    let start = Instant::now();
    let mut order: Vec<usize> = (0..bags.len()).collect();
    if cfg.shuffle {
        SeededRng::new(mix_seed(cfg.seed, &[STREAM_SHUFFLE, epoch as u64])).shuffle(&mut order);
    }
    let (mut pos, mut neg, mut reg) = (0.0, 0.0, 0.0);
    let mut batches = 0usize;
    for batch in order.chunks(cfg.batch_size) {
        let frozen: &Model = model;
        let results: Vec<BagResult> = batch
            .par_iter()
            .map(|&i| {
                let dropout = if cfg.p_keep < 1.0 {
                    DropoutSpec::On {
                        seed: mix_seed(cfg.seed, &[STREAM_DROPOUT, epoch as u64, i as u64]),
                        p_keep: cfg.p_keep,
                    }
                } else {
                    DropoutSpec::Off
                };
                bag_gradient(frozen, &bags[i], &cfg.loss, dropout)
            })
            .collect();
        let mut acc = ModelGrads::zeros_like(model);
        for (&i, res) in batch.iter().zip(results) {
            let (out, g) = res?;
            if !out.loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { bag: i });
            }
            pos += out.pos_term;
            neg += out.neg_term;
            acc.accumulate(&g);
        }
        if cfg.loss.regularize {
            let (v, g) = class_regularizer(model, &cfg.loss)?;
            reg += v;
            acc.classes.add_scaled(1.0, &g)?;
        }
        model.apply(&acc, cfg.learning_rate / batch.len() as f64);
        batches += 1;
    }
    if !model.is_finite() {
        return Err(ModelError::NonFiniteParameters { epoch });
    }
    let n = bags.len() as f64;
    let (pos_term, neg_term, reg_term) = (pos / n, neg / n, reg / batches as f64);
    Ok(EpochReport {
        epoch: epoch + 1,
        mean_loss: pos_term + neg_term + reg_term,
        pos_term,
        neg_term,
        reg_term,
        wall_seconds: start.elapsed().as_secs_f64(),
        val_f: None,
    })
}

/// CSV epoch log. Data rows are fully determined by seed, data and config;
/// wall-clock time goes on a following `#` comment line.
pub struct EpochLog<W: Write> {
    out: W,
}

impl<W: Write> EpochLog<W> {
    pub fn new(mut out: W, with_val: bool) -> io::Result<Self> {
        let mut header = String::from("epoch,mean_loss,pos_term,neg_term,reg_term");
        if with_val {
            header.push_str(",val_f");
        }
        writeln!(out, "{header}")?;
        Ok(Self { out })
    }

    pub fn record(&mut self, r: &EpochReport) -> io::Result<()> {
        write!(
            self.out,
            "{},{:.10},{:.10},{:.10},{:.10}",
            r.epoch, r.mean_loss, r.pos_term, r.neg_term, r.reg_term
        )?;
        if let Some(f) = r.val_f {
            write!(self.out, ",{f:.6}")?;
        }
        writeln!(self.out)?;
        writeln!(
            self.out,
            "# epoch={} wall_seconds={:.3}",
            r.epoch, r.wall_seconds
        )?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeatureGrid;
    use crate::losses::{positive_hinge, LossVariant};
    use crate::model::bag_loss_value;

    fn small_dims() -> ModelDims {
        ModelDims {
            encoder: EncoderShape {
                word_dim: 4,
                pos_dim: 2,
                kernels: 5,
                window: 3,
            },
            vocab_size: 12,
            pos_rows: 10,
            relations: 4,
            nr: 0,
        }
    }

    fn toy_bags(count: usize, seed: u64) -> Vec<EncodedBag> {
        let mut rng = SeededRng::new(seed);
        (0..count)
            .map(|i| {
                let sentences = (0..1 + rng.below(3))
                    .map(|_| {
                        let n = 3 + rng.below(4);
                        let p1 = rng.below(n - 1);
                        let p2 = p1 + 1 + rng.below(n - p1 - 1);
                        FeatureGrid {
                            words: (0..n).map(|_| 2 + rng.below(10)).collect(),
                            pos_head: (0..n).map(|t| (t + 4).saturating_sub(p1).min(8)).collect(),
                            pos_tail: (0..n).map(|t| (t + 4).saturating_sub(p2).min(8)).collect(),
                            p1,
                            p2,
                        }
                    })
                    .collect();
                EncodedBag {
                    head: format!("h{i}"),
                    tail: format!("t{i}"),
                    labels: vec![rng.below(4)],
                    sentences,
                }
            })
            .collect()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(small_dims(), 3, None).unwrap();
        let b = init_params(small_dims(), 3, None).unwrap();
        assert_eq!(a, b);
        assert!(a.encoder.bias.iter().all(|&x| x == 0.0));
        assert!(a.encoder.words.row(0).iter().all(|&x| x == 0.0));
        assert!(a.encoder.pos_head.row(9).iter().all(|&x| x == 0.0));
        let df = small_dims().encoder.feature_dim();
        let bound = glorot_bound(df, 4);
        for c in 0..4 {
            let norm = crate::numeric::l2_norm(a.classes.row(c));
            assert!(norm <= (df as f64).sqrt() * bound);
        }
        let wrong = DenseMatrix::zeros(12, 5);
        assert!(init_params(small_dims(), 3, Some(wrong)).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = init_params(small_dims(), 1, None).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let r = train_epoch(&mut m, &toy_bags(10, 2), &cfg, 0).unwrap();
        assert_eq!(m, before);
        assert!(r.mean_loss > 0.0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let bags = toy_bags(20, 5);
        let cfg = TrainConfig {
            batch_size: 6,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = init_params(small_dims(), 9, None).unwrap();
            let losses: Vec<u64> = (0..2)
                .map(|e| {
                    train_epoch(&mut m, &bags, &cfg, e)
                        .unwrap()
                        .mean_loss
                        .to_bits()
                })
                .collect();
            (losses, m)
        };
        let (la, ma) = run();
        let (lb, mb) = run();
        assert_eq!(la, lb);
        assert_eq!(ma, mb);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let bags = toy_bags(16, 8);
        let cfg = TrainConfig {
            batch_size: 8,
            ..TrainConfig::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut m = init_params(small_dims(), 4, None).unwrap();
                train_epoch(&mut m, &bags, &cfg, 0).unwrap();
                m
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn frozen_encoder_pair_loss_decreases_to_floor() {
        // only W moves: apply the class gradient alone
        let bag = toy_bags(1, 11).remove(0);
        let bag = EncodedBag {
            labels: vec![2],
            ..bag
        };
        let mut m = init_params(small_dims(), 2, None).unwrap();
        let cfg = LossConfig::with_variant(LossVariant::Att);
        let floor = 2.0 * std::f64::consts::LN_2;
        let mut prev = f64::INFINITY;
        for _ in 0..400 {
            let (out, g) = bag_gradient(&m, &bag, &cfg, DropoutSpec::Off).unwrap();
            assert!(out.loss <= prev + 1e-12, "{} > {prev}", out.loss);
            prev = out.loss;
            m.classes.add_scaled(-0.05, &g.classes).unwrap();
        }
        assert!(prev - floor < 1e-3, "loss {prev}");
        let s = m.embed_bag(&bag).unwrap();
        let r = crate::aggregator::aggregate_att(&s, 2, &m.classes)
            .unwrap()
            .r;
        let f = crate::losses::score(&r, 2, &m.classes).unwrap();
        assert_eq!(positive_hinge(f, &cfg).slope, 0.0);
    }

    #[test]
    fn small_step_does_not_increase_bag_loss() {
        let bags = toy_bags(20, 21);
        for variant in LossVariant::ALL {
            let cfg = LossConfig::with_variant(variant);
            for (i, bag) in bags.iter().enumerate() {
                let mut m = init_params(small_dims(), 100 + i as u64, None).unwrap();
                let before = bag_loss_value(&m, bag, &cfg).unwrap();
                let (_, g) = bag_gradient(&m, bag, &cfg, DropoutSpec::Off).unwrap();
                m.apply(&g, 1e-5);
                let after = bag_loss_value(&m, bag, &cfg).unwrap();
                assert!(
                    after <= before + 1e-12,
                    "{variant} bag {i}: {before} -> {after}"
                );
            }
        }
    }

    #[test]
    fn epoch_log_rows_are_deterministic() {
        let r = EpochReport {
            epoch: 3,
            mean_loss: 1.5,
            pos_term: 1.0,
            neg_term: 0.5,
            reg_term: 0.0,
            wall_seconds: 12.345,
            val_f: Some(0.5),
        };
        let mut log = EpochLog::new(Vec::new(), true).unwrap();
        log.record(&r).unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,mean_loss,pos_term,neg_term,reg_term,val_f");
        assert_eq!(
            lines[1],
            "3,1.5000000000,1.0000000000,0.5000000000,0.0000000000,0.500000"
        );
        assert!(lines[2].starts_with('#'));
    }
}
