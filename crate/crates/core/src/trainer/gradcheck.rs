//! Central-difference check of the analytic gradients on small random
//! instances, one parameter group at a time.

use std::fmt;
use std::time::Instant;

use crate::corpus::{EncodedBag, FeatureGrid};
use crate::encoder::{EncoderParams, EncoderShape};
use crate::error::ModelError;
use crate::losses::{LossConfig, LossVariant};
use crate::model::{bag_gradient, bag_loss_value, class_regularizer, DropoutSpec, RankingModel};
use crate::numeric::{finite_diff_grad, relative_error, DenseMatrix, SeededRng};
use crate::{Model, ModelGrads};

pub const PARAMETER_GROUPS: [&str; 6] = [
    "words", "pos_head", "pos_tail", "kernels", "bias", "classes",
];

const VOCAB: usize = 8;
const CLIP: usize = 3;
const POS_ROWS: usize = 2 * CLIP + 2;

/// Loss value and gradient of one bag, regularizer included when enabled.
pub type GradientFn = fn(&Model, &EncodedBag, &LossConfig) -> Result<(f64, ModelGrads), ModelError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Accepted instances per (variant, regularizer) setting.
    pub trials: usize,
    pub seed: u64,
    pub h: f64,
    pub tolerance: f64,
    /// Instances closer than this to a kink are redrawn.
    pub kink_margin: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            seed: 17,
            h: 1e-4,
            tolerance: 1e-4,
            kink_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub variant: LossVariant,
    pub regularize: bool,
    pub trials: usize,
    pub rejected: usize,
    pub max_error: f64,
    /// Group holding `max_error`.
    pub worst_group: &'static str,
    pub passed: bool,
}

impl fmt::Display for VariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<8} reg={:<3} trials={} rejected={} max_rel_err={:.3e} ({}) {}",
            self.variant.to_string(),
            if self.regularize { "on" } else { "off" },
            self.trials,
            self.rejected,
            self.max_error,
            self.worst_group,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub variants: Vec<VariantReport>,
    pub seconds: f64,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.variants.iter().all(|v| v.passed)
    }

    /// Groups that exceeded the tolerance anywhere.
    pub fn failing_groups(&self) -> Vec<&'static str> {
        let mut groups: Vec<&'static str> = self
            .variants
            .iter()
            .filter(|v| !v.passed)
            .map(|v| v.worst_group)
            .collect();
        groups.sort_unstable();
        groups.dedup();
        groups
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.variants {
            writeln!(f, "{v}")?;
        }
        write!(f, "{:.2}s", self.seconds)
    }
}

/// The gradient the trainer uses, evaluated without dropout.
pub fn analytic_gradient(
    model: &Model,
    bag: &EncodedBag,
    cfg: &LossConfig,
) -> Result<(f64, ModelGrads), ModelError> {
    let (out, mut grads) = bag_gradient(model, bag, cfg, DropoutSpec::Off)?;
    let mut loss = out.loss;
    if cfg.regularize {
        let (v, g) = class_regularizer(model, cfg)?;
        loss += v;
        grads.classes.add_scaled(1.0, &g)?;
    }
    Ok((loss, grads))
}

fn objective(model: &Model, bag: &EncodedBag, cfg: &LossConfig) -> f64 {
    let mut v = bag_loss_value(model, bag, cfg).unwrap_or(f64::NAN);
    if cfg.regularize {
        v += class_regularizer(model, cfg)
            .map(|(r, _)| r)
            .unwrap_or(f64::NAN);
    }
    v
}

fn group_mut<'a>(m: &'a mut Model, group: &str) -> &'a mut [f64] {
    match group {
        "words" => m.encoder.words.as_mut_slice(),
        "pos_head" => m.encoder.pos_head.as_mut_slice(),
        "pos_tail" => m.encoder.pos_tail.as_mut_slice(),
        "kernels" => m.encoder.kernels.as_mut_slice(),
        "bias" => &mut m.encoder.bias,
        "classes" => m.classes.as_mut_slice(),
        other => unreachable!("unknown group {other}"),
    }
}

fn group_grad(g: &ModelGrads, model: &Model, group: &str) -> Vec<f64> {
    match group {
        "words" => g
            .encoder
            .words_dense(model.encoder.words.rows(), model.encoder.words.cols())
            .into_vec(),
        "pos_head" => g.encoder.pos_head.as_slice().to_vec(),
        "pos_tail" => g.encoder.pos_tail.as_slice().to_vec(),
        "kernels" => g.encoder.kernels.as_slice().to_vec(),
        "bias" => g.encoder.bias.clone(),
        "classes" => g.classes.as_slice().to_vec(),
        other => unreachable!("unknown group {other}"),
    }
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut SeededRng) -> DenseMatrix<f64> {
    let data = (0..rows * cols)
        .map(|_| rng.uniform_in(-scale, scale))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("sized")
}

fn random_grid(rng: &mut SeededRng) -> FeatureGrid {
    let n = 2 + rng.below(6);
    let p1 = rng.below(n - 1);
    let p2 = p1 + 1 + rng.below(n - p1 - 1);
    let pos = |t: usize, e: usize| {
        ((t as i64 - e as i64).clamp(-(CLIP as i64), CLIP as i64) + CLIP as i64) as usize
    };
    FeatureGrid {
        words: (0..n).map(|_| rng.below(VOCAB)).collect(),
        pos_head: (0..n).map(|t| pos(t, p1)).collect(),
        pos_tail: (0..n).map(|t| pos(t, p2)).collect(),
        p1,
        p2,
    }
}

/// A model with at most 6 relations (NR = 0) and a bag of at most 3
/// sentences of at most 7 tokens.
pub fn random_instance(rng: &mut SeededRng) -> (Model, EncodedBag) {
    let shape = EncoderShape {
        word_dim: 3,
        pos_dim: 2,
        kernels: 3,
        window: if rng.bernoulli(0.5) { 3 } else { 2 },
    };
    let relations = 3 + rng.below(4);
    let encoder = EncoderParams {
        shape,
        words: random_matrix(VOCAB, shape.word_dim, 1.0, rng),
        pos_head: random_matrix(POS_ROWS, shape.pos_dim, 1.0, rng),
        pos_tail: random_matrix(POS_ROWS, shape.pos_dim, 1.0, rng),
        kernels: random_matrix(shape.kernels, shape.kernel_len(), 0.6, rng),
        bias: (0..shape.kernels)
            .map(|_| rng.uniform_in(-0.3, 0.3))
            .collect(),
    };
    let classes = random_matrix(relations, shape.feature_dim(), 1.5, rng);
    let labels = if rng.bernoulli(0.25) {
        vec![0]
    } else {
        let mut ids: Vec<usize> = (1..relations).collect();
        rng.shuffle(&mut ids);
        let mut l: Vec<usize> = ids[..1 + rng.below(2)].to_vec();
        l.sort_unstable();
        l
    };
    let bag = EncodedBag {
        head: "h".into(),
        tail: "t".into(),
        labels,
        sentences: (0..1 + rng.below(3)).map(|_| random_grid(rng)).collect(),
    };
    (
        RankingModel {
            encoder,
            classes,
            nr: 0,
        },
        bag,
    )
}

pub fn grad_check(cfg: &GradCheckConfig) -> GradCheckReport {
    grad_check_with(cfg, analytic_gradient)
}

/// Runs every loss variant with the regularizer on and off against the
/// supplied gradient.
pub fn grad_check_with(cfg: &GradCheckConfig, gradient: GradientFn) -> GradCheckReport {
    let start = Instant::now();
    let mut variants = Vec::new();
    let mut setting = 0u64;
    for variant in LossVariant::ALL {
        for regularize in [false, true] {
            let mut rng = SeededRng::new(crate::numeric::mix_seed(cfg.seed, &[setting]));
            setting += 1;
            let mut report = VariantReport {
                variant,
                regularize,
                trials: 0,
                rejected: 0,
                max_error: 0.0,
                worst_group: PARAMETER_GROUPS[0],
                passed: true,
            };
            while report.trials < cfg.trials {
                let (mut model, bag) = random_instance(&mut rng);
                let loss_cfg = LossConfig {
                    variant,
                    regularize,
                    lambda: [0.0, 0.5, 1.0][report.trials % 3],
                    // large enough that the regularizer moves the class gradient
                    epsilon: 0.05,
                    eta: 0.1,
                    ..LossConfig::default()
                };
                match bag_gradient(&model, &bag, &loss_cfg, DropoutSpec::Off) {
                    Ok((out, _)) if out.kink_margin >= cfg.kink_margin => {}
                    _ => {
                        report.rejected += 1;
                        continue;
                    }
                }
                let grads = match gradient(&model, &bag, &loss_cfg) {
                    Ok((_, g)) => g,
                    Err(e) => {
                        log::error!("analytic gradient failed: {e}");
                        report.max_error = f64::INFINITY;
                        report.passed = false;
                        report.trials += 1;
                        continue;
                    }
                };
                for group in PARAMETER_GROUPS {
                    let analytic = group_grad(&grads, &model, group);
                    let theta = group_mut(&mut model, group).to_vec();
                    let mut probe = model.clone();
                    let numeric = finite_diff_grad(
                        |t: &[f64]| {
                            group_mut(&mut probe, group).copy_from_slice(t);
                            objective(&probe, &bag, &loss_cfg)
                        },
                        &theta,
                        cfg.h,
                    );
                    let err = match numeric {
                        Ok(n) => relative_error(&analytic, &n),
                        Err(_) => f64::INFINITY,
                    };
                    if err > report.max_error || err.is_nan() {
                        report.max_error = if err.is_nan() { f64::INFINITY } else { err };
                        report.worst_group = group;
                    }
                }
                report.trials += 1;
            }
            report.passed = report.passed && report.max_error < cfg.tolerance;
            variants.push(report);
        }
    }
    GradCheckReport {
        variants,
        seconds: start.elapsed().as_secs_f64(),
    }
}
