//! Scoring, the three ranking losses, negative-class selection and the
//! class-tie regularizer, each with an exact backward pass.
//!
//! Every loss is a weighted sum of two kinds of softplus hinge:
//!
//! * positive: `ln(1 + exp(rho * max(0, sigma_pos - F(r, c))))`
//! * negative: `ln(1 + exp(rho * max(0, sigma_neg + F(r, c))))`
//!
//! where `F(r, c) = <W[c], r>`. The variants differ in which bag
//! representation `r` each hinge sees and which classes and weights enter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregate_att, aggregate_ave, aggregator_backward, BagRepr};
use crate::error::ModelError;
use crate::numeric::{axpy, dot, l2_norm, sigmoid, softplus_stable, DenseMatrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Averaged bag, one shared negative weighted by `|L_k|`.
    Ave,
    /// Attention bag per positive class, one negative each.
    Att,
    /// Attention with NR down-weighting and auxiliary positive/NR terms.
    CostAtt,
}

impl LossVariant {
    pub const ALL: [LossVariant; 3] = [LossVariant::Ave, LossVariant::Att, LossVariant::CostAtt];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossVariant::Ave => "ave",
            LossVariant::Att => "att",
            LossVariant::CostAtt => "cost_att",
        }
    }

    pub fn uses_attention(&self) -> bool {
        !matches!(self, LossVariant::Ave)
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ave" => Ok(LossVariant::Ave),
            "att" => Ok(LossVariant::Att),
            "cost_att" | "cost-att" => Ok(LossVariant::CostAtt),
            other => Err(format!(
                "unknown loss variant {other:?} (ave, att, cost_att)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub rho: f64,
    pub sigma_pos: f64,
    pub sigma_neg: f64,
    /// Weight of the positive term when that positive is NR.
    pub lambda: f64,
    /// Weight of the auxiliary positive and NR terms.
    pub gamma: f64,
    /// Weight on the norm of the mean non-NR class embedding.
    pub epsilon: f64,
    /// Weight on the mean norm of the non-NR class embeddings.
    pub eta: f64,
    pub regularize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::CostAtt,
            rho: 2.0,
            sigma_pos: 2.5,
            sigma_neg: 0.5,
            lambda: 0.0,
            gamma: 1.0,
            epsilon: 1e-6,
            eta: 1e-3,
            regularize: true,
        }
    }
}

impl LossConfig {
    pub fn with_variant(variant: LossVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [
            ("rho", self.rho),
            ("sigma_pos", self.sigma_pos),
            ("sigma_neg", self.sigma_neg),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("eta", self.eta),
        ];
        for (name, v) in finite {
            if !v.is_finite() || v < 0.0 && name != "sigma_neg" && name != "sigma_pos" {
                return Err(ModelError::Config(format!("{name} = {v}")));
            }
        }
        if self.rho <= 0.0 {
            return Err(ModelError::Config(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// `F(r, c) = <W[c], r>`
pub fn score<T: Real>(r: &[T], c: usize, classes: &DenseMatrix<T>) -> Result<T, ModelError> {
    if c >= classes.rows() {
        return Err(ModelError::BadRelation(c));
    }
    if r.len() != classes.cols() {
        return Err(ModelError::Dimension {
            what: "bag representation",
            expected: classes.cols(),
            actual: r.len(),
        });
    }
    Ok(dot(classes.row(c), r))
}

/// Scores of every class.
pub fn score_all<T: Real>(r: &[T], classes: &DenseMatrix<T>) -> Result<Vec<T>, ModelError> {
    Ok(classes.matvec(r)?)
}

/// A softplus hinge evaluated at one score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge<T> {
    pub value: T,
    /// Derivative with respect to the score.
    pub slope: T,
    /// Signed hinge argument; the kink is at zero.
    pub arg: T,
}

pub fn positive_hinge<T: Real>(score: T, cfg: &LossConfig) -> Hinge<T> {
    let arg = T::lit(cfg.sigma_pos) - score;
    hinge(arg, -T::one(), cfg)
}

pub fn negative_hinge<T: Real>(score: T, cfg: &LossConfig) -> Hinge<T> {
    let arg = T::lit(cfg.sigma_neg) + score;
    hinge(arg, T::one(), cfg)
}

fn hinge<T: Real>(arg: T, darg: T, cfg: &LossConfig) -> Hinge<T> {
    let rho = T::lit(cfg.rho);
    // the subgradient at exactly zero is taken from the flat side
    let active = arg > T::zero();
    let x = if active { rho * arg } else { T::zero() };
    Hinge {
        value: softplus_stable(x),
        slope: if active {
            darg * rho * sigmoid(x)
        } else {
            T::zero()
        },
        arg,
    }
}

/// One positive/negative pair term.
pub fn pair_loss<T: Real>(f_pos: T, f_neg: T, cfg: &LossConfig) -> T {
    positive_hinge(f_pos, cfg).value + negative_hinge(f_neg, cfg).value
}

/// Highest-scoring class outside `positives`; ties go to the lowest id.
pub fn select_negative<T: Real>(scores: &[T], positives: &[usize]) -> Result<usize, ModelError> {
    let mut best: Option<usize> = None;
    for (c, &s) in scores.iter().enumerate() {
        if positives.contains(&c) {
            continue;
        }
        match best {
            Some(b) if s <= scores[b] => {}
            _ => best = Some(c),
        }
    }
    best.ok_or(ModelError::NoNegative)
}

/// Gap between the selected negative and the runner-up negative.
fn negative_gap<T: Real>(scores: &[T], positives: &[usize], chosen: usize) -> f64 {
    scores
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != chosen && !positives.contains(c))
        .map(|(_, &s)| (scores[chosen] - s).to_f64_lossy())
        .fold(f64::INFINITY, f64::min)
}

/// Loss value with its gradient on the sentence embeddings and classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BagLoss<T> {
    pub loss: T,
    /// Sum of positive-hinge terms.
    pub pos_term: T,
    /// Sum of negative-hinge terms.
    pub neg_term: T,
    pub grad_sentences: Vec<Vec<T>>,
    pub grad_classes: DenseMatrix<T>,
    /// Distance to the nearest non-differentiable point: the smallest
    /// |hinge argument| over active terms and the smallest score gap that
    /// decided a negative-class choice.
    pub kink_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Pos,
    Neg,
}

/// Accumulates hinge terms that all read the same bag representation.
struct TermSet<'a, T> {
    repr: BagRepr<T>,
    scores: Vec<T>,
    grad_r: Vec<T>,
    classes: &'a DenseMatrix<T>,
    cfg: &'a LossConfig,
}

impl<'a, T: Real> TermSet<'a, T> {
    fn new(
        repr: BagRepr<T>,
        classes: &'a DenseMatrix<T>,
        cfg: &'a LossConfig,
    ) -> Result<Self, ModelError> {
        let scores = score_all(&repr.r, classes)?;
        let grad_r = vec![T::zero(); repr.r.len()];
        Ok(Self {
            repr,
            scores,
            grad_r,
            classes,
            cfg,
        })
    }

    fn add(&mut self, out: &mut BagLoss<T>, class: usize, side: Side, weight: T) {
        if weight == T::zero() {
            return;
        }
        let f = self.scores[class];
        let h = match side {
            Side::Pos => positive_hinge(f, self.cfg),
            Side::Neg => negative_hinge(f, self.cfg),
        };
        let v = weight * h.value;
        out.loss = out.loss + v;
        match side {
            Side::Pos => out.pos_term = out.pos_term + v,
            Side::Neg => out.neg_term = out.neg_term + v,
        }
        out.kink_margin = out.kink_margin.min(h.arg.to_f64_lossy().abs());
        let g = weight * h.slope;
        if g != T::zero() {
            axpy(g, &self.repr.r, out.grad_classes.row_mut(class));
            axpy(g, self.classes.row(class), &mut self.grad_r);
        }
    }

    fn negative(&self, out: &mut BagLoss<T>, labels: &[usize]) -> Result<usize, ModelError> {
        let c = select_negative(&self.scores, labels)?;
        out.kink_margin = out.kink_margin.min(negative_gap(&self.scores, labels, c));
        Ok(c)
    }

    fn backward(self, out: &mut BagLoss<T>, sentences: &[Vec<T>]) -> Result<(), ModelError> {
        let g = aggregator_backward(&self.grad_r, &self.repr, sentences, self.classes)?;
        for (dst, src) in out.grad_sentences.iter_mut().zip(&g.sentences) {
            axpy(T::one(), src, dst);
        }
        if let Some((c, row)) = g.class_row {
            axpy(T::one(), &row, out.grad_classes.row_mut(c));
        }
        Ok(())
    }
}

fn empty_loss<T: Real>(sentences: &[Vec<T>], classes: &DenseMatrix<T>) -> BagLoss<T> {
    BagLoss {
        loss: T::zero(),
        pos_term: T::zero(),
        neg_term: T::zero(),
        grad_sentences: sentences.iter().map(|s| vec![T::zero(); s.len()]).collect(),
        grad_classes: DenseMatrix::zeros(classes.rows(), classes.cols()),
        kink_margin: f64::INFINITY,
    }
}

fn check_labels<T: Real>(labels: &[usize], classes: &DenseMatrix<T>) -> Result<(), ModelError> {
    if labels.is_empty() {
        return Err(ModelError::EmptyLabels);
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= classes.rows()) {
        return Err(ModelError::BadRelation(bad));
    }
    if labels.len() >= classes.rows() {
        return Err(ModelError::NoNegative);
    }
    Ok(())
}

/// Averaged bag: every positive hinge plus the top negative weighted by
/// `|L_k|`.
pub fn loss_ave<T: Real>(
    sentences: &[Vec<T>],
    labels: &[usize],
    classes: &DenseMatrix<T>,
    cfg: &LossConfig,
) -> Result<BagLoss<T>, ModelError> {
    check_labels(labels, classes)?;
    let mut out = empty_loss(sentences, classes);
    let mut terms = TermSet::new(aggregate_ave(sentences)?, classes, cfg)?;
    for &c in labels {
        terms.add(&mut out, c, Side::Pos, T::one());
    }
    let neg = terms.negative(&mut out, labels)?;
    let k = T::from_usize(labels.len()).unwrap();
    terms.add(&mut out, neg, Side::Neg, k);
    terms.backward(&mut out, sentences)?;
    Ok(out)
}

/// Attention bag per positive class with its own top negative.
pub fn loss_att<T: Real>(
    sentences: &[Vec<T>],
    labels: &[usize],
    classes: &DenseMatrix<T>,
    cfg: &LossConfig,
) -> Result<BagLoss<T>, ModelError> {
    check_labels(labels, classes)?;
    let mut out = empty_loss(sentences, classes);
    for &c in labels {
        let mut terms = TermSet::new(aggregate_att(sentences, c, classes)?, classes, cfg)?;
        terms.add(&mut out, c, Side::Pos, T::one());
        let neg = terms.negative(&mut out, labels)?;
        terms.add(&mut out, neg, Side::Neg, T::one());
        terms.backward(&mut out, sentences)?;
    }
    Ok(out)
}

/// Cost-sensitive attention loss. For each label `c*` and its attention
/// representation `r^{c*}`:
///
/// 1. positive hinge on `c*`, weighted by `lambda` when `c*` is NR;
/// 2. negative hinge on the top class outside the label set;
/// 3. `gamma`-weighted positive hinge on every other label;
/// 4. when `c*` is not NR, a `gamma`-weighted negative hinge on NR.
///
/// Contributions are summed over all labels.
pub fn loss_cost_att<T: Real>(
    sentences: &[Vec<T>],
    labels: &[usize],
    classes: &DenseMatrix<T>,
    nr: usize,
    cfg: &LossConfig,
) -> Result<BagLoss<T>, ModelError> {
    check_labels(labels, classes)?;
    if nr >= classes.rows() {
        return Err(ModelError::BadRelation(nr));
    }
    let lambda = T::lit(cfg.lambda);
    let gamma = T::lit(cfg.gamma);
    let mut out = empty_loss(sentences, classes);
    for &star in labels {
        let mut terms = TermSet::new(aggregate_att(sentences, star, classes)?, classes, cfg)?;
        let g = if star == nr { lambda } else { T::one() };
        terms.add(&mut out, star, Side::Pos, g);
        let neg = terms.negative(&mut out, labels)?;
        terms.add(&mut out, neg, Side::Neg, T::one());
        for &other in labels.iter().filter(|&&c| c != star) {
            terms.add(&mut out, other, Side::Pos, gamma);
        }
        if star != nr {
            terms.add(&mut out, nr, Side::Neg, gamma);
        }
        terms.backward(&mut out, sentences)?;
    }
    Ok(out)
}

/// Dispatches on `cfg.variant`.
pub fn bag_loss<T: Real>(
    sentences: &[Vec<T>],
    labels: &[usize],
    classes: &DenseMatrix<T>,
    nr: usize,
    cfg: &LossConfig,
) -> Result<BagLoss<T>, ModelError> {
    match cfg.variant {
        LossVariant::Ave => loss_ave(sentences, labels, classes, cfg),
        LossVariant::Att => loss_att(sentences, labels, classes, cfg),
        LossVariant::CostAtt => loss_cost_att(sentences, labels, classes, nr, cfg),
    }
}

/// `epsilon * ||mean_c W[c]|| + eta * mean_c ||W[c]||` over non-NR rows,
/// with its gradient. The NR row gets zero gradient, as does any zero row.
pub fn regularizer<T: Real>(
    classes: &DenseMatrix<T>,
    nr: usize,
    cfg: &LossConfig,
) -> Result<(T, DenseMatrix<T>), ModelError> {
    if classes.rows() < 2 {
        return Err(ModelError::NoPositiveClasses);
    }
    if nr >= classes.rows() {
        return Err(ModelError::BadRelation(nr));
    }
    let d = classes.cols();
    let count = T::from_usize(classes.rows() - 1).unwrap();
    let (eps, eta) = (T::lit(cfg.epsilon), T::lit(cfg.eta));
    let positives = (0..classes.rows()).filter(|&c| c != nr);

    let mut mean = vec![T::zero(); d];
    let mut norm_sum = T::zero();
    for c in positives.clone() {
        axpy(T::one() / count, classes.row(c), &mut mean);
        norm_sum = norm_sum + l2_norm(classes.row(c));
    }
    let mean_norm = l2_norm(&mean);
    let value = eps * mean_norm + eta * norm_sum / count;

    let mut grad = DenseMatrix::zeros(classes.rows(), d);
    for c in positives {
        let row = grad.row_mut(c);
        if mean_norm > T::zero() {
            axpy(eps / (count * mean_norm), &mean, row);
        }
        let n = l2_norm(classes.row(c));
        if n > T::zero() {
            axpy(eta / (count * n), classes.row(c), row);
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_grad, relative_error, SeededRng};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn cfg(variant: LossVariant) -> LossConfig {
        LossConfig::with_variant(variant)
    }

    /// Independent scalar evaluation of one hinge term.
    fn oracle_pos(f: f64) -> f64 {
        (1.0 + (2.0 * (2.5 - f).max(0.0)).exp()).ln()
    }

    fn oracle_neg(f: f64) -> f64 {
        (1.0 + (2.0 * (0.5 + f).max(0.0)).exp()).ln()
    }

    #[test]
    fn score_cases() {
        let w = DenseMatrix::from_rows(&[vec![1.0f64, -1.0, 2.0], vec![0.0; 3]]).unwrap();
        assert_eq!(score(&[0.5, 0.5, 1.0], 0, &w).unwrap(), 2.0);
        assert_eq!(score(&[0.0; 3], 0, &w).unwrap(), 0.0);
        let ones = DenseMatrix::from_vec(1, 690, vec![1.0f64; 690]).unwrap();
        assert_eq!(score(&[1.0; 690], 0, &ones).unwrap(), 690.0);
        assert!(matches!(
            score(&[0.0; 3], 2, &w),
            Err(ModelError::BadRelation(2))
        ));
    }

    #[test]
    fn pair_loss_cases() {
        let c = cfg(LossVariant::Att);
        assert!((pair_loss(2.5f64, -0.5, &c) - 2.0 * LN_2).abs() < 1e-12);
        assert_eq!(pair_loss(1e6f64, -1e6, &c), 2.0 * LN_2);
        let expected = (1.0 + 5f64.exp()).ln() + (1.0 + 1f64.exp()).ln();
        assert!((pair_loss(0.0f64, 0.0, &c) - expected).abs() < 1e-9);
        assert!((expected - 6.319977).abs() < 1e-6);
    }

    #[test]
    fn select_negative_cases() {
        assert_eq!(select_negative(&[5.0f64, 1.0, 0.0], &[0]).unwrap(), 1);
        assert_eq!(select_negative(&[9.0f64, 2.0, 2.0, 2.0], &[0]).unwrap(), 1);
        assert!(matches!(
            select_negative(&[1.0f64, 2.0], &[0, 1]),
            Err(ModelError::NoNegative)
        ));
        let mut rng = SeededRng::new(77);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..10).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
            let pos: Vec<usize> = (0..10).filter(|_| rng.bernoulli(0.3)).collect();
            if pos.len() == 10 {
                continue;
            }
            let mut best = None;
            for c in 0..10 {
                if !pos.contains(&c) && best.is_none_or(|b: usize| scores[c] > scores[b]) {
                    best = Some(c);
                }
            }
            assert_eq!(select_negative(&scores, &pos).unwrap(), best.unwrap());
        }
    }

    /// Sentences and classes such that every class scores exactly zero.
    fn zero_scores(n: usize, classes: usize) -> (Vec<Vec<f64>>, DenseMatrix<f64>) {
        (vec![vec![0.0; 4]; n], DenseMatrix::zeros(classes, 4))
    }

    #[test]
    fn ave_reference_values() {
        let c = cfg(LossVariant::Ave);
        // margins exactly met: F(c+) = 2.5, every negative = -0.5
        let s = vec![vec![1.0f64, 0.0]];
        let w =
            DenseMatrix::from_rows(&[vec![-0.5, 0.0], vec![2.5, 0.0], vec![-0.5, 0.0]]).unwrap();
        let l = loss_ave(&s, &[1], &w, &c).unwrap();
        assert!((l.loss - 2.0 * LN_2).abs() < 1e-12);

        let (s, w) = zero_scores(2, 4);
        let l = loss_ave(&s, &[1, 2], &w, &c).unwrap();
        let expected = 2.0 * oracle_pos(0.0) + 2.0 * oracle_neg(0.0);
        assert!((l.loss - expected).abs() < 1e-9);
        assert!((expected - 12.639954).abs() < 1e-6);
        assert!(matches!(
            loss_ave(&s, &[], &w, &c),
            Err(ModelError::EmptyLabels)
        ));
    }

    #[test]
    fn att_reference_values() {
        let c = cfg(LossVariant::Att);
        let s = vec![vec![1.0f64, 0.0], vec![1.0, 0.0]];
        let w =
            DenseMatrix::from_rows(&[vec![-0.5, 0.0], vec![2.5, 0.0], vec![-0.5, 0.0]]).unwrap();
        assert!((loss_att(&s, &[1], &w, &c).unwrap().loss - 2.0 * LN_2).abs() < 1e-12);

        // two labels: sum of two independent pair terms on r^{c+}
        let s = vec![vec![0.6f64, -0.2], vec![-0.3, 0.9]];
        let w = DenseMatrix::from_rows(&[
            vec![0.1, 0.2],
            vec![1.5, -0.7],
            vec![-0.4, 1.1],
            vec![0.8, 0.8],
        ])
        .unwrap();
        let l = loss_att(&s, &[1, 2], &w, &c).unwrap();
        let mut expected = 0.0;
        for cp in [1usize, 2] {
            let r = aggregate_att(&s, cp, &w).unwrap().r;
            let f: Vec<f64> = (0..4).map(|k| dot(w.row(k), &r)).collect();
            let neg = if f[0] >= f[3] { 0 } else { 3 };
            expected += oracle_pos(f[cp]) + oracle_neg(f[neg]);
        }
        assert!((l.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn cost_att_reference_values() {
        let mut c = cfg(LossVariant::CostAtt);
        c.lambda = 0.0;
        c.gamma = 1.0;
        let (s, w) = zero_scores(2, 4);
        let l = loss_cost_att(&s, &[1, 2], &w, 0, &c).unwrap();
        let expected = 2.0 * (2.0 * oracle_pos(0.0) + 2.0 * oracle_neg(0.0));
        assert!((l.loss - expected).abs() < 1e-9);
        assert!((expected - 25.279908).abs() < 1e-6);

        // NR-only bag with lambda = 0: only the generic negative term remains
        let l = loss_cost_att(&s, &[0], &w, 0, &c).unwrap();
        assert!((l.loss - oracle_neg(0.0)).abs() < 1e-12);
        assert_eq!(l.pos_term, 0.0);
    }

    #[test]
    fn cost_att_reduces_to_att() {
        let mut rng = SeededRng::new(5);
        for trial in 0..20 {
            let d = 5;
            let s: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                .collect();
            let rows: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..d).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
                .collect();
            let w = DenseMatrix::from_rows(&rows).unwrap();
            let label = 1 + trial % 4;
            let att = loss_att(&s, &[label], &w, &cfg(LossVariant::Att)).unwrap();
            for lambda in [0.0, 1.0] {
                let mut c = cfg(LossVariant::CostAtt);
                c.gamma = 0.0;
                c.lambda = lambda;
                let cost = loss_cost_att(&s, &[label], &w, 0, &c).unwrap();
                assert_eq!(cost.loss.to_bits(), att.loss.to_bits());
                assert_eq!(cost.grad_sentences, att.grad_sentences);
                assert_eq!(cost.grad_classes, att.grad_classes);
            }
            // lambda = 1 also makes an NR singleton match
            let mut c = cfg(LossVariant::CostAtt);
            c.gamma = 0.0;
            c.lambda = 1.0;
            let att_nr = loss_att(&s, &[0], &w, &cfg(LossVariant::Att)).unwrap();
            assert_eq!(
                loss_cost_att(&s, &[0], &w, 0, &c).unwrap().loss.to_bits(),
                att_nr.loss.to_bits()
            );
        }
    }

    #[test]
    fn regularizer_cases() {
        let c = cfg(LossVariant::CostAtt);
        let (v, g) = regularizer(&DenseMatrix::<f64>::zeros(3, 2), 0, &c).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        let mut w = DenseMatrix::<f64>::zeros(3, 2);
        w.row_mut(0).copy_from_slice(&[4.0, -1.0]);
        let (v, g) = regularizer(&w, 0, &c).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));

        // rows 1, 2 = [3, 4], [0, 2]: mean [1.5, 3], norms 5 and 2
        let w = DenseMatrix::from_rows(&[vec![9.0, 9.0], vec![3.0, 4.0], vec![0.0, 2.0]]).unwrap();
        let (v, _) = regularizer(&w, 0, &c).unwrap();
        let expected = 1e-6 * (1.5f64 * 1.5 + 9.0).sqrt() + 1e-3 * (5.0 + 2.0) / 2.0;
        assert!((v - expected).abs() < 1e-15);

        assert!(matches!(
            regularizer(&DenseMatrix::<f64>::zeros(1, 2), 0, &c),
            Err(ModelError::NoPositiveClasses)
        ));
    }

    #[test]
    fn regularizer_gradient_matches_finite_differences() {
        let mut c = cfg(LossVariant::CostAtt);
        c.epsilon = 0.3;
        c.eta = 0.7;
        let mut rng = SeededRng::new(3);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..3).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                .collect();
            let w = DenseMatrix::from_rows(&rows).unwrap();
            let (_, g) = regularizer(&w, 2, &c).unwrap();
            let numeric = finite_diff_grad(
                |t: &[f64]| {
                    regularizer(&DenseMatrix::from_vec(4, 3, t.to_vec()).unwrap(), 2, &c)
                        .unwrap()
                        .0
                },
                w.as_slice(),
                1e-4,
            )
            .unwrap();
            assert!(relative_error(g.as_slice(), &numeric) < 1e-4);
            assert!(g.row(2).iter().all(|&x| x == 0.0));
        }
    }

    /// Analytic vs numeric gradient of a bag loss on sentences and classes.
    fn loss_gradient_error(variant: LossVariant, seed: u64) -> Option<f64> {
        let mut rng = SeededRng::new(seed);
        let (n, d, classes) = (1 + rng.below(3), 4, 5);
        let s: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..d).map(|_| rng.uniform_in(-3.0, 3.0)).collect())
            .collect();
        let w = DenseMatrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = if rng.bernoulli(0.3) {
            vec![0]
        } else {
            let mut l = vec![1 + rng.below(4)];
            if rng.bernoulli(0.5) {
                let extra = 1 + rng.below(4);
                if !l.contains(&extra) {
                    l.push(extra);
                    l.sort_unstable();
                }
            }
            l
        };
        let mut c = cfg(variant);
        c.lambda = 0.5;
        let eval = |s: &[Vec<f64>], w: &DenseMatrix<f64>| bag_loss(s, &labels, w, 0, &c).unwrap();
        let base = eval(&s, &w);
        if base.kink_margin < 1e-3 {
            return None;
        }
        let num_s = finite_diff_grad(
            |t: &[f64]| eval(&t.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>(), &w).loss,
            &s.concat(),
            1e-4,
        )
        .unwrap();
        let num_w = finite_diff_grad(
            |t: &[f64]| eval(&s, &DenseMatrix::from_vec(classes, d, t.to_vec()).unwrap()).loss,
            w.as_slice(),
            1e-4,
        )
        .unwrap();
        Some(
            relative_error(&base.grad_sentences.concat(), &num_s)
                .max(relative_error(base.grad_classes.as_slice(), &num_w)),
        )
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for variant in LossVariant::ALL {
            let mut checked = 0;
            let mut seed = 0;
            while checked < 20 {
                if let Some(err) = loss_gradient_error(variant, seed) {
                    assert!(err < 1e-4, "{variant} seed {seed}: {err}");
                    checked += 1;
                }
                seed += 1;
            }
        }
    }

    proptest! {
        #[test]
        fn pair_terms_have_floor(fp in -50f64..50.0, fn_ in -50f64..50.0) {
            let c = cfg(LossVariant::Att);
            prop_assert!(pair_loss(fp, fn_, &c) >= 2.0 * LN_2 - 1e-15);
        }

        #[test]
        fn monotone_in_scores(fp in -10f64..10.0, fn_ in -10f64..10.0, d in 0f64..3.0) {
            let c = cfg(LossVariant::Att);
            prop_assert!(pair_loss(fp + d, fn_, &c) <= pair_loss(fp, fn_, &c));
            prop_assert!(pair_loss(fp, fn_ + d, &c) >= pair_loss(fp, fn_, &c));
        }

        #[test]
        fn negative_choice_scale_covariant(
            scores in proptest::collection::vec(-5f64..5.0, 2..10),
            t in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = scores.iter().map(|s| s * t).collect();
            prop_assert_eq!(
                select_negative(&scores, &[0]).unwrap(),
                select_negative(&scaled, &[0]).unwrap()
            );
        }

        #[test]
        fn regularizer_permutation_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(-2f64..2.0, 3), 4),
            rot in 0usize..3,
        ) {
            let c = cfg(LossVariant::CostAtt);
            let w = DenseMatrix::from_rows(&rows).unwrap();
            let mut permuted = rows.clone();
            permuted[1..].rotate_left(rot);
            let wp = DenseMatrix::from_rows(&permuted).unwrap();
            let (a, _) = regularizer(&w, 0, &c).unwrap();
            let (b, _) = regularizer(&wp, 0, &c).unwrap();
            prop_assert!((a - b).abs() < 1e-15);
        }

        #[test]
        fn losses_nonnegative(
            s in proptest::collection::vec(proptest::collection::vec(-1f64..1.0, 3), 1..4),
            rows in proptest::collection::vec(proptest::collection::vec(-3f64..3.0, 3), 4),
            label in 0usize..4,
        ) {
            let w = DenseMatrix::from_rows(&rows).unwrap();
            for v in LossVariant::ALL {
                let l = bag_loss(&s, &[label], &w, 0, &cfg(v)).unwrap();
                prop_assert!(l.loss >= 0.0);
            }
        }
    }
}
