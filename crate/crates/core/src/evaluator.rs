//! Held-out evaluation: score every (bag, relation) candidate, rank them,
//! and compare against the gold facts of the test split.
//!
//! A bag with `k` positive relations contributes `k` gold facts; each
//! `(pair, relation)` fact is counted as a hit at most once.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::corpus::EncodedBag;
use crate::error::{EvalError, ModelError};
use crate::losses::LossVariant;
use crate::model::RankingModel;
use crate::numeric::Real;

/// Cut-offs of the P@N summary.
pub const DEFAULT_CUTOFFS: [usize; 5] = [100, 200, 300, 400, 500];

/// A scored candidate fact. `pair` indexes the bag in its split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub pair: usize,
    pub relation: usize,
    pub score: f64,
}

pub type GoldSet = HashSet<(usize, usize)>;

/// Gold `(pair, relation)` facts: every non-NR label of every bag.
pub fn gold_facts(bags: &[EncodedBag], nr: usize) -> GoldSet {
    bags.iter()
        .enumerate()
        .flat_map(|(i, b)| b.labels.iter().filter(|&&l| l != nr).map(move |&l| (i, l)))
        .collect()
}

/// Outcome of scoring a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub records: Vec<EvalRecord>,
    /// Bags without sentences, left out of the ranking.
    pub skipped: usize,
}

/// Scores every non-NR relation of every bag in eval mode.
pub fn score_bags<T: Real>(
    bags: &[EncodedBag],
    model: &RankingModel<T>,
    variant: LossVariant,
) -> Result<Scored, ModelError> {
    let per_bag: Vec<Option<Vec<EvalRecord>>> = bags
        .par_iter()
        .enumerate()
        .map(|(i, bag)| {
            if bag.sentences.is_empty() {
                return Ok(None);
            }
            let scores = model.score_relations(bag, variant)?;
            Ok(Some(
                scores
                    .into_iter()
                    .map(|(relation, s)| EvalRecord {
                        pair: i,
                        relation,
                        score: s.to_f64_lossy(),
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_, ModelError>>()?;
    let skipped = per_bag.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("skipped {skipped} empty bags");
    }
    Ok(Scored {
        records: per_bag.into_iter().flatten().flatten().collect(),
        skipped,
    })
}

/// Descending score; ties by pair then relation, ascending.
pub fn rank(records: &[EvalRecord]) -> Vec<EvalRecord> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.pair.cmp(&b.pair))
            .then(a.relation.cmp(&b.relation))
    });
    sorted
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub rank: usize,
    pub precision: f64,
    pub recall: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<CurvePoint>,
    /// Gold fact count.
    pub gold: usize,
}

impl PrCurve {
    /// Highest F-measure over the curve.
    pub fn max_f_measure(&self) -> f64 {
        self.points
            .iter()
            .map(|p| f_measure(p.precision, p.recall))
            .fold(0.0, f64::max)
    }

    /// Writes `rank,precision,recall,score` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "rank,precision,recall,score")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6}",
                p.rank, p.precision, p.recall, p.score
            )?;
        }
        Ok(())
    }
}

/// Cumulative hit flags along the ranking.
fn hits(ranked: &[EvalRecord], gold: &GoldSet) -> Vec<bool> {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .map(|r| {
            let key = (r.pair, r.relation);
            gold.contains(&key) && seen.insert(key)
        })
        .collect()
}

pub fn pr_curve(records: &[EvalRecord], gold: &GoldSet) -> Result<PrCurve, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let ranked = rank(records);
    let flags = hits(&ranked, gold);
    let g = gold.len() as f64;
    let mut count = 0usize;
    let points = ranked
        .iter()
        .zip(flags)
        .enumerate()
        .map(|(i, (r, hit))| {
            count += usize::from(hit);
            CurvePoint {
                rank: i + 1,
                precision: count as f64 / (i + 1) as f64,
                recall: count as f64 / g,
                score: r.score,
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        gold: gold.len(),
    })
}

/// Precision among the top `n`, in percent.
pub fn precision_at(records: &[EvalRecord], gold: &GoldSet, n: usize) -> Result<f64, EvalError> {
    if n == 0 || n > records.len() {
        return Err(EvalError::NotEnoughRecords {
            n,
            available: records.len(),
        });
    }
    let ranked = rank(records);
    let top = hits(&ranked[..n], gold).into_iter().filter(|&h| h).count();
    Ok(100.0 * top as f64 / n as f64)
}

/// P@N at several cut-offs and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PnSummary {
    pub cutoffs: Vec<usize>,
    pub values: Vec<f64>,
    pub mean: f64,
}

impl PnSummary {
    /// Header line of cut-offs, then one line of percentages to 1 decimal.
    pub fn write_txt<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = self.cutoffs.iter().map(|n| format!("P@{n}")).collect();
        writeln!(w, "{} mean", header.join(" "))?;
        let values: Vec<String> = self.values.iter().map(|v| format!("{v:.1}")).collect();
        writeln!(w, "{} {:.1}", values.join(" "), self.mean)
    }
}

pub fn precision_summary(
    records: &[EvalRecord],
    gold: &GoldSet,
    cutoffs: &[usize],
) -> Result<PnSummary, EvalError> {
    let values = cutoffs
        .iter()
        .map(|&n| precision_at(records, gold, n))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Ok(PnSummary {
        cutoffs: cutoffs.to_vec(),
        values,
        mean,
    })
}

/// `2pr / (p + r)`; zero when both are zero.
pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        log::debug!("F-measure of zero precision and recall taken as 0");
        return 0.0;
    }
    2.0 * p * r / (p + r)
}
