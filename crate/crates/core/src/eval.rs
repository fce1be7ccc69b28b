//! Prediction quality against the exact oracle.
//!
//! Per net, the accuracy is `TP / (TP + FP + FN)` over Steiner labels (true
//! negatives ignored), or 1 when all three counts are zero. A net whose routed
//! wirelength equals the optimum counts as fully accurate whatever its labels.
//! Wirelength increases are summarized over suboptimal nets only.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gat::ModelParams;
use crate::predict::{predict_batch, refine, route_prediction, SteinerPrediction};
use crate::train::LabeledNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn confusion_counts(selected: &[usize], labels: &[bool]) -> Result<ConfusionCounts> {
    let mut picked = vec![false; labels.len()];
    for &i in selected {
        if i >= labels.len() {
            return Err(Error::Shape(format!(
                "selected node {i} outside {} labels",
                labels.len()
            )));
        }
        picked[i] = true;
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &l) in picked.iter().zip(labels) {
        match (p, l) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(counts)
}

pub fn net_accuracy(counts: &ConfusionCounts) -> f64 {
    let total = counts.tp + counts.fp + counts.fn_;
    if total == 0 {
        1.0
    } else {
        counts.tp as f64 / total as f64
    }
}

/// Quantile by linear interpolation between order statistics: position
/// `q · (n - 1)` in the sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Number of values above `Q3 + 1.5 · IQR`.
pub fn outlier_count(values: &[f64]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let fence = q3 + 1.5 * (q3 - q1);
    sorted.iter().filter(|&&v| v > fence).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetEvaluation {
    pub net_id: u64,
    pub degree: usize,
    pub counts: ConfusionCounts,
    /// Accuracy after the equal-wirelength override.
    pub accuracy: f64,
    pub wl: i64,
    pub wl_opt: i64,
    /// `(wl - wl_opt) / wl_opt`.
    pub wl_increase: f64,
    pub refined: bool,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WlStats {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeRow {
    pub degree: usize,
    pub nets: usize,
    pub average_accuracy: f64,
    pub suboptimal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub nets: usize,
    pub average_accuracy: f64,
    pub suboptimal_count: usize,
    pub suboptimal_rate: f64,
    /// Over suboptimal nets; `None` when every net is optimal.
    pub wl_increase: Option<WlStats>,
    pub outlier_count: usize,
    pub refined_count: usize,
    pub per_degree: Vec<DegreeRow>,
    pub rows: Vec<NetEvaluation>,
}

fn score_net(labeled: &LabeledNet, pred: &SteinerPrediction) -> Result<NetEvaluation> {
    let net = labeled.net();
    let tree = route_prediction(net, pred);
    let refinement = refine(net, pred, &tree);
    let counts = confusion_counts(&refinement.selected, labeled.labels())?;
    let wl = refinement.tree.total_wirelength;
    let wl_opt = labeled.optimal_wirelength();
    let accuracy = if wl == wl_opt { 1.0 } else { net_accuracy(&counts) };
    let wl_increase = if wl_opt > 0 {
        (wl - wl_opt) as f64 / wl_opt as f64
    } else {
        0.0
    };
    Ok(NetEvaluation {
        net_id: net.id(),
        degree: net.degree(),
        counts,
        accuracy,
        wl,
        wl_opt,
        wl_increase,
        refined: refinement.refined,
        selected: refinement.selected,
    })
}

/// Aggregates per-net results, in the given order.
pub fn summarize(rows: Vec<NetEvaluation>) -> EvalReport {
    let nets = rows.len();
    let average_accuracy = if nets == 0 {
        1.0
    } else {
        rows.iter().map(|r| r.accuracy).sum::<f64>() / nets as f64
    };
    let mut increases: Vec<f64> = rows
        .iter()
        .filter(|r| r.wl > r.wl_opt)
        .map(|r| r.wl_increase)
        .collect();
    let suboptimal_count = increases.len();
    let outliers = outlier_count(&increases);
    let wl_increase = (!increases.is_empty()).then(|| {
        let mean = increases.iter().sum::<f64>() / increases.len() as f64;
        increases.sort_by(f64::total_cmp);
        WlStats {
            mean,
            min: increases[0],
            q1: quantile(&increases, 0.25),
            median: quantile(&increases, 0.5),
            q3: quantile(&increases, 0.75),
            max: *increases.last().unwrap(),
        }
    });

    let mut by_degree: BTreeMap<usize, (usize, f64, usize)> = BTreeMap::new();
    for r in &rows {
        let e = by_degree.entry(r.degree).or_default();
        e.0 += 1;
        e.1 += r.accuracy;
        e.2 += usize::from(r.wl > r.wl_opt);
    }
    let per_degree = by_degree
        .into_iter()
        .map(|(degree, (n, acc, sub))| DegreeRow {
            degree,
            nets: n,
            average_accuracy: acc / n as f64,
            suboptimal: sub,
        })
        .collect();

    EvalReport {
        nets,
        average_accuracy,
        suboptimal_count,
        suboptimal_rate: if nets == 0 {
            0.0
        } else {
            suboptimal_count as f64 / nets as f64
        },
        wl_increase,
        outlier_count: outliers,
        refined_count: rows.iter().filter(|r| r.refined).count(),
        per_degree,
        rows,
    }
}

/// Scores given predictions, one per labeled net.
pub fn evaluate_predictions(
    dataset: &[LabeledNet],
    predictions: &[SteinerPrediction],
) -> Result<EvalReport> {
    if dataset.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} nets",
            predictions.len(),
            dataset.len()
        )));
    }
    let rows = dataset
        .par_iter()
        .zip(predictions.par_iter())
        .map(|(l, p)| score_net(l, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(rows))
}

/// Nets per forward pass during evaluation.
const EVAL_BATCH: usize = 256;

/// Predicts, routes, refines and scores every net.
pub fn evaluate(params: &ModelParams, dataset: &[LabeledNet], threshold: f64) -> Result<EvalReport> {
    let chunks: Vec<Vec<NetEvaluation>> = dataset
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let nets: Vec<_> = chunk.iter().map(|l| l.net().clone()).collect();
            let preds = predict_batch(params, &nets, threshold)?;
            chunk
                .iter()
                .zip(&preds)
                .map(|(l, p)| score_net(l, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(summarize(chunks.into_iter().flatten().collect()))
}

/// Uses the oracle's own Steiner sets as predictions.
pub fn evaluate_oracle(dataset: &[LabeledNet]) -> Result<EvalReport> {
    let preds = dataset
        .iter()
        .map(|l| SteinerPrediction::from_selection(l.grid(), l.steiner_set()))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(dataset, &preds)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nets                 {}", self.nets)?;
        writeln!(f, "average accuracy     {:.3}%", 100.0 * self.average_accuracy)?;
        writeln!(
            f,
            "suboptimal WL nets   {} ({:.3}%)",
            self.suboptimal_count,
            100.0 * self.suboptimal_rate
        )?;
        match &self.wl_increase {
            Some(s) => {
                writeln!(f, "average WL increase  {:.3}%", 100.0 * s.mean)?;
                writeln!(f, "min WL increase      {:.3}%", 100.0 * s.min)?;
                writeln!(f, "max WL increase      {:.3}%", 100.0 * s.max)?;
                writeln!(
                    f,
                    "WL increase quartiles {:.3}% / {:.3}% / {:.3}%",
                    100.0 * s.q1,
                    100.0 * s.median,
                    100.0 * s.q3
                )?;
            }
            None => writeln!(f, "average WL increase  n/a")?,
        }
        writeln!(f, "outliers (>Q3+1.5IQR) {}", self.outlier_count)?;
        writeln!(f, "refined nets         {}", self.refined_count)?;
        writeln!(f)?;
        writeln!(f, "degree  nets  accuracy  suboptimal")?;
        for row in &self.per_degree {
            writeln!(
                f,
                "{:>6}  {:>4}  {:>7.3}%  {:>10}",
                row.degree,
                row.nets,
                100.0 * row.average_accuracy,
                row.suboptimal
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_set_arithmetic() {
        let labels = [false, true, true, false];
        let c = confusion_counts(&[1, 2], &labels).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 0));
        let c = confusion_counts(&[], &labels).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 2));
        // selected {a=0, b=1}, labels {b=1, c=2}
        let c = confusion_counts(&[0, 1], &labels).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 1));
        assert!(confusion_counts(&[4], &labels).is_err());
    }

    #[test]
    fn accuracy_formula() {
        let acc = |tp, fp, fn_| net_accuracy(&ConfusionCounts { tp, fp, fn_ });
        assert_eq!(acc(0, 0, 0), 1.0);
        assert_eq!(acc(3, 1, 0), 0.75);
        assert_eq!(acc(0, 2, 1), 0.0);
    }

    #[test]
    fn outliers() {
        assert_eq!(outlier_count(&[]), 0);
        assert_eq!(outlier_count(&[0.3; 7]), 0);
        // Q1 = Q3 = 1, fence 1.
        assert_eq!(outlier_count(&[1.0, 1.0, 1.0, 1.0, 100.0]), 1);
    }

    #[test]
    fn interpolated_quartiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.75), 3.25);
    }

    #[test]
    fn all_optimal_summary() {
        let row = |id, wl| NetEvaluation {
            net_id: id,
            degree: 3,
            counts: ConfusionCounts::default(),
            accuracy: 1.0,
            wl,
            wl_opt: wl,
            wl_increase: 0.0,
            refined: false,
            selected: vec![],
        };
        let r = summarize(vec![row(0, 10), row(1, 20)]);
        assert_eq!(r.average_accuracy, 1.0);
        assert_eq!(r.suboptimal_rate, 0.0);
        assert!(r.wl_increase.is_none());
        assert_eq!(r.outlier_count, 0);
    }
}
