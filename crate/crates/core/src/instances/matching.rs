use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::set::InstanceSet;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub iou_threshold: f64,
    /// Matched `(pred id, truth id, IoU)` triples in matching order.
    pub matches: Vec<(u32, u32, f64)>,
}

/// IoU of every overlapping `(pred index, truth index)` pair.
pub fn pairwise_iou(pred: &InstanceSet, truth: &InstanceSet) -> Result<BTreeMap<(usize, usize), f64>> {
    if pred.height != truth.height || pred.width != truth.width {
        return Err(Error::DimensionMismatch {
            expected: truth.height * truth.width,
            actual: pred.height * pred.width,
        });
    }
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); truth.height * truth.width];
    for (j, t) in truth.instances.iter().enumerate() {
        for &p in t.pixels() {
            owners[p].push(j);
        }
    }
    let mut out = BTreeMap::new();
    for (i, p) in pred.instances.iter().enumerate() {
        let mut inter: BTreeMap<usize, usize> = BTreeMap::new();
        for &px in p.pixels() {
            for &j in &owners[px] {
                *inter.entry(j).or_default() += 1;
            }
        }
        for (j, n) in inter {
            let union = p.area() + truth.instances[j].area() - n;
            out.insert((i, j), n as f64 / union as f64);
        }
    }
    Ok(out)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching in descending IoU order (ties by prediction
/// then truth index); a pair matches iff its IoU is at least `tau`.
pub fn match_instances(pred: &InstanceSet, truth: &InstanceSet, tau: f64) -> Result<MatchReport> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("IoU threshold must lie in (0, 1], got {tau}")));
    }
    let mut pairs: Vec<((usize, usize), f64)> = pairwise_iou(pred, truth)?.into_iter().filter(|(_, v)| *v >= tau).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matches = Vec::new();
    for ((i, j), iou) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            matches.push((pred.instances[i].id, truth.instances[j].id, iou));
        }
    }
    let tp = matches.len();
    Ok(MatchReport {
        true_positives: tp,
        false_positives: pred.len() - tp,
        false_negatives: truth.len() - tp,
        precision: ratio(tp, pred.len()),
        recall: ratio(tp, truth.len()),
        iou_threshold: tau,
        matches,
    })
}
