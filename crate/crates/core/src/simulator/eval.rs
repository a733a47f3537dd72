//! Scoring against generator labels.

use std::collections::{BTreeMap, BTreeSet};

use super::scene::{ObjectRecord, SemanticClass};
use crate::error::{Error, Result};
use crate::geom::{ClusterSet, GroundMask};
use crate::objective::NegativeSets;
use crate::units::UnitSet;

/// Majority generator class of each unit's members; ties go to the lower
/// class id.
pub fn unit_classes(units: &UnitSet, labels: &[SemanticClass]) -> Result<Vec<SemanticClass>> {
    units
        .units
        .iter()
        .map(|u| {
            let mut counts = [0usize; 4];
            for &m in &u.members {
                let l = labels
                    .get(m)
                    .ok_or_else(|| Error::Shape(format!("member {m} has no label")))?;
                counts[*l as usize] += 1;
            }
            let best = (0..4).rev().max_by_key(|&c| counts[c]).expect("four classes");
            Ok(SemanticClass::ALL[best])
        })
        .collect()
}

/// Fraction of all `(i, j in S_i)` pairs whose units share a class. `None`
/// when every set is empty.
pub fn same_class_fraction(sets: &NegativeSets, classes: &[SemanticClass]) -> Option<f64> {
    let (mut same, mut total) = (0usize, 0usize);
    for (i, set) in sets.sets.iter().enumerate() {
        for &j in set {
            total += 1;
            same += usize::from(classes[i] == classes[j]);
        }
    }
    (total > 0).then(|| same as f64 / total as f64)
}

/// Exact expectation of [`same_class_fraction`] when each `S_i` is drawn
/// uniformly from the other units with the same size `min(L, B-1)`.
pub fn expected_uniform_same_class_fraction(classes: &[SemanticClass]) -> Option<f64> {
    let b = classes.len();
    if b < 2 {
        return None;
    }
    let mut per_class: BTreeMap<SemanticClass, usize> = BTreeMap::new();
    for &c in classes {
        *per_class.entry(c).or_default() += 1;
    }
    // every set has the same size, so the pooled fraction is the mean of the
    // per-unit expectations (c_i - 1) / (B - 1)
    let sum: f64 = classes.iter().map(|c| (per_class[c] - 1) as f64 / (b - 1) as f64).sum();
    Some(sum / b as f64)
}

/// Precision and recall of the ground mask against generator labels. A
/// metric with an empty denominator is reported as 1.
pub fn ground_precision_recall(mask: &GroundMask, labels: &[SemanticClass]) -> Result<(f64, f64)> {
    if mask.len() != labels.len() {
        return Err(Error::Shape(format!("{} mask entries for {} labels", mask.len(), labels.len())));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&g, &l) in mask.is_ground.iter().zip(labels) {
        let truth = l == SemanticClass::Ground;
        match (g, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    Ok((ratio(tp, tp + fp), ratio(tp, tp + fneg)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMatch {
    pub object: usize,
    pub cluster: Option<usize>,
    pub iou: f64,
}

/// Best membership IoU between each vehicle or pedestrian with at least
/// `min_points` members and any cluster of `clusters`.
pub fn match_instances(objects: &[ObjectRecord], clusters: &ClusterSet, min_points: usize) -> Vec<InstanceMatch> {
    objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.class.is_instance() && o.members.len() >= min_points)
        .map(|(idx, o)| {
            let truth: BTreeSet<usize> = o.members.iter().copied().collect();
            let mut best = InstanceMatch {
                object: idx,
                cluster: None,
                iou: 0.0,
            };
            let touched: BTreeSet<usize> = o.members.iter().filter_map(|&m| clusters.labels.get(m).copied().flatten()).collect();
            for c in touched {
                let members = &clusters.clusters[c].members;
                let inter = members.iter().filter(|m| truth.contains(m)).count();
                let union = truth.len() + members.len() - inter;
                let iou = inter as f64 / union as f64;
                if iou > best.iou {
                    best = InstanceMatch {
                        object: idx,
                        cluster: Some(c),
                        iou,
                    };
                }
            }
            best
        })
        .collect()
}
