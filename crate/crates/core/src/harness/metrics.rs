use serde::{Deserialize, Serialize};

use crate::detectors::{Detection, RunTrace};
use crate::space::{overlap, BBox};

/// Abstract per-window costs: generation, feature extraction and
/// classification. Cascade classification cost scales with the number of
/// stages evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default)]
    pub t_w: f64,
    #[serde(default = "one")]
    pub t_f: f64,
    #[serde(default = "one")]
    pub t_c: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CostModel {
    fn default() -> Self {
        Self { t_w: 0.0, t_f: 1.0, t_c: 1.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("t_w", self.t_w), ("t_f", self.t_f), ("t_c", self.t_c)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("cost {name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// `t_w + sum(t_f + t_c * stages)`, counting one stage for flat scorers.
pub fn cost_estimate(trace: &RunTrace, model: &CostModel) -> f64 {
    model.t_w
        + trace
            .records
            .iter()
            .map(|r| model.t_f + model.t_c * r.stages_evaluated.max(1) as f64)
            .sum::<f64>()
}

/// Detection counts over one or more images. Merging adds counts, so
/// aggregation is associative and order independent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub images: u64,
    pub objects: u64,
    pub matched: u64,
    pub false_positives: u64,
    pub windows_used: u64,
    pub cost: f64,
}

impl Metrics {
    /// Fraction of ground-truth objects matched; 1 when there are none.
    pub fn detection_rate(&self) -> f64 {
        if self.objects == 0 {
            1.0
        } else {
            self.matched as f64 / self.objects as f64
        }
    }

    /// Unmatched detections per image.
    pub fn fppi(&self) -> f64 {
        if self.images == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.images as f64
        }
    }

    pub fn merge(&self, other: &Metrics) -> Metrics {
        Metrics {
            images: self.images + other.images,
            objects: self.objects + other.objects,
            matched: self.matched + other.matched,
            false_positives: self.false_positives + other.false_positives,
            windows_used: self.windows_used + other.windows_used,
            cost: self.cost + other.cost,
        }
    }
}

/// Greedy one-to-one matching of one image's detections against its
/// ground truth: detections are visited by descending score and each takes
/// the unmatched object it overlaps most, if that overlap reaches
/// `match_threshold`.
pub fn evaluate(detections: &[Detection], ground_truth: &[BBox], match_threshold: f64) -> Metrics {
    let mut order: Vec<&Detection> = detections.iter().collect();
    // Score first, then geometry, so the result never depends on input order.
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.cx.total_cmp(&b.bbox.cx))
            .then(a.bbox.cy.total_cmp(&b.bbox.cy))
            .then(a.bbox.w.total_cmp(&b.bbox.w))
            .then(a.bbox.h.total_cmp(&b.bbox.h))
    });
    let mut taken = vec![false; ground_truth.len()];
    let mut matched = 0;
    for d in order {
        let best = ground_truth
            .iter()
            .enumerate()
            .filter(|(k, _)| !taken[*k])
            .map(|(k, g)| (k, overlap(&d.bbox, g)))
            .filter(|&(_, iou)| iou >= match_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, _)) = best {
            taken[k] = true;
            matched += 1;
        }
    }
    Metrics {
        images: 1,
        objects: ground_truth.len() as u64,
        matched,
        false_positives: (detections.len() as u64) - matched,
        windows_used: 0,
        cost: 0.0,
    }
}
