use serde::{Deserialize, Serialize};

use crate::space::{overlap, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Greedy non-maximum suppression: visit candidates by descending score
/// and keep a box iff its overlap with every kept box is below
/// `threshold`. Ties keep input order.
pub fn nms(candidates: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = candidates.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| overlap(&k.bbox, &d.bbox) < threshold) {
            kept.push(*d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn det(cx: f64, cy: f64, w: f64, h: f64, score: f64) -> Detection {
        Detection { bbox: BBox::new(cx, cy, w, h), score }
    }

    #[test]
    fn overlapping_pair_keeps_the_stronger() {
        // Same height, shifted horizontally so IoU = 0.7.
        let w = 10.0;
        let shift = w * (1.0 - 0.7) / (1.0 + 0.7);
        let a = det(0.0, 0.0, w, 10.0, 0.9);
        let b = det(shift, 0.0, w, 10.0, 0.8);
        assert!((overlap(&a.bbox, &b.bbox) - 0.7).abs() < 1e-12);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
    }

    #[test]
    fn disjoint_boxes_all_kept() {
        let ds: Vec<_> = (0..5).map(|k| det(20.0 * k as f64, 0.0, 10.0, 10.0, k as f64)).collect();
        assert_eq!(nms(&ds, 0.5).len(), 5);
    }

    #[test]
    fn greedy_matches_pairwise_oracle() {
        let mut rng = seeded(17);
        for _ in 0..200 {
            let ds: Vec<_> = (0..10)
                .map(|_| {
                    det(
                        rng.random_range(0.0..40.0),
                        rng.random_range(0.0..40.0),
                        rng.random_range(5.0..20.0),
                        rng.random_range(5.0..20.0),
                        rng.random(),
                    )
                })
                .collect();
            let kept = nms(&ds, 0.5);
            // Oracle: walk the score order; a box is kept iff no earlier kept
            // box overlaps it at or above the threshold.
            let mut sorted = ds.clone();
            sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
            let mut expect: Vec<Detection> = Vec::new();
            for d in &sorted {
                let mut ok = true;
                for e in &expect {
                    if overlap(&e.bbox, &d.bbox) >= 0.5 {
                        ok = false;
                    }
                }
                if ok {
                    expect.push(*d);
                }
            }
            assert_eq!(kept, expect);
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    assert!(overlap(&a.bbox, &b.bbox) < 0.5);
                }
            }
            // Maximality: every dropped box overlaps some kept box.
            for d in &ds {
                if !kept.contains(d) {
                    assert!(kept.iter().any(|k| overlap(&k.bbox, &d.bbox) >= 0.5));
                }
            }
        }
    }
}
