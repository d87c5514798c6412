//! Identity-level tracker evaluation: IDP, IDR, IDF1.
//!
//! Truth identities and predicted identities are matched one-to-one so that
//! the total number of detection-level agreements is maximal; agreements
//! under that assignment are the identity true positives. The measures then
//! reward trackers for how long they keep the right label on a target, not
//! for how rarely they switch.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Box-overlap threshold for counting a predicted detection as the same
/// observation as a truth detection in the same camera and frame.
pub const MATCH_IOU: f64 = 0.5;

/// Axis-aligned box, pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2D {
    pub fn iou(&self, other: &Box2D) -> f64 {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = (self.x + self.w).min(other.x + other.w);
        let y2 = (self.y + self.h).min(other.y + other.h);
        let inter = (x2 - x1).max(0.0) * (y2 - y1).max(0.0);
        let union = self.w * self.h + other.w * other.h - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One identity-labeled detection, the common currency of truth files and
/// trajectory output.
#[derive(Debug, Clone)]
pub struct LabeledBox {
    pub identity: u64,
    pub camera: u32,
    pub frame: u64,
    pub bbox: Box2D,
}

/// Identity-measure counts and their derived ratios.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityMetrics {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    pub idp: f64,
    pub idr: f64,
    pub idf1: f64,
}

impl IdentityMetrics {
    fn from_counts(idtp: u64, idfp: u64, idfn: u64) -> IdentityMetrics {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        IdentityMetrics {
            idtp,
            idfp,
            idfn,
            idp: ratio(idtp, idtp + idfp),
            idr: ratio(idtp, idtp + idfn),
            idf1: ratio(2 * idtp, 2 * idtp + idfp + idfn),
        }
    }

    pub fn to_table(&self) -> String {
        format!(
            "metric     value\nIDTP   {:9}\nIDFP   {:9}\nIDFN   {:9}\nIDP        {:.3}\nIDR        {:.3}\nIDF1       {:.3}\n",
            self.idtp, self.idfp, self.idfn, self.idp, self.idr, self.idf1
        )
    }
}

/// Computes IDP/IDR/IDF1 of `predicted` against `truth`. Boxes pair up
/// within a (camera, frame) cell when their IoU is at least [`MATCH_IOU`];
/// identity pairs are then assigned one-to-one to maximize total matched
/// detections. Errors on empty truth.
pub fn identity_metrics(predicted: &[LabeledBox], truth: &[LabeledBox]) -> Result<IdentityMetrics> {
    if truth.is_empty() {
        return Err(Error::Invalid("truth detections are empty".into()));
    }
    let n_truth = truth.len() as u64;
    let n_pred = predicted.len() as u64;
    if predicted.is_empty() {
        return Ok(IdentityMetrics::from_counts(0, 0, n_truth));
    }

    // detection-level agreement counts per (truth identity, predicted identity)
    let mut by_cell: BTreeMap<(u32, u64), (Vec<&LabeledBox>, Vec<&LabeledBox>)> = BTreeMap::new();
    for t in truth {
        by_cell.entry((t.camera, t.frame)).or_default().0.push(t);
    }
    for p in predicted {
        by_cell.entry((p.camera, p.frame)).or_default().1.push(p);
    }
    let mut truth_ids: Vec<u64> = truth.iter().map(|t| t.identity).collect();
    truth_ids.sort_unstable();
    truth_ids.dedup();
    let mut pred_ids: Vec<u64> = predicted.iter().map(|p| p.identity).collect();
    pred_ids.sort_unstable();
    pred_ids.dedup();
    let t_index: BTreeMap<u64, usize> = truth_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let p_index: BTreeMap<u64, usize> = pred_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut matches = vec![vec![0u64; pred_ids.len()]; truth_ids.len()];
    for (ts, ps) in by_cell.values() {
        // within one camera+frame cell, pair each truth box with the best
        // unused predicted box above the IoU threshold
        let mut used = vec![false; ps.len()];
        for t in ts {
            let mut best: Option<(usize, f64)> = None;
            for (k, p) in ps.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let iou = t.bbox.iou(&p.bbox);
                if iou >= MATCH_IOU && best.map_or(true, |(_, b)| iou > b) {
                    best = Some((k, iou));
                }
            }
            if let Some((k, _)) = best {
                used[k] = true;
                matches[t_index[&t.identity]][p_index[&ps[k].identity]] += 1;
            }
        }
    }

    // optimal one-to-one identity assignment maximizing matched detections
    let idtp = max_assignment(&matches);
    Ok(IdentityMetrics::from_counts(idtp, n_pred - idtp, n_truth - idtp))
}

/// Maximum-weight bipartite assignment via the Hungarian method on a padded
/// square cost matrix. Sizes here are identity counts, small by nature.
fn max_assignment(weights: &[Vec<u64>]) -> u64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0;
    }
    let n = rows.max(cols);
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimize cost = max_w - weight, padding with cost max_w (weight 0)
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            max_w - weights[i][j] as i64
        } else {
            max_w
        }
    };

    // O(n^3) Hungarian with potentials, 1-indexed internals
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut assignment = vec![0usize; n + 1]; // column -> row
    for i in 1..=n {
        let mut links = vec![0usize; n + 1];
        let mut mins = vec![i64::MAX; n + 1];
        let mut visited = vec![false; n + 1];
        let mut marked_j = 0usize;
        assignment[0] = i;
        loop {
            visited[marked_j] = true;
            let row = assignment[marked_j];
            let mut delta = i64::MAX;
            let mut next_j = 0usize;
            for j in 1..=n {
                if visited[j] {
                    continue;
                }
                let reduced = cost(row - 1, j - 1) - u[row] - v[j];
                if reduced < mins[j] {
                    mins[j] = reduced;
                    links[j] = marked_j;
                }
                if mins[j] < delta {
                    delta = mins[j];
                    next_j = j;
                }
            }
            for j in 0..=n {
                if visited[j] {
                    u[assignment[j]] += delta;
                    v[j] -= delta;
                } else {
                    mins[j] -= delta;
                }
            }
            marked_j = next_j;
            if assignment[marked_j] == 0 {
                break;
            }
        }
        // augment along the alternating path
        while marked_j != 0 {
            let prev = links[marked_j];
            assignment[marked_j] = assignment[prev];
            marked_j = prev;
        }
    }

    let mut total = 0u64;
    for j in 1..=n {
        let i = assignment[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            total += weights[i - 1][j - 1];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Box2D {
        Box2D { x: 0.0, y: 0.0, w: 10.0, h: 10.0 }
    }

    fn det(identity: u64, frame: u64) -> LabeledBox {
        LabeledBox { identity, camera: 0, frame, bbox: unit_box() }
    }

    #[test]
    fn iou_basics() {
        let a = unit_box();
        assert_eq!(a.iou(&a), 1.0);
        let b = Box2D { x: 5.0, y: 0.0, w: 10.0, h: 10.0 };
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        let far = Box2D { x: 100.0, y: 0.0, w: 10.0, h: 10.0 };
        assert_eq!(a.iou(&far), 0.0);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth: Vec<LabeledBox> = (0..10).map(|f| det(1, f)).collect();
        let m = identity_metrics(&truth, &truth).unwrap();
        assert_eq!(m.idtp, 10);
        assert_eq!((m.idp, m.idr, m.idf1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn split_identity_scores_half() {
        let truth: Vec<LabeledBox> = (0..10).map(|f| det(1, f)).collect();
        let pred: Vec<LabeledBox> = (0..10).map(|f| det(if f < 5 { 10 } else { 20 }, f)).collect();
        let m = identity_metrics(&pred, &truth).unwrap();
        assert_eq!((m.idtp, m.idfp, m.idfn), (5, 5, 5));
        assert_eq!(m.idf1, 0.5);
        assert_eq!(m.idp, 0.5);
        assert_eq!(m.idr, 0.5);
    }

    #[test]
    fn merging_split_identities_recovers_one() {
        let truth: Vec<LabeledBox> = (0..10).map(|f| det(1, f)).collect();
        let merged: Vec<LabeledBox> = (0..10).map(|f| det(10, f)).collect();
        let m = identity_metrics(&merged, &truth).unwrap();
        assert_eq!(m.idf1, 1.0);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let truth: Vec<LabeledBox> = (0..4).map(|f| det(1, f)).collect();
        let m = identity_metrics(&[], &truth).unwrap();
        assert_eq!(m.idtp, 0);
        assert_eq!(m.idf1, 0.0);
        assert_eq!(m.idfn, 4);
    }

    #[test]
    fn empty_truth_errors() {
        assert!(identity_metrics(&[det(1, 0)], &[]).is_err());
    }

    #[test]
    fn low_iou_boxes_do_not_match() {
        let truth = vec![det(1, 0)];
        let mut shifted = det(1, 0);
        shifted.bbox.x = 8.0; // IoU = 2/18 < 0.5
        let m = identity_metrics(&[shifted], &truth).unwrap();
        assert_eq!(m.idtp, 0);
    }

    #[test]
    fn idf1_between_idp_and_idr() {
        // 6-frame truth, predictions cover 4 frames correctly plus 4 stray
        let truth: Vec<LabeledBox> = (0..6).map(|f| det(1, f)).collect();
        let mut pred: Vec<LabeledBox> = (0..4).map(|f| det(9, f)).collect();
        for f in 0..4 {
            let mut stray = det(9, 100 + f);
            stray.bbox.x = 500.0;
            pred.push(stray);
        }
        let m = identity_metrics(&pred, &truth).unwrap();
        let lo = m.idp.min(m.idr);
        let hi = m.idp.max(m.idr);
        assert!(m.idf1 >= lo - 1e-12 && m.idf1 <= hi + 1e-12);
    }

    #[test]
    fn assignment_picks_best_total() {
        // truth a matches pred x on 3 frames and pred y on 5; truth b
        // matches x on 4: best total pairs (a,y) + (b,x) = 9
        let w = vec![vec![3, 5], vec![4, 0]];
        assert_eq!(max_assignment(&w), 9);
    }

    #[test]
    fn assignment_rectangular_padding() {
        let w = vec![vec![2, 7, 1]];
        assert_eq!(max_assignment(&w), 7);
        let tall = vec![vec![2], vec![7], vec![1]];
        assert_eq!(max_assignment(&tall), 7);
    }
}
