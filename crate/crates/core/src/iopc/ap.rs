use serde::{Deserialize, Serialize};

/// Axis-aligned box; ground truth carries no confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetBox {
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl DetBox {
    pub fn truth(class: &str, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            class: class.into(),
            x,
            y,
            w,
            h,
            confidence: None,
        }
    }

    pub fn detection(class: &str, x: f64, y: f64, w: f64, h: f64, confidence: f64) -> Self {
        Self {
            confidence: Some(confidence),
            ..Self::truth(class, x, y, w, h)
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersection over union.
    pub fn iou(&self, other: &DetBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }

    /// `(x, y, w, h)`.
    pub fn rect(&self) -> (f64, f64, f64, f64) {
        (self.x, self.y, self.w, self.h)
    }
}

/// Detection indices by descending confidence, ties in insertion order.
fn ranking(dets: &[DetBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = dets[a].confidence.unwrap_or(0.0);
        let cb = dets[b].confidence.unwrap_or(0.0);
        cb.total_cmp(&ca)
    });
    order
}

/// Area under the monotone precision envelope for a ranked TP/FP sequence.
pub fn ap_from_ranked(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if tp.is_empty() { 1.0 } else { 0.0 };
    }
    let mut hits = 0usize;
    let precision: Vec<f64> = tp
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            hits += t as usize;
            hits as f64 / (k + 1) as f64
        })
        .collect();
    let mut envelope = 0.0f64;
    let mut area = 0.0;
    for k in (0..tp.len()).rev() {
        envelope = envelope.max(precision[k]);
        if tp[k] {
            area += envelope;
        }
    }
    area / n_gt as f64
}

/// Average precision of one class at an IoU threshold.
///
/// Detections are visited by descending confidence. Each one becomes a true
/// positive if it can be matched to a ground-truth box (IoU at least
/// `iou_threshold`, every box matched once) without unmatching an earlier
/// true positive; earlier matches may move to another box to make room.
/// This keeps the number of true positives at every rank as large as any
/// assignment allows. Candidate boxes are tried by descending IoU.
///
/// No ground truth and no detections scores 1; detections without ground
/// truth, or ground truth without detections, score 0.
pub fn average_precision(dets: &[DetBox], gts: &[DetBox], iou_threshold: f64) -> f64 {
    let order = ranking(dets);
    let candidates: Vec<Vec<usize>> = order
        .iter()
        .map(|&d| {
            let mut c: Vec<(usize, f64)> = gts
                .iter()
                .enumerate()
                .map(|(g, b)| (g, dets[d].iou(b)))
                .filter(|&(_, v)| v >= iou_threshold)
                .collect();
            c.sort_by(|a, b| b.1.total_cmp(&a.1));
            c.into_iter().map(|(g, _)| g).collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gts.len()];
    let tp: Vec<bool> = (0..order.len())
        .map(|r| {
            let mut seen = vec![false; gts.len()];
            augment(r, &candidates, &mut owner, &mut seen)
        })
        .collect();
    ap_from_ranked(&tp, gts.len())
}

fn augment(r: usize, cand: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &g in &cand[r] {
        if seen[g] {
            continue;
        }
        seen[g] = true;
        let current = owner[g];
        if current.map_or(true, |o| augment(o, cand, owner, seen)) {
            owner[g] = Some(r);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64) -> DetBox {
        DetBox::truth("car", x, y, 10.0, 10.0)
    }

    fn d(x: f64, y: f64, c: f64) -> DetBox {
        DetBox::detection("car", x, y, 10.0, 10.0, c)
    }

    #[test]
    fn edge_cases() {
        assert_eq!(average_precision(&[], &[], 0.5), 1.0);
        assert_eq!(average_precision(&[d(0.0, 0.0, 0.5)], &[], 0.5), 0.0);
        assert_eq!(average_precision(&[], &[b(0.0, 0.0)], 0.5), 0.0);
        assert_eq!(average_precision(&[d(50.0, 50.0, 0.5)], &[b(0.0, 0.0)], 0.5), 0.0);
    }

    #[test]
    fn perfect_detector() {
        let gts = vec![b(0.0, 0.0), b(20.0, 0.0), b(40.0, 40.0)];
        let dets: Vec<DetBox> = gts.iter().zip([0.3, 0.9, 0.1]).map(|(g, c)| d(g.x, g.y, c)).collect();
        assert_eq!(average_precision(&dets, &gts, 0.5), 1.0);
    }

    #[test]
    fn worked_example() {
        let gts = vec![b(0.0, 0.0), b(30.0, 0.0)];
        let dets = vec![d(0.0, 0.0, 0.9), d(60.0, 60.0, 0.8), d(30.0, 0.0, 0.7)];
        assert!((average_precision(&dets, &gts, 0.5) - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn reassignment_beats_best_iou_choice() {
        // the first detection overlaps B slightly more than A; only B suits the second
        let gts = vec![b(0.0, 0.0), b(3.0, 0.0)];
        let dets = vec![d(1.6, 0.0, 0.9), d(6.0, 0.0, 0.8)];
        assert_eq!(average_precision(&dets, &gts, 0.5), 1.0);
    }

    #[test]
    fn confidence_scale_invariant() {
        let gts = vec![b(0.0, 0.0), b(30.0, 0.0)];
        let dets = vec![d(0.0, 0.0, 0.4), d(60.0, 60.0, 0.8), d(30.0, 0.0, 0.7)];
        let scaled: Vec<DetBox> = dets
            .iter()
            .map(|x| DetBox { confidence: x.confidence.map(|c| c * 0.25), ..x.clone() })
            .collect();
        assert_eq!(average_precision(&dets, &gts, 0.5), average_precision(&scaled, &gts, 0.5));
    }
}
