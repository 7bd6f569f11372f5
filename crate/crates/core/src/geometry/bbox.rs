//! Axis-aligned box algebra: areas, IoU, GIoU and greedy NMS.

use serde::{Deserialize, Serialize};

use super::GeometryError;

/// An axis-aligned bounding box in continuous pixel coordinates, or an
/// explicit marker that no box exists.
///
/// `Absent` is the unique representation of "no box": a zero-area box is
/// normalized to `Absent` at construction so that downstream code can
/// branch on presence without comparing areas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BBox2D {
    Absent,
    Present { x1: f64, y1: f64, x2: f64, y2: f64 },
}

impl BBox2D {
    /// Builds a box from its corners, normalizing zero-area input to
    /// `Absent`. Corners must satisfy `x1 <= x2` and `y1 <= y2` and be
    /// finite.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 > x2 || y1 > y2 {
            return Err(GeometryError::InvalidCorners { x1, y1, x2, y2 });
        }
        if x1 == x2 || y1 == y2 {
            return Ok(BBox2D::Absent);
        }
        Ok(BBox2D::Present { x1, y1, x2, y2 })
    }

    pub fn is_present(&self) -> bool {
        matches!(self, BBox2D::Present { .. })
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, BBox2D::Absent)
    }

    pub fn area(&self) -> f64 {
        match *self {
            BBox2D::Absent => 0.0,
            BBox2D::Present { x1, y1, x2, y2 } => (x2 - x1) * (y2 - y1),
        }
    }

    /// Corner array `[x1, y1, x2, y2]` for a present box.
    pub fn corners(&self) -> Option<[f64; 4]> {
        match *self {
            BBox2D::Absent => None,
            BBox2D::Present { x1, y1, x2, y2 } => Some([x1, y1, x2, y2]),
        }
    }

    /// Intersects with another box; `Absent` if they do not overlap.
    pub fn intersection(&self, other: &BBox2D) -> BBox2D {
        match (*self, *other) {
            (
                BBox2D::Present { x1, y1, x2, y2 },
                BBox2D::Present {
                    x1: a1,
                    y1: b1,
                    x2: a2,
                    y2: b2,
                },
            ) => {
                let ix1 = x1.max(a1);
                let iy1 = y1.max(b1);
                let ix2 = x2.min(a2);
                let iy2 = y2.min(b2);
                if ix1 < ix2 && iy1 < iy2 {
                    BBox2D::Present {
                        x1: ix1,
                        y1: iy1,
                        x2: ix2,
                        y2: iy2,
                    }
                } else {
                    BBox2D::Absent
                }
            }
            _ => BBox2D::Absent,
        }
    }

    pub fn intersection_area(&self, other: &BBox2D) -> f64 {
        self.intersection(other).area()
    }

    pub fn union_area(&self, other: &BBox2D) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Smallest axis-aligned box enclosing both present boxes.
    fn enclosing_hull(&self, other: &BBox2D) -> Option<[f64; 4]> {
        match (self.corners(), other.corners()) {
            (Some([ax1, ay1, ax2, ay2]), Some([bx1, by1, bx2, by2])) => {
                Some([ax1.min(bx1), ay1.min(by1), ax2.max(bx2), ay2.max(by2)])
            }
            _ => None,
        }
    }
}

/// Intersection-over-union of two boxes.
///
/// Returns 0 when exactly one box is absent. The both-absent case is
/// undefined here and signalled as an error: callers that need the
/// extended semantics use `metrics::iou_plus_n`.
pub fn iou(a: &BBox2D, b: &BBox2D) -> Result<f64, GeometryError> {
    match (a.is_present(), b.is_present()) {
        (false, false) => Err(GeometryError::BothAbsent),
        (true, true) => {
            let inter = a.intersection_area(b);
            let union = a.area() + b.area() - inter;
            Ok(inter / union)
        }
        _ => Ok(0.0),
    }
}

/// IoU with absent boxes scoring 0 against anything, including each other.
/// Used where absence can only mean "no overlap" (NMS, ray bundling).
pub(crate) fn iou_or_zero(a: &BBox2D, b: &BBox2D) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

/// Generalized IoU: `IoU - (|hull| - |union|) / |hull|`, in (-1, 1].
///
/// Defined for disjoint boxes, where plain IoU saturates at 0; the hull
/// penalty keeps the measure informative for motion matching.
pub fn giou(a: &BBox2D, b: &BBox2D) -> Result<f64, GeometryError> {
    let [hx1, hy1, hx2, hy2] = a.enclosing_hull(b).ok_or(GeometryError::AbsentInput)?;
    let hull = (hx2 - hx1) * (hy2 - hy1);
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = inter / union;
    Ok(iou - (hull - union) / hull)
}

/// Greedy non-maximum suppression.
///
/// Boxes are visited in descending score order (ties broken by earlier
/// input index); a box is dropped when its IoU with an already kept box
/// exceeds `iou_threshold`. Returns the kept indices in input order.
pub fn nms(boxes: &[(BBox2D, f64)], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .1
            .partial_cmp(&boxes[i].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let mut suppressed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou_or_zero(&boxes[i].0, &boxes[j].0) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept.sort_unstable();
    kept
}
