//! Planar predicates used by the labeling rule.

use super::BoundingBox;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// Even-odd point-in-polygon test (boundary points may go either way).
pub fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Whether the closed box and the closed polygon share at least one point.
pub fn box_intersects_polygon(b: &BoundingBox, poly: &[(f64, f64)]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let (l, r, t, btm) = (b.left(), b.right(), b.top(), b.bottom());
    if poly
        .iter()
        .any(|&(x, y)| x >= l && x <= r && y >= t && y <= btm)
    {
        return true;
    }
    let corners = [(l, t), (r, t), (r, btm), (l, btm)];
    if corners.iter().any(|&c| point_in_polygon(c, poly)) {
        return true;
    }
    for i in 0..poly.len() {
        let a = poly[i];
        let z = poly[(i + 1) % poly.len()];
        for k in 0..4 {
            if segments_intersect(a, z, corners[k], corners[(k + 1) % 4]) {
                return true;
            }
        }
    }
    false
}
