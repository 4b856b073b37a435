//! Andrew's monotone-chain convex hull on integer points.

use crate::error::{Error, Result};

pub type Point2 = [i64; 2];

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> i64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Strict convex hull in counter-clockwise order, starting from the
/// lexicographically smallest point. Collinear boundary points are dropped.
pub fn convex_hull_2d(points: &[Point2]) -> Result<Vec<Point2>> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    Ok(hull)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// O(n³) oracle: `(p, q)` is a hull edge when every point lies strictly
    /// left of `p -> q` or on the closed segment between them.
    fn brute_force_hull(points: &[Point2]) -> BTreeSet<Point2> {
        let pts: BTreeSet<Point2> = points.iter().copied().collect();
        let pts: Vec<Point2> = pts.into_iter().collect();
        let mut verts = BTreeSet::new();
        for &p in &pts {
            for &q in &pts {
                if p == q {
                    continue;
                }
                let edge = pts.iter().all(|&r| {
                    let c = cross(p, q, r);
                    c > 0 || (c == 0 && within(p, q, r))
                });
                if edge {
                    verts.insert(p);
                    verts.insert(q);
                }
            }
        }
        verts
    }

    fn within(p: Point2, q: Point2, r: Point2) -> bool {
        (0..2).all(|k| r[k] >= p[k].min(q[k]) && r[k] <= p[k].max(q[k]))
    }

    fn polygon_area2(h: &[Point2]) -> i64 {
        (0..h.len()).map(|i| cross([0, 0], h[i], h[(i + 1) % h.len()])).sum()
    }

    #[test]
    fn square_with_centre() {
        let h = convex_hull_2d(&[[0, 0], [2, 0], [2, 2], [0, 2], [1, 1]]).unwrap();
        assert_eq!(h, vec![[0, 0], [2, 0], [2, 2], [0, 2]]);
    }

    #[test]
    fn triangle_comes_back_ccw() {
        let h = convex_hull_2d(&[[0, 0], [0, 3], [4, 0]]).unwrap();
        assert_eq!(h, vec![[0, 0], [4, 0], [0, 3]]);
        assert!(polygon_area2(&h) > 0);
    }

    #[test]
    fn collinear_and_tiny_inputs_are_degenerate() {
        assert!(matches!(convex_hull_2d(&[[0, 0], [1, 1], [2, 2], [5, 5]]), Err(Error::DegenerateHull)));
        assert!(matches!(convex_hull_2d(&[[0, 0], [1, 1]]), Err(Error::DegenerateHull)));
        assert!(matches!(convex_hull_2d(&[[3, 3], [3, 3], [3, 3]]), Err(Error::DegenerateHull)));
    }

    #[test]
    fn collinear_edge_points_are_dropped() {
        let h = convex_hull_2d(&[[0, 0], [1, 0], [2, 0], [2, 1], [2, 2], [0, 2], [0, 1]]).unwrap();
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn disc_points_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for _ in 0..20 {
            let mut pts = Vec::new();
            while pts.len() < 64 {
                let p = [rng.gen_range(-20..=20), rng.gen_range(-20..=20)];
                if p[0] * p[0] + p[1] * p[1] <= 400 {
                    pts.push(p);
                }
            }
            let h = convex_hull_2d(&pts).unwrap();
            assert_eq!(h.iter().copied().collect::<BTreeSet<_>>(), brute_force_hull(&pts));
        }
    }

    proptest! {
        #[test]
        fn hull_is_strict_ccw_and_encloses_everything(pts in prop::collection::vec(prop::array::uniform2(-30i64..30), 3..60)) {
            match convex_hull_2d(&pts) {
                Ok(h) => {
                    let n = h.len();
                    for i in 0..n {
                        let (a, b, c) = (h[i], h[(i + 1) % n], h[(i + 2) % n]);
                        prop_assert!(cross(a, b, c) > 0);
                        for &p in &pts {
                            prop_assert!(cross(a, b, p) >= 0);
                        }
                    }
                    prop_assert_eq!(h.iter().copied().collect::<BTreeSet<_>>(), brute_force_hull(&pts));
                }
                Err(_) => {
                    let o = pts[0];
                    prop_assert!(pts.iter().all(|&p| pts.iter().all(|&q| cross(o, p, q) == 0)));
                }
            }
        }
    }
}
