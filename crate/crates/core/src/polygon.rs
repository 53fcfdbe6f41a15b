//! Planar convex-polygon machinery: Shoelace area, counterclockwise hull
//! ordering (Graham scan), Sutherland-Hodgman clipping, and IoU.
//!
//! "Counterclockwise" means positive signed area in the (u, v) coordinate
//! algebra; areas always take the absolute value, so consumers never depend
//! on the screen-space handedness of pixel coordinates.

use crate::camera::PixelPoint;

/// Squared-distance threshold below which two vertices are merged.
const DEDUP_EPS_SQ: f64 = 1e-18;

/// Cross-product tolerance for treating three points as collinear.
const COLLINEAR_EPS: f64 = 1e-9;

/// An ordered planar polygon. Canonical instances (from [`ccw_sort`] or
/// [`convex_intersection`]) are convex and counterclockwise; the empty
/// polygon is allowed and has zero area.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon2D {
    vertices: Vec<PixelPoint>,
}

impl Polygon2D {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Wraps an already-ordered vertex list without canonicalizing.
    pub fn from_vertices(vertices: Vec<PixelPoint>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[PixelPoint] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

fn cross(o: &PixelPoint, a: &PixelPoint, b: &PixelPoint) -> f64 {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

/// Polygon area by the Shoelace formula: half the absolute value of the
/// summed 2x2 determinants of consecutive vertices, with wraparound.
/// An empty polygon has area zero.
pub fn shoelace_area(poly: &Polygon2D) -> f64 {
    let vs = poly.vertices();
    if vs.len() < 3 {
        return 0.0;
    }
    let mut twice_area = 0.0;
    for i in 0..vs.len() {
        let j = (i + 1) % vs.len();
        twice_area += vs[i].u * vs[j].v - vs[j].u * vs[i].v;
    }
    twice_area.abs() / 2.0
}

/// Convex hull of the input in counterclockwise order (Graham scan),
/// starting from the lowest-v (then lowest-u) point. Collinear interior
/// points and duplicates are dropped. Fewer than 3 survivors yield a
/// degenerate polygon with zero area.
pub fn ccw_sort(points: &[PixelPoint]) -> Polygon2D {
    let mut pts: Vec<PixelPoint> = Vec::with_capacity(points.len());
    for p in points {
        if !pts
            .iter()
            .any(|q| (p.u - q.u).powi(2) + (p.v - q.v).powi(2) < DEDUP_EPS_SQ)
        {
            pts.push(*p);
        }
    }
    if pts.len() < 3 {
        pts.sort_by(|a, b| (a.v, a.u).partial_cmp(&(b.v, b.u)).unwrap());
        return Polygon2D::from_vertices(pts);
    }

    let pivot_idx = pts
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (a.v, a.u).partial_cmp(&(b.v, b.u)).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let pivot = pts.swap_remove(pivot_idx);

    // Sort by polar angle about the pivot; ties by distance.
    pts.sort_by(|a, b| {
        let c = cross(&pivot, a, b);
        if c.abs() > 0.0 {
            c.partial_cmp(&0.0).unwrap().reverse()
        } else {
            let da = (a.u - pivot.u).powi(2) + (a.v - pivot.v).powi(2);
            let db = (b.u - pivot.u).powi(2) + (b.v - pivot.v).powi(2);
            da.partial_cmp(&db).unwrap()
        }
    });

    let mut hull: Vec<PixelPoint> = vec![pivot];
    for p in pts {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            if cross(&o, &a, &p) <= COLLINEAR_EPS {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    if hull.len() < 3 {
        return Polygon2D::from_vertices(hull);
    }
    Polygon2D::from_vertices(hull)
}

/// Signed-distance tolerance for the clip inside-test, in coordinate
/// units. Points this close to a clip line count as inside; without the
/// band, edges running along a clip boundary (near-identical polygons)
/// get cut by sign noise.
const BOUNDARY_TOL: f64 = 1e-9;

/// Clips one polygon to the inside of a directed edge (half-plane to the
/// left of a -> b).
fn clip_halfplane(subject: &[PixelPoint], a: &PixelPoint, b: &PixelPoint) -> Vec<PixelPoint> {
    let edge_len = ((b.u - a.u).powi(2) + (b.v - a.v).powi(2)).sqrt();
    if edge_len < 1e-12 {
        return subject.to_vec();
    }
    let mut out = Vec::with_capacity(subject.len() + 1);
    let n = subject.len();
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let sc = cross(a, b, &s);
        let ec = cross(a, b, &e);
        let s_in = sc / edge_len >= -BOUNDARY_TOL;
        let e_in = ec / edge_len >= -BOUNDARY_TOL;
        let intersection = |s: &PixelPoint, e: &PixelPoint, sc: f64, ec: f64| {
            let t = (sc / (sc - ec)).clamp(0.0, 1.0);
            PixelPoint::new(s.u + t * (e.u - s.u), s.v + t * (e.v - s.v))
        };
        match (s_in, e_in) {
            (true, true) => out.push(e),
            (true, false) => out.push(intersection(&s, &e, sc, ec)),
            (false, true) => {
                out.push(intersection(&s, &e, sc, ec));
                out.push(e);
            }
            (false, false) => {}
        }
    }
    out
}

/// Intersection of two convex polygons by successive half-plane clipping
/// of `a` against the edges of `b`. Inputs are canonicalized first; the
/// result is convex, counterclockwise, possibly empty.
pub fn convex_intersection(a: &Polygon2D, b: &Polygon2D) -> Polygon2D {
    let a = ccw_sort(a.vertices());
    let b = ccw_sort(b.vertices());
    if a.len() < 3 || b.len() < 3 {
        return Polygon2D::empty();
    }
    let mut subject = a.vertices().to_vec();
    let clip = b.vertices();
    for i in 0..clip.len() {
        let j = (i + 1) % clip.len();
        subject = clip_halfplane(&subject, &clip[i], &clip[j]);
        if subject.len() < 3 {
            return Polygon2D::empty();
        }
    }
    ccw_sort(&subject)
}

/// Intersection-over-union of two convex polygons. The degenerate 0/0
/// case is defined as zero so degenerate projections score worst.
pub fn iou(a: &Polygon2D, b: &Polygon2D) -> f64 {
    let inter = shoelace_area(&convex_intersection(a, b));
    let union = shoelace_area(a) + shoelace_area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn px(u: f64, v: f64) -> PixelPoint {
        PixelPoint::new(u, v)
    }

    fn square(x0: f64, y0: f64, side: f64) -> Polygon2D {
        Polygon2D::from_vertices(vec![
            px(x0, y0),
            px(x0 + side, y0),
            px(x0 + side, y0 + side),
            px(x0, y0 + side),
        ])
    }

    #[test]
    fn shoelace_unit_square_and_triangle() {
        assert_eq!(shoelace_area(&square(0.0, 0.0, 1.0)), 1.0);
        let tri = Polygon2D::from_vertices(vec![px(0.0, 0.0), px(1.0, 0.0), px(0.0, 1.0)]);
        assert_eq!(shoelace_area(&tri), 0.5);
        assert_eq!(shoelace_area(&Polygon2D::empty()), 0.0);
    }

    #[test]
    fn shoelace_orientation_and_rotation_invariant() {
        let vs = vec![px(0.0, 0.0), px(2.0, 0.0), px(3.0, 2.0), px(1.0, 3.0)];
        let base = shoelace_area(&Polygon2D::from_vertices(vs.clone()));
        let mut reversed = vs.clone();
        reversed.reverse();
        assert_relative_eq!(
            shoelace_area(&Polygon2D::from_vertices(reversed)),
            base,
            epsilon = 1e-12
        );
        for k in 1..vs.len() {
            let mut rotated = vs.clone();
            rotated.rotate_left(k);
            assert_relative_eq!(
                shoelace_area(&Polygon2D::from_vertices(rotated)),
                base,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn ccw_sort_square_corners() {
        let shuffled = [px(1.0, 1.0), px(0.0, 0.0), px(0.0, 1.0), px(1.0, 0.0)];
        let hull = ccw_sort(&shuffled);
        assert_eq!(hull.len(), 4);
        assert_eq!(hull.vertices()[0], px(0.0, 0.0));
        // Positive signed area = counterclockwise.
        let vs = hull.vertices();
        let mut signed = 0.0;
        for i in 0..4 {
            let j = (i + 1) % 4;
            signed += vs[i].u * vs[j].v - vs[j].u * vs[i].v;
        }
        assert!(signed > 0.0);
    }

    #[test]
    fn ccw_sort_drops_interior_point() {
        let pts = [
            px(0.0, 0.0),
            px(1.0, 0.0),
            px(1.0, 1.0),
            px(0.0, 1.0),
            px(0.5, 0.5),
        ];
        let hull = ccw_sort(&pts);
        assert_eq!(hull.len(), 4);
        assert!(!hull.vertices().contains(&px(0.5, 0.5)));
    }

    #[test]
    fn ccw_sort_degenerate_inputs() {
        assert_eq!(ccw_sort(&[]).len(), 0);
        assert_eq!(ccw_sort(&[px(1.0, 2.0)]).len(), 1);
        assert_eq!(shoelace_area(&ccw_sort(&[px(0.0, 0.0), px(1.0, 1.0)])), 0.0);
        // Collinear points collapse to a zero-area polygon.
        let collinear = [px(0.0, 0.0), px(1.0, 1.0), px(2.0, 2.0), px(3.0, 3.0)];
        assert_eq!(shoelace_area(&ccw_sort(&collinear)), 0.0);
    }

    #[test]
    fn intersection_identical_and_disjoint() {
        let a = square(0.0, 0.0, 1.0);
        let same = convex_intersection(&a, &a);
        assert_relative_eq!(shoelace_area(&same), 1.0, epsilon = 1e-12);

        let far = square(5.0, 5.0, 1.0);
        assert!(convex_intersection(&a, &far).is_empty());
    }

    #[test]
    fn intersection_half_overlap() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.0, 1.0);
        let inter = convex_intersection(&a, &b);
        assert_relative_eq!(shoelace_area(&inter), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn iou_closed_forms() {
        let a = square(0.0, 0.0, 1.0);
        assert_relative_eq!(iou(&a, &a), 1.0, epsilon = 1e-12);
        assert_eq!(iou(&a, &square(9.0, 9.0, 1.0)), 0.0);
        assert_relative_eq!(
            iou(&a, &square(0.5, 0.0, 1.0)),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        assert_eq!(iou(&Polygon2D::empty(), &Polygon2D::empty()), 0.0);
    }

    #[test]
    fn iou_symmetric() {
        let a = ccw_sort(&[px(0.0, 0.0), px(2.0, 0.3), px(1.7, 2.1), px(-0.2, 1.4)]);
        let b = ccw_sort(&[px(1.0, 1.0), px(3.0, 1.2), px(2.5, 3.0)]);
        assert_relative_eq!(iou(&a, &b), iou(&b, &a), epsilon = 1e-12);
    }
}
