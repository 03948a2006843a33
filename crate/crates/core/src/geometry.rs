//! Planar polygon helpers: containment, point/segment distances and exact
//! convex polygon distance via separating axes.

use nalgebra::{Point2, Vector2};

pub type Point = Point2<f64>;

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    /// Body rectangle centred on `center`, rotated by `heading`.
    pub fn rectangle(center: Point, heading: f64, length: f64, width: f64) -> Self {
        let (s, c) = heading.sin_cos();
        let fwd = Vector2::new(c, s) * (0.5 * length);
        let left = Vector2::new(-s, c) * (0.5 * width);
        Self::new(vec![
            center - fwd - left,
            center + fwd - left,
            center + fwd + left,
            center - fwd + left,
        ])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Boundary-inclusive containment test for a convex CCW polygon.
    pub fn contains(&self, p: &Point) -> bool {
        self.edges().all(|(a, b)| cross(&(b - a), &(p - a)) >= -1e-12)
    }

    /// Euclidean distance from `p` to the polygon; zero inside.
    pub fn distance_to_point(&self, p: &Point) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.boundary_distance(p)
    }

    /// Distance from `p` to the polygon boundary regardless of containment.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, &a, &b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn translated(&self, offset: Vector2<f64>) -> Self {
        Self::new(self.vertices.iter().map(|v| v + offset).collect())
    }

    fn project(&self, axis: &Vector2<f64>) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let d = axis.dot(&v.coords);
            (lo.min(d), hi.max(d))
        })
    }
}

pub fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Separating-axis overlap test (touching counts as overlap).
pub fn polygons_overlap(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    for poly in [a, b] {
        for (p, q) in poly.edges() {
            let e = q - p;
            let axis = Vector2::new(-e.y, e.x);
            if axis.norm_squared() == 0.0 {
                continue;
            }
            let (amin, amax) = a.project(&axis);
            let (bmin, bmax) = b.project(&axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

/// Exact distance between two convex polygons; zero when they overlap.
pub fn polygon_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    if polygons_overlap(a, b) {
        return 0.0;
    }
    let one_way = |p: &ConvexPolygon, q: &ConvexPolygon| {
        p.vertices
            .iter()
            .map(|v| q.boundary_distance(v))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

/// Ray-casting point-in-polygon for a simple polygon of any orientation.
/// Points on the boundary (within `tol`) count as inside.
pub fn point_in_polygon(boundary: &[Point], p: &Point, tol: f64) -> bool {
    let n = boundary.len();
    if n == 0 {
        return false;
    }
    for i in 0..n {
        if segment_distance(p, &boundary[i], &boundary[(i + 1) % n]) <= tol {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (boundary[i], boundary[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed shoelace area (positive for CCW).
pub fn signed_area(boundary: &[Point]) -> f64 {
    let n = boundary.len();
    (0..n)
        .map(|i| {
            let (a, b) = (boundary[i], boundary[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// True when no two non-adjacent edges properly intersect.
pub fn is_simple(boundary: &[Point]) -> bool {
    let n = boundary.len();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b) = (boundary[i], boundary[(i + 1) % n]);
            let (c, d) = (boundary[j], boundary[(j + 1) % n]);
            if segments_cross(&a, &b, &c, &d) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_rectangles_collide() {
        let a = ConvexPolygon::rectangle(Point::new(0.0, 0.0), 0.3, 4.5, 1.8);
        assert_eq!(polygon_distance(&a, &a.clone()), 0.0);
    }

    #[test]
    fn axis_aligned_rectangles_one_metre_apart() {
        let a = ConvexPolygon::rectangle(Point::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let b = ConvexPolygon::rectangle(Point::new(5.0, 0.5), 0.0, 4.0, 2.0);
        assert_relative_eq!(polygon_distance(&a, &b), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn point_distance_and_containment() {
        let a = ConvexPolygon::rectangle(Point::new(0.0, 0.0), 0.0, 4.0, 2.0);
        assert!(a.contains(&Point::new(2.0, 1.0)));
        assert_eq!(a.distance_to_point(&Point::new(1.0, 0.0)), 0.0);
        assert_relative_eq!(a.distance_to_point(&Point::new(5.0, 5.0)), (9.0f64 + 16.0).sqrt());
    }

    #[test]
    fn ray_cast_counts_boundary_inside() {
        let sq = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        assert!(point_in_polygon(&sq, &Point::new(0.5, 0.5), 1e-9));
        assert!(point_in_polygon(&sq, &Point::new(1.0, 0.5), 1e-9));
        assert!(point_in_polygon(&sq, &Point::new(0.0, 0.0), 1e-9));
        assert!(!point_in_polygon(&sq, &Point::new(1.5, 0.5), 1e-9));
        assert_relative_eq!(signed_area(&sq), 1.0);
        assert!(is_simple(&sq));
        let bow = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(!is_simple(&bow));
    }
}
