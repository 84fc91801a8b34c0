//! Planar geometry for deployment sites.
//!
//! A deployment is a set of named nodes (transmitters and receivers) on a
//! floor plan. Each link's line of sight is the straight segment between
//! its two endpoints; motion influence and event-independence reasoning
//! both reduce to point-to-segment and segment-to-segment distances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::StreamId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A line segment between two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Closest point on the segment to `p`, clamped to the endpoints.
    pub fn closest_point(&self, p: Point) -> Point {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return self.a;
        }
        let t = ((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2;
        let t = t.clamp(0.0, 1.0);
        Point::new(self.a.x + t * dx, self.a.y + t * dy)
    }

    /// Euclidean distance from point `p` to this segment.
    pub fn dist_to_point(&self, p: Point) -> f64 {
        p.dist(self.closest_point(p))
    }

    /// Minimum distance between two segments.
    ///
    /// Intersecting segments have distance zero; otherwise the minimum is
    /// attained at an endpoint of one segment against the other, so four
    /// point-to-segment checks cover all cases.
    pub fn dist_to_segment(&self, other: &Segment) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        let d1 = self.dist_to_point(other.a);
        let d2 = self.dist_to_point(other.b);
        let d3 = other.dist_to_point(self.a);
        let d4 = other.dist_to_point(self.b);
        d1.min(d2).min(d3).min(d4)
    }

    fn intersects(&self, other: &Segment) -> bool {
        fn orient(a: Point, b: Point, c: Point) -> f64 {
            (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
        }
        fn on_segment(a: Point, b: Point, c: Point) -> bool {
            c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
        }
        let o1 = orient(self.a, self.b, other.a);
        let o2 = orient(self.a, self.b, other.b);
        let o3 = orient(other.a, other.b, self.a);
        let o4 = orient(other.a, other.b, self.b);
        if ((o1 > 0.0) != (o2 > 0.0)) && ((o3 > 0.0) != (o4 > 0.0)) && o1 != 0.0 && o2 != 0.0 {
            return true;
        }
        // Collinear touch cases.
        (o1 == 0.0 && on_segment(self.a, self.b, other.a))
            || (o2 == 0.0 && on_segment(self.a, self.b, other.b))
            || (o3 == 0.0 && on_segment(other.a, other.b, self.a))
            || (o4 == 0.0 && on_segment(other.a, other.b, self.b))
    }
}

/// Axis-aligned rectangle, stored as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds(pub [f64; 4]);

impl Bounds {
    pub fn contains(&self, p: Point) -> bool {
        let [x0, y0, x1, y1] = self.0;
        p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1
    }

    pub fn width(&self) -> f64 {
        self.0[2] - self.0[0]
    }

    pub fn height(&self) -> f64 {
        self.0[3] - self.0[1]
    }
}

/// Deployment descriptor: node positions, the monitored streams, the
/// maximum walking speed used for reachability analysis, and the floor
/// plan bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteGeometry {
    /// Node name -> position in meters.
    pub nodes: BTreeMap<String, [f64; 2]>,
    /// Monitored streams, "<AP>-<MP>" form.
    pub streams: Vec<StreamId>,
    /// Maximum movement velocity inside the area, m/s.
    pub v_max: f64,
    pub bounds: Bounds,
}

impl SiteGeometry {
    /// Validates the cross-references: every stream endpoint must be a
    /// known node and `v_max` must be positive.
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) {
            return Err(Error::Config(format!("v_max must be > 0, got {}", self.v_max)));
        }
        if self.bounds.width() <= 0.0 || self.bounds.height() <= 0.0 {
            return Err(Error::Config("bounds rectangle is empty".into()));
        }
        for s in &self.streams {
            for end in [&s.ap, &s.mp] {
                if !self.nodes.contains_key(end) {
                    return Err(Error::Config(format!(
                        "stream {s} references unknown node {end}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn node_point(&self, name: &str) -> Result<Point> {
        self.nodes
            .get(name)
            .map(|&[x, y]| Point::new(x, y))
            .ok_or_else(|| Error::Config(format!("unknown node {name}")))
    }

    /// Line-of-sight segment for a stream.
    pub fn segment(&self, stream: &StreamId) -> Result<Segment> {
        Ok(Segment::new(self.node_point(&stream.ap)?, self.node_point(&stream.mp)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_to_segment_distance() {
        let s = Segment::new(Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        assert_eq!(s.dist_to_point(Point::new(5.0, 3.0)), 3.0);
        // Beyond an endpoint the closest point clamps to it.
        assert_eq!(s.dist_to_point(Point::new(-3.0, 4.0)), 5.0);
        assert_eq!(s.dist_to_point(Point::new(13.0, 4.0)), 5.0);
    }

    #[test]
    fn degenerate_segment_is_a_point() {
        let s = Segment::new(Point::new(1.0, 1.0), Point::new(1.0, 1.0));
        assert_eq!(s.dist_to_point(Point::new(4.0, 5.0)), 5.0);
    }

    #[test]
    fn parallel_segments_distance() {
        let a = Segment::new(Point::new(0.0, 0.0), Point::new(10.0, 0.0));
        let b = Segment::new(Point::new(0.0, 6.0), Point::new(10.0, 6.0));
        assert_eq!(a.dist_to_segment(&b), 6.0);
    }

    #[test]
    fn intersecting_segments_distance_zero() {
        let a = Segment::new(Point::new(0.0, 0.0), Point::new(10.0, 10.0));
        let b = Segment::new(Point::new(0.0, 10.0), Point::new(10.0, 0.0));
        assert_eq!(a.dist_to_segment(&b), 0.0);
    }

    #[test]
    fn shared_endpoint_distance_zero() {
        let a = Segment::new(Point::new(0.0, 0.0), Point::new(5.0, 5.0));
        let b = Segment::new(Point::new(0.0, 0.0), Point::new(5.0, -5.0));
        assert_eq!(a.dist_to_segment(&b), 0.0);
    }
}
