//! Planar geometry: observation windows, rectangular measurement regions,
//! point patterns and the road-network style segment sets used to build
//! distance-decay covariates.
//!
//! Membership in a rectangle follows the half-open convention
//! `[x0, x1) x [y0, y1)`, except that edges lying on the window's maximum
//! edges are closed. Adjacent parts of a region therefore never count a
//! point twice and the whole window still contains its own corner.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("window must have positive width and height, got {width} x {height}")]
    DegenerateWindow { width: f64, height: f64 },
    #[error("rectangle [{x0}, {x1}] x [{y0}, {y1}] is not contained in the window")]
    RectOutsideWindow { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("point ({x}, {y}) lies outside the window")]
    PointOutsideWindow { x: f64, y: f64 },
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("distance to an empty target set is undefined; the caller must supply a fallback")]
    EmptyTarget,
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    fn is_finite(&self) -> bool {
        self.x0.is_finite() && self.x1.is_finite() && self.y0.is_finite() && self.y1.is_finite()
    }

    /// Closed containment of another rectangle.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// Half-open membership, closed on the edges shared with `window`'s
    /// maximum edges.
    #[inline]
    pub fn contains_in(&self, p: Point, window: &Window) -> bool {
        let b = window.bounds();
        let in_x = p.x >= self.x0 && (p.x < self.x1 || (self.x1 == b.x1 && p.x <= self.x1));
        let in_y = p.y >= self.y0 && (p.y < self.y1 || (self.y1 == b.y1 && p.y <= self.y1));
        in_x && in_y
    }

    /// Euclidean distance from `p` to the closed rectangle (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        (dx * dx + dy * dy).sqrt()
    }
}

/// The observation window: a closed axis-aligned rectangle of positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Rect", into = "Rect")]
pub struct Window {
    bounds: Rect,
}

impl TryFrom<Rect> for Window {
    type Error = GeomError;

    fn try_from(r: Rect) -> Result<Self, GeomError> {
        Window::new(r.x0, r.y0, r.x1, r.y1)
    }
}

impl From<Window> for Rect {
    fn from(w: Window) -> Rect {
        w.bounds
    }
}

impl Window {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeomError> {
        let bounds = Rect::new(x0, y0, x1, y1);
        if !bounds.is_finite() {
            return Err(GeomError::NonFinite("window bounds"));
        }
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return Err(GeomError::DegenerateWindow {
                width: bounds.width(),
                height: bounds.height(),
            });
        }
        Ok(Window { bounds })
    }

    pub fn unit_square() -> Self {
        Window {
            bounds: Rect::new(0.0, 0.0, 1.0, 1.0),
        }
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn width(&self) -> f64 {
        self.bounds.width()
    }

    pub fn height(&self) -> f64 {
        self.bounds.height()
    }

    pub fn area(&self) -> f64 {
        self.bounds.area()
    }

    /// Closed membership.
    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.bounds.x0 && p.x <= self.bounds.x1 && p.y >= self.bounds.y0 && p.y <= self.bounds.y1
    }

    pub fn contains_rect(&self, r: &Rect) -> bool {
        self.bounds.contains_rect(r)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.bounds.contains_rect(&other.bounds)
    }
}

/// A union of pairwise-disjoint rectangles inside a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    window: Window,
    parts: Vec<Rect>,
}

impl Region {
    /// Builds a region from possibly overlapping rectangles. Overlaps are
    /// resolved by subdividing along every rectangle edge and keeping the
    /// covered cells, merged back into maximal horizontal runs.
    pub fn new(window: Window, rects: &[Rect]) -> Result<Self, GeomError> {
        for r in rects {
            if !r.is_finite() {
                return Err(GeomError::NonFinite("region rectangle"));
            }
            if !window.contains_rect(r) || r.x1 < r.x0 || r.y1 < r.y0 {
                return Err(GeomError::RectOutsideWindow {
                    x0: r.x0,
                    y0: r.y0,
                    x1: r.x1,
                    y1: r.y1,
                });
            }
        }
        let rects: Vec<Rect> = rects.iter().copied().filter(|r| r.area() > 0.0).collect();
        Ok(Region {
            window,
            parts: normalize(&rects),
        })
    }

    pub fn whole(window: Window) -> Self {
        Region {
            window,
            parts: vec![window.bounds()],
        }
    }

    pub fn rect(window: Window, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeomError> {
        Region::new(window, &[Rect::new(x0, y0, x1, y1)])
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn parts(&self) -> &[Rect] {
        &self.parts
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(Rect::area).sum()
    }

    pub fn is_whole_window(&self) -> bool {
        self.parts.len() == 1 && self.parts[0] == self.window.bounds()
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        self.parts.iter().any(|r| r.contains_in(p, &self.window))
    }
}

fn normalize(rects: &[Rect]) -> Vec<Rect> {
    if rects.len() <= 1 {
        return rects.to_vec();
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.x0, r.x1]).collect();
    let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r.y0, r.y1]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();

    let mut out = Vec::new();
    for j in 0..ys.len() - 1 {
        let cy = 0.5 * (ys[j] + ys[j + 1]);
        let mut run_start: Option<usize> = None;
        for i in 0..xs.len() - 1 {
            let cx = 0.5 * (xs[i] + xs[i + 1]);
            let covered = rects
                .iter()
                .any(|r| cx > r.x0 && cx < r.x1 && cy > r.y0 && cy < r.y1);
            match (covered, run_start) {
                (true, None) => run_start = Some(i),
                (false, Some(s)) => {
                    out.push(Rect::new(xs[s], ys[j], xs[i], ys[j + 1]));
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            out.push(Rect::new(xs[s], ys[j], xs[xs.len() - 1], ys[j + 1]));
        }
    }
    // merge vertically stacked runs with identical x-extent
    let mut merged: Vec<Rect> = Vec::with_capacity(out.len());
    for r in out {
        if let Some(prev) = merged
            .iter_mut()
            .find(|m| m.x0 == r.x0 && m.x1 == r.x1 && m.y1 == r.y0)
        {
            prev.y1 = r.y1;
        } else {
            merged.push(r);
        }
    }
    merged
}

/// A realized point pattern for one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointPattern {
    window: Window,
    timestamp: u32,
    points: Vec<Point>,
}

impl PointPattern {
    pub fn new(window: Window, timestamp: u32, points: Vec<Point>) -> Result<Self, GeomError> {
        for p in &points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(GeomError::NonFinite("pattern point"));
            }
            if !window.contains(*p) {
                return Err(GeomError::PointOutsideWindow { x: p.x, y: p.y });
            }
        }
        Ok(PointPattern {
            window,
            timestamp,
            points,
        })
    }

    pub fn empty(window: Window, timestamp: u32) -> Self {
        PointPattern {
            window,
            timestamp,
            points: Vec::new(),
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn timestamp(&self) -> u32 {
        self.timestamp
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_timestamp(mut self, t: u32) -> Self {
        self.timestamp = t;
        self
    }
}

/// Counts the pattern's points inside `region`.
pub fn count_in_region(pattern: &PointPattern, region: &Region) -> Result<usize, GeomError> {
    for r in region.parts() {
        if !pattern.window().contains_rect(r) {
            return Err(GeomError::RectOutsideWindow {
                x0: r.x0,
                y0: r.y0,
                x1: r.x1,
                y1: r.y1,
            });
        }
    }
    Ok(pattern
        .points()
        .iter()
        .filter(|p| region.contains(**p))
        .count())
}

/// A line segment or a circular arc.
///
/// Arcs run counter-clockwise from `start` to `end` (radians), with
/// `0 < end - start <= 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Line {
        a: Point,
        b: Point,
    },
    Arc {
        center: Point,
        radius: f64,
        start: f64,
        end: f64,
    },
}

impl Segment {
    pub fn endpoints(&self) -> (Point, Point) {
        match *self {
            Segment::Line { a, b } => (a, b),
            Segment::Arc {
                center,
                radius,
                start,
                end,
            } => (
                Point::new(center.x + radius * start.cos(), center.y + radius * start.sin()),
                Point::new(center.x + radius * end.cos(), center.y + radius * end.sin()),
            ),
        }
    }

    #[inline]
    pub fn distance(&self, p: Point) -> f64 {
        match *self {
            Segment::Line { a, b } => {
                let (vx, vy) = (b.x - a.x, b.y - a.y);
                let len2 = vx * vx + vy * vy;
                if len2 == 0.0 {
                    return p.dist(a);
                }
                let s = (((p.x - a.x) * vx + (p.y - a.y) * vy) / len2).clamp(0.0, 1.0);
                p.dist(Point::new(a.x + s * vx, a.y + s * vy))
            }
            Segment::Arc {
                center,
                radius,
                start,
                end,
            } => {
                let r = p.dist(center);
                if r == 0.0 {
                    return radius;
                }
                let theta = (p.y - center.y).atan2(p.x - center.x);
                let rel = (theta - start).rem_euclid(TAU);
                if rel <= end - start {
                    (r - radius).abs()
                } else {
                    let (e0, e1) = self.endpoints();
                    p.dist(e0).min(p.dist(e1))
                }
            }
        }
    }

    fn validate(&self) -> Result<(), GeomError> {
        match *self {
            Segment::Line { a, b } => {
                if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
                    return Err(GeomError::NonFinite("segment"));
                }
            }
            Segment::Arc {
                radius, start, end, ..
            } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(GeomError::InvalidSegment(format!("arc radius {radius}")));
                }
                let sweep = end - start;
                if !(sweep > 0.0 && sweep <= TAU + 1e-12) {
                    return Err(GeomError::InvalidSegment(format!(
                        "arc sweep {sweep} must lie in (0, 2π]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lines and arcs whose endpoints lie in a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSet {
    segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn new(window: &Window, segments: Vec<Segment>) -> Result<Self, GeomError> {
        for s in &segments {
            s.validate()?;
            let (e0, e1) = s.endpoints();
            for e in [e0, e1] {
                // endpoints computed from trigonometry may sit a rounding error outside
                let slack = 1e-12;
                let b = window.bounds();
                if e.x < b.x0 - slack || e.x > b.x1 + slack || e.y < b.y0 - slack || e.y > b.y1 + slack {
                    return Err(GeomError::PointOutsideWindow { x: e.x, y: e.y });
                }
            }
        }
        Ok(SegmentSet { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Anything a nearest distance can be measured to.
pub trait NearestDistance {
    /// `None` when the target set is empty.
    fn nearest_distance(&self, p: Point) -> Option<f64>;
}

impl NearestDistance for [Point] {
    #[inline]
    fn nearest_distance(&self, p: Point) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        for q in self {
            let d2 = p.dist2(*q);
            if d2 < best {
                best = d2;
            }
        }
        Some(best.sqrt())
    }
}

impl NearestDistance for Vec<Point> {
    fn nearest_distance(&self, p: Point) -> Option<f64> {
        self.as_slice().nearest_distance(p)
    }
}

impl NearestDistance for PointPattern {
    fn nearest_distance(&self, p: Point) -> Option<f64> {
        self.points.as_slice().nearest_distance(p)
    }
}

impl NearestDistance for SegmentSet {
    fn nearest_distance(&self, p: Point) -> Option<f64> {
        self.segments
            .iter()
            .map(|s| s.distance(p))
            .min_by(f64::total_cmp)
    }
}

/// Euclidean distance from `point` to the nearest element of `target`.
pub fn distance_to_set<T: NearestDistance + ?Sized>(point: Point, target: &T) -> Result<f64, GeomError> {
    target.nearest_distance(point).ok_or(GeomError::EmptyTarget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Window {
        Window::unit_square()
    }

    #[test]
    fn count_examples() {
        let w = unit();
        let p = PointPattern::new(w, 1, vec![Point::new(0.2, 0.2), Point::new(0.8, 0.8)]).unwrap();
        let b = Region::rect(w, 0.0, 0.0, 0.5, 0.5).unwrap();
        assert_eq!(count_in_region(&p, &b).unwrap(), 1);
        assert_eq!(count_in_region(&PointPattern::empty(w, 1), &b).unwrap(), 0);

        let pts: Vec<Point> = (0..7).map(|i| Point::new(i as f64 / 7.0, 1.0 - i as f64 / 7.0)).collect();
        let p = PointPattern::new(w, 1, pts).unwrap();
        assert_eq!(count_in_region(&p, &Region::whole(w)).unwrap(), 7);
    }

    #[test]
    fn window_corner_and_shared_edges() {
        let w = unit();
        let corner = PointPattern::new(w, 1, vec![Point::new(1.0, 1.0), Point::new(0.5, 0.5)]).unwrap();
        assert_eq!(count_in_region(&corner, &Region::whole(w)).unwrap(), 2);
        let left = Region::rect(w, 0.0, 0.0, 0.5, 1.0).unwrap();
        let right = Region::rect(w, 0.5, 0.0, 1.0, 1.0).unwrap();
        let n = count_in_region(&corner, &left).unwrap() + count_in_region(&corner, &right).unwrap();
        assert_eq!(n, 2);
    }

    #[test]
    fn region_outside_window_is_rejected() {
        let w = unit();
        assert!(Region::rect(w, 0.5, 0.5, 1.5, 1.0).is_err());
        let other = Window::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let big = Region::rect(other, 0.0, 0.0, 2.0, 2.0).unwrap();
        let p = PointPattern::empty(w, 1);
        assert!(matches!(count_in_region(&p, &big), Err(GeomError::RectOutsideWindow { .. })));
    }

    #[test]
    fn overlapping_rects_are_normalized() {
        let w = unit();
        let r = Region::new(w, &[Rect::new(0.0, 0.0, 0.6, 0.6), Rect::new(0.4, 0.4, 1.0, 1.0)]).unwrap();
        assert!((r.area() - (0.36 + 0.36 - 0.04)).abs() < 1e-12);
        for (i, a) in r.parts().iter().enumerate() {
            for b in &r.parts()[i + 1..] {
                let ox = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
                let oy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
                assert_eq!(ox * oy, 0.0);
            }
        }
        let p = PointPattern::new(w, 1, vec![Point::new(0.5, 0.5)]).unwrap();
        assert_eq!(count_in_region(&p, &r).unwrap(), 1);
    }

    #[test]
    fn degenerate_window() {
        assert!(Window::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Window::new(0.0, 0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn distance_examples() {
        let w = unit();
        let roads = SegmentSet::new(
            &w,
            vec![Segment::Line {
                a: Point::new(0.0, 0.0),
                b: Point::new(1.0, 0.0),
            }],
        )
        .unwrap();
        assert_eq!(distance_to_set(Point::new(0.5, 1.0), &roads).unwrap(), 1.0);
        let pts = vec![Point::new(0.3, 0.4)];
        assert_eq!(distance_to_set(Point::new(0.3, 0.4), &pts).unwrap(), 0.0);
        assert!((distance_to_set(Point::new(0.0, 0.0), &pts).unwrap() - 0.5).abs() < 1e-15);
        let empty: Vec<Point> = vec![];
        assert_eq!(distance_to_set(Point::new(0.0, 0.0), &empty), Err(GeomError::EmptyTarget));
    }

    #[test]
    fn arc_distance() {
        let arc = Segment::Arc {
            center: Point::new(0.5, 0.5),
            radius: 0.25,
            start: 0.0,
            end: std::f64::consts::PI,
        };
        // radially outside the upper half
        assert!((arc.distance(Point::new(0.5, 1.0)) - 0.25).abs() < 1e-12);
        // center is radius away
        assert!((arc.distance(Point::new(0.5, 0.5)) - 0.25).abs() < 1e-12);
        // below the arc: nearest is an endpoint (0.75,0.5) or (0.25,0.5)
        let d = arc.distance(Point::new(0.5, 0.25));
        assert!((d - (0.25f64 * 0.25 + 0.25 * 0.25).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn additivity_over_disjoint_regions(
            pts in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..40),
            cut in 0.05f64..0.95,
        ) {
            let w = unit();
            let p = PointPattern::new(w, 1, pts.into_iter().map(Point::from).collect()).unwrap();
            let a = Region::rect(w, 0.0, 0.0, cut, 1.0).unwrap();
            let b = Region::rect(w, cut, 0.0, 1.0, 1.0).unwrap();
            let ab = Region::new(w, &[a.parts()[0], b.parts()[0]]).unwrap();
            prop_assert_eq!(
                count_in_region(&p, &ab).unwrap(),
                count_in_region(&p, &a).unwrap() + count_in_region(&p, &b).unwrap()
            );
        }

        #[test]
        fn count_is_order_invariant(
            mut pts in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..30),
        ) {
            let w = unit();
            let r = Region::rect(w, 0.1, 0.2, 0.7, 0.9).unwrap();
            let p1 = PointPattern::new(w, 1, pts.iter().copied().map(Point::from).collect()).unwrap();
            pts.reverse();
            let p2 = PointPattern::new(w, 1, pts.into_iter().map(Point::from).collect()).unwrap();
            prop_assert_eq!(count_in_region(&p1, &r).unwrap(), count_in_region(&p2, &r).unwrap());
        }

        #[test]
        fn distance_is_one_lipschitz(
            ax in 0.0f64..1.0, ay in 0.0f64..1.0, bx in 0.0f64..1.0, by in 0.0f64..1.0,
            tx in 0.0f64..1.0, ty in 0.0f64..1.0,
        ) {
            let w = unit();
            let set = SegmentSet::new(&w, vec![
                Segment::Line { a: Point::new(0.1, 0.2), b: Point::new(0.9, 0.7) },
                Segment::Arc { center: Point::new(0.5, 0.5), radius: 0.3, start: 0.5, end: 2.5 },
            ]).unwrap();
            let pts = vec![Point::new(tx, ty), Point::new(0.2, 0.9)];
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let dab = a.dist(b) + 1e-12;
            prop_assert!((distance_to_set(a, &set).unwrap() - distance_to_set(b, &set).unwrap()).abs() <= dab);
            prop_assert!((distance_to_set(a, &pts).unwrap() - distance_to_set(b, &pts).unwrap()).abs() <= dab);
        }
    }
}
