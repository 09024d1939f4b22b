//! Domain Ω, its boundary curve ∂Ω and the stop set Σ.
//!
//! All types here are immutable once built and every query is pure, so a
//! [`Domain`] can be shared freely between worker threads.

mod curve;
mod stopset;

use serde::Serialize;

pub use curve::{BoundaryCurve, Orientation};
pub(crate) use curve::{polygon_contains, signed_area};
pub use stopset::{ArcProjection, NodeKind, SideClass, Side, StopArc, StopNode, StopSet};

use crate::error::Result;
use crate::{Point, Vec2};

/// Left normal `(-v.y, v.x)`.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[inline]
pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Closest point of segment `[a, b]` to `x`: `(t, point, squared distance)`.
pub(crate) fn project_segment(a: Point, b: Point, x: Point) -> (f64, Point, f64) {
    let d = b - a;
    let l2 = d.norm_squared();
    let t = if l2 > 0.0 {
        ((x - a).dot(&d) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p = a + t * d;
    (t, p, (x - p).norm_squared())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BBox {
    pub fn new(min: Point, max: Point) -> Self {
        BBox {
            min: [min.x, min.y],
            max: [max.x, max.y],
        }
    }

    pub fn around(points: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = -min;
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        BBox::new(min, max)
    }

    pub fn lo(&self) -> Point {
        Point::new(self.min[0], self.min[1])
    }

    pub fn hi(&self) -> Point {
        Point::new(self.max[0], self.max[1])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn contains(&self, x: Point) -> bool {
        x.x >= self.min[0] && x.x <= self.max[0] && x.y >= self.min[1] && x.y <= self.max[1]
    }

    pub fn expanded(&self, margin: f64) -> Self {
        BBox {
            min: [self.min[0] - margin, self.min[1] - margin],
            max: [self.max[0] + margin, self.max[1] + margin],
        }
    }
}

/// Nearest boundary point of a query, with its boundary parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub param: f64,
    pub point: Point,
    pub dist: f64,
}

/// What the solvers need from a region: membership, projection onto the
/// inflow boundary, and (optionally) the stop set.
pub trait Region: Send + Sync {
    /// Membership in the closure of the region.
    fn contains(&self, x: Point) -> bool;

    fn bbox(&self) -> BBox;

    fn project_to_boundary(&self, x: Point) -> BoundaryPoint;

    /// Boundary point with parameter `param`.
    fn boundary_position(&self, param: f64) -> Point;

    /// Parameter interval `[a, b)` of the boundary.
    fn boundary_period(&self) -> (f64, f64);

    /// `x` itself when inside, otherwise its nearest boundary point.
    fn clamp(&self, x: Point) -> Point {
        if self.contains(x) {
            x
        } else {
            self.project_to_boundary(x).point
        }
    }

    /// Lebesgue measure Λ²(Ω).
    fn area(&self) -> f64;

    fn stopset(&self) -> Option<&StopSet> {
        None
    }

    /// Corners of ∂Ω, where the boundary is only piecewise C¹.
    fn corners(&self) -> Vec<Point> {
        Vec::new()
    }

    fn as_domain(&self) -> Option<&Domain> {
        None
    }
}

/// Ω given by an outer boundary curve and an interior stop set.
#[derive(Clone, Debug)]
pub struct Domain {
    pub boundary: BoundaryCurve,
    pub stopset: StopSet,
    bbox: BBox,
}

impl Domain {
    pub fn new(boundary: BoundaryCurve, stopset: StopSet) -> Self {
        let bbox = boundary.bbox();
        Domain {
            boundary,
            stopset,
            bbox,
        }
    }

    /// Unit disk with Σ = origin.
    pub fn disk() -> Self {
        Domain::new(
            BoundaryCurve::circle(Point::zeros(), 1.0),
            StopSet::point(Point::zeros()),
        )
    }

    /// Unit disk with Σ = horizontal unit segment centred at the origin, n = (0, 1).
    pub fn disk_segment() -> Self {
        Domain::new(
            BoundaryCurve::circle(Point::zeros(), 1.0),
            StopSet::from_arcs(vec![StopArc::segment(
                Point::new(-0.5, 0.0),
                Point::new(0.5, 0.0),
            )]),
        )
    }

    /// Rectangle [-1, 1] × [-1/2, 1/2] with the medial segment [-1/2, 1/2] × {0}.
    pub fn rect_skeleton() -> Self {
        Domain::new(
            BoundaryCurve::rectangle(Point::new(-1.0, -0.5), Point::new(1.0, 0.5)),
            StopSet::from_arcs(vec![StopArc::segment(
                Point::new(-0.5, 0.0),
                Point::new(0.5, 0.0),
            )]),
        )
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "disk" => Some(Self::disk()),
            "disk-segment" => Some(Self::disk_segment()),
            "rect-skeleton" => Some(Self::rect_skeleton()),
            _ => None,
        }
    }

    pub fn classify_side(&self, x: Point) -> Result<SideClass> {
        self.stopset.classify_side(x)
    }
}

impl Region for Domain {
    fn contains(&self, x: Point) -> bool {
        self.boundary.contains(x)
    }

    fn bbox(&self) -> BBox {
        self.bbox
    }

    fn project_to_boundary(&self, x: Point) -> BoundaryPoint {
        self.boundary.project(x)
    }

    fn boundary_position(&self, param: f64) -> Point {
        self.boundary.position(param)
    }

    fn boundary_period(&self) -> (f64, f64) {
        self.boundary.period()
    }

    fn area(&self) -> f64 {
        self.boundary.area()
    }

    fn stopset(&self) -> Option<&StopSet> {
        Some(&self.stopset)
    }

    fn corners(&self) -> Vec<Point> {
        self.boundary.corners()
    }

    fn as_domain(&self) -> Option<&Domain> {
        Some(self)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationEntry {
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, check: &str) -> Option<&ValidationEntry> {
        self.entries.iter().find(|e| e.check == check)
    }
}

pub const CHECK_REGULARITY: &str = "boundary regularity";
pub const CHECK_SIMPLICITY: &str = "boundary simplicity";
pub const CHECK_CONTAINED: &str = "stop set compactly contained";
pub const CHECK_TREE: &str = "stop set tree";

/// Sample-based checks of the domain requirements. Failures are report
/// entries, never errors.
pub fn validate_domain(d: &Domain, n_samples: usize) -> ValidationReport {
    let n = n_samples.max(16);
    let samples = d.boundary.sample(n);
    let scale = d.bbox.width().max(d.bbox.height());
    let mut report = ValidationReport::default();

    let min_tangent = samples
        .iter()
        .map(|(s, _)| d.boundary.tangent(*s).norm())
        .fold(f64::INFINITY, f64::min);
    report.entries.push(ValidationEntry {
        check: CHECK_REGULARITY,
        passed: min_tangent > 1e-12 * scale,
        detail: format!("min |tangent| = {min_tangent:e}"),
    });

    let pts: Vec<Point> = samples.iter().map(|(_, p)| *p).collect();
    let crossing = first_self_intersection(&pts);
    report.entries.push(ValidationEntry {
        check: CHECK_SIMPLICITY,
        passed: crossing.is_none(),
        detail: match crossing {
            Some((i, j)) => format!("edges {i} and {j} intersect"),
            None => format!("{n} edges, no intersections"),
        },
    });

    let sigma = d.stopset.sample_points(scale / n as f64);
    let inside = sigma.iter().all(|p| d.boundary.contains(*p));
    let margin = sigma
        .iter()
        .map(|p| d.boundary.project(*p).dist)
        .fold(f64::INFINITY, f64::min);
    report.entries.push(ValidationEntry {
        check: CHECK_CONTAINED,
        passed: inside && margin > 1e-9 * scale,
        detail: format!("inside = {inside}, min dist(Σ, ∂Ω) = {margin:e}"),
    });

    let (components, arcs, nodes) = d.stopset.graph_counts();
    report.entries.push(ValidationEntry {
        check: CHECK_TREE,
        passed: d.stopset.is_tree(),
        detail: format!("{components} component(s), {arcs} arc(s), {nodes} node(s)"),
    });
    report
}

fn first_self_intersection(pts: &[Point]) -> Option<(usize, usize)> {
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, e) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a, b, c, e) {
                return Some((i, j));
            }
        }
    }
    None
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let cross = |o: Point, p: Point, q: Point| (p - o).perp(&(q - o));
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0
}
