use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::{project_segment, BBox, BoundaryPoint};
use crate::{Point, Vec2};

/// Dense sampling used for parametric curves (projection brackets, area, bbox).
const PARAMETRIC_SAMPLES: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Clockwise,
    CounterClockwise,
}

impl Orientation {
    /// +1 for clockwise, -1 for counter-clockwise. Multiplying `det Dξ` by this
    /// sign yields the quantity that is positive for an admissible field.
    pub fn det_sign(self) -> f64 {
        match self {
            Orientation::Clockwise => 1.0,
            Orientation::CounterClockwise => -1.0,
        }
    }
}

type CurveFn = Arc<dyn Fn(f64) -> Point + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Circle {
        center: Point,
        radius: f64,
    },
    /// Closed polygon parametrized by arc length; `cumulative[i]` is the
    /// parameter of `vertices[i]`, the last entry is the perimeter.
    Polygon {
        vertices: Vec<Point>,
        cumulative: Vec<f64>,
    },
    Parametric {
        position: CurveFn,
        tangent: CurveFn,
        samples: Vec<Point>,
    },
}

/// Closed, periodic, regular parametrization of the outer boundary.
#[derive(Clone)]
pub struct BoundaryCurve {
    shape: Shape,
    period: (f64, f64),
    orientation: Orientation,
}

impl fmt::Debug for BoundaryCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.shape {
            Shape::Circle { .. } => "circle",
            Shape::Polygon { .. } => "polygon",
            Shape::Parametric { .. } => "parametric",
        };
        f.debug_struct("BoundaryCurve")
            .field("kind", &kind)
            .field("period", &self.period)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl BoundaryCurve {
    /// Counter-clockwise circle, `position(s) = center + r (cos s, sin s)`.
    pub fn circle(center: Point, radius: f64) -> Self {
        BoundaryCurve {
            shape: Shape::Circle { center, radius },
            period: (0.0, TAU),
            orientation: Orientation::CounterClockwise,
        }
    }

    /// Closed polygon through `vertices` (the closing edge is implicit),
    /// parametrized by arc length starting at `vertices[0]`.
    pub fn polygon(vertices: Vec<Point>) -> Self {
        assert!(vertices.len() >= 3, "polygon needs at least three vertices");
        let mut cumulative = Vec::with_capacity(vertices.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..vertices.len() {
            let j = (i + 1) % vertices.len();
            acc += (vertices[j] - vertices[i]).norm();
            cumulative.push(acc);
        }
        let orientation = orientation_of(&vertices);
        BoundaryCurve {
            shape: Shape::Polygon {
                vertices,
                cumulative,
            },
            period: (0.0, acc),
            orientation,
        }
    }

    /// Axis-aligned rectangle, traversed counter-clockwise from its lower-left corner.
    pub fn rectangle(min: Point, max: Point) -> Self {
        Self::polygon(vec![
            min,
            Point::new(max.x, min.y),
            max,
            Point::new(min.x, max.y),
        ])
    }

    /// General closure-based curve with period `[a, b)`.
    pub fn parametric<P, T>(period: (f64, f64), position: P, tangent: T) -> Self
    where
        P: Fn(f64) -> Point + Send + Sync + 'static,
        T: Fn(f64) -> Vec2 + Send + Sync + 'static,
    {
        let (a, b) = period;
        let samples: Vec<Point> = (0..PARAMETRIC_SAMPLES)
            .map(|i| position(a + (b - a) * i as f64 / PARAMETRIC_SAMPLES as f64))
            .collect();
        let orientation = orientation_of(&samples);
        BoundaryCurve {
            shape: Shape::Parametric {
                position: Arc::new(position),
                tangent: Arc::new(tangent),
                samples,
            },
            period,
            orientation,
        }
    }

    pub fn period(&self) -> (f64, f64) {
        self.period
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Maps any real parameter into the generator interval `[a, b)`.
    pub fn wrap(&self, s: f64) -> f64 {
        let (a, b) = self.period;
        let w = b - a;
        let r = (s - a).rem_euclid(w);
        if r >= w {
            a
        } else {
            a + r
        }
    }

    pub fn position(&self, s: f64) -> Point {
        let s = self.wrap(s);
        match &self.shape {
            Shape::Circle { center, radius } => center + *radius * Vec2::new(s.cos(), s.sin()),
            Shape::Polygon {
                vertices,
                cumulative,
            } => {
                let i = segment_index(cumulative, s);
                let j = (i + 1) % vertices.len();
                let len = cumulative[i + 1] - cumulative[i];
                let t = if len > 0.0 { (s - cumulative[i]) / len } else { 0.0 };
                vertices[i] + t * (vertices[j] - vertices[i])
            }
            Shape::Parametric { position, .. } => position(s),
        }
    }

    pub fn tangent(&self, s: f64) -> Vec2 {
        let s = self.wrap(s);
        match &self.shape {
            Shape::Circle { radius, .. } => *radius * Vec2::new(-s.sin(), s.cos()),
            Shape::Polygon {
                vertices,
                cumulative,
            } => {
                let i = segment_index(cumulative, s);
                let j = (i + 1) % vertices.len();
                (vertices[j] - vertices[i]).normalize()
            }
            Shape::Parametric { tangent, .. } => tangent(s),
        }
    }

    /// Nearest boundary point of `x`.
    pub fn project(&self, x: Point) -> BoundaryPoint {
        match &self.shape {
            Shape::Circle { center, radius } => {
                let d = x - center;
                let r = d.norm();
                let s = if r == 0.0 { 0.0 } else { self.wrap(d.y.atan2(d.x)) };
                let point = self.position(s);
                BoundaryPoint {
                    param: s,
                    point,
                    dist: (r - radius).abs(),
                }
            }
            Shape::Polygon {
                vertices,
                cumulative,
            } => {
                let n = vertices.len();
                let mut best = (f64::INFINITY, 0.0, Point::zeros());
                for i in 0..n {
                    let (t, p, d2) = project_segment(vertices[i], vertices[(i + 1) % n], x);
                    if d2 < best.0 {
                        let s = cumulative[i] + t * (cumulative[i + 1] - cumulative[i]);
                        best = (d2, s, p);
                    }
                }
                BoundaryPoint {
                    param: self.wrap(best.1),
                    point: best.2,
                    dist: best.0.sqrt(),
                }
            }
            Shape::Parametric {
                position,
                tangent,
                samples,
            } => {
                let (a, b) = self.period;
                let ds = (b - a) / samples.len() as f64;
                let (i, _) = samples
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, (p - x).norm_squared()))
                    .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
                let centre = a + ds * i as f64;
                let s = golden_min(centre - ds, centre + ds, |s| (position(s) - x).norm_squared());
                let s = self.wrap(polish_foot(s, ds, |s| (position(s) - x).dot(&tangent(s))));
                let point = position(s);
                BoundaryPoint {
                    param: s,
                    point,
                    dist: (point - x).norm(),
                }
            }
        }
    }

    /// Closed polyline through `n` equally spaced parameters.
    pub fn sample(&self, n: usize) -> Vec<(f64, Point)> {
        let (a, b) = self.period;
        (0..n)
            .map(|i| {
                let s = a + (b - a) * i as f64 / n as f64;
                (s, self.position(s))
            })
            .collect()
    }

    pub fn contains(&self, x: Point) -> bool {
        match &self.shape {
            Shape::Circle { center, radius } => (x - center).norm() <= *radius,
            Shape::Polygon { vertices, .. } => polygon_contains(vertices, x),
            Shape::Parametric { samples, .. } => polygon_contains(samples, x),
        }
    }

    pub fn length(&self) -> f64 {
        match &self.shape {
            Shape::Circle { radius, .. } => TAU * radius,
            Shape::Polygon { .. } => self.period.1 - self.period.0,
            Shape::Parametric { samples, .. } => polyline_length(samples, true),
        }
    }

    /// Enclosed area.
    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Circle { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Polygon { vertices, .. } => signed_area(vertices).abs(),
            Shape::Parametric { samples, .. } => signed_area(samples).abs(),
        }
    }

    /// Vertices of a polygon; smooth curves have none.
    pub fn corners(&self) -> Vec<Point> {
        match &self.shape {
            Shape::Polygon { vertices, .. } => vertices.clone(),
            _ => Vec::new(),
        }
    }

    pub fn bbox(&self) -> BBox {
        match &self.shape {
            Shape::Circle { center, radius } => BBox::new(
                center - Vec2::new(*radius, *radius),
                center + Vec2::new(*radius, *radius),
            ),
            Shape::Polygon { vertices, .. } => BBox::around(vertices),
            Shape::Parametric { samples, .. } => BBox::around(samples),
        }
    }
}

fn segment_index(cumulative: &[f64], s: f64) -> usize {
    let n = cumulative.len() - 1;
    match cumulative.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => i.min(n - 1),
        Err(i) => (i.max(1) - 1).min(n - 1),
    }
}

/// Secant refinement of a root of `g` near `s`, kept only while it stays
/// within `radius` of the start.
fn polish_foot(s: f64, radius: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (mut s0, mut s1) = (s, s + 1e-7 * radius.max(1e-300));
    let (mut g0, mut g1) = (g(s0), g(s1));
    for _ in 0..8 {
        if g1 == g0 {
            break;
        }
        let s2 = s1 - g1 * (s1 - s0) / (g1 - g0);
        if !s2.is_finite() || (s2 - s).abs() > radius {
            return s;
        }
        (s0, g0, s1) = (s1, g1, s2);
        g1 = g(s1);
        if g1 == 0.0 || (s1 - s0).abs() < 1e-16 {
            break;
        }
    }
    s1
}

fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
        * 0.5
}

fn orientation_of(pts: &[Point]) -> Orientation {
    if signed_area(pts) >= 0.0 {
        Orientation::CounterClockwise
    } else {
        Orientation::Clockwise
    }
}

pub(crate) fn polyline_length(pts: &[Point], closed: bool) -> f64 {
    let mut len: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if closed && pts.len() > 1 {
        len += (pts[0] - pts[pts.len() - 1]).norm();
    }
    len
}

/// Even-odd crossing test.
pub(crate) fn polygon_contains(pts: &[Point], x: Point) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (pts[i], pts[j]);
        if (pi.y > x.y) != (pj.y > x.y) {
            let xc = pj.x + (x.y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
            if x.x < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
