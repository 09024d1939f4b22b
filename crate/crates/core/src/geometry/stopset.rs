use petgraph::unionfind::UnionFind;
use serde::Serialize;

use super::{perp, project_segment};
use crate::error::{Error, Result};
use crate::{Point, Vec2};

/// Endpoints closer than this are merged into one node.
const NODE_MERGE_TOL: f64 = 1e-9;

/// Which side of an oriented arc a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Terminal,
    Branching,
    Kink,
}

#[derive(Clone, Debug, Serialize)]
pub struct StopNode {
    pub point: [f64; 2],
    pub kind: NodeKind,
    pub degree: usize,
}

/// One C¹ arc of the stop set, stored as a polyline. The unit normal is the
/// left normal of the polyline direction, multiplied by `normal_sign`.
#[derive(Clone, Debug)]
pub struct StopArc {
    points: Vec<Point>,
    cumulative: Vec<f64>,
    normal_sign: f64,
}

impl StopArc {
    pub fn polyline(points: Vec<Point>, normal_sign: f64) -> Self {
        assert!(points.len() >= 2, "arc needs at least two points");
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        StopArc {
            points,
            cumulative,
            normal_sign: normal_sign.signum(),
        }
    }

    pub fn segment(a: Point, b: Point) -> Self {
        Self::polyline(vec![a, b], 1.0)
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        *self.points.last().unwrap()
    }

    fn segment_at(&self, t: f64) -> usize {
        let n = self.points.len() - 1;
        let mut i = match self.cumulative.binary_search_by(|c| c.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.max(1) - 1,
        };
        if i >= n {
            i = n - 1;
        }
        i
    }

    /// Point at arc-length parameter `t ∈ [0, length]`.
    pub fn point_at(&self, t: f64) -> Point {
        let i = self.segment_at(t);
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let u = if len > 0.0 {
            ((t - self.cumulative[i]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.points[i] + u * (self.points[i + 1] - self.points[i])
    }

    /// Unit normal at arc-length parameter `t`.
    pub fn normal_at(&self, t: f64) -> Vec2 {
        let i = self.segment_at(t);
        self.normal_sign * perp(self.points[i + 1] - self.points[i]).normalize()
    }

    /// Nearest point on the arc.
    pub fn project(&self, x: Point) -> ArcProjection {
        let mut best = (f64::INFINITY, 0.0, Point::zeros(), 0usize);
        for i in 0..self.points.len() - 1 {
            let (u, p, d2) = project_segment(self.points[i], self.points[i + 1], x);
            if d2 < best.0 {
                let t = self.cumulative[i] + u * (self.cumulative[i + 1] - self.cumulative[i]);
                best = (d2, t, p, i);
            }
        }
        ArcProjection {
            param: best.1,
            point: best.2,
            dist: best.0.sqrt(),
            normal: self.normal_sign
                * perp(self.points[best.3 + 1] - self.points[best.3]).normalize(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ArcProjection {
    /// Arc-length parameter of the projection.
    pub param: f64,
    pub point: Point,
    pub dist: f64,
    pub normal: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SideClass {
    pub arc: usize,
    pub side: Side,
    pub dist: f64,
}

/// Interior outflow set: a single point or a tree of arcs.
#[derive(Clone, Debug)]
pub struct StopSet {
    arcs: Vec<StopArc>,
    nodes: Vec<StopNode>,
    point: Option<Point>,
    tube_fraction: f64,
}

impl StopSet {
    /// Degenerate stop set consisting of one isolated point.
    pub fn point(p: Point) -> Self {
        StopSet {
            arcs: Vec::new(),
            nodes: vec![StopNode {
                point: [p.x, p.y],
                kind: NodeKind::Terminal,
                degree: 0,
            }],
            point: Some(p),
            tube_fraction: 0.1,
        }
    }

    pub fn from_arcs(arcs: Vec<StopArc>) -> Self {
        assert!(!arcs.is_empty(), "use StopSet::point for a degenerate stop set");
        let (node_points, ends) = merge_endpoints(&arcs);
        let mut degree = vec![0usize; node_points.len()];
        for &(a, b) in &ends {
            degree[a] += 1;
            degree[b] += 1;
        }
        let nodes = node_points
            .iter()
            .zip(&degree)
            .map(|(p, &d)| StopNode {
                point: [p.x, p.y],
                kind: match d {
                    1 => NodeKind::Terminal,
                    2 => NodeKind::Kink,
                    _ => NodeKind::Branching,
                },
                degree: d,
            })
            .collect();
        StopSet {
            arcs,
            nodes,
            point: None,
            tube_fraction: 0.1,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.point.is_some()
    }

    pub fn arcs(&self) -> &[StopArc] {
        &self.arcs
    }

    pub fn nodes(&self) -> &[StopNode] {
        &self.nodes
    }

    pub fn node_points(&self) -> Vec<Point> {
        self.nodes
            .iter()
            .map(|n| Point::new(n.point[0], n.point[1]))
            .collect()
    }

    /// H¹ measure.
    pub fn length(&self) -> f64 {
        self.arcs.iter().map(StopArc::length).fold(0.0, |a, b| a + b)
    }

    /// Side-classification tube radius of arc `k`: a fixed fraction of the
    /// distance between its end nodes.
    pub fn tube_radius(&self, k: usize) -> f64 {
        let a = &self.arcs[k];
        self.tube_fraction * (a.end() - a.start()).norm()
    }

    /// Distance to Σ together with the nearest point.
    pub fn nearest(&self, x: Point) -> (f64, Point) {
        if let Some(p) = self.point {
            return ((x - p).norm(), p);
        }
        self.arcs
            .iter()
            .map(|a| a.project(x))
            .fold((f64::INFINITY, Point::zeros()), |acc, pr| {
                if pr.dist < acc.0 {
                    (pr.dist, pr.point)
                } else {
                    acc
                }
            })
    }

    pub fn distance(&self, x: Point) -> f64 {
        self.nearest(x).0
    }

    /// Points sampled along all arcs (or the isolated point), spacing ≤ `h`.
    pub fn sample_points(&self, h: f64) -> Vec<Point> {
        if let Some(p) = self.point {
            return vec![p];
        }
        let mut out = Vec::new();
        for a in &self.arcs {
            let n = ((a.length() / h).ceil() as usize).max(1);
            out.extend((0..=n).map(|i| a.point_at(a.length() * i as f64 / n as f64)));
        }
        out
    }

    /// Which arc and which side of it `x` belongs to.
    pub fn classify_side(&self, x: Point) -> Result<SideClass> {
        if self.point.is_some() {
            return Err(Error::AmbiguousProjection(x));
        }
        let projections: Vec<ArcProjection> = self.arcs.iter().map(|a| a.project(x)).collect();
        let (k, best) = projections
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist.total_cmp(&b.1.dist))
            .map(|(k, p)| (k, *p))
            .unwrap();
        let scale = self.arcs[k].length().max(1e-300);
        let tol = 1e-12 * scale;
        if best.dist <= tol {
            return Err(Error::AmbiguousProjection(x));
        }
        // Projection onto a node, or equidistant to two arcs.
        if best.param <= tol || best.param >= self.arcs[k].length() - tol {
            return Err(Error::AmbiguousProjection(x));
        }
        if projections
            .iter()
            .enumerate()
            .any(|(j, p)| j != k && (p.dist - best.dist).abs() <= 1e-9 * scale)
        {
            return Err(Error::AmbiguousProjection(x));
        }
        let radius = self.tube_radius(k);
        if best.dist > radius * (1.0 + 1e-12) {
            return Err(Error::OutsideTube { point: x, radius });
        }
        let side = if (x - best.point).dot(&best.normal) >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        };
        Ok(SideClass {
            arc: k,
            side,
            dist: best.dist,
        })
    }

    /// `(components, arcs, nodes)` of the arc graph.
    pub fn graph_counts(&self) -> (usize, usize, usize) {
        if self.point.is_some() {
            return (1, 0, 1);
        }
        let (node_points, ends) = merge_endpoints(&self.arcs);
        let mut uf = UnionFind::new(node_points.len());
        for &(a, b) in &ends {
            uf.union(a, b);
        }
        let mut labels = uf.into_labeling();
        labels.sort_unstable();
        labels.dedup();
        (labels.len(), self.arcs.len(), node_points.len())
    }

    /// Connected and free of loops: nodes − arcs = components = 1.
    pub fn is_tree(&self) -> bool {
        let (components, arcs, nodes) = self.graph_counts();
        components == 1 && nodes == arcs + 1
    }
}

fn merge_endpoints(arcs: &[StopArc]) -> (Vec<Point>, Vec<(usize, usize)>) {
    let mut nodes: Vec<Point> = Vec::new();
    let mut id = |p: Point| -> usize {
        if let Some(i) = nodes.iter().position(|q| (q - p).norm() <= NODE_MERGE_TOL) {
            i
        } else {
            nodes.push(p);
            nodes.len() - 1
        }
    };
    let ends = arcs.iter().map(|a| (id(a.start()), id(a.end()))).collect();
    (nodes, ends)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn segment_set() -> StopSet {
        StopSet::from_arcs(vec![StopArc::segment(
            Point::new(-0.5, 0.0),
            Point::new(0.5, 0.0),
        )])
    }

    #[test]
    fn side_of_horizontal_segment() {
        let s = segment_set();
        let c = s.classify_side(Point::new(0.0, 0.1)).unwrap();
        assert_eq!((c.arc, c.side), (0, Side::Plus));
        assert_abs_diff_eq!(c.dist, 0.1, epsilon = 1e-15);
        let c = s.classify_side(Point::new(0.0, -0.1)).unwrap();
        assert_eq!((c.arc, c.side), (0, Side::Minus));
        assert_abs_diff_eq!(c.dist, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn projection_onto_terminal_node_is_ambiguous() {
        let s = segment_set();
        assert!(matches!(
            s.classify_side(Point::new(0.6, 0.0)),
            Err(Error::AmbiguousProjection(_))
        ));
    }

    #[test]
    fn outside_tube_is_refused() {
        let s = segment_set();
        assert!(matches!(
            s.classify_side(Point::new(0.0, 0.3)),
            Err(Error::OutsideTube { .. })
        ));
    }

    #[test]
    fn node_kinds_and_tree_check() {
        let y = StopSet::from_arcs(vec![
            StopArc::segment(Point::new(0.0, 0.0), Point::new(0.3, 0.0)),
            StopArc::segment(Point::new(0.0, 0.0), Point::new(-0.2, 0.2)),
            StopArc::segment(Point::new(0.0, 0.0), Point::new(-0.2, -0.2)),
        ]);
        assert!(y.is_tree());
        let kinds: Vec<NodeKind> = y.nodes().iter().map(|n| n.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == NodeKind::Branching).count(), 1);
        assert_eq!(kinds.iter().filter(|k| **k == NodeKind::Terminal).count(), 3);

        let triangle = StopSet::from_arcs(vec![
            StopArc::segment(Point::new(0.0, 0.0), Point::new(0.3, 0.0)),
            StopArc::segment(Point::new(0.3, 0.0), Point::new(0.0, 0.3)),
            StopArc::segment(Point::new(0.0, 0.3), Point::new(0.0, 0.0)),
        ]);
        assert!(!triangle.is_tree());
        assert_eq!(triangle.graph_counts(), (1, 3, 3));
    }

    #[test]
    fn degenerate_point() {
        let s = StopSet::point(Point::zeros());
        assert!(s.is_degenerate());
        assert!(s.is_tree());
        assert_eq!(s.length(), 0.0);
        assert_abs_diff_eq!(s.distance(Point::new(3.0, 4.0)), 5.0);
    }
}
