//! Restrictions of the solution to level lines of T₀ and to the two sides of
//! Σ, and the restart from a level line.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_solution, solve_on_spec, BoundaryData, GridOptions, LinearProblem};
use crate::characteristics::{integrate_to_level, StepOptions};
use crate::error::{Error, Result};
use crate::geometry::{perp, polygon_contains, project_segment, signed_area, BBox, BoundaryPoint, Region, StopSet};
use crate::grid::{GridFunction, GridSpec};
use crate::timefield::{RescaledTime, TimeField, EPS_SIGMA};
use crate::Point;

/// Samples of u along the level line {T₀ = λ}, in boundary-parameter order.
#[derive(Clone, Debug, Serialize)]
pub struct LevelTrace {
    pub lambda: f64,
    pub boundary_params: Vec<f64>,
    #[serde(skip)]
    pub points: Vec<Point>,
    /// Cumulative arc length along the level line, starting at 0.
    pub arclength: Vec<f64>,
    pub values: Vec<f64>,
}

impl LevelTrace {
    /// Cyclic discrete variation Σ|vᵢ₊₁ − vᵢ|.
    pub fn variation(&self) -> f64 {
        let n = self.values.len();
        (0..n)
            .map(|i| (self.values[(i + 1) % n] - self.values[i]).abs())
            .sum()
    }
}

/// Follows `n` forward characteristics from equally spaced boundary
/// parameters up to time λ and records u there.
pub fn trace_on_level(p: &LinearProblem, lambda: f64, n: usize, opts: &StepOptions) -> Result<LevelTrace> {
    if !(0.05..=1.0 - EPS_SIGMA - 0.05).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("level {lambda} outside [0.05, 0.95 − ε_Σ]")));
    }
    let (a, b) = p.region().boundary_period();
    let params: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let samples: Vec<(Point, f64)> = params
        .par_iter()
        .map(|&s| {
            let start = p.region().boundary_position(s);
            let tr = integrate_to_level(&p.sf, start, lambda, opts).map_err(|_| Error::LevelNotFound(lambda))?;
            Ok((tr.endpoint, p.u0.eval(s) + p.source_integral(&tr)?))
        })
        .collect::<Result<_>>()?;
    let points: Vec<Point> = samples.iter().map(|s| s.0).collect();
    let mut arclength = vec![0.0];
    for w in points.windows(2) {
        arclength.push(arclength.last().unwrap() + (w[1] - w[0]).norm());
    }
    Ok(LevelTrace {
        lambda,
        boundary_params: params,
        points,
        arclength,
        values: samples.iter().map(|s| s.1).collect(),
    })
}

/// The part of Ω above a sampled level line. Boundary parameters are vertex
/// indices, so indexed boundary data is piecewise constant per vertex.
#[derive(Clone, Debug)]
pub struct LevelRegion {
    vertices: Vec<Point>,
    bbox: BBox,
    area: f64,
    stopset: Option<StopSet>,
}

impl LevelRegion {
    pub fn new(vertices: Vec<Point>, stopset: Option<StopSet>) -> Self {
        assert!(vertices.len() >= 3);
        let bbox = BBox::around(&vertices);
        let area = signed_area(&vertices).abs();
        LevelRegion {
            vertices,
            bbox,
            area,
            stopset,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
}

impl Region for LevelRegion {
    fn contains(&self, x: Point) -> bool {
        self.bbox.contains(x) && polygon_contains(&self.vertices, x)
    }

    fn bbox(&self) -> BBox {
        self.bbox
    }

    fn project_to_boundary(&self, x: Point) -> BoundaryPoint {
        let n = self.vertices.len();
        let mut best = (f64::INFINITY, 0.0, Point::zeros());
        for i in 0..n {
            let (t, p, d2) = project_segment(self.vertices[i], self.vertices[(i + 1) % n], x);
            if d2 < best.0 {
                let vertex = if t < 0.5 { i } else { (i + 1) % n };
                best = (d2, vertex as f64, p);
            }
        }
        BoundaryPoint {
            param: best.1,
            point: best.2,
            dist: best.0.sqrt(),
        }
    }

    fn boundary_position(&self, param: f64) -> Point {
        let n = self.vertices.len() as i64;
        self.vertices[(param.round() as i64).rem_euclid(n) as usize]
    }

    fn boundary_period(&self) -> (f64, f64) {
        (0.0, self.vertices.len() as f64)
    }

    fn area(&self) -> f64 {
        self.area
    }

    fn stopset(&self) -> Option<&StopSet> {
        self.stopset.as_ref()
    }
}

/// The problem on {T₀ > λ} with the level trace as boundary data and time
/// function (T − λ_T)/(1 − λ_T), λ_T = 1 − (1 − λ)^q; its T₀ is
/// 1 − (1 − T₀)/(1 − λ), so m₀ scales by 1/(1 − λ).
pub fn restart_problem(p: &LinearProblem, trace: &LevelTrace) -> Result<LinearProblem> {
    let lambda = trace.lambda;
    let level_t = p.tf().t_level_of(lambda);
    let map = RescaledTime {
        inner: p.tf().map().clone(),
        level: level_t,
    };
    let mut tf = TimeField::new(Arc::new(map), p.tf().q(), p.tf().source());
    if let Some(m0) = p.tf().m0() {
        tf = tf.with_m0(m0 / (1.0 - lambda));
    }
    let region = LevelRegion::new(trace.points.clone(), p.region().stopset().cloned());
    Ok(LinearProblem::new(
        Arc::new(region),
        tf,
        p.c().clone(),
        p.f.clone(),
        BoundaryData::indexed(trace.values.clone()),
    ))
}

/// Solves the restarted problem on `spec`; cells below the level are outside.
pub fn restart_solve(p: &LinearProblem, trace: &LevelTrace, spec: GridSpec, opts: &GridOptions) -> Result<GridFunction> {
    Ok(solve_on_spec(&restart_problem(p, trace)?, spec, opts))
}

/// One-sided limits of u on an arc of Σ.
#[derive(Clone, Debug, Serialize)]
pub struct StopTraces {
    pub arc: usize,
    pub arc_length: f64,
    /// Arc-length parameters of the sample points.
    pub params: Vec<f64>,
    #[serde(skip)]
    pub points: Vec<Point>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub delta: f64,
    pub exclusion: f64,
}

/// Normal offset δ as a fraction of the arc length.
const TRACE_OFFSET: f64 = 1e-3;
/// Node-exclusion radius as a fraction of the arc length.
const NODE_EXCLUSION: f64 = 1e-2;

fn arc_scales(p: &LinearProblem, k: usize) -> Result<(&StopSet, f64, f64, f64)> {
    let sigma = p.region().stopset().ok_or(Error::NoSuchArc(k))?;
    let arc = sigma.arcs().get(k).ok_or(Error::NoSuchArc(k))?;
    let len = arc.length();
    Ok((sigma, len, TRACE_OFFSET * len, NODE_EXCLUSION * len))
}

fn one_sided(p: &LinearProblem, z: Point, n: crate::Vec2, delta: f64, opts: &StepOptions) -> Result<(f64, f64)> {
    let u = |d: f64| evaluate_solution(p, z + n * d, opts);
    // First-order Richardson: u(0) ≈ 2u(δ/2) − u(δ).
    let plus = 2.0 * u(0.5 * delta)? - u(delta)?;
    let minus = 2.0 * u(-0.5 * delta)? - u(-delta)?;
    Ok((plus, minus))
}

/// `(u⁺, u⁻)` at arc-length parameter `t` of arc `k`.
pub fn stopset_trace_at(p: &LinearProblem, k: usize, t: f64, opts: &StepOptions) -> Result<(f64, f64)> {
    let (sigma, len, delta, exclusion) = arc_scales(p, k)?;
    let arc = &sigma.arcs()[k];
    let z = arc.point_at(t);
    let node_dist = sigma
        .node_points()
        .iter()
        .map(|q| (q - z).norm())
        .fold(f64::INFINITY, f64::min);
    if node_dist < exclusion || !(0.0..=len).contains(&t) {
        return Err(Error::NodeProximity(node_dist));
    }
    one_sided(p, z, arc.normal_at(t), delta, opts)
}

/// `n` samples of both one-sided traces on arc `k`, equally spaced over the
/// arc minus the node-exclusion zones at its ends.
pub fn traces_on_stopset(p: &LinearProblem, k: usize, n: usize, opts: &StepOptions) -> Result<StopTraces> {
    let (sigma, len, delta, exclusion) = arc_scales(p, k)?;
    let arc = &sigma.arcs()[k];
    let params: Vec<f64> = (0..n)
        .map(|i| exclusion + (len - 2.0 * exclusion) * (i as f64 + 0.5) / n as f64)
        .collect();
    let vals: Vec<(f64, f64)> = params
        .par_iter()
        .map(|&t| one_sided(p, arc.point_at(t), arc.normal_at(t), delta, opts))
        .collect::<Result<_>>()?;
    Ok(StopTraces {
        arc: k,
        arc_length: len,
        points: params.iter().map(|&t| arc.point_at(t)).collect(),
        params,
        plus: vals.iter().map(|v| v.0).collect(),
        minus: vals.iter().map(|v| v.1).collect(),
        delta,
        exclusion,
    })
}

/// Mean of |u − u₀(s)| over half-disks of the given radii centred at the
/// boundary point with parameter `s`, on an `n × n` polar raster.
pub fn boundary_trace_decay(p: &LinearProblem, s: f64, radii: &[f64], n: usize, opts: &StepOptions) -> Result<Vec<f64>> {
    let z = p.region().boundary_position(s);
    let inward = p
        .tf()
        .normal(z)
        .ok_or(Error::DegenerateField { at: z, value: 0.0 })?;
    let tangent = perp(inward);
    let target = p.u0.eval(s);
    radii
        .iter()
        .map(|&r| {
            let (mut sum, mut weight) = (0.0, 0.0);
            for i in 0..n {
                let rho = r * (i as f64 + 0.5) / n as f64;
                for j in 0..n {
                    let phi = std::f64::consts::PI * ((j as f64 + 0.5) / n as f64 - 0.5);
                    let x = z + (inward * phi.cos() + tangent * phi.sin()) * rho;
                    if !p.region().contains(x) {
                        continue;
                    }
                    let u = evaluate_solution(p, x, opts)?;
                    sum += (u - target).abs() * rho;
                    weight += rho;
                }
            }
            Ok(if weight > 0.0 { sum / weight } else { 0.0 })
        })
        .collect()
}
