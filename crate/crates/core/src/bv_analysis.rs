//! Discrete total variation and the a-priori L∞ and TV bounds of the
//! explicit solution.

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::grid::{GridFunction, GridSpec};
use crate::linear_solver::{LinearProblem, StopTraces};
use crate::timefield::{TimeField, TransportField};
use crate::{Point, Vec2};

/// Anisotropic TV: Σ |Δu|·h over horizontally and vertically adjacent
/// domain cells.
pub fn discrete_tv(g: &GridFunction) -> f64 {
    let s = &g.spec;
    let mut sum = 0.0;
    for iy in 0..s.ny {
        for ix in 0..s.nx {
            let i = s.index(ix, iy);
            if !g.mask[i].in_domain() {
                continue;
            }
            if ix + 1 < s.nx && g.mask[i + 1].in_domain() {
                sum += (g.values[i + 1] - g.values[i]).abs();
            }
            if iy + 1 < s.ny && g.mask[i + s.nx].in_domain() {
                sum += (g.values[i + s.nx] - g.values[i]).abs();
            }
        }
    }
    sum * s.spacing
}

/// Sampled ‖Dc‖_{L¹} and ‖DN‖_{L¹} (Frobenius norm of the Jacobians).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AuxNorms {
    pub dc_l1: f64,
    pub dn_l1: f64,
    pub spacing: f64,
    pub node_radius: f64,
    pub cells_used: usize,
    pub cells_excluded: usize,
}

/// Node-exclusion radius in units of the spacing.
pub const NODE_RADIUS_CELLS: f64 = 4.0;

/// Finite-difference quadrature of |Dc| and |DN| over Ω, leaving out disks of
/// radius 4h around Σ nodes and cells whose stencil reaches Σ.
pub fn aux_norms(region: &dyn Region, tf: &TimeField, c: &TransportField, resolution: usize) -> Result<AuxNorms> {
    let spec = GridSpec::covering(&region.bbox(), resolution);
    let h = spec.spacing;
    let node_radius = NODE_RADIUS_CELLS * h;
    let nodes: Vec<Point> = region.stopset().map(|s| s.node_points()).unwrap_or_default();
    let sigma = region.stopset();
    let (mut dc, mut dn, mut used, mut excluded) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..spec.len() {
        let x = spec.center_of(i);
        if !region.contains(x) {
            continue;
        }
        let near_node = nodes.iter().any(|q| (q - x).norm() < node_radius);
        let near_sigma = sigma.is_some_and(|s| s.distance(x) < h);
        if near_node || near_sigma {
            excluded += 1;
            continue;
        }
        let jc = jacobian(region, x, h, |y| Some(c.at(y)));
        let jn = jacobian(region, x, h, |y| tf.normal(y));
        match (jc, jn) {
            (Some(a), Some(b)) => {
                dc += a.norm();
                dn += b.norm();
                used += 1;
            }
            _ => excluded += 1,
        }
    }
    if used == 0 {
        return Err(Error::MissingAux("no cells available for ‖Dc‖, ‖DN‖ quadrature"));
    }
    let area = h * h;
    Ok(AuxNorms {
        dc_l1: dc * area,
        dn_l1: dn * area,
        spacing: h,
        node_radius,
        cells_used: used,
        cells_excluded: excluded,
    })
}

/// Central differences, one-sided where a stencil point leaves the region.
fn jacobian(region: &dyn Region, x: Point, h: f64, f: impl Fn(Point) -> Option<Vec2>) -> Option<Matrix2<f64>> {
    let fx = f(x)?;
    let mut cols = [Vec2::zeros(); 2];
    for (k, e) in [Vec2::new(h, 0.0), Vec2::new(0.0, h)].into_iter().enumerate() {
        let (p, m) = (x + e, x - e);
        let (ip, im) = (region.contains(p), region.contains(m));
        cols[k] = match (ip, im) {
            (true, true) => (f(p)? - f(m)?) / (2.0 * h),
            (true, false) => (f(p)? - fx) / h,
            (false, true) => (fx - f(m)?) / h,
            (false, false) => return None,
        };
    }
    Some(Matrix2::from_columns(&cols))
}

/// |Du₀|(∂Ω)/(β·m₀) + (‖f‖∞/β + ‖∇f‖∞/(β²·m₀))·Λ²(Ω) + ‖f‖∞/(β³·m₀)·(‖Dc‖_{L¹} + ‖DN‖_{L¹}).
pub fn tv_bound_interior(p: &LinearProblem, aux: Option<&AuxNorms>) -> Result<f64> {
    let (beta, m0) = (p.beta(), p.m0()?);
    let fs = p.f.sup();
    let mut bound = p.u0.variation() / (beta * m0) + (fs / beta + p.f.grad_sup() / (beta * beta * m0)) * p.region().area();
    if fs > 0.0 {
        let aux = aux.ok_or(Error::MissingAux("‖Dc‖, ‖DN‖"))?;
        bound += fs / (beta.powi(3) * m0) * (aux.dc_l1 + aux.dn_l1);
    }
    Ok(bound)
}

/// Σₖ ∫ |u⁺ − u⁻| dH¹ by the trapezoid rule over the samples, extended by
/// constants over the excluded ends of each arc.
pub fn jump_mass_sigma(traces: &[StopTraces]) -> f64 {
    traces
        .iter()
        .map(|t| {
            let j: Vec<f64> = t.plus.iter().zip(&t.minus).map(|(a, b)| (a - b).abs()).collect();
            let n = j.len();
            if n == 0 {
                return 0.0;
            }
            let mut sum = j[0] * t.params[0] + j[n - 1] * (t.arc_length - t.params[n - 1]);
            for i in 0..n - 1 {
                sum += 0.5 * (j[i] + j[i + 1]) * (t.params[i + 1] - t.params[i]);
            }
            sum
        })
        .fold(0.0, |a, b| a + b)
}

#[derive(Clone, Debug, Serialize)]
pub struct BVEstimate {
    pub linf: f64,
    pub linf_bound: f64,
    pub tv_discrete: f64,
    pub tv_bound_interior: f64,
    pub tv_bound_total: f64,
    pub jump_mass_sigma: f64,
    pub du0_variation: f64,
    pub sigma_length: f64,
    pub spacing: f64,
}

/// Assembles the estimate for a computed grid solution. `traces` feed the
/// jump mass; pass an empty slice for a degenerate Σ.
pub fn estimate_bv(p: &LinearProblem, g: &GridFunction, aux: Option<&AuxNorms>, traces: &[StopTraces]) -> Result<BVEstimate> {
    let linf_bound = p.linf_bound()?;
    let interior = tv_bound_interior(p, aux)?;
    let sigma_length = p.region().stopset().map_or(0.0, |s| s.length());
    Ok(BVEstimate {
        linf: g.max_abs(),
        linf_bound,
        tv_discrete: discrete_tv(g),
        tv_bound_interior: interior,
        tv_bound_total: interior + 2.0 * linf_bound * sigma_length,
        jump_mass_sigma: jump_mass_sigma(traces),
        du0_variation: p.u0.variation(),
        sigma_length,
        spacing: g.spec.spacing,
    })
}

/// Relative slack on the TV bound before the spacing term.
pub const TV_SLACK: f64 = 0.10;

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub linf_passed: bool,
    pub tv_passed: bool,
    pub jump_passed: bool,
    pub tv_slack: f64,
    pub estimate: BVEstimate,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.linf_passed && self.tv_passed && self.jump_passed
    }
}

/// `linf ≤ linf_bound` exactly, `tv ≤ tv_bound_total·(1 + 10% + h)`, and
/// `jump mass ≤ 2·linf_bound·H¹(Σ)`.
pub fn check_bounds(est: &BVEstimate) -> BoundsReport {
    let slack = TV_SLACK + est.spacing;
    BoundsReport {
        linf_passed: est.linf <= est.linf_bound,
        tv_passed: est.tv_discrete <= est.tv_bound_total * (1.0 + slack),
        jump_passed: est.jump_mass_sigma <= 2.0 * est.linf_bound * est.sigma_length + 1e-12,
        tv_slack: slack,
        estimate: est.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::builtin;
    use crate::grid::CellKind;
    use crate::linear_solver::{BoundaryData, Rhs};
    use std::f64::consts::PI;

    fn full(nx: usize, ny: usize, h: f64, f: impl Fn(usize, usize) -> f64) -> GridFunction {
        let spec = GridSpec::new(nx, ny, Point::zeros(), h);
        let values = (0..nx * ny).map(|i| f(i % nx, i / nx)).collect();
        GridFunction::new(spec, values, vec![CellKind::Inside; nx * ny])
    }

    #[test]
    fn tv_of_constant_and_step() {
        assert_eq!(discrete_tv(&full(10, 10, 0.1, |_, _| 3.0)), 0.0);
        // Vertical interface of length 1 (10 rows of height 0.1).
        let g = full(10, 10, 0.1, |ix, _| if ix < 5 { 0.0 } else { 1.0 });
        assert!((discrete_tv(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_cos_bound_is_eight() {
        let b = builtin("radial").unwrap();
        let p = LinearProblem::from_builtin(&b, BoundaryData::cos(), Rhs::zero());
        assert_eq!(tv_bound_interior(&p, None).unwrap(), 8.0);
        let q = p.with_data(BoundaryData::constant(1.0), Rhs::zero());
        assert_eq!(tv_bound_interior(&q, None).unwrap(), 0.0);
        let r = p.with_data(BoundaryData::constant(1.0), Rhs::constant(1.0));
        assert!(matches!(tv_bound_interior(&r, None), Err(Error::MissingAux(_))));
    }

    #[test]
    fn radial_aux_norms_match_closed_form() {
        // |D(x/|x|)| = 1/r in Frobenius norm, so ∫ over the disk minus B(0, 4h) is 2π(1 − 4h).
        let b = builtin("radial").unwrap();
        let aux = aux_norms(b.domain.as_ref(), &b.tf, &b.c, 256).unwrap();
        let exact = 2.0 * PI * (1.0 - aux.node_radius);
        assert!((aux.dn_l1 - exact).abs() / exact < 0.03, "{} vs {exact}", aux.dn_l1);
        assert!((aux.dc_l1 - aux.dn_l1).abs() < 1e-9);
    }

    #[test]
    fn corrupted_grid_fails_linf() {
        let est = BVEstimate {
            linf: 10.0,
            linf_bound: 1.0,
            tv_discrete: 0.0,
            tv_bound_interior: 0.0,
            tv_bound_total: 0.0,
            jump_mass_sigma: 0.0,
            du0_variation: 0.0,
            sigma_length: 0.0,
            spacing: 0.01,
        };
        let r = check_bounds(&est);
        assert!(!r.linf_passed && r.tv_passed && !r.passed());
    }

    #[test]
    fn jump_mass_extends_to_arc_ends() {
        let t = StopTraces {
            arc: 0,
            arc_length: 1.0,
            params: vec![0.25, 0.75],
            points: vec![],
            plus: vec![1.0, 1.0],
            minus: vec![0.0, 0.0],
            delta: 1e-3,
            exclusion: 0.0,
        };
        assert!((jump_mass_sigma(&[t]) - 1.0).abs() < 1e-15);
        assert_eq!(jump_mass_sigma(&[]), 0.0);
    }
}
