//! The explicit solution of `⟨c, Du⟩ = f`, `u = u₀` on ∂Ω:
//! `u(x) = u₀(η(T₀(x), x)) + ∫₀^{T₀(x)} f₀(η(τ, x)) dτ`.

mod data;
mod traces;

use std::sync::Arc;

use rayon::prelude::*;

use crate::builtin::Builtin;
use crate::characteristics::{integrate_backward, CharacteristicTrace, ScaledField, StepOptions};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::grid::{CellKind, GridFunction, GridSpec};
use crate::timefield::{check_causality, sample_region, TimeField, TransportField, EPS_SIGMA};
use crate::Point;

pub use data::{BoundaryData, Rhs};
pub use traces::{
    boundary_trace_decay, restart_problem, restart_solve, stopset_trace_at, trace_on_level, traces_on_stopset,
    LevelRegion, LevelTrace, StopTraces,
};

#[derive(Clone)]
pub struct LinearProblem {
    pub sf: ScaledField,
    pub f: Rhs,
    pub u0: BoundaryData,
}

impl std::fmt::Debug for LinearProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearProblem")
            .field("tf", &self.sf.tf)
            .field("c", &self.sf.c)
            .field("f", &self.f)
            .field("u0", &self.u0)
            .finish()
    }
}

impl LinearProblem {
    pub fn new(region: Arc<dyn Region>, tf: TimeField, c: TransportField, f: Rhs, u0: BoundaryData) -> Self {
        LinearProblem {
            sf: ScaledField::new(region, tf, c),
            f,
            u0,
        }
    }

    pub fn from_builtin(b: &Builtin, u0: BoundaryData, f: Rhs) -> Self {
        LinearProblem {
            sf: b.scaled_field(),
            f,
            u0,
        }
    }

    pub fn region(&self) -> &Arc<dyn Region> {
        &self.sf.region
    }

    pub fn tf(&self) -> &TimeField {
        &self.sf.tf
    }

    pub fn c(&self) -> &TransportField {
        &self.sf.c
    }

    pub fn beta(&self) -> f64 {
        self.sf.c.beta
    }

    pub fn m0(&self) -> Result<f64> {
        self.sf.tf.m0().ok_or(Error::MissingAux("m0"))
    }

    /// Same geometry and fields with other data.
    pub fn with_data(&self, u0: BoundaryData, f: Rhs) -> Self {
        LinearProblem {
            sf: self.sf.clone(),
            f,
            u0,
        }
    }

    /// ‖u₀‖∞ + ‖f‖∞/(β·m₀).
    pub fn linf_bound(&self) -> Result<f64> {
        Ok(self.u0.sup() + self.f.sup() / (self.beta() * self.m0()?))
    }

    /// Sampled causality constant; fails when the declared β exceeds it.
    pub fn validate(&self, resolution: usize) -> Result<f64> {
        let samples = sample_region(self.region().as_ref(), self.tf(), resolution, 1e-8);
        let beta_est = check_causality(self.tf(), self.c(), &samples)?;
        if self.beta() > beta_est + 1e-9 {
            return Err(Error::BetaViolation {
                declared: self.beta(),
                estimated: beta_est,
            });
        }
        Ok(beta_est)
    }

    /// ∫ f₀ dτ along a trace by the trapezoid rule on its nodes.
    pub fn source_integral(&self, trace: &CharacteristicTrace) -> Result<f64> {
        if self.f.is_zero() {
            return Ok(0.0);
        }
        let mut sum = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (p, &tau) in trace.points.iter().zip(&trace.tau) {
            let y = self.region().clamp(*p);
            let (_, w) = self.sf.eval(y)?;
            let g = self.f.value(y) * w;
            if let Some((t0, g0)) = prev {
                sum += 0.5 * (g + g0) * (tau - t0);
            }
            prev = Some((tau, g));
        }
        Ok(sum)
    }
}

/// u(x) from the backward characteristic through `x`.
pub fn evaluate_solution(p: &LinearProblem, x: Point, opts: &StepOptions) -> Result<f64> {
    let trace = integrate_backward(&p.sf, x, opts)?;
    let s = trace.boundary_param.expect("backward traces carry a boundary parameter");
    Ok(p.u0.eval(s) + p.source_integral(&trace)?)
}

#[derive(Clone, Copy, Debug)]
pub struct GridOptions {
    pub step: StepOptions,
    /// Cells whose centre has `1 − T` below this are Σ-tube cells.
    pub tube: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            step: StepOptions::default(),
            tube: EPS_SIGMA,
        }
    }
}

impl GridOptions {
    pub fn with_step(step: f64) -> Self {
        GridOptions {
            step: StepOptions::with_step(step),
            ..Self::default()
        }
    }
}

/// Evaluates the solution at every cell centre of a raster covering the
/// region with `resolution` cells along its longer side.
pub fn solve_on_grid(p: &LinearProblem, resolution: usize, opts: &GridOptions) -> Result<GridFunction> {
    if resolution < 8 {
        return Err(Error::InvalidArgument(format!("resolution {resolution} < 8")));
    }
    let spec = GridSpec::covering(&p.region().bbox(), resolution);
    Ok(solve_on_spec(p, spec, opts))
}

/// Cellwise solve on a given raster. Cells outside the region are `Outside`;
/// cells in the Σ tube or whose characteristic failed are `SigmaTube` and take
/// the value of the nearest computed cell on the same side of Σ.
pub fn solve_on_spec(p: &LinearProblem, spec: GridSpec, opts: &GridOptions) -> GridFunction {
    let cells: Vec<(CellKind, f64)> = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let x = spec.center_of(i);
            if !p.region().contains(x) {
                return (CellKind::Outside, 0.0);
            }
            if 1.0 - p.tf().t(x) < opts.tube {
                return (CellKind::SigmaTube, 0.0);
            }
            match evaluate_solution(p, x, &opts.step) {
                Ok(v) if v.is_finite() => (CellKind::Inside, v),
                _ => (CellKind::SigmaTube, 0.0),
            }
        })
        .collect();
    let (mask, mut values): (Vec<CellKind>, Vec<f64>) = cells.into_iter().unzip();
    fill_tube(p, &spec, &mask, &mut values);
    GridFunction::new(spec, values, mask)
}

fn side_key(p: &LinearProblem, x: Point) -> Option<(usize, i8)> {
    let sigma = p.region().stopset()?;
    if sigma.is_degenerate() {
        return None;
    }
    sigma.classify_side(x).ok().map(|c| (c.arc, c.side.sign() as i8))
}

/// Same-side nearest-neighbour extension into Σ-tube cells.
fn fill_tube(p: &LinearProblem, spec: &GridSpec, mask: &[CellKind], values: &mut [f64]) {
    let tube: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == CellKind::SigmaTube).collect();
    let fills: Vec<f64> = tube
        .par_iter()
        .map(|&i| {
            let (cx, cy) = spec.coords(i);
            let key = side_key(p, spec.center_of(i));
            let max_r = spec.nx.max(spec.ny) as i64;
            let mut best: Option<(f64, usize)> = None;
            for r in 1..=max_r {
                if let Some((d, _)) = best {
                    if (r - 1) as f64 * spec.spacing > d {
                        break;
                    }
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx.abs() != r && dy.abs() != r {
                            continue;
                        }
                        let (jx, jy) = (cx as i64 + dx, cy as i64 + dy);
                        if jx < 0 || jy < 0 || jx >= spec.nx as i64 || jy >= spec.ny as i64 {
                            continue;
                        }
                        let j = spec.index(jx as usize, jy as usize);
                        if mask[j] != CellKind::Inside {
                            continue;
                        }
                        let xj = spec.center_of(j);
                        if key.is_some() && side_key(p, xj) != key {
                            continue;
                        }
                        let d = (xj - spec.center_of(i)).norm();
                        if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                            best = Some((d, j));
                        }
                    }
                }
            }
            best.map_or(0.0, |(_, j)| values[j])
        })
        .collect();
    for (&i, v) in tube.iter().zip(fills) {
        values[i] = v;
    }
}

/// Directional difference `(u(x + h c₀) − u(x − h c₀))/(2h) − f₀(x)`, zero
/// wherever u is smooth.
pub fn pde_residual(p: &LinearProblem, x: Point, h: f64, opts: &StepOptions) -> Result<f64> {
    let (c0, w) = p.sf.eval(x)?;
    let up = evaluate_solution(p, x + c0 * h, opts)?;
    let um = evaluate_solution(p, x - c0 * h, opts)?;
    Ok((up - um) / (2.0 * h) - p.f.value(x) * w)
}
