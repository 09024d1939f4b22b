//! Characteristics of the rescaled field c₀ = c/⟨c, ∇T₀⟩.
//!
//! Along solutions of `y′ = ±c₀(y)` the transformed time advances at unit
//! rate, `T₀(y(τ)) = T₀(y(0)) ± τ`, so the integrator steps in T₀ units and
//! boundary or Σ arrival is a one-dimensional root find in the step length.

use std::sync::Arc;

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Region, SideClass};
use crate::report::CsvTable;
use crate::timefield::{FieldSource, TimeField, TransportField, EPS_SIGMA};
use crate::{Point, Vec2};

pub const DEFAULT_STEP: f64 = 1e-3;

/// m₀ used for step limits when the time field carries none.
const FALLBACK_M0: f64 = 0.01;

/// Bisection stops once the bracket is this short (T₀ units).
const BISECTION_TOL: f64 = 1e-15;

/// c₀ and the weight 1/⟨c, ∇T₀⟩ that turns f into f₀.
#[derive(Clone)]
pub struct ScaledField {
    pub region: Arc<dyn Region>,
    pub tf: TimeField,
    pub c: TransportField,
    corners: Vec<Point>,
}

impl ScaledField {
    pub fn new(region: Arc<dyn Region>, tf: TimeField, c: TransportField) -> Self {
        let corners = region.corners();
        ScaledField { region, tf, c, corners }
    }

    /// ⟨c, ∇T₀⟩ at the clamped point.
    pub fn denominator(&self, x: Point) -> Result<f64> {
        let y = self.region.clamp(x);
        let d = self.c.at(y).dot(&self.tf.grad_t0(y)?);
        if d > 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NotCausal { beta_est: d, at: y })
        }
    }

    /// `(c₀(x), 1/⟨c, ∇T₀⟩)`.
    pub fn eval(&self, x: Point) -> Result<(Vec2, f64)> {
        let y = self.region.clamp(x);
        let d = self.c.at(y).dot(&self.tf.grad_t0(y)?);
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::NotCausal { beta_est: d, at: y });
        }
        Ok((self.c.at(y) / d, 1.0 / d))
    }

    pub fn c0(&self, x: Point) -> Result<Vec2> {
        Ok(self.eval(x)?.0)
    }

    /// 1/(β·m₀), or `None` when m₀ is unknown.
    pub fn speed_bound(&self) -> Option<f64> {
        self.tf.m0().map(|m0| 1.0 / (self.c.beta * m0))
    }

    fn rk4(&self, y: Point, h: f64, sign: f64) -> Result<Point> {
        let k1 = self.c0(y)? * sign;
        let k2 = self.c0(y + k1 * (0.5 * h))? * sign;
        let k3 = self.c0(y + k2 * (0.5 * h))? * sign;
        let k4 = self.c0(y + k3 * h)? * sign;
        Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }

    /// Largest step keeping the displacement within a fixed fraction of the
    /// distance to the nearest corner of ∂Ω.
    fn corner_cap(&self, y: Point) -> f64 {
        let Some(d) = self.corners.iter().map(|q| (q - y).norm()).reduce(f64::min) else {
            return f64::INFINITY;
        };
        match self.c0(y) {
            Ok(v) => CORNER_STEP_FRACTION * d / v.norm(),
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    /// Step in T₀ units.
    pub step: f64,
    /// Defaults to `10·(1/(β·m₀))/step` plus an allowance for the shortened
    /// steps near Σ and at corners.
    pub max_steps: Option<usize>,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            step: DEFAULT_STEP,
            max_steps: None,
        }
    }
}

impl StepOptions {
    pub fn with_step(step: f64) -> Self {
        StepOptions {
            step,
            max_steps: None,
        }
    }

    fn limit(&self, sf: &ScaledField) -> usize {
        self.max_steps.unwrap_or_else(|| {
            let bound = 1.0 / (sf.c.beta * sf.tf.m0().unwrap_or(FALLBACK_M0));
            (10.0 * bound / self.step).ceil() as usize + SHORT_STEP_ALLOWANCE
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Boundary,
    StopSet,
    /// Stopped on an intermediate T₀ level.
    Level,
    StepLimit,
}

#[derive(Clone, Debug)]
pub struct CharacteristicTrace {
    pub direction: Direction,
    pub points: Vec<Point>,
    /// Elapsed flow parameter τ at each point, starting at 0.
    pub tau: Vec<f64>,
    /// Predicted clock `T₀(start) ± τ`.
    pub times: Vec<f64>,
    /// Measured T₀ at each point.
    pub t0: Vec<f64>,
    pub arc_length: f64,
    pub endpoint_kind: EndpointKind,
    pub endpoint: Point,
    /// Boundary parameter of the endpoint (backward traces).
    pub boundary_param: Option<f64>,
    /// Arc and side of the endpoint (forward traces to a non-degenerate Σ).
    pub side: Option<SideClass>,
}

impl CharacteristicTrace {
    pub fn duration(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    /// max |T₀(y(τ)) − (T₀(start) ± τ)|.
    pub fn clock_deviation(&self) -> f64 {
        self.t0
            .iter()
            .zip(&self.times)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rows `(tau, x, y, T0)`.
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["tau", "x", "y", "T0"]);
        for i in 0..self.points.len() {
            t.push(vec![self.tau[i], self.points[i].x, self.points[i].y, self.t0[i]]);
        }
        t
    }
}

struct Run {
    points: Vec<Point>,
    tau: Vec<f64>,
    t0: Vec<f64>,
    arc: f64,
    reached: bool,
}

/// Extra steps allowed beyond the nominal count.
const SHORT_STEP_ALLOWANCE: usize = 2000;

/// Largest step as a fraction of the remaining clock `1 − T₀`.
pub const SIGMA_STEP_FRACTION: f64 = 0.1;

/// Largest displacement per step as a fraction of the distance to the
/// nearest corner of ∂Ω.
const CORNER_STEP_FRACTION: f64 = 0.1;

/// Floor on the shortened steps, relative to the nominal step.
const MIN_STEP_FRACTION: f64 = 1e-4;

/// Integrates `y′ = sign·c₀(y)` from `x` until T₀ crosses `target`, refining
/// the last step by bisection. A trial step counts as crossing when the
/// measured T₀ passes the target, when T₀ stops progressing (the step jumped
/// over Σ), when a stage fails to evaluate, or, for analytic fields whose
/// clock is exact, when the elapsed time reaches the remaining distance.
fn run(sf: &ScaledField, x: Point, sign: f64, target: f64, opts: &StepOptions) -> Result<Run> {
    let passed = |t0: f64| if sign > 0.0 { t0 >= target } else { t0 <= target };
    let start = sf.tf.t0(x);
    let remaining = (target - start).abs();
    let exact_clock = sf.tf.source() == FieldSource::Analytic;
    let bbox = sf.region.bbox();
    let outer = bbox.expanded(0.05 * bbox.width().max(bbox.height()));
    let limit = opts.limit(sf);
    let h = opts.step;

    let mut out = Run {
        points: vec![x],
        tau: vec![0.0],
        t0: vec![start],
        arc: 0.0,
        reached: false,
    };
    if passed(start) {
        out.reached = true;
        return Ok(out);
    }
    let mut y = x;
    let mut t0_y = start;
    let mut tau = 0.0;
    // (crossed, end point of the trial step when it evaluated).
    let trial = |y: Point, t0_y: f64, tau: f64, sigma: f64| -> (bool, Option<Point>) {
        if exact_clock && tau + sigma >= remaining {
            return (true, sf.rk4(y, sigma, sign).ok());
        }
        match sf.rk4(y, sigma, sign) {
            Ok(y1) => {
                let t1 = sf.tf.t0(y1);
                let stalled = if sign > 0.0 { t1 <= t0_y } else { t1 >= t0_y };
                (passed(t1) || stalled, Some(y1))
            }
            Err(_) => (true, None),
        }
    };
    let h_min = MIN_STEP_FRACTION * h;
    for _ in 0..limit {
        // c₀ is not Lipschitz at Σ nor at corners of ∂Ω: steps shrink
        // geometrically with 1 − T₀ and with the distance to the corner.
        let h = h
            .min(SIGMA_STEP_FRACTION * (1.0 - t0_y))
            .min(sf.corner_cap(y))
            .max(h_min.min(h));
        match trial(y, t0_y, tau, h) {
            (false, Some(y1)) => {
                if !outer.contains(y1) {
                    return Err(Error::LeftDomain(y1));
                }
                out.arc += (y1 - y).norm();
                tau += h;
                y = y1;
                t0_y = sf.tf.t0(y);
                out.points.push(y);
                out.tau.push(tau);
                out.t0.push(t0_y);
            }
            (_, first) => {
                let (mut lo, mut hi) = (0.0, h);
                let mut y_hi = first;
                if exact_clock && tau + h >= remaining {
                    hi = (remaining - tau).max(0.0);
                    y_hi = sf.rk4(y, hi, sign).ok();
                }
                while hi - lo > BISECTION_TOL {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    match trial(y, t0_y, tau, mid) {
                        (false, _) => lo = mid,
                        (true, p) => {
                            hi = mid;
                            if p.is_some() {
                                y_hi = p;
                            }
                        }
                    }
                }
                let (sigma, y_end) = match y_hi {
                    Some(p) => (hi, p),
                    None => (lo, sf.rk4(y, lo, sign)?),
                };
                out.arc += (y_end - y).norm();
                out.points.push(y_end);
                out.tau.push(tau + sigma);
                out.t0.push(sf.tf.t0(y_end));
                out.reached = true;
                return Ok(out);
            }
        }
    }
    Err(Error::StepLimit(limit))
}

fn finish(sf: &ScaledField, x: Point, direction: Direction, r: Run, kind: EndpointKind) -> CharacteristicTrace {
    let start = sf.tf.t0(x);
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let times = r.tau.iter().map(|t| start + sign * t).collect();
    let endpoint = *r.points.last().unwrap();
    CharacteristicTrace {
        direction,
        points: r.points,
        tau: r.tau,
        times,
        t0: r.t0,
        arc_length: r.arc,
        endpoint_kind: kind,
        endpoint,
        boundary_param: None,
        side: None,
    }
}

/// Backward characteristic `y′ = −c₀(y)` from `x` to ∂Ω; the endpoint is
/// projected onto the boundary.
pub fn integrate_backward(sf: &ScaledField, x: Point, opts: &StepOptions) -> Result<CharacteristicTrace> {
    if !sf.region.contains(x) {
        return Err(Error::OutsideDomain(x));
    }
    if sf.tf.on_sigma(x) {
        return Err(Error::NearStopSet(x));
    }
    let r = run(sf, x, -1.0, 0.0, opts)?;
    let mut tr = finish(sf, x, Direction::Backward, r, EndpointKind::Boundary);
    let bp = sf.region.project_to_boundary(tr.endpoint);
    tr.boundary_param = Some(bp.param);
    tr.endpoint = bp.point;
    Ok(tr)
}

/// T₀ level at which forward integration hands over to projection onto Σ.
pub fn stop_level(tf: &TimeField) -> f64 {
    1.0 - EPS_SIGMA.powf(1.0 / tf.q())
}

/// Forward characteristic from the boundary point with parameter `s` to Σ.
pub fn integrate_forward(sf: &ScaledField, s: f64, opts: &StepOptions) -> Result<CharacteristicTrace> {
    let x = sf.region.boundary_position(s);
    integrate_forward_from(sf, x, opts)
}

/// Forward characteristic from an arbitrary point of Ω to Σ. The last
/// stretch inside the ε-tube is completed by projection onto Σ.
pub fn integrate_forward_from(sf: &ScaledField, x: Point, opts: &StepOptions) -> Result<CharacteristicTrace> {
    let r = run(sf, x, 1.0, stop_level(&sf.tf), opts)?;
    let mut tr = finish(sf, x, Direction::Forward, r, EndpointKind::StopSet);
    let last = tr.endpoint;
    if let Some(sigma) = sf.region.stopset() {
        let (d, p) = sigma.nearest(last);
        if !sigma.is_degenerate() {
            tr.side = sigma.classify_side(last).ok();
        }
        tr.arc_length += d;
        tr.endpoint = p;
    }
    Ok(tr)
}

/// Forward characteristic from `x` until T₀ reaches `level`.
pub fn integrate_to_level(sf: &ScaledField, x: Point, level: f64, opts: &StepOptions) -> Result<CharacteristicTrace> {
    if level >= stop_level(&sf.tf) {
        return Err(Error::InvalidArgument(format!("level {level} is inside the Σ tube")));
    }
    let r = run(sf, x, 1.0, level, opts)?;
    Ok(finish(sf, x, Direction::Forward, r, EndpointKind::Level))
}

/// Flow of `y′ = sign·c₀(y)` for exactly `duration`: whole steps followed by
/// one partial step. Smooth in `x` and `duration`, unlike level stopping.
pub fn flow(sf: &ScaledField, x: Point, duration: f64, sign: f64, step: f64) -> Result<Point> {
    let n = (duration / step).floor() as usize;
    let mut y = x;
    for _ in 0..n {
        y = sf.rk4(y, step, sign)?;
    }
    let rest = duration - n as f64 * step;
    if rest > 0.0 {
        y = sf.rk4(y, rest, sign)?;
    }
    Ok(y)
}

/// ξ(t, s): forward flow for time `t` from the boundary point with parameter `s`.
pub fn xi(sf: &ScaledField, t: f64, s: f64, step: f64) -> Result<Point> {
    flow(sf, sf.region.boundary_position(wrap(sf, s)), t, 1.0, step)
}

fn wrap(sf: &ScaledField, s: f64) -> f64 {
    let (a, b) = sf.region.boundary_period();
    a + (s - a).rem_euclid(b - a)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct JacobianProbe {
    pub t: f64,
    pub s: f64,
    /// Columns ∂ₜξ and ∂ₛξ.
    #[serde(skip)]
    pub matrix: Matrix2<f64>,
    /// Determinant with the sign convention that makes it positive for a
    /// causal field, for either boundary orientation.
    pub det: f64,
    pub dt_norm: f64,
    pub ds_norm: f64,
}

impl JacobianProbe {
    /// `0 < det ≤ |∂ₜξ||∂ₛξ| ≤ det/β + slack`.
    pub fn sandwich_holds(&self, beta: f64, slack: f64) -> bool {
        let prod = self.dt_norm * self.ds_norm;
        self.det > 0.0 && self.det <= prod * (1.0 + 1e-9) + slack && prod <= self.det / beta + slack
    }
}

/// Central-difference Jacobian of ξ at `(t, s)` with step `h` in both variables.
pub fn jacobian_xi(sf: &ScaledField, t: f64, s: f64, h: f64, step: f64) -> Result<JacobianProbe> {
    if !(t > h && t + h < stop_level(&sf.tf)) {
        return Err(Error::InvalidArgument(format!("t = {t} outside (h, 1 − ε_Σ^(1/q))")));
    }
    let dt = (xi(sf, t + h, s, step)? - xi(sf, t - h, s, step)?) / (2.0 * h);
    let ds = (xi(sf, t, s + h, step)? - xi(sf, t, s - h, step)?) / (2.0 * h);
    let matrix = Matrix2::from_columns(&[dt, ds]);
    let sign = sf
        .region
        .as_domain()
        .map(|d| d.boundary.orientation().det_sign())
        .unwrap_or(1.0);
    Ok(JacobianProbe {
        t,
        s,
        matrix,
        det: sign * matrix.determinant(),
        dt_norm: dt.norm(),
        ds_norm: ds.norm(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcLengthReport {
    pub traces: usize,
    pub max_arc_length: f64,
    pub bound: f64,
    pub passed: bool,
    pub warning: Option<String>,
}

/// Compares measured arc lengths with 1/(β·m₀), allowing a relative 1e−3.
pub fn arc_length_bound_check(traces: &[CharacteristicTrace], beta: f64, m0: f64) -> ArcLengthReport {
    let bound = 1.0 / (beta * m0);
    let max = traces.iter().map(|t| t.arc_length).fold(0.0, f64::max);
    ArcLengthReport {
        traces: traces.len(),
        max_arc_length: max,
        bound,
        passed: max <= bound * (1.0 + 1e-3),
        warning: traces.is_empty().then(|| "no traces; check is vacuous".to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Side};
    use crate::timefield::{NormalField, RadialTime};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn radial(angle: f64) -> ScaledField {
        let map = RadialTime {
            center: Point::zeros(),
            radius: 1.0,
        };
        let tf = TimeField::analytic(map, 2.0).with_m0(0.5);
        let c = TransportField::from_field(
            NormalField {
                time: Arc::new(map),
                angle,
            },
            angle.cos(),
        );
        ScaledField::new(Arc::new(Domain::disk()), tf, c)
    }

    #[test]
    fn backward_radial_example() {
        let sf = radial(0.0);
        let tr = integrate_backward(&sf, Point::new(0.25, 0.0), &StepOptions::default()).unwrap();
        assert_abs_diff_eq!(tr.endpoint, Point::new(1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(tr.duration(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.arc_length, 0.75, epsilon = 1e-9);
        assert!(tr.clock_deviation() < 1e-9);
        assert_eq!(tr.boundary_param, Some(0.0));
    }

    #[test]
    fn backward_from_boundary_is_empty() {
        let sf = radial(0.0);
        let tr = integrate_backward(&sf, Point::new(0.0, 1.0), &StepOptions::default()).unwrap();
        assert_eq!(tr.points.len(), 1);
        assert_eq!(tr.duration(), 0.0);
    }

    #[test]
    fn backward_inside_tube_is_refused() {
        let sf = radial(0.0);
        let r = integrate_backward(&sf, Point::new(1e-12, 0.0), &StepOptions::default());
        assert!(matches!(r, Err(Error::NearStopSet(_))));
    }

    #[test]
    fn forward_radial_reaches_centre() {
        let sf = radial(0.0);
        let tr = integrate_forward(&sf, FRAC_PI_2, &StepOptions::default()).unwrap();
        assert_eq!(tr.endpoint, Point::zeros());
        assert_abs_diff_eq!(tr.arc_length, 1.0, epsilon = 1e-9);
        assert!(tr.t0.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn single_oversized_step_still_terminates() {
        let sf = radial(0.0);
        let opts = StepOptions::with_step(5.0);
        let tr = integrate_forward(&sf, 0.3, &opts).unwrap();
        // One nominal step, then logarithmically many toward Σ.
        assert!(tr.points.len() < 500, "{}", tr.points.len());
        assert_abs_diff_eq!(tr.duration(), stop_level(&sf.tf), epsilon = 1e-6);
    }

    #[test]
    fn spiral_arc_length() {
        let theta = PI / 6.0;
        let sf = radial(theta);
        let tr = integrate_forward(&sf, 1.0, &StepOptions::default()).unwrap();
        assert_abs_diff_eq!(tr.arc_length, 1.0 / theta.cos(), epsilon = 1e-4);
        let rep = arc_length_bound_check(&[tr], sf.c.beta, 0.5);
        assert!(rep.passed);
        assert_abs_diff_eq!(rep.bound, 2.0 / theta.cos(), epsilon = 1e-12);
    }

    #[test]
    fn forward_backward_roundtrip() {
        let sf = radial(PI / 6.0);
        let x = Point::new(0.3, -0.4);
        let opts = StepOptions::default();
        let back = integrate_backward(&sf, x, &opts).unwrap();
        let s = back.boundary_param.unwrap();
        let level = sf.tf.t0(x);
        let fwd = integrate_to_level(&sf, sf.region.boundary_position(s), level, &opts).unwrap();
        assert!((fwd.endpoint - x).norm() < 1e-5, "{:?}", fwd.endpoint - x);
    }

    #[test]
    fn jacobian_radial_is_orthogonal() {
        let sf = radial(0.0);
        let j = jacobian_xi(&sf, 0.25, 0.0, 1e-5, 1e-3).unwrap();
        assert!(j.det > 0.0);
        assert_abs_diff_eq!(j.det, j.dt_norm * j.ds_norm, epsilon = 1e-6);
        assert!(j.sandwich_holds(1.0, 1e-4));
    }

    #[test]
    fn segment_vertical_field_lands_on_plus_side() {
        use crate::timefield::{OuterDistance, SegmentAttractor, SegmentTime};
        let (a, b) = (Point::new(-0.5, 0.0), Point::new(0.5, 0.0));
        let map = SegmentTime {
            outer: OuterDistance::Circle {
                center: Point::zeros(),
                radius: 1.0,
            },
            a,
            b,
        };
        let tf = TimeField::analytic(map, 2.0).with_m0(0.2);
        let c = TransportField::from_field(SegmentAttractor { a, b }, 0.5);
        let sf = ScaledField::new(Arc::new(Domain::disk_segment()), tf, c);
        let tr = integrate_forward(&sf, FRAC_PI_2, &StepOptions::default()).unwrap();
        let side = tr.side.unwrap();
        assert_eq!((side.arc, side.side), (0, Side::Plus));
        assert_abs_diff_eq!(tr.endpoint, Point::new(0.0, 0.0), epsilon = 1e-9);
        assert!(tr.points.iter().all(|p| p.x.abs() < 1e-12));
    }
}
