//! Time functions T, the transformed clock T₀ = 1 − (1 − T)^{1/q}, and
//! transport directions c together with the causality checks tying them.

mod fmm;
mod grid;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{project_segment, rotate, Region};
use crate::{Point, Vec2};

pub use fmm::fast_marching;
pub use grid::{field_from_distance_grid, DistanceField, GridTime, MaskClass, MaskRaster, MaskRegion};

/// Points with `1 − T(x)` below this floor are treated as lying on Σ.
pub const EPS_SIGMA: f64 = 1e-10;

/// Tolerance on `T ∈ [0, 1]` for [`TimeField::transform_time`].
pub const RANGE_TOL: f64 = 1e-9;

/// Safety factor applied to sampled minima of |∇T₀|.
pub const M0_SAFETY: f64 = 0.9;

/// A time function T with its gradient. Values may leave [0, 1] outside
/// the closure of Ω; callers clamp where it matters.
pub trait TimeMap: Send + Sync {
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> Vec2;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldSource {
    Analytic,
    Grid,
}

#[derive(Clone)]
pub struct TimeField {
    map: Arc<dyn TimeMap>,
    q: f64,
    m0: Option<f64>,
    source: FieldSource,
}

impl std::fmt::Debug for TimeField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeField")
            .field("q", &self.q)
            .field("m0", &self.m0)
            .field("source", &self.source)
            .finish()
    }
}

impl TimeField {
    pub fn new(map: Arc<dyn TimeMap>, q: f64, source: FieldSource) -> Self {
        assert!(q > 1.0, "exponent q must exceed 1");
        TimeField {
            map,
            q,
            m0: None,
            source,
        }
    }

    pub fn analytic(map: impl TimeMap + 'static, q: f64) -> Self {
        Self::new(Arc::new(map), q, FieldSource::Analytic)
    }

    /// Attaches a known lower bound for |∇T₀|.
    pub fn with_m0(mut self, m0: f64) -> Self {
        self.m0 = Some(m0);
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        assert!(q > 1.0, "exponent q must exceed 1");
        self.q = q;
        self
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn m0(&self) -> Option<f64> {
        self.m0
    }

    pub fn source(&self) -> FieldSource {
        self.source
    }

    pub fn map(&self) -> &Arc<dyn TimeMap> {
        &self.map
    }

    #[inline]
    pub fn t(&self, x: Point) -> f64 {
        self.map.value(x)
    }

    #[inline]
    pub fn grad_t(&self, x: Point) -> Vec2 {
        self.map.gradient(x)
    }

    /// Interior unit normal to the level lines, if ∇T ≠ 0.
    pub fn normal(&self, x: Point) -> Option<Vec2> {
        let g = self.grad_t(x);
        let n = g.norm();
        (n > 0.0).then(|| g / n)
    }

    /// `1 − T(x) < EPS_SIGMA`.
    pub fn on_sigma(&self, x: Point) -> bool {
        1.0 - self.t(x) < EPS_SIGMA
    }

    /// T₀ without range checks; T > 1 is clamped to 1.
    #[inline]
    pub fn t0(&self, x: Point) -> f64 {
        self.t0_of(self.t(x))
    }

    #[inline]
    pub fn t0_of(&self, t: f64) -> f64 {
        1.0 - (1.0 - t).max(0.0).powf(1.0 / self.q)
    }

    /// T₀(x) = 1 − (1 − T(x))^{1/q}, for T(x) ∈ [0, 1].
    pub fn transform_time(&self, x: Point) -> Result<f64> {
        let t = self.t(x);
        if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&t) {
            return Err(Error::OutOfDomain(t));
        }
        Ok(self.t0_of(t.clamp(0.0, 1.0)))
    }

    /// ∇T₀ = (1/q)(1 − T)^{(1−q)/q} ∇T.
    pub fn grad_t0(&self, x: Point) -> Result<Vec2> {
        let gap = 1.0 - self.t(x);
        if gap < EPS_SIGMA {
            return Err(Error::NearStopSet(x));
        }
        let scale = gap.powf((1.0 - self.q) / self.q) / self.q;
        Ok(self.grad_t(x) * scale)
    }

    /// The T-level whose T₀-level is `lambda`.
    pub fn t_level_of(&self, lambda: f64) -> f64 {
        1.0 - (1.0 - lambda).powf(self.q)
    }
}

/// T(x) = 1 − |x − center| / radius. Σ = {center}; asymptotic order p = 1.
#[derive(Clone, Copy, Debug)]
pub struct RadialTime {
    pub center: Point,
    pub radius: f64,
}

impl TimeMap for RadialTime {
    fn value(&self, x: Point) -> f64 {
        1.0 - (x - self.center).norm() / self.radius
    }

    fn gradient(&self, x: Point) -> Vec2 {
        let d = x - self.center;
        let r = d.norm();
        if r == 0.0 {
            Vec2::zeros()
        } else {
            -d / (r * self.radius)
        }
    }
}

/// Distance-like function vanishing on the outer boundary.
#[derive(Clone, Copy, Debug)]
pub enum OuterDistance {
    /// `radius − |x − center|`.
    Circle { center: Point, radius: f64 },
    /// Smoothed minimum `(Σ e_i^{−k})^{−1/k}` of the distances `e_i` to the
    /// four sides of an axis-aligned box; smooth inside, exact on the sides.
    SmoothBox { min: Point, max: Point, k: f64 },
}

impl OuterDistance {
    fn eval(&self, x: Point) -> (f64, Vec2) {
        match *self {
            OuterDistance::Circle { center, radius } => {
                let d = x - center;
                let r = d.norm();
                let g = if r == 0.0 { Vec2::zeros() } else { -d / r };
                (radius - r, g)
            }
            OuterDistance::SmoothBox { min, max, k } => {
                let e = [x.x - min.x, max.x - x.x, x.y - min.y, max.y - x.y];
                let ge = [
                    Vec2::new(1.0, 0.0),
                    Vec2::new(-1.0, 0.0),
                    Vec2::new(0.0, 1.0),
                    Vec2::new(0.0, -1.0),
                ];
                let (imin, emin) = e
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
                if emin <= 0.0 {
                    return (emin, ge[imin]);
                }
                // Scale by the smallest distance to keep powers in range.
                let s: f64 = e.iter().map(|v| (emin / v).powf(k)).sum();
                let d = emin * s.powf(-1.0 / k);
                let ratio = d / emin;
                let mut g = Vec2::zeros();
                for i in 0..4 {
                    g += ge[i] * (ratio.powf(k + 1.0) * (emin / e[i]).powf(k + 1.0));
                }
                (d, g)
            }
        }
    }
}

/// T = d_∂ / (d_∂ + d_Σ) for a segment stop set Σ = [a, b]: zero on ∂Ω,
/// one on Σ, linear in the distance to Σ near Σ.
#[derive(Clone, Copy, Debug)]
pub struct SegmentTime {
    pub outer: OuterDistance,
    pub a: Point,
    pub b: Point,
}

impl SegmentTime {
    fn parts(&self, x: Point) -> (f64, Vec2, f64, Vec2) {
        let (d_o, g_o) = self.outer.eval(x);
        let (_, p, d2) = project_segment(self.a, self.b, x);
        let d_s = d2.sqrt();
        let g_s = if d_s > 0.0 { (x - p) / d_s } else { Vec2::zeros() };
        (d_o, g_o, d_s, g_s)
    }
}

impl TimeMap for SegmentTime {
    fn value(&self, x: Point) -> f64 {
        let (d_o, _, d_s, _) = self.parts(x);
        if d_s == 0.0 {
            1.0
        } else {
            d_o / (d_o + d_s)
        }
    }

    fn gradient(&self, x: Point) -> Vec2 {
        let (d_o, g_o, d_s, g_s) = self.parts(x);
        if d_s == 0.0 {
            return Vec2::zeros();
        }
        let s = d_o + d_s;
        (g_o * d_s - g_s * d_o) / (s * s)
    }
}

/// T' = (T − level) / (1 − level): the time function of the region above a level line.
#[derive(Clone)]
pub struct RescaledTime {
    pub inner: Arc<dyn TimeMap>,
    pub level: f64,
}

impl TimeMap for RescaledTime {
    fn value(&self, x: Point) -> f64 {
        (self.inner.value(x) - self.level) / (1.0 - self.level)
    }

    fn gradient(&self, x: Point) -> Vec2 {
        self.inner.gradient(x) / (1.0 - self.level)
    }
}

/// Direction field c(x); unit length away from Σ.
pub trait DirectionField: Send + Sync {
    fn direction(&self, x: Point) -> Vec2;
}

/// The level-line normal N of a time function, rotated by a fixed angle.
#[derive(Clone)]
pub struct NormalField {
    pub time: Arc<dyn TimeMap>,
    pub angle: f64,
}

impl DirectionField for NormalField {
    fn direction(&self, x: Point) -> Vec2 {
        let g = self.time.gradient(x);
        let n = g.norm();
        if n == 0.0 {
            return Vec2::zeros();
        }
        let v = g / n;
        if self.angle == 0.0 {
            v
        } else {
            rotate(v, self.angle)
        }
    }
}

/// Unit field pointing at the nearest point of the segment `[a, b]`.
#[derive(Clone, Copy, Debug)]
pub struct SegmentAttractor {
    pub a: Point,
    pub b: Point,
}

impl DirectionField for SegmentAttractor {
    fn direction(&self, x: Point) -> Vec2 {
        let (_, p, d2) = project_segment(self.a, self.b, x);
        if d2 == 0.0 {
            Vec2::zeros()
        } else {
            (p - x) / d2.sqrt()
        }
    }
}

#[derive(Clone)]
pub struct RotatedField {
    pub inner: Arc<dyn DirectionField>,
    pub angle: f64,
}

impl DirectionField for RotatedField {
    fn direction(&self, x: Point) -> Vec2 {
        rotate(self.inner.direction(x), self.angle)
    }
}

/// Closure-backed direction field.
pub struct FnField<F>(pub F);

impl<F> DirectionField for FnField<F>
where
    F: Fn(Point) -> Vec2 + Send + Sync,
{
    fn direction(&self, x: Point) -> Vec2 {
        (self.0)(x)
    }
}

/// Unit transport field with its declared causality constant β.
#[derive(Clone)]
pub struct TransportField {
    field: Arc<dyn DirectionField>,
    pub beta: f64,
}

impl std::fmt::Debug for TransportField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransportField").field("beta", &self.beta).finish()
    }
}

impl TransportField {
    pub fn new(field: Arc<dyn DirectionField>, beta: f64) -> Self {
        TransportField { field, beta }
    }

    pub fn from_field(field: impl DirectionField + 'static, beta: f64) -> Self {
        Self::new(Arc::new(field), beta)
    }

    #[inline]
    pub fn at(&self, x: Point) -> Vec2 {
        self.field.direction(x)
    }

    pub fn field(&self) -> &Arc<dyn DirectionField> {
        &self.field
    }

    /// The same field rotated pointwise by `angle`, with a new declared β.
    pub fn rotated(&self, angle: f64, beta: f64) -> Self {
        TransportField::from_field(
            RotatedField {
                inner: self.field.clone(),
                angle,
            },
            beta,
        )
    }
}

/// Grid samples of `Ω ∖ Σ-tube`: cell centres of an `n`-cell raster over the
/// bounding box with `1 − T ≥ tube`, plus boundary points of a curve domain.
pub fn sample_region(region: &dyn Region, tf: &TimeField, n: usize, tube: f64) -> Vec<Point> {
    let spec = crate::grid::GridSpec::covering(&region.bbox(), n);
    let mut pts: Vec<Point> = (0..spec.len())
        .map(|i| spec.center_of(i))
        .filter(|&x| region.contains(x) && 1.0 - tf.t(x) >= tube)
        .collect();
    if let Some(d) = region.as_domain() {
        pts.extend(d.boundary.sample(4 * n).into_iter().map(|(_, p)| p));
    }
    pts
}

/// Sampled min of |∇T₀|, reduced by the safety factor.
pub fn estimate_m0(tf: &TimeField, samples: &[Point]) -> Result<f64> {
    let mut min = f64::INFINITY;
    for &x in samples {
        let g = tf.grad_t0(x)?.norm();
        if g <= 0.0 || !g.is_finite() {
            return Err(Error::DegenerateField { at: x, value: g });
        }
        min = min.min(g);
    }
    if !min.is_finite() {
        return Err(Error::InvalidArgument("no samples for m0 estimate".into()));
    }
    Ok(M0_SAFETY * min)
}

/// Sampled min of ⟨c, N⟩ with the point where it is attained.
pub fn causality_minimum(tf: &TimeField, c: &TransportField, samples: &[Point]) -> Result<(f64, Point)> {
    let mut best = (f64::INFINITY, Point::zeros());
    for &x in samples {
        let n = tf.normal(x).ok_or(Error::DegenerateField { at: x, value: 0.0 })?;
        let v = c.at(x).dot(&n);
        if v < best.0 {
            best = (v, x);
        }
    }
    Ok(best)
}

/// β estimate = sampled min of ⟨c, N⟩; fails with `NotCausal` if it is ≤ 0.
pub fn check_causality(tf: &TimeField, c: &TransportField, samples: &[Point]) -> Result<f64> {
    let (beta_est, at) = causality_minimum(tf, c, samples)?;
    if beta_est <= 0.0 {
        return Err(Error::NotCausal { beta_est, at });
    }
    Ok(beta_est)
}

/// Max deviation of |c| from 1 over the samples.
pub fn unit_speed_defect(c: &TransportField, samples: &[Point]) -> f64 {
    samples
        .iter()
        .map(|&x| (c.at(x).norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn radial(q: f64) -> TimeField {
        TimeField::analytic(
            RadialTime {
                center: Point::zeros(),
                radius: 1.0,
            },
            q,
        )
    }

    fn radial_c(angle: f64) -> TransportField {
        TransportField::from_field(
            NormalField {
                time: Arc::new(RadialTime {
                    center: Point::zeros(),
                    radius: 1.0,
                }),
                angle,
            },
            angle.cos(),
        )
    }

    #[test]
    fn transform_time_examples() {
        let tf = radial(2.0);
        assert_eq!(tf.transform_time(Point::new(1.0, 0.0)).unwrap(), 0.0);
        assert_eq!(tf.transform_time(Point::zeros()).unwrap(), 1.0);
        // T = 0.75 at r = 0.25.
        assert_abs_diff_eq!(tf.transform_time(Point::new(0.25, 0.0)).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(
            tf.transform_time(Point::new(3.0, 0.0)),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn grad_t0_examples() {
        let tf = radial(2.0);
        let g = tf.grad_t0(Point::new(0.25, 0.0)).unwrap();
        assert_abs_diff_eq!(g, Vec2::new(-1.0, 0.0), epsilon = 1e-15);
        let g = tf.grad_t0(Point::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g, Vec2::new(-0.5, 0.0), epsilon = 1e-15);
        // 1 − T = ε/2.
        let x = Point::new(EPS_SIGMA / 2.0, 0.0);
        assert!(matches!(tf.grad_t0(x), Err(Error::NearStopSet(_))));
    }

    #[test]
    fn m0_estimates_for_radial_disk() {
        let d = Domain::disk();
        for (q, exact) in [(2.0, 0.5), (4.0, 0.25)] {
            let tf = radial(q);
            let samples = sample_region(&d, &tf, 64, 1e-8);
            let m0 = estimate_m0(&tf, &samples).unwrap();
            assert!(m0 >= 0.9 * exact - 1e-12 && m0 <= exact, "q={q}: {m0}");
        }
    }

    #[test]
    fn degenerate_gradient_is_reported() {
        struct Flat;
        impl TimeMap for Flat {
            fn value(&self, _: Point) -> f64 {
                0.5
            }
            fn gradient(&self, _: Point) -> Vec2 {
                Vec2::zeros()
            }
        }
        let tf = TimeField::analytic(Flat, 2.0);
        assert!(matches!(
            estimate_m0(&tf, &[Point::new(0.1, 0.2)]),
            Err(Error::DegenerateField { .. })
        ));
    }

    #[test]
    fn causality_examples() {
        let d = Domain::disk();
        let tf = radial(2.0);
        let samples = sample_region(&d, &tf, 64, 1e-8);
        let beta = check_causality(&tf, &radial_c(0.0), &samples).unwrap();
        assert_abs_diff_eq!(beta, 1.0, epsilon = 1e-12);
        let beta = check_causality(&tf, &radial_c(PI / 6.0), &samples).unwrap();
        assert_abs_diff_eq!(beta, (PI / 6.0).cos(), epsilon = 1e-2);
        assert!(matches!(
            check_causality(&tf, &radial_c(PI), &samples),
            Err(Error::NotCausal { .. })
        ));
        assert!(unit_speed_defect(&radial_c(PI / 6.0), &samples) < 1e-12);
    }

    #[test]
    fn blow_up_slope_near_stop_point() {
        for q in [2.0, 3.0, 4.0] {
            let tf = radial(q);
            let (r1, r2) = (1e-4, 1e-2);
            let g1 = tf.grad_t0(Point::new(r1, 0.0)).unwrap().norm();
            let g2 = tf.grad_t0(Point::new(r2, 0.0)).unwrap().norm();
            let slope = (g2.ln() - g1.ln()) / (r2.ln() - r1.ln());
            let expected = (1.0 - q) / q;
            assert!((slope - expected).abs() <= 0.05 * expected.abs(), "q={q}: {slope}");
        }
    }

    #[test]
    fn segment_time_levels() {
        let st = SegmentTime {
            outer: OuterDistance::Circle {
                center: Point::zeros(),
                radius: 1.0,
            },
            a: Point::new(-0.5, 0.0),
            b: Point::new(0.5, 0.0),
        };
        assert_abs_diff_eq!(st.value(Point::new(0.0, 1.0)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(st.value(Point::new(0.2, 0.0)), 1.0);
        assert_abs_diff_eq!(st.value(Point::new(0.0, 0.5)), 0.5, epsilon = 1e-15);
        // Gradient agrees with central differences.
        let x = Point::new(0.63, -0.31);
        let h = 1e-6;
        let fd = Vec2::new(
            (st.value(x + Vec2::new(h, 0.0)) - st.value(x - Vec2::new(h, 0.0))) / (2.0 * h),
            (st.value(x + Vec2::new(0.0, h)) - st.value(x - Vec2::new(0.0, h))) / (2.0 * h),
        );
        assert_abs_diff_eq!(st.gradient(x), fd, epsilon = 1e-7);
    }

    #[test]
    fn smooth_box_gradient_matches_differences() {
        let o = OuterDistance::SmoothBox {
            min: Point::new(-1.0, -0.5),
            max: Point::new(1.0, 0.5),
            k: 4.0,
        };
        let (d, _) = o.eval(Point::new(1.0, 0.1));
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-15);
        let x = Point::new(0.7, 0.2);
        let h = 1e-6;
        let f = |p: Point| o.eval(p).0;
        let fd = Vec2::new(
            (f(x + Vec2::new(h, 0.0)) - f(x - Vec2::new(h, 0.0))) / (2.0 * h),
            (f(x + Vec2::new(0.0, h)) - f(x - Vec2::new(0.0, h))) / (2.0 * h),
        );
        assert_abs_diff_eq!(o.eval(x).1, fd, epsilon = 1e-7);
    }
}
