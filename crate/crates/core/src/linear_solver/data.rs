use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::{Point, Vec2};

type ParamFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PointFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(Point) -> Vec2 + Send + Sync>;

/// Samples used to estimate sup and variation of function-valued data.
const DATA_SAMPLES: usize = 8192;

#[derive(Clone)]
enum DataKind {
    Constant(f64),
    Function(ParamFn),
    /// Piecewise constant: `values[round(s)]`, cyclic.
    Indexed(Arc<Vec<f64>>),
}

/// Boundary data u₀ as a function of the boundary parameter, with its sup
/// norm and its total variation over one period.
#[derive(Clone)]
pub struct BoundaryData {
    kind: DataKind,
    sup: f64,
    variation: f64,
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            DataKind::Constant(v) => format!("constant {v}"),
            DataKind::Function(_) => "function".into(),
            DataKind::Indexed(v) => format!("{} samples", v.len()),
        };
        f.debug_struct("BoundaryData")
            .field("kind", &kind)
            .field("sup", &self.sup)
            .field("variation", &self.variation)
            .finish()
    }
}

impl BoundaryData {
    pub fn constant(v: f64) -> Self {
        BoundaryData {
            kind: DataKind::Constant(v),
            sup: v.abs(),
            variation: 0.0,
        }
    }

    /// `f` on the period `[a, b)`; sup and variation are sampled.
    pub fn function(period: (f64, f64), f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let (a, b) = period;
        let vals: Vec<f64> = (0..DATA_SAMPLES)
            .map(|i| f(a + (b - a) * i as f64 / DATA_SAMPLES as f64))
            .collect();
        let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let variation = cyclic_variation(&vals);
        BoundaryData {
            kind: DataKind::Function(Arc::new(f)),
            sup,
            variation,
        }
    }

    /// Replaces the sampled sup and variation by known values.
    pub fn with_bounds(mut self, sup: f64, variation: f64) -> Self {
        self.sup = sup;
        self.variation = variation;
        self
    }

    /// cos s on [0, 2π): on the unit disk, u₀(θ) = cos θ.
    pub fn cos() -> Self {
        Self::function((0.0, TAU), f64::cos).with_bounds(1.0, 4.0)
    }

    /// 1 for s ∈ [0, π), 0 for s ∈ [π, 2π): the upper and lower halves of the unit circle.
    pub fn upper_lower_step() -> Self {
        Self::function((0.0, TAU), |s| if s.rem_euclid(TAU) < PI { 1.0 } else { 0.0 }).with_bounds(1.0, 2.0)
    }

    /// Piecewise-constant data indexed by the rounded parameter.
    pub fn indexed(values: Vec<f64>) -> Self {
        assert!(!values.is_empty());
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let variation = cyclic_variation(&values);
        BoundaryData {
            kind: DataKind::Indexed(Arc::new(values)),
            sup,
            variation,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            DataKind::Constant(v) => *v,
            DataKind::Function(f) => f(s),
            DataKind::Indexed(v) => {
                let n = v.len() as i64;
                v[(s.round() as i64).rem_euclid(n) as usize]
            }
        }
    }

    /// ‖u₀‖∞.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// |Du₀|(∂Ω).
    pub fn variation(&self) -> f64 {
        self.variation
    }

    /// `a·self + b·other`, with triangle-inequality bounds.
    pub fn combine(&self, a: f64, other: &BoundaryData, b: f64) -> Self {
        let (u, v) = (self.clone(), other.clone());
        BoundaryData {
            kind: DataKind::Function(Arc::new(move |s| a * u.eval(s) + b * v.eval(s))),
            sup: a.abs() * self.sup + b.abs() * other.sup,
            variation: a.abs() * self.variation + b.abs() * other.variation,
        }
    }
}

fn cyclic_variation(vals: &[f64]) -> f64 {
    let n = vals.len();
    (0..n).map(|i| (vals[(i + 1) % n] - vals[i]).abs()).sum()
}

#[derive(Clone)]
enum RhsKind {
    Constant(f64),
    Function { value: PointFn, gradient: GradFn },
}

/// Right-hand side f with declared bounds for ‖f‖∞ and ‖∇f‖∞.
#[derive(Clone)]
pub struct Rhs {
    kind: RhsKind,
    sup: f64,
    grad_sup: f64,
}

impl std::fmt::Debug for Rhs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rhs")
            .field("sup", &self.sup)
            .field("grad_sup", &self.grad_sup)
            .finish()
    }
}

impl Rhs {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(v: f64) -> Self {
        Rhs {
            kind: RhsKind::Constant(v),
            sup: v.abs(),
            grad_sup: 0.0,
        }
    }

    /// f with its gradient; `sup` and `grad_sup` must bound them on the closure of Ω.
    pub fn new(
        value: impl Fn(Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Point) -> Vec2 + Send + Sync + 'static,
        sup: f64,
        grad_sup: f64,
    ) -> Self {
        Rhs {
            kind: RhsKind::Function {
                value: Arc::new(value),
                gradient: Arc::new(gradient),
            },
            sup,
            grad_sup,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, RhsKind::Constant(v) if v == 0.0)
    }

    #[inline]
    pub fn value(&self, x: Point) -> f64 {
        match &self.kind {
            RhsKind::Constant(v) => *v,
            RhsKind::Function { value, .. } => value(x),
        }
    }

    pub fn gradient(&self, x: Point) -> Vec2 {
        match &self.kind {
            RhsKind::Constant(_) => Vec2::zeros(),
            RhsKind::Function { gradient, .. } => gradient(x),
        }
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn grad_sup(&self) -> f64 {
        self.grad_sup
    }

    pub fn combine(&self, a: f64, other: &Rhs, b: f64) -> Self {
        let (f, g) = (self.clone(), other.clone());
        let (f2, g2) = (self.clone(), other.clone());
        Rhs {
            kind: RhsKind::Function {
                value: Arc::new(move |x| a * f.value(x) + b * g.value(x)),
                gradient: Arc::new(move |x| f2.gradient(x) * a + g2.gradient(x) * b),
            },
            sup: a.abs() * self.sup + b.abs() * other.sup,
            grad_sup: a.abs() * self.grad_sup + b.abs() * other.grad_sup,
        }
    }

    /// Largest ratio of sampled |f|, |∇f| to the declared bounds (≤ 1 when honest).
    pub fn bound_ratio(&self, samples: &[Point]) -> f64 {
        samples.iter().fold(0.0f64, |m, &x| {
            let r1 = if self.sup > 0.0 { self.value(x).abs() / self.sup } else if self.value(x) != 0.0 { f64::INFINITY } else { 0.0 };
            let g = self.gradient(x).norm();
            let r2 = if self.grad_sup > 0.0 { g / self.grad_sup } else if g != 0.0 { f64::INFINITY } else { 0.0 };
            m.max(r1).max(r2)
        })
    }
}
