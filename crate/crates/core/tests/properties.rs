use std::f64::consts::TAU;

use proptest::prelude::*;

use charflow_core::builtin::builtin;
use charflow_core::bv_analysis::discrete_tv;
use charflow_core::characteristics::{integrate_backward, StepOptions};
use charflow_core::grid::{CellKind, GridFunction, GridSpec};
use charflow_core::linear_solver::{evaluate_solution, BoundaryData, LinearProblem, Rhs};
use charflow_core::quasilinear::{cone_project, g_tilde};
use charflow_core::{Point, Vec2};

const STEP: f64 = 1e-2;

fn opts() -> StepOptions {
    StepOptions::with_step(STEP)
}

/// A point of the open unit disk, away from the origin and the boundary.
fn disk_point() -> impl Strategy<Value = Point> {
    (0.05f64..0.95, 0.0f64..TAU).prop_map(|(r, a)| Point::new(r * a.cos(), r * a.sin()))
}

fn wave(k: f64, phase: f64) -> BoundaryData {
    BoundaryData::function((0.0, TAU), move |s| (k * s + phase).sin())
}

fn affine(c0: f64, c1: f64, c2: f64) -> Rhs {
    Rhs::new(
        move |x: Point| c0 + c1 * x.x + c2 * x.y,
        move |_| Vec2::new(c1, c2),
        c0.abs() + c1.abs() + c2.abs(),
        c1.hypot(c2),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monotone_data_transform_commutes(x in disk_point(), k in 1u32..4, phase in 0.0f64..TAU) {
        // With f = 0 the solution transports data: U[φ∘u₀] = φ∘U[u₀].
        let b = builtin("spiral").unwrap();
        let phi = |t: f64| t * t * t + 2.0 * t;
        let p = LinearProblem::from_builtin(&b, wave(k as f64, phase), Rhs::zero());
        let q = p.with_data(
            BoundaryData::function((0.0, TAU), move |s| phi((k as f64 * s + phase).sin())),
            Rhs::zero(),
        );
        let u = evaluate_solution(&p, x, &opts()).unwrap();
        let v = evaluate_solution(&q, x, &opts()).unwrap();
        prop_assert!((v - phi(u)).abs() <= 1e-12, "{} vs {}", v, phi(u));
    }

    #[test]
    fn pointwise_superposition(
        x in disk_point(),
        a in -3.0f64..3.0,
        c in -3.0f64..3.0,
        k in 1u32..4,
        f in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
    ) {
        let b = builtin("radial").unwrap();
        let (u0, v0) = (wave(k as f64, 0.3), wave(1.0, 1.7));
        let (f1, f2) = (affine(f.0, f.1, f.2), affine(f.2, f.0, f.1));
        let p = LinearProblem::from_builtin(&b, u0.clone(), f1.clone());
        let q = p.with_data(v0.clone(), f2.clone());
        let w = p.with_data(u0.combine(a, &v0, c), f1.combine(a, &f2, c));
        let lhs = evaluate_solution(&w, x, &opts()).unwrap();
        let rhs = a * evaluate_solution(&p, x, &opts()).unwrap() + c * evaluate_solution(&q, x, &opts()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn solution_respects_linf_bound(x in disk_point(), amp in 0.1f64..3.0, f0 in -2.0f64..2.0) {
        let b = builtin("disk-segment").unwrap();
        let u0 = BoundaryData::function((0.0, TAU), move |s| amp * s.cos()).with_bounds(amp, 4.0 * amp);
        let p = LinearProblem::from_builtin(&b, u0, Rhs::constant(f0));
        prop_assume!(!b.tf.on_sigma(x));
        let u = evaluate_solution(&p, x, &opts()).unwrap();
        prop_assert!(u.abs() <= p.linf_bound().unwrap());
    }

    #[test]
    fn constants_are_transported_exactly(x in disk_point(), v in -5.0f64..5.0) {
        let b = builtin("spiral").unwrap();
        let p = LinearProblem::from_builtin(&b, BoundaryData::constant(v), Rhs::zero());
        prop_assert_eq!(evaluate_solution(&p, x, &opts()).unwrap(), v);
    }

    #[test]
    fn backward_clock_is_exact(x in disk_point()) {
        let b = builtin("spiral").unwrap();
        let tr = integrate_backward(&b.scaled_field(), x, &StepOptions::default()).unwrap();
        prop_assert!(tr.clock_deviation() <= 1e-6);
        prop_assert!(tr.endpoint.norm() - 1.0 <= 1e-9);
    }

    #[test]
    fn reflection_flips_the_solution(x in disk_point(), k in 1u32..4, phase in 0.0f64..TAU) {
        // disk-segment is symmetric under y ↦ −y, so reflected data give the reflected solution.
        let b = builtin("disk-segment").unwrap();
        prop_assume!(x.y.abs() > 1e-3 && !b.tf.on_sigma(x));
        let region = b.region();
        let data = move |s: f64| (k as f64 * s + phase).sin();
        let flip = {
            let region = region.clone();
            move |s: f64| {
                let y = region.boundary_position(s);
                data(region.project_to_boundary(Point::new(y.x, -y.y)).param)
            }
        };
        let p = LinearProblem::from_builtin(&b, BoundaryData::function((0.0, TAU), data), Rhs::zero());
        let q = p.with_data(BoundaryData::function((0.0, TAU), flip), Rhs::zero());
        let u = evaluate_solution(&p, x, &opts()).unwrap();
        let v = evaluate_solution(&q, Point::new(x.x, -x.y), &opts()).unwrap();
        prop_assert!((u - v).abs() <= 1e-9, "{} vs {}", u, v);
    }

    #[test]
    fn boundary_projection_is_identity_on_the_boundary(s in 0.0f64..TAU) {
        for name in ["radial", "rect-skeleton"] {
            let b = builtin(name).unwrap();
            let (lo, hi) = b.region().boundary_period();
            let t = lo + (hi - lo) * s / TAU;
            let y = b.region().boundary_position(t);
            let bp = b.region().project_to_boundary(y);
            prop_assert!((bp.point - y).norm() <= 1e-12 && bp.dist <= 1e-12);
            prop_assert!((b.region().boundary_position(bp.param) - y).norm() <= 1e-12);
        }
    }

    #[test]
    fn time_transform_is_monotone(t in 0.0f64..1.0, dt in 1e-6f64..0.5) {
        let tf = builtin("radial").unwrap().tf;
        let (a, b) = (tf.t0_of(t), tf.t0_of((t + dt).min(1.0)));
        prop_assert!(a < b || (t + dt >= 1.0 && a <= b));
        prop_assert_eq!(tf.t0_of(0.0), 0.0);
        prop_assert_eq!(tf.t0_of(1.0), 1.0);
    }

    #[test]
    fn tv_is_a_seminorm(
        u in prop::collection::vec(-3.0f64..3.0, 64),
        v in prop::collection::vec(-3.0f64..3.0, 64),
        a in -4.0f64..4.0,
        shift in -2.0f64..2.0,
    ) {
        let spec = GridSpec::new(8, 8, Point::zeros(), 0.125);
        let mask = vec![CellKind::Inside; 64];
        let gu = GridFunction::new(spec, u, mask.clone());
        let gv = GridFunction::new(spec, v, mask);
        let sum = gu.combine(1.0, &gv, 1.0);
        prop_assert!(discrete_tv(&sum) <= discrete_tv(&gu) + discrete_tv(&gv) + 1e-12);
        prop_assert!((discrete_tv(&gu.map(|x| a * x)) - a.abs() * discrete_tv(&gu)).abs() <= 1e-12);
        prop_assert!((discrete_tv(&gu.map(|x| x + shift)) - discrete_tv(&gu)).abs() <= 1e-12);
    }

    #[test]
    fn cone_projection_is_causal_and_unit(a in 0.0f64..TAU, b in 0.0f64..TAU, beta in 0.05f64..0.95) {
        let d = Vec2::new(a.cos(), a.sin());
        let n = Vec2::new(b.cos(), b.sin());
        let c = cone_project(d, n, beta);
        prop_assert!(c.dot(&n) >= beta - 1e-12);
        prop_assert!((c.norm() - 1.0).abs() <= 1e-12);
        if d.dot(&n) >= beta {
            prop_assert_eq!(c, d);
        }
    }

    #[test]
    fn clamp_fixed_points(t in -5.0f64..5.0) {
        let g = g_tilde(t);
        prop_assert_eq!(g_tilde(g), g);
        prop_assert_eq!(g == t, t.abs() <= 1.0);
    }
}
