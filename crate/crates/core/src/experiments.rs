//! Verification suite and numerical experiments behind the `verify`,
//! `stability` and `converge` commands.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::builtin::{builtin, radial, Builtin, SPIRAL_ANGLE};
use crate::bv_analysis::{aux_norms, check_bounds, discrete_tv, estimate_bv, tv_bound_interior, BVEstimate, TV_SLACK};
use crate::characteristics::{
    arc_length_bound_check, integrate_backward, integrate_forward, jacobian_xi, stop_level, StepOptions,
    SIGMA_STEP_FRACTION,
};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::linear_solver::{
    boundary_trace_decay, evaluate_solution, restart_solve, solve_on_grid, trace_on_level, traces_on_stopset,
    BoundaryData, GridOptions, LinearProblem, Rhs, StopTraces,
};
use crate::report::CsvTable;
use crate::{Point, Vec2};

/// One pass/fail line of a report.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub case: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    fn le(name: &str, case: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            case: case.into(),
            passed: value <= bound,
            value,
            bound,
        }
    }

    fn flag(name: &str, case: &str, passed: bool, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            case: case.into(),
            passed,
            value,
            bound,
        }
    }
}

/// Full-period cosine of the boundary parameter; on the unit circle this is cos θ.
pub fn cosine_data(b: &Builtin) -> BoundaryData {
    let (a, l) = {
        let (a, b) = b.domain.boundary.period();
        (a, b - a)
    };
    BoundaryData::function((a, a + l), move |s| (TAU * (s - a) / l).cos()).with_bounds(1.0, 4.0)
}

/// `f(x) = 1/2 + x₁/4`, with ‖f‖∞ ≤ 3/4 on domains inside |x₁| ≤ 1.
pub fn affine_rhs() -> Rhs {
    Rhs::new(|x| 0.5 + 0.25 * x.x, |_| Vec2::new(0.25, 0.0), 0.75, 0.25)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyConfig {
    pub cases: Vec<String>,
    pub grid: usize,
    pub step: f64,
    pub max_steps: Option<usize>,
    /// Forward characteristics per case for the arc-length and clock checks.
    pub traces: usize,
    /// Random (t, s) pairs for the det Dξ sandwich.
    pub jacobian_samples: usize,
    pub seed: u64,
    /// Replaces the declared β of every case (a negative control when too large).
    pub beta: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            cases: crate::builtin::BUILTIN_NAMES.iter().map(|s| s.to_string()).collect(),
            grid: 128,
            step: crate::characteristics::DEFAULT_STEP,
            max_steps: None,
            traces: 1000,
            jacobian_samples: 200,
            seed: 7,
            beta: None,
        }
    }
}

impl VerifyConfig {
    /// Tolerances scale up by this factor below the default grid.
    pub fn slack_factor(&self) -> f64 {
        (128.0 / self.grid as f64).max(1.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub checks: Vec<Check>,
    pub bounds: Vec<(String, BVEstimate)>,
    pub passed: bool,
}

/// Finite-difference step for ∂ξ in the sandwich check.
pub const JACOBIAN_FD_STEP: f64 = 1e-4;
/// Clock-identity tolerance at the default step.
pub const CLOCK_TOL: f64 = 1e-6;
/// Restart-versus-direct tolerance at grid 128.
pub const RESTART_TOL: f64 = 5e-3;

pub fn verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut bounds = Vec::new();
    for name in &cfg.cases {
        let mut b = builtin(name).ok_or_else(|| Error::InvalidArgument(format!("unknown case {name}")))?;
        if let Some(beta) = cfg.beta {
            b.c.beta = beta;
        }
        verify_case(cfg, &b, &mut checks, &mut bounds)?;
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        config: cfg.clone(),
        checks,
        bounds,
        passed,
    })
}

fn verify_case(cfg: &VerifyConfig, b: &Builtin, checks: &mut Vec<Check>, bounds: &mut Vec<(String, BVEstimate)>) -> Result<()> {
    let name = b.name;
    let opts = StepOptions {
        step: cfg.step,
        max_steps: cfg.max_steps,
    };
    let grid_opts = GridOptions {
        step: opts,
        ..GridOptions::default()
    };
    let slack = cfg.slack_factor();
    let p = LinearProblem::from_builtin(b, cosine_data(b), Rhs::zero());

    let causal = match p.validate(2 * cfg.grid) {
        Ok(est) => Check::flag("causality", name, true, est, b.beta()),
        Err(Error::BetaViolation { estimated, .. }) => Check::flag("causality", name, false, estimated, b.beta()),
        Err(e) => return Err(e),
    };
    checks.push(causal);

    let forward = forward_traces(b, cfg.traces, &opts)?;
    let arc = arc_length_bound_check(&forward, b.beta(), b.m0());
    checks.push(Check::flag("arc length", name, arc.passed, arc.max_arc_length, arc.bound));
    let clock = forward
        .iter()
        .map(|t| t.clock_deviation())
        .fold(random_backward_clock(b, cfg.jacobian_samples, cfg.seed, &opts)?, f64::max);
    checks.push(Check::le("clock identity", name, clock, CLOCK_TOL * slack));

    let sandwich = det_sandwich(b, cfg.jacobian_samples, cfg.seed, cfg.step)?;
    checks.push(Check::flag(
        "det sandwich",
        name,
        sandwich.violations == 0,
        sandwich.violations as f64,
        0.0,
    ));

    for (label, data) in [("f=0", Rhs::zero()), ("f=affine", affine_rhs())] {
        let q = p.with_data(cosine_data(b), data);
        let g = solve_on_grid(&q, cfg.grid, &grid_opts)?;
        let aux = if q.f.is_zero() {
            None
        } else {
            Some(aux_norms(b.domain.as_ref(), &b.tf, &b.c, cfg.grid)?)
        };
        let traces = stop_traces(&q, 64, &opts)?;
        let est = estimate_bv(&q, &g, aux.as_ref(), &traces)?;
        let rep = check_bounds(&est);
        let case = format!("{name} {label}");
        checks.push(Check::flag("linf bound", &case, rep.linf_passed, est.linf, est.linf_bound));
        checks.push(Check::flag(
            "tv bound",
            &case,
            rep.tv_passed,
            est.tv_discrete,
            est.tv_bound_total * (1.0 + rep.tv_slack),
        ));
        checks.push(Check::flag(
            "jump mass",
            &case,
            rep.jump_passed,
            est.jump_mass_sigma,
            2.0 * est.linf_bound * est.sigma_length,
        ));
        bounds.push((case, est));
    }

    let restart = restart_error(&p, cfg.grid, 0.5, &grid_opts)?;
    checks.push(Check::le("restart", name, restart, RESTART_TOL * slack));

    let (a, len) = {
        let (a, b) = b.domain.boundary.period();
        (a, b - a)
    };
    let decay = boundary_trace_decay(&p, a + 0.3 * len, &[0.2, 0.1, 0.05, 0.025], 8, &opts)?;
    let decreasing = decay.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check::flag(
        "boundary trace",
        name,
        decreasing,
        *decay.last().unwrap(),
        decay[0],
    ));
    Ok(())
}

/// Forward characteristics from `n` equally spaced boundary parameters.
pub fn forward_traces(b: &Builtin, n: usize, opts: &StepOptions) -> Result<Vec<crate::characteristics::CharacteristicTrace>> {
    let sf = b.scaled_field();
    let (a, e) = b.domain.boundary.period();
    (0..n)
        .into_par_iter()
        .map(|k| integrate_forward(&sf, a + (e - a) * (k as f64 + 0.5) / n as f64, opts))
        .collect()
}

/// Stop-set traces on every arc; empty for a point Σ.
pub fn stop_traces(p: &LinearProblem, n: usize, opts: &StepOptions) -> Result<Vec<StopTraces>> {
    let Some(sigma) = p.region().stopset() else {
        return Ok(Vec::new());
    };
    if sigma.is_degenerate() {
        return Ok(Vec::new());
    }
    (0..sigma.arcs().len()).map(|k| traces_on_stopset(p, k, n, opts)).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SandwichSummary {
    pub samples: usize,
    pub violations: usize,
    pub min_det: f64,
    /// Largest `|∂ₜξ||∂ₛξ| − det/β`.
    pub max_excess: f64,
    pub slack: f64,
}

/// `det Dξ > 0` and `|∂ₜξ||∂ₛξ| ≤ det/β + 10h` at random (t, s).
pub fn det_sandwich(b: &Builtin, n: usize, seed: u64, step: f64) -> Result<SandwichSummary> {
    let sf = b.scaled_field();
    let (a, e) = b.domain.boundary.period();
    let top = 0.9 * stop_level(&b.tf);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.02..top), rng.random_range(a..e)))
        .collect();
    let h = JACOBIAN_FD_STEP;
    let slack = 10.0 * h;
    let probes: Vec<_> = pairs
        .par_iter()
        .map(|&(t, s)| jacobian_xi(&sf, t, s, h, step))
        .collect::<Result<_>>()?;
    let beta = b.beta();
    Ok(SandwichSummary {
        samples: n,
        violations: probes.iter().filter(|j| !j.sandwich_holds(beta, slack)).count(),
        min_det: probes.iter().map(|j| j.det).fold(f64::INFINITY, f64::min),
        max_excess: probes
            .iter()
            .map(|j| j.dt_norm * j.ds_norm - j.det / beta)
            .fold(f64::NEG_INFINITY, f64::max),
        slack,
    })
}

/// Max difference between the restarted and the direct solution on
/// cells with `T₀ > λ`.
pub fn restart_error(p: &LinearProblem, resolution: usize, lambda: f64, opts: &GridOptions) -> Result<f64> {
    let direct = solve_on_grid(p, resolution, opts)?;
    let trace = trace_on_level(p, lambda, 4096, &opts.step)?;
    let restarted = restart_solve(p, &trace, direct.spec, opts)?;
    Ok((0..direct.values.len())
        .filter(|&i| {
            restarted.mask[i] == crate::grid::CellKind::Inside
                && direct.mask[i] == crate::grid::CellKind::Inside
                && p.tf().t0(direct.spec.center_of(i)) > lambda
        })
        .map(|i| (restarted.values[i] - direct.values[i]).abs())
        .fold(0.0, f64::max))
}

/// Jump mass on Σ for the disk-segment case with the given data.
pub fn disk_segment_jump(u0: BoundaryData, n: usize, opts: &StepOptions) -> Result<f64> {
    let b = builtin("disk-segment").expect("built in");
    let p = LinearProblem::from_builtin(&b, u0, Rhs::zero());
    Ok(crate::bv_analysis::jump_mass_sigma(&stop_traces(&p, n, opts)?))
}

/// L¹ distance between the cellwise-constant grid function and `exact`,
/// by `sub × sub` sub-cell samples that lie in `inside`.
pub fn interpolation_floor(
    g: &GridFunction,
    exact: impl Fn(Point) -> f64 + Sync,
    inside: impl Fn(Point) -> bool + Sync,
    sub: usize,
) -> f64 {
    let h = g.spec.spacing;
    let w = h / sub as f64;
    g.domain_cells()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| {
            let c = g.spec.center_of(i);
            let mut sum = 0.0;
            for a in 0..sub {
                for b in 0..sub {
                    let x = c + Vec2::new((a as f64 + 0.5) * w - h / 2.0, (b as f64 + 0.5) * w - h / 2.0);
                    if inside(x) {
                        sum += (g.values[i] - exact(x)).abs() * w * w;
                    }
                }
            }
            sum
        })
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityConfig {
    pub grid: usize,
    pub step: f64,
    pub theta0: f64,
    pub levels: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            grid: 128,
            step: crate::characteristics::DEFAULT_STEP,
            theta0: PI / 6.0,
            levels: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityRow {
    pub n: usize,
    pub theta: f64,
    pub l1_error: f64,
    pub tv: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub config: StabilityConfig,
    pub rows: Vec<StabilityRow>,
    /// L¹ distance of the unperturbed grid solution to x₁/|x|.
    pub interpolation_floor: f64,
    /// L¹ error of the θ = 0 problem against itself.
    pub theta_zero_error: f64,
    pub tv_cap: f64,
    pub strictly_decreasing: bool,
    pub final_within_floor: bool,
    pub max_ratio: f64,
    pub ratios_ok: bool,
    pub tv_ok: bool,
    pub passed: bool,
}

impl StabilityReport {
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["n", "theta", "l1_error", "tv"]);
        for r in &self.rows {
            t.push(vec![r.n as f64, r.theta, r.l1_error, r.tv]);
        }
        t
    }
}

/// Largest admissible ratio of successive L¹ errors for n ≥ 1.
pub const STABILITY_RATIO: f64 = 0.75;

/// Radial base case with u₀ = cos θ and the fields rotated by θₙ = θ₀/2ⁿ.
pub fn stability(cfg: &StabilityConfig) -> Result<StabilityReport> {
    let opts = GridOptions::with_step(cfg.step);
    let base = radial(0.0);
    let p = LinearProblem::from_builtin(&base, BoundaryData::cos(), Rhs::zero());
    let u = solve_on_grid(&p, cfg.grid, &opts)?;
    let again = solve_on_grid(&p, cfg.grid, &opts)?;
    let floor = interpolation_floor(&u, |x| x.x / x.norm(), |x| x.norm() <= 1.0, 4);
    let worst = radial(cfg.theta0);
    let tv_cap = tv_bound_interior(&LinearProblem::from_builtin(&worst, BoundaryData::cos(), Rhs::zero()), None)?;
    let mut rows = Vec::with_capacity(cfg.levels);
    for n in 0..cfg.levels {
        let theta = cfg.theta0 / 2f64.powi(n as i32);
        let pn = LinearProblem::from_builtin(&radial(theta), BoundaryData::cos(), Rhs::zero());
        let un = solve_on_grid(&pn, cfg.grid, &opts)?;
        rows.push(StabilityRow {
            n,
            theta,
            l1_error: un.l1_distance(&u),
            tv: discrete_tv(&un),
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].l1_error < w[0].l1_error);
    let final_within_floor = rows.last().is_some_and(|r| r.l1_error <= 3.0 * floor);
    let max_ratio = rows
        .windows(2)
        .skip(1)
        .map(|w| w[1].l1_error / w[0].l1_error)
        .fold(0.0, f64::max);
    let ratios_ok = max_ratio <= STABILITY_RATIO;
    let tv_ok = rows.iter().all(|r| r.tv <= tv_cap * (1.0 + TV_SLACK));
    let theta_zero_error = again.l1_distance(&u);
    Ok(StabilityReport {
        config: cfg.clone(),
        passed: strictly_decreasing && final_within_floor && ratios_ok && tv_ok && theta_zero_error <= 2.0 * floor,
        rows,
        interpolation_floor: floor,
        theta_zero_error,
        tv_cap,
        strictly_decreasing,
        final_within_floor,
        max_ratio,
        ratios_ok,
        tv_ok,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergeConfig {
    pub steps: Vec<f64>,
    pub grids: Vec<usize>,
    /// Built-in used for the TV study.
    pub tv_case: String,
    /// Sample points per radius ring and rings, for the step study.
    pub points: usize,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            steps: vec![1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3],
            grids: vec![64, 128, 256],
            tv_case: "radial".into(),
            points: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepRow {
    pub step: f64,
    /// Spiral case against its closed form.
    pub max_error: f64,
    /// Unrotated radial case against x₁/|x|.
    pub radial_error: f64,
    /// Constant data against the constant.
    pub constant_error: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridRow {
    pub grid: usize,
    pub tv: f64,
    /// |TV(grid) − TV(grid/2)|; 0 on the first row.
    pub tv_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergeReport {
    pub config: ConvergeConfig,
    pub step_rows: Vec<StepRow>,
    pub grid_rows: Vec<GridRow>,
    /// Largest step taken unshortened at every evaluation point; larger
    /// steps are cut near Σ and stay out of the order fit.
    pub fit_max_step: f64,
    /// Least-squares slope of log error against log step, over steps up to
    /// `fit_max_step` with errors above 1e−11.
    pub observed_order: f64,
    /// error(1e−2)/error(1e−3), when both steps are present.
    pub drop_1e2_1e3: Option<f64>,
    /// log₂ of successive TV-difference ratios.
    pub tv_orders: Vec<f64>,
    /// Successive TV differences shrink by at least 30%.
    pub tv_shrinks: bool,
    /// |ΔTV|/TV ≤ 5% for each doubling.
    pub tv_cauchy: bool,
    pub order_ok: bool,
    pub passed: bool,
}

impl ConvergeReport {
    pub fn step_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["step", "max_error", "radial_error", "constant_error"]);
        for r in &self.step_rows {
            t.push(vec![r.step, r.max_error, r.radial_error, r.constant_error]);
        }
        t
    }

    pub fn grid_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["grid", "tv", "tv_diff"]);
        for r in &self.grid_rows {
            t.push(vec![r.grid as f64, r.tv, r.tv_diff]);
        }
        t
    }
}

/// u for the spiral field of angle θ with u₀ = cos: cos(φ + tan θ·ln(1/r)).
pub fn spiral_exact(theta: f64, x: Point) -> f64 {
    (x.y.atan2(x.x) + theta.tan() * (1.0 / x.norm()).ln()).cos()
}

/// Errors below this are treated as rounding.
const ROUNDING_FLOOR: f64 = 1e-11;

pub fn converge(cfg: &ConvergeConfig) -> Result<ConvergeReport> {
    let m = cfg.points.max(1);
    let pts: Vec<Point> = (0..m)
        .flat_map(|i| {
            let r = 0.1 + 0.8 * (i as f64 + 0.5) / m as f64;
            (0..m).map(move |j| {
                let a = TAU * (j as f64 + 0.25) / m as f64;
                Point::new(r * a.cos(), r * a.sin())
            })
        })
        .collect();
    let spiral = LinearProblem::from_builtin(&radial(SPIRAL_ANGLE), BoundaryData::cos(), Rhs::zero());
    let plain = LinearProblem::from_builtin(&radial(0.0), BoundaryData::cos(), Rhs::zero());
    let constant = plain.with_data(BoundaryData::constant(0.7), Rhs::zero());
    let mut step_rows = Vec::with_capacity(cfg.steps.len());
    for &step in &cfg.steps {
        let opts = StepOptions::with_step(step);
        let max_err = |p: &LinearProblem, exact: &(dyn Fn(Point) -> f64 + Sync)| -> Result<f64> {
            let errs: Vec<f64> = pts
                .par_iter()
                .map(|&x| Ok((evaluate_solution(p, x, &opts)? - exact(x)).abs()))
                .collect::<Result<_>>()?;
            Ok(errs.into_iter().fold(0.0, f64::max))
        };
        step_rows.push(StepRow {
            step,
            max_error: max_err(&spiral, &|x| spiral_exact(SPIRAL_ANGLE, x))?,
            radial_error: max_err(&plain, &|x| x.x / x.norm())?,
            constant_error: max_err(&constant, &|_| 0.7)?,
        });
    }
    let tf = &spiral.tf();
    let fit_max_step = SIGMA_STEP_FRACTION * pts.iter().map(|&x| 1.0 - tf.t0(x)).fold(f64::INFINITY, f64::min);
    let fit: Vec<(f64, f64)> = step_rows
        .iter()
        .filter(|r| r.step <= fit_max_step && r.max_error > ROUNDING_FLOOR)
        .map(|r| (r.step.ln(), r.max_error.ln()))
        .collect();
    let observed_order = slope(&fit);
    let at = |s: f64| step_rows.iter().find(|r| (r.step - s).abs() < 1e-15).map(|r| r.max_error);
    let drop_1e2_1e3 = at(1e-2).zip(at(1e-3)).map(|(a, b)| a / b);

    let b = builtin(&cfg.tv_case).ok_or_else(|| Error::InvalidArgument(format!("unknown case {}", cfg.tv_case)))?;
    let p = LinearProblem::from_builtin(&b, cosine_data(&b), Rhs::zero());
    let mut grid_rows: Vec<GridRow> = Vec::with_capacity(cfg.grids.len());
    for &n in &cfg.grids {
        let tv = discrete_tv(&solve_on_grid(&p, n, &GridOptions::default())?);
        let tv_diff = grid_rows.last().map_or(0.0, |r| (tv - r.tv).abs());
        grid_rows.push(GridRow { grid: n, tv, tv_diff });
    }
    let diffs: Vec<f64> = grid_rows.iter().skip(1).map(|r| r.tv_diff).collect();
    let tv_orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let tv_shrinks = diffs.windows(2).all(|w| w[1] <= 0.7 * w[0]);
    let tv_cauchy = grid_rows.windows(2).all(|w| w[1].tv_diff <= 0.05 * w[0].tv);
    let order_ok = observed_order >= 3.5 && drop_1e2_1e3.is_none_or(|d| d >= 500.0);
    let grid_order_ok = tv_orders.iter().all(|&o| o >= 1.0);
    Ok(ConvergeReport {
        config: cfg.clone(),
        step_rows,
        grid_rows,
        fit_max_step,
        observed_order,
        drop_1e2_1e3,
        passed: order_ok && tv_shrinks && tv_cauchy && grid_order_ok,
        tv_orders,
        tv_shrinks,
        tv_cauchy,
        order_ok,
    })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SuperpositionSummary {
    pub pairs: usize,
    pub max_defect: f64,
}

/// Solves `(a·u₀ + b·v₀, a·f + b·g)` and compares with `a·u + b·v`
/// cellwise, for random data pairs and coefficients.
pub fn superposition(case: &str, resolution: usize, pairs: usize, seed: u64, opts: &GridOptions) -> Result<SuperpositionSummary> {
    let b = builtin(case).ok_or_else(|| Error::InvalidArgument(format!("unknown case {case}")))?;
    let (lo, hi) = b.domain.boundary.period();
    let len = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_data = |rng: &mut ChaCha8Rng| {
        let (k, phase, amp): (f64, f64, f64) = (rng.random_range(1..4) as f64, rng.random_range(0.0..TAU), rng.random_range(-2.0..2.0));
        let (c0, c1, c2): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let u0 = BoundaryData::function((lo, hi), move |s| amp * (k * TAU * (s - lo) / len + phase).sin());
        let f = Rhs::new(
            move |x: Point| c0 + c1 * x.x + c2 * x.y,
            move |_| Vec2::new(c1, c2),
            c0.abs() + c1.abs() + c2.abs(),
            c1.hypot(c2),
        );
        (u0, f)
    };
    let base = LinearProblem::from_builtin(&b, BoundaryData::constant(0.0), Rhs::zero());
    let spec = GridSpec::covering(&b.domain.boundary.bbox(), resolution);
    let mut max_defect: f64 = 0.0;
    for _ in 0..pairs {
        let (u0, f) = random_data(&mut rng);
        let (v0, g) = random_data(&mut rng);
        let (a, c) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let solve = |u0: BoundaryData, f: Rhs| crate::linear_solver::solve_on_spec(&base.with_data(u0, f), spec, opts);
        let u = solve(u0.clone(), f.clone());
        let v = solve(v0.clone(), g.clone());
        let w = solve(u0.combine(a, &v0, c), f.combine(a, &g, c));
        max_defect = max_defect.max(w.max_distance(&u.combine(a, &v, c)));
    }
    Ok(SuperpositionSummary { pairs, max_defect })
}

/// Backward traces from random interior points, for clock checks away from
/// the forward family.
pub fn random_backward_clock(b: &Builtin, n: usize, seed: u64, opts: &StepOptions) -> Result<f64> {
    let sf = b.scaled_field();
    let bbox = b.domain.boundary.bbox();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let x = Point::new(rng.random_range(bbox.lo().x..bbox.hi().x), rng.random_range(bbox.lo().y..bbox.hi().y));
        if crate::geometry::Region::contains(b.domain.as_ref(), x) && !b.tf.on_sigma(x) && 1.0 - b.tf.t(x) > 1e-6 {
            pts.push(x);
        }
    }
    let devs: Vec<f64> = pts
        .par_iter()
        .map(|&x| Ok(integrate_backward(&sf, x, opts)?.clock_deviation()))
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0].iter().map(|h| (h.ln(), (3.0 * h.powi(4)).ln())).collect();
        assert!((slope(&pts) - 4.0).abs() < 1e-12);
        assert!(slope(&pts[..1]).is_nan());
    }

    #[test]
    fn spiral_closed_form_solves_the_transport_equation() {
        // ⟨c, ∇u⟩ = 0 with c = N rotated by θ, N = −x/|x|.
        let th = SPIRAL_ANGLE;
        let x = Point::new(0.3, -0.45);
        let n = -x / x.norm();
        let c = crate::geometry::rotate(n, th);
        let h = 1e-6;
        let du = (spiral_exact(th, x + c * h) - spiral_exact(th, x - c * h)) / (2.0 * h);
        assert!(du.abs() < 1e-8, "{du}");
        let s: f64 = 1.1;
        assert!((spiral_exact(th, Point::new(s.cos(), s.sin())) - s.cos()).abs() < 1e-15);
    }

    #[test]
    fn interpolation_floor_of_exact_constant_is_zero() {
        let b = builtin("radial").unwrap();
        let p = LinearProblem::from_builtin(&b, BoundaryData::constant(2.0), Rhs::zero());
        let g = solve_on_grid(&p, 16, &GridOptions::with_step(1e-2)).unwrap();
        assert_eq!(interpolation_floor(&g, |_| 2.0, |x| x.norm() <= 1.0, 3), 0.0);
    }

    #[test]
    fn sandwich_holds_on_the_spiral() {
        let s = det_sandwich(&builtin("spiral").unwrap(), 20, 1, 1e-3).unwrap();
        assert_eq!(s.violations, 0, "{s:?}");
        assert!(s.min_det > 0.0);
    }
}
