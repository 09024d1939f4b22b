//! Quasi-linear problems `⟨c[u], Du⟩ = f[u]` by Picard iteration of the
//! linear solution operator `U`, with the a-priori self-mapping bounds.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::builtin::builtin;
use crate::bv_analysis::{aux_norms, discrete_tv, TV_SLACK};
use crate::error::{Error, Result};
use crate::geometry::perp;
use crate::grid::{GridFunction, GridSpec};
use crate::linear_solver::{solve_on_grid, solve_on_spec, BoundaryData, GridOptions, LinearProblem, Rhs};
use crate::report::CsvTable;
use crate::timefield::{causality_minimum, FnField, TimeField, TransportField};
use crate::{Point, Vec2};

type FieldFunctional = Arc<dyn Fn(&GridFunction) -> TransportField + Send + Sync>;
type RhsFunctional = Arc<dyn Fn(&GridFunction) -> Rhs + Send + Sync>;

/// The coefficient maps `v ↦ c[v]`, `v ↦ f[v]` with their uniform caps:
/// `m1` for ‖D_x c[v]‖_{L¹}, `m2` for ‖f[v]‖∞, `m3` for ‖∇_x f[v]‖∞.
#[derive(Clone)]
pub struct FunctionalCoefficients {
    c_of: FieldFunctional,
    f_of: RhsFunctional,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub beta: f64,
}

impl std::fmt::Debug for FunctionalCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionalCoefficients")
            .field("m1", &self.m1)
            .field("m2", &self.m2)
            .field("m3", &self.m3)
            .field("beta", &self.beta)
            .finish()
    }
}

impl FunctionalCoefficients {
    pub fn new(
        c_of: impl Fn(&GridFunction) -> TransportField + Send + Sync + 'static,
        f_of: impl Fn(&GridFunction) -> Rhs + Send + Sync + 'static,
        (m1, m2, m3): (f64, f64, f64),
        beta: f64,
    ) -> Self {
        FunctionalCoefficients {
            c_of: Arc::new(c_of),
            f_of: Arc::new(f_of),
            m1,
            m2,
            m3,
            beta,
        }
    }

    /// Coefficients that ignore their argument: `U` is the linear solve of `p`.
    pub fn frozen(p: &LinearProblem, m1: f64) -> Self {
        let (c, f) = (p.c().clone(), p.f.clone());
        let (m2, m3) = (f.sup(), f.grad_sup());
        Self::new(move |_| c.clone(), move |_| f.clone(), (m1, m2, m3), p.beta())
    }

    /// c[v], carrying the uniform β.
    pub fn c_of(&self, v: &GridFunction) -> TransportField {
        let mut c = (self.c_of)(v);
        c.beta = self.beta;
        c
    }

    pub fn f_of(&self, v: &GridFunction) -> Rhs {
        (self.f_of)(v)
    }
}

/// Minimal ⟨c[v], N⟩ over the domain cells of `v` away from Σ.
fn sampled_causality(tf: &TimeField, c: &TransportField, v: &GridFunction, tube: f64) -> Result<(f64, Point)> {
    let samples: Vec<Point> = v
        .domain_cells()
        .map(|i| v.spec.center_of(i))
        .filter(|&x| 1.0 - tf.t(x) >= tube && tf.normal(x).is_some())
        .collect();
    causality_minimum(tf, c, &samples)
}

/// Largest sampled `|f[v]|/M₂` and `|∇f[v]|/M₃` and smallest ⟨c[v], N⟩/β over
/// the given arguments.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoefficientCheck {
    pub min_causality: f64,
    pub rhs_ratio: f64,
    pub passed: bool,
}

pub fn check_coefficients(fc: &FunctionalCoefficients, base: &LinearProblem, args: &[GridFunction]) -> Result<CoefficientCheck> {
    let mut min_causality = f64::INFINITY;
    let mut rhs_ratio: f64 = 0.0;
    for v in args {
        let (b, _) = sampled_causality(base.tf(), &fc.c_of(v), v, 1e-8)?;
        min_causality = min_causality.min(b);
        let f = fc.f_of(v);
        let pts: Vec<Point> = v.domain_cells().map(|i| v.spec.center_of(i)).collect();
        for x in pts {
            let r2 = ratio(f.value(x).abs(), fc.m2);
            let r3 = ratio(f.gradient(x).norm(), fc.m3);
            rhs_ratio = rhs_ratio.max(r2).max(r3);
        }
    }
    Ok(CoefficientCheck {
        min_causality,
        rhs_ratio,
        passed: min_causality >= fc.beta - 1e-9 && rhs_ratio <= 1.0 + 1e-12,
    })
}

fn ratio(value: f64, cap: f64) -> f64 {
    if cap > 0.0 {
        value / cap
    } else if value > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// U[v]: the linear solve with coefficients frozen at `v`, on the raster of `v`.
pub fn apply_u(fc: &FunctionalCoefficients, base: &LinearProblem, v: &GridFunction, opts: &GridOptions) -> Result<GridFunction> {
    let c = fc.c_of(v);
    let (beta_est, at) = sampled_causality(base.tf(), &c, v, opts.tube.max(1e-8))?;
    if beta_est < fc.beta - 1e-9 {
        return Err(Error::NotCausal { beta_est, at });
    }
    let p = LinearProblem::new(base.region().clone(), base.tf().clone(), c, fc.f_of(v), base.u0.clone());
    Ok(solve_on_spec(&p, v.spec, opts))
}

/// `M_*` and `M_**` from the caps M₁–M₃ and the data caps M₄ = ‖u₀‖∞,
/// M₅ = |Du₀|(∂Ω).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SelfMapBounds {
    pub m_star: f64,
    pub m_starstar: f64,
    pub m4: f64,
    pub m5: f64,
}

impl SelfMapBounds {
    /// `dn_l1` is ‖DN‖_{L¹}; it is only needed when M₂ > 0.
    pub fn new(fc: &FunctionalCoefficients, base: &LinearProblem, dn_l1: Option<f64>) -> Result<Self> {
        let (beta, m0) = (fc.beta, base.m0()?);
        let (m4, m5) = (base.u0.sup(), base.u0.variation());
        let area = base.region().area();
        let sigma = base.region().stopset().map_or(0.0, |s| s.length());
        let linf = m4 + fc.m2 / (beta * m0);
        let mut m_starstar = 2.0 * linf * sigma + m5 / (beta * m0) + (fc.m2 / beta + fc.m3 / (beta * beta * m0)) * area;
        if fc.m2 > 0.0 {
            let dn = dn_l1.ok_or(Error::MissingAux("‖DN‖"))?;
            m_starstar += fc.m2 / (beta.powi(3) * m0) * (fc.m1 + dn);
        }
        Ok(SelfMapBounds {
            m_star: linf * area,
            m_starstar,
            m4,
            m5,
        })
    }

    /// Computes ‖DN‖_{L¹} on a raster of the given resolution when needed.
    pub fn for_problem(fc: &FunctionalCoefficients, base: &LinearProblem, resolution: usize) -> Result<Self> {
        let dn = if fc.m2 > 0.0 {
            Some(aux_norms(base.region().as_ref(), base.tf(), base.c(), resolution)?.dn_l1)
        } else {
            None
        };
        Self::new(fc, base, dn)
    }

    /// ‖u‖_{L¹} ≤ M_* and TV ≤ M_**·(1 + 10%).
    pub fn contains(&self, l1_norm: f64, tv: f64) -> bool {
        l1_norm <= self.m_star && tv <= self.m_starstar * (1.0 + TV_SLACK)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IterOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// ω in `u_{k+1} = (1 − ω)·u_k + ω·U[u_k]`.
    pub damping: f64,
    pub grid: GridOptions,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions {
            tol: 1e-6,
            max_iter: 50,
            damping: 1.0,
            grid: GridOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub n_iters: usize,
    /// ‖U[u_k] − u_k‖_{L¹} for k = 1..=n_iters.
    pub l1_residuals: Vec<f64>,
    pub l1_norms: Vec<f64>,
    pub tvs: Vec<f64>,
    pub converged: bool,
    pub final_l1_norm: f64,
    pub final_tv: f64,
    /// Every iterate satisfied both self-mapping inequalities.
    pub in_x: bool,
    pub bounds: SelfMapBounds,
    pub tol: f64,
    pub damping: f64,
}

impl FixedPointReport {
    /// Iteration log with columns `iter, l1_residual, l1_norm, tv`.
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["iter", "l1_residual", "l1_norm", "tv"]);
        for k in 0..self.n_iters {
            t.push(vec![(k + 1) as f64, self.l1_residuals[k], self.l1_norms[k], self.tvs[k]]);
        }
        t
    }

    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged {
                iterations: self.n_iters,
                residual: self.l1_residuals.last().copied().unwrap_or(f64::INFINITY),
            })
        }
    }
}

/// Damped Picard iteration from `seed`. Iterate k is
/// `u_k = (1 − ω)·u_{k−1} + ω·U[u_{k−1}]`, and the loop stops once
/// ‖U[u_k] − u_k‖_{L¹} ≤ tol. Non-convergence is reported, not raised;
/// see [`FixedPointReport::ensure_converged`].
pub fn solve_quasilinear(
    fc: &FunctionalCoefficients,
    base: &LinearProblem,
    seed: &GridFunction,
    opts: &IterOptions,
) -> Result<(GridFunction, FixedPointReport)> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 || !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tol {} > 0, max_iter {} ≥ 1 and damping {} ∈ (0, 1] required",
            opts.tol, opts.max_iter, opts.damping
        )));
    }
    let resolution = seed.spec.nx.max(seed.spec.ny);
    let bounds = SelfMapBounds::for_problem(fc, base, resolution)?;
    let omega = opts.damping;
    let mut u = seed.clone();
    let mut w = apply_u(fc, base, &u, &opts.grid)?;
    let mut report = FixedPointReport {
        n_iters: 0,
        l1_residuals: Vec::new(),
        l1_norms: Vec::new(),
        tvs: Vec::new(),
        converged: false,
        final_l1_norm: 0.0,
        final_tv: 0.0,
        in_x: true,
        bounds,
        tol: opts.tol,
        damping: omega,
    };
    for _ in 0..opts.max_iter {
        u = if omega == 1.0 { w } else { w.combine(omega, &u, 1.0 - omega) };
        w = apply_u(fc, base, &u, &opts.grid)?;
        let res = w.l1_distance(&u);
        let (norm, tv) = (u.l1_norm(), discrete_tv(&u));
        report.n_iters += 1;
        report.l1_residuals.push(res);
        report.l1_norms.push(norm);
        report.tvs.push(tv);
        report.in_x &= bounds.contains(norm, tv);
        if res <= opts.tol {
            report.converged = true;
            break;
        }
    }
    report.final_l1_norm = u.l1_norm();
    report.final_tv = discrete_tv(&u);
    Ok((u, report))
}

/// The clamp `g̃(t) = max(−1, min(t, 1))`; every α ∈ [−1, 1] is a fixed point.
pub fn g_tilde(t: f64) -> f64 {
    t.clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NonuniquenessRow {
    pub seed: f64,
    pub limit: f64,
    /// |α − g̃(α)|.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonuniquenessReport {
    /// ‖a‖_{L¹} by midpoint quadrature on the iteration raster.
    pub a_l1: f64,
    pub resolution: usize,
    pub rows: Vec<NonuniquenessRow>,
    pub distinct_limits: usize,
    /// At least two distinct fixed points were found.
    pub certified: bool,
    /// Iteration log of each seed, in seed order.
    pub logs: Vec<FixedPointReport>,
}

impl NonuniquenessReport {
    pub fn to_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["seed", "limit", "residual", "iterations", "converged"]);
        for r in &self.rows {
            t.push(vec![r.seed, r.limit, r.residual, r.iterations as f64, r.converged as u8 as f64]);
        }
        t
    }
}

/// Tolerance for counting two limits as the same fixed point.
const LIMIT_TOL: f64 = 1e-6;

/// Unit disk, `c = −x/|x|`, `u₀ = 0`, `f[v] = g(∫v)` with `g(t) = g̃(t/‖a‖)`.
/// Here `a = U[·]` for `f ≡ 1`, the arc length from the boundary, and each
/// seed `α₀` starts the iteration at `α₀·a`.
pub fn nonuniqueness_demo(resolution: usize, seeds: &[f64], opts: &IterOptions) -> Result<NonuniquenessReport> {
    let radial = builtin("radial").expect("radial is built in");
    let base = LinearProblem::from_builtin(&radial, BoundaryData::constant(0.0), Rhs::zero());
    let a = solve_on_grid(&base.with_data(BoundaryData::constant(0.0), Rhs::constant(1.0)), resolution, &opts.grid)?;
    let a_l1 = a.l1_norm();
    let fc = nonuniqueness_coefficients(&base, a_l1);
    let mut rows = Vec::with_capacity(seeds.len());
    let mut logs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (u, report) = solve_quasilinear(&fc, &base, &a.map(|v| seed * v), opts)?;
        let limit = u.integral() / a_l1;
        rows.push(NonuniquenessRow {
            seed,
            limit,
            residual: (limit - g_tilde(limit)).abs(),
            iterations: report.n_iters,
            converged: report.converged,
        });
        logs.push(report);
    }
    let mut limits: Vec<f64> = rows.iter().filter(|r| r.converged).map(|r| r.limit).collect();
    limits.sort_by(f64::total_cmp);
    limits.dedup_by(|x, y| (*x - *y).abs() <= LIMIT_TOL);
    Ok(NonuniquenessReport {
        a_l1,
        resolution,
        rows,
        distinct_limits: limits.len(),
        certified: limits.len() >= 2,
        logs,
    })
}

/// Coefficients of the non-uniqueness example over `base`; ‖D(x/|x|)‖_{L¹} = 2π.
pub fn nonuniqueness_coefficients(base: &LinearProblem, a_l1: f64) -> FunctionalCoefficients {
    let c = base.c().clone();
    FunctionalCoefficients::new(
        move |_| c.clone(),
        move |v| Rhs::constant(g_tilde(v.integral() / a_l1)),
        (2.0 * PI, 1.0, 0.0),
        base.beta(),
    )
}

/// Gaussian smoothing of `values` over the cells flagged in `include`,
/// renormalised by the included weight. `sigma` is a length.
fn blur(spec: &GridSpec, values: &[f64], include: &[bool], sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma / spec.spacing).ceil().max(1.0) as i64;
    let kernel: Vec<f64> = (-r..=r)
        .map(|k| {
            let d = k as f64 * spec.spacing / sigma;
            (-0.5 * d * d).exp()
        })
        .collect();
    let (nx, ny) = (spec.nx as i64, spec.ny as i64);
    let pass = |src: &[f64], wsrc: &[f64], horizontal: bool| -> (Vec<f64>, Vec<f64>) {
        let mut out = vec![0.0; src.len()];
        let mut wout = vec![0.0; src.len()];
        for iy in 0..ny {
            for ix in 0..nx {
                let (mut s, mut w) = (0.0, 0.0);
                for (k, kv) in (-r..=r).zip(&kernel) {
                    let (jx, jy) = if horizontal { (ix + k, iy) } else { (ix, iy + k) };
                    if jx < 0 || jy < 0 || jx >= nx || jy >= ny {
                        continue;
                    }
                    let j = (jy * nx + jx) as usize;
                    s += kv * src[j];
                    w += kv * wsrc[j];
                }
                let i = (iy * nx + ix) as usize;
                out[i] = s;
                wout[i] = w;
            }
        }
        (out, wout)
    };
    let w0: Vec<f64> = include.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let v0: Vec<f64> = values.iter().zip(&w0).map(|(v, w)| v * w).collect();
    let (v1, w1) = pass(&v0, &w0, true);
    let (v2, w2) = pass(&v1, &w1, false);
    v2.iter()
        .zip(&w2)
        .zip(values)
        .map(|((s, w), v)| if *w > 0.0 { s / w } else { *v })
        .collect()
}

/// Gaussian mollification of a grid function over its domain cells.
pub fn mollify(g: &GridFunction, sigma: f64) -> GridFunction {
    let include: Vec<bool> = g.mask.iter().map(|k| k.in_domain()).collect();
    let values = blur(&g.spec, &g.values, &include, sigma);
    let values = values
        .into_iter()
        .zip(&include)
        .map(|(v, &b)| if b { v } else { 0.0 })
        .collect();
    GridFunction::new(g.spec, values, g.mask.clone())
}

/// Gradients below this norm leave the isophote direction undefined.
const ISOPHOTE_EPS: f64 = 1e-6;

/// Rotates `d` toward `n` by the least angle giving ⟨d, n⟩ ≥ β; `n` unit.
pub fn cone_project(d: Vec2, n: Vec2, beta: f64) -> Vec2 {
    if d.dot(&n) >= beta {
        return d;
    }
    let side = if perp(n).dot(&d) >= 0.0 { 1.0 } else { -1.0 };
    n * beta + perp(n) * (side * (1.0 - beta * beta).max(0.0).sqrt())
}

/// Transport coefficients for inpainting: `c[v]` blends the level-line normal
/// N with the isophote tangent of the mollified image (known pixels outside
/// the mask, `v` inside), oriented along N and projected into the cone
/// ⟨c, N⟩ ≥ β. `f[v] ≡ 0`.
pub fn build_inpainting_coefficients(
    tf: &TimeField,
    image: &GridFunction,
    smoothing: f64,
    blend: f64,
    beta: f64,
) -> Result<FunctionalCoefficients> {
    if !(smoothing > 0.0) || !(0.0..=1.0).contains(&blend) || !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing {smoothing} > 0, blend {blend} ∈ [0, 1], beta {beta} ∈ (0, 1] required"
        )));
    }
    let image = image.clone();
    let tf = tf.clone();
    let c_of = move |v: &GridFunction| {
        let time = tf.clone();
        if blend == 0.0 {
            return TransportField::from_field(FnField(move |x| time.normal(x).unwrap_or_else(Vec2::zeros)), beta);
        }
        let grad = Arc::new(isophote_gradients(&image, v, smoothing));
        let spec = image.spec;
        TransportField::from_field(
            FnField(move |x| {
                let Some(n) = time.normal(x) else {
                    return Vec2::zeros();
                };
                let g: Vec2 = spec.bilinear(x, |i| grad[i]);
                if g.norm() < ISOPHOTE_EPS {
                    return n;
                }
                let mut p = perp(g) / g.norm();
                if p.dot(&n) < 0.0 {
                    p = -p;
                }
                let w = n * (1.0 - blend) + p * blend;
                let w = if w.norm() > 0.0 { w / w.norm() } else { n };
                cone_project(w, n, beta)
            }),
            beta,
        )
    };
    Ok(FunctionalCoefficients::new(c_of, |_| Rhs::zero(), (f64::INFINITY, 0.0, 0.0), beta))
}

/// Central-difference gradient of the mollified composite of `image` and `v`.
fn isophote_gradients(image: &GridFunction, v: &GridFunction, smoothing: f64) -> Vec<Vec2> {
    let spec = image.spec;
    let composite: Vec<f64> = (0..spec.len())
        .map(|i| if v.mask[i].in_domain() { v.values[i] } else { image.values[i] })
        .collect();
    let m = blur(&spec, &composite, &vec![true; spec.len()], smoothing);
    let (nx, ny, h) = (spec.nx, spec.ny, spec.spacing);
    (0..spec.len())
        .map(|i| {
            let (ix, iy) = spec.coords(i);
            let dx = match (ix > 0, ix + 1 < nx) {
                (true, true) => (m[i + 1] - m[i - 1]) / (2.0 * h),
                (false, true) => (m[i + 1] - m[i]) / h,
                (true, false) => (m[i] - m[i - 1]) / h,
                _ => 0.0,
            };
            let dy = match (iy > 0, iy + 1 < ny) {
                (true, true) => (m[i + nx] - m[i - nx]) / (2.0 * h),
                (false, true) => (m[i + nx] - m[i]) / h,
                (true, false) => (m[i] - m[i - nx]) / h,
                _ => 0.0,
            };
            Vec2::new(dx, dy)
        })
        .collect()
}

/// ‖U[mollify(v, σ)] − U[v]‖_{L¹} for each σ in `scales`.
pub fn continuity_probe(
    fc: &FunctionalCoefficients,
    base: &LinearProblem,
    v: &GridFunction,
    scales: &[f64],
    opts: &GridOptions,
) -> Result<Vec<f64>> {
    let u = apply_u(fc, base, v, opts)?;
    scales
        .iter()
        .map(|&s| Ok(apply_u(fc, base, &mollify(v, s), opts)?.l1_distance(&u)))
        .collect()
}
