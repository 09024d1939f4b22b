use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use charflow_core::builtin::{builtin, Builtin, BUILTIN_NAMES};
use charflow_core::bv_analysis::{aux_norms, check_bounds, estimate_bv};
use charflow_core::characteristics::StepOptions;
use charflow_core::error::Error;
use charflow_core::experiments::{
    affine_rhs, converge as run_converge, cosine_data, stability as run_stability, stop_traces, verify as run_verify,
    ConvergeConfig, StabilityConfig, VerifyConfig,
};
use charflow_core::inpaint::{inpaint as run_inpaint, InpaintConfig};
use charflow_core::linear_solver::{solve_on_grid, BoundaryData, GridOptions, LinearProblem, Rhs};
use charflow_core::pnm::PnmImage;
use charflow_core::quasilinear::{nonuniqueness_demo, IterOptions};
use charflow_core::report::{to_json_string, CsvTable, FLOAT_FORMAT};
use charflow_core::timefield::{estimate_m0, sample_region, TransportField};

use crate::{ConvergeArgs, InpaintArgs, NonuniqueArgs, SolveArgs, StabilityArgs, VerifyArgs};

/// Stop-set samples per arc in `solve` reports.
const STOP_SAMPLES: usize = 64;

pub fn parse_step(s: &str) -> Result<f64, String> {
    ranged(s, |v| v > 0.0 && v <= 1.0, "a step in (0, 1]")
}

pub fn parse_q(s: &str) -> Result<f64, String> {
    ranged(s, |v| v > 1.0 && v <= 64.0, "an exponent in (1, 64]")
}

pub fn parse_unit(s: &str) -> Result<f64, String> {
    ranged(s, |v| v > 0.0 && v <= 1.0, "a value in (0, 1]")
}

pub fn parse_weight(s: &str) -> Result<f64, String> {
    ranged(s, |v| (0.0..=1.0).contains(&v), "a value in [0, 1]")
}

pub fn parse_positive(s: &str) -> Result<f64, String> {
    ranged(s, |v| v > 0.0 && v.is_finite(), "a positive number")
}

fn ranged(s: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if ok(v) => Ok(v),
        _ => Err(format!("expected {what}, got `{s}`")),
    }
}

/// 2 for bad input, 3 for numerical failures.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::UnreadableImage { .. }
            | Error::MaskMismatch(_)
            | Error::EmptyMask
            | Error::DisconnectedMask(_)
            | Error::BetaViolation { .. }
            | Error::Io(_),
        ) => 2,
        Some(_) => 3,
        None => 2,
    }
}

fn case(name: &str) -> Result<Builtin> {
    builtin(name).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown case `{name}` (expected disk or one of {})", BUILTIN_NAMES.join(", "))).into()
    })
}

fn value_after<'a>(s: &'a str, key: &str) -> Option<&'a str> {
    s.strip_prefix(key).and_then(|r| r.strip_prefix('='))
}

fn number(s: &str, flag: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidArgument(format!("{flag}: `{s}` is not a finite number")).into())
}

fn boundary_data(spec: &str, b: &Builtin) -> Result<BoundaryData> {
    match spec {
        "cos" => Ok(cosine_data(b)),
        "step" => Ok(BoundaryData::upper_lower_step()),
        _ => match value_after(spec, "const") {
            Some(v) => Ok(BoundaryData::constant(number(v, "--data")?)),
            None => Err(Error::InvalidArgument(format!("--data: expected cos, step or const=<value>, got `{spec}`")).into()),
        },
    }
}

fn rhs(spec: &str) -> Result<Rhs> {
    match spec {
        "zero" => Ok(Rhs::zero()),
        "affine" => Ok(affine_rhs()),
        _ => match value_after(spec, "const") {
            Some(v) => Ok(Rhs::constant(number(v, "--rhs")?)),
            None => Err(Error::InvalidArgument(format!("--rhs: expected zero, affine or const=<value>, got `{spec}`")).into()),
        },
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_table(dir: &Path, name: &str, t: &CsvTable) -> Result<PathBuf> {
    let path = dir.join(name);
    t.write(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Writes `report.json` into `out`, or prints it when there is no directory.
fn emit(out: Option<&Path>, report: &Value) -> Result<()> {
    let text = to_json_string(report)?;
    match out {
        Some(dir) => write_text(&dir.join("report.json"), &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn solve(a: SolveArgs) -> Result<bool> {
    let b = case(&a.case)?;
    let u0 = boundary_data(&a.data, &b)?;
    let f = rhs(&a.rhs)?;
    let grid = a.grid as usize;
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
    }
    let mut p = LinearProblem::from_builtin(&b, u0, f);
    if let Some(q) = a.q {
        let tf = p.tf().clone().with_q(q);
        let samples = sample_region(p.region().as_ref(), &tf, grid, 1e-8);
        let m0 = estimate_m0(&tf, &samples)?;
        p = LinearProblem::new(p.region().clone(), tf.with_m0(m0), p.c().clone(), p.f.clone(), p.u0.clone());
    }
    if let Some(beta) = a.beta {
        let c = TransportField::new(p.c().field().clone(), beta);
        p = LinearProblem::new(p.region().clone(), p.tf().clone(), c, p.f.clone(), p.u0.clone());
    }
    let beta_est = p.validate(grid)?;
    let opts = GridOptions {
        step: StepOptions {
            step: a.step,
            max_steps: a.max_steps,
        },
        ..GridOptions::default()
    };
    let g = solve_on_grid(&p, grid, &opts)?;
    let aux = if p.f.is_zero() {
        None
    } else {
        Some(aux_norms(p.region().as_ref(), p.tf(), p.c(), grid)?)
    };
    let traces = stop_traces(&p, STOP_SAMPLES, &opts.step)?;
    let bounds = check_bounds(&estimate_bv(&p, &g, aux.as_ref(), &traces)?);
    let mut report = json!({
        "command": "solve",
        "float_format": FLOAT_FORMAT,
        "case": a.case,
        "data": a.data,
        "rhs": a.rhs,
        "grid": grid,
        "step": a.step,
        "q": p.tf().q(),
        "beta": p.beta(),
        "beta_est": beta_est,
        "m0": p.m0()?,
        "spacing": g.spec.spacing,
        "bounds": serde_json::to_value(&bounds)?,
        "aux": serde_json::to_value(aux)?,
    });
    if let Some(dir) = &a.out {
        let header = g.write_raster(&dir.join("solution"))?;
        report["raster"] = serde_json::to_value(&header)?;
    }
    emit(a.out.as_deref(), &report)?;
    Ok(true)
}

pub fn inpaint(a: InpaintArgs) -> Result<bool> {
    let image = PnmImage::read(&a.image)?;
    let mask = PnmImage::read(&a.mask)?;
    if let Some(parent) = a.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            bail!(Error::InvalidArgument(format!("output directory {} does not exist", parent.display())));
        }
    }
    let cfg = InpaintConfig {
        blend: a.blend,
        smoothing: a.smoothing,
        beta: a.beta,
        tol: a.tol,
        max_iter: a.max_iter as usize,
        damping: a.damping,
        step: a.step,
    };
    let (out, rep) = run_inpaint(&image, &mask, &cfg)?;
    out.write(&a.output)?;
    let report = json!({
        "command": "inpaint",
        "float_format": FLOAT_FORMAT,
        "image": a.image,
        "mask": a.mask,
        "output": a.output,
        "report": serde_json::to_value(&rep)?,
    });
    let text = to_json_string(&report)?;
    match &a.report {
        Some(path) => write_text(path, &text)?,
        None => println!("{text}"),
    }
    Ok(true)
}

pub fn verify(a: VerifyArgs) -> Result<bool> {
    let cases = if a.cases.is_empty() {
        BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        for c in &a.cases {
            case(c)?;
        }
        a.cases
    };
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
    }
    let cfg = VerifyConfig {
        cases,
        grid: a.grid as usize,
        step: a.step,
        max_steps: a.max_steps,
        traces: a.traces as usize,
        jacobian_samples: a.samples as usize,
        seed: a.seed,
        beta: a.beta,
    };
    let rep = run_verify(&cfg)?;
    for c in &rep.checks {
        eprintln!(
            "{} {:<16} {:<24} {:.6e} <= {:.6e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.case,
            c.value,
            c.bound
        );
    }
    let report = json!({
        "command": "verify",
        "float_format": FLOAT_FORMAT,
        "slack_factor": cfg.slack_factor(),
        "report": serde_json::to_value(&rep)?,
    });
    emit(a.out.as_deref(), &report)?;
    Ok(rep.passed)
}

pub fn converge(a: ConvergeArgs) -> Result<bool> {
    if a.steps.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
        bail!(Error::InvalidArgument("--steps: every step must lie in (0, 1]".into()));
    }
    if a.grids.iter().any(|&n| !(8..=4096).contains(&n)) {
        bail!(Error::InvalidArgument("--grids: every grid must lie in 8..=4096".into()));
    }
    case(&a.tv_case)?;
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
    }
    let cfg = ConvergeConfig {
        steps: a.steps,
        grids: a.grids,
        tv_case: a.tv_case,
        ..ConvergeConfig::default()
    };
    let rep = run_converge(&cfg)?;
    let mut report = json!({
        "command": "converge",
        "float_format": FLOAT_FORMAT,
        "report": serde_json::to_value(&rep)?,
    });
    match &a.out {
        Some(dir) => {
            report["steps_csv"] = serde_json::to_value(&write_table(dir, "steps.csv", &rep.step_table())?)?;
            report["grids_csv"] = serde_json::to_value(&write_table(dir, "grids.csv", &rep.grid_table())?)?;
        }
        None => {
            print!("{}", rep.step_table().render());
            print!("{}", rep.grid_table().render());
        }
    }
    emit(a.out.as_deref(), &report)?;
    Ok(rep.passed)
}

pub fn stability(a: StabilityArgs) -> Result<bool> {
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
    }
    let cfg = StabilityConfig {
        grid: a.grid as usize,
        step: a.step,
        theta0: a.theta0,
        levels: a.levels as usize,
    };
    let rep = run_stability(&cfg)?;
    let mut report = json!({
        "command": "stability",
        "float_format": FLOAT_FORMAT,
        "report": serde_json::to_value(&rep)?,
    });
    match &a.out {
        Some(dir) => report["csv"] = serde_json::to_value(&write_table(dir, "stability.csv", &rep.to_table())?)?,
        None => print!("{}", rep.to_table().render()),
    }
    emit(a.out.as_deref(), &report)?;
    Ok(rep.passed)
}

pub fn nonunique(a: NonuniqueArgs) -> Result<bool> {
    if a.seeds.is_empty() || a.seeds.iter().any(|s| !s.is_finite()) {
        bail!(Error::InvalidArgument("--seeds: expected a comma-separated list of numbers".into()));
    }
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
    }
    let opts = IterOptions {
        tol: a.tol,
        max_iter: a.max_iter as usize,
        damping: a.damping,
        grid: GridOptions::with_step(a.step),
    };
    let rep = nonuniqueness_demo(a.grid as usize, &a.seeds, &opts)?;
    let mut report = json!({
        "command": "nonunique",
        "float_format": FLOAT_FORMAT,
        "report": serde_json::to_value(&rep)?,
    });
    match &a.out {
        Some(dir) => {
            report["csv"] = serde_json::to_value(&write_table(dir, "limits.csv", &rep.to_table())?)?;
            let logs = rep
                .logs
                .iter()
                .enumerate()
                .map(|(k, log)| write_table(dir, &format!("iterations_{k}.csv"), &log.to_table()))
                .collect::<Result<Vec<_>>>()?;
            report["iteration_logs"] = serde_json::to_value(&logs)?;
        }
        None => print!("{}", rep.to_table().render()),
    }
    emit(a.out.as_deref(), &report)?;
    Ok(rep.certified && rep.rows.iter().all(|r| r.converged))
}
