//! Transport-based inpainting: the masked pixels are Ω, the one-pixel ring
//! around the mask carries u₀, and each channel is solved on its own.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::grid::{CellKind, GridFunction};
use crate::linear_solver::{solve_on_spec, BoundaryData, LinearProblem, Rhs};
use crate::pnm::{PnmImage, PnmKind};
use crate::quasilinear::{build_inpainting_coefficients, solve_quasilinear, IterOptions};
use crate::timefield::{
    causality_minimum, estimate_m0, field_from_distance_grid, sample_region, MaskClass, MaskRaster, NormalField,
    TransportField,
};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InpaintConfig {
    /// Weight of the isophote direction; 0 gives the linear distance transport.
    pub blend: f64,
    /// Mollification length in pixels.
    pub smoothing: f64,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub step: f64,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            blend: 0.0,
            smoothing: 2.0,
            beta: 0.5,
            tol: 1e-6,
            max_iter: 20,
            damping: 1.0,
            step: crate::characteristics::DEFAULT_STEP,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelReport {
    pub channel: usize,
    pub iterations: usize,
    pub l1_residuals: Vec<f64>,
    pub converged: bool,
    pub tube_cells: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct InpaintReport {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub mask_pixels: usize,
    pub ring_pixels: usize,
    pub sigma_pixels: usize,
    pub max_distance: f64,
    pub beta: f64,
    pub beta_est: f64,
    pub m0: f64,
    pub config: InpaintConfig,
    pub per_channel: Vec<ChannelReport>,
}

/// Reads the mask: nonzero gray = pixel to fill.
pub fn mask_from_image(image: &PnmImage, mask: &PnmImage) -> Result<MaskRaster> {
    if mask.kind == PnmKind::P6 {
        return Err(Error::MaskMismatch("mask must be a graymap".into()));
    }
    if (mask.width, mask.height) != (image.width, image.height) {
        return Err(Error::MaskMismatch(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width, mask.height, image.width, image.height
        )));
    }
    let top_first: Vec<bool> = mask.samples.iter().map(|&s| s != 0).collect();
    Ok(MaskRaster::from_image_rows(mask.width, mask.height, &top_first))
}

/// Fills the masked pixels of every channel; pixels outside the mask are
/// copied unchanged.
pub fn inpaint(image: &PnmImage, mask: &PnmImage, cfg: &InpaintConfig) -> Result<(PnmImage, InpaintReport)> {
    let raster = mask_from_image(image, mask)?;
    let df = field_from_distance_grid(&raster, 1.0)?;
    let region = df.region.clone();
    let spec = region.spec;
    let (w, h) = (image.width, image.height);

    let samples: Vec<_> = sample_region(region.as_ref(), &df.time, w.max(h), 1e-8)
        .into_iter()
        .filter(|&x| df.time.normal(x).is_some())
        .collect();
    let m0 = estimate_m0(&df.time, &samples)?;
    let tf = df.time.clone().with_m0(m0);
    let normal = TransportField::from_field(
        NormalField {
            time: df.grid_time.clone(),
            angle: 0.0,
        },
        cfg.beta,
    );
    let (beta_est, at) = causality_minimum(&tf, &normal, &samples)?;
    if beta_est < cfg.beta {
        return Err(Error::NotCausal { beta_est, at });
    }

    // Grid row iy holds image row h − 1 − iy.
    let pixel = |i: usize| {
        let (ix, iy) = spec.coords(i);
        (h - 1 - iy) * w + ix
    };
    let iter = IterOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        damping: cfg.damping,
        grid: crate::linear_solver::GridOptions::with_step(cfg.step),
    };
    let mut out = image.clone();
    let mut per_channel = Vec::with_capacity(image.channels());
    for ch in 0..image.channels() {
        let plane = image.plane(ch);
        let u0 = BoundaryData::indexed(region.ring().iter().map(|&i| plane[pixel(i)]).collect());
        let base = LinearProblem::new(region.clone() as Arc<dyn Region>, tf.clone(), normal.clone(), Rhs::zero(), u0);
        let linear = solve_on_spec(&base, spec, &iter.grid);
        let (u, report) = if cfg.blend > 0.0 {
            let known = GridFunction::new(spec, (0..spec.len()).map(|i| plane[pixel(i)]).collect(), vec![CellKind::Inside; spec.len()]);
            let fc = build_inpainting_coefficients(&tf, &known, cfg.smoothing, cfg.blend, cfg.beta)?;
            let (u, rep) = solve_quasilinear(&fc, &base, &linear, &iter)?;
            (u, Some(rep))
        } else {
            (linear, None)
        };
        let maxval = image.maxval as f64;
        for i in 0..spec.len() {
            if region.class[i] == MaskClass::Inside {
                let v = (u.values[i] * maxval).round().clamp(0.0, maxval);
                out.samples[pixel(i) * image.channels() + ch] = v as u16;
            }
        }
        per_channel.push(ChannelReport {
            channel: ch,
            iterations: report.as_ref().map_or(0, |r| r.n_iters),
            l1_residuals: report.as_ref().map_or_else(Vec::new, |r| r.l1_residuals.clone()),
            converged: report.as_ref().is_none_or(|r| r.converged),
            tube_cells: u.count(CellKind::SigmaTube),
        });
    }
    let report = InpaintReport {
        width: w,
        height: h,
        channels: image.channels(),
        mask_pixels: raster.count(),
        ring_pixels: region.ring().len(),
        sigma_pixels: df.sigma_cells.len(),
        max_distance: df.max_distance,
        beta: cfg.beta,
        beta_est,
        m0,
        config: *cfg,
        per_channel,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u16) -> PnmImage {
        PnmImage {
            kind: PnmKind::P5,
            width: w,
            height: h,
            maxval: 255,
            samples: (0..w * h).map(|i| f(i % w, i / w)).collect(),
        }
    }

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> PnmImage {
        gray(w, h, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy < r * r { 255 } else { 0 }
        })
    }

    #[test]
    fn constant_image_is_reproduced() {
        let img = gray(24, 20, |_, _| 137);
        let (out, rep) = inpaint(&img, &disk(24, 20, 12.0, 10.0, 6.0), &InpaintConfig::default()).unwrap();
        assert_eq!(out, img);
        assert!(rep.mask_pixels > 0 && rep.beta_est >= 0.5);
    }

    #[test]
    fn vertical_step_closes_on_its_column() {
        let img = gray(32, 32, |x, _| if x < 16 { 0 } else { 255 });
        let mask = disk(32, 32, 16.0, 16.0, 8.0);
        let (out, _) = inpaint(&img, &mask, &InpaintConfig::default()).unwrap();
        for y in 0..32 {
            let first_white = (0..32).find(|&x| out.samples[y * 32 + x] > 127).unwrap();
            assert!((first_white as i64 - 16).abs() <= 2, "row {y}: {first_white}");
        }
    }

    #[test]
    fn mask_errors() {
        let img = gray(10, 10, |_, _| 0);
        let big = gray(12, 10, |_, _| 0);
        assert!(matches!(inpaint(&img, &big, &InpaintConfig::default()), Err(Error::MaskMismatch(_))));
        assert!(matches!(inpaint(&img, &gray(10, 10, |_, _| 0), &InpaintConfig::default()), Err(Error::EmptyMask)));
    }

    #[test]
    fn stripes_continue_across_a_vertical_gap() {
        let (w, h) = (40, 40);
        let img = gray(w, h, |_, y| if (y / 5) % 2 == 0 { 0 } else { 255 });
        let mask = gray(w, h, |x, y| if (16..24).contains(&x) && (6..34).contains(&y) { 255 } else { 0 });
        let cfg = InpaintConfig {
            blend: 0.5,
            step: 1e-2,
            ..InpaintConfig::default()
        };
        let (out, rep) = inpaint(&img, &mask, &cfg).unwrap();
        assert!(rep.per_channel[0].iterations >= 1);
        // Every filled row keeps the colour of its stripe, up to one row at a stripe edge.
        for y in 6..34 {
            for x in 16..24 {
                let v = out.samples[y * w + x];
                let same = |yy: usize| img.samples[yy * w + x] == v;
                assert!(same(y) || same(y - 1) || same(y + 1), "({x}, {y}) = {v}");
            }
        }
    }
}
