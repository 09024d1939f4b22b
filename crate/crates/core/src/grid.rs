//! Rasters over a region's bounding box: cell layout, cell classes and the
//! solution container [`GridFunction`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::Point;

/// Uniform cell-centred raster. Cell `(ix, iy)` has its centre at
/// `origin + ((ix + 1/2) h, (iy + 1/2) h)`; storage is row-major in `iy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, origin: Point, spacing: f64) -> Self {
        GridSpec {
            nx,
            ny,
            origin: [origin.x, origin.y],
            spacing,
        }
    }

    /// Square cells covering `bbox`, with `resolution` cells along its longer side.
    pub fn covering(bbox: &BBox, resolution: usize) -> Self {
        let (w, h) = (bbox.width(), bbox.height());
        let spacing = w.max(h) / resolution as f64;
        let nx = ((w / spacing).round() as usize).max(1);
        let ny = ((h / spacing).round() as usize).max(1);
        GridSpec {
            nx,
            ny,
            origin: bbox.min,
            spacing,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin[0] + (ix as f64 + 0.5) * self.spacing,
            self.origin[1] + (iy as f64 + 0.5) * self.spacing,
        )
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Point {
        let (ix, iy) = self.coords(idx);
        self.center(ix, iy)
    }

    /// Continuous cell coordinates: integer values at cell centres.
    #[inline]
    pub fn locate(&self, x: Point) -> (f64, f64) {
        (
            (x.x - self.origin[0]) / self.spacing - 0.5,
            (x.y - self.origin[1]) / self.spacing - 0.5,
        )
    }

    /// Cell containing `x`, if any.
    pub fn cell_of(&self, x: Point) -> Option<(usize, usize)> {
        let fx = ((x.x - self.origin[0]) / self.spacing).floor();
        let fy = ((x.y - self.origin[1]) / self.spacing).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            None
        } else {
            Some((fx as usize, fy as usize))
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Bilinear interpolation of per-cell data, clamped at the raster edge.
    pub fn bilinear<T, F>(&self, x: Point, sample: F) -> T
    where
        T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
        F: Fn(usize) -> T,
    {
        let (fx, fy) = self.locate(x);
        let fx = fx.clamp(0.0, (self.nx - 1) as f64);
        let fy = fy.clamp(0.0, (self.ny - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.nx - 1), (y0 + 1).min(self.ny - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let a = sample(self.index(x0, y0)) * ((1.0 - tx) * (1.0 - ty));
        let b = sample(self.index(x1, y0)) * (tx * (1.0 - ty));
        let c = sample(self.index(x0, y1)) * ((1.0 - tx) * ty);
        let d = sample(self.index(x1, y1)) * (tx * ty);
        a + b + c + d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellKind {
    Outside = 0,
    Inside = 1,
    /// Cell on (or too close to) Σ, filled by one-sided extension.
    SigmaTube = 2,
}

impl CellKind {
    pub fn in_domain(self) -> bool {
        self != CellKind::Outside
    }
}

/// Solution samples over a raster with a per-cell class.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub mask: Vec<CellKind>,
}

/// JSON header written next to a flat binary raster.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RasterHeader {
    pub format: String,
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub spacing: f64,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub mask_encoding: MaskEncoding,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pgm: Option<PgmMapping>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskEncoding {
    pub file_suffix: String,
    pub outside: u8,
    pub inside: u8,
    pub sigma_tube: u8,
}

/// Affine map used for PGM export: `gray = round((v - lo) / (hi - lo) * 255)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PgmMapping {
    pub lo: f64,
    pub hi: f64,
    pub maxval: u16,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>, mask: Vec<CellKind>) -> Self {
        assert_eq!(values.len(), spec.len());
        assert_eq!(mask.len(), spec.len());
        GridFunction { spec, values, mask }
    }

    pub fn filled(spec: GridSpec, mask: Vec<CellKind>, value: f64) -> Self {
        let values = mask
            .iter()
            .map(|k| if k.in_domain() { value } else { 0.0 })
            .collect();
        Self::new(spec, values, mask)
    }

    /// Same raster and mask with values given by `f(cell centre)` on domain cells.
    pub fn from_fn(&self, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..self.spec.len())
            .map(|i| {
                if self.mask[i].in_domain() {
                    f(self.spec.center_of(i))
                } else {
                    0.0
                }
            })
            .collect();
        GridFunction::new(self.spec, values, self.mask.clone())
    }

    pub fn domain_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(|&i| self.mask[i].in_domain())
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.mask.iter().filter(|k| **k == kind).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.domain_cells()
            .map(|i| self.values[i].abs())
            .fold(0.0, f64::max)
    }

    /// Midpoint quadrature of `v` over domain cells.
    pub fn integral(&self) -> f64 {
        self.domain_cells().map(|i| self.values[i]).sum::<f64>() * self.spec.cell_area()
    }

    pub fn l1_norm(&self) -> f64 {
        self.domain_cells().map(|i| self.values[i].abs()).sum::<f64>() * self.spec.cell_area()
    }

    /// Midpoint-quadrature L¹ distance over cells that are in the domain of both.
    pub fn l1_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.spec, other.spec);
        (0..self.values.len())
            .filter(|&i| self.mask[i].in_domain() && other.mask[i].in_domain())
            .map(|i| (self.values[i] - other.values[i]).abs())
            .sum::<f64>()
            * self.spec.cell_area()
    }

    pub fn max_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.spec, other.spec);
        (0..self.values.len())
            .filter(|&i| self.mask[i].in_domain() && other.mask[i].in_domain())
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(v, k)| if k.in_domain() { f(*v) } else { *v })
            .collect();
        GridFunction::new(self.spec, values, self.mask.clone())
    }

    /// Cellwise `a·self + b·other`; the mask is taken from `self`.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Self {
        assert_eq!(self.spec, other.spec);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GridFunction::new(self.spec, values, self.mask.clone())
    }

    pub fn header(&self, pgm: Option<PgmMapping>) -> RasterHeader {
        RasterHeader {
            format: "charflow-raster-v1".into(),
            nx: self.spec.nx,
            ny: self.spec.ny,
            origin: self.spec.origin,
            spacing: self.spec.spacing,
            dtype: "f64".into(),
            byte_order: "little".into(),
            layout: "row-major, iy outer, iy = 0 at origin".into(),
            mask_encoding: MaskEncoding {
                file_suffix: ".mask".into(),
                outside: CellKind::Outside as u8,
                inside: CellKind::Inside as u8,
                sigma_tube: CellKind::SigmaTube as u8,
            },
            pgm,
        }
    }

    /// Writes `<stem>.bin` (values), `<stem>.mask` (one byte per cell),
    /// `<stem>.json` (header) and `<stem>.pgm` (8-bit preview).
    pub fn write_raster(&self, stem: &Path) -> Result<RasterHeader> {
        let with_ext = |ext: &str| stem.with_extension(ext);
        let mut w = BufWriter::new(File::create(with_ext("bin"))?);
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let mask: Vec<u8> = self.mask.iter().map(|k| *k as u8).collect();
        std::fs::write(with_ext("mask"), mask)?;

        let mapping = self.pgm_mapping();
        let gray = self.to_gray(&mapping);
        crate::pnm::write_pgm(&with_ext("pgm"), self.spec.nx, self.spec.ny, &gray, true)?;

        let header = self.header(Some(mapping));
        let json = crate::report::to_json_string(&header)?;
        std::fs::write(with_ext("json"), json)?;
        Ok(header)
    }

    pub fn read_raster(stem: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(stem.with_extension("json"))?;
        let header: RasterHeader = serde_json::from_str(&json)?;
        let spec = GridSpec {
            nx: header.nx,
            ny: header.ny,
            origin: header.origin,
            spacing: header.spacing,
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(stem.with_extension("bin"))?).read_to_end(&mut bytes)?;
        if bytes.len() != spec.len() * 8 {
            return Err(Error::InvalidArgument(format!(
                "raster has {} bytes, expected {}",
                bytes.len(),
                spec.len() * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mask = std::fs::read(stem.with_extension("mask"))?
            .into_iter()
            .map(|b| match b {
                0 => Ok(CellKind::Outside),
                1 => Ok(CellKind::Inside),
                2 => Ok(CellKind::SigmaTube),
                other => Err(Error::InvalidArgument(format!("bad mask byte {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if mask.len() != spec.len() {
            return Err(Error::InvalidArgument("mask length mismatch".into()));
        }
        Ok(GridFunction::new(spec, values, mask))
    }

    /// Value range over domain cells, widened to a non-empty interval.
    pub fn pgm_mapping(&self) -> PgmMapping {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in self.domain_cells() {
            lo = lo.min(self.values[i]);
            hi = hi.max(self.values[i]);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        PgmMapping { lo, hi, maxval: 255 }
    }

    /// Gray levels in image row order (top row = largest `iy`); outside cells are 0.
    pub fn to_gray(&self, m: &PgmMapping) -> Vec<u16> {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut out = vec![0u16; nx * ny];
        for row in 0..ny {
            let iy = ny - 1 - row;
            for ix in 0..nx {
                let i = self.spec.index(ix, iy);
                if self.mask[i].in_domain() {
                    let t = ((self.values[i] - m.lo) / (m.hi - m.lo)).clamp(0.0, 1.0);
                    out[row * nx + ix] = (t * m.maxval as f64).round() as u16;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_unit_disk_bbox() {
        let b = BBox::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0));
        let g = GridSpec::covering(&b, 128);
        assert_eq!((g.nx, g.ny), (128, 128));
        assert_eq!(g.spacing, 2.0 / 128.0);
        assert_eq!(g.center(0, 0), Point::new(-1.0 + 1.0 / 128.0, -1.0 + 1.0 / 128.0));
        assert_eq!(g.cell_of(Point::new(0.0, 0.0)), Some((64, 64)));
        assert_eq!(g.cell_of(Point::new(1.5, 0.0)), None);
    }

    #[test]
    fn covering_rectangle() {
        let b = BBox::new(Point::new(-1.0, -0.5), Point::new(1.0, 0.5));
        let g = GridSpec::covering(&b, 64);
        assert_eq!((g.nx, g.ny), (64, 32));
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let g = GridSpec::new(8, 6, Point::zeros(), 0.5);
        let f = |p: Point| 2.0 * p.x - 3.0 * p.y + 1.0;
        let x = Point::new(1.3, 1.7);
        let v = g.bilinear(x, |i| f(g.center_of(i)));
        assert!((v - f(x)).abs() < 1e-12);
    }

    #[test]
    fn raster_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(3, 2, Point::new(-1.0, 0.0), 0.25);
        let mask = vec![
            CellKind::Outside,
            CellKind::Inside,
            CellKind::Inside,
            CellKind::SigmaTube,
            CellKind::Inside,
            CellKind::Outside,
        ];
        let g = GridFunction::new(spec, vec![0.0, 0.1, -2.5, 1.0 / 3.0, 7.0, 0.0], mask);
        let stem = dir.path().join("out");
        g.write_raster(&stem).unwrap();
        let back = GridFunction::read_raster(&stem).unwrap();
        assert_eq!(back, g);
    }
}
